"""Four-beat child segments and their labels.

The first and last two detected peaks of a recording are dropped; every run
of four consecutive retained peaks becomes a segment (stride one beat), so
``N`` detected peaks give ``max(0, N - 7)`` segments.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dsp
from .core import (INHERIT_CLASSES, PREMATURE_CLASSES, ClassLabel, EcgRecording,
                   Segment, read_ecgb, write_recording)

EDGE_PEAKS = 2
BEATS_PER_SEGMENT = 4


@dataclass(frozen=True)
class BeatAnnotation:
    peak: int
    rr_before: float | None
    rr_after: float | None
    premature: bool = False


@dataclass(frozen=True)
class LabelConfig:
    premature_factor: float = 0.85
    rr_history: int = 8
    af_irregularity: float = 0.10


def segment_bounds(peaks: Sequence[int], n_samples: int) -> list[tuple[int, int, int]]:
    """``(start, stop, first_peak_position)`` per window; *first_peak_position*
    indexes into *peaks*."""
    peaks = np.asarray(peaks, dtype=np.int64)
    kept = peaks[EDGE_PEAKS:len(peaks) - EDGE_PEAKS] if len(peaks) > 2 * EDGE_PEAKS else peaks[:0]
    out = []
    for i in range(len(kept) - BEATS_PER_SEGMENT + 1):
        first, last = kept[i], kept[i + BEATS_PER_SEGMENT - 1]
        if i > 0:
            start = (kept[i - 1] + first) // 2
        else:
            start = first - (kept[i + 1] - first) // 2
        j = i + BEATS_PER_SEGMENT
        if j < len(kept):
            stop = (last + kept[j]) // 2 + 1
        else:
            stop = last + (last - kept[j - 2]) // 2 + 1
        out.append((max(0, int(start)), min(n_samples, int(stop)), i + EDGE_PEAKS))
    return out


def extract_segments(rec: EcgRecording, peaks: Sequence[int],
                     label: ClassLabel = ClassLabel.Normal,
                     preprocessed: bool = False) -> list[Segment]:
    """Cut *rec* into four-beat windows around *peaks* (sample indices, sorted)."""
    peaks = np.asarray(peaks, dtype=np.int64)
    if peaks.size and (np.any(np.diff(peaks) <= 0) or peaks[0] < 0 or peaks[-1] >= rec.sample_count):
        raise ValueError("peaks must be strictly increasing and inside the recording")
    segs = []
    for start, stop, k in segment_bounds(peaks, rec.sample_count):
        window = peaks[k:k + BEATS_PER_SEGMENT] - start
        segs.append(Segment(rec.record_id, rec.samples[:, start:stop], rec.sampling_rate,
                            tuple(window), label, preprocessed))
    return segs


def annotate_beats(peaks: Sequence[int], rate: float,
                   premature_factor: float = 0.85, history: int = 8) -> list[BeatAnnotation]:
    """RR context per peak; a beat is premature when its preceding RR is below
    *premature_factor* times the median of the previous *history* RRs."""
    peaks = np.asarray(peaks, dtype=np.int64)
    if peaks.size < 3:
        raise ValueError("need at least 3 peaks to annotate beats")
    rr = np.diff(peaks) / rate  # rr[i-1] precedes beat i
    global_median = float(np.median(rr))
    out = []
    for i, p in enumerate(peaks):
        before = float(rr[i - 1]) if i > 0 else None
        after = float(rr[i]) if i < rr.size else None
        flag = False
        if before is not None:
            prev = rr[max(0, i - 1 - history):i - 1]
            ref = float(np.median(prev)) if prev.size else global_median
            flag = before < premature_factor * ref
        out.append(BeatAnnotation(int(p), before, after, bool(flag)))
    return out


def rr_irregularity(rr: Sequence[float]) -> float:
    rr = np.asarray(rr, dtype=float)
    return float(np.mean(np.abs(np.diff(rr))) / np.mean(rr))


def label_segments(segments: Sequence[Segment], annotations: Sequence[BeatAnnotation],
                   parent_label: ClassLabel, config: LabelConfig = LabelConfig()) -> list[Segment]:
    """Assign child labels.

    *annotations* covers either the retained peaks (``len(segments) + 3``
    entries, window ``i`` spans ``i .. i + 3``) or every detected peak
    (``len(segments) + 7``, the two edge peaks on each side included).
    """
    parent_label = ClassLabel(parent_label)
    if not segments:
        return []
    n = len(segments)
    if len(annotations) == n + 2 * EDGE_PEAKS + BEATS_PER_SEGMENT - 1:
        annotations = annotations[EDGE_PEAKS:len(annotations) - EDGE_PEAKS]
    elif len(annotations) != n + BEATS_PER_SEGMENT - 1:
        raise ValueError(f"{n} segments do not match {len(annotations)} beat annotations")
    out = []
    for i, seg in enumerate(segments):
        beats = annotations[i:i + BEATS_PER_SEGMENT]
        if parent_label in INHERIT_CLASSES:
            label = parent_label
        elif parent_label in PREMATURE_CLASSES:
            label = parent_label if any(b.premature for b in beats) else ClassLabel.Normal
        else:  # AF
            # three in-window intervals plus one of context on each side
            rr = [b.rr_before for b in beats] + [beats[-1].rr_after]
            if any(r is None for r in rr):
                raise ValueError("AF labeling needs RR context around every window")
            irregular = rr_irregularity(rr) > config.af_irregularity
            label = ClassLabel.AF if irregular else ClassLabel.Normal
        out.append(replace(seg, label=label))
    return out


def downsample_segment(seg: Segment, up: int = 7, down: int = 50) -> Segment:
    """Resample a segment (500 Hz -> 70 Hz by default), rescaling its peak indices."""
    samples = dsp.resample_rational(seg.samples, up, down, seg.sampling_rate)
    n = samples.shape[-1]
    peaks = [min(n - 1, int(round(p * up / down))) for p in seg.peak_indices]
    return replace(seg, samples=samples, sampling_rate=seg.sampling_rate * up / down,
                   peak_indices=tuple(peaks))


# ------------------------------------------------------------------ segment store

MANIFEST_FIELDS = ("segment_id", "parent_id", "label", "preprocessed",
                   "peak0", "peak1", "peak2", "peak3")


def segment_ids(segments: Sequence[Segment]) -> list[str]:
    counters: dict[tuple[str, bool], int] = {}
    ids = []
    for s in segments:
        key = (s.parent_id, s.preprocessed)
        k = counters.get(key, 0)
        counters[key] = k + 1
        ids.append(f"{s.parent_id}_{'p' if s.preprocessed else 'r'}{k:03d}")
    return ids


def write_segment_store(segments: Sequence[Segment], out_dir: str | Path) -> Path:
    """One ECGB file per segment plus ``manifest.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for sid, seg in zip(segment_ids(segments), segments):
            write_recording(EcgRecording(sid, seg.sampling_rate, seg.samples), out_dir / f"{sid}.ecgb")
            w.writerow([sid, seg.parent_id, seg.label.code, int(seg.preprocessed), *seg.peak_indices])
    return manifest


def read_segment_store(store: str | Path) -> list[Segment]:
    store = Path(store)
    out = []
    with open(store / "manifest.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rec = read_ecgb(store / f"{row['segment_id']}.ecgb")
            out.append(Segment(row["parent_id"], rec.samples, rec.sampling_rate,
                               tuple(int(row[f"peak{i}"]) for i in range(4)),
                               ClassLabel.parse(row["label"]), row["preprocessed"] == "1"))
    return out
