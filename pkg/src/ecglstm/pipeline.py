"""Per-record glue: preprocessing, peak detection and child segments.

Training children come in pairs (preprocessed and raw, same peaks); the
labels are assigned once from the parent label and the RR annotations and
copied to the raw twin. Validation children are raw only. Peaks are always
detected on a high-passed copy of the detection lead; that copy is never
fed to the model.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import dsp, segmenter, train
from .config import PipelineConfig
from .core import ClassLabel, DatasetIndex, EcgRecording, Segment, load_recording
from .qrs import PeakList, detect_r_peaks, fuse_lead_choice


def preprocess_recording(rec: EcgRecording, cfg: PipelineConfig = PipelineConfig()) -> EcgRecording:
    """High-pass (zero phase) then wavelet-denoise every lead."""
    d = cfg.dsp
    x = dsp.highpass(rec.samples, rec.sampling_rate, d.highpass_cutoff, d.highpass_order)
    x = dsp.wavelet_denoise(x, d.denoise_wavelet, d.denoise_levels)
    return rec.with_samples(x)


def detect_peaks(rec: EcgRecording, cfg: PipelineConfig = PipelineConfig()) -> PeakList:
    lead, x = fuse_lead_choice(rec, cfg.detect.preferred_lead, cfg.detect.min_peak_to_peak)
    x = dsp.highpass(x, rec.sampling_rate, cfg.dsp.highpass_cutoff, cfg.dsp.highpass_order)
    return detect_r_peaks(x, rec.sampling_rate, cfg.qrs, rec.record_id, lead)


def _downsample(segs: list[Segment], cfg: PipelineConfig) -> list[Segment]:
    return [segmenter.downsample_segment(s, cfg.dsp.resample_up, cfg.dsp.resample_down) for s in segs]


@dataclass(frozen=True, eq=False)
class TrainingChildren:
    peaks: PeakList
    preprocessed: list[Segment]
    raw: list[Segment]


def training_children(rec: EcgRecording, label: ClassLabel,
                      cfg: PipelineConfig = PipelineConfig(),
                      peaks: PeakList | None = None) -> TrainingChildren:
    """Labeled, downsampled child pairs for one training record."""
    peaks = peaks if peaks is not None else detect_peaks(rec, cfg)
    idx = peaks.indices
    pre = segmenter.extract_segments(preprocess_recording(rec, cfg), idx, label, preprocessed=True)
    raw = segmenter.extract_segments(rec, idx, label, preprocessed=False)
    if pre:
        notes = segmenter.annotate_beats(idx, rec.sampling_rate, cfg.label.premature_factor,
                                         cfg.label.rr_history)
        pre = segmenter.label_segments(pre, notes, label, cfg.label)
        raw = [replace(r, label=p.label) for p, r in zip(pre, raw)]
    return TrainingChildren(peaks, _downsample(pre, cfg), _downsample(raw, cfg))


def validation_children(rec: EcgRecording, cfg: PipelineConfig = PipelineConfig(),
                        peaks: PeakList | None = None) -> list[Segment]:
    """Raw, downsampled children; labels are placeholders."""
    peaks = peaks if peaks is not None else detect_peaks(rec, cfg)
    return _downsample(segmenter.extract_segments(rec, peaks.indices), cfg)


def fallback_segment(rec: EcgRecording, cfg: PipelineConfig = PipelineConfig()) -> np.ndarray:
    """The whole recording (capped in length), downsampled, as one model input."""
    n = min(rec.sample_count, int(round(cfg.eval.fallback_max_seconds * rec.sampling_rate)))
    return dsp.resample_rational(rec.samples[:, :n], cfg.dsp.resample_up, cfg.dsp.resample_down)


def map_ordered(fn, items, threads: int = 0) -> list:
    """``[fn(x) for x in items]``; with ``threads > 0`` runs on a thread pool
    and still returns results in input order."""
    items = list(items)
    if threads <= 0 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def record_children(entries, cfg: PipelineConfig = PipelineConfig(), threads: int = 0) -> list[TrainingChildren]:
    """Training children for each :class:`~ecglstm.core.IndexEntry`, in order."""
    def one(entry):
        return training_children(load_recording(entry.path), entry.labels.primary, cfg)
    return map_ordered(one, entries, threads)


def training_sets(index: DatasetIndex, cfg: PipelineConfig = PipelineConfig(),
                  threads: int = 0, augment: bool = True) -> tuple[list[Segment], list[Segment]]:
    """``(training, validation)`` segments from a split index.

    Training holds preprocessed children (plus raw twins when *augment*);
    validation holds the raw children of validation records, labeled by the
    same rules, for the per-epoch accuracy.
    """
    train_kids = record_children(index.subset("train").entries, cfg, threads)
    val_kids = record_children(index.subset("validation").entries, cfg, threads)
    pre = [s for k in train_kids for s in k.preprocessed]
    raw = [s for k in train_kids for s in k.raw]
    data, _ = train.augment(pre, raw, augment)
    return data, [s for k in val_kids for s in k.raw]
