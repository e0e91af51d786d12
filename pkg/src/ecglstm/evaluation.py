"""Record-level prediction by majority vote, F1 metrics and the text report.

Report layout (UTF-8, one section header per block)::

    [metrics]
    f1.<class>=<float>            one line per class, class order of ClassLabel
    f1_simple_mean=<float>
    f1_weighted_mean=<float>
    evaluated=<int>
    failed=<int>
    [confusion]
    true\\pred,<class>,...        raw counts, rows = true class
    [confusion_normalized]
    true\\pred,<class>,...        row fractions (all-zero rows stay zero)
    [records]
    record_id,true,predicted,children,fallback,votes
    [failed]
    record_id,error

Floats are written with six decimals. ``votes`` holds the nine per-class
child counts joined by ``;``. Multi-label records are scored on their first
label.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import net, pipeline
from .config import PipelineConfig
from .core import CLASS_NAMES, N_CLASSES, ClassLabel, DatasetIndex, EcgRecording, load_recording

log = logging.getLogger(__name__)

REPORT_SECTIONS = ("metrics", "confusion", "confusion_normalized", "records", "failed")


# ----------------------------------------------------------------------- voting

def vote(probs: np.ndarray) -> tuple[ClassLabel, np.ndarray, np.ndarray]:
    """Modal argmax label of the children.

    Ties go to the class with the larger summed probability over all
    children, then to the lower ordinal. Returns ``(label, counts, sums)``.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    if probs.shape[0] == 0:
        raise ValueError("no children to vote over")
    counts = np.bincount(np.argmax(probs, axis=1), minlength=probs.shape[1])
    sums = probs.sum(axis=0)
    tied = np.flatnonzero(counts == counts.max())
    best = tied[np.argmax(sums[tied])]  # argmax keeps the first, i.e. lowest ordinal
    return ClassLabel(int(best)), counts, sums


@dataclass(frozen=True)
class RecordPrediction:
    record_id: str
    label: ClassLabel
    votes: tuple[int, ...]
    prob_sums: tuple[float, ...]
    children: int
    fallback: bool = False


def predict_record(state: net.ModelState, rec: EcgRecording,
                   cfg: PipelineConfig = PipelineConfig()) -> RecordPrediction:
    children = pipeline.validation_children(rec, cfg)
    if children:
        probs = net.predict_proba(state, [s.samples for s in children])
        fallback = False
    else:
        log.warning("%s: no child segments, classifying the whole recording", rec.record_id)
        probs = net.predict_proba(state, [pipeline.fallback_segment(rec, cfg)])
        fallback = True
    label, counts, sums = vote(probs)
    return RecordPrediction(rec.record_id, label, tuple(int(c) for c in counts),
                            tuple(float(s) for s in sums), len(children), fallback)


# ---------------------------------------------------------------------- metrics

def confusion_matrix(true: Sequence[int], predicted: Sequence[int], n: int = N_CLASSES) -> np.ndarray:
    cm = np.zeros((n, n), dtype=np.int64)
    np.add.at(cm, (np.asarray(true, dtype=int), np.asarray(predicted, dtype=int)), 1)
    return cm


def f1_per_class(cm: np.ndarray) -> np.ndarray:
    """``F1_i = 2 N_ii / (row_i + col_i)``; zero denominator gives 0."""
    cm = np.asarray(cm, dtype=float)
    denom = cm.sum(axis=1) + cm.sum(axis=0)
    diag = np.diag(cm)
    out = np.zeros(cm.shape[0])
    nz = denom > 0
    out[nz] = 2.0 * diag[nz] / denom[nz]
    return out


def f1_simple_mean(f1s) -> float:
    return float(np.mean(np.asarray(f1s, dtype=float)))


def f1_weighted_mean(f1s, class_counts) -> float:
    counts = np.asarray(class_counts, dtype=float)
    if counts.sum() <= 0:
        raise ValueError("class counts sum to zero")
    return float(np.dot(counts / counts.sum(), np.asarray(f1s, dtype=float)))


def row_normalize(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row fractions and a boolean mask of all-zero rows (left as zeros)."""
    cm = np.asarray(cm, dtype=float)
    rows = cm.sum(axis=1)
    empty = rows == 0
    out = np.zeros_like(cm)
    out[~empty] = cm[~empty] / rows[~empty, None]
    return out, empty


# ----------------------------------------------------------------------- report

@dataclass
class EvalReport:
    confusion: np.ndarray
    records: list[tuple[str, ClassLabel, RecordPrediction]] = field(default_factory=list)
    failed: list[tuple[str, str]] = field(default_factory=list)

    @property
    def f1(self) -> np.ndarray:
        return f1_per_class(self.confusion)

    @property
    def simple_mean(self) -> float:
        return f1_simple_mean(self.f1)

    @property
    def weighted_mean(self) -> float:
        return f1_weighted_mean(self.f1, self.confusion.sum(axis=1))

    def to_text(self) -> str:
        lines = ["[metrics]"]
        for name, v in zip(CLASS_NAMES, self.f1):
            lines.append(f"f1.{name}={v:.6f}")
        lines.append(f"f1_simple_mean={self.simple_mean:.6f}")
        lines.append(f"f1_weighted_mean={self.weighted_mean:.6f}")
        lines.append(f"evaluated={int(self.confusion.sum())}")
        lines.append(f"failed={len(self.failed)}")
        header = "true\\pred," + ",".join(CLASS_NAMES)
        lines += ["[confusion]", header]
        for name, row in zip(CLASS_NAMES, self.confusion):
            lines.append(name + "," + ",".join(str(int(v)) for v in row))
        frac, _ = row_normalize(self.confusion)
        lines += ["[confusion_normalized]", header]
        for name, row in zip(CLASS_NAMES, frac):
            lines.append(name + "," + ",".join(f"{v:.6f}" for v in row))
        lines += ["[records]", "record_id,true,predicted,children,fallback,votes"]
        for rid, true, pred in self.records:
            lines.append(f"{rid},{true.code},{pred.label.code},{pred.children},"
                         f"{int(pred.fallback)},{';'.join(str(v) for v in pred.votes)}")
        lines += ["[failed]", "record_id,error"]
        for rid, err in self.failed:
            lines.append(f"{rid},{err.replace(',', ';').replace(chr(10), ' ')}")
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_text(), encoding="utf-8")
        return path


def parse_report(text: str) -> dict[str, list[str]]:
    """Split a report into its sections (lines without the header)."""
    out: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            out[current] = []
        elif current is not None and line:
            out[current].append(line)
    return out


def report_metrics(text: str) -> dict[str, float]:
    return {k: float(v) for k, v in (l.split("=", 1) for l in parse_report(text)["metrics"])}


def evaluate(state: net.ModelState, validation: DatasetIndex,
             cfg: PipelineConfig = PipelineConfig(), threads: int = 0) -> EvalReport:
    """Majority-vote prediction over every record of *validation*.

    Records that fail to load or process are listed and left out of the matrix.
    """
    if len(validation) == 0:
        raise ValueError("empty validation set")

    def one(entry):
        try:
            rec = load_recording(entry.path)
            return entry, predict_record(state, rec, cfg), None
        except Exception as exc:  # reported per record, never fatal
            log.warning("%s: %s", entry.record_id, exc)
            return entry, None, f"{type(exc).__name__}: {exc}"

    report = EvalReport(np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64))
    for entry, pred, err in pipeline.map_ordered(one, validation.entries, threads):
        if pred is None:
            report.failed.append((entry.record_id, err))
            continue
        true = entry.labels.primary
        report.confusion[int(true), int(pred.label)] += 1
        report.records.append((entry.record_id, true, pred))
    return report
