"""Domain types, the class vocabulary, dataset indexing and recording/label I/O.

Two recording formats are supported:

* ECGB, a little-endian binary container::

      magic   b"ECGB"
      u16     version (1)
      u16     reserved (0)
      u16     lead_count
      f32     sampling_rate
      u32     sample_count
      f32[]   lead-major samples (lead 0 all samples, then lead 1, ...)

* CSV, 12 numeric columns (I, II, III, aVR, aVL, aVF, V1-V6), one row per
  sample instant, optional header row. The sampling rate is not stored and
  must be supplied by the caller.
"""

from __future__ import annotations

import csv
import enum
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

LEAD_NAMES = ("I", "II", "III", "aVR", "aVL", "aVF",
              "V1", "V2", "V3", "V4", "V5", "V6")
N_LEADS = 12
DEFAULT_RATE = 500.0

ECGB_MAGIC = b"ECGB"
ECGB_VERSION = 1
_ECGB_HEADER = struct.Struct("<4sHHHfI")


class FormatError(ValueError):
    """File does not match the expected layout."""


class DataError(ValueError):
    """File parsed but carries unusable values (e.g. NaN samples)."""


class VocabularyError(ValueError):
    """Unknown class name."""


class IndexError_(ValueError):
    """Duplicate or inconsistent dataset index entries."""


class ClassLabel(enum.IntEnum):
    Normal = 0
    AF = 1
    I_AVB = 2
    LBBB = 3
    RBBB = 4
    PAC = 5
    PVC = 6
    STD = 7
    STE = 8

    @property
    def code(self) -> str:
        """Label as written in label files (``I-AVB`` rather than ``I_AVB``)."""
        return self.name.replace("_", "-")

    @classmethod
    def parse(cls, text: str) -> "ClassLabel":
        key = text.strip().replace("-", "_")
        try:
            return cls[key]
        except KeyError:
            raise VocabularyError(f"unknown class {text!r}") from None


CLASS_NAMES = tuple(c.code for c in ClassLabel)
N_CLASSES = len(ClassLabel)

# Classes whose children always inherit the parent label.
INHERIT_CLASSES = frozenset({ClassLabel.Normal, ClassLabel.I_AVB, ClassLabel.LBBB,
                             ClassLabel.RBBB, ClassLabel.STD, ClassLabel.STE})
PREMATURE_CLASSES = frozenset({ClassLabel.PAC, ClassLabel.PVC})


@dataclass(frozen=True, eq=False)
class EcgRecording:
    record_id: str
    sampling_rate: float
    samples: np.ndarray  # (lead_count, sample_count), millivolts

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[1] < 1:
            raise DataError(f"{self.record_id}: samples must be a non-empty "
                            f"leads x samples matrix, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise DataError(f"{self.record_id}: non-finite sample values")
        if not self.sampling_rate > 0:
            raise DataError(f"{self.record_id}: sampling rate must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def lead_count(self) -> int:
        return self.samples.shape[0]

    @property
    def sample_count(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.sample_count / self.sampling_rate

    def with_samples(self, samples: np.ndarray) -> "EcgRecording":
        return replace(self, samples=samples)


@dataclass(frozen=True)
class LabelSet:
    record_id: str
    labels: tuple[ClassLabel, ...]

    def __post_init__(self):
        labels = tuple(ClassLabel(l) for l in self.labels)
        if not 1 <= len(labels) <= 3:
            raise VocabularyError(f"{self.record_id}: expected 1-3 labels, got {len(labels)}")
        if len(set(labels)) != len(labels):
            raise VocabularyError(f"{self.record_id}: duplicate labels")
        object.__setattr__(self, "labels", labels)

    @property
    def primary(self) -> ClassLabel:
        return self.labels[0]


@dataclass(frozen=True, eq=False)
class Segment:
    """A child window of a recording holding exactly four R peaks."""

    parent_id: str
    samples: np.ndarray  # (12, n)
    sampling_rate: float
    peak_indices: tuple[int, int, int, int]
    label: ClassLabel
    preprocessed: bool

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        n = samples.shape[-1]
        peaks = tuple(int(p) for p in self.peak_indices)
        if n < 8:
            raise DataError(f"segment of {self.parent_id} too short ({n} samples)")
        if len(peaks) != 4 or any(b <= a for a, b in zip(peaks, peaks[1:])):
            raise DataError(f"segment of {self.parent_id}: need 4 increasing peaks, got {peaks}")
        if peaks[0] < 0 or peaks[-1] >= n:
            raise DataError(f"segment of {self.parent_id}: peaks {peaks} outside [0, {n})")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "peak_indices", peaks)
        object.__setattr__(self, "label", ClassLabel(self.label))

    @property
    def length(self) -> int:
        return self.samples.shape[-1]


@dataclass(frozen=True)
class IndexEntry:
    record_id: str
    labels: LabelSet
    split: str  # "train" | "validation" | ""
    path: Path


@dataclass(frozen=True)
class DatasetIndex:
    entries: tuple[IndexEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        entries = tuple(self.entries)
        ids = [e.record_id for e in entries]
        if len(set(ids)) != len(ids):
            raise IndexError_("duplicate record ids in dataset index")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def subset(self, split: str) -> "DatasetIndex":
        return DatasetIndex(tuple(e for e in self.entries if e.split == split))

    @property
    def record_ids(self) -> list[str]:
        return [e.record_id for e in self.entries]

    @classmethod
    def from_directory(cls, data_dir: str | Path, labels_path: str | Path | None = None,
                       suffix: str = ".ecgb") -> "DatasetIndex":
        """Index ``<record_id><suffix>`` files in *data_dir* against a label CSV."""
        data_dir = Path(data_dir)
        labels_path = Path(labels_path) if labels_path else data_dir / "labels.csv"
        entries = []
        for ls in load_labels(labels_path):
            path = data_dir / f"{ls.record_id}{suffix}"
            if not path.is_file():
                raise IndexError_(f"no recording file for {ls.record_id} at {path}")
            entries.append(IndexEntry(ls.record_id, ls, "", path))
        return cls(tuple(entries))


# --------------------------------------------------------------------------- I/O

def write_recording(rec: EcgRecording, path: str | Path) -> None:
    """Write *rec* as ECGB. Samples are stored as float32."""
    data = np.ascontiguousarray(rec.samples, dtype="<f4")
    header = _ECGB_HEADER.pack(ECGB_MAGIC, ECGB_VERSION, 0, rec.lead_count,
                               float(rec.sampling_rate), rec.sample_count)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes(order="C"))


def read_ecgb(path: str | Path, record_id: str | None = None) -> EcgRecording:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _ECGB_HEADER.size:
        raise FormatError(f"{path}: truncated ECGB header")
    magic, version, _reserved, leads, rate, n = _ECGB_HEADER.unpack_from(raw)
    if magic != ECGB_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != ECGB_VERSION:
        raise FormatError(f"{path}: unsupported ECGB version {version}")
    expected = _ECGB_HEADER.size + 4 * leads * n
    if len(raw) != expected:
        raise FormatError(f"{path}: payload size {len(raw)} != expected {expected}")
    samples = np.frombuffer(raw, dtype="<f4", offset=_ECGB_HEADER.size).reshape(leads, n)
    if not np.all(np.isfinite(samples)):
        raise DataError(f"{path}: non-finite sample values")
    return EcgRecording(record_id or path.stem, float(rate), samples.astype(np.float64))


def read_csv_recording(path: str | Path, sampling_rate: float = DEFAULT_RATE,
                       record_id: str | None = None) -> EcgRecording:
    path = Path(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != N_LEADS:
                raise FormatError(f"{path}:{lineno + 1}: expected {N_LEADS} columns, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if lineno == 0 and not rows:
                    continue  # header
                raise FormatError(f"{path}:{lineno + 1}: non-numeric value") from None
    if not rows:
        raise FormatError(f"{path}: no samples")
    samples = np.array(rows, dtype=np.float64).T
    if not np.all(np.isfinite(samples)):
        raise DataError(f"{path}: non-finite sample values")
    return EcgRecording(record_id or path.stem, float(sampling_rate), samples)


def load_recording(path: str | Path, sampling_rate: float = DEFAULT_RATE) -> EcgRecording:
    """Load an ECGB or CSV recording; *sampling_rate* only applies to CSV."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_csv_recording(path, sampling_rate)
    return read_ecgb(path)


def write_csv_recording(rec: EcgRecording, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(LEAD_NAMES)
        for row in rec.samples.T:
            w.writerow([repr(float(v)) for v in row])


def load_labels(path: str | Path) -> list[LabelSet]:
    out: list[LabelSet] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            row = [c.strip() for c in row if c.strip()]
            if not row:
                continue
            rid, names = row[0], row[1:]
            if rid in seen:
                raise IndexError_(f"duplicate record id {rid!r} in {path}")
            seen.add(rid)
            out.append(LabelSet(rid, tuple(ClassLabel.parse(n) for n in names)))
    return out


def write_labels(labelsets: Iterable[LabelSet], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for ls in labelsets:
            w.writerow([ls.record_id, *(l.code for l in ls.labels)])


# ----------------------------------------------------------------------- dataset

def split_dataset(index: DatasetIndex, ratio: float = 0.9, seed: int = 0) -> DatasetIndex:
    """Deterministically tag entries as train/validation.

    The validation share is ``floor((1 - ratio) * N)``, but never less than one
    record; everything else is train. For N=6877, ratio=0.9 this gives 6190/687.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    n = len(index)
    if n == 0:
        raise ValueError("cannot split an empty index")
    n_val = max(1, int(math.floor((1.0 - ratio) * n + 1e-9)))
    n_train = n - n_val
    order = np.random.default_rng(seed).permutation(n)
    train = set(order[:n_train].tolist())
    return DatasetIndex(tuple(
        replace(e, split="train" if i in train else "validation")
        for i, e in enumerate(index.entries)))


def dataset_stats(labelsets: Sequence[LabelSet]) -> dict[ClassLabel, int]:
    counts = {c: 0 for c in ClassLabel}
    for ls in labelsets:
        counts[ls.primary] += 1
    return counts
