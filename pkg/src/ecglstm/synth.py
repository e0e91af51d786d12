"""Synthetic 12-lead ECG with ground-truth R peaks and class archetypes.

Each beat is the sum of five Gaussian bumps (P, Q, R, S, T). Lead-specific
gains project the bumps onto the 12 leads. R bumps are centred exactly on
sample instants so the exported truth peak equals the argmax of the noiseless
R bump. The archetypes are caricatures chosen to be separable, not clinical
simulations.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (ClassLabel, DatasetIndex, EcgRecording, IndexEntry, LabelSet,
                   N_LEADS, write_labels, write_recording)

# Wave order inside a beat.
P, Q, R, S, T = range(5)

# offset from R (s), width sigma (s), amplitude (mV) for the reference lead
_BASE_WAVES = np.array([
    [-0.160, 0.022, 0.13],
    [-0.028, 0.008, -0.12],
    [0.000, 0.010, 1.10],
    [0.028, 0.008, -0.28],
    [0.260, 0.045, 0.30],
])

# Per-lead projection of each wave (rows: P, Q, R, S, T; columns: 12 leads).
_LEAD_GAIN = np.array([
    # I    II    III   aVR   aVL   aVF   V1    V2    V3    V4    V5    V6
    [0.6, 1.0, 0.4, -0.8, 0.1, 0.7, 0.4, 0.6, 0.6, 0.6, 0.6, 0.5],    # P
    [0.5, 1.0, 0.5, 0.2, 0.3, 0.8, 0.0, 0.2, 0.6, 1.0, 1.0, 1.0],     # Q
    [0.6, 1.0, 0.4, -0.7, 0.3, 0.7, 0.25, 0.5, 0.9, 1.3, 1.2, 0.9],   # R
    [0.4, 1.0, 0.6, 0.3, 0.4, 0.8, 3.0, 2.6, 1.6, 1.0, 0.5, 0.3],     # S
    [0.7, 1.0, 0.3, -0.8, 0.3, 0.6, -0.2, 0.9, 1.1, 1.0, 0.8, 0.6],   # T
])

# Lead polarity of the widened QRS in bundle-branch blocks.
_LBBB_QRS_SIGN = np.array([1.0, 0.8, -0.3, -1.0, 1.0, -0.2, -1.0, -1.0, -0.6, 0.6, 1.0, 1.0])
_RBBB_QRS_SIGN = np.array([-0.5, 0.6, 0.7, 0.4, -0.8, 0.7, 1.2, 1.0, 0.7, 0.6, -0.4, -0.6])

ARCHETYPES = tuple(ClassLabel)


@dataclass(frozen=True)
class SynthSpec:
    archetype: ClassLabel = ClassLabel.Normal
    duration: float = 30.0
    heart_rate: float = 75.0
    noise_sigma: float = 0.0
    wander_amplitude: float = 0.0
    wander_frequency: float = 0.3
    seed: int = 0
    rate: float = 500.0
    premature_every: int = 4

    def __post_init__(self):
        if not isinstance(self.archetype, ClassLabel):
            try:
                object.__setattr__(self, "archetype", ClassLabel(self.archetype))
            except ValueError:
                raise ValueError(f"invalid archetype {self.archetype!r}") from None
        if not 6 <= self.duration <= 60:
            raise ValueError(f"duration must be within [6, 60] s, got {self.duration}")
        if not 40 <= self.heart_rate <= 180:
            raise ValueError(f"heart rate must be within [40, 180] bpm, got {self.heart_rate}")
        if self.noise_sigma < 0 or self.wander_amplitude < 0:
            raise ValueError("noise and wander amplitudes must be non-negative")
        if self.premature_every < 2:
            raise ValueError("premature_every must be >= 2")


@dataclass(frozen=True, eq=False)
class SynthResult:
    recording: EcgRecording
    peaks: np.ndarray          # truth R-peak sample indices
    premature: np.ndarray      # bool per truth peak
    clean: np.ndarray          # noiseless, wander-free samples


def _rr_sequence(spec: SynthSpec, rng: np.random.Generator) -> tuple[list[float], list[bool]]:
    """RR intervals (before each beat) and premature flags, covering the duration."""
    mean_rr = 60.0 / spec.heart_rate
    arch = spec.archetype
    rrs, flags = [], []
    total = 0.0
    k = 0
    while total < spec.duration + 2 * mean_rr:
        k += 1
        premature = False
        if arch is ClassLabel.AF:
            rr = rng.uniform(0.6, 1.2) * mean_rr
        elif arch in (ClassLabel.PAC, ClassLabel.PVC) and k % spec.premature_every == 0:
            rr = 0.7 * mean_rr
            premature = True
        elif arch is ClassLabel.PVC and flags and flags[-1]:
            rr = 1.3 * mean_rr  # compensatory pause
        else:
            rr = mean_rr * (1.0 + rng.uniform(-0.03, 0.03))
        rrs.append(rr)
        flags.append(premature)
        total += rr
    return rrs, flags


def _beat_waves(arch: ClassLabel, premature: bool, rr: float) -> tuple[np.ndarray, np.ndarray]:
    """Wave table (5 x 3) and per-wave 12-lead gains (5 x 12) for one beat."""
    waves = _BASE_WAVES.copy()
    gains = _LEAD_GAIN.copy()
    # QT shortens with rate
    waves[T, 0] *= np.sqrt(rr / 0.8) ** 0.5
    if arch is ClassLabel.AF:
        waves[P, 2] = 0.0
    elif arch is ClassLabel.I_AVB:
        waves[P, 0] = -0.300
    elif arch in (ClassLabel.LBBB, ClassLabel.RBBB):
        waves[Q:S + 1, 1] *= 2.0
        waves[Q, 0] *= 2.0
        waves[S, 0] *= 2.0
        sign = _LBBB_QRS_SIGN if arch is ClassLabel.LBBB else _RBBB_QRS_SIGN
        gains[R] = sign * 1.1
        gains[Q] = sign * 0.5
        gains[S] = -sign * 0.6
        gains[T] = -0.4 * sign  # discordant repolarisation
        gains[R, 1] = 1.0  # keep lead II dominant-positive for detection
    if premature and arch is ClassLabel.PAC:
        waves[P, 2] *= -0.8
        waves[P, 0] = -0.110
    elif premature and arch is ClassLabel.PVC:
        waves[P, 2] = 0.0
        waves[Q:S + 1, 1] *= 2.5
        waves[Q, 0] *= 2.5
        waves[S, 0] *= 2.5
        waves[R, 2] *= 2.2
        waves[T, 2] *= -1.6
    return waves, gains


def _st_shift(arch: ClassLabel) -> float:
    if arch is ClassLabel.STD:
        return -0.15
    if arch is ClassLabel.STE:
        return 0.15
    return 0.0


def generate(spec: SynthSpec, record_id: str = "SYN") -> SynthResult:
    """Render one recording plus its truth peaks and premature flags."""
    rng = np.random.default_rng(spec.seed)
    fs = spec.rate
    n = int(round(spec.duration * fs))
    t = np.arange(n) / fs
    rrs, flags = _rr_sequence(spec, rng)

    lead_jitter = 1.0 + rng.uniform(-0.15, 0.15, size=N_LEADS)
    scale = rng.uniform(0.8, 1.25)
    st = _st_shift(spec.archetype)

    clean = np.zeros((N_LEADS, n))
    peaks, premature = [], []
    t_r = rng.uniform(0.25, 0.9) * 60.0 / spec.heart_rate
    for i, (rr, flag) in enumerate(zip(rrs, flags)):
        if i:
            t_r += rr
        if t_r * fs >= n + 0.5 * fs:
            break
        r_idx = int(round(t_r * fs))
        tr = r_idx / fs
        if r_idx < n:
            peaks.append(r_idx)
            premature.append(flag)
        waves, gains = _beat_waves(spec.archetype, flag, rr)
        amp = 1.0 + rng.normal(0.0, 0.02)
        lo, hi = max(0, r_idx - int(0.5 * fs)), min(n, r_idx + int(0.7 * fs))
        if lo < hi:
            tt = t[lo:hi] - tr
            for w in range(5):
                off, width, a = waves[w]
                if a == 0.0:
                    continue
                bump = a * amp * np.exp(-0.5 * ((tt - off) / width) ** 2)
                clean[:, lo:hi] += np.outer(gains[w] * lead_jitter, bump)
            if st:
                s_end = waves[S, 0] + 2 * waves[S, 1]
                t_on = waves[T, 0] - 1.2 * waves[T, 1]
                edge = 0.015
                rise = 1.0 / (1.0 + np.exp(-(tt - s_end) / edge * 4))
                fall = 1.0 / (1.0 + np.exp((tt - t_on) / edge * 4))
                mag = np.abs(_LEAD_GAIN[R]) * lead_jitter
                clean[:, lo:hi] += np.outer(st * mag, rise * fall)

    clean *= scale
    noisy = clean.copy()
    if spec.wander_amplitude > 0:
        phase = rng.uniform(0, 2 * np.pi, size=(N_LEADS, 1))
        lead_w = rng.uniform(0.5, 1.0, size=(N_LEADS, 1))
        noisy += spec.wander_amplitude * lead_w * np.sin(2 * np.pi * spec.wander_frequency * t + phase)
    if spec.noise_sigma > 0:
        noisy += rng.normal(0.0, spec.noise_sigma, size=noisy.shape)
    # store exactly what the float32 ECGB container can represent
    noisy = noisy.astype(np.float32).astype(np.float64)
    rec = EcgRecording(record_id, fs, noisy)
    return SynthResult(rec, np.array(peaks, dtype=np.int64),
                       np.array(premature, dtype=bool), clean)


@dataclass(frozen=True)
class CorpusConfig:
    duration_range: tuple[float, float] = (10.0, 14.0)
    hr_range: tuple[float, float] = (50.0, 110.0)
    noise_range: tuple[float, float] = (0.005, 0.03)
    wander_amp_range: tuple[float, float] = (0.0, 0.3)
    wander_freq_range: tuple[float, float] = (0.05, 0.5)
    premature_every_choices: tuple[int, ...] = (3, 4)


def random_spec(arch: ClassLabel, rng: np.random.Generator,
                cfg: CorpusConfig = CorpusConfig()) -> SynthSpec:
    return SynthSpec(
        archetype=arch,
        duration=float(np.round(rng.uniform(*cfg.duration_range), 3)),
        heart_rate=float(np.round(rng.uniform(*cfg.hr_range), 2)),
        noise_sigma=float(rng.uniform(*cfg.noise_range)),
        wander_amplitude=float(rng.uniform(*cfg.wander_amp_range)),
        wander_frequency=float(rng.uniform(*cfg.wander_freq_range)),
        seed=int(rng.integers(0, 2**31 - 1)),
        premature_every=int(rng.choice(cfg.premature_every_choices)),
    )


def corpus_specs(per_class: int, seed: int, cfg: CorpusConfig = CorpusConfig()) -> list[tuple[str, SynthSpec]]:
    """Record ids and specs in emission order, derived deterministically from *seed*."""
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    i = 0
    for _ in range(per_class):
        for arch in ARCHETYPES:
            i += 1
            out.append((f"S{i:05d}", random_spec(arch, rng, cfg)))
    return out


def generate_corpus(per_class: int, seed: int, out: str | Path,
                    cfg: CorpusConfig = CorpusConfig()) -> DatasetIndex:
    """Write ``per_class`` records per archetype as ECGB plus ``labels.csv``
    and the truth sidecar ``truth.csv``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    entries, labelsets = [], []
    truth_rows = []
    for rid, spec in corpus_specs(per_class, seed, cfg):
        res = generate(spec, rid)
        path = out / f"{rid}.ecgb"
        write_recording(res.recording, path)
        ls = LabelSet(rid, (spec.archetype,))
        labelsets.append(ls)
        entries.append(IndexEntry(rid, ls, "", path))
        truth_rows.extend((rid, int(p), int(f)) for p, f in zip(res.peaks, res.premature))
    write_labels(labelsets, out / "labels.csv")
    write_truth(truth_rows, out / "truth.csv")
    return DatasetIndex(tuple(entries))


def write_truth(rows, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "peak_sample", "premature_flag"])
        w.writerows(rows)


def load_truth(path: str | Path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    by_record: dict[str, tuple[list[int], list[bool]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            peaks, flags = by_record.setdefault(row["record_id"], ([], []))
            peaks.append(int(row["peak_sample"]))
            flags.append(row["premature_flag"] == "1")
    return {k: (np.array(p, dtype=np.int64), np.array(f, dtype=bool))
            for k, (p, f) in by_record.items()}


def directory_digest(path: str | Path) -> str:
    """SHA-256 over file names and contents, in sorted order."""
    h = hashlib.sha256()
    for f in sorted(Path(path).rglob("*")):
        if f.is_file():
            h.update(f.relative_to(path).as_posix().encode())
            h.update(f.read_bytes())
    return h.hexdigest()
