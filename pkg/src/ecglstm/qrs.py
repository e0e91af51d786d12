"""R-peak detection on a single lead from SWT detail-band energy.

The detector squares and sums two mid-scale detail bands of a db4 stationary
wavelet transform, smooths the result with a moving average, and walks the
local maxima of that feature with an adaptive threshold, a refractory period
and RR-based search-back. Accepted feature peaks are refined to the largest
absolute sample of the input lead nearby.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import find_peaks

from . import dsp
from .core import LEAD_NAMES, EcgRecording

REFERENCE_RATE = 500.0


@dataclass(frozen=True)
class QrsConfig:
    wavelet: str = "db4"
    levels: int = 5
    bands: tuple[int, ...] = (3, 4)
    integration_window: float = 0.150   # s
    threshold_factor: float = 0.25
    history: int = 8                    # accepted peaks in the running median
    init_window: float = 2.0            # s used for the initial threshold
    init_percentile: float = 98.0
    refractory: float = 0.200           # s
    searchback_rr_factor: float = 1.66
    searchback_threshold_factor: float = 0.5
    refine_window: float = 0.050        # s, half-width
    edge_margin: float = 0.5            # s of mirror padding around the lead


@dataclass(frozen=True, eq=False)
class PeakList:
    record_id: str
    lead: int
    indices: np.ndarray
    config: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def lead_name(self) -> str:
        return LEAD_NAMES[self.lead] if 0 <= self.lead < len(LEAD_NAMES) else str(self.lead)


def qrs_feature(x: np.ndarray, rate: float, config: QrsConfig = QrsConfig()) -> np.ndarray:
    """Smoothed detail-band energy, aligned with *x*."""
    x = np.asarray(x, dtype=float)
    n = x.size
    margin = min(int(round(config.edge_margin * rate)), n - 1)
    padded = np.pad(x, margin, mode="symmetric") if margin > 0 else x
    dec = dsp.swt_decompose(padded, config.wavelet, config.levels)
    taps = dsp.WAVELET_LOWPASS[config.wavelet].size
    energy = np.zeros(dec.padded_length)
    for level in config.bands:
        # the causal filter cascade delays level j by about (taps-1)/2 * (2^j - 1)
        delay = int(round((taps - 1) / 2 * (2 ** level - 1)))
        band = np.roll(dec.details[level - 1], -delay)
        energy += band ** 2
    energy = energy[dec.pad_left + margin: dec.pad_left + margin + n]
    width = max(1, int(round(config.integration_window * rate)))
    kernel = np.ones(width) / width
    return np.convolve(energy, kernel, mode="same")


def detect_r_peaks(x: np.ndarray, rate: float = REFERENCE_RATE,
                   config: QrsConfig = QrsConfig(), record_id: str = "",
                   lead: int = 1) -> PeakList:
    """Detect R peaks in a baseline-corrected lead sampled at *rate* Hz."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < config.init_window * rate:
        raise ValueError(f"need at least {config.init_window} s of data, got {n / rate:.3f} s")
    snapshot = asdict(config)
    empty = PeakList(record_id, lead, np.zeros(0, dtype=np.int64), snapshot)
    if not np.any(x != x[0]):
        return empty

    feat = qrs_feature(x, rate, config)
    refractory = int(round(config.refractory * rate))
    init = float(np.percentile(feat[: int(config.init_window * rate)], config.init_percentile))
    if not init > 0:
        init = float(np.percentile(feat, config.init_percentile))
    if not init > 0:
        return empty

    # zero guard samples let a maximum sitting on either edge count as a peak
    cand, _ = find_peaks(np.concatenate([[0.0], feat, [0.0]]))
    cand = cand - 1
    heights = feat[cand]
    accepted: list[int] = []      # feature-peak positions
    acc_h: list[float] = []

    def threshold() -> float:
        ref = acc_h[-config.history:] if acc_h else [init]
        return config.threshold_factor * float(np.median(ref))

    def median_rr() -> float | None:
        if len(accepted) < 2:
            return None
        return float(np.median(np.diff(accepted[-(config.history + 1):])))

    def search_back(upto: int) -> bool:
        # best candidate in the gap between the last accepted peak and *upto*
        lo = accepted[-1] + refractory
        mask = (cand >= lo) & (cand <= upto - refractory)
        if not mask.any():
            return False
        idx = np.flatnonzero(mask)
        best = idx[np.argmax(heights[idx])]
        if heights[best] <= config.searchback_threshold_factor * threshold():
            return False
        accepted.append(int(cand[best]))
        acc_h.append(float(heights[best]))
        return True

    for pos, h in zip(cand, heights):
        pos = int(pos)
        rr = median_rr()
        while rr is not None and pos - accepted[-1] > config.searchback_rr_factor * rr:
            if not search_back(pos):
                break
            rr = median_rr()
        if h <= threshold():
            continue
        if accepted and pos - accepted[-1] < refractory:
            if h > acc_h[-1]:
                accepted[-1], acc_h[-1] = pos, float(h)
            continue
        accepted.append(pos)
        acc_h.append(float(h))
    rr = median_rr()
    while rr is not None and n - accepted[-1] > config.searchback_rr_factor * rr:
        if not search_back(n):
            break
        rr = median_rr()

    return PeakList(record_id, lead, _refine(x, np.array(accepted, dtype=np.int64),
                                             int(round(config.refine_window * rate)), refractory),
                    snapshot)


def _refine(x: np.ndarray, feature_peaks: np.ndarray, half: int, refractory: int) -> np.ndarray:
    n = x.size
    mag = np.abs(x)
    out: list[int] = []
    for p in feature_peaks:
        lo, hi = max(0, p - half), min(n, p + half + 1)
        r = lo + int(np.argmax(mag[lo:hi]))
        if out and r - out[-1] < refractory:
            if mag[r] > mag[out[-1]]:
                out[-1] = r
            continue
        out.append(r)
    return np.array(out, dtype=np.int64)


def fuse_lead_choice(rec: EcgRecording, preferred: int = 1,
                     min_peak_to_peak: float = 0.05) -> tuple[int, np.ndarray]:
    """Pick the lead used for detection: *preferred* unless it is nearly flat,
    in which case the lead with the largest peak-to-peak amplitude."""
    if not 0 <= preferred < rec.lead_count:
        raise ValueError(f"lead {preferred} not present")
    ptp = np.ptp(rec.samples, axis=1)
    if ptp[preferred] >= min_peak_to_peak or ptp.max() < min_peak_to_peak:
        return preferred, rec.samples[preferred]
    best = int(np.argmax(ptp))
    return best, rec.samples[best]


def match_peaks(detected, truth, tolerance: int) -> tuple[int, int, int]:
    """Greedy one-to-one matching; returns (true positives, false positives, false negatives)."""
    detected = np.sort(np.asarray(detected, dtype=np.int64))
    truth = np.sort(np.asarray(truth, dtype=np.int64))
    used = np.zeros(detected.size, dtype=bool)
    tp = 0
    for t in truth:
        if detected.size == 0:
            break
        j = int(np.searchsorted(detected, t))
        best, best_d = -1, tolerance + 1
        for k in (j - 1, j):
            if 0 <= k < detected.size and not used[k]:
                d = abs(int(detected[k]) - int(t))
                if d < best_d:
                    best, best_d = k, d
        if best >= 0 and best_d <= tolerance:
            used[best] = True
            tp += 1
    return tp, int(detected.size - tp), int(truth.size - tp)
