"""Filtering primitives: Butterworth high-pass, zero-phase filtering, the
stationary (a trous) wavelet transform, soft-threshold denoising and rational
resampling.

All functions operate along the last axis, so a ``(12, n)`` lead matrix is
processed lead by lead in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

# Orthonormal decomposition low-pass filters (8 taps each).
WAVELET_LOWPASS = {
    "db4": np.array([
        -0.010597401785069032, 0.0328830116668852, 0.030841381835560764,
        -0.18703481171909309, -0.027983769416859854, 0.6308807679298589,
        0.7148465705529157, 0.2303778133088965,
    ]),
    "sym4": np.array([
        -0.07576571478927333, -0.02963552764599851, 0.49761866763201545,
        0.8037387518059161, 0.29785779560527736, -0.09921954357684722,
        -0.012603967262037833, 0.0322231006040427,
    ]),
}


def wavelet_filters(wavelet: str) -> tuple[np.ndarray, np.ndarray]:
    """Return the (low-pass, high-pass) decomposition pair for *wavelet*."""
    try:
        lo = WAVELET_LOWPASS[wavelet]
    except KeyError:
        raise ValueError(f"unsupported wavelet {wavelet!r}; "
                         f"choose from {sorted(WAVELET_LOWPASS)}") from None
    # quadrature mirror: g[k] = (-1)^k h[L-1-k], sign chosen to match common convention
    hi = lo[::-1] * np.where(np.arange(lo.size) % 2 == 0, -1.0, 1.0)
    return lo, hi


# ------------------------------------------------------------------ IIR filters

@dataclass(frozen=True)
class IirFilter:
    """Zeros, poles and gain; filtering runs as second-order sections because
    the expanded polynomials are ill-conditioned for low cutoffs."""

    zeros: np.ndarray
    poles: np.ndarray
    gain: float
    order: int
    cutoff: float
    rate: float

    @property
    def sos(self) -> np.ndarray:
        return signal.zpk2sos(self.zeros, self.poles, self.gain)

    @property
    def b(self) -> np.ndarray:
        return self.gain * np.real(np.poly(self.zeros))

    @property
    def a(self) -> np.ndarray:
        return np.real(np.poly(self.poles))

    def response(self, freqs_hz) -> np.ndarray:
        """Complex single-pass frequency response at *freqs_hz*."""
        z = np.exp(2j * np.pi * np.asarray(freqs_hz, dtype=float) / self.rate)[..., None]
        return self.gain * np.prod(z - self.zeros, axis=-1) / np.prod(z - self.poles, axis=-1)


def design_butterworth_highpass(order: int = 4, cutoff: float = 1.0,
                                rate: float = 500.0) -> IirFilter:
    """Digital Butterworth high-pass via the bilinear transform with prewarping.

    The magnitude at *cutoff* is exactly 1/sqrt(2) and H(1) = 0.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if not 0 < cutoff < rate / 2:
        raise ValueError(f"cutoff {cutoff} Hz must lie in (0, {rate / 2}) Hz")
    fs2 = 2.0 * rate
    warped = fs2 * math.tan(math.pi * cutoff / rate)
    k = np.arange(1, order + 1)
    proto = np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))  # unit-circle LP poles
    s_poles = warped / proto  # low-pass -> high-pass, zeros move to s = 0
    z_poles = (fs2 + s_poles) / (fs2 - s_poles)
    zeros = np.ones(order)
    # unity gain at Nyquist (z = -1)
    gain = float(abs(np.prod(-1.0 - z_poles) / np.prod(-1.0 - zeros)))
    return IirFilter(zeros, z_poles, gain, order, float(cutoff), float(rate))


def filtfilt(filt: IirFilter, x: np.ndarray) -> np.ndarray:
    """Zero-phase forward-backward filtering with odd-reflection edge padding
    of ``3 * order`` samples and steady-state initial conditions."""
    x = np.asarray(x, dtype=float)
    padlen = 3 * filt.order
    if x.shape[-1] <= padlen:
        raise ValueError(f"input length {x.shape[-1]} must exceed {padlen} samples")
    return signal.sosfiltfilt(filt.sos, x, axis=-1, padtype="odd", padlen=padlen)


def highpass(x: np.ndarray, rate: float, cutoff: float = 1.0, order: int = 4) -> np.ndarray:
    return filtfilt(design_butterworth_highpass(order, cutoff, rate), x)


# --------------------------------------------------------------------------- SWT

@dataclass
class SwtDecomposition:
    approximation: np.ndarray
    details: list[np.ndarray]  # details[0] is level 1
    wavelet: str
    levels: int
    original_length: int
    pad_left: int = 0
    pad_right: int = 0
    mode: str = "symmetric"

    @property
    def padded_length(self) -> int:
        return self.approximation.shape[-1]


def _circ_filter(x: np.ndarray, taps: np.ndarray, step: int) -> np.ndarray:
    # y[n] = sum_k taps[k] * x[n - k*step]  (circular)
    out = np.zeros_like(x)
    for k, c in enumerate(taps):
        out += c * np.roll(x, k * step, axis=-1)
    return out


def _circ_filter_adjoint(y: np.ndarray, taps: np.ndarray, step: int) -> np.ndarray:
    out = np.zeros_like(y)
    for k, c in enumerate(taps):
        out += c * np.roll(y, -k * step, axis=-1)
    return out


def swt_decompose(x: np.ndarray, wavelet: str = "db4", levels: int = 4,
                  mode: str = "symmetric") -> SwtDecomposition:
    """Undecimated a trous decomposition along the last axis.

    With ``mode="symmetric"`` the input is mirror-padded to the next multiple of
    ``2**levels``; ``mode="periodic"`` requires that length already and treats
    the signal as circular.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    lo, hi = wavelet_filters(wavelet)
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    block = 2 ** levels
    padded = -(-n // block) * block
    left = right = 0
    if mode == "symmetric":
        total = padded - n
        left, right = total // 2, total - total // 2
        if total:
            if n < max(left, right):
                raise ValueError(f"input of {n} samples too short for {levels} levels")
            widths = [(0, 0)] * (x.ndim - 1) + [(left, right)]
            x = np.pad(x, widths, mode="symmetric")
    elif mode == "periodic":
        if n % block:
            raise ValueError(f"periodic mode needs a length divisible by {block}, got {n}")
    else:
        raise ValueError(f"unknown boundary mode {mode!r}")
    if x.shape[-1] < block:
        raise ValueError(f"input of {n} samples too short for {levels} levels")

    approx = x
    details = []
    for j in range(levels):
        step = 2 ** j
        details.append(_circ_filter(approx, hi, step))
        approx = _circ_filter(approx, lo, step)
    return SwtDecomposition(approx, details, wavelet, levels, n, left, right, mode)


def swt_reconstruct(d: SwtDecomposition) -> np.ndarray:
    """Inverse of :func:`swt_decompose`; strips the boundary padding."""
    lo, hi = wavelet_filters(d.wavelet)
    if len(d.details) != d.levels:
        raise ValueError(f"expected {d.levels} detail bands, got {len(d.details)}")
    shape = d.approximation.shape
    if any(band.shape != shape for band in d.details):
        raise ValueError("inconsistent band lengths in decomposition")
    if shape[-1] != d.original_length + d.pad_left + d.pad_right:
        raise ValueError("band length does not match original length plus padding")
    approx = d.approximation
    for j in reversed(range(d.levels)):
        step = 2 ** j
        approx = 0.5 * (_circ_filter_adjoint(approx, lo, step)
                        + _circ_filter_adjoint(d.details[j], hi, step))
    return approx[..., d.pad_left:d.pad_left + d.original_length]


# --------------------------------------------------------------------- denoising

def soft_threshold(c: np.ndarray, t) -> np.ndarray:
    return np.sign(c) * np.maximum(np.abs(c) - t, 0.0)


def wavelet_denoise(x: np.ndarray, wavelet: str = "db4", levels: int = 4) -> np.ndarray:
    """Universal-threshold soft shrinkage of every SWT detail band.

    The noise level is estimated per lead from the level-1 details
    (median absolute value / 0.6745).
    """
    d = swt_decompose(x, wavelet, levels)
    n = d.padded_length
    sigma = np.median(np.abs(d.details[0]), axis=-1, keepdims=True) / 0.6745
    t = sigma * math.sqrt(2.0 * math.log(n))
    d.details = [soft_threshold(band, t) for band in d.details]
    return swt_reconstruct(d)


# -------------------------------------------------------------------- resampling

def resampling_filter(up: int, down: int, beta: float = 8.6) -> np.ndarray:
    """Kaiser-windowed sinc anti-alias filter of length ``10 * max(up, down) + 1``,
    with passband gain *up* to compensate for zero insertion."""
    length = 10 * max(up, down) + 1
    cutoff = 1.0 / max(up, down)  # fraction of the upsampled Nyquist
    n = np.arange(length) - (length - 1) / 2
    taps = cutoff * np.sinc(cutoff * n) * np.kaiser(length, beta)
    return up * taps / taps.sum()


def resample_rational(x: np.ndarray, up: int, down: int, rate_in: float | None = None) -> np.ndarray:
    """Resample by ``up/down`` along the last axis.

    Output length is ``ceil(n * up / down)``. The straight line joining the
    first and last samples is removed before filtering and added back at the
    output instants, so edges do not droop toward zero.
    """
    if up < 1 or down < 1:
        raise ValueError("up and down must be >= 1")
    if math.gcd(up, down) != 1:
        raise ValueError(f"up={up} and down={down} must be coprime")
    x = np.asarray(x, dtype=float)
    if up == down == 1:
        return x.copy()
    n = x.shape[-1]
    n_out = -(-n * up // down)
    t_in = np.arange(n, dtype=float)
    t_out = np.arange(n_out, dtype=float) * down / up
    first, last = x[..., :1], x[..., -1:]
    slope = (last - first) / max(n - 1, 1)
    resid = x - (first + slope * t_in)

    taps = resampling_filter(up, down)
    delay = (taps.size - 1) // 2
    # front-pad the filter so its delay is a whole number of output samples
    extra = (-delay) % down
    taps = np.concatenate([np.zeros(extra), taps])
    skip = (delay + extra) // down
    y = signal.upfirdn(taps, resid, up, down, axis=-1)
    y = y[..., skip:skip + n_out]
    if y.shape[-1] < n_out:
        widths = [(0, 0)] * (y.ndim - 1) + [(0, n_out - y.shape[-1])]
        y = np.pad(y, widths)
    return y + first + slope * t_out
