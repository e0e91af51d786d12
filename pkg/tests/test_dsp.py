import numpy as np
import pytest
import pywt
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from ecglstm import dsp, synth
from ecglstm.core import ClassLabel

RATE = 500.0


def _db(x):
    return 20 * np.log10(np.abs(x))


class TestButterworth:
    def test_matches_reference_design(self):
        f = dsp.design_butterworth_highpass(4, 1.0, RATE)
        b, a = signal.butter(4, 1.0, btype="highpass", fs=RATE)
        assert np.allclose(f.b, b, rtol=1e-10, atol=1e-14)
        assert np.allclose(f.a, a, rtol=1e-10, atol=1e-14)
        assert f.a[0] == pytest.approx(1.0)
        z, p, k = signal.butter(4, 1.0, btype="highpass", fs=RATE, output="zpk")
        np.testing.assert_allclose(np.sort_complex(f.poles), np.sort_complex(p), atol=1e-12)
        assert f.gain == pytest.approx(k, rel=1e-10)

    def test_gain_points(self):
        f = dsp.design_butterworth_highpass(4, 1.0, RATE)
        _, h = signal.sosfreqz(signal.butter(4, 1.0, btype="highpass", fs=RATE, output="sos"),
                               worN=[0.0, 1.0, 40.0], fs=RATE)
        np.testing.assert_allclose(f.response([0.0, 1.0, 40.0]), h, atol=1e-9)
        _, h = signal.freqz_zpk(f.zeros, f.poles, f.gain, worN=[0.0, 1.0, 40.0], fs=RATE)
        assert abs(h[0]) < 1e-12
        assert _db(h[1]) == pytest.approx(-3.0103, abs=0.1)
        assert abs(_db(h[2])) < 0.05

    @pytest.mark.parametrize("order,cutoff", [(1, 0.5), (2, 1.0), (4, 1.0), (6, 5.0), (8, 0.3)])
    def test_stable_and_half_power(self, order, cutoff):
        f = dsp.design_butterworth_highpass(order, cutoff, RATE)
        assert np.all(np.abs(f.poles) < 1 - 1e-9)
        assert abs(f.response(cutoff)) == pytest.approx(2 ** -0.5, rel=1e-9)

    def test_design_errors(self):
        with pytest.raises(ValueError):
            dsp.design_butterworth_highpass(4, 250.0, RATE)
        with pytest.raises(ValueError):
            dsp.design_butterworth_highpass(0, 1.0, RATE)


class TestFiltfilt:
    f = dsp.design_butterworth_highpass(4, 1.0, RATE)
    t = np.arange(int(10 * RATE)) / RATE

    def test_constant_rejected(self):
        y = dsp.filtfilt(self.f, np.full(5000, 3.0))
        assert np.max(np.abs(y)) < 1e-6 * 3.0

    def test_passband_sine(self):
        x = np.sin(2 * np.pi * 25 * self.t)
        y = dsp.filtfilt(self.f, x)
        # the short 3*order edge pad leaves a transient settling within about 1 s
        mid = slice(1000, -1000)
        assert np.ptp(y[mid]) == pytest.approx(np.ptp(x[mid]), rel=0.01)

    def test_wander_attenuated(self):
        x = np.sin(2 * np.pi * 0.2 * self.t)
        y = dsp.filtfilt(self.f, x)
        mid = slice(1000, 4000)
        assert _db(np.ptp(y[mid]) / np.ptp(x)) <= -20

    def test_time_reversal_symmetry(self):
        x = np.random.default_rng(0).standard_normal(20000)
        a = dsp.filtfilt(self.f, x[::-1])
        b = dsp.filtfilt(self.f, x)[::-1]
        # edge transients decay like exp(-2.4 t); compare 15 s in from each edge
        assert np.max(np.abs(a - b)[7500:-7500]) < 1e-9

    def test_too_short(self):
        with pytest.raises(ValueError):
            dsp.filtfilt(self.f, np.zeros(12))

    def test_leads_along_last_axis(self):
        x = np.random.default_rng(1).standard_normal((12, 2000))
        y = dsp.filtfilt(self.f, x)
        assert np.allclose(y[3], dsp.filtfilt(self.f, x[3]))


class TestSwt:
    @pytest.mark.parametrize("wavelet", ["db4", "sym4"])
    def test_filter_banks_match_reference(self, wavelet):
        lo, hi = dsp.wavelet_filters(wavelet)
        w = pywt.Wavelet(wavelet)
        assert np.allclose(lo, w.dec_lo, atol=1e-15)
        assert np.allclose(np.abs(hi), np.abs(w.dec_hi), atol=1e-15)
        assert np.sum(lo ** 2) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("wavelet", ["db4", "sym4"])
    @pytest.mark.parametrize("n", [1024, 1000, 37])
    def test_round_trip(self, wavelet, n):
        x = np.random.default_rng(n).standard_normal(n)
        d = dsp.swt_decompose(x, wavelet, 4)
        assert all(b.shape[-1] == d.padded_length for b in d.details)
        assert d.padded_length % 16 == 0
        y = dsp.swt_reconstruct(d)
        assert y.shape == x.shape
        assert np.max(np.abs(y - x)) < 1e-8

    def test_matches_pywt_up_to_shift(self):
        x = np.random.default_rng(2).standard_normal(256)
        d = dsp.swt_decompose(x, "db4", 3, mode="periodic")
        ref = pywt.swt(x, "db4", level=3, trim_approx=False, norm=False)
        # pywt lists levels deepest first as (approximation, detail) pairs
        for level in (1, 2, 3):
            ours = d.details[level - 1]
            theirs = ref[3 - level][1]
            errs = [np.max(np.abs(np.roll(ours, k) - theirs)) for k in range(-64, 65)]
            assert min(errs) < 1e-10

    def test_circular_shift_equivariance(self):
        x = np.random.default_rng(3).standard_normal(512)
        d = dsp.swt_decompose(x, "db4", 4, mode="periodic")
        ds = dsp.swt_decompose(np.roll(x, 5), "db4", 4, mode="periodic")
        for a, b in zip(d.details + [d.approximation], ds.details + [ds.approximation]):
            assert np.allclose(np.roll(a, 5), b, atol=1e-12)

    def test_zero_and_linearity(self):
        rng = np.random.default_rng(4)
        x, y = rng.standard_normal(300), rng.standard_normal(300)
        z = dsp.swt_decompose(np.zeros(300), "db4", 4)
        assert all(np.all(b == 0) for b in z.details) and np.all(z.approximation == 0)
        dx, dy = dsp.swt_decompose(x, "db4", 4), dsp.swt_decompose(y, "db4", 4)
        dxy = dsp.swt_decompose(2 * x - 3 * y, "db4", 4)
        for a, b, c in zip(dx.details, dy.details, dxy.details):
            assert np.max(np.abs(2 * a - 3 * b - c)) < 1e-10

    def test_details_removed_energy(self):
        x = np.random.default_rng(5).standard_normal(1024)
        d = dsp.swt_decompose(x, "db4", 4, mode="periodic")
        d.details = [np.zeros_like(b) for b in d.details]
        y = dsp.swt_reconstruct(d)
        assert np.sum(y ** 2) <= np.sum(x ** 2) + 1e-9

    def test_errors(self):
        with pytest.raises(ValueError):
            dsp.swt_decompose(np.zeros(64), "haar", 2)
        with pytest.raises(ValueError):
            dsp.swt_decompose(np.zeros(64), "db4", 0)
        d = dsp.swt_decompose(np.zeros(64), "db4", 2)
        d.details[1] = d.details[1][:-1]
        with pytest.raises(ValueError):
            dsp.swt_reconstruct(d)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(16, 600), st.integers(1, 5), st.sampled_from(["db4", "sym4"]))
    def test_round_trip_property(self, n, levels, wavelet):
        x = np.random.default_rng(n * 7 + levels).standard_normal(n)
        y = dsp.swt_reconstruct(dsp.swt_decompose(x, wavelet, levels))
        assert np.max(np.abs(y - x)) < 1e-8


class TestDenoise:
    def test_soft_threshold(self):
        out = dsp.soft_threshold(np.array([2.0, -2.0, 0.3]), 0.5)
        assert np.allclose(out, [1.5, -1.5, 0.0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50), st.floats(0, 100))
    def test_soft_threshold_contraction(self, values, t):
        c = np.array(values)
        assert np.all(np.abs(dsp.soft_threshold(c, t)) <= np.abs(c))

    def test_sine_gain(self):
        t = np.arange(5000) / RATE
        clean = np.sin(2 * np.pi * 5 * t)
        noisy = clean + np.random.default_rng(0).normal(0, 0.1, t.size)
        out = dsp.wavelet_denoise(noisy)
        gain = 20 * np.log10(np.sqrt(np.mean((noisy - clean) ** 2)) / np.sqrt(np.mean((out - clean) ** 2)))
        assert gain >= 3

    def test_noiseless_ecg_preserved(self):
        res = synth.generate(synth.SynthSpec(ClassLabel.Normal, 10, 70, seed=1), "x")
        x = res.clean[1]
        y = dsp.wavelet_denoise(x)
        assert np.sqrt(np.mean((y - x) ** 2)) <= 0.02 * np.sqrt(np.mean(x ** 2))

    def test_per_lead(self):
        x = np.random.default_rng(1).normal(0, 1, (3, 1000))
        x[1] *= 10
        y = dsp.wavelet_denoise(x)
        assert np.allclose(y[1], dsp.wavelet_denoise(x[1]))


class TestResample:
    def test_length(self):
        assert dsp.resample_rational(np.zeros(3000), 7, 50).shape == (420,)
        assert dsp.resample_rational(np.zeros((12, 3001)), 7, 50).shape == (12, 421)

    def test_identity(self):
        x = np.random.default_rng(0).standard_normal(100)
        y = dsp.resample_rational(x, 1, 1)
        assert np.array_equal(x, y) and y is not x

    def test_not_coprime(self):
        with pytest.raises(ValueError):
            dsp.resample_rational(np.zeros(100), 14, 100)

    def test_sine_amplitude_and_frequency(self):
        t = np.arange(5000) / RATE
        y = dsp.resample_rational(np.sin(2 * np.pi * 10 * t), 7, 50)
        spec = np.abs(np.fft.rfft(y * np.hanning(y.size)))
        freqs = np.fft.rfftfreq(y.size, 1 / 70)
        assert freqs[np.argmax(spec)] == pytest.approx(10.0, abs=0.15)
        # 10 Hz at 70 Hz gives a fixed 7-sample phase grid, so compare against the
        # sine at the output instants rather than its peak-to-peak
        ty = np.arange(y.size) / 70
        ref = np.sin(2 * np.pi * 10 * ty)
        assert np.max(np.abs(y[50:-50] - ref[50:-50])) < 0.01

    def test_alignment(self):
        # a slow ramp keeps its value at matching instants
        t = np.arange(5000) / RATE
        x = np.sin(2 * np.pi * 0.5 * t)
        y = dsp.resample_rational(x, 7, 50)
        ty = np.arange(y.size) / 70
        err = np.abs(y - np.sin(2 * np.pi * 0.5 * ty))
        assert np.max(err[5:-5]) < 1e-3 and np.max(err) < 1e-2

    def test_round_trip_band_limited(self):
        # content kept well inside the 35 Hz Nyquist of the low rate
        rng = np.random.default_rng(3)
        t = np.arange(5000) / RATE
        x = sum(rng.uniform(0.2, 1) * np.sin(2 * np.pi * f * t + rng.uniform(0, 6))
                for f in (1.3, 4.0, 7.7, 11.0, 15.0))
        back = dsp.resample_rational(dsp.resample_rational(x, 7, 50), 50, 7)[: x.size]
        sl = slice(250, -250)
        err = np.sqrt(np.mean((back[sl] - x[sl]) ** 2)) / np.sqrt(np.mean(x[sl] ** 2))
        assert err < 0.02

    def test_round_trip_band_edge(self):
        # the mandated 501-tap Kaiser design keeps 2% up to about 20 Hz, not 30 Hz
        t = np.arange(10000) / RATE
        sl = slice(500, -500)
        errs = {}
        for f in (20.0, 30.0):
            x = np.sin(2 * np.pi * f * t)
            back = dsp.resample_rational(dsp.resample_rational(x, 7, 50), 50, 7)[: x.size]
            errs[f] = np.sqrt(np.mean((back[sl] - x[sl]) ** 2) / np.mean(x[sl] ** 2))
        assert errs[20.0] < 0.02
        assert errs[30.0] > 0.2
