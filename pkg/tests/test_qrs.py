import numpy as np
import pytest

from ecglstm import dsp, qrs, synth
from ecglstm.core import ClassLabel, EcgRecording

RATE = 500.0
TOL = int(0.05 * RATE)


def _lead2(res):
    return dsp.highpass(res.recording.samples[1], RATE)


def test_noiseless_all_matched(normal30):
    peaks = qrs.detect_r_peaks(normal30.recording.samples[1], RATE)
    tp, fp, fn = qrs.match_peaks(peaks.indices, normal30.peaks, TOL)
    assert fp == 0 and fn == 0
    assert len(peaks) == len(normal30.peaks)


def test_flat_and_short():
    assert len(qrs.detect_r_peaks(np.zeros(5000), RATE)) == 0
    assert len(qrs.detect_r_peaks(np.full(5000, 0.3), RATE)) == 0
    with pytest.raises(ValueError):
        qrs.detect_r_peaks(np.zeros(999), RATE)


def test_refractory_and_order(normal30):
    p = qrs.detect_r_peaks(normal30.recording.samples[1], RATE).indices
    assert np.all(np.diff(p) >= int(0.2 * RATE))


@pytest.mark.parametrize("k", [0.01, 0.5, 7.0, 300.0])
def test_amplitude_invariance(k):
    res = synth.generate(synth.SynthSpec(ClassLabel.PVC, 20, 80, noise_sigma=0.02, seed=4), "x")
    x = _lead2(res)
    base = qrs.detect_r_peaks(x, RATE).indices
    assert np.array_equal(qrs.detect_r_peaks(k * x, RATE).indices, base)


@pytest.mark.parametrize("m", [1, 37, 250, 500])
def test_shift_equivariance(m):
    res = synth.generate(synth.SynthSpec(ClassLabel.Normal, 20, 70, noise_sigma=0.01, seed=2), "x")
    x = _lead2(res)
    base = qrs.detect_r_peaks(x, RATE).indices
    shifted = qrs.detect_r_peaks(np.concatenate([np.full(m, x[0]), x]), RATE).indices
    assert shifted.size == base.size
    assert np.max(np.abs(shifted - m - base)) <= 1


def test_rate_rescaling():
    res = synth.generate(synth.SynthSpec(ClassLabel.Normal, 20, 70, seed=2, rate=250), "x")
    p = qrs.detect_r_peaks(res.recording.samples[1], 250.0).indices
    tp, fp, fn = qrs.match_peaks(p, res.peaks, int(0.05 * 250))
    assert fp == 0 and fn == 0


@pytest.mark.parametrize("arch", list(ClassLabel))
def test_archetypes_noisy(arch):
    res = synth.generate(synth.SynthSpec(arch, 20, 90, noise_sigma=0.04, wander_amplitude=0.3,
                                         seed=int(arch) + 10), "x")
    p = qrs.detect_r_peaks(_lead2(res), RATE).indices
    tp, fp, fn = qrs.match_peaks(p, res.peaks, TOL)
    assert fp == 0 and fn <= 1


def test_config_snapshot():
    cfg = qrs.QrsConfig(threshold_factor=0.3)
    pl = qrs.detect_r_peaks(np.zeros(2000), RATE, cfg, "r", 1)
    assert pl.config["threshold_factor"] == 0.3 and pl.lead_name == "II" and pl.record_id == "r"


class TestLeadChoice:
    def test_default_lead_ii(self, normal30):
        lead, x = qrs.fuse_lead_choice(normal30.recording)
        assert lead == 1 and np.array_equal(x, normal30.recording.samples[1])

    def test_fallback(self, normal30):
        s = normal30.recording.samples.copy()
        s[1] = 0.0
        s[7] *= 3  # V2 becomes the strongest lead
        lead, _ = qrs.fuse_lead_choice(EcgRecording("x", RATE, s))
        assert lead == 7

    def test_bad_lead(self, normal30):
        with pytest.raises(ValueError):
            qrs.fuse_lead_choice(normal30.recording, 12)


def test_match_peaks():
    assert qrs.match_peaks([10, 100, 205], [12, 200, 300], 5) == (2, 1, 1)
    assert qrs.match_peaks([], [1, 2], 5) == (0, 0, 2)
    assert qrs.match_peaks([10, 11], [10], 5) == (1, 1, 0)
