import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecglstm import segmenter
from ecglstm.core import ClassLabel, EcgRecording
from ecglstm.segmenter import BeatAnnotation, LabelConfig

RATE = 500.0


def _rec(n, seed=0):
    return EcgRecording("P", RATE, np.random.default_rng(seed).standard_normal((12, n)))


def _peaks(rr_s, start=0.3):
    t = start + np.concatenate([[0.0], np.cumsum(rr_s)])
    return np.round(t * RATE).astype(int)


def _brute_windows(n):
    kept = list(range(2, n - 2)) if n > 4 else []
    return [kept[i:i + 4] for i in range(len(kept) - 3)]


@pytest.mark.parametrize("n", range(0, 101))
def test_segment_count(n):
    rr = np.full(max(n - 1, 0), 0.6)
    peaks = _peaks(rr)[:n] if n else np.zeros(0, dtype=int)
    rec = _rec(int(0.3 * RATE + 0.6 * RATE * max(n, 1) + RATE))
    segs = segmenter.extract_segments(rec, peaks)
    assert len(segs) == max(0, n - 7) == len(_brute_windows(n))


def test_24_peaks_17_segments():
    peaks = _peaks(np.full(23, 0.7))
    assert len(segmenter.extract_segments(_rec(peaks[-1] + 400), peaks)) == 17


def test_boundaries_and_overlap():
    rng = np.random.default_rng(1)
    peaks = _peaks(rng.uniform(0.5, 1.0, 19))
    rec = _rec(peaks[-1] + 300)
    segs = segmenter.extract_segments(rec, peaks)
    bounds = segmenter.segment_bounds(peaks, rec.sample_count)
    for i, (seg, (start, stop, k)) in enumerate(zip(segs, bounds)):
        assert 0 <= start < stop <= rec.sample_count
        assert np.array_equal(seg.samples, rec.samples[:, start:stop])
        assert tuple(np.array(seg.peak_indices) + start) == tuple(peaks[k:k + 4])
        if 0 < i < len(segs) - 1:
            assert start == (peaks[k - 1] + peaks[k]) // 2
            assert stop == (peaks[k + 3] + peaks[k + 4]) // 2 + 1
        if i:
            # consecutive windows share three beats
            assert bounds[i - 1][2] + 1 == k
    first, last = bounds[0], bounds[-1]
    assert first[0] == peaks[2] - (peaks[3] - peaks[2]) // 2
    assert last[1] == peaks[-3] + (peaks[-3] - peaks[-4]) // 2 + 1


def test_clamped_to_recording():
    peaks = np.array([0, 300, 600, 650, 900, 1200, 1500, 1750])
    segs = segmenter.extract_segments(_rec(1760), peaks)
    assert len(segs) == 1 and segs[0].samples.shape[1] > 0


def test_bad_peaks():
    with pytest.raises(ValueError):
        segmenter.extract_segments(_rec(1000), [10, 5, 20, 30, 40, 50, 60, 70])
    with pytest.raises(ValueError):
        segmenter.extract_segments(_rec(100), [10, 20, 30, 40, 50, 60, 70, 100])


class TestAnnotate:
    def test_example(self):
        notes = segmenter.annotate_beats(_peaks([0.8, 0.8, 0.8, 0.5, 1.1, 0.8]), RATE, 0.85)
        assert [n.premature for n in notes] == [False, False, False, False, True, False, False]
        assert notes[0].rr_before is None and notes[-1].rr_after is None
        assert notes[4].rr_before == pytest.approx(0.5)

    def test_regular_and_zero_factor(self):
        notes = segmenter.annotate_beats(_peaks(np.full(12, 0.75)), RATE)
        assert not any(n.premature for n in notes)
        rng = np.random.default_rng(0)
        notes = segmenter.annotate_beats(_peaks(rng.uniform(0.3, 1.5, 30)), RATE, 0.0)
        assert not any(n.premature for n in notes)

    def test_too_few(self):
        with pytest.raises(ValueError):
            segmenter.annotate_beats([1, 2], RATE)

    def test_history_window(self):
        # the running median only sees the previous 8 intervals
        rr = [0.5] * 10 + [1.0] * 8 + [0.8]
        notes = segmenter.annotate_beats(_peaks(rr), RATE, 0.85, history=8)
        assert notes[-1].premature  # 0.8 < 0.85 * 1.0
        notes = segmenter.annotate_beats(_peaks(rr), RATE, 0.85, history=30)
        assert not notes[-1].premature


def _segs_and_notes(rr):
    peaks = _peaks(rr)
    rec = _rec(peaks[-1] + 400)
    return segmenter.extract_segments(rec, peaks), segmenter.annotate_beats(peaks, RATE)


class TestLabel:
    def test_inherit(self):
        segs, notes = _segs_and_notes(np.random.default_rng(0).uniform(0.5, 1.2, 20))
        for parent in (ClassLabel.RBBB, ClassLabel.Normal, ClassLabel.STE, ClassLabel.I_AVB):
            out = segmenter.label_segments(segs, notes, parent)
            assert {s.label for s in out} == {parent}

    def test_premature(self):
        rr = [0.8] * 6 + [0.5, 1.1] + [0.8] * 12
        segs, notes = _segs_and_notes(rr)
        out = segmenter.label_segments(segs, notes, ClassLabel.PVC)
        flagged = {i for i, n in enumerate(notes) if n.premature}
        assert flagged == {7}
        for i, s in enumerate(out):
            has = any(k in flagged for k in range(i + 2, i + 6))
            assert s.label is (ClassLabel.PVC if has else ClassLabel.Normal)
        assert {s.label for s in out} == {ClassLabel.PVC, ClassLabel.Normal}

    def test_af_example(self):
        assert segmenter.rr_irregularity([0.60, 0.95, 0.55, 1.00, 0.70]) == pytest.approx(0.375 / 0.76)
        rr = [0.8, 0.8, 0.60, 0.95, 0.55, 1.00, 0.70, 0.8]
        segs, notes = _segs_and_notes(rr)
        assert len(segs) == 2
        out = segmenter.label_segments(segs, notes, ClassLabel.AF)
        assert out[0].label is ClassLabel.AF

    def test_af_regular_becomes_normal(self):
        segs, notes = _segs_and_notes(np.full(14, 0.8))
        out = segmenter.label_segments(segs, notes, ClassLabel.AF)
        assert {s.label for s in out} == {ClassLabel.Normal}

    def test_retained_or_full_annotations(self):
        segs, notes = _segs_and_notes(np.random.default_rng(3).uniform(0.5, 1.2, 15))
        a = segmenter.label_segments(segs, notes, ClassLabel.AF)
        b = segmenter.label_segments(segs, notes[2:-2], ClassLabel.AF)
        assert [s.label for s in a] == [s.label for s in b]
        with pytest.raises(ValueError):
            segmenter.label_segments(segs, notes[:-1], ClassLabel.AF)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0.35, 1.6), min_size=8, max_size=30), st.floats(0.01, 100))
    def test_amplitude_invariant(self, rr, k):
        peaks = _peaks(rr)
        rec = _rec(peaks[-1] + 400)
        notes = segmenter.annotate_beats(peaks, RATE)
        a = segmenter.label_segments(segmenter.extract_segments(rec, peaks), notes, ClassLabel.AF)
        scaled = rec.with_samples(rec.samples * k)
        b = segmenter.label_segments(segmenter.extract_segments(scaled, peaks), notes, ClassLabel.AF)
        assert [s.label for s in a] == [s.label for s in b]


def test_downsample_segment():
    segs = segmenter.extract_segments(_rec(6000), _peaks(np.full(10, 0.7)))
    d = segmenter.downsample_segment(segs[0])
    assert d.sampling_rate == pytest.approx(70.0)
    assert d.length == -(-segs[0].length * 7 // 50)
    assert all(p == min(d.length - 1, round(q * 7 / 50)) for p, q in zip(d.peak_indices, segs[0].peak_indices))


def test_segment_store_round_trip(tmp_path):
    rec = _rec(8000).with_samples(np.float32(_rec(8000).samples).astype(float))
    segs = segmenter.extract_segments(rec, _peaks(np.full(12, 0.7)), ClassLabel.LBBB, True)
    segs = segs + [s.__class__(s.parent_id, s.samples, s.sampling_rate, s.peak_indices, ClassLabel.PAC, False)
                   for s in segs]
    segmenter.write_segment_store(segs, tmp_path)
    lines = (tmp_path / "manifest.csv").read_text().splitlines()
    assert lines[0] == "segment_id,parent_id,label,preprocessed,peak0,peak1,peak2,peak3"
    assert lines[1].startswith("P_p000,P,LBBB,1,")
    back = segmenter.read_segment_store(tmp_path)
    assert len(back) == len(segs)
    for a, b in zip(segs, back):
        assert np.array_equal(a.samples, b.samples) and a.peak_indices == b.peak_indices
        assert (a.label, a.preprocessed, a.parent_id) == (b.label, b.preprocessed, b.parent_id)
