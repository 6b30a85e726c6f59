import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitmp.steps import (
    StepDetector,
    StepEvent,
    StepSegment,
    segments_from_events,
)


def detector(rate=100.0, **kw):
    return StepDetector(sample_rate_hz=rate, **kw)


def pulse_train(n_pulses=5, period=100, width=30, amp=200.0, n_pad=50):
    """Well-separated unimodal bumps, one per step, plus impact positions."""
    n = n_pad * 2 + n_pulses * period
    x = np.zeros(n)
    impacts = []
    for k in range(n_pulses):
        c = n_pad + k * period + period // 2
        i = np.arange(n)
        x += amp * np.exp(-0.5 * ((i - c) / (width / 4)) ** 2)
        impacts.append(c)
    return x, impacts


def stream_segments(det, env):
    events = []
    for i, v in enumerate(env):
        events.extend(det.feed(v, i))
    events.extend(det.flush())
    return segments_from_events(events), events


class TestThreshold:
    def test_empty_history_keeps_initial(self):
        det = detector(initial_threshold=1e9)
        assert det.recompute_threshold(None) == 1e9
        assert det.recompute_threshold(np.array([])) == 1e9

    def test_fraction_of_max(self):
        det = detector()
        assert det.recompute_threshold(np.array([10.0, 200.0, 50.0])) == 100.0

    def test_zero_history_clamps_to_floor(self):
        det = detector()
        assert det.recompute_threshold(np.zeros(100)) == 1e-6

    def test_zero_history_without_floor(self):
        det = detector(threshold_floor=0.0)
        assert det.recompute_threshold(np.zeros(100)) == 0.0

    def test_fraction_validation(self):
        with pytest.raises(ValueError):
            detector(threshold_fraction=0.0)
        with pytest.raises(ValueError):
            detector(threshold_fraction=1.5)


class TestBatchBoundaries:
    def test_flat_zero_envelope(self):
        det = detector()
        det.threshold = 1.0
        assert det.detect_boundaries(np.zeros(500)) == []

    def test_rectangular_pulse_exact_extent(self):
        det = detector(onset_ms=0.0, release_ms=0.0, min_step_ms=0.0)
        det.threshold = 1.0
        env = np.zeros(100)
        env[40:60] = 5.0
        assert det.detect_boundaries(env) == [StepSegment(40, 60)]

    def test_offsets_widen_segment(self):
        det = detector(onset_ms=50.0, release_ms=50.0, min_step_ms=0.0)  # 5 samples each
        det.threshold = 1.0
        env = np.zeros(100)
        env[40:60] = 5.0
        assert det.detect_boundaries(env) == [StepSegment(35, 65)]

    def test_offsets_clamp_to_data(self):
        det = detector(onset_ms=50.0, release_ms=50.0, min_step_ms=0.0)
        det.threshold = 1.0
        env = np.zeros(50)
        env[2:48] = 5.0
        assert det.detect_boundaries(env) == [StepSegment(0, 50)]

    def test_short_blip_dropped(self):
        det = detector(onset_ms=0.0, release_ms=0.0, min_step_ms=150.0)  # 15 samples
        det.threshold = 1.0
        env = np.zeros(100)
        env[40:50] = 5.0  # 10 samples < 15
        assert det.detect_boundaries(env) == []

    def test_close_pulses_merge(self):
        det = detector(onset_ms=50.0, release_ms=50.0, min_step_ms=0.0)
        det.threshold = 1.0
        env = np.zeros(200)
        env[50:70] = 5.0
        env[75:95] = 5.0  # gap 5 < onset+release
        assert det.detect_boundaries(env) == [StepSegment(45, 100)]

    def test_separated_pulses_stay_apart(self):
        det = detector(onset_ms=50.0, release_ms=50.0, min_step_ms=0.0)
        det.threshold = 1.0
        env = np.zeros(300)
        env[50:70] = 5.0
        env[120:140] = 5.0
        assert det.detect_boundaries(env) == [StepSegment(45, 75), StepSegment(115, 145)]

    def test_five_pulses_cover_impacts(self):
        env, impacts = pulse_train(n_pulses=5)
        det = detector()
        det.recompute_threshold(env)
        segs = det.detect_boundaries(env)
        assert len(segs) == 5
        for seg, c in zip(segs, impacts):
            assert seg.start <= c < seg.end

    def test_open_segment_at_end_is_kept(self):
        det = detector(onset_ms=0.0, release_ms=0.0, min_step_ms=0.0)
        det.threshold = 1.0
        env = np.zeros(100)
        env[80:] = 5.0
        assert det.detect_boundaries(env) == [StepSegment(80, 100)]

    def test_monotone_in_threshold_fraction_on_pulse_train(self):
        env, _ = pulse_train(n_pulses=6, amp=200.0)
        counts = []
        for frac in (0.2, 0.4, 0.6, 0.8, 0.99):
            det = detector(threshold_fraction=frac)
            det.recompute_threshold(env)
            counts.append(len(det.detect_boundaries(env)))
        assert counts == sorted(counts, reverse=True)


class TestStreaming:
    def test_single_pulse_event_pair(self):
        det = detector(onset_ms=0.0, release_ms=0.0, min_step_ms=0.0)
        det.threshold = 1.0
        env = np.zeros(100)
        env[40:60] = 5.0
        segs, events = stream_segments(det, env)
        assert [e.kind for e in events] == ["started", "ended"]
        assert segs == [StepSegment(40, 60)]

    def test_sub_threshold_stream_silent(self):
        det = detector()
        det.threshold = 10.0
        segs, events = stream_segments(det, np.ones(200))
        assert events == [] and segs == []

    def test_out_of_order_index_rejected(self):
        det = detector()
        det.feed(0.0, 0)
        with pytest.raises(ValueError):
            det.feed(0.0, 2)

    def test_started_deferred_until_survival_is_certain(self):
        det = detector(onset_ms=0.0, release_ms=0.0, min_step_ms=150.0)
        det.threshold = 1.0
        env = np.zeros(100)
        env[20:60] = 5.0
        emitted_at = {}
        for i, v in enumerate(env):
            for ev in det.feed(v, i):
                emitted_at[ev] = i
        det.flush()
        started = StepEvent("started", 20)
        # guaranteed length 15 is reached at sample 34, not at the rise
        assert emitted_at[started] == 34

    def test_short_blip_emits_nothing(self):
        det = detector(onset_ms=0.0, release_ms=0.0, min_step_ms=150.0)
        det.threshold = 1.0
        env = np.zeros(100)
        env[40:50] = 5.0
        segs, events = stream_segments(det, env)
        assert events == [] and segs == []

    def test_merge_rescues_short_run(self):
        # each run is 10 < min 15, but the merged extent is 26 >= 15
        det = detector(onset_ms=30.0, release_ms=30.0, min_step_ms=150.0)
        det.threshold = 1.0
        env = np.zeros(200)
        env[50:60] = 5.0
        env[63:73] = 5.0
        batch = det.detect_boundaries(env)
        assert batch == [StepSegment(47, 76)]
        segs, _ = stream_segments(det, env)
        assert segs == batch

    @pytest.mark.parametrize("case", ["mid", "end_open", "end_pending", "touching"])
    def test_stream_equals_batch_handpicked(self, case):
        det = detector(onset_ms=50.0, release_ms=50.0, min_step_ms=150.0)
        det.threshold = 1.0
        env = np.zeros(150)
        if case == "mid":
            env[30:55] = 5.0
            env[90:120] = 5.0
        elif case == "end_open":
            env[120:] = 5.0
        elif case == "end_pending":
            env[100:145] = 5.0
        elif case == "touching":
            env[30:50] = 5.0
            env[60:80] = 5.0  # widened: [25,55) and [55,85) touch, no merge
        batch = det.detect_boundaries(env)
        segs, _ = stream_segments(det, env)
        assert segs == batch
        if case == "touching":
            assert len(segs) == 2

    def test_pulse_train_equivalence(self):
        env, _ = pulse_train(n_pulses=7)
        det = detector()
        det.recompute_threshold(env)
        batch = det.detect_boundaries(env)
        segs, _ = stream_segments(det, env)
        assert segs == batch == sorted(batch, key=lambda s: s.start)

    @settings(max_examples=120, deadline=None)
    @given(
        seed=st.integers(0, 100_000),
        n=st.integers(1, 160),
        onset=st.integers(0, 8),
        release=st.integers(0, 8),
        min_step=st.integers(0, 25),
    )
    def test_stream_equals_batch_fuzzed(self, seed, n, onset, release, min_step):
        rng = np.random.default_rng(seed)
        # blocky envelopes exercise crossings, merges and the duration filter
        env = rng.choice([0.0, 0.5, 2.0, 3.0], size=n, p=[0.4, 0.2, 0.2, 0.2])
        det = detector(
            rate=1000.0,
            onset_ms=float(onset),
            release_ms=float(release),
            min_step_ms=float(min_step),
        )
        det.threshold = 1.0
        batch = det.detect_boundaries(env)
        segs, _ = stream_segments(det, env)
        assert segs == batch
        for a, b in zip(batch, batch[1:]):
            assert a.end <= b.start


class TestEventReassembly:
    def test_round_trip(self):
        events = [
            StepEvent("started", 3),
            StepEvent("ended", 20),
            StepEvent("started", 31),
            StepEvent("ended", 47),
        ]
        assert segments_from_events(events) == [StepSegment(3, 20), StepSegment(31, 47)]

    def test_unbalanced_events_rejected(self):
        with pytest.raises(ValueError):
            segments_from_events([StepEvent("ended", 5)])
        with pytest.raises(ValueError):
            segments_from_events([StepEvent("started", 5)])
        with pytest.raises(ValueError):
            segments_from_events([StepEvent("started", 5), StepEvent("started", 9)])
