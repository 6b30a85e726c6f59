"""Adaptive-threshold step segmentation over an amplitude envelope.

A step is a run of envelope samples above an adaptive threshold, widened by
an onset offset on the left and a release offset on the right. Runs whose
widened extents overlap are merged; merged runs shorter than a minimum
duration are discarded as noise.

The batch path (detect_boundaries) and the streaming path (feed/flush) must
produce identical segment lists for the same input and threshold. Streaming
therefore defers events until their outcome is settled: a "started" event is
held back until the segment is guaranteed to survive the duration filter, and
an "ended" event until no future rise can merge into the segment. Both may be
emitted with indices behind the current stream position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mp import TimeSeries

DEFAULT_THRESHOLD_FRACTION = 0.5
DEFAULT_INITIAL_THRESHOLD = 1e12
DEFAULT_THRESHOLD_FLOOR = 1e-6
DEFAULT_ONSET_MS = 50.0
DEFAULT_RELEASE_MS = 50.0
DEFAULT_MIN_STEP_MS = 150.0

STARTED = "started"
ENDED = "ended"


@dataclass(frozen=True)
class StepSegment:
    """Half-open sample range [start, end) covering one step."""

    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"bad segment [{self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class StepEvent:
    kind: str
    index: int

    def __post_init__(self):
        if self.kind not in (STARTED, ENDED):
            raise ValueError(f"unknown event kind {self.kind!r}")


def _env_values(env) -> np.ndarray:
    if isinstance(env, TimeSeries):
        return env.values
    return np.asarray(env, dtype=np.float64)


class StepDetector:
    """Threshold-crossing segmenter with identical batch and streaming paths.

    The threshold starts prohibitively high so nothing is detected until
    recompute_threshold has seen real history; it then tracks a fraction of
    the history envelope maximum, clamped below by an absolute floor.
    """

    def __init__(
        self,
        sample_rate_hz: float,
        threshold_fraction: float = DEFAULT_THRESHOLD_FRACTION,
        initial_threshold: float = DEFAULT_INITIAL_THRESHOLD,
        threshold_floor: float = DEFAULT_THRESHOLD_FLOOR,
        onset_ms: float = DEFAULT_ONSET_MS,
        release_ms: float = DEFAULT_RELEASE_MS,
        min_step_ms: float = DEFAULT_MIN_STEP_MS,
    ):
        if not (sample_rate_hz > 0):
            raise ValueError("sample_rate_hz must be positive")
        if not (0 < threshold_fraction <= 1):
            raise ValueError("threshold_fraction must be in (0, 1]")
        if min(onset_ms, release_ms, min_step_ms, threshold_floor) < 0:
            raise ValueError("offsets, min duration and floor must be non-negative")
        self.sample_rate_hz = sample_rate_hz
        self.threshold_fraction = threshold_fraction
        self.initial_threshold = initial_threshold
        self.threshold_floor = threshold_floor
        self.onset = round(onset_ms * sample_rate_hz / 1000.0)
        self.release = round(release_ms * sample_rate_hz / 1000.0)
        self.min_step = round(min_step_ms * sample_rate_hz / 1000.0)
        self.threshold = initial_threshold
        self.reset_stream()

    def reset_stream(self) -> None:
        self._phase = "idle"  # idle | in_step | pending
        self._cur_start = 0
        self._started_emitted = False
        self._pend_end = 0
        self._next_index = 0

    # -- threshold ---------------------------------------------------------

    def recompute_threshold(self, history_envelope=None) -> float:
        """Track a fraction of the history envelope max; empty history keeps
        the (high) initial threshold so cold start detects nothing."""
        values = None if history_envelope is None else _env_values(history_envelope)
        if values is None or values.size == 0:
            self.threshold = self.initial_threshold
        else:
            self.threshold = max(
                self.threshold_fraction * float(values.max()), self.threshold_floor
            )
        return self.threshold

    # -- batch -------------------------------------------------------------

    def detect_boundaries(self, env) -> list[StepSegment]:
        """Segment a complete envelope with the current threshold."""
        x = _env_values(env)
        n = x.size
        above = x > self.threshold
        raw: list[tuple[int, int]] = []
        rise = -1
        in_run = False
        for i in range(n):
            if above[i] and not in_run:
                in_run = True
                rise = i
            elif not above[i] and in_run:
                in_run = False
                raw.append((max(0, rise - self.onset), min(n, i + self.release)))
        if in_run:
            raw.append((max(0, rise - self.onset), n))

        merged: list[list[int]] = []
        for s, e in raw:
            if merged and s < merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], e)
            else:
                merged.append([s, e])
        return [StepSegment(s, e) for s, e in merged if e - s >= self.min_step]

    # -- streaming ---------------------------------------------------------

    def _finalize_pending(self) -> list[StepEvent]:
        events = []
        if self._pend_end - self._cur_start >= self.min_step:
            if not self._started_emitted:
                events.append(StepEvent(STARTED, self._cur_start))
            events.append(StepEvent(ENDED, self._pend_end))
        self._phase = "idle"
        self._started_emitted = False
        return events

    def feed(self, envelope_sample: float, index: int) -> tuple[StepEvent, ...]:
        """Advance one envelope sample; may return 0..3 settled events."""
        if index != self._next_index:
            raise ValueError(f"expected index {self._next_index}, got {index}")
        self._next_index += 1
        events: list[StepEvent] = []

        # Once the merge horizon is past, no future rise can attach to the
        # pending segment; settle it.
        if self._phase == "pending" and index >= self._pend_end + self.onset:
            events.extend(self._finalize_pending())

        above = envelope_sample > self.threshold
        if self._phase == "idle":
            if above:
                self._phase = "in_step"
                self._cur_start = max(0, index - self.onset)
                self._started_emitted = False
        elif self._phase == "in_step":
            if not above:
                self._phase = "pending"
                self._pend_end = index + self.release
        else:  # pending
            if above:
                new_start = max(0, index - self.onset)
                if new_start < self._pend_end:
                    # widened extents overlap: same step continues
                    self._phase = "in_step"
                else:
                    events.extend(self._finalize_pending())
                    self._phase = "in_step"
                    self._cur_start = new_start
                    self._started_emitted = False

        # A segment survives the duration filter as soon as the samples seen
        # so far guarantee the minimum length, whatever happens next.
        if (
            self._phase == "in_step"
            and not self._started_emitted
            and index + 1 - self._cur_start >= self.min_step
        ):
            events.append(StepEvent(STARTED, self._cur_start))
            self._started_emitted = True
        return tuple(events)

    def flush(self) -> tuple[StepEvent, ...]:
        """End of stream: settle whatever is still open and reset."""
        n = self._next_index
        events: list[StepEvent] = []
        if self._phase == "in_step":
            self._pend_end = n
            events.extend(self._finalize_pending())
        elif self._phase == "pending":
            self._pend_end = min(self._pend_end, n)
            events.extend(self._finalize_pending())
        self.reset_stream()
        return tuple(events)


def segments_from_events(events) -> list[StepSegment]:
    """Pair started/ended events back into ordered segments."""
    segments = []
    start = None
    for ev in events:
        if ev.kind == STARTED:
            if start is not None:
                raise ValueError("started event while a step is already open")
            start = ev.index
        else:
            if start is None:
                raise ValueError("ended event without a started event")
            segments.append(StepSegment(start, ev.index))
            start = None
    if start is not None:
        raise ValueError("stream ended with an unterminated step")
    return segments
