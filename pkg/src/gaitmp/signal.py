"""Sensor-sample projection and max-amplitude envelopes.

A 6-dof IMU sample is reduced to one scalar per step of the pipeline: pick a
source (accel or gyro) and a channel (single axis or a vector norm). Step
detection then runs on the rectified running-max envelope of that scalar.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .mp import TimeSeries

SOURCES = ("accel", "gyro", "both")
CHANNELS = ("x", "y", "z", "l1", "l2", "linf")

DEFAULT_ENVELOPE_MS = 100.0


@dataclass(frozen=True)
class SensorSample:
    """One IMU reading: time in seconds, accel in m/s^2, gyro in deg/s."""

    t: float
    accel: tuple[float, float, float]
    gyro: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "accel", tuple(float(v) for v in self.accel))
        object.__setattr__(self, "gyro", tuple(float(v) for v in self.gyro))
        if len(self.accel) != 3 or len(self.gyro) != 3:
            raise ValueError("accel and gyro must be 3-vectors")
        vals = (self.t, *self.accel, *self.gyro)
        if not all(np.isfinite(v) for v in vals):
            raise DataError("sensor sample contains non-finite values")


@dataclass(frozen=True)
class SignalSelector:
    """Which scalar to extract from a sample, e.g. gyro:linf."""

    source: str = "gyro"
    channel: str = "linf"

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")
        if self.channel not in CHANNELS:
            raise ValueError(f"channel must be one of {CHANNELS}, got {self.channel!r}")

    @classmethod
    def parse(cls, text: str) -> "SignalSelector":
        """Build from the 'source:channel' shorthand used on the command line."""
        parts = text.lower().split(":")
        if len(parts) != 2:
            raise ValueError(f"selector must look like 'gyro:linf', got {text!r}")
        return cls(parts[0], parts[1])

    def __str__(self) -> str:
        return f"{self.source}:{self.channel}"


def _reduce(vec: tuple[float, float, float], channel: str) -> float:
    if channel == "x":
        return vec[0]
    if channel == "y":
        return vec[1]
    if channel == "z":
        return vec[2]
    a = np.abs(vec)
    if channel == "l1":
        return float(a.sum())
    if channel == "l2":
        return float(np.sqrt((a * a).sum()))
    return float(a.max())


def project(sample: SensorSample, sel: SignalSelector) -> float:
    """Reduce one sample to a scalar; 'both' must be split per source first."""
    if sel.source == "both":
        raise ValueError("project one source at a time; 'both' is a downstream concept")
    vec = sample.accel if sel.source == "accel" else sample.gyro
    return _reduce(vec, sel.channel)


def project_samples(samples, sel: SignalSelector, sample_rate_hz: float) -> TimeSeries:
    values = np.array([project(s, sel) for s in samples], dtype=np.float64)
    return TimeSeries(values, sample_rate_hz)


def envelope_window_samples(window_ms: float, sample_rate_hz: float) -> int:
    if not (window_ms > 0):
        raise ValueError("window_ms must be positive")
    return max(1, round(window_ms * sample_rate_hz / 1000.0))


def envelope(series: TimeSeries, window_ms: float = DEFAULT_ENVELOPE_MS) -> TimeSeries:
    """Centered running max of |series| over a window_ms-wide window.

    Edges use the truncated window, so output length equals input length and
    no phase lag is introduced.
    """
    w = envelope_window_samples(window_ms, series.sample_rate_hz)
    x = np.abs(series.values)
    if w == 1:
        return TimeSeries(x, series.sample_rate_hz)
    left = (w - 1) // 2
    right = w // 2
    padded = np.pad(x, (left, right), constant_values=-np.inf)
    out = np.lib.stride_tricks.sliding_window_view(padded, w).max(axis=1)
    return TimeSeries(out, series.sample_rate_hz)


@dataclass
class StreamingEnvelope:
    """Online form of envelope(); emits each value once its window closes.

    A centered window of w samples needs w//2 future samples before position
    i is final, so push(x_k) finalizes position k - w//2 (when that exists)
    and flush() drains the right-truncated tail.
    """

    window_samples: int
    _buf: deque = field(default_factory=deque, repr=False)
    _next_in: int = 0
    _next_out: int = 0

    def __post_init__(self):
        if self.window_samples < 1:
            raise ValueError("window_samples must be >= 1")

    @property
    def left(self) -> int:
        return (self.window_samples - 1) // 2

    @property
    def right(self) -> int:
        return self.window_samples // 2

    def push(self, value: float) -> list[float]:
        """Absorb one sample; return the envelope values finalized by it."""
        if not np.isfinite(value):
            raise DataError("non-finite sample in envelope stream")
        self._buf.append((self._next_in, abs(float(value))))
        self._next_in += 1
        if len(self._buf) > self.window_samples:
            self._buf.popleft()
        if self._next_in - 1 >= self._next_out + self.right:
            self._next_out += 1
            return [max(v for _, v in self._buf)]
        return []

    def flush(self) -> list[float]:
        """Finalize the trailing positions whose windows ran past the end."""
        out = []
        while self._next_out < self._next_in:
            i = self._next_out
            while self._buf and self._buf[0][0] < i - self.left:
                self._buf.popleft()
            out.append(max(v for _, v in self._buf))
            self._next_out += 1
        return out
