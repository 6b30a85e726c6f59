"""Recording and annotation file formats plus a synthetic gait generator.

Recordings are 6-channel IMU CSVs (time, 3-axis accel, 3-axis gyro).
Annotations label half-open sample ranges as normal ("ok") or anomalous
("ab") steps. The generator synthesizes walking bouts from a smooth step
template with seeded jitter and injects one of three anomaly kinds, returning
exact ground-truth segments alongside the samples.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import DataError
from .mp import TimeSeries
from .signal import SensorSample, SignalSelector

LABEL_OK = "ok"
LABEL_AB = "ab"
KNOWN_LABELS = (LABEL_OK, LABEL_AB)

ANOMALY_KINDS = ("amplitude-scaled", "time-warped", "shape-replaced")

RECORDING_HEADER = ["t", "ax", "ay", "az", "gx", "gy", "gz"]
ANNOTATION_HEADER = ["start", "end", "label"]

# Sampling is considered uniform when every interval is within 1% of 1/rate.
UNIFORMITY_TOL = 0.01


@dataclass(frozen=True)
class RecordingMeta:
    subject_id: str = "synthetic"
    pathology_label: str = "synthetic"
    recording_id: str = "r000"


@dataclass(frozen=True)
class LabeledSegment:
    """Half-open sample range [start, end) tagged ok or ab."""

    start: int
    end: int
    label: str

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"bad segment [{self.start}, {self.end})")
        if self.label not in KNOWN_LABELS:
            raise ValueError(f"unknown label {self.label!r}")

    @property
    def is_anomalous(self) -> bool:
        return self.label == LABEL_AB

    @property
    def length(self) -> int:
        return self.end - self.start


def validate_segments(segments: list[LabeledSegment]) -> list[LabeledSegment]:
    for a, b in zip(segments, segments[1:]):
        if b.start < a.end:
            raise DataError(f"segments overlap: [{a.start},{a.end}) and [{b.start},{b.end})")
    return segments


class Recording:
    """Uniformly sampled 6-dof IMU recording held as column arrays."""

    def __init__(self, t, accel, gyro, sample_rate_hz=None, meta: RecordingMeta = RecordingMeta()):
        t = np.asarray(t, dtype=np.float64)
        accel = np.asarray(accel, dtype=np.float64)
        gyro = np.asarray(gyro, dtype=np.float64)
        if t.ndim != 1 or t.size == 0:
            raise DataError("recording must contain at least one sample")
        if accel.shape != (t.size, 3) or gyro.shape != (t.size, 3):
            raise ValueError("accel and gyro must be (n, 3) arrays matching t")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(accel)) and np.all(np.isfinite(gyro))):
            raise DataError("recording contains non-finite values")
        if sample_rate_hz is None:
            if t.size < 2:
                raise DataError("cannot infer sample rate from a single sample")
            sample_rate_hz = 1.0 / float(np.median(np.diff(t)))
        if not (sample_rate_hz > 0):
            raise ValueError("sample_rate_hz must be positive")
        if t.size >= 2:
            dt = np.diff(t)
            period = 1.0 / sample_rate_hz
            bad = np.abs(dt - period) >= UNIFORMITY_TOL * period
            if bad.any():
                k = int(np.argmax(bad))
                raise DataError(
                    f"non-uniform sampling at sample {k + 1}: dt={dt[k]:.6g}, expected {period:.6g}"
                )
        for arr in (t, accel, gyro):
            arr.flags.writeable = False
        self.t = t
        self.accel = accel
        self.gyro = gyro
        self.sample_rate_hz = float(sample_rate_hz)
        self.meta = meta

    @property
    def n(self) -> int:
        return self.t.size

    @property
    def duration_s(self) -> float:
        return self.n / self.sample_rate_hz

    def iter_samples(self):
        for i in range(self.n):
            yield SensorSample(
                t=float(self.t[i]), accel=tuple(self.accel[i]), gyro=tuple(self.gyro[i])
            )

    @property
    def samples(self) -> list[SensorSample]:
        return list(self.iter_samples())

    def project(self, sel: SignalSelector) -> TimeSeries:
        """Vectorized equivalent of projecting each sample in turn."""
        if sel.source == "both":
            raise ValueError("project one source at a time")
        arr = self.accel if sel.source == "accel" else self.gyro
        if sel.channel in ("x", "y", "z"):
            out = arr[:, "xyz".index(sel.channel)]
        elif sel.channel == "l1":
            out = np.abs(arr).sum(axis=1)
        elif sel.channel == "l2":
            out = np.sqrt((arr * arr).sum(axis=1))
        else:
            out = np.abs(arr).max(axis=1)
        return TimeSeries(out, self.sample_rate_hz)


# -- persistence -----------------------------------------------------------


def save_recording(recording: Recording, path) -> None:
    data = np.column_stack([recording.t, recording.accel, recording.gyro])
    with open(path, "w", newline="") as f:
        f.write(",".join(RECORDING_HEADER) + "\n")
        np.savetxt(f, data, fmt="%.12g", delimiter=",")


def load_recording(path, meta: RecordingMeta | None = None) -> Recording:
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != RECORDING_HEADER:
            raise DataError(f"{path}: expected header {','.join(RECORDING_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 7:
                raise DataError(f"{path}: row {lineno}: expected 7 fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise DataError(f"{path}: row {lineno}: {exc}") from exc
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}: row {lineno}: non-finite value")
            if rows and vals[0] <= rows[-1][0]:
                raise DataError(f"{path}: row {lineno}: non-monotonic t")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no samples")
    data = np.array(rows)
    if meta is None:
        meta = RecordingMeta(recording_id=Path(path).stem)
    try:
        return Recording(data[:, 0], data[:, 1:4], data[:, 4:7], meta=meta)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def save_annotations(segments: list[LabeledSegment], path) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(ANNOTATION_HEADER) + "\n")
        for seg in segments:
            f.write(f"{seg.start},{seg.end},{seg.label}\n")


def load_annotations(path) -> list[LabeledSegment]:
    segments = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ANNOTATION_HEADER:
            raise DataError(f"{path}: expected header {','.join(ANNOTATION_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}: row {lineno}: expected 3 fields")
            try:
                seg = LabeledSegment(int(row[0]), int(row[1]), row[2].strip())
            except ValueError as exc:
                raise DataError(f"{path}: row {lineno}: {exc}") from exc
            segments.append(seg)
    try:
        return validate_segments(segments)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


# -- synthesis -------------------------------------------------------------


@dataclass(frozen=True)
class StepTemplate:
    """Normal step waveform parameters (amplitudes in deg/s, durations in s)."""

    amplitude_dps: float = 120.0
    duration_s: float = 0.45
    accel_amplitude: float = 4.0

    def __post_init__(self):
        if self.amplitude_dps <= 0 or self.duration_s <= 0 or self.accel_amplitude < 0:
            raise ValueError("template amplitudes and duration must be positive")


@dataclass(frozen=True)
class SynthConfig:
    sample_rate_hz: float = 100.0
    n_normal_steps: int = 10
    n_anomalous_steps: int = 2
    anomaly_position: int | None = None  # step index where the ab block starts
    step_period_s: float = 1.0
    template: StepTemplate = field(default_factory=StepTemplate)
    anomaly_kind: str = "shape-replaced"
    noise_std: float = 2.0
    rng_seed: int = 0
    lead_in_s: float = 2.0
    tail_s: float = 1.0

    def __post_init__(self):
        if self.n_normal_steps < 0 or self.n_anomalous_steps < 0:
            raise ValueError("step counts must be non-negative")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.anomaly_kind not in ANOMALY_KINDS:
            raise ValueError(f"anomaly_kind must be one of {ANOMALY_KINDS}")
        if not (self.sample_rate_hz > 0 and self.step_period_s > 0):
            raise ValueError("rates and periods must be positive")
        if self.lead_in_s < 0 or self.tail_s < 0:
            raise ValueError("lead_in_s and tail_s must be non-negative")

    @property
    def total_steps(self) -> int:
        return self.n_normal_steps + self.n_anomalous_steps

    def resolved_anomaly_position(self) -> int:
        pos = self.anomaly_position
        if pos is None:
            pos = self.n_normal_steps // 2 + self.n_normal_steps % 2
        if not (0 <= pos <= self.n_normal_steps):
            raise ValueError(
                f"anomaly_position {pos} out of range 0..{self.n_normal_steps}"
            )
        return pos


def _burst(tau, center, width, cycles, phase=0.0, a=1.0):
    gauss = np.exp(-0.5 * ((tau - center) / width) ** 2)
    return a * gauss * np.sin(2 * np.pi * cycles * tau + phase)


def _normal_channels(tau):
    gx = _burst(tau, 0.42, 0.20, 1.3) + _burst(tau, 0.70, 0.07, 4.0, 0.9, 0.5)
    gy = _burst(tau, 0.50, 0.22, 1.0, 0.5, 0.6)
    gz = _burst(tau, 0.55, 0.25, 0.8, 1.1, 0.35)
    return np.stack([gx, gy, gz], axis=1)


def _tremor_channels(tau):
    # two wide-set ripple bursts, oscillating in phase on all three axes so
    # the per-sample max stays oscillatory instead of smoothing into a hump
    # like the normal swing-plus-impact contour does
    shape = np.exp(-0.5 * ((tau - 0.24) / 0.11) ** 2) + np.exp(
        -0.5 * ((tau - 0.76) / 0.11) ** 2
    )
    osc = shape * np.sin(2 * np.pi * 7.0 * tau)
    return np.stack([osc, 0.85 * osc, 0.6 * osc], axis=1)


def _accel_channels(tau, scale):
    ax = _burst(tau, 0.70, 0.06, 5.0, 0.3, 1.0)
    ay = _burst(tau, 0.45, 0.20, 1.2, 0.8, 0.6)
    az = _burst(tau, 0.50, 0.22, 1.0, 1.6, 0.8)
    return scale * np.stack([ax, ay, az], axis=1)


def _step_arrays(config: SynthConfig, anomalous: bool):
    """One step's (gyro, accel) waveforms at unit template scale."""
    tpl = config.template
    n = round(tpl.duration_s * config.sample_rate_hz)
    kind = config.anomaly_kind if anomalous else None
    if kind == "time-warped":
        n = round(1.6 * tpl.duration_s * config.sample_rate_hz)
    tau = np.arange(n) / n
    if kind == "shape-replaced":
        gyro = _tremor_channels(tau)
    else:
        gyro = _normal_channels(tau)
    if kind == "amplitude-scaled":
        # hard drive into saturation: flattened peaks change the shape, which
        # pure rescaling would not (z-normalization removes linear gain)
        gyro = np.tanh(8.0 * gyro)
    return gyro * tpl.amplitude_dps, _accel_channels(tau, tpl.accel_amplitude)


def generate(config: SynthConfig) -> tuple[Recording, list[LabeledSegment]]:
    """Synthesize one walking bout; returns samples plus exact ground truth."""
    if config.total_steps == 0:
        raise ValueError("zero steps requested: nothing to generate")
    pos = config.resolved_anomaly_position()
    labels = (
        [LABEL_OK] * pos
        + [LABEL_AB] * config.n_anomalous_steps
        + [LABEL_OK] * (config.n_normal_steps - pos)
    )

    rng = np.random.default_rng(config.rng_seed)
    fs = config.sample_rate_hz
    period = round(config.step_period_s * fs)
    lead = round(config.lead_in_s * fs)
    tail = round(config.tail_s * fs)

    cursor = lead
    step_data = []
    for label in labels:
        jitter = int(round(rng.normal(0.0, 0.01) * fs))
        start = max(0, cursor + jitter)
        gyro, accel = _step_arrays(config, anomalous=(label == LABEL_AB))
        amp_jitter = rng.normal(1.0, 0.04)
        step_data.append((start, gyro * amp_jitter, accel * amp_jitter, label))
        cursor += period

    n_total = max(s + g.shape[0] for s, g, _, _ in step_data) + tail
    gyro = np.zeros((n_total, 3))
    accel = np.zeros((n_total, 3))
    segments = []
    for start, g, a, label in step_data:
        end = start + g.shape[0]
        gyro[start:end] += g
        accel[start:end] += a
        segments.append(LabeledSegment(start, end, label))
    validate_segments(segments)

    gyro += rng.normal(0.0, config.noise_std, size=gyro.shape)
    accel += rng.normal(0.0, 0.3 * config.noise_std, size=accel.shape)
    t = np.arange(n_total) / fs
    meta = RecordingMeta(recording_id=f"synth-{config.rng_seed:05d}")
    return Recording(t, accel, gyro, sample_rate_hz=fs, meta=meta), segments


# -- generator config files ------------------------------------------------

_TEMPLATE_PREFIX = "template."


def parse_synth_config(text: str, base: SynthConfig | None = None) -> SynthConfig:
    """Parse 'key = value' lines into a SynthConfig.

    Keys are SynthConfig field names; template fields use the dotted form
    template.<field>. '#' starts a comment; blank lines are ignored.
    """
    cfg_fields = {f.name: f for f in fields(SynthConfig) if f.name != "template"}
    tpl_fields = {f.name: f for f in fields(StepTemplate)}
    overrides: dict = {}
    tpl_overrides: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            if key.startswith(_TEMPLATE_PREFIX):
                name = key[len(_TEMPLATE_PREFIX):]
                if name not in tpl_fields:
                    raise DataError(f"config line {lineno}: unknown key {key!r}")
                tpl_overrides[name] = float(value)
            elif key in cfg_fields:
                overrides[key] = _parse_config_value(key, value)
            else:
                raise DataError(f"config line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise DataError(f"config line {lineno}: {exc}") from exc
    base = base or SynthConfig()
    if tpl_overrides:
        overrides["template"] = replace(base.template, **tpl_overrides)
    return replace(base, **overrides)


def _parse_config_value(key: str, value: str):
    if key in ("n_normal_steps", "n_anomalous_steps", "rng_seed"):
        return int(value)
    if key == "anomaly_position":
        return None if value.lower() in ("none", "auto") else int(value)
    if key == "anomaly_kind":
        return value
    return float(value)


def synth_config_from_file(path, base: SynthConfig | None = None) -> SynthConfig:
    return parse_synth_config(Path(path).read_text(), base=base)
