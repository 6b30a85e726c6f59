"""Segment-level scoring of alarm streams: confusion counts, F1, ROC, earliness.

Granularity is per step segment, not per sample: an anomalous segment counts
as one true positive however many alarms land inside it, and an alarm that
falls outside every labeled segment counts as one false positive on its own.

The ROC machinery expects one detector pass per recording with the score
trace retained; thresholds are applied post hoc (see alarms_from_trace),
which keeps sweeps deterministic and cheap.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass

import numpy as np

from .dataset import LabeledSegment, validate_segments
from .detectors import AlarmEvent, alarms_from_trace, replay

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

DEFAULT_GRID_POINTS = 101


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.tn + other.tn,
        )


@dataclass(frozen=True)
class RocPoint:
    fpr: float
    tpr: float
    threshold: float


@dataclass(frozen=True)
class RecordingResult:
    recording_id: str
    counts: ConfusionCounts
    f1: float
    mean_earliness_s: float | None


@dataclass(frozen=True)
class EvaluationReport:
    per_recording: tuple[RecordingResult, ...]
    roc: tuple[RocPoint, ...]
    auc: float
    optimal_threshold: float
    aggregate_f1: float
    f1_by_threshold: tuple[tuple[float, float], ...]
    real_time_factor: float | None


def match_alarms(
    alarms: list[AlarmEvent], truth: list[LabeledSegment]
) -> ConfusionCounts:
    """Count segment-level outcomes for one recording.

    Each anomalous segment with at least one alarm inside it is a TP, else an
    FN; each normal segment with an alarm is an FP, else a TN. Every alarm
    outside all segments adds one more FP.
    """
    validate_segments(truth)
    idx = sorted(a.sample_index for a in alarms)
    tp = fp = fn = tn = 0
    covered = 0
    for seg in truth:
        lo = int(np.searchsorted(idx, seg.start, side="left"))
        hi = int(np.searchsorted(idx, seg.end, side="left"))
        hit = hi > lo
        covered += hi - lo
        if seg.is_anomalous:
            tp, fn = (tp + 1, fn) if hit else (tp, fn + 1)
        else:
            fp, tn = (fp + 1, tn) if hit else (fp, tn + 1)
    fp += len(idx) - covered
    return ConfusionCounts(tp, fp, fn, tn)


def f1(c: ConfusionCounts) -> float:
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def threshold_grid(n: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Strictly decreasing thresholds from 1 to 0."""
    return np.linspace(1.0, 0.0, n)


def _check_thresholds(thresholds) -> np.ndarray:
    t = np.asarray(thresholds, dtype=np.float64)
    if t.size < 2 or np.any(np.diff(t) >= 0):
        raise ValueError("thresholds must be strictly decreasing")
    if t[0] > 1.0 or t[-1] < 0.0:
        raise ValueError("thresholds must lie within [0, 1]")
    return t


def _auc_from_points(points: list[tuple[float, float]]) -> float:
    pts = sorted(set(points) | {(0.0, 0.0), (1.0, 1.0)})
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    return float(_trapezoid(y, x))


def roc_sweep(
    alarm_sets: list[tuple[float, list[AlarmEvent]]],
    truth: list[LabeledSegment],
) -> tuple[list[RocPoint], float]:
    """ROC over pre-thresholded alarm sets, plus trapezoid AUC.

    alarm_sets pairs each threshold with the alarms that survive it;
    thresholds must be strictly decreasing. The curve is anchored at the
    (0,0) and (1,1) corners for the area computation.
    """
    _check_thresholds([t for t, _ in alarm_sets])
    if not any(s.is_anomalous for s in truth):
        raise ValueError("no anomalous segments: TPR is undefined")
    points = []
    for threshold, alarms in alarm_sets:
        c = match_alarms(alarms, truth)
        tpr = c.tp / (c.tp + c.fn)
        fpr = c.fp / (c.fp + c.tn) if c.fp + c.tn else 0.0
        points.append(RocPoint(fpr, tpr, float(threshold)))
    auc = _auc_from_points([(p.fpr, p.tpr) for p in points])
    return points, auc


def mean_roc(
    curves: list[list[RocPoint]], grid: np.ndarray | None = None
) -> list[tuple[float, float]]:
    """Vertical average of several ROC curves on a fixed FPR grid."""
    if not curves:
        raise ValueError("no curves to average")
    if grid is None:
        grid = np.linspace(0.0, 1.0, DEFAULT_GRID_POINTS)
    stacked = []
    for curve in curves:
        pts = sorted(set((p.fpr, p.tpr) for p in curve) | {(0.0, 0.0), (1.0, 1.0)})
        x = np.array([p[0] for p in pts])
        y = np.array([p[1] for p in pts])
        # step-wise upper envelope: at equal fpr keep the best tpr seen
        stacked.append(np.interp(grid, x, np.maximum.accumulate(y)))
    mean = np.mean(stacked, axis=0)
    return list(zip(grid.tolist(), mean.tolist()))


def optimal_threshold(points: list[RocPoint]) -> float:
    """Threshold maximizing Youden's J = TPR - FPR; ties favor the higher
    threshold so the operating point stays conservative."""
    if not points:
        raise ValueError("empty ROC")
    best = max(points, key=lambda p: (p.tpr - p.fpr, p.threshold))
    return best.threshold


def earliness(
    alarms: list[AlarmEvent],
    truth: list[LabeledSegment],
    sample_rate_hz: float,
) -> float | None:
    """Mean seconds from anomalous-segment onset to its first alarm.

    Only true-positive segments contribute; returns None when there are no
    true positives at all.
    """
    idx = sorted(a.sample_index for a in alarms)
    delays = []
    for seg in truth:
        if not seg.is_anomalous:
            continue
        lo = np.searchsorted(idx, seg.start, side="left")
        if lo < len(idx) and idx[lo] < seg.end:
            delays.append((idx[lo] - seg.start) / sample_rate_hz)
    if not delays:
        return None
    return float(np.mean(delays))


def real_time_factor(make_detector, recording, runs: int = 5, signal=None) -> float:
    """Median wall-time over duration across full replays, fresh detector each."""
    if recording.n == 0:
        raise ValueError("empty recording")
    duration = recording.n / recording.sample_rate_hz
    ratios = []
    for _ in range(runs):
        res = replay(make_detector(), recording, signal=signal)
        ratios.append(res.wall_s / duration)
    return statistics.median(ratios)


def evaluate_recordings(
    pairs,
    make_detector,
    *,
    thresholds=None,
    signal=None,
    measure_rtf: bool = True,
    rtf_runs: int = 5,
) -> EvaluationReport:
    """Run one detector pass per (recording, truth) pair and sweep thresholds.

    The report is canonical: recordings are sorted by id, so feeding the same
    pairs in any order produces an identical report. The operating point for
    the per-recording numbers and the aggregate F1 is the Youden-optimal
    threshold of the pooled ROC.
    """
    grid = _check_thresholds(threshold_grid() if thresholds is None else thresholds)
    entries = []
    longest = None
    for k, (rec, truth) in enumerate(pairs):
        det = make_detector()
        res = replay(det, rec, signal=signal)
        fs = rec.sample_rate_hz
        per_theta = [
            (float(th), alarms_from_trace(res.trace, float(th), fs)) for th in grid
        ]
        counts = [match_alarms(al, truth) for _, al in per_theta]
        rid = rec.meta.recording_id if rec.meta is not None else f"unnamed-{k:04d}"
        entries.append((rid, truth, fs, per_theta, counts))
        if longest is None or rec.n > longest.n:
            longest = rec
    if not entries:
        raise ValueError("no recordings to evaluate")
    entries.sort(key=lambda e: e[0])

    pooled = [
        sum((e[4][j] for e in entries), ConfusionCounts(0, 0, 0, 0))
        for j in range(len(grid))
    ]
    if pooled[0].tp + pooled[0].fn == 0:
        raise ValueError("no anomalous segments: TPR is undefined")
    points = []
    for th, c in zip(grid, pooled):
        tpr = c.tp / (c.tp + c.fn)
        fpr = c.fp / (c.fp + c.tn) if c.fp + c.tn else 0.0
        points.append(RocPoint(fpr, tpr, float(th)))
    auc = _auc_from_points([(p.fpr, p.tpr) for p in points])
    theta = optimal_threshold(points)
    j_opt = int(np.argmin(np.abs(grid - theta)))

    per_recording = []
    for rid, truth, fs, per_theta, counts in entries:
        c = counts[j_opt]
        per_recording.append(
            RecordingResult(rid, c, f1(c), earliness(per_theta[j_opt][1], truth, fs))
        )

    rtf = None
    if measure_rtf and longest is not None:
        rtf = real_time_factor(make_detector, longest, runs=rtf_runs, signal=signal)

    return EvaluationReport(
        per_recording=tuple(per_recording),
        roc=tuple(points),
        auc=auc,
        optimal_threshold=theta,
        aggregate_f1=f1(pooled[j_opt]),
        f1_by_threshold=tuple(
            (float(th), f1(c)) for th, c in zip(grid, pooled)
        ),
        real_time_factor=rtf,
    )


# -- report emission --------------------------------------------------------


def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "per_recording": [
            {
                "recording_id": r.recording_id,
                "counts": {
                    "tp": r.counts.tp,
                    "fp": r.counts.fp,
                    "fn": r.counts.fn,
                    "tn": r.counts.tn,
                },
                "f1": r.f1,
                "mean_earliness_s": r.mean_earliness_s,
            }
            for r in report.per_recording
        ],
        "roc": [
            {"fpr": p.fpr, "tpr": p.tpr, "threshold": p.threshold}
            for p in report.roc
        ],
        "auc": report.auc,
        "optimal_threshold": report.optimal_threshold,
        "aggregate_f1": report.aggregate_f1,
        "real_time_factor": report.real_time_factor,
    }


def write_report_json(report: EvaluationReport, path) -> None:
    with open(path, "w") as f:
        json.dump(report_to_dict(report), f, indent=2, sort_keys=True)
        f.write("\n")


def write_roc_csv(points, path) -> None:
    with open(path, "w") as f:
        f.write("fpr,tpr,threshold\n")
        for p in points:
            f.write(f"{p.fpr:.6g},{p.tpr:.6g},{p.threshold:.6g}\n")


def write_f1_csv(f1_by_threshold, path) -> None:
    with open(path, "w") as f:
        f.write("threshold,f1\n")
        for th, value in f1_by_threshold:
            f.write(f"{th:.6g},{value:.6g}\n")


def write_earliness_csv(per_recording, path) -> None:
    with open(path, "w") as f:
        f.write("recording_id,mean_earliness_s\n")
        for r in per_recording:
            cell = "" if r.mean_earliness_s is None else f"{r.mean_earliness_s:.6g}"
            f.write(f"{r.recording_id},{cell}\n")
