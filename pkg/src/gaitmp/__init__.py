"""Streaming gait anomaly detection built on exact matrix profile distances."""

from .dataset import (
    LabeledSegment,
    Recording,
    RecordingMeta,
    StepTemplate,
    SynthConfig,
    generate,
    load_annotations,
    load_recording,
    save_annotations,
    save_recording,
)
from .detectors import (
    AlarmEvent,
    NaiveDetector,
    NaiveDetectorConfig,
    StepGatedDetector,
    StepSystemConfig,
    TraceRecord,
    alarms_from_trace,
    replay,
)
from .errors import DataError
from .evaluation import (
    ConfusionCounts,
    EvaluationReport,
    RocPoint,
    earliness,
    evaluate_recordings,
    f1,
    match_alarms,
    real_time_factor,
    roc_sweep,
)
from .mp import (
    MatrixProfileResult,
    Subsequence,
    TimeSeries,
    brute_force_mp,
    discord,
    distance_profile,
    matrix_profile_ab,
    matrix_profile_self,
    motif,
    sliding_dot_product,
    znorm_distance,
    znormalize,
)
from .signal import SensorSample, SignalSelector, StreamingEnvelope, envelope
from .steps import StepDetector, StepEvent, StepSegment

__all__ = [
    "AlarmEvent",
    "ConfusionCounts",
    "DataError",
    "EvaluationReport",
    "LabeledSegment",
    "MatrixProfileResult",
    "NaiveDetector",
    "NaiveDetectorConfig",
    "Recording",
    "RecordingMeta",
    "RocPoint",
    "SensorSample",
    "SignalSelector",
    "StepDetector",
    "StepEvent",
    "StepGatedDetector",
    "StepSegment",
    "StepSystemConfig",
    "StepTemplate",
    "StreamingEnvelope",
    "Subsequence",
    "SynthConfig",
    "TimeSeries",
    "TraceRecord",
    "alarms_from_trace",
    "brute_force_mp",
    "discord",
    "distance_profile",
    "earliness",
    "envelope",
    "evaluate_recordings",
    "f1",
    "generate",
    "load_annotations",
    "load_recording",
    "match_alarms",
    "matrix_profile_ab",
    "matrix_profile_self",
    "motif",
    "real_time_factor",
    "replay",
    "roc_sweep",
    "save_annotations",
    "save_recording",
    "sliding_dot_product",
    "znorm_distance",
    "znormalize",
]
