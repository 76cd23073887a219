"""Robot trajectories to action tokens, motion-language labels and chat-format training records."""

from .core import (
    ActionVector,
    AxisConvention,
    ConfigError,
    EmptyEpisode,
    EmptyInstruction,
    MixedPositionPresence,
    MotionLinguaError,
    NonFiniteValue,
    PipelineConfig,
    Trajectory,
    TrajectoryStep,
    validate_trajectory,
)
from .detector import (
    AdaptiveThresholdState,
    DetectorVerdict,
    adaptive_threshold,
    detect_fast,
    detect_mid,
    detect_motion,
    detect_slow,
    reconstruct_positions,
)
from .emitter import (
    EmitterTemplate,
    MissingAction,
    TrainingSample,
    batch_records,
    emit_dataset,
    emit_finetune,
    emit_pretrain,
)
from .harness import (
    AccuracyReport,
    Segment,
    SyntheticSpec,
    fixed_threshold_annotate,
    generate_synthetic,
    run_benchmark,
    score,
)
from .renderer import (
    STOP,
    AxisActivation,
    MalformedMotionString,
    MotionLabel,
    annotate_episode,
    annotate_episodes,
    annotate_trajectory,
    canonical_string,
    parse_label,
    render_label,
)
from .tokenizer import (
    ActionTokens,
    BinOutOfRange,
    DatasetStats,
    EmptyDataset,
    compute_dataset_stats,
    detokenize,
    normalize,
    tokenize_action,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyReport",
    "ActionTokens",
    "ActionVector",
    "AdaptiveThresholdState",
    "AxisActivation",
    "AxisConvention",
    "BinOutOfRange",
    "ConfigError",
    "DatasetStats",
    "DetectorVerdict",
    "EmitterTemplate",
    "EmptyDataset",
    "EmptyEpisode",
    "EmptyInstruction",
    "MalformedMotionString",
    "MissingAction",
    "MixedPositionPresence",
    "MotionLabel",
    "MotionLinguaError",
    "NonFiniteValue",
    "PipelineConfig",
    "STOP",
    "Segment",
    "SyntheticSpec",
    "TrainingSample",
    "Trajectory",
    "TrajectoryStep",
    "adaptive_threshold",
    "annotate_episode",
    "annotate_episodes",
    "annotate_trajectory",
    "batch_records",
    "canonical_string",
    "compute_dataset_stats",
    "detect_fast",
    "detect_mid",
    "detect_motion",
    "detect_slow",
    "detokenize",
    "emit_dataset",
    "emit_finetune",
    "emit_pretrain",
    "fixed_threshold_annotate",
    "generate_synthetic",
    "normalize",
    "parse_label",
    "reconstruct_positions",
    "render_label",
    "run_benchmark",
    "score",
    "tokenize_action",
    "validate_trajectory",
]
