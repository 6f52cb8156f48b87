"""Context optimization for black-box tabular in-context learners."""

__version__ = "0.1.0"

from .engine import (
    EngineConfig,
    EngineError,
    ItemUniverse,
    RunResult,
    SubsetObservation,
    optimize,
    run_single,
    sampling_distribution,
    temperature_schedule,
)
from .evaluators import (
    AdditiveOracle,
    BridgeEvaluator,
    BridgePool,
    Budget,
    ContextCapacityError,
    ContextSelection,
    EvaluationError,
    KnnEvaluator,
    score_context,
    score_subset,
)
from .tables import DataError, SplitSpec, Table, load_csv, split
from .transforms import (
    AugmentSpec,
    NoiseSpec,
    augment_features,
    augment_samples,
    inject_noise,
)

__all__ = [
    "AdditiveOracle",
    "AugmentSpec",
    "BridgeEvaluator",
    "BridgePool",
    "Budget",
    "ContextCapacityError",
    "ContextSelection",
    "DataError",
    "EngineConfig",
    "EngineError",
    "EvaluationError",
    "ItemUniverse",
    "KnnEvaluator",
    "NoiseSpec",
    "RunResult",
    "SplitSpec",
    "SubsetObservation",
    "Table",
    "augment_features",
    "augment_samples",
    "inject_noise",
    "load_csv",
    "optimize",
    "run_single",
    "sampling_distribution",
    "score_context",
    "score_subset",
    "split",
    "temperature_schedule",
]
