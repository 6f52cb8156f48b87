"""Request/response models for the service; the experiment configuration
model doubles as the parsed form of the TOML config files."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, field_validator, model_validator

SETTINGS = ("original", "da_sample", "da_feature", "dn_s1", "dn_s2", "dn_f")

# noise kind implied by each noising setting
SETTING_NOISE_KINDS = {
    "dn_s1": "s1_marginal",
    "dn_s2": "s2_gaussian",
    "dn_f": "f_mixed",
}

METHOD_ALIASES = {
    "h1": "random_mean",
    "mean": "random_mean",
    "random_mean": "random_mean",
    "h2": "ensemble",
    "ensemble": "ensemble",
    "h3": "xl_context",
    "xl": "xl_context",
    "xl_context": "xl_context",
    "o1": "kmeans_reps",
    "kmeans": "kmeans_reps",
    "kmeans_reps": "kmeans_reps",
    "o2": "dt_router",
    "dt": "dt_router",
    "dt_router": "dt_router",
    "vipcop": "vipcop",
    "engine": "vipcop",
}

ALL_BASELINES = ("random_mean", "ensemble", "xl_context", "kmeans_reps", "dt_router")


def resolve_method(name: str) -> str:
    try:
        return METHOD_ALIASES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown method {name!r}") from None


class SplitModel(BaseModel):
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1
    stratified: bool = True


class AugmentModel(BaseModel):
    kind: Literal["sample_affine", "feature_projection"]
    target_n: int | None = None
    target_d: int | None = None


class NoiseModel(BaseModel):
    kind: Literal["s1_marginal", "s2_gaussian", "f1_jitter", "f2_permute", "f_mixed"] | None = None
    drop_fraction: float = Field(default=0.5, gt=0.0, lt=1.0)


class BudgetModel(BaseModel):
    samples: int = Field(default=1000, ge=1)
    features: int = Field(default=100, ge=1)


class EngineModel(BaseModel):
    rounds: int = Field(default=100, ge=1)
    eta: float = Field(default=2.0, gt=1.0)
    batch: int = Field(default=32, ge=1)
    learning_rate: float = Field(default=0.1, gt=0.0)
    metric: Literal["bacc", "balanced_accuracy", "auroc"] = "bacc"
    intercept: bool = False
    class_coverage_fixup: bool = True
    parallel_eval: int = Field(default=1, ge=1)
    early_stop: bool = False


class EvaluatorModel(BaseModel):
    kind: Literal["knn", "oracle", "bridge"] = "knn"
    k: int = Field(default=5, ge=1)
    enforce_capacity: bool = True
    base: float = 0.5
    noise_sd: float = 0.0
    sample_weights: list[float] | None = None
    feature_weights: list[float] | None = None
    bridge_cmd: list[str] | None = None
    timeout: float = Field(default=60.0, gt=0.0)
    connections: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def check_bridge_command(self):
        if self.kind == "bridge" and not self.bridge_cmd:
            raise ValueError("evaluator.bridge_cmd is required for the bridge evaluator")
        return self


class BaselineModel(BaseModel):
    runs: int | None = Field(default=None, ge=1)
    backoff: float = Field(default=0.9, gt=0.0, lt=1.0)
    inits: int = Field(default=5, ge=1)
    min_leaf: int | None = Field(default=None, ge=1)
    max_depth: int = Field(default=50, ge=1)
    top_splits: int = Field(default=3, ge=1)


class ExperimentConfig(BaseModel):
    """Everything one experiment cell needs, mirroring the TOML layout."""

    dataset: str
    label: str | int = "label"
    name: str | None = None
    setting: Literal["original", "da_sample", "da_feature", "dn_s1", "dn_s2", "dn_f"] = (
        "original"
    )
    split: SplitModel = Field(default_factory=SplitModel)
    augment: AugmentModel | None = None
    noise: NoiseModel | None = None
    budget: BudgetModel = Field(default_factory=BudgetModel)
    engine: EngineModel = Field(default_factory=EngineModel)
    evaluator: EvaluatorModel = Field(default_factory=EvaluatorModel)
    baseline: BaselineModel = Field(default_factory=BaselineModel)
    baselines: list[str] = Field(default_factory=lambda: list(ALL_BASELINES))
    out: str = "results"
    seed: int = 42

    @field_validator("baselines")
    @classmethod
    def normalize_baselines(cls, value):
        resolved = [resolve_method(v) for v in value]
        bad = [v for v in resolved if v == "vipcop"]
        if bad:
            raise ValueError("baselines must not contain the engine method itself")
        return resolved

    @model_validator(mode="after")
    def check_setting_pairing(self):
        if self.setting == "da_sample":
            if self.augment is None or self.augment.kind != "sample_affine":
                raise ValueError(
                    "setting 'da_sample' requires [augment] with kind='sample_affine'"
                )
            if not self.augment.target_n:
                raise ValueError("setting 'da_sample' requires augment.target_n")
        elif self.setting == "da_feature":
            if self.augment is None or self.augment.kind != "feature_projection":
                raise ValueError(
                    "setting 'da_feature' requires [augment] with kind='feature_projection'"
                )
            if not self.augment.target_d:
                raise ValueError("setting 'da_feature' requires augment.target_d")
        elif self.setting in SETTING_NOISE_KINDS:
            if self.noise is None:
                raise ValueError(f"setting {self.setting!r} requires a [noise] section")
            implied = SETTING_NOISE_KINDS[self.setting]
            if self.noise.kind is None:
                self.noise = self.noise.model_copy(update={"kind": implied})
            elif self.setting != "dn_f" and self.noise.kind != implied:
                raise ValueError(
                    f"noise.kind {self.noise.kind!r} conflicts with setting {self.setting!r}"
                )
            elif self.setting == "dn_f" and not self.noise.kind.startswith("f"):
                raise ValueError(
                    f"noise.kind {self.noise.kind!r} conflicts with setting 'dn_f'"
                )
        else:  # original
            if self.augment is not None:
                raise ValueError("setting 'original' does not accept an [augment] section")
            if self.noise is not None:
                raise ValueError("setting 'original' does not accept a [noise] section")
        return self


class ReportRow(BaseModel):
    dataset: str
    method: str
    setting: str
    score: float
    context_size: int
    wall_time: float
    seed: int
    per_run_scores: list[float] | None = None
    details: dict = Field(default_factory=dict)


class RunSummary(BaseModel):
    tau: float
    estimated_val: float
    rounds_completed: int
    error: str | None = None


class OptimizeRequest(BaseModel):
    config: ExperimentConfig


class OptimizeResponse(BaseModel):
    row: ReportRow
    runs: list[RunSummary]
    out_dir: str


class BaselineRequest(BaseModel):
    config: ExperimentConfig
    method: str = "all"


class BaselineResponse(BaseModel):
    rows: list[ReportRow]
    out_dir: str


class BenchRequest(BaseModel):
    config_dir: str | None = None
    configs: list[ExperimentConfig] = Field(default_factory=list)
    jobs: int = Field(default=1, ge=1)
    force: bool = False
    out: str | None = None
    permutations: int = Field(default=100_000, ge=100)


class StatsBundle(BaseModel):
    methods: list[str]
    datasets: list[str]
    average_ranks: dict[str, float]
    critical_difference: float | None
    alpha: float
    pairwise_p: list[list[float]]
    improvement: dict[str, dict[str, float]]
    notes: dict = Field(default_factory=dict)


class BenchResponse(BaseModel):
    rows: list[ReportRow]
    failures: list[str]
    stats: StatsBundle | None
    out_dir: str


class ReportRequest(BaseModel):
    results_dir: str
    permutations: int = Field(default=100_000, ge=100)


class ReportResponse(BaseModel):
    stats: StatsBundle
    row_count: int
    time_performance: list[dict]


class HealthResponse(BaseModel):
    status: str
    version: str
