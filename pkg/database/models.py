from pydantic import BaseModel, Field, ConfigDict, field_validator, model_validator
from typing import List, Optional, Dict, Any, Tuple, Literal
from enum import Enum


class Season(str, Enum):
    """Meteorological seasons"""
    DJF = "DJF"
    MAM = "MAM"
    JJA = "JJA"
    SON = "SON"


class Estimator(str, Enum):
    """Divergence estimator kinds"""
    ED = "ED"
    MMD2 = "MMD2"
    KL = "KL"


class Activation(str, Enum):
    """Hidden-layer activations"""
    RELU = "relu"
    GELU = "gelu"
    TANH = "tanh"


class LossKind(str, Enum):
    """Training loss kinds"""
    MSE = "mse"
    HUBER = "huber"


class OptimizerKind(str, Enum):
    """Optimizer kinds"""
    ADAM = "adam"
    ADAMW = "adamw"


class Stage(str, Enum):
    """Calibration stage tags"""
    CLEAR = "clear"
    CLOUDY = "cloudy"
    JOINT = "joint"


class ErrorLoss(str, Enum):
    """Loss used for relative errors"""
    MAE = "MAE"
    RMSE = "RMSE"


class ModelKind(str, Enum):
    """Model roster entries"""
    MLP = "mlp"
    PHYSICAL = "physical"
    COMPOSITIONAL = "compositional"


class NormalizationMode(str, Enum):
    """Which samples feed the normalisation statistics"""
    TRAIN_ONLY = "train-only"
    FULL_PERIOD = "full-period"


class CellStatus(str, Enum):
    """Outcome of one matrix cell"""
    OK = "ok"
    FAILED = "failed"


# Dataset-core

class PartitionSpec(BaseModel):
    """Temporal and spatial grouping rule"""
    model_config = ConfigDict(frozen=True)

    temporal: Literal["season", "years", "all"] = "season"
    season_map: Optional[Dict[int, Season]] = None
    year_intervals: List[Tuple[int, int]] = Field(default_factory=list)
    lat_band: Optional[Tuple[float, float]] = None
    cell_ids: Optional[List[int]] = None
    region: Optional[str] = None

    @field_validator('season_map')
    @classmethod
    def check_season_map(cls, v):
        if v is not None and sorted(v) != list(range(1, 13)):
            raise ValueError("season_map must assign every month 1..12 exactly once")
        return v

    @field_validator('year_intervals')
    @classmethod
    def check_intervals(cls, v):
        ordered = sorted(v)
        for start, end in ordered:
            if start > end:
                raise ValueError(f"year interval {start}-{end} is reversed")
        for (_, end), (start, _) in zip(ordered, ordered[1:]):
            if start <= end:
                raise ValueError("year intervals overlap")
        return v

    @field_validator('lat_band')
    @classmethod
    def check_band(cls, v):
        if v is not None:
            lo, hi = v
            if lo > hi or lo < -90 or hi > 90:
                raise ValueError(f"invalid latitude band {v}")
        return v

    @model_validator(mode='after')
    def check_temporal(self):
        if self.temporal == "years" and not self.year_intervals:
            raise ValueError("temporal rule 'years' needs year_intervals")
        if self.lat_band is not None and self.cell_ids is not None:
            raise ValueError("use either lat_band or cell_ids, not both")
        return self


# Divergence and statistical tests

class DivergenceEstimate(BaseModel):
    """One divergence estimate with its provenance"""
    value: float
    estimator: Estimator
    pair_budget: Optional[int] = None
    seed: Optional[int] = None
    bandwidth: Optional[float] = None
    k: Optional[int] = None
    exact: bool = False


class PermutationTestResult(BaseModel):
    """Outcome of a two-sample permutation test"""
    observed: float
    null_samples: List[float]
    p_value: float
    B: int
    seed: int
    statistic_kind: str

    @model_validator(mode='after')
    def check_bounds(self):
        if len(self.null_samples) != self.B:
            raise ValueError("null_samples must have length B")
        if not 1.0 / (self.B + 1) - 1e-15 <= self.p_value <= 1.0:
            raise ValueError("p_value outside [1/(B+1), 1]")
        return self


class CorrelationReport(BaseModel):
    """Pearson, Spearman and OLS summary of paired observations"""
    pearson_r: float = Field(ge=-1.0, le=1.0)
    pearson_p: float = Field(ge=0.0, le=1.0)
    spearman_rho: float = Field(ge=-1.0, le=1.0)
    spearman_p: float = Field(ge=0.0, le=1.0)
    ols_slope: float
    ols_intercept: float
    n: int = Field(ge=3)


class DivergenceSettings(BaseModel):
    """Divergence options shared by the CLI and plans"""
    pair_budget: int = Field(ge=1)
    seed: int = 0
    median_subsample: int = Field(default=5000, ge=2)
    k: int = Field(default=5, ge=1)
    pca_components: int = Field(default=2, ge=1)


# MLP engine

class ArchitectureSpec(BaseModel):
    """MLP hyperparameters without data-dependent dimensions"""
    hidden_layers: int = Field(ge=0)
    width: int = Field(ge=1)
    activation: Activation = Activation.RELU
    dropout: float = Field(default=0.0, ge=0.0, lt=1.0)
    weight_decay: float = Field(default=0.0, ge=0.0)
    learning_rate: float = Field(default=1e-3, gt=0.0)

    def with_dims(self, input_dim: int, output_dim: int) -> "MlpConfig":
        return MlpConfig(**self.model_dump(), input_dim=input_dim, output_dim=output_dim)


class MlpConfig(ArchitectureSpec):
    """Full MLP configuration"""
    input_dim: int = Field(ge=1)
    output_dim: int = Field(ge=1)


class TrainConfig(BaseModel):
    """Training protocol"""
    loss: LossKind
    huber_delta: float = Field(default=1.0, gt=0.0)
    optimizer: OptimizerKind = OptimizerKind.ADAM
    batch_size: Optional[int] = Field(default=None, ge=1)  # None means full batch
    max_epochs: int = Field(default=300, ge=1)
    patience: int = Field(default=20, ge=1)
    min_delta: float = Field(default=1e-7, ge=0.0)
    lr_step_size: Optional[int] = Field(default=None, ge=1)
    lr_gamma: float = Field(default=1.0, gt=0.0, le=1.0)
    seed: int = 0

    @classmethod
    def proxy_protocol(cls, seed: int = 0) -> "TrainConfig":
        """Full-batch Adam, MSE, 300 epochs, patience 20, min_delta 1e-7"""
        return cls(loss=LossKind.MSE, optimizer=OptimizerKind.ADAM, batch_size=None,
                   max_epochs=300, patience=20, min_delta=1e-7, seed=seed)

    @classmethod
    def radiation_protocol(cls, seed: int = 0) -> "TrainConfig":
        """AdamW, Huber, batch 1024, 12 epochs, patience 3, StepLR(3, 0.05)"""
        return cls(loss=LossKind.HUBER, optimizer=OptimizerKind.ADAMW, batch_size=1024,
                   max_epochs=12, patience=3, min_delta=0.0, lr_step_size=3,
                   lr_gamma=0.05, seed=seed)


class TrainRecord(BaseModel):
    """Per-run training history"""
    train_losses: List[float] = Field(default_factory=list)
    val_losses: List[float] = Field(default_factory=list)
    learning_rates: List[float] = Field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    restored_best: bool = False
    stopped_early: bool = False
    final_train_rmse: Optional[float] = None
    config: Dict[str, Any] = Field(default_factory=dict)
    seed: int = 0


class SearchSpace(BaseModel):
    """Random-search space for MLP architectures"""
    hidden_layers: List[int] = Field(default_factory=lambda: [2, 3, 4, 5, 6])
    width: Tuple[int, int] = (64, 1024)
    dropout: Tuple[float, float] = (0.0, 0.25)
    weight_decay: Tuple[float, float] = (1e-5, 1e-2)
    learning_rate: Tuple[float, float] = (5e-4, 1e-2)
    activations: List[Activation] = Field(
        default_factory=lambda: [Activation.RELU, Activation.GELU, Activation.TANH]
    )

    @model_validator(mode='after')
    def check_space(self):
        if not self.hidden_layers or not self.activations:
            raise ValueError("search space has an empty choice set")
        for name in ('width', 'dropout', 'weight_decay', 'learning_rate'):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"search range {name} is empty")
        if self.width[0] < 1 or self.weight_decay[0] <= 0 or self.learning_rate[0] <= 0:
            raise ValueError("log-uniform ranges must be positive")
        if self.dropout[0] < 0 or self.dropout[1] >= 1:
            raise ValueError("dropout range must lie in [0, 1)")
        return self


# Physical model

class ParamSpec(BaseModel):
    """One entry of the physical parameter registry"""
    name: str
    value: float
    lo: float
    hi: float
    stage: Stage
    active: bool = True

    @model_validator(mode='after')
    def check_bounds(self):
        if not self.lo <= self.value <= self.hi:
            raise ValueError(f"{self.name}={self.value} outside [{self.lo}, {self.hi}]")
        return self


class CalibrationSettings(BaseModel):
    """Staged calibration options"""
    stages: List[Stage] = Field(default_factory=lambda: [Stage.CLEAR, Stage.CLOUDY, Stage.JOINT])
    tol: float = Field(default=1e-10, gt=0.0)
    max_iter: int = Field(default=2000, ge=1)


class CalibrationResult(BaseModel):
    """Fitted parameters and optimisation trace"""
    parameters: List[ParamSpec]
    initial_objective: float
    final_objective: float
    stage_trace: Dict[str, List[float]] = Field(default_factory=dict)
    iterations: Dict[str, int] = Field(default_factory=dict)
    converged: bool = False


# Harness

class SplitSettings(BaseModel):
    """Time-contiguous split fractions"""
    val_fraction: float = Field(default=0.10, gt=0.0, lt=1.0)
    test_fraction: float = Field(default=0.20, ge=0.0, lt=1.0)


class ModelSpec(BaseModel):
    """One entry of the model roster"""
    id: str
    kind: ModelKind
    architecture: Optional[ArchitectureSpec] = None
    training: Optional[TrainConfig] = None
    calibration: CalibrationSettings = Field(default_factory=CalibrationSettings)

    @model_validator(mode='after')
    def check_kind(self):
        if self.kind != ModelKind.PHYSICAL and (self.architecture is None or self.training is None):
            raise ValueError(f"model {self.id} needs architecture and training sections")
        return self


class ExperimentPlan(BaseModel):
    """Robustness matrix plan"""
    data: str
    manifest: str
    partition: PartitionSpec
    models: List[ModelSpec]
    seeds: List[int]
    error_loss: ErrorLoss = ErrorLoss.MAE
    divergence: DivergenceSettings
    split: SplitSettings = Field(default_factory=SplitSettings)
    log_columns: Optional[List[str]] = None
    log_epsilon: float = Field(default=1e-8, gt=0.0)
    variable_groups: Dict[str, List[str]] = Field(default_factory=dict)
    workers: int = Field(default=1, ge=1)

    @field_validator('seeds')
    @classmethod
    def distinct_seeds(cls, v):
        if not v or len(set(v)) != len(v):
            raise ValueError("seeds must be a non-empty list of distinct integers")
        return v

    @field_validator('models')
    @classmethod
    def distinct_models(cls, v):
        ids = [m.id for m in v]
        if not ids or len(set(ids)) != len(ids):
            raise ValueError("model ids must be non-empty and distinct")
        return v


class RobustnessRecord(BaseModel):
    """One (train group, test group, model, seed) cell"""
    train_group: str
    test_group: str
    model_id: str
    seed: int
    loss_ood: Optional[float] = None
    loss_id: Optional[float] = None
    e_r: Optional[float] = None
    energy_distance: Optional[float] = Field(default=None, ge=0.0)
    region: Optional[str] = None
    variable_group_e_r: Dict[str, float] = Field(default_factory=dict)
    normalizer_hash: Optional[str] = None
    status: CellStatus = CellStatus.OK
    failure: Optional[str] = None


class ShiftRegression(BaseModel):
    """Regression of mean log relative error on energy distance"""
    grouping: str
    category: str
    slope: float
    intercept: float
    pearson_r: float
    pearson_p: float
    spearman_rho: float
    spearman_p: float
    n: int


class ProxySplit(BaseModel):
    """Train groups vs held-out OOD groups under one partition rule"""
    partition: PartitionSpec
    train_groups: List[str]
    test_groups: List[str]

    @model_validator(mode='after')
    def check_groups(self):
        if not self.train_groups or not self.test_groups:
            raise ValueError("proxy split needs train and test groups")
        if set(self.train_groups) & set(self.test_groups):
            raise ValueError("proxy split train and test groups overlap")
        return self


class ProxyStudyPlan(BaseModel):
    """Seasonal-proxy study plan"""
    data: str
    manifest: str
    first: ProxySplit
    second: ProxySplit
    n_architectures: int = Field(default=200, ge=3)
    seed: int = 42
    percentile: float = Field(default=90.0, gt=0.0, lt=100.0)
    val_fraction: float = Field(default=0.10, gt=0.0, lt=1.0)
    space: SearchSpace = Field(default_factory=SearchSpace)
    workers: int = Field(default=1, ge=1)


class ProxyRow(BaseModel):
    """Paired RMSEs of one architecture under both splits"""
    architecture: int
    config: Dict[str, Any]
    first_train_rmse: Optional[float] = None
    first_id_rmse: Optional[float] = None
    first_ood_rmse: Optional[float] = None
    second_train_rmse: Optional[float] = None
    second_id_rmse: Optional[float] = None
    second_ood_rmse: Optional[float] = None
    retained: bool = False
    failure: Optional[str] = None


class ProxyStudyResult(BaseModel):
    """Outcome of the seasonal-proxy study"""
    correlation: CorrelationReport
    rows: List[ProxyRow]
    ood_id_iqr: Dict[str, float]
    n_excluded: int


class ShiftScanRow(BaseModel):
    """Permutation tests of one comparison period against the reference"""
    interval: Tuple[int, int]
    n_reference: int
    n_comparison: int
    tests: Dict[str, PermutationTestResult]


class SyntheticConfig(BaseModel):
    """Synthetic dataset generator options"""
    mode: Literal["covariate", "radiation"] = "covariate"
    n_years: int = Field(default=4, ge=1)
    start_year: int = 1979
    n_lat: int = Field(default=6, ge=1)
    n_lon: int = Field(default=8, ge=1)
    lat_range: Tuple[float, float] = (-60.0, 60.0)
    n_features: int = Field(default=3, ge=1)
    shift_magnitude: float = Field(default=1.0, ge=0.0)
    trend_magnitude: float = Field(default=0.0, ge=0.0)
    mapping: Literal["linear", "quadratic", "sine"] = "quadratic"
    noise: float = Field(default=0.01, ge=0.0)

    @field_validator('lat_range')
    @classmethod
    def check_lat_range(cls, v):
        lo, hi = v
        if not -90.0 <= lo <= hi <= 90.0:
            raise ValueError(f"invalid lat_range {v}")
        return v
