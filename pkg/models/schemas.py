from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import List, Optional, Dict, Any, Literal, Union
from enum import Enum

from config import settings

NEVER = "never"

class MatrixKind(str, Enum):
    UNITARY = "unitary"
    SIC_POVM = "sic_povm"
    MUB = "mub"
    AMUB = "amub"
    DFT_ROWS = "dft_rows"
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli"
    GOLD_AUGMENTED = "gold_augmented"
    SIC_AUGMENTED = "sic_augmented"
    CUSTOM = "custom"

class DetectorVariant(str, Enum):
    IDEAL = "ideal"
    OPTIMAL = "optimal"
    AGGREGATE = "aggregate"
    ENERGY = "energy"
    CORRELATOR = "correlator"
    PSE = "pse"
    SGD_AGGREGATE = "sgd_aggregate"
    SGD_ENERGY = "sgd_energy"
    SGD_CORRELATOR = "sgd_correlator"

class CodeFamily(str, Enum):
    SIC_POVM = "sic_povm"
    GOLD = "gold"

class FiducialSource(str, Enum):
    ANALYTIC = "analytic"
    NUMERIC_SEARCH = "numeric_search"
    FILE_IMPORT = "file_import"

# Scenario Models
class VarianceBounds(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma_min_sq: float = Field(..., gt=0, description="Lower bound on in-support signal variances")
    sigma_max_sq: float = Field(..., gt=0, description="Upper bound on in-support signal variances")

    @model_validator(mode="after")
    def validate_order(self):
        if self.sigma_min_sq > self.sigma_max_sq:
            raise ValueError("sigma_min_sq must not exceed sigma_max_sq")
        return self

class Scenario(BaseModel):
    """
    Full generative description of one run: y[t] = A_S x_S[t] + n[t] for t >= change_point.
    Support indices are 0-based.
    """
    model_config = ConfigDict(frozen=True)

    M: int = Field(..., ge=1, description="Measurement dimension")
    N: int = Field(..., ge=1, description="Signal dimension")
    K: int = Field(..., ge=1, description="Sparsity level")
    support: List[int]
    signal_variances: List[float]
    noise_variance: float = Field(..., gt=0)
    change_point: Union[int, Literal["never"]] = Field(20, description="First post-change time index or 'never'")

    @field_validator("change_point")
    @classmethod
    def validate_change_point(cls, v):
        if v != NEVER and v < 0:
            raise ValueError("change_point must be non-negative or 'never'")
        return v

    @model_validator(mode="after")
    def validate_dimensions(self):
        if self.N < self.M:
            raise ValueError("N must be at least M")
        if self.K > self.N:
            raise ValueError("K must not exceed N")
        if len(self.support) != self.K or len(set(self.support)) != self.K:
            raise ValueError("support must hold K distinct indices")
        if any(i < 0 or i >= self.N for i in self.support):
            raise ValueError("support indices must lie in [0, N-1]")
        if len(self.signal_variances) != self.K:
            raise ValueError("signal_variances must have length K")
        if any(v <= 0 for v in self.signal_variances):
            raise ValueError("signal variances must be strictly positive")
        return self

    @property
    def never_changes(self) -> bool:
        return self.change_point == NEVER

    def is_post_change(self, t: int) -> bool:
        return not self.never_changes and t >= self.change_point

class ScenarioSpec(BaseModel):
    """Scenario template; M and N come from the sensing matrix, support and variances may be drawn per trial."""
    K: int = Field(..., ge=1)
    noise_variance: float = Field(1.0, gt=0)
    snr_db: Optional[float] = Field(None, description="Sets a common sigma_x^2 through the SNR definition")
    sigma_x_sq: Optional[float] = Field(None, gt=0, description="Common in-support variance")
    variance_bounds: Optional[VarianceBounds] = Field(None, description="Per-trial variances drawn uniformly in the bounds")
    support: Optional[List[int]] = Field(None, description="Fixed support; drawn per trial when omitted")
    change_point: int = Field(20, ge=0, description="Change point for delay runs")

    @model_validator(mode="after")
    def validate_signal_power(self):
        given = [self.snr_db is not None, self.sigma_x_sq is not None, self.variance_bounds is not None]
        if sum(given) != 1:
            raise ValueError("exactly one of snr_db, sigma_x_sq, variance_bounds is required")
        if self.support is not None and len(set(self.support)) != self.K:
            raise ValueError("support must hold K distinct indices")
        return self

class MatrixSpec(BaseModel):
    kind: MatrixKind
    M: Optional[int] = Field(None, ge=1, description="Rows (dimension d for sic_povm / mub / amub)")
    N: Optional[int] = Field(None, ge=1, description="Columns")
    seed: Optional[int] = Field(None, ge=0, description="Seed for random kinds and fiducial search")
    fiducial_path: Optional[str] = None
    path: Optional[str] = Field(None, description="Matrix file for kind=custom")

    @model_validator(mode="after")
    def validate_shape(self):
        if self.kind == MatrixKind.CUSTOM:
            if not self.path:
                raise ValueError("custom matrices need a path")
        elif self.kind in (MatrixKind.GOLD_AUGMENTED, MatrixKind.SIC_AUGMENTED):
            raise ValueError("augmented matrices are built by the random-access experiment")
        elif self.M is None:
            raise ValueError("M is required")
        return self

# Detector Models
class DetectorSpec(BaseModel):
    variant: DetectorVariant
    label: Optional[str] = None
    threshold: Optional[float] = Field(None, gt=0)
    variance_known: bool = Field(True, description="False: pdf approximations use sigma_min^2 from the bounds")
    sparsity_known: bool = True
    K_max: Optional[int] = Field(None, ge=1, description="Run one CUSUM per k <= K_max (unknown sparsity)")
    K_p: Optional[int] = Field(None, ge=1, description="PSE partial support size (defaults to K)")
    a: float = Field(0.01, ge=0, description="SGD step size")
    c: float = Field(0.05, gt=0, description="SGD finite-difference width")
    subset_cap: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def validate_sparsity(self):
        if not self.sparsity_known and self.K_max is None:
            raise ValueError("K_max is required when sparsity is unknown")
        return self

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        return self.variant.value if self.sparsity_known else f"{self.variant.value}_kmax{self.K_max}"

class StoppingReport(BaseModel):
    stopping_time: Optional[int] = Field(None, description="None when censored at the horizon")
    censored: bool = False
    support_estimate: Optional[List[int]] = None
    true_support: Optional[List[int]] = None
    trace: Optional[List[float]] = None
    trial_index: Optional[int] = None

# Experiment Models
class ExperimentConfig(BaseModel):
    name: str = "experiment"
    scenario: ScenarioSpec
    matrix: MatrixSpec
    detectors: List[DetectorSpec] = Field(..., min_length=1)
    thresholds: List[float] = Field(..., min_length=1)
    trials: int = Field(1000, ge=1)
    arl_trials: Optional[int] = Field(None, ge=1, description="Defaults to trials")
    horizon: int = Field(default_factory=lambda: settings.DEFAULT_HORIZON, ge=1)
    seed: int = Field(0, ge=0)
    threads: int = Field(default_factory=lambda: settings.DEFAULT_THREADS, ge=1)
    out: Optional[str] = None
    target_arl: float = Field(5000.0, gt=0, description="T_r target for recovery studies")
    calibration_trials: int = Field(200, ge=10)
    min_retained: int = Field(10, ge=1)

    @field_validator("thresholds")
    @classmethod
    def validate_thresholds(cls, v):
        if any(t <= 0 for t in v):
            raise ValueError("thresholds must be positive")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("thresholds must be strictly increasing")
        return v

    @model_validator(mode="after")
    def validate_horizon(self):
        if self.horizon <= self.scenario.change_point:
            raise ValueError("horizon must exceed the change point")
        return self

class RandomAccessConfig(BaseModel):
    name: str = "random_access"
    P: int = Field(..., ge=1, description="Number of users")
    Delta: int = Field(..., ge=0, description="Maximum timing offset")
    family: CodeFamily
    d: Optional[int] = Field(None, ge=2, description="SIC-POVM dimension")
    n: Optional[int] = Field(None, ge=3, description="Gold degree")
    fiducial_path: Optional[str] = None
    K: int = Field(..., ge=1, description="Entering users")
    snr_db: float
    noise_variance: float = Field(1.0, gt=0)
    change_point: int = Field(20, ge=0)
    detectors: List[DetectorSpec] = Field(..., min_length=1)
    thresholds: List[float] = Field(..., min_length=1)
    trials: int = Field(500, ge=1)
    arl_trials: Optional[int] = Field(None, ge=1)
    horizon: int = Field(default_factory=lambda: settings.DEFAULT_HORIZON, ge=1)
    seed: int = Field(0, ge=0)
    threads: int = Field(default_factory=lambda: settings.DEFAULT_THREADS, ge=1)
    out: Optional[str] = None
    min_retained: int = Field(10, ge=1)

    @field_validator("thresholds")
    @classmethod
    def validate_thresholds(cls, v):
        if any(t <= 0 for t in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("thresholds must be positive and strictly increasing")
        return v

    @model_validator(mode="after")
    def validate_family(self):
        if self.family == CodeFamily.SIC_POVM and self.d is None:
            raise ValueError("d is required for SIC-POVM codes")
        if self.family == CodeFamily.GOLD and self.n is None:
            raise ValueError("n is required for Gold codes")
        return self

# Result Models
class TradeoffPoint(BaseModel):
    threshold: float
    arl: float
    arl_stderr: float
    arl_censored: int
    arl_lower_bound: bool
    delay: float
    delay_stderr: float
    delay_retained: int
    false_alarms: int
    delay_censored: int

class CurveMetadata(BaseModel):
    config_hash: str
    seed: int
    trials: int
    arl_trials: int
    horizon: int
    change_point: int
    wall_time: Optional[float] = Field(None, description="Seconds; logged but never written to result files")

class TradeoffCurve(BaseModel):
    detector: str
    points: List[TradeoffPoint]
    metadata: CurveMetadata

class RecoveryResult(BaseModel):
    detector: str
    threshold: float
    achieved_arl: float
    recovery_pct: float
    recovery_stderr: float
    trials: int

class IdentificationPoint(BaseModel):
    detector: str
    threshold: float
    identification_pct: float
    identification_stderr: float
    trials: int

class RandomAccessResult(BaseModel):
    coherence: float
    rows: int
    columns: int
    capacity: int
    curves: List[TradeoffCurve]
    identification: List[IdentificationPoint]

class MatrixInfo(BaseModel):
    kind: MatrixKind
    M: int
    N: int
    coherence: float
    provenance: Dict[str, Any] = {}

# Request Models
class DetectRequest(BaseModel):
    config: ExperimentConfig
    detector_index: int = Field(0, ge=0)
    change_point: Optional[int] = Field(None, ge=0, description="Overrides the scenario change point")
    no_change: bool = False
    trial_index: int = Field(0, ge=0)
    record_trace: bool = False

# Generic API Response
class APIResponse(BaseModel):
    success: bool
    message: str
    data: Optional[Any] = None
