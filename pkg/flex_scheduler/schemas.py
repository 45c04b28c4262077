"""
Pydantic documents for every JSON artifact the package reads or writes,
and the configuration files of the simulation harness.
"""

import datetime

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .settings import RunSettings, Settings
from .typing import ExperimentName, Literal, OracleMode, Optional, Outcome

__all__ = [
    "BucketDocument",
    "CandidateDocument",
    "ConditionalDocument",
    "DatasetSource",
    "DayModelDocument",
    "DistributionDocument",
    "ExperimentConfig",
    "FlexOfferDocument",
    "ForecastModelsDocument",
    "HourModelDocument",
    "IntervalContributionDocument",
    "MixtureComponent",
    "ModelBundleDocument",
    "ObservedDayDocument",
    "ProbabilisticFlexOfferDocument",
    "ProposalDocument",
    "ProposalRowDocument",
    "RunReport",
    "SeriesDocument",
    "SignatureDocument",
    "SliceDocument",
    "SyntheticDeviceConfig",
    "UserFlexModelDocument",
]


class Document(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class SeriesDocument(Document):
    """Validated store of an ingested load or market series."""

    kind: Literal["load", "market"]
    device_id: Optional[str] = None
    start: datetime.datetime
    columns: dict[str, list[float]]
    flags: dict[str, list[bool]] = {}


class SignatureDocument(Document):
    per_hour_demand: list[float]
    length: int


class HourModelDocument(Document):
    kind: Literal["hour_model"] = "hour_model"
    weights: list[float]
    intercept: float
    residual_std: float
    training_count: int
    fallback: bool = False


class DayModelDocument(Document):
    kind: Literal["day_model"] = "day_model"
    alpha: float = Field(gt=0)
    class_counts: list[float]
    feature_counts: list[list[list[float]]]
    training_count: int


class ObservedDayDocument(Document):
    day: datetime.date
    active: bool
    t_es: Optional[int] = None
    t_le: Optional[int] = None


class ForecastModelsDocument(Document):
    kind: Literal["forecast_models"] = "forecast_models"
    day_model: DayModelDocument
    es_model: HourModelDocument
    le_model: HourModelDocument
    history: list[ObservedDayDocument]
    window_days: Optional[int] = None


class DistributionDocument(Document):
    support: list[int]
    pmf: list[float]


class SliceDocument(Document):
    e_min: float
    e_max: float


class FlexOfferDocument(Document):
    t_es: int
    t_ls: int
    profile: list[SliceDocument]


class ConditionalDocument(DistributionDocument):
    t_es: int


class ProbabilisticFlexOfferDocument(Document):
    t_es_dist: DistributionDocument
    t_le_conditional: list[ConditionalDocument]
    profile: list[SliceDocument]


class BucketDocument(Document):
    weekday_class: Literal["weekday", "weekend"]
    season: Literal["winter", "spring", "summer", "autumn"]
    rate: float = Field(alias="lambda", gt=0)
    mu0: float = Field(gt=0)
    n: int = Field(ge=0)
    time_scale: float = Field(default=1.0, gt=0)
    last_reset: Optional[datetime.date] = None


class UserFlexModelDocument(Document):
    kind: Literal["adaptive", "uniform"] = "adaptive"
    decay: float = 50.0
    buckets: list[BucketDocument] = []


class ModelBundleDocument(Document):
    """Everything `train` fits for one device."""

    device_id: str
    signature: SignatureDocument
    forecast: ForecastModelsDocument
    flexibility: UserFlexModelDocument


class IntervalContributionDocument(Document):
    t_es: int
    t_ls: int
    probability: float
    delta_spot: float
    delta_reg: float
    acceptance_prob: float
    contribution: float


class CandidateDocument(Document):
    t: int
    expected_utility: float
    per_interval: list[IntervalContributionDocument] = []


class ProposalDocument(Document):
    device_id: str
    day: Optional[datetime.date] = None
    chosen_t: int
    reference_t_es: int
    expected_utility: float
    delta_spot: float
    delta_reg: float
    candidates: list[CandidateDocument]


class ProposalRowDocument(Document):
    device: str
    date: str
    t_es: int
    chosen_t: int
    delay: int
    delta_spot: float
    delta_reg: float
    acceptance_prob: float
    outcome: Outcome


class RunReport(Document):
    """Metrics of one prequential run, or the average of several."""

    name: str = "run"
    acceptance_rate: float = 0.0
    spot_savings_pct: float = 0.0
    reg_savings_pct: float = 0.0
    day_accuracy: float = 0.0
    hour_rmse: Optional[float] = None
    n_proposals: int = 0
    n_accepted: int = 0
    n_rejected: int = 0
    n_test_days: int = 0
    n_predicted_active: int = 0
    n_feedback: int = 0
    spot_savings: float = 0.0
    reg_savings: float = 0.0
    unconditional_savings: float = 0.0
    rates: dict[str, float] = {}
    true_rates: dict[str, float] = {}
    seeds: list[int] = []
    config_digest: str = ""
    proposals: list[ProposalRowDocument] = []


class MixtureComponent(Document):
    weight: float = Field(gt=0, le=1)
    mean: float = Field(ge=0, le=23)
    std: float = Field(gt=0)


class SyntheticDeviceConfig(Document):
    """A synthetic household category and the device it operates."""

    category: str
    device_kind: Literal["dishwasher", "washing_machine"] = "dishwasher"
    activation_probability: list[float] = Field(min_length=7, max_length=7)
    """Probability of an operation on each weekday, Monday first."""

    ready_hours: list[MixtureComponent] = Field(min_length=1, max_length=3)
    flex_rate: float = Field(gt=0)
    """True flexibility rate (1/hours) of the simulated user."""

    flex_rate_overrides: dict[str, float] = {}
    """Rates for specific contexts, keyed `weekday-winter`, `weekend-summer`, ..."""

    signature: list[float] = Field(min_length=1)
    duration_jitter: dict[int, float] = {0: 1.0}
    """Probability of each deviation (hours) from the signature length."""

    @field_validator("activation_probability")
    @classmethod
    def check_probabilities(cls, value: list[float]) -> list[float]:
        if any(not 0 <= probability <= 1 for probability in value):
            msg = "Activation probabilities must lie in [0, 1]."
            raise ValueError(msg)
        return value

    @field_validator("signature")
    @classmethod
    def check_signature(cls, value: list[float]) -> list[float]:
        if any(energy <= 0 for energy in value):
            msg = "Signature energy values must be positive."
            raise ValueError(msg)
        return value

    @field_validator("flex_rate_overrides")
    @classmethod
    def check_overrides(cls, value: dict[str, float]) -> dict[str, float]:
        for key, rate in value.items():
            weekday_class, _, season = key.partition("-")
            if weekday_class not in {"weekday", "weekend"} or season not in {"winter", "spring", "summer", "autumn"}:
                msg = f"Unknown flexibility context {key!r}."
                raise ValueError(msg)
            if rate <= 0:
                msg = f"Flexibility rate for {key!r} must be positive."
                raise ValueError(msg)
        return value

    @model_validator(mode="after")
    def check_distributions(self) -> "SyntheticDeviceConfig":
        if abs(sum(component.weight for component in self.ready_hours) - 1) > 1e-9:
            msg = "Ready-hour mixture weights must sum to 1."
            raise ValueError(msg)
        if any(probability < 0 for probability in self.duration_jitter.values()):
            msg = "Duration jitter probabilities must be non-negative."
            raise ValueError(msg)
        if abs(sum(self.duration_jitter.values()) - 1) > 1e-9:
            msg = "Duration jitter probabilities must sum to 1."
            raise ValueError(msg)
        return self


class DatasetSource(Document):
    """A recorded device whose load CSV is read from disk."""

    device_id: str
    load_csv: str
    oracle_rate: Optional[float] = Field(default=None, gt=0)
    """Flexibility rate of the simulated user when the oracle needs one."""


class ExperimentConfig(Document):
    """Experiment file for `simulate` and `compare`."""

    name: str = "experiment"
    seed: int = 42
    n_days: int = Field(default=365, ge=2)
    start_date: datetime.date = datetime.date(2017, 1, 1)
    categories: list[str] = []
    """Names of built-in synthetic categories. Empty means all of them, unless devices or datasets are given."""

    devices: list[SyntheticDeviceConfig] = []
    datasets: list[DatasetSource] = []
    market_csv: Optional[str] = None
    oracle_mode: Optional[OracleMode] = None
    mu_grid: list[float] = [0.04, 0.08, 0.16]
    flexibility_grid: list[int] = list(range(0, 23, 2))
    n_shuffles: Optional[int] = Field(default=None, ge=1)
    forecast_noise: Optional[float] = Field(default=None, ge=0)
    """Deviation (hours) of the earliest-start noise in the flex-offer comparison, also the minimum forecast deviation."""

    experiments: list[ExperimentName] = ["learning_rate", "predictor", "flexibility", "offer"]

    run: RunSettings = RunSettings()
    settings: Settings = Settings()
