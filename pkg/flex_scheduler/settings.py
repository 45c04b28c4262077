"""Tunable parameters, grouped by the module that consumes them."""

from pydantic import BaseModel, ConfigDict, Field

from .typing import FlexModelKind, OfferKind, OracleMode, Optional, Predictor, RejectionTarget, ResetPeriod, Scenario

__all__ = [
    "DetectionSettings",
    "FlexibilitySettings",
    "ForecastSettings",
    "MarketSettings",
    "RunSettings",
    "Settings",
    "SimulationSettings",
]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DetectionSettings(_Section):
    on_threshold: float = Field(default=0.05, gt=0)
    """Hourly energy (kWh) at or above which a device counts as operating."""

    idle_gap: int = Field(default=1, ge=1)
    """Idle hours required before an operation counts as a new ready action."""


class ForecastSettings(_Section):
    alpha: float = Field(default=1.0, gt=0)
    """Laplace pseudo-count of the day-level model."""

    min_std: float = Field(default=0.5, gt=0)
    support_sigmas: float = Field(default=1.5, gt=0)
    """Half-width of a forecast distribution's window, in residual deviations."""

    trim: float = Field(default=1e-4, ge=0, lt=1)
    horizon: int = Field(default=48, ge=24)
    window_days: Optional[int] = Field(default=None, ge=1)
    """Sliding window for hour-model refits. `None` refits on all history."""


class FlexibilitySettings(_Section):
    mu0: float = Field(default=0.08, gt=0)
    epochs: int = Field(default=20, ge=1)
    decay: float = Field(default=50.0, gt=0)
    """Observation count at which the online learning rate has halved."""

    reset_period: ResetPeriod = "season"
    lambda_floor: float = Field(default=1e-6, gt=0)
    time_unit: float = Field(default=5.0, gt=0)
    """Hours per unit of time in online SGD steps; `mu0` is per squared unit. 1 steps on plain hours."""

    rejection_target: RejectionTarget = "proposed"
    """Delay at which a rejection is regressed: the proposed one, or the manual start."""


class MarketSettings(_Section):
    skip_first_reg_hour: bool = False
    """Sum regulation contributions from the second operation hour."""


class RunSettings(_Section):
    """One variant of the prequential evaluation."""

    flex_model: FlexModelKind = "adaptive"
    scenario: Scenario = "predicted"
    offer_kind: OfferKind = "probabilistic"
    predictor: Predictor = "two_level"
    manual_flexibility: Optional[int] = Field(default=None, ge=0)
    """Replace the forecast latest end with `t_es + k + hours` when set."""

    forecast_noise: Optional[float] = Field(default=None, ge=0)
    """Deviation (hours) of a daily random shift of the earliest-start point forecast."""


class SimulationSettings(_Section):
    oracle_mode: OracleMode = "both"
    train_fraction: float = Field(default=0.8, gt=0, lt=1)
    min_days: int = Field(default=30, ge=2)
    n_shuffles: int = Field(default=10, ge=1)
    workers: int = Field(default=1, ge=1)


class Settings(_Section):
    detection: DetectionSettings = DetectionSettings()
    forecast: ForecastSettings = ForecastSettings()
    flexibility: FlexibilitySettings = FlexibilitySettings()
    market: MarketSettings = MarketSettings()
    simulation: SimulationSettings = SimulationSettings()
