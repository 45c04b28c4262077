__version__ = "0.1.0"

from .flexoffer import FlexOffer, ProbabilisticFlexOffer, collapse_to_standard, enumerate_intervals, make_flexoffer
from .forecast import ForecastModels, forecast_activity, train_forecast_models
from .load_data import DeviceSignature, EventSeries, LoadSeries, extract_events, extract_signature, ingest_load_csv
from .market import MarketSeries, ingest_market_csv, reg_savings, spot_savings
from .pipeline import BasePipeline
from .scheduler import ScheduleProposal, expected_utility, objective, schedule
from .settings import Settings
from .user_flexibility import ContextKey, UniformFlexModel, UserFlexModel, fit_offline

try:
    import uvloop

    uvloop.install()  # pragma: no cover
except ImportError:
    pass


__all__ = [
    "BasePipeline",
    "ContextKey",
    "DeviceSignature",
    "EventSeries",
    "FlexOffer",
    "ForecastModels",
    "LoadSeries",
    "MarketSeries",
    "ProbabilisticFlexOffer",
    "ScheduleProposal",
    "Settings",
    "UniformFlexModel",
    "UserFlexModel",
    "collapse_to_standard",
    "enumerate_intervals",
    "expected_utility",
    "extract_events",
    "extract_signature",
    "fit_offline",
    "forecast_activity",
    "ingest_load_csv",
    "ingest_market_csv",
    "make_flexoffer",
    "objective",
    "reg_savings",
    "schedule",
    "spot_savings",
    "train_forecast_models",
]
