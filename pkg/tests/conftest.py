import numpy as np
import pytest

from flex_scheduler.load_data import DeviceSignature
from flex_scheduler.market import MarketSeries, generate_synthetic_market
from flex_scheduler.schemas import MixtureComponent, SyntheticDeviceConfig
from flex_scheduler.simulation import Dataset, builtin_categories
from flex_scheduler.user_flexibility import ContextKey
from tests.factories import make_market


@pytest.fixture()
def signature() -> DeviceSignature:
    return DeviceSignature(per_hour_demand=(1.0, 1.0))


@pytest.fixture()
def context() -> ContextKey:
    return ContextKey(weekday_class="weekday", season="winter")


@pytest.fixture()
def flat_market() -> MarketSeries:
    return make_market(np.full(72, 0.3))


@pytest.fixture()
def synthetic_market() -> MarketSeries:
    return generate_synthetic_market(seed=5, n_days=60)


@pytest.fixture()
def regular_household() -> SyntheticDeviceConfig:
    return builtin_categories()["regular_household"]


@pytest.fixture()
def evening_device() -> SyntheticDeviceConfig:
    """Runs every day at 19:00 for two hours."""
    return SyntheticDeviceConfig(
        category="evening",
        activation_probability=[1.0] * 7,
        ready_hours=[MixtureComponent(weight=1.0, mean=19, std=0.01)],
        flex_rate=0.05,
        signature=[1.0, 0.5],
    )


@pytest.fixture()
def synthetic_dataset(regular_household) -> Dataset:
    return Dataset.from_synthetic(regular_household, seed=7, n_days=60)
