"""Synthetic households: seeded device operations drawn from a category's habits."""

import datetime
import logging
from functools import cache
from importlib import resources

import numpy as np
import yaml
from pydantic import ValidationError
from scipy.stats import truncnorm

from ..exceptions import ConfigurationError
from ..load_data import EventSeries, LoadSeries, OperationEvent, render_load
from ..schemas import SyntheticDeviceConfig
from ..typing import Optional

__all__ = [
    "builtin_categories",
    "generate_synthetic",
    "true_rate",
]


logger = logging.getLogger(__name__)

HOUR = datetime.timedelta(hours=1)
DEFAULT_START = datetime.date(2017, 1, 1)


@cache
def builtin_categories() -> dict[str, SyntheticDeviceConfig]:
    """The household categories shipped with the package, by name."""
    text = resources.files("flex_scheduler").joinpath("categories.yaml").read_text(encoding="utf-8")
    try:
        configs = [SyntheticDeviceConfig(**item) for item in yaml.safe_load(text)]
    except ValidationError as error:
        msg = f"Invalid built-in category: {error}"
        raise ConfigurationError(msg) from error
    return {config.category: config for config in configs}


def true_rate(config: SyntheticDeviceConfig, label: str) -> float:
    """Flexibility rate of the simulated user in the context `weekday-winter`, `weekend-summer`, ..."""
    return config.flex_rate_overrides.get(label, config.flex_rate)


def _ready_hour(config: SyntheticDeviceConfig, rng: np.random.Generator) -> int:
    weights = np.array([component.weight for component in config.ready_hours])
    component = config.ready_hours[int(rng.choice(len(weights), p=weights / weights.sum()))]
    lower = (0 - component.mean) / component.std
    upper = (23 - component.mean) / component.std
    draw = truncnorm.rvs(lower, upper, loc=component.mean, scale=component.std, random_state=rng)
    return int(np.clip(np.rint(draw), 0, 23))


def _energy(config: SyntheticDeviceConfig, duration: int) -> tuple[float, ...]:
    """Signature values, truncated or extended with the last value to `duration` hours."""
    signature = config.signature
    return tuple(signature[min(hour, len(signature) - 1)] for hour in range(duration))


def generate_synthetic(
    config: SyntheticDeviceConfig,
    seed: int,
    n_days: int,
    start_date: datetime.date = DEFAULT_START,
    device_id: Optional[str] = None,
) -> tuple[LoadSeries, EventSeries]:
    """
    Draw at most one operation per day. Operations that would start less than an idle
    hour after the previous one ends are skipped.
    """
    if n_days < 1:
        msg = "Synthetic data needs at least one day."
        raise ConfigurationError(msg)

    device_id = device_id or config.category
    rng = np.random.default_rng(seed)
    start = datetime.datetime.combine(start_date, datetime.time(), tzinfo=datetime.timezone.utc)
    jitters = sorted(config.duration_jitter)
    jitter_weights = np.array([config.duration_jitter[jitter] for jitter in jitters])

    events: list[OperationEvent] = []
    previous_end: Optional[datetime.datetime] = None
    for offset in range(n_days):
        day = start + datetime.timedelta(days=offset)
        if rng.random() >= config.activation_probability[day.weekday()]:
            continue

        hour = _ready_hour(config, rng)
        jitter = jitters[int(rng.choice(len(jitters), p=jitter_weights / jitter_weights.sum()))]
        duration = max(1, len(config.signature) + jitter)
        ready_time = day + hour * HOUR
        if previous_end is not None and ready_time < previous_end + HOUR:
            logger.debug("Skipping operation at %s overlapping the previous one.", ready_time.isoformat())
            continue

        events.append(OperationEvent(ready_time=ready_time, duration_hours=duration, energy_per_hour=_energy(config, duration)))
        previous_end = ready_time + duration * HOUR

    series = EventSeries(device_id=device_id, events=tuple(events))
    return render_load(series, start, n_days * 24), series
