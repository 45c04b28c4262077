"""
Per-user acceptance of schedule delays.

The probability that a user accepts a delay `d` is the survival function `exp(-rate * d)` of an
exponential distribution. The rate is fitted offline to the intervals between a device's ready
actions and adapted online from accept/reject feedback, one rate per context
(weekday class and season).
"""

import datetime
import logging
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ContractViolation, DomainError, InsufficientDataError, InvalidObservationError
from .load_data import EventSeries, season_of
from .schemas import BucketDocument, UserFlexModelDocument
from .settings import FlexibilitySettings
from .typing import FlexibilityModel, Optional, Outcome, RejectionTarget, ResetPeriod, Season, Sequence, Union, WeekdayClass

__all__ = [
    "ContextKey",
    "FeedbackObservation",
    "FlexBucket",
    "UniformFlexModel",
    "UserFlexModel",
    "acceptance_probability",
    "fit_offline",
    "fit_rate",
    "flexibility_model_from_document",
    "reinitialize",
    "sgd_step",
    "squared_error",
    "squared_error_gradient",
    "update_online",
]


logger = logging.getLogger(__name__)

WEEKDAY_CLASSES: tuple[WeekdayClass, ...] = ("weekday", "weekend")
SEASONS: tuple[Season, ...] = ("winter", "spring", "summer", "autumn")


@dataclass(frozen=True, order=True)
class ContextKey:
    weekday_class: WeekdayClass
    season: Season

    @classmethod
    def from_date(cls, day: Union[datetime.date, datetime.datetime]) -> "ContextKey":
        if isinstance(day, datetime.datetime):
            day = day.date()
        return cls(weekday_class="weekend" if day.weekday() >= 5 else "weekday", season=season_of(day.month))  # noqa: PLR2004

    @classmethod
    def from_label(cls, label: str) -> "ContextKey":
        weekday_class, _, season = label.partition("-")
        if weekday_class not in WEEKDAY_CLASSES or season not in SEASONS:
            msg = f"Unknown flexibility context {label!r}."
            raise ContractViolation(msg)
        return cls(weekday_class=weekday_class, season=season)  # type: ignore[arg-type]

    @classmethod
    def all(cls) -> list["ContextKey"]:
        return [cls(weekday_class, season) for weekday_class in WEEKDAY_CLASSES for season in SEASONS]

    @property
    def label(self) -> str:
        return f"{self.weekday_class}-{self.season}"


@dataclass(frozen=True)
class FeedbackObservation:
    context: ContextKey
    delay: float
    """Proposed start minus the original earliest start, in hours."""

    outcome: Outcome
    manual_delay: Optional[float] = None
    """Manual activation time minus the original earliest start, for rejections."""

    def validate(self) -> None:
        if self.delay < 0:
            msg = f"Feedback delay must be non-negative, got {self.delay}."
            raise InvalidObservationError(msg)
        if self.outcome == "accepted":
            return
        if self.manual_delay is None or not 0 <= self.manual_delay < self.delay:
            msg = f"A rejection needs a manual delay in [0, {self.delay}), got {self.manual_delay}."
            raise InvalidObservationError(msg)


# Least squares on the survival function


def squared_error(rate: float, x: float, y: float) -> float:
    return (y - math.exp(-rate * x)) ** 2


def squared_error_gradient(rate: float, x: float, y: float) -> float:
    """d/d(rate) of `(y - exp(-rate * x))**2`."""
    survival = math.exp(-rate * x)
    return 2 * (y - survival) * x * survival


def sgd_step(rate: float, mu: float, x: float, y: float, floor: float = 1e-6) -> float:
    """One gradient step on the squared survival error, floored to keep the rate positive."""
    if rate <= 0 or mu <= 0 or x < 0:
        msg = f"Invalid SGD step: rate={rate}, mu={mu}, x={x}."
        raise DomainError(msg)
    return max(rate - mu * squared_error_gradient(rate, x, y), floor)


@dataclass
class FlexBucket:
    rate: float
    """Rate of the exponential, in 1/hours."""

    mu0: float
    n: int = 0
    time_scale: float = 1.0
    """Hours per unit of time in the online SGD steps. One is the plain hour-scale step."""

    last_reset: Optional[datetime.date] = None

    def __post_init__(self) -> None:
        if self.rate <= 0 or self.mu0 <= 0 or self.n < 0 or self.time_scale <= 0:
            msg = f"Invalid flexibility bucket: rate={self.rate}, mu0={self.mu0}, n={self.n}."
            raise ContractViolation(msg)

    def learning_rate(self, decay: float) -> float:
        return self.mu0 / (1 + self.n / decay)

    def step(self, mu: float, x: float, y: float, floor: float) -> None:
        """SGD step with the delay `x` (hours) measured in units of `time_scale` hours."""
        scale = self.time_scale
        self.rate = max(sgd_step(self.rate * scale, mu, x / scale, y, floor * scale) / scale, floor)

    def copy(self) -> "FlexBucket":
        return FlexBucket(self.rate, self.mu0, self.n, self.time_scale, self.last_reset)


@dataclass
class UserFlexModel:
    buckets: dict[ContextKey, FlexBucket]
    decay: float = 50.0
    reset_period: ResetPeriod = "season"
    lambda_floor: float = 1e-6
    rejection_target: RejectionTarget = "proposed"

    @classmethod
    def constant(cls, rate: float, mu0: float = 0.08, time_scale: float = 1.0, **kwargs: object) -> "UserFlexModel":
        """The same rate in every context."""
        buckets = {context: FlexBucket(rate=rate, mu0=mu0, time_scale=time_scale) for context in ContextKey.all()}
        return cls(buckets=buckets, **kwargs)  # type: ignore[arg-type]

    def bucket(self, context: ContextKey) -> FlexBucket:
        try:
            return self.buckets[context]
        except KeyError as error:
            msg = f"No flexibility bucket for context {context.label!r}."
            raise ContractViolation(msg) from error

    def acceptance_probability(self, context: ContextKey, delay: float) -> float:
        if delay < 0:
            msg = f"Delay must be non-negative, got {delay}."
            raise DomainError(msg)
        return math.exp(-self.bucket(context).rate * delay)

    def update_online(self, observation: FeedbackObservation) -> None:
        """
        One SGD step on the survival observed at the proposed delay: 1 when the user waited,
        0 when they did not. With the "manual" rejection target a rejection is regressed at
        its manual delay instead.
        """
        observation.validate()
        bucket = self.bucket(observation.context)
        if observation.outcome == "accepted":
            x, y = observation.delay, 1.0
        elif self.rejection_target == "manual":
            x, y = float(observation.manual_delay), 0.0
        else:
            x, y = observation.delay, 0.0

        bucket.step(bucket.learning_rate(self.decay), x, y, self.lambda_floor)
        bucket.n += 1
        logger.debug("Context %s: %s at %.1f h, rate %.4f.", observation.context.label, observation.outcome, observation.delay, bucket.rate)

    def reinitialize(self, period_start: datetime.date) -> None:
        for bucket in self.buckets.values():
            bucket.n = 0
            bucket.last_reset = period_start

    def maybe_reinitialize(self, day: datetime.date) -> None:
        """Reset learning rates when `day` starts a new period."""
        if self.reset_period == "never":
            return
        current = _period(day, self.reset_period)
        if any(bucket.last_reset is None or _period(bucket.last_reset, self.reset_period) != current for bucket in self.buckets.values()):
            logger.debug("Resetting flexibility learning rates on %s.", day)
            self.reinitialize(day)

    def rates(self) -> dict[str, float]:
        return {context.label: bucket.rate for context, bucket in sorted(self.buckets.items())}

    def to_document(self) -> UserFlexModelDocument:
        return UserFlexModelDocument(
            kind="adaptive",
            decay=self.decay,
            buckets=[
                BucketDocument(
                    weekday_class=context.weekday_class,
                    season=context.season,
                    rate=bucket.rate,
                    mu0=bucket.mu0,
                    n=bucket.n,
                    time_scale=bucket.time_scale,
                    last_reset=bucket.last_reset,
                )
                for context, bucket in sorted(self.buckets.items())
            ],
        )


def _period(day: datetime.date, reset_period: ResetPeriod) -> tuple[int, object]:
    if reset_period == "month":
        return (day.year, day.month)
    # December belongs to the winter of the following year.
    return (day.year + (day.month == 12), season_of(day.month))  # noqa: PLR2004


class UniformFlexModel:
    """Users accept every delay."""

    def acceptance_probability(self, context: ContextKey, delay: float) -> float:  # noqa: ARG002
        if delay < 0:
            msg = f"Delay must be non-negative, got {delay}."
            raise DomainError(msg)
        return 1.0

    def update_online(self, observation: FeedbackObservation) -> None:
        observation.validate()

    def maybe_reinitialize(self, day: datetime.date) -> None:
        pass

    def rates(self) -> dict[str, float]:
        return {}

    def to_document(self) -> UserFlexModelDocument:
        return UserFlexModelDocument(kind="uniform")


def flexibility_model_from_document(
    document: UserFlexModelDocument,
    settings: Optional[FlexibilitySettings] = None,
) -> Union[UserFlexModel, UniformFlexModel]:
    if document.kind == "uniform":
        return UniformFlexModel()

    settings = settings or FlexibilitySettings()
    buckets = {
        ContextKey(item.weekday_class, item.season): FlexBucket(
            rate=item.rate,
            mu0=item.mu0,
            n=item.n,
            time_scale=item.time_scale,
            last_reset=item.last_reset,
        )
        for item in document.buckets
    }
    return UserFlexModel(
        buckets=buckets,
        decay=document.decay,
        reset_period=settings.reset_period,
        lambda_floor=settings.lambda_floor,
        rejection_target=settings.rejection_target,
    )


# Module level operations


def acceptance_probability(model: FlexibilityModel, context: ContextKey, delay: float) -> float:
    return model.acceptance_probability(context, delay)


def update_online(model: FlexibilityModel, observation: FeedbackObservation) -> FlexibilityModel:
    model.update_online(observation)
    return model


def reinitialize(model: UserFlexModel, period_start: datetime.date) -> UserFlexModel:
    model.reinitialize(period_start)
    return model


def _fit_bucket(
    intervals: np.ndarray,
    mu0: float,
    epochs: int,
    floor: float,
    rng: np.random.Generator,
    time_unit: float = 1.0,
) -> FlexBucket:
    """
    Fit the survival function to empirical survival points. The fit runs in units of the
    mean interval, where the initial rate 1/mean is 1; online steps use `time_unit` hours.
    """
    scale = float(intervals.mean())
    x = intervals / scale
    survival = (intervals[None, :] > intervals[:, None]).mean(axis=1)

    rate = 1.0
    for epoch in range(epochs):
        mu = mu0 / (1 + epoch)
        for index in rng.permutation(len(x)):
            rate = sgd_step(rate, mu, float(x[index]), float(survival[index]), floor * scale)

    return FlexBucket(rate=max(rate / scale, floor), mu0=mu0, time_scale=time_unit)


def fit_rate(
    intervals: Sequence[float],
    mu0: float = 0.08,
    epochs: int = 20,
    seed: int = 0,
    floor: float = 1e-6,
) -> float:
    """Rate (1/hours) of the exponential survival function fitted to a set of inter-ready intervals."""
    values = np.asarray(intervals, dtype=float)
    if values.size == 0 or np.any(values <= 0):
        msg = "Fitting a rate needs at least one positive interval."
        raise InsufficientDataError(msg)
    return _fit_bucket(values, mu0, epochs, floor, np.random.default_rng(seed)).rate


def fit_offline(
    events: EventSeries,
    mu0: float = 0.08,
    epochs: int = 20,
    seed: int = 0,
    settings: Optional[FlexibilitySettings] = None,
) -> UserFlexModel:
    """
    Fit one rate per context to the intervals between consecutive ready actions.
    An interval belongs to the context of the ready action that opens it; contexts
    with fewer than two intervals inherit the fit on all intervals.
    """
    settings = settings or FlexibilitySettings()
    intervals = events.inter_ready_hours()
    if intervals.size == 0:
        msg = "Fitting user flexibility needs at least two operations."
        raise InsufficientDataError(msg)

    rng = np.random.default_rng(seed)
    overall = _fit_bucket(intervals, mu0, epochs, settings.lambda_floor, rng, settings.time_unit)

    grouped: dict[ContextKey, list[float]] = {}
    for event, interval in zip(events, intervals):
        grouped.setdefault(ContextKey.from_date(event.ready_time), []).append(float(interval))

    buckets: dict[ContextKey, FlexBucket] = {}
    for context in ContextKey.all():
        values = grouped.get(context, [])
        if len(values) < 2:  # noqa: PLR2004
            logger.debug("Context %s has %d intervals, using the overall fit.", context.label, len(values))
            buckets[context] = overall.copy()
        else:
            buckets[context] = _fit_bucket(np.asarray(values), mu0, epochs, settings.lambda_floor, rng, settings.time_unit)

    return UserFlexModel(
        buckets=buckets,
        decay=settings.decay,
        reset_period=settings.reset_period,
        lambda_floor=settings.lambda_floor,
        rejection_target=settings.rejection_target,
    )
