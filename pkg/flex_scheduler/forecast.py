"""
Next-day device activity prediction.

A day-level naive Bayes classifier decides whether a day presents an operation. When it does,
two hour-level linear regressions predict the earliest start (first ready action) and the
latest end (next ready action), and both predictions are turned into discretised truncated
normal distributions over a 48-hour horizon.
"""

import datetime
import functools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm
from sklearn.linear_model import LinearRegression

from .exceptions import (
    ContractViolation,
    DimensionError,
    DomainError,
    EmptySupportError,
    InsufficientDataError,
    RangeError,
)
from .load_data import CalendarFeatures, calendar_features
from .schemas import (
    DayModelDocument,
    DistributionDocument,
    ForecastModelsDocument,
    HourModelDocument,
    ObservedDayDocument,
)
from .settings import ForecastSettings
from .typing import Any, FloatArray, Hashable, Iterable, Optional, Sequence, TypeVar

__all__ = [
    "ActivityForecast",
    "DayModel",
    "DayPrediction",
    "ForecastDistribution",
    "ForecastModels",
    "HourModel",
    "ObservedDay",
    "OneLevelModel",
    "PredictionScore",
    "build_distribution",
    "clamp_hour",
    "encode_features",
    "evaluate_predictions",
    "forecast_activity",
    "predict_day",
    "predict_hour",
    "predict_one_level",
    "predict_two_level",
    "prequential_update",
    "select_top_decile",
    "train_day_model",
    "train_forecast_models",
    "train_hour_model",
    "train_one_level",
]


logger = logging.getLogger(__name__)

K = TypeVar("K", bound=Hashable)

HORIZON = 48
N_CALENDAR_FEATURES = 25
SEASON_INDEX = {"winter": 0, "spring": 1, "summer": 2, "autumn": 3}

# day of week, week of year, month, weekend, season
DAY_FEATURE_SIZES = (7, 53, 12, 2, 4)


def encode_features(features: CalendarFeatures) -> FloatArray:
    """One-hot day of week, month and season, raw week number and a weekend flag."""
    row = np.zeros(N_CALENDAR_FEATURES, dtype=float)
    row[features.day_of_week] = 1.0
    row[7 + features.month - 1] = 1.0
    row[19 + SEASON_INDEX[features.season]] = 1.0
    row[23] = float(features.week_of_year)
    row[24] = float(features.is_weekend)
    return row


def _day_categories(features: CalendarFeatures) -> tuple[int, ...]:
    return (
        features.day_of_week,
        features.week_of_year - 1,
        features.month - 1,
        int(features.is_weekend),
        SEASON_INDEX[features.season],
    )


def clamp_hour(value: float, horizon: int = HORIZON) -> float:
    return min(max(float(value), 0.0), float(horizon - 1))


# Day level


@dataclass
class DayModel:
    """Naive Bayes over categorical calendar features with additive smoothing."""

    alpha: float = 1.0
    class_counts: FloatArray = field(default_factory=lambda: np.zeros(2, dtype=float))
    """Observed days per class, inactive first."""

    feature_counts: list[FloatArray] = field(
        default_factory=lambda: [np.zeros((2, size), dtype=float) for size in DAY_FEATURE_SIZES],
    )

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            msg = "The smoothing pseudo-count must be positive."
            raise DomainError(msg)

    @property
    def training_count(self) -> int:
        return int(self.class_counts.sum())

    def update(self, features: CalendarFeatures, active: bool) -> None:
        label = int(active)
        self.class_counts[label] += 1
        for counts, category in zip(self.feature_counts, _day_categories(features)):
            counts[label, category] += 1

    def priors(self) -> FloatArray:
        return (self.class_counts + self.alpha) / (self.class_counts.sum() + 2 * self.alpha)

    def conditionals(self, index: int) -> FloatArray:
        """P(feature value | class) of one feature, one row per class."""
        counts = self.feature_counts[index]
        return (counts + self.alpha) / (self.class_counts[:, None] + self.alpha * counts.shape[1])

    def to_document(self) -> DayModelDocument:
        return DayModelDocument(
            alpha=self.alpha,
            class_counts=self.class_counts.tolist(),
            feature_counts=[counts.tolist() for counts in self.feature_counts],
            training_count=self.training_count,
        )

    @classmethod
    def from_document(cls, document: DayModelDocument) -> "DayModel":
        return cls(
            alpha=document.alpha,
            class_counts=np.asarray(document.class_counts, dtype=float),
            feature_counts=[np.asarray(counts, dtype=float) for counts in document.feature_counts],
        )


def train_day_model(days: Iterable[tuple[CalendarFeatures, bool]], alpha: float = 1.0) -> DayModel:
    model = DayModel(alpha=alpha)
    for features, active in days:
        model.update(features, active)

    if model.training_count == 0:
        msg = "The day-level model needs at least one training day."
        raise InsufficientDataError(msg)
    return model


def predict_day(model: DayModel, features: CalendarFeatures) -> float:
    """Posterior probability that a day presents an operation."""
    log_joint = np.log(model.priors())
    for index, category in enumerate(_day_categories(features)):
        log_joint = log_joint + np.log(model.conditionals(index)[:, category])
    return float(np.exp(log_joint[1] - np.logaddexp(log_joint[0], log_joint[1])))


# Hour level


@dataclass(frozen=True)
class HourModel:
    weights: tuple[float, ...]
    intercept: float
    residual_std: float
    training_count: int = 0
    fallback: bool = False
    """Intercept-only model fitted because the design carried no variation."""

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def to_document(self) -> HourModelDocument:
        return HourModelDocument(
            weights=list(self.weights),
            intercept=self.intercept,
            residual_std=self.residual_std,
            training_count=self.training_count,
            fallback=self.fallback,
        )

    @classmethod
    def from_document(cls, document: HourModelDocument) -> "HourModel":
        return cls(
            weights=tuple(document.weights),
            intercept=document.intercept,
            residual_std=document.residual_std,
            training_count=document.training_count,
            fallback=document.fallback,
        )


def train_hour_model(
    samples: Sequence[tuple[Sequence[float], float]],
    min_std: float = 0.5,
    horizon: int = HORIZON,
) -> HourModel:
    """
    Ordinary least squares of target hours on feature vectors.
    Collinear encodings resolve to the minimum-norm solution; a design with no variation
    at all falls back to the mean of the targets.
    """
    if len(samples) < 2:  # noqa: PLR2004
        msg = "An hour-level model needs at least two samples."
        raise InsufficientDataError(msg)

    design = np.vstack([np.asarray(features, dtype=float) for features, _ in samples])
    targets = np.asarray([target for _, target in samples], dtype=float)
    if np.any(targets < 0) or np.any(targets > horizon - 1):
        msg = f"Target hours must lie in [0, {horizon - 1}]."
        raise RangeError(msg)

    centered = design - design.mean(axis=0)
    if np.linalg.matrix_rank(centered) == 0:
        logger.warning("Hour model design has no variation, fitting the mean of %d targets.", len(targets))
        weights = np.zeros(design.shape[1], dtype=float)
        intercept = float(targets.mean())
        fallback = True
    else:
        regression = LinearRegression().fit(design, targets)
        weights = np.asarray(regression.coef_, dtype=float)
        intercept = float(regression.intercept_)
        fallback = False

    residuals = targets - (design @ weights + intercept)
    return HourModel(
        weights=tuple(float(weight) for weight in weights),
        intercept=intercept,
        residual_std=max(float(residuals.std()), min_std),
        training_count=len(targets),
        fallback=fallback,
    )


def predict_hour(model: HourModel, features: Sequence[float]) -> float:
    """Unclamped hour prediction. Callers clamp the result to the horizon."""
    row = np.asarray(features, dtype=float)
    if row.shape != (model.n_features,):
        msg = f"Expected {model.n_features} features, got {row.size}."
        raise DimensionError(msg)
    return float(row @ np.asarray(model.weights, dtype=float) + model.intercept)


# Distributions


@dataclass(frozen=True)
class ForecastDistribution:
    support: tuple[int, ...]
    pmf: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "support", tuple(int(hour) for hour in self.support))
        object.__setattr__(self, "pmf", tuple(float(probability) for probability in self.pmf))
        if not self.support or len(self.support) != len(self.pmf):
            msg = "A forecast distribution needs a non-empty support with one probability per hour."
            raise EmptySupportError(msg)
        if any(later <= earlier for earlier, later in zip(self.support, self.support[1:])):
            msg = "Forecast support must be strictly increasing."
            raise ContractViolation(msg)
        if any(probability < 0 for probability in self.pmf) or abs(math.fsum(self.pmf) - 1) > 1e-9:
            msg = "Forecast probabilities must be non-negative and sum to one."
            raise ContractViolation(msg)

    @classmethod
    def point_mass(cls, hour: int) -> "ForecastDistribution":
        return cls(support=(hour,), pmf=(1.0,))

    def __iter__(self) -> Any:
        return iter(zip(self.support, self.pmf))

    def __len__(self) -> int:
        return len(self.support)

    def probability(self, hour: int) -> float:
        try:
            return self.pmf[self.support.index(hour)]
        except ValueError:
            return 0.0

    def mode(self) -> int:
        """Most probable hour, the earliest one on ties."""
        highest = max(self.pmf)
        return next(hour for hour, probability in self if probability >= highest - 1e-12)

    def mean(self) -> float:
        return float(np.dot(self.support, self.pmf))

    def to_document(self) -> DistributionDocument:
        return DistributionDocument(support=list(self.support), pmf=list(self.pmf))

    @classmethod
    def from_document(cls, document: DistributionDocument) -> "ForecastDistribution":
        return cls(support=tuple(document.support), pmf=tuple(document.pmf))


def build_distribution(
    mean: float,
    std: float,
    lo: int,
    hi: int,
    trim: float = 1e-4,
    horizon: int = HORIZON,
) -> ForecastDistribution:
    """
    Discretised normal density on the integer hours of `[lo, hi]`, renormalised.
    Hours whose probability falls below `trim` are dropped before renormalising again.
    """
    if std <= 0:
        msg = "Forecast deviation must be positive."
        raise DomainError(msg)
    if hi < lo:
        msg = f"Empty forecast window [{lo}, {hi}]."
        raise EmptySupportError(msg)
    if lo < 0 or hi > horizon - 1:
        msg = f"Forecast window [{lo}, {hi}] leaves the {horizon}-hour horizon."
        raise EmptySupportError(msg)

    hours = np.arange(lo, hi + 1)
    density = norm.pdf(hours, loc=mean, scale=std)
    total = density.sum()
    if not np.isfinite(total) or total <= 0:
        # The whole window lies far in one tail.
        return ForecastDistribution.point_mass(int(np.clip(round(mean), lo, hi)))

    pmf = density / total
    keep = pmf >= trim
    if not keep.any():
        keep = pmf == pmf.max()
    hours, pmf = hours[keep], pmf[keep]
    return ForecastDistribution(support=tuple(hours), pmf=tuple(pmf / pmf.sum()))


def _window(mean: float, std: float, floor: int, ceiling: int, settings: ForecastSettings) -> ForecastDistribution:
    spread = settings.support_sigmas * std
    lo = int(np.clip(math.floor(mean - spread), floor, ceiling))
    hi = int(np.clip(math.ceil(mean + spread), floor, ceiling))
    return build_distribution(mean, std, lo, hi, trim=settings.trim, horizon=settings.horizon)


@dataclass(frozen=True)
class ActivityForecast:
    day: datetime.date
    day_probability: float
    t_es_point: float
    """Clamped point prediction of the earliest start."""

    t_es_dist: ForecastDistribution
    t_le_conditional: dict[int, ForecastDistribution]

    def __post_init__(self) -> None:
        if self.day_probability <= 0.5:  # noqa: PLR2004
            msg = "Activity forecasts exist only for days predicted active."
            raise ContractViolation(msg)
        for t_es in self.t_es_dist.support:
            conditional = self.t_le_conditional.get(t_es)
            if conditional is None or conditional.support[0] < t_es:
                msg = f"Latest-end distribution for earliest start {t_es} is missing or starts before it."
                raise ContractViolation(msg)

    def marginal_latest_end(self) -> ForecastDistribution:
        """P(T_le) obtained by summing each conditional against the earliest-start pmf."""
        weights: dict[int, float] = {}
        for t_es, p_es in self.t_es_dist:
            for t_le, p_le in self.t_le_conditional[t_es]:
                weights[t_le] = weights.get(t_le, 0.0) + p_es * p_le

        support = sorted(weights)
        pmf = np.array([weights[hour] for hour in support])
        return ForecastDistribution(support=tuple(support), pmf=tuple(pmf / pmf.sum()))


def forecast_activity(
    day_model: DayModel,
    es_model: HourModel,
    le_model: HourModel,
    day: datetime.date,
    signature_length: int = 1,
    settings: Optional[ForecastSettings] = None,
    *,
    es_shift: float = 0.0,
) -> Optional[ActivityForecast]:
    """
    Forecast the flexibility window of `day`, or `None` when the day is predicted inactive.
    Latest-end supports start strictly after `t_es + signature_length`.
    `es_shift` hours are added to the earliest-start point forecast before it is clamped.
    """
    settings = settings or ForecastSettings()
    features = calendar_features(day)
    probability = predict_day(day_model, features)
    if probability <= 0.5:  # noqa: PLR2004
        return None

    last_hour = settings.horizon - 1
    latest_start = last_hour - signature_length - 1
    if latest_start < 0:
        msg = f"A {signature_length}-hour operation does not fit the {settings.horizon}-hour horizon."
        raise EmptySupportError(msg)

    row = encode_features(features)
    es_point = clamp_hour(predict_hour(es_model, row) + es_shift, settings.horizon)
    t_es_dist = _window(min(es_point, latest_start), es_model.residual_std, 0, latest_start, settings)

    conditionals: dict[int, ForecastDistribution] = {}
    for t_es in t_es_dist.support:
        le_point = clamp_hour(predict_hour(le_model, np.append(row, t_es)), settings.horizon)
        conditionals[t_es] = _window(le_point, le_model.residual_std, t_es + signature_length + 1, last_hour, settings)

    return ActivityForecast(
        day=day,
        day_probability=probability,
        t_es_point=es_point,
        t_es_dist=t_es_dist,
        t_le_conditional=conditionals,
    )


def select_top_decile(predictions: Sequence[tuple[K, float]]) -> list[tuple[K, float]]:
    """The ceil(N / 10) highest-probability items; ties go to the earlier id."""
    count = math.ceil(len(predictions) / 10)
    ranked = sorted(predictions, key=lambda item: (-item[1], item[0]))
    return ranked[:count]


# Prequential model bundle


@dataclass(frozen=True)
class ObservedDay:
    day: datetime.date
    active: bool
    t_es: Optional[int] = None
    """Hour of the first ready action of the day."""

    t_le: Optional[int] = None
    """Hour of the next ready action, relative to the day's midnight and capped at the horizon."""

    def __post_init__(self) -> None:
        if self.active and (self.t_es is None or self.t_le is None):
            msg = "An active day needs its earliest start and latest end hours."
            raise ContractViolation(msg)

    def to_document(self) -> ObservedDayDocument:
        return ObservedDayDocument(day=self.day, active=self.active, t_es=self.t_es, t_le=self.t_le)

    @classmethod
    def from_document(cls, document: ObservedDayDocument) -> "ObservedDay":
        return cls(day=document.day, active=document.active, t_es=document.t_es, t_le=document.t_le)


@dataclass
class ForecastModels:
    """Day and hour models of one device, with the history needed to refit them."""

    day_model: DayModel
    es_model: HourModel
    le_model: HourModel
    history: list[ObservedDay]
    settings: ForecastSettings = field(default_factory=ForecastSettings)

    def forecast(self, day: datetime.date, signature_length: int, *, es_shift: float = 0.0) -> Optional[ActivityForecast]:
        return forecast_activity(
            self.day_model,
            self.es_model,
            self.le_model,
            day,
            signature_length,
            self.settings,
            es_shift=es_shift,
        )

    def to_document(self) -> ForecastModelsDocument:
        return ForecastModelsDocument(
            day_model=self.day_model.to_document(),
            es_model=self.es_model.to_document(),
            le_model=self.le_model.to_document(),
            history=[observed.to_document() for observed in self.history],
            window_days=self.settings.window_days,
        )

    @classmethod
    def from_document(
        cls,
        document: ForecastModelsDocument,
        settings: Optional[ForecastSettings] = None,
    ) -> "ForecastModels":
        settings = (settings or ForecastSettings()).model_copy(update={"window_days": document.window_days})
        return cls(
            day_model=DayModel.from_document(document.day_model),
            es_model=HourModel.from_document(document.es_model),
            le_model=HourModel.from_document(document.le_model),
            history=[ObservedDay.from_document(observed) for observed in document.history],
            settings=settings,
        )


@functools.lru_cache(maxsize=4096)
def _calendar_row(day: datetime.date) -> FloatArray:
    row = encode_features(calendar_features(day))
    row.setflags(write=False)
    return row


def _hour_samples(history: Iterable[ObservedDay]) -> tuple[list[tuple[FloatArray, float]], ...]:
    es_samples: list[tuple[FloatArray, float]] = []
    le_samples: list[tuple[FloatArray, float]] = []
    for observed in history:
        if not observed.active:
            continue
        row = _calendar_row(observed.day)
        es_samples.append((row, float(observed.t_es)))
        le_samples.append((np.append(row, observed.t_es), float(observed.t_le)))
    return es_samples, le_samples


def _recent(history: Sequence[ObservedDay], window_days: Optional[int]) -> list[ObservedDay]:
    if window_days is None or not history:
        return list(history)
    latest = max(observed.day for observed in history)
    return [observed for observed in history if (latest - observed.day).days < window_days]


def train_forecast_models(
    days: Sequence[ObservedDay],
    settings: Optional[ForecastSettings] = None,
) -> ForecastModels:
    settings = settings or ForecastSettings()
    day_model = train_day_model(((calendar_features(observed.day), observed.active) for observed in days), settings.alpha)
    es_samples, le_samples = _hour_samples(_recent(days, settings.window_days))
    horizon = settings.horizon
    return ForecastModels(
        day_model=day_model,
        es_model=train_hour_model(es_samples, settings.min_std, horizon),
        le_model=train_hour_model(le_samples, settings.min_std, horizon),
        history=list(days),
        settings=settings,
    )


def prequential_update(models: ForecastModels, observed: ObservedDay) -> ForecastModels:
    """Count the observed day in the day model and refit both hour models on the (windowed) history."""
    models.day_model.update(calendar_features(observed.day), observed.active)
    models.history.append(observed)
    if not observed.active:
        return models

    es_samples, le_samples = _hour_samples(_recent(models.history, models.settings.window_days))
    if len(es_samples) >= 2:  # noqa: PLR2004
        models.es_model = train_hour_model(es_samples, models.settings.min_std, models.settings.horizon)
        models.le_model = train_hour_model(le_samples, models.settings.min_std, models.settings.horizon)
    return models


# Evaluation and the 1-level baseline


@dataclass(frozen=True)
class DayPrediction:
    day: datetime.date
    active: bool
    hour: Optional[float] = None
    hours: tuple[float, ...] = ()
    """Every predicted start of the day, when there is more than the point `hour`."""

    @property
    def predicted_hours(self) -> tuple[float, ...]:
        if self.hours:
            return self.hours
        return () if self.hour is None else (self.hour,)


@dataclass(frozen=True)
class PredictionScore:
    day_accuracy: float
    hour_rmse: Optional[float]
    n_days: int
    n_hour_pairs: int


def evaluate_predictions(predictions: Sequence[DayPrediction], observed: Sequence[ObservedDay]) -> PredictionScore:
    """
    Share of days classified correctly, and the RMSE of predicted hours on days active in both.
    A day with several predicted starts adds one error per start.
    """
    actual = {day.day: day for day in observed}
    hits = 0
    errors: list[float] = []
    for prediction in predictions:
        truth = actual[prediction.day]
        hits += prediction.active == truth.active
        if prediction.active and truth.active:
            errors.extend(hour - truth.t_es for hour in prediction.predicted_hours)

    rmse = math.sqrt(float(np.mean(np.square(errors)))) if errors else None
    return PredictionScore(
        day_accuracy=hits / len(predictions) if predictions else 0.0,
        hour_rmse=rmse,
        n_days=len(predictions),
        n_hour_pairs=len(errors),
    )


def predict_two_level(models: ForecastModels, day: datetime.date) -> DayPrediction:
    features = calendar_features(day)
    if predict_day(models.day_model, features) <= 0.5:  # noqa: PLR2004
        return DayPrediction(day=day, active=False)
    settings = models.settings
    point = predict_hour(models.es_model, encode_features(features))
    window = _window(clamp_hour(point, settings.horizon), models.es_model.residual_std, 0, settings.horizon - 1, settings)
    return DayPrediction(day=day, active=True, hour=float(window.mode()))


@dataclass(frozen=True)
class OneLevelModel:
    """A single regression scoring every hour of a day for the start of an operation."""

    weights: tuple[float, ...]
    intercept: float

    def score(self, day: datetime.date) -> FloatArray:
        calendar = np.tile(encode_features(calendar_features(day)), (24, 1))
        design = np.hstack([calendar, np.eye(24)])
        return design @ np.asarray(self.weights) + self.intercept


def train_one_level(days: Sequence[ObservedDay]) -> OneLevelModel:
    if not days:
        msg = "The 1-level baseline needs at least one training day."
        raise InsufficientDataError(msg)

    rows: list[FloatArray] = []
    targets: list[float] = []
    for observed in days:
        calendar = encode_features(calendar_features(observed.day))
        for hour in range(24):
            rows.append(np.concatenate([calendar, np.eye(24)[hour]]))
            targets.append(float(observed.active and observed.t_es == hour))

    regression = LinearRegression().fit(np.vstack(rows), np.asarray(targets))
    return OneLevelModel(weights=tuple(float(weight) for weight in regression.coef_), intercept=float(regression.intercept_))


def predict_one_level(model: OneLevelModel, days: Sequence[datetime.date]) -> list[DayPrediction]:
    """
    Score every (day, hour) slot and keep the top decile of slots. A day is predicted active
    when any of its slots was kept; each kept slot is one predicted start, best-scoring first.
    """
    slots = [((index, hour), float(score)) for index, day in enumerate(days) for hour, score in enumerate(model.score(day))]
    kept: dict[int, list[int]] = defaultdict(list)
    for (index, hour), _ in select_top_decile(slots):
        kept[index].append(hour)

    return [
        DayPrediction(
            day=day,
            active=index in kept,
            hour=float(kept[index][0]) if index in kept else None,
            hours=tuple(float(hour) for hour in kept.get(index, ())),
        )
        for index, day in enumerate(days)
    ]
