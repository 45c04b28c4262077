from __future__ import annotations

from typing import (
    TYPE_CHECKING,
    Any,
    Callable,
    ClassVar,
    Hashable,
    Iterable,
    Iterator,
    Literal,
    Optional,
    Protocol,
    Sequence,
    TypeAlias,
    TypeGuard,
    TypeVar,
    Union,
)

if TYPE_CHECKING:
    import datetime

    import numpy as np
    import numpy.typing as npt

    from .user_flexibility import ContextKey, FeedbackObservation


__all__ = [
    "Any",
    "Callable",
    "ClassVar",
    "Hashable",
    "Iterable",
    "Iterator",
    "Literal",
    "Optional",
    "Protocol",
    "Sequence",
    "TypeAlias",
    "TypeGuard",
    "TypeVar",
    "Union",
]


Hour: TypeAlias = int
Money: TypeAlias = float
FloatArray: TypeAlias = "npt.NDArray[np.float64]"
BoolArray: TypeAlias = "npt.NDArray[np.bool_]"
IntArray: TypeAlias = "npt.NDArray[np.int64]"

Season: TypeAlias = Literal["winter", "spring", "summer", "autumn"]
WeekdayClass: TypeAlias = Literal["weekday", "weekend"]
OracleMode: TypeAlias = Literal["deadline", "stochastic", "both"]
FlexModelKind: TypeAlias = Literal["adaptive", "uniform"]
OfferKind: TypeAlias = Literal["probabilistic", "standard"]
Scenario: TypeAlias = Literal["predicted", "ideal"]
Predictor: TypeAlias = Literal["two_level", "one_level"]
ResetPeriod: TypeAlias = Literal["season", "month", "never"]
RejectionTarget: TypeAlias = Literal["proposed", "manual"]
Outcome: TypeAlias = Literal["accepted", "rejected"]
SeriesKind: TypeAlias = Literal["load", "market"]
Command: TypeAlias = Literal["ingest", "signature", "train", "schedule", "simulate", "compare"]
ExperimentName: TypeAlias = Literal["learning_rate", "predictor", "flexibility", "offer"]

DataDict: TypeAlias = dict[str, Any]
DataConditional: TypeAlias = tuple[Any, DataDict]
DataReturn: TypeAlias = Union[DataDict, DataConditional, None]
LogicCallable: TypeAlias = Callable[..., DataReturn]
PipelineLogic: TypeAlias = Union[LogicCallable, Iterable["PipelineLogic"]]
PipelinesDict: TypeAlias = dict[Command, PipelineLogic]


class FlexibilityModel(Protocol):
    """Anything the scheduler can ask for the probability that a delay is accepted."""

    def acceptance_probability(self, context: ContextKey, delay: float) -> float: ...

    def update_online(self, observation: FeedbackObservation) -> None: ...

    def maybe_reinitialize(self, day: datetime.date) -> None: ...

    def rates(self) -> dict[str, float]: ...

