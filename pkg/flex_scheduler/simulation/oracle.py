"""A simulated user who accepts or rejects proposed schedules."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigurationError
from ..typing import Hour, OracleMode, Optional, Outcome, Union
from ..user_flexibility import ContextKey, FeedbackObservation

__all__ = [
    "GroundTruth",
    "OracleUser",
    "UserDecision",
    "simulate_user_decision",
]


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroundTruth:
    """What the user actually did on a day, in hours from its midnight."""

    t_es: Optional[Hour] = None
    """Hour of the ready action, `None` when the device was not used."""

    next_ready: Optional[Hour] = None
    """Hour of the following ready action, `None` when there is none."""


@dataclass(frozen=True)
class OracleUser:
    mode: OracleMode = "both"
    rates: dict[ContextKey, float] = field(default_factory=dict)
    """True flexibility rate per context, needed by the stochastic modes."""

    def __post_init__(self) -> None:
        if self.mode != "deadline" and len(self.rates) < len(ContextKey.all()):
            msg = f"The {self.mode!r} oracle needs a true flexibility rate for every context."
            raise ConfigurationError(msg)

    def rate(self, context: ContextKey) -> float:
        return self.rates[context]


@dataclass(frozen=True)
class UserDecision:
    outcome: Outcome
    delay: int
    """Proposed start minus the actual ready hour."""

    manual_delay: Optional[int] = None
    feedback: Optional[FeedbackObservation] = None

    @property
    def accepted(self) -> bool:
        return self.outcome == "accepted"


def simulate_user_decision(
    oracle: OracleUser,
    chosen_t: Hour,
    duration: int,
    truth: GroundTruth,
    context: ContextKey,
    seed: Union[int, np.random.Generator],
) -> UserDecision:
    """
    Decide on a proposal to start a `duration`-hour operation at `chosen_t`.

    A proposal for a day without an operation, or before the device is ready, is rejected
    without feedback. Otherwise the deadline rule requires the operation to end before the
    next ready action, and the stochastic rule accepts a delay with the true survival
    probability. Deadline rejections start the device at once; other rejections start it
    manually at a uniformly drawn hour before the proposed one.
    """
    rng = np.random.default_rng(seed)
    if truth.t_es is None:
        return UserDecision(outcome="rejected", delay=0)

    delay = chosen_t - truth.t_es
    if delay < 0:
        return UserDecision(outcome="rejected", delay=delay, manual_delay=0)

    draw = rng.random()
    if delay == 0:
        return UserDecision(
            outcome="accepted",
            delay=0,
            feedback=FeedbackObservation(context=context, delay=0, outcome="accepted"),
        )

    meets_deadline = truth.next_ready is None or chosen_t + duration <= truth.next_ready
    if oracle.mode == "deadline":
        accepted = meets_deadline
    else:
        survives = draw < math.exp(-oracle.rate(context) * delay)
        accepted = survives and (meets_deadline or oracle.mode == "stochastic")

    if accepted:
        return UserDecision(
            outcome="accepted",
            delay=delay,
            feedback=FeedbackObservation(context=context, delay=delay, outcome="accepted"),
        )

    if oracle.mode != "stochastic" and not meets_deadline:
        manual_delay = 0
    else:
        slack = delay - 1 if truth.next_ready is None else truth.next_ready - duration - truth.t_es
        manual_delay = int(rng.integers(0, max(min(delay - 1, slack), 0) + 1))

    return UserDecision(
        outcome="rejected",
        delay=delay,
        manual_delay=manual_delay,
        feedback=FeedbackObservation(context=context, delay=delay, outcome="rejected", manual_delay=manual_delay),
    )
