"""
Expected-utility scheduling of a probabilistic flex-offer.

For a candidate start `t`, every flexibility interval containing `t` contributes its market
savings, weighted by the probability that the user accepts the delay and by the interval's
own probability. The proposal is the candidate with the highest expected utility.
"""

import datetime
import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import ContractViolation, NoFeasibleScheduleError, RangeError
from .flexoffer import FlexInterval, ProbabilisticFlexOffer, enumerate_intervals
from .market import MarketSeries, SavingsBreakdown, reg_contributions, savings, spot_costs
from .schemas import CandidateDocument, IntervalContributionDocument, ProposalDocument
from .typing import BoolArray, FlexibilityModel, FloatArray, Hour, IntArray, Money, Optional, Sequence
from .user_flexibility import ContextKey

__all__ = [
    "CandidateEvaluation",
    "IntervalContribution",
    "ScheduleProposal",
    "expected_utility",
    "objective",
    "schedule",
]


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IntervalContribution:
    interval: FlexInterval
    delta_spot: Money
    delta_reg: Money
    acceptance_prob: float
    contribution: Money

    def to_document(self) -> IntervalContributionDocument:
        return IntervalContributionDocument(
            t_es=self.interval.t_es,
            t_ls=self.interval.t_ls,
            probability=self.interval.probability,
            delta_spot=self.delta_spot,
            delta_reg=self.delta_reg,
            acceptance_prob=self.acceptance_prob,
            contribution=self.contribution,
        )


@dataclass(frozen=True)
class CandidateEvaluation:
    t: Hour
    expected_utility: Money
    per_interval: tuple[IntervalContribution, ...] = ()

    def to_document(self) -> CandidateDocument:
        return CandidateDocument(
            t=self.t,
            expected_utility=self.expected_utility,
            per_interval=[row.to_document() for row in self.per_interval],
        )


@dataclass(frozen=True)
class ScheduleProposal:
    device_id: str
    chosen_t: Hour
    reference_t_es: Hour
    """Modal earliest start of the flex-offer."""

    expected_utility: Money
    savings: SavingsBreakdown
    """Savings of the chosen start against the reference earliest start."""

    candidates: tuple[CandidateEvaluation, ...]
    day: Optional[datetime.date] = None

    @property
    def delay(self) -> int:
        return self.chosen_t - self.reference_t_es

    def to_document(self) -> ProposalDocument:
        return ProposalDocument(
            device_id=self.device_id,
            day=self.day,
            chosen_t=self.chosen_t,
            reference_t_es=self.reference_t_es,
            expected_utility=self.expected_utility,
            delta_spot=self.savings.delta_spot,
            delta_reg=self.savings.delta_reg,
            candidates=[candidate.to_document() for candidate in self.candidates],
        )


@dataclass(frozen=True)
class _UtilityTable:
    """Utility terms of every candidate start (rows) against every interval (columns)."""

    hours: IntArray
    intervals: tuple[FlexInterval, ...]
    probability: FloatArray
    delta_spot: FloatArray
    delta_reg: FloatArray
    acceptance: FloatArray
    contains: BoolArray

    @property
    def contributions(self) -> FloatArray:
        utility = (self.delta_spot + self.delta_reg) * self.acceptance * self.probability
        return np.where(self.contains, utility, 0.0)

    def values(self) -> FloatArray:
        return self.contributions.sum(axis=1)

    def rows(self, index: int) -> tuple[IntervalContribution, ...]:
        contributions = self.contributions[index]
        return tuple(
            IntervalContribution(
                interval=interval,
                delta_spot=float(self.delta_spot[index, column]),
                delta_reg=float(self.delta_reg[index, column]),
                acceptance_prob=float(self.acceptance[index, column]),
                contribution=float(contributions[column]),
            )
            for column, interval in enumerate(self.intervals)
            if self.contains[index, column]
        )


def _intervals(pfo: ProbabilisticFlexOffer) -> list[FlexInterval]:
    intervals = enumerate_intervals(pfo)
    if not intervals:
        msg = "The flex-offer has no feasible flexibility interval."
        raise NoFeasibleScheduleError(msg)
    return intervals


def _energies(pfo: ProbabilisticFlexOffer) -> tuple[float, ...]:
    return tuple(piece.energy for piece in pfo.profile)


def _utility_table(
    intervals: Sequence[FlexInterval],
    profile: Sequence[float],
    m: MarketSeries,
    flex: FlexibilityModel,
    context: ContextKey,
    *,
    skip_first_hour: bool,
    hours: Optional[IntArray] = None,
) -> _UtilityTable:
    """
    Price every start once and look every delay up once. Without `hours`, the candidates
    are the hours covered by at least one interval.
    """
    t_es = np.array([interval.t_es for interval in intervals])
    t_ls = np.array([interval.t_ls for interval in intervals])
    last_start = len(m) - len(profile)
    if t_es.min() < 0 or t_ls.max() > last_start:
        msg = f"Starts [{t_es.min()}, {t_ls.max()}] leave the {len(m)}-hour market series."
        raise RangeError(msg)

    if hours is None:
        span = np.arange(t_es.min(), t_ls.max() + 1)
        hours = span[((span[:, None] >= t_es) & (span[:, None] <= t_ls)).any(axis=1)]

    delays = hours[:, None] - t_es[None, :]
    contains = (delays >= 0) & (hours[:, None] <= t_ls[None, :])
    curve = np.array([flex.acceptance_probability(context, delay) for delay in range(max(int(delays.max()), 0) + 1)])

    spot = spot_costs(profile, m)
    reg = reg_contributions(profile, m, skip_first_hour=skip_first_hour)
    return _UtilityTable(
        hours=hours,
        intervals=tuple(intervals),
        probability=np.array([interval.probability for interval in intervals]),
        delta_spot=spot[t_es][None, :] - spot[hours][:, None],
        delta_reg=reg[t_es][None, :] - reg[hours][:, None],
        acceptance=np.where(contains, curve[np.clip(delays, 0, None)], 0.0),
        contains=contains,
    )


def expected_utility(
    t: Hour,
    interval: FlexInterval,
    profile: Sequence[float],
    m: MarketSeries,
    flex: FlexibilityModel,
    context: ContextKey,
    *,
    skip_first_hour: bool = False,
) -> Money:
    """Savings of starting at `t` instead of the interval's earliest start, times the acceptance probability."""
    if not interval.contains(t):
        msg = f"Start {t} lies outside the flexibility interval [{interval.t_es}, {interval.t_ls}]."
        raise ContractViolation(msg)
    breakdown = savings(profile, interval.t_es, t, m, skip_first_hour=skip_first_hour)
    return breakdown.total * flex.acceptance_probability(context, t - interval.t_es)


def objective(
    t: Hour,
    pfo: ProbabilisticFlexOffer,
    m: MarketSeries,
    flex: FlexibilityModel,
    context: ContextKey,
    *,
    skip_first_hour: bool = False,
) -> Money:
    """Probability-weighted expected utility of starting at `t`. Intervals not containing `t` add nothing."""
    intervals = _intervals(pfo)
    if not any(interval.contains(t) for interval in intervals):
        return 0.0
    table = _utility_table(intervals, _energies(pfo), m, flex, context, skip_first_hour=skip_first_hour, hours=np.array([t]))
    return float(table.values()[0])


def schedule(
    pfo: ProbabilisticFlexOffer,
    m: MarketSeries,
    flex: FlexibilityModel,
    context: ContextKey,
    device_id: str = "device",
    *,
    day: Optional[datetime.date] = None,
    skip_first_hour: bool = False,
    audit: bool = True,
) -> ScheduleProposal:
    """
    Evaluate every hour of every interval and propose the start with the highest expected utility,
    the earliest one on ties. With `audit=False` the per-interval rows are left out.
    """
    profile = _energies(pfo)
    table = _utility_table(_intervals(pfo), profile, m, flex, context, skip_first_hour=skip_first_hour)
    values = table.values()
    best = int(np.argmax(values))

    candidates = tuple(
        CandidateEvaluation(t=int(hour), expected_utility=float(value), per_interval=table.rows(index) if audit else ())
        for index, (hour, value) in enumerate(zip(table.hours, values))
    )
    chosen = candidates[best]
    reference = pfo.t_es_dist.mode()
    logger.debug("Device %s: proposing hour %d (E=%.6f) over %d candidates.", device_id, chosen.t, chosen.expected_utility, len(candidates))
    return ScheduleProposal(
        device_id=device_id,
        chosen_t=chosen.t,
        reference_t_es=reference,
        expected_utility=chosen.expected_utility,
        savings=savings(profile, reference, chosen.t, m, skip_first_hour=skip_first_hour),
        candidates=candidates,
        day=day,
    )
