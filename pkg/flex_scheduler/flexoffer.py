"""Standard and probabilistic flex-offers, and the weighted flexibility intervals the scheduler works on."""

import logging
import math
from dataclasses import dataclass

from .exceptions import ContractViolation, InfeasibleFlexOfferError
from .forecast import ActivityForecast, ForecastDistribution
from .load_data import DeviceSignature
from .schemas import ConditionalDocument, FlexOfferDocument, ProbabilisticFlexOfferDocument, SliceDocument
from .typing import Hour, Sequence

__all__ = [
    "EnergySlice",
    "FlexInterval",
    "FlexOffer",
    "ProbabilisticFlexOffer",
    "collapse_to_standard",
    "dropped_mass",
    "enumerate_intervals",
    "make_flexoffer",
]


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnergySlice:
    """Energy (kWh) of one operation hour. Amount flexibility is fixed: `e_min == e_max`."""

    e_min: float
    e_max: float

    def __post_init__(self) -> None:
        if self.e_min <= 0 or self.e_max < self.e_min:
            msg = f"Invalid energy slice [{self.e_min}, {self.e_max}]."
            raise ContractViolation(msg)

    @property
    def energy(self) -> float:
        return self.e_min


def _profile(demand: Sequence[float]) -> tuple[EnergySlice, ...]:
    return tuple(EnergySlice(energy, energy) for energy in demand)


def _profile_documents(profile: Sequence[EnergySlice]) -> list[SliceDocument]:
    return [SliceDocument(e_min=piece.e_min, e_max=piece.e_max) for piece in profile]


def _profile_from_documents(documents: Sequence[SliceDocument]) -> tuple[EnergySlice, ...]:
    return tuple(EnergySlice(document.e_min, document.e_max) for document in documents)


@dataclass(frozen=True)
class FlexOffer:
    t_es: Hour
    t_ls: Hour
    profile: tuple[EnergySlice, ...]

    def __post_init__(self) -> None:
        if not self.profile:
            msg = "A flex-offer needs at least one energy slice."
            raise ContractViolation(msg)
        if self.t_ls < self.t_es:
            msg = f"Latest start {self.t_ls} precedes earliest start {self.t_es}."
            raise InfeasibleFlexOfferError(msg)

    @property
    def duration(self) -> int:
        return len(self.profile)

    @property
    def t_le(self) -> Hour:
        return self.t_ls + self.duration

    @property
    def time_flexibility(self) -> int:
        return self.t_ls - self.t_es

    @property
    def energy(self) -> tuple[float, ...]:
        return tuple(piece.energy for piece in self.profile)

    def as_probabilistic(self) -> "ProbabilisticFlexOffer":
        return ProbabilisticFlexOffer.from_window(self.t_es, self.t_le, self.profile)

    def to_document(self) -> FlexOfferDocument:
        return FlexOfferDocument(t_es=self.t_es, t_ls=self.t_ls, profile=_profile_documents(self.profile))

    @classmethod
    def from_document(cls, document: FlexOfferDocument) -> "FlexOffer":
        return cls(t_es=document.t_es, t_ls=document.t_ls, profile=_profile_from_documents(document.profile))


def make_flexoffer(t_es: Hour, t_le: Hour, signature: DeviceSignature) -> FlexOffer:
    k = signature.length
    if t_le - t_es < k:
        msg = f"A {k}-hour operation does not fit between {t_es} and {t_le}."
        raise InfeasibleFlexOfferError(msg)
    return FlexOffer(t_es=t_es, t_ls=t_le - k, profile=_profile(signature.per_hour_demand))


@dataclass(frozen=True)
class FlexInterval:
    t_es: Hour
    t_ls: Hour
    probability: float

    def __post_init__(self) -> None:
        if self.t_ls < self.t_es or self.probability <= 0:
            msg = f"Invalid flexibility interval [{self.t_es}, {self.t_ls}] with probability {self.probability}."
            raise ContractViolation(msg)

    def contains(self, t: Hour) -> bool:
        return self.t_es <= t <= self.t_ls


@dataclass(frozen=True)
class ProbabilisticFlexOffer:
    t_es_dist: ForecastDistribution
    t_le_conditional: dict[Hour, ForecastDistribution]
    profile: tuple[EnergySlice, ...]

    def __post_init__(self) -> None:
        if not self.profile:
            msg = "A flex-offer needs at least one energy slice."
            raise ContractViolation(msg)
        for t_es in self.t_es_dist.support:
            conditional = self.t_le_conditional.get(t_es)
            if conditional is None:
                msg = f"No latest-end distribution for earliest start {t_es}."
                raise ContractViolation(msg)
            if conditional.support[0] < t_es:
                msg = f"Latest-end support starts before earliest start {t_es}."
                raise ContractViolation(msg)

    @property
    def duration(self) -> int:
        return len(self.profile)

    @classmethod
    def from_forecast(cls, forecast: ActivityForecast, signature: DeviceSignature) -> "ProbabilisticFlexOffer":
        return cls(
            t_es_dist=forecast.t_es_dist,
            t_le_conditional=dict(forecast.t_le_conditional),
            profile=_profile(signature.per_hour_demand),
        )

    @classmethod
    def from_window(cls, t_es: Hour, t_le: Hour, profile: Sequence[EnergySlice]) -> "ProbabilisticFlexOffer":
        return cls(
            t_es_dist=ForecastDistribution.point_mass(t_es),
            t_le_conditional={t_es: ForecastDistribution.point_mass(t_le)},
            profile=tuple(profile),
        )

    def with_manual_flexibility(self, hours: int) -> "ProbabilisticFlexOffer":
        """Replace every latest end by `t_es + duration + hours`."""
        return ProbabilisticFlexOffer(
            t_es_dist=self.t_es_dist,
            t_le_conditional={
                t_es: ForecastDistribution.point_mass(t_es + self.duration + hours) for t_es in self.t_es_dist.support
            },
            profile=self.profile,
        )

    def to_document(self) -> ProbabilisticFlexOfferDocument:
        return ProbabilisticFlexOfferDocument(
            t_es_dist=self.t_es_dist.to_document(),
            t_le_conditional=[
                ConditionalDocument(t_es=t_es, support=list(dist.support), pmf=list(dist.pmf))
                for t_es, dist in sorted(self.t_le_conditional.items())
            ],
            profile=_profile_documents(self.profile),
        )

    @classmethod
    def from_document(cls, document: ProbabilisticFlexOfferDocument) -> "ProbabilisticFlexOffer":
        return cls(
            t_es_dist=ForecastDistribution.from_document(document.t_es_dist),
            t_le_conditional={
                conditional.t_es: ForecastDistribution(tuple(conditional.support), tuple(conditional.pmf))
                for conditional in document.t_le_conditional
            },
            profile=_profile_from_documents(document.profile),
        )


def enumerate_intervals(pfo: ProbabilisticFlexOffer) -> list[FlexInterval]:
    """
    One interval per feasible (t_es, t_le) pair, weighted by the joint probability.
    Infeasible pairs are dropped and the rest are not renormalised.
    """
    k = pfo.duration
    intervals: list[FlexInterval] = []
    for t_es, p_es in pfo.t_es_dist:
        for t_le, p_le in pfo.t_le_conditional[t_es]:
            probability = p_es * p_le
            if t_le - t_es < k or probability <= 0:
                continue
            intervals.append(FlexInterval(t_es=t_es, t_ls=t_le - k, probability=probability))

    intervals.sort(key=lambda interval: (interval.t_es, interval.t_ls))
    return intervals


def dropped_mass(pfo: ProbabilisticFlexOffer) -> float:
    """Joint probability of the pairs `enumerate_intervals` drops as infeasible."""
    return max(0.0, 1.0 - math.fsum(interval.probability for interval in enumerate_intervals(pfo)))


def collapse_to_standard(pfo: ProbabilisticFlexOffer) -> FlexOffer:
    """Standard flex-offer at the modal earliest start and its modal latest end."""
    t_es = pfo.t_es_dist.mode()
    t_le = pfo.t_le_conditional[t_es].mode()
    if t_le - t_es < pfo.duration:
        msg = f"The modal window [{t_es}, {t_le}] cannot hold a {pfo.duration}-hour operation."
        raise InfeasibleFlexOfferError(msg)
    return FlexOffer(t_es=t_es, t_ls=t_le - pfo.duration, profile=pfo.profile)
