"""Hourly spot and regulation market data, and the cost of running an operation at a given hour."""

import datetime
import io
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ContractViolation, MarketGapError, OrderingError, RangeError
from .load_data import _parse_numbers, _parse_timestamps, _read_csv, read_source
from .schemas import SeriesDocument
from .typing import Any, BoolArray, FloatArray, Hour, Money, Sequence, Union

__all__ = [
    "MarketSeries",
    "SavingsBreakdown",
    "generate_synthetic_market",
    "ingest_market_csv",
    "reg_contribution",
    "reg_contributions",
    "reg_savings",
    "savings",
    "shuffle_market",
    "spot_cost",
    "spot_costs",
    "spot_savings",
]


logger = logging.getLogger(__name__)

MARKET_HEADER = ["timestamp", "spot", "up_price", "down_price", "reg_volume"]
PRICE_COLUMNS = ("spot", "up_price", "down_price")


@dataclass(frozen=True, eq=False)
class MarketSeries:
    """Contiguous hourly market records. Prices are per kWh; regulation volume is signed."""

    start: datetime.datetime
    spot: FloatArray
    up_price: FloatArray
    down_price: FloatArray
    reg_volume: FloatArray
    """Positive for an up-regulation deficit, negative for a down-regulation surplus."""

    def __post_init__(self) -> None:
        for name, column in self.columns().items():
            object.__setattr__(self, name, np.asarray(column, dtype=float))
        lengths = {len(column) for column in self.columns().values()}
        if len(lengths) != 1:
            msg = "Market columns must have the same length."
            raise ContractViolation(msg)
        if any(not np.all(np.isfinite(column)) for column in self.columns().values()):
            msg = "Market prices and volumes must be finite."
            raise ContractViolation(msg)

    def __len__(self) -> int:
        return len(self.spot)

    @property
    def n_days(self) -> int:
        return len(self) // 24

    @property
    def negative_prices(self) -> BoolArray:
        return (self.spot < 0) | (self.up_price < 0) | (self.down_price < 0)

    def columns(self) -> dict[str, FloatArray]:
        return {
            "spot": self.spot,
            "up_price": self.up_price,
            "down_price": self.down_price,
            "reg_volume": self.reg_volume,
        }

    def take(self, hours: Sequence[int], start: datetime.datetime) -> "MarketSeries":
        index = np.asarray(hours, dtype=int)
        return MarketSeries(start=start, **{name: column[index] for name, column in self.columns().items()})

    def window(self, day_index: int, hours: int = 48) -> "MarketSeries":
        """`hours` records from the midnight of day `day_index`, wrapping around the end of the series."""
        first = day_index * 24
        index = np.arange(first, first + hours) % len(self)
        return self.take(index, self.start + datetime.timedelta(hours=first))

    def to_document(self) -> SeriesDocument:
        return SeriesDocument(
            kind="market",
            start=self.start,
            columns={name: column.tolist() for name, column in self.columns().items()},
            flags={"negative_price": self.negative_prices.tolist()},
        )

    @classmethod
    def from_document(cls, document: SeriesDocument) -> "MarketSeries":
        columns = {name: np.asarray(document.columns[name], dtype=float) for name in MARKET_HEADER[1:]}
        return cls(start=document.start, **columns)


def ingest_market_csv(source: Union[bytes, str, io.IOBase, Any]) -> MarketSeries:
    """
    Parse a `timestamp,spot,up_price,down_price,reg_volume` CSV.
    A missing hour is an error; negative prices are accepted and logged.
    """
    frame = _read_csv(read_source(source), MARKET_HEADER)
    index = _parse_timestamps(frame["timestamp"])
    if not (index == index.floor("h")).all():
        msg = "Market timestamps must be on the hour."
        raise OrderingError(msg)

    expected = pd.date_range(index[0], index[-1], freq="h")
    missing = expected.difference(index)
    if len(missing):
        raise MarketGapError(missing[0].isoformat())

    columns = {name: _parse_numbers(frame[name], name, allow_negative=True) for name in MARKET_HEADER[1:]}
    series = MarketSeries(start=index[0].to_pydatetime(), **columns)

    flagged = series.negative_prices
    if flagged.any():
        first = index[int(np.flatnonzero(flagged)[0])].isoformat()
        logger.warning("%d market hours have negative prices, the first at %s.", int(flagged.sum()), first)
    return series


def _energies(profile: Sequence[float], start: Hour, m: MarketSeries) -> FloatArray:
    energies = np.asarray(profile, dtype=float)
    if start < 0 or start + len(energies) > len(m):
        msg = f"Operation window [{start}, {start + len(energies)}) lies outside the {len(m)}-hour market series."
        raise RangeError(msg)
    return energies


def spot_cost(profile: Sequence[float], start: Hour, m: MarketSeries) -> Money:
    energies = _energies(profile, start, m)
    return float(np.dot(energies, m.spot[start : start + len(energies)]))


def spot_savings(profile: Sequence[float], t_es: Hour, t: Hour, m: MarketSeries) -> Money:
    """Spot cost avoided by starting at `t` instead of `t_es`."""
    return spot_cost(profile, t_es, m) - spot_cost(profile, t, m)


def reg_contribution(profile: Sequence[float], start: Hour, m: MarketSeries, *, skip_first_hour: bool = False) -> Money:
    """
    Regulation cost caused by the operation. Demand deepens up-regulation deficits at the
    up-price spread, and absorbs down-regulation surplus up to the surplus volume at the
    down-price spread.
    """
    energies = _energies(profile, start, m)
    hours = slice(start, start + len(energies))
    columns = [m.spot[hours], m.up_price[hours], m.down_price[hours], m.reg_volume[hours]]
    return float(_reg_hours(energies, *columns, skip_first_hour=skip_first_hour).sum())


def _reg_hours(
    energies: FloatArray,
    spot: FloatArray,
    up_price: FloatArray,
    down_price: FloatArray,
    volume: FloatArray,
    *,
    skip_first_hour: bool,
) -> FloatArray:
    """Per-hour regulation cost. Market columns may carry a leading axis of start hours."""
    deficit = energies * np.abs(up_price - spot)
    surplus = -np.minimum(energies, np.abs(volume)) * np.abs(spot - down_price)
    contribution = np.where(volume > 0, deficit, np.where(volume < 0, surplus, 0.0))
    return contribution[..., 1:] if skip_first_hour else contribution


def spot_costs(profile: Sequence[float], m: MarketSeries) -> FloatArray:
    """`spot_cost` of every start hour whose operation fits the series."""
    energies = np.asarray(profile, dtype=float)
    if len(energies) > len(m):
        return np.zeros(0)
    return sliding_window_view(m.spot, len(energies)) @ energies


def reg_contributions(profile: Sequence[float], m: MarketSeries, *, skip_first_hour: bool = False) -> FloatArray:
    """`reg_contribution` of every start hour whose operation fits the series."""
    energies = np.asarray(profile, dtype=float)
    if len(energies) > len(m):
        return np.zeros(0)
    columns = [sliding_window_view(column, len(energies)) for column in (m.spot, m.up_price, m.down_price, m.reg_volume)]
    return _reg_hours(energies, *columns, skip_first_hour=skip_first_hour).sum(axis=-1)


def reg_savings(
    profile: Sequence[float],
    t_es: Hour,
    t: Hour,
    m: MarketSeries,
    *,
    skip_first_hour: bool = False,
) -> Money:
    before = reg_contribution(profile, t_es, m, skip_first_hour=skip_first_hour)
    return before - reg_contribution(profile, t, m, skip_first_hour=skip_first_hour)


@dataclass(frozen=True)
class SavingsBreakdown:
    delta_spot: Money
    delta_reg: Money

    @property
    def total(self) -> Money:
        return self.delta_spot + self.delta_reg


def savings(
    profile: Sequence[float],
    t_es: Hour,
    t: Hour,
    m: MarketSeries,
    *,
    skip_first_hour: bool = False,
) -> SavingsBreakdown:
    return SavingsBreakdown(
        delta_spot=spot_savings(profile, t_es, t, m),
        delta_reg=reg_savings(profile, t_es, t, m, skip_first_hour=skip_first_hour),
    )


def shuffle_market(m: MarketSeries, seed: int) -> MarketSeries:
    """Permute whole days. Trailing hours that do not make a full day are dropped."""
    n_days = m.n_days
    if n_days * 24 != len(m):
        logger.debug("Dropping %d trailing market hours before shuffling.", len(m) - n_days * 24)

    order = np.random.default_rng(seed).permutation(n_days)
    hours = (order[:, None] * 24 + np.arange(24)[None, :]).ravel()
    return m.take(hours, m.start)


def generate_synthetic_market(
    seed: int,
    n_days: int,
    start: datetime.datetime = datetime.datetime(2017, 1, 1, tzinfo=datetime.timezone.utc),
) -> MarketSeries:
    """
    Hourly prices with cheap nights, morning and evening peaks, day-to-day level changes,
    and a persistent signed imbalance with its regulation price premia.
    """
    rng = np.random.default_rng(seed)
    n_hours = n_days * 24
    hour = np.arange(n_hours) % 24

    shape = (
        0.22
        - 0.06 * np.exp(-0.5 * ((hour - 3) / 2.5) ** 2)
        + 0.08 * np.exp(-0.5 * ((hour - 8) / 1.5) ** 2)
        + 0.12 * np.exp(-0.5 * ((hour - 18) / 2.0) ** 2)
    )
    daily_level = np.repeat(rng.normal(0.0, 0.03, n_days), 24)
    spot = shape + daily_level + rng.normal(0.0, 0.01, n_hours)

    volume = np.zeros(n_hours)
    shocks = rng.normal(0.0, 4.0, n_hours)
    for index in range(1, n_hours):
        volume[index] = 0.85 * volume[index - 1] + shocks[index]
    volume[np.abs(volume) < 1.0] = 0.0

    premium = np.abs(rng.normal(0.06, 0.03, n_hours))
    up_price = np.where(volume > 0, spot + premium, spot)
    down_price = np.where(volume < 0, spot - premium, spot)
    return MarketSeries(
        start=start,
        spot=np.round(spot, 4),
        up_price=np.round(up_price, 4),
        down_price=np.round(down_price, 4),
        reg_volume=np.round(volume, 3),
    )
