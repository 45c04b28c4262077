"""Device-level load ingestion, operation extraction and calendar evidence."""

import datetime
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .exceptions import EmptyInputError, InsufficientDataError, OrderingError, ParseError
from .schemas import SeriesDocument, SignatureDocument
from .typing import Any, BoolArray, FloatArray, Iterator, Optional, Season, Union

__all__ = [
    "CalendarFeatures",
    "DeviceSignature",
    "EventSeries",
    "LoadSeries",
    "OperationEvent",
    "calendar_features",
    "extract_events",
    "extract_signature",
    "ingest_load_csv",
    "read_source",
    "render_load",
    "season_of",
]


logger = logging.getLogger(__name__)

HOUR = datetime.timedelta(hours=1)

LOAD_HEADER = ["timestamp", "kwh"]

_SEASONS: dict[int, Season] = {
    12: "winter",
    1: "winter",
    2: "winter",
    3: "spring",
    4: "spring",
    5: "spring",
    6: "summer",
    7: "summer",
    8: "summer",
    9: "autumn",
    10: "autumn",
    11: "autumn",
}


def season_of(month: int) -> Season:
    """Meteorological season of a month."""
    return _SEASONS[month]


def _as_utc_hour(moment: datetime.datetime) -> datetime.datetime:
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=datetime.timezone.utc)
    moment = moment.astimezone(datetime.timezone.utc)
    if moment.minute or moment.second or moment.microsecond:
        msg = f"Timestamp {moment.isoformat()} is not aligned to the hour."
        raise OrderingError(msg)
    return moment


@dataclass(frozen=True, eq=False)
class LoadSeries:
    """Hourly energy readings of one device, in kWh per hour."""

    device_id: str
    start: datetime.datetime
    values: FloatArray
    gaps: BoolArray
    samples: Optional[pd.Series] = None
    """Raw sub-hourly readings, kept when the source was finer than hourly."""

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", _as_utc_hour(self.start))
        values = np.asarray(self.values, dtype=float)
        gaps = np.asarray(self.gaps, dtype=bool)
        if values.shape != gaps.shape or values.ndim != 1:
            msg = "Load values and gap flags must be one-dimensional and of equal length."
            raise ParseError(msg)
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            msg = "Load values must be finite and non-negative."
            raise ParseError(msg)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "gaps", gaps)

    def __len__(self) -> int:
        return len(self.values)

    def timestamp(self, index: int) -> datetime.datetime:
        return self.start + index * HOUR

    @property
    def end(self) -> datetime.datetime:
        """Exclusive end of the series."""
        return self.timestamp(len(self))

    @property
    def has_gaps(self) -> bool:
        return bool(self.gaps.any())

    def to_document(self) -> SeriesDocument:
        return SeriesDocument(
            kind="load",
            device_id=self.device_id,
            start=self.start,
            columns={"kwh": self.values.tolist()},
            flags={"gap": self.gaps.tolist()},
        )

    @classmethod
    def from_document(cls, document: SeriesDocument) -> "LoadSeries":
        if document.kind != "load" or "kwh" not in document.columns:
            msg = "Document does not hold a load series."
            raise ParseError(msg)
        values = document.columns["kwh"]
        return cls(
            device_id=document.device_id or "device",
            start=document.start,
            values=np.asarray(values, dtype=float),
            gaps=np.asarray(document.flags.get("gap", [False] * len(values)), dtype=bool),
        )


@dataclass(frozen=True)
class OperationEvent:
    ready_time: datetime.datetime
    duration_hours: int
    energy_per_hour: tuple[float, ...]
    measured_duration: Optional[float] = field(default=None, compare=False)
    """Duration in fractional hours, measured from sub-hourly samples when available."""

    def __post_init__(self) -> None:
        object.__setattr__(self, "ready_time", _as_utc_hour(self.ready_time))
        object.__setattr__(self, "energy_per_hour", tuple(float(value) for value in self.energy_per_hour))
        if self.duration_hours < 1 or len(self.energy_per_hour) != self.duration_hours:
            msg = "An operation lasts at least one hour and has one energy value per hour."
            raise ParseError(msg)
        if any(value <= 0 for value in self.energy_per_hour):
            msg = "Operation energy values must be positive."
            raise ParseError(msg)

    @property
    def duration(self) -> float:
        return self.measured_duration if self.measured_duration is not None else float(self.duration_hours)

    @property
    def end(self) -> datetime.datetime:
        return self.ready_time + self.duration_hours * HOUR


@dataclass(frozen=True)
class EventSeries:
    device_id: str
    events: tuple[OperationEvent, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        for previous, current in zip(self.events, self.events[1:]):
            if previous.ready_time >= current.ready_time:
                msg = f"Events are not sorted by ready time at {current.ready_time.isoformat()}."
                raise OrderingError(msg)
            if previous.end > current.ready_time:
                msg = f"Operation at {previous.ready_time.isoformat()} overlaps the next one."
                raise OrderingError(msg)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[OperationEvent]:
        return iter(self.events)

    def __bool__(self) -> bool:
        return bool(self.events)

    def inter_ready_hours(self) -> FloatArray:
        """Hours between consecutive ready actions."""
        times = [event.ready_time for event in self.events]
        return np.array([(later - earlier) / HOUR for earlier, later in zip(times, times[1:])], dtype=float)

    def between(self, start: datetime.datetime, end: datetime.datetime) -> "EventSeries":
        return EventSeries(
            device_id=self.device_id,
            events=tuple(event for event in self.events if start <= event.ready_time < end),
        )


@dataclass(frozen=True)
class DeviceSignature:
    per_hour_demand: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_hour_demand", tuple(float(value) for value in self.per_hour_demand))
        if not self.per_hour_demand or any(value <= 0 for value in self.per_hour_demand):
            msg = "A device signature needs at least one hour of positive demand."
            raise InsufficientDataError(msg)

    @property
    def length(self) -> int:
        return len(self.per_hour_demand)

    def to_document(self) -> SignatureDocument:
        return SignatureDocument(per_hour_demand=list(self.per_hour_demand), length=self.length)

    @classmethod
    def from_document(cls, document: SignatureDocument) -> "DeviceSignature":
        if document.length != len(document.per_hour_demand):
            msg = "Signature length does not match its hourly demand."
            raise ParseError(msg)
        return cls(per_hour_demand=tuple(document.per_hour_demand))


@dataclass(frozen=True)
class CalendarFeatures:
    day_of_week: int
    week_of_year: int
    month: int
    is_weekend: bool
    season: Season


def read_source(source: Union[bytes, str, io.IOBase, Any]) -> str:
    """Read a byte stream, bytes or text into text, dropping a UTF-8 byte order mark."""
    raw = source.read() if hasattr(source, "read") else source
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8-sig")
        except UnicodeDecodeError as error:
            msg = "Input is not valid UTF-8."
            raise ParseError(msg) from error
    return raw.lstrip("\ufeff")


def _read_csv(text: str, header: list[str]) -> pd.DataFrame:
    if not text.strip():
        msg = "Input is empty."
        raise EmptyInputError(msg)

    try:
        frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.ParserError as error:
        raise ParseError(str(error)) from error

    columns = [str(column).strip() for column in frame.columns]
    if columns != header:
        msg = f"Expected header `{','.join(header)}`, got `{','.join(columns)}`."
        raise ParseError(msg, line=1)
    if frame.empty:
        msg = "Input has a header but no rows."
        raise EmptyInputError(msg)

    frame.columns = columns
    return frame


def _parse_timestamps(column: pd.Series) -> pd.DatetimeIndex:
    timestamps = pd.to_datetime(column.str.strip(), utc=True, errors="coerce", format="ISO8601")
    invalid = np.flatnonzero(timestamps.isna().to_numpy())
    if invalid.size:
        line = int(invalid[0]) + 2
        msg = f"Invalid timestamp {column.iloc[invalid[0]]!r}."
        raise ParseError(msg, line=line)

    index = pd.DatetimeIndex(timestamps)
    steps = np.diff(index.asi8)
    backwards = np.flatnonzero(steps <= 0)
    if backwards.size:
        line = int(backwards[0]) + 3
        msg = f"line {line}: timestamps must be strictly increasing."
        raise OrderingError(msg)
    return index


def _parse_numbers(column: pd.Series, name: str, *, allow_negative: bool) -> FloatArray:
    numbers = pd.to_numeric(column.str.strip(), errors="coerce").to_numpy(dtype=float)
    invalid = ~np.isfinite(numbers)
    if not allow_negative:
        invalid |= numbers < 0
    rows = np.flatnonzero(invalid)
    if rows.size:
        msg = f"Invalid {name} value {column.iloc[rows[0]]!r}."
        raise ParseError(msg, line=int(rows[0]) + 2)
    return numbers


def ingest_load_csv(source: Union[bytes, str, io.IOBase, Any], device_id: str = "device") -> LoadSeries:
    """
    Parse a `timestamp,kwh` CSV into an hourly series.
    Sub-hourly readings within an hour are averaged, and missing hours are zero-filled and flagged.
    """
    frame = _read_csv(read_source(source), LOAD_HEADER)
    index = _parse_timestamps(frame["timestamp"])
    readings = pd.Series(_parse_numbers(frame["kwh"], "kwh", allow_negative=False), index=index)

    hourly = readings.resample("1h").mean()
    gaps = hourly.isna().to_numpy()
    if gaps.any():
        logger.warning("Device %s: %d missing hours filled with zero.", device_id, int(gaps.sum()))

    on_the_hour = bool((index == index.floor("h")).all())
    samples = None if on_the_hour else readings

    return LoadSeries(
        device_id=device_id,
        start=hourly.index[0].to_pydatetime(),
        values=hourly.fillna(0.0).to_numpy(dtype=float),
        gaps=gaps,
        samples=samples,
    )


def _measured_duration(series: LoadSeries, first: int, last: int, on_threshold: float) -> Optional[float]:
    if series.samples is None:
        return None

    begin = pd.Timestamp(series.timestamp(first))
    end = pd.Timestamp(series.timestamp(last + 1))
    window = series.samples[(series.samples.index >= begin) & (series.samples.index < end)]
    if window.empty:
        return None

    active_share = (window >= on_threshold).groupby(window.index.floor("h")).mean()
    measured = float(active_share.sum())
    return measured if measured > 0 else None


def extract_events(series: LoadSeries, on_threshold: float = 0.05, idle_gap: int = 1) -> EventSeries:
    """
    Replace the load of every operation with its ready time.
    An operation starts at the first hour at or above `on_threshold` that follows at least
    `idle_gap` hours below it, and ends at the last consecutive hour at or above it.
    """
    if on_threshold <= 0 or idle_gap < 1:
        msg = "on_threshold must be positive and idle_gap at least one hour."
        raise ParseError(msg)

    on = np.concatenate(([False], series.values >= on_threshold, [False]))
    edges = np.diff(on.astype(np.int8))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1

    events: list[OperationEvent] = []
    previous_end: Optional[int] = None
    for first, last in zip(starts, ends):
        idle = math.inf if previous_end is None else first - previous_end - 1
        previous_end = int(last)
        if idle < idle_gap:
            logger.debug("Device %s: burst at hour %d follows only %d idle hours.", series.device_id, first, idle)
            continue

        events.append(
            OperationEvent(
                ready_time=series.timestamp(int(first)),
                duration_hours=int(last - first + 1),
                energy_per_hour=tuple(series.values[first : last + 1]),
                measured_duration=_measured_duration(series, int(first), int(last), on_threshold),
            ),
        )

    return EventSeries(device_id=series.device_id, events=tuple(events))


def render_load(events: EventSeries, start: datetime.datetime, n_hours: int) -> LoadSeries:
    """Draw events as loads on a zero baseline."""
    start = _as_utc_hour(start)
    values = np.zeros(n_hours, dtype=float)
    for event in events:
        offset = int((event.ready_time - start) / HOUR)
        for hour, energy in enumerate(event.energy_per_hour):
            if 0 <= offset + hour < n_hours:
                values[offset + hour] = energy

    return LoadSeries(device_id=events.device_id, start=start, values=values, gaps=np.zeros(n_hours, dtype=bool))


def extract_signature(events: EventSeries) -> DeviceSignature:
    """
    Canonical operation profile: the length is the ceiling of the mean operation duration,
    and each hour's demand is the mean over all operations, shorter ones counting as zero.
    """
    if not events:
        msg = "Cannot extract a device signature without operations."
        raise InsufficientDataError(msg)

    durations = np.array([event.duration for event in events], dtype=float)
    length = max(1, math.ceil(durations.mean() - 1e-9))

    energy = np.zeros((len(events), length), dtype=float)
    for row, event in enumerate(events):
        hours = min(length, event.duration_hours)
        energy[row, :hours] = event.energy_per_hour[:hours]

    return DeviceSignature(per_hour_demand=tuple(energy.mean(axis=0)))


def calendar_features(day: Union[datetime.date, datetime.datetime]) -> CalendarFeatures:
    if isinstance(day, datetime.datetime):
        day = day.date()

    day_of_week = day.weekday()
    return CalendarFeatures(
        day_of_week=day_of_week,
        week_of_year=day.isocalendar()[1],
        month=day.month,
        is_weekend=day_of_week >= 5,  # noqa: PLR2004
        season=season_of(day.month),
    )
