"""
Hourly met-ocean time series.

Every series lives on a uniform UTC hourly grid.  Missing slots are carried
as an explicit boolean mask next to the values; no sentinel numbers are ever
stored in a series.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Iterable, Optional, Sequence

import numpy as np

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
HOUR = timedelta(hours=1)


class VariableKind(enum.Enum):
    """Met-ocean variables handled by the package."""

    SignificantWaveHeight = "H"
    WindSpeed = "v"

    @property
    def unit(self) -> str:
        return "m" if self is VariableKind.SignificantWaveHeight else "m/s"

    @property
    def symbol(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text) -> "VariableKind":
        if isinstance(text, cls):
            return text
        key = str(text).strip()
        for kind in cls:
            if key in (kind.value, kind.name):
                return kind
        raise ValueError(f"unknown variable {text!r} (expected 'H' or 'v')")


H = VariableKind.SignificantWaveHeight
V = VariableKind.WindSpeed

# inclusive plausibility envelopes used by quality_filter
DEFAULT_BOUNDS = {H: (0.0, 20.0), V: (0.0, 60.0)}


def to_utc(value) -> datetime:
    """Coerce a datetime, ISO string or numpy datetime64 to an aware UTC datetime."""
    if isinstance(value, np.datetime64):
        seconds = int(value.astype("datetime64[s]").astype(np.int64))
        return _EPOCH + timedelta(seconds=seconds)
    if isinstance(value, str):
        text = value.strip()
        if text.endswith("Z") or text.endswith("z"):
            text = text[:-1] + "+00:00"
        value = datetime.fromisoformat(text)
    if not isinstance(value, datetime):
        raise TypeError(f"cannot interpret {value!r} as a timestamp")
    if value.tzinfo is None:
        return value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc)


def hour_number(value) -> int:
    """Whole hours since 1970-01-01 UTC, flooring partial hours."""
    delta = to_utc(value) - _EPOCH
    return int(delta // HOUR)


def from_hour_number(n: int) -> datetime:
    return _EPOCH + int(n) * HOUR


def format_time(value) -> str:
    return to_utc(value).strftime("%Y-%m-%dT%H:%MZ")


def _months_of_hours(hours: np.ndarray) -> np.ndarray:
    stamps = (np.asarray(hours, dtype=np.int64)).astype("datetime64[h]")
    return stamps.astype("datetime64[M]").astype(np.int64) % 12 + 1


@dataclass(frozen=True, eq=False)
class HourlyTimeSeries:
    """One variable at one site on a uniform hourly grid.

    ``values`` holds the data and ``present`` flags which slots are observed;
    entries of ``values`` at absent slots are 0.0 and carry no meaning.
    """

    variable: VariableKind
    start: datetime
    values: np.ndarray
    present: np.ndarray
    site_id: str = ""

    def __post_init__(self):
        start = to_utc(self.start)
        if start.minute or start.second or start.microsecond:
            raise ValueError(f"series start {start} is not on the hour")
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        present = np.array(self.present, dtype=bool).reshape(-1)
        if values.shape != present.shape:
            raise ValueError("values and present mask differ in length")
        if values.size < 1:
            raise ValueError("a series needs at least one slot")
        if not np.all(np.isfinite(values[present])):
            raise ValueError("present values must be finite")
        values[~present] = 0.0
        values.flags.writeable = False
        present.flags.writeable = False
        object.__setattr__(self, "variable", VariableKind.parse(self.variable))
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "present", present)

    @classmethod
    def from_values(cls, variable, start, values: Iterable[Optional[float]], site_id: str = ""):
        """Build from a sequence where ``None`` (or NaN) marks a missing slot."""
        vals = [np.nan if v is None else float(v) for v in values]
        arr = np.array(vals, dtype=np.float64)
        present = ~np.isnan(arr)
        return cls(variable, start, np.where(present, arr, 0.0), present, site_id)

    @classmethod
    def from_array(cls, variable, start, data, site_id: str = ""):
        """Build from a float array using NaN for missing slots."""
        arr = np.asarray(data, dtype=np.float64)
        present = np.isfinite(arr)
        return cls(variable, start, np.where(present, arr, 0.0), present, site_id)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, HourlyTimeSeries):
            return NotImplemented
        return (
            self.variable is other.variable
            and self.start == other.start
            and self.site_id == other.site_id
            and np.array_equal(self.present, other.present)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    @property
    def start_hour(self) -> int:
        return hour_number(self.start)

    @property
    def end_hour(self) -> int:
        """Hour number one past the last slot."""
        return self.start_hour + len(self)

    @property
    def end(self) -> datetime:
        """Timestamp of the last slot."""
        return self.start + (len(self) - 1) * HOUR

    @property
    def hours(self) -> np.ndarray:
        return np.arange(self.start_hour, self.end_hour, dtype=np.int64)

    @property
    def times(self) -> np.ndarray:
        return self.hours.astype("datetime64[h]")

    @property
    def months(self) -> np.ndarray:
        return _months_of_hours(self.hours)

    @property
    def n_missing(self) -> int:
        return int(np.count_nonzero(~self.present))

    def as_array(self) -> np.ndarray:
        """Copy of the values with NaN at missing slots."""
        return np.where(self.present, self.values, np.nan)

    def to_list(self) -> list:
        return [float(v) if p else None for v, p in zip(self.values, self.present)]

    def same_grid(self, other: "HourlyTimeSeries") -> bool:
        return self.start == other.start and len(self) == len(other)

    def replace(self, **changes) -> "HourlyTimeSeries":
        fields = dict(
            variable=self.variable,
            start=self.start,
            values=self.values,
            present=self.present,
            site_id=self.site_id,
        )
        fields.update(changes)
        return HourlyTimeSeries(**fields)

    def reindex(self, start_hour: int, end_hour: int) -> "HourlyTimeSeries":
        """Place the series on the grid [start_hour, end_hour); uncovered slots are missing."""
        n = end_hour - start_hour
        if n < 1:
            raise ValueError("empty target grid")
        values = np.zeros(n)
        present = np.zeros(n, dtype=bool)
        lo = max(start_hour, self.start_hour)
        hi = min(end_hour, self.end_hour)
        if hi > lo:
            values[lo - start_hour:hi - start_hour] = self.values[lo - self.start_hour:hi - self.start_hour]
            present[lo - start_hour:hi - start_hour] = self.present[lo - self.start_hour:hi - self.start_hour]
        return self.replace(start=from_hour_number(start_hour), values=values, present=present)

    def slice_time(self, start, end) -> "HourlyTimeSeries":
        """Restrict to the half-open window [start, end) intersected with coverage."""
        lo = max(hour_number(start), self.start_hour)
        hi = min(hour_number(end), self.end_hour)
        if hi <= lo:
            raise ValueError("window does not overlap the series")
        return self.reindex(lo, hi)


@dataclass(frozen=True, eq=False)
class RawSampleBatch:
    """Irregular samples of one variable, before hourly resampling.

    ``dropped`` counts rows a parser discarded as sentinel/missing values.
    """

    variable: VariableKind
    times: np.ndarray
    values: np.ndarray
    site_id: str = ""
    dropped: int = 0

    def __post_init__(self):
        times = np.array(self.times, dtype="datetime64[s]").reshape(-1)
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if times.shape != values.shape:
            raise ValueError("times and values differ in length")
        if times.size and np.any(np.diff(times.astype(np.int64)) <= 0):
            raise ValueError("sample timestamps must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("sample values must be finite")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "variable", VariableKind.parse(self.variable))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_pairs(cls, variable, samples: Sequence, site_id: str = ""):
        times = [np.datetime64(to_utc(t).replace(tzinfo=None), "s") for t, _ in samples]
        return cls(variable, np.array(times, dtype="datetime64[s]"), [v for _, v in samples], site_id)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class SeasonFilter:
    """A set of calendar months (UTC) with a label."""

    months: frozenset
    label: str = ""

    def __post_init__(self):
        months = list(self.months)
        if not months:
            raise ValueError("season needs at least one month")
        if len(set(months)) != len(months):
            raise ValueError("duplicate months in season")
        if any(int(m) != m or not 1 <= m <= 12 for m in months):
            raise ValueError("months must be integers in 1..12")
        object.__setattr__(self, "months", frozenset(int(m) for m in months))
        if not self.label:
            object.__setattr__(self, "label", "-".join(str(m) for m in sorted(self.months)))

    def contains(self, months: np.ndarray) -> np.ndarray:
        return np.isin(months, sorted(self.months))


ALL_YEAR = SeasonFilter(frozenset(range(1, 13)), "all")
SUMMER = SeasonFilter(frozenset(range(5, 11)), "summer")
WINTER = SeasonFilter(frozenset([11, 12, 1, 2, 3, 4]), "winter")


@dataclass(frozen=True)
class SiteDataset:
    """Observed and numerical series of one site, all on one hourly grid."""

    site_id: str
    latitude: float
    longitude: float
    observed: dict = field(default_factory=dict)
    numerical: dict = field(default_factory=dict)

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of range")
        series = list(self.observed.values()) + list(self.numerical.values())
        for s in series[1:]:
            if not s.same_grid(series[0]):
                raise ValueError("all series of a site dataset must share one grid")
        for kind, s in list(self.observed.items()) + list(self.numerical.items()):
            if s.variable is not VariableKind.parse(kind):
                raise ValueError(f"series keyed {kind} carries {s.variable}")

    @property
    def variables(self) -> list:
        return sorted(set(self.observed) | set(self.numerical), key=lambda k: k.value)


# -- operations --------------------------------------------------------------

def resample_to_hourly(batch: RawSampleBatch) -> HourlyTimeSeries:
    """Average samples into left-closed hourly bins [hour, hour + 1)."""
    if len(batch) == 0:
        raise ValueError("no samples")
    seconds = batch.times.astype(np.int64)
    hours = np.floor_divide(seconds, 3600)
    first = int(hours[0])
    slot = hours - first
    n = int(slot[-1]) + 1
    sums = np.bincount(slot, weights=batch.values, minlength=n)
    counts = np.bincount(slot, minlength=n)
    present = counts > 0
    values = np.divide(sums, counts, out=np.zeros(n), where=present)
    return HourlyTimeSeries(batch.variable, from_hour_number(first), values, present, batch.site_id)


def quality_filter(series: HourlyTimeSeries, bounds=None):
    """Drop values outside the inclusive plausibility interval.

    ``bounds`` is either a (min, max) pair or a mapping VariableKind -> pair;
    defaults to DEFAULT_BOUNDS.  Returns ``(filtered, n_discarded)``.
    """
    if bounds is None:
        bounds = DEFAULT_BOUNDS
    if isinstance(bounds, dict):
        bounds = bounds[series.variable]
    lo, hi = bounds
    if not lo < hi:
        raise ValueError("quality bounds need min < max")
    bad = series.present & ((series.values < lo) | (series.values > hi))
    if not bad.any():
        return series, 0
    return series.replace(present=series.present & ~bad), int(bad.sum())


def pool_series(inputs: Sequence[HourlyTimeSeries], pooled_site_id: str) -> HourlyTimeSeries:
    """Per-hour mean of the non-missing inputs over the union of their horizons."""
    if len(inputs) < 2:
        raise ValueError("pooling needs at least two series")
    kinds = {s.variable for s in inputs}
    if len(kinds) != 1:
        raise ValueError("cannot pool series of different variables")
    lo = min(s.start_hour for s in inputs)
    hi = max(s.end_hour for s in inputs)
    sums = np.zeros(hi - lo)
    counts = np.zeros(hi - lo, dtype=np.int64)
    for s in inputs:
        sl = slice(s.start_hour - lo, s.end_hour - lo)
        sums[sl] += np.where(s.present, s.values, 0.0)
        counts[sl] += s.present
    present = counts > 0
    values = np.divide(sums, counts, out=np.zeros_like(sums), where=present)
    return HourlyTimeSeries(kinds.pop(), from_hour_number(lo), values, present, pooled_site_id)


def align(a: HourlyTimeSeries, b: HourlyTimeSeries):
    """Restrict two series of the same variable to their common hours."""
    if a.variable is not b.variable:
        raise ValueError("cannot align series of different variables")
    lo = max(a.start_hour, b.start_hour)
    hi = min(a.end_hour, b.end_hour)
    if hi <= lo:
        raise ValueError("no temporal overlap")
    return a.reindex(lo, hi), b.reindex(lo, hi)


def union_grid(series: Sequence[HourlyTimeSeries]) -> tuple:
    return min(s.start_hour for s in series), max(s.end_hour for s in series)


def missing_report(series: HourlyTimeSeries, window=None) -> float:
    """Fraction of the hours in ``window`` that hold no value.

    ``window`` is a half-open (start, end) pair; hours outside the series
    coverage count as missing.  ``None`` means the series' own coverage.
    """
    if window is None:
        lo, hi = series.start_hour, series.end_hour
    else:
        lo, hi = hour_number(window[0]), hour_number(window[1])
    if hi <= lo:
        raise ValueError("window end must be after its start")
    a = max(lo, series.start_hour)
    b = min(hi, series.end_hour)
    present = 0
    if b > a:
        present = int(series.present[a - series.start_hour:b - series.start_hour].sum())
    return 1.0 - present / (hi - lo)


def seasonal_subset(series: HourlyTimeSeries, season: SeasonFilter) -> np.ndarray:
    """Indices of the slots whose UTC calendar month belongs to ``season``."""
    return np.flatnonzero(season.contains(series.months))
