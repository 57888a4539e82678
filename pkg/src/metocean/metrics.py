"""
Approachability, accessibility and serviceability scores.

All three use a strict comparison: a value equal to its safety limit fails.
Hours (or windows) that need a missing value are excluded from the
denominator and counted in ``excluded_missing``, unless ``strict_missing``
is set, in which case they count as failures.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .timeseries import (
    ALL_YEAR,
    SUMMER,
    WINTER,
    H,
    V,
    HourlyTimeSeries,
    SeasonFilter,
    VariableKind,
)

DEFAULT_H_LIMITS = tuple(1.5 + 0.25 * i for i in range(13))
DEFAULT_V_LIMIT = 12.0
DEFAULT_ZETAS = (2, 6, 12, 18, 24)
DEFAULT_SEASONS = (ALL_YEAR, SUMMER, WINTER)
CSV_HEADER = ("subject", "variable_limits", "zeta", "season", "score", "passed", "evaluated",
              "excluded_missing", "error")


class NoEvaluableData(ValueError):
    pass


@dataclass(frozen=True)
class SafetyLimits:
    """Upper bounds per variable; conditions pass only strictly below them."""

    limits: dict

    def __post_init__(self):
        if not self.limits:
            raise ValueError("at least one safety limit is required")
        parsed = {}
        for kind, value in self.limits.items():
            value = float(value)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"limit for {kind} must be positive and finite")
            parsed[VariableKind.parse(kind)] = value
        object.__setattr__(self, "limits", parsed)

    def __hash__(self):
        return hash(tuple(sorted((k.value, v) for k, v in self.limits.items())))

    @property
    def variables(self):
        return sorted(self.limits, key=lambda k: k.value)

    def label(self) -> str:
        return ";".join(f"{k.value}<{self.limits[k]:g}" for k in self.variables)

    def as_dict(self) -> dict:
        return {k.value: self.limits[k] for k in self.variables}


@dataclass(frozen=True)
class MissionWindow:
    zeta: int

    def __post_init__(self):
        if int(self.zeta) != self.zeta or self.zeta < 1:
            raise ValueError("mission window must be a positive whole number of hours")
        object.__setattr__(self, "zeta", int(self.zeta))


@dataclass(frozen=True, eq=False)
class PositionMatrix:
    """J x zeta binary schedule; column tau has a single 1 at the occupied location."""

    entries: np.ndarray

    def __post_init__(self):
        P = np.array(self.entries, dtype=np.int8)
        if P.ndim != 2 or P.shape[0] < 1 or P.shape[1] < 1:
            raise ValueError("position matrix must be a non-empty 2-D array")
        if not np.isin(P, (0, 1)).all():
            raise ValueError("position matrix entries must be 0 or 1")
        if not (P.sum(axis=0) == 1).all():
            raise ValueError("each mission hour must occupy exactly one location")
        P.flags.writeable = False
        object.__setattr__(self, "entries", P)

    @property
    def J(self) -> int:
        return self.entries.shape[0]

    @property
    def zeta(self) -> int:
        return self.entries.shape[1]

    def schedule(self) -> np.ndarray:
        """0-based location index for each mission hour."""
        return np.argmax(self.entries, axis=0)

    @classmethod
    def stationary(cls, J: int, zeta: int, location: int = 1) -> "PositionMatrix":
        P = np.zeros((J, zeta), dtype=np.int8)
        P[location - 1, :] = 1
        return cls(P)


@dataclass(frozen=True)
class OperationalProfile:
    """Ordered (location, dwell hours) legs; locations are 1-based."""

    legs: tuple

    def __post_init__(self):
        legs = tuple((int(j), int(d)) for j, d in self.legs)
        if not legs:
            raise ValueError("profile needs at least one leg")
        if any(d < 1 for _, d in legs):
            raise ValueError("dwell hours must be positive integers")
        object.__setattr__(self, "legs", legs)

    @property
    def zeta(self) -> int:
        return sum(d for _, d in self.legs)


def build_position_matrix(profile: OperationalProfile, J: int, zeta: Optional[int] = None) -> PositionMatrix:
    if zeta is not None and profile.zeta != zeta:
        raise ValueError(f"dwell hours sum to {profile.zeta}, expected {zeta}")
    P = np.zeros((J, profile.zeta), dtype=np.int8)
    tau = 0
    for j, dwell in profile.legs:
        if not 1 <= j <= J:
            raise ValueError(f"location index {j} outside 1..{J}")
        P[j - 1, tau:tau + dwell] = 1
        tau += dwell
    return PositionMatrix(P)


@dataclass(frozen=True)
class Location:
    site_id: str
    lat: float
    lon: float


@dataclass(frozen=True)
class Route:
    """Ordered route locations, each with per-variable series on one shared grid."""

    route_id: str
    locations: tuple
    series: tuple

    def __post_init__(self):
        locs = tuple(loc if isinstance(loc, Location) else Location(*loc) for loc in self.locations)
        series = tuple(dict(s) for s in self.series)
        if not locs:
            raise ValueError("route needs at least one location")
        if len(series) != len(locs):
            raise ValueError("one series mapping per route location is required")
        all_series = [s for m in series for s in m.values()]
        if not all_series:
            raise ValueError("route has no series")
        for s in all_series[1:]:
            if not s.same_grid(all_series[0]):
                raise ValueError("route series must share one hourly grid")
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "series", series)

    @property
    def J(self) -> int:
        return len(self.locations)

    @property
    def T(self) -> int:
        return len(next(iter(self.series[0].values())))


@dataclass(frozen=True)
class MetricReport:
    metric: str
    score: float
    passed: int
    evaluated: int
    excluded_missing: int
    limits: SafetyLimits
    zeta: int
    season: str
    subject: str = ""

    @property
    def candidates(self) -> int:
        return self.evaluated + self.excluded_missing

    def as_record(self) -> dict:
        return {
            "subject": self.subject,
            "metric": self.metric,
            "variable_limits": self.limits.as_dict(),
            "zeta": self.zeta,
            "season": self.season,
            "score": self.score,
            "passed": self.passed,
            "evaluated": self.evaluated,
            "excluded_missing": self.excluded_missing,
        }


# -- core evaluation ------------------------------------------------------------

def _series_map(series) -> dict:
    if isinstance(series, HourlyTimeSeries):
        return {series.variable: series}
    return {VariableKind.parse(k): s for k, s in dict(series).items()}


def _pointwise(series: dict, limits: SafetyLimits, exact: bool = True):
    """Per-hour (ok, present) over all limited variables."""
    if exact and set(series) != set(limits.limits):
        raise ValueError("safety limits must cover exactly the supplied variables")
    missing = [k for k in limits.limits if k not in series]
    if missing:
        raise ValueError(f"no series for {', '.join(k.value for k in missing)}")
    first = next(iter(series.values()))
    for s in series.values():
        if not s.same_grid(first):
            raise ValueError("all series must share one hourly grid")
    ok = np.ones(len(first), dtype=bool)
    present = np.ones(len(first), dtype=bool)
    for kind, limit in limits.limits.items():
        s = series[kind]
        ok &= s.values < limit
        present &= s.present
    return ok & present, present, first


def _start_candidates(grid: HourlyTimeSeries, n_starts: int, zeta: int,
                      season: Optional[SeasonFilter], season_mode: str) -> np.ndarray:
    if season is None:
        return np.ones(n_starts, dtype=bool)
    in_season = season.contains(grid.months)
    if season_mode == "start":
        return in_season[:n_starts]
    if season_mode == "window":
        bad = np.concatenate([[0], np.cumsum(~in_season)])
        return (bad[zeta:zeta + n_starts] - bad[:n_starts]) == 0
    raise ValueError("season_mode must be 'start' or 'window'")


def _report(metric, passes, evaluable, candidates, limits, zeta, season, subject, strict_missing):
    if strict_missing:
        evaluable = np.ones_like(evaluable)
    cand = candidates
    evaluated = int(np.count_nonzero(cand & evaluable))
    excluded = int(np.count_nonzero(cand & ~evaluable))
    passed = int(np.count_nonzero(cand & evaluable & passes))
    if evaluated == 0:
        raise NoEvaluableData("no evaluable data")
    return MetricReport(metric, passed / evaluated, passed, evaluated, excluded, limits, zeta,
                        season.label if season is not None else ALL_YEAR.label, subject)


def _window_all(flags: np.ndarray, zeta: int) -> np.ndarray:
    """For every start, whether flags[start:start+zeta] are all True."""
    bad = np.concatenate([[0], np.cumsum(~flags)])
    return (bad[zeta:] - bad[:-zeta]) == 0


def approachability(series, limits: SafetyLimits, season: Optional[SeasonFilter] = None,
                    strict_missing: bool = False, subject: str = "") -> MetricReport:
    """Fraction of hours with every variable strictly below its limit."""
    series = _series_map(series)
    ok, present, grid = _pointwise(series, limits)
    cand = _start_candidates(grid, len(grid), 1, season, "start")
    return _report("approachability", ok, present, cand, limits, 1, season, subject, strict_missing)


def accessibility(series, limits: SafetyLimits, window: MissionWindow,
                  season: Optional[SeasonFilter] = None, strict_missing: bool = False,
                  season_mode: str = "start", subject: str = "") -> MetricReport:
    """Fraction of start hours whose whole zeta-hour window stays below limits."""
    series = _series_map(series)
    zeta = MissionWindow(window).zeta if not isinstance(window, MissionWindow) else window.zeta
    ok, present, grid = _pointwise(series, limits)
    T = len(grid)
    if T < zeta:
        raise ValueError(f"series of {T} hours is shorter than the {zeta} h window")
    passes = _window_all(ok, zeta)
    evaluable = _window_all(present, zeta)
    cand = _start_candidates(grid, T - zeta + 1, zeta, season, season_mode)
    return _report("accessibility", passes, evaluable, cand, limits, zeta, season, subject, strict_missing)


def serviceability(route: Route, P: PositionMatrix, limits: SafetyLimits, window: MissionWindow = None,
                   season: Optional[SeasonFilter] = None, strict_missing: bool = False,
                   season_mode: str = "start") -> MetricReport:
    """Fraction of start hours at which every scheduled (location, hour) is below limits."""
    zeta = P.zeta if window is None else (window.zeta if isinstance(window, MissionWindow) else int(window))
    if P.zeta != zeta:
        raise ValueError(f"position matrix has {P.zeta} columns, mission window is {zeta} h")
    if P.J != route.J:
        raise ValueError(f"position matrix has {P.J} rows, route has {route.J} locations")
    T = route.T
    if T < zeta:
        raise ValueError(f"route series of {T} hours is shorter than the {zeta} h window")
    n_starts = T - zeta + 1
    per_loc = {}
    schedule = P.schedule()
    for j in sorted(set(schedule.tolist())):
        per_loc[j] = _pointwise(_series_map(route.series[j]), limits, exact=False)[:2]
    passes = np.ones(n_starts, dtype=bool)
    evaluable = np.ones(n_starts, dtype=bool)
    for tau, j in enumerate(schedule):
        ok, present = per_loc[j]
        passes &= ok[tau:tau + n_starts]
        evaluable &= present[tau:tau + n_starts]
    grid = next(iter(route.series[0].values()))
    cand = _start_candidates(grid, n_starts, zeta, season, season_mode)
    return _report("serviceability", passes, evaluable, cand, limits, zeta, season, route.route_id,
                   strict_missing)


@dataclass(frozen=True)
class RouteProfile:
    route_id: str
    approachability: tuple
    accessibility: tuple
    average_approachability: float
    average_accessibility: float


def route_accessibility_profile(route: Route, limits: SafetyLimits, window: MissionWindow,
                                season: Optional[SeasonFilter] = None,
                                strict_missing: bool = False) -> RouteProfile:
    """Per-location approachability/accessibility and their unweighted route means."""
    appr, acc = [], []
    for loc, series in zip(route.locations, route.series):
        sub = {k: series[k] for k in limits.limits}
        appr.append(approachability(sub, limits, season, strict_missing, subject=loc.site_id))
        acc.append(accessibility(sub, limits, window, season, strict_missing, subject=loc.site_id))
    return RouteProfile(
        route.route_id,
        tuple(appr),
        tuple(acc),
        float(np.mean([r.score for r in appr])),
        float(np.mean([r.score for r in acc])),
    )


# -- sweeps -------------------------------------------------------------------------

def limits_grid(h_values=DEFAULT_H_LIMITS, v_values=(DEFAULT_V_LIMIT,)) -> list:
    """Cross product of wave-height and wind-speed limits; pass None to omit a variable."""
    out = []
    hs = list(h_values) if h_values is not None else [None]
    vs = list(v_values) if v_values is not None else [None]
    for h in hs:
        for v in vs:
            lim = {}
            if h is not None:
                lim[H] = h
            if v is not None:
                lim[V] = v
            out.append(SafetyLimits(lim))
    return out


@dataclass(frozen=True)
class SweepCell:
    subject: str
    metric: str
    limits: SafetyLimits
    zeta: int
    season: str
    report: Optional[MetricReport] = None
    error: Optional[str] = None
    aggregate: Optional[float] = None  # score of a derived row (e.g. a route mean) without counts

    @property
    def key(self):
        return (self.subject, tuple(sorted((k.value, v) for k, v in self.limits.limits.items())),
                self.zeta, self.season)


def sweep(data, limits_list: Sequence[SafetyLimits], windows: Sequence = DEFAULT_ZETAS,
          seasons: Sequence[Optional[SeasonFilter]] = (None,), metric: str = "accessibility",
          subject: str = "", position_matrix: Optional[PositionMatrix] = None,
          strict_missing: bool = False, jobs: int = 1) -> list:
    """Evaluate ``metric`` over the cross product of limits, windows and seasons.

    ``data`` is a per-variable series mapping for approachability and
    accessibility, or a Route for serviceability (with ``position_matrix``,
    whose column count must match each window).  Failing cells carry an error
    string instead of aborting.  Output is sorted by key.
    """
    if not limits_list or not windows or not seasons:
        raise ValueError("sweep grids must be non-empty")
    if metric == "approachability":
        windows = (1,)
    zetas = [w.zeta if isinstance(w, MissionWindow) else int(w) for w in windows]

    def run(args):
        lim, zeta, season = args
        label = season.label if season is not None else ALL_YEAR.label
        name = subject or (data.route_id if isinstance(data, Route) else "")
        try:
            if metric == "approachability":
                sub = {k: s for k, s in _series_map(data).items() if k in lim.limits}
                rep = approachability(sub, lim, season, strict_missing, subject=name)
            elif metric == "accessibility":
                sub = {k: s for k, s in _series_map(data).items() if k in lim.limits}
                rep = accessibility(sub, lim, MissionWindow(zeta), season, strict_missing, subject=name)
            elif metric == "serviceability":
                if position_matrix is None:
                    raise ValueError("serviceability needs a position matrix")
                rep = serviceability(data, position_matrix, lim, MissionWindow(zeta), season, strict_missing)
            else:
                raise ValueError(f"unknown metric {metric!r}")
            return SweepCell(name, metric, lim, zeta, label, report=rep)
        except ValueError as exc:
            return SweepCell(name, metric, lim, zeta, label, error=str(exc))

    tasks = [(lim, z, s) for lim in limits_list for z in zetas for s in seasons]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(run, tasks))
    else:
        cells = [run(t) for t in tasks]
    return sorted(cells, key=lambda c: c.key)


def _fmt(x: float) -> str:
    return repr(float(x))


def sweep_to_csv(cells: Sequence[SweepCell]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for c in cells:
        r = c.report
        if c.aggregate is not None:
            w.writerow([c.subject, c.limits.label(), c.zeta, c.season, _fmt(c.aggregate), "", "", "", ""])
        elif r is None:
            w.writerow([c.subject, c.limits.label(), c.zeta, c.season, "", "", "", "", c.error])
        else:
            w.writerow([c.subject, c.limits.label(), c.zeta, c.season, _fmt(r.score), r.passed,
                        r.evaluated, r.excluded_missing, ""])
    return buf.getvalue()


def sweep_to_records(cells: Sequence[SweepCell]) -> list:
    out = []
    for c in cells:
        if c.report is not None:
            rec = c.report.as_record()
            rec["error"] = None
        else:
            rec = {"subject": c.subject, "metric": c.metric, "variable_limits": c.limits.as_dict(),
                   "zeta": c.zeta, "season": c.season, "score": c.aggregate, "passed": None,
                   "evaluated": None, "excluded_missing": None, "error": c.error}
        out.append(rec)
    return out


def sweep_to_json(cells: Sequence[SweepCell]) -> str:
    return json.dumps(sweep_to_records(cells), indent=2, sort_keys=True) + "\n"


def parse_limits_label(label: str) -> SafetyLimits:
    """Inverse of SafetyLimits.label(), e.g. 'H<2;v<12'."""
    lim = {}
    for part in label.split(";"):
        name, value = part.split("<")
        lim[VariableKind.parse(name)] = float(value)
    return SafetyLimits(lim)
