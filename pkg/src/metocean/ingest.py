"""
Reading buoy and numerical-model files, fetching archives, and
interpolating gridded model output to buoy coordinates.
"""

from __future__ import annotations

import csv
import enum
import io
import itertools
import logging
import socket
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .timeseries import (
    H,
    V,
    HourlyTimeSeries,
    RawSampleBatch,
    VariableKind,
    from_hour_number,
    hour_number,
    to_utc,
    union_grid,
)

log = logging.getLogger(__name__)

NDBC_SENTINELS = (99.0, 999.0, 9999.0)
NDBC_COLUMNS = {"WVHT": H, "WSPD": V}
DEFAULT_NDBC_TEMPLATE = (
    "https://www.ndbc.noaa.gov/view_text_file.php?"
    "filename={station}h{year}.txt.gz&dir=data/historical/stdmet/"
)
VERTEX_TOL = 1e-9


class ParseError(ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ObservationFormat(enum.Enum):
    NDBC_STDMET = "NDBC_STDMET"
    GENERIC_CSV = "GENERIC_CSV"


# -- observation parsers -----------------------------------------------------

def parse_observation_file(data, format, site_id: str = ""):
    """Parse an observation file into one RawSampleBatch per variable.

    Sentinel values and blanks are skipped; each batch's ``dropped`` field
    counts the rows skipped for that variable.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    format = ObservationFormat(format.value if isinstance(format, ObservationFormat) else str(format).upper())
    if format is ObservationFormat.NDBC_STDMET:
        return _parse_ndbc(data, site_id)
    return _parse_generic_csv(data, site_id)


def _is_sentinel(token: str) -> bool:
    if token.upper() == "MM":
        return True
    try:
        return float(token) in NDBC_SENTINELS
    except ValueError:
        return False


def _parse_ndbc(text: str, site_id: str):
    lines = text.splitlines()
    header_at = None
    for i, line in enumerate(lines):
        if line.strip():
            header_at = i
            break
    if header_at is None:
        raise ParseError("empty file, missing NDBC header", 1)
    names = lines[header_at].lstrip("#").split()
    if not names or names[0] not in ("YY", "YYYY"):
        raise ParseError(f"unrecognised NDBC header starting with {names[:1]}", header_at + 1)
    try:
        idx = {name: names.index(name) for name in ("MM", "DD", "hh")}
    except ValueError as exc:
        raise ParseError(f"NDBC header lacks a date column ({exc})", header_at + 1)
    minute_col = names.index("mm") if "mm" in names else None
    wanted = {kind: names.index(col) for col, kind in NDBC_COLUMNS.items() if col in names}

    samples = {kind: ([], []) for kind in wanted}
    dropped = {kind: 0 for kind in wanted}
    last = None
    for lineno, line in enumerate(lines[header_at + 1:], start=header_at + 2):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) != len(names):
            raise ParseError(f"expected {len(names)} fields, found {len(tokens)}", lineno)
        try:
            year = int(tokens[0])
            if year < 100:
                year += 1900 if year >= 70 else 2000
            stamp = datetime(
                year,
                int(tokens[idx["MM"]]),
                int(tokens[idx["DD"]]),
                int(tokens[idx["hh"]]),
                int(tokens[minute_col]) if minute_col is not None else 0,
                tzinfo=timezone.utc,
            )
        except ValueError as exc:
            raise ParseError(f"bad timestamp ({exc})", lineno)
        if last is not None and stamp <= last:
            raise ParseError("timestamps are not strictly increasing", lineno)
        last = stamp
        for kind, col in wanted.items():
            token = tokens[col]
            if _is_sentinel(token):
                dropped[kind] += 1
                continue
            try:
                value = float(token)
            except ValueError:
                raise ParseError(f"non-numeric {kind.value} value {token!r}", lineno)
            samples[kind][0].append(np.datetime64(stamp.replace(tzinfo=None), "s"))
            samples[kind][1].append(value)

    return [
        RawSampleBatch(kind, np.array(samples[kind][0], dtype="datetime64[s]"), samples[kind][1], site_id, dropped[kind])
        for kind in sorted(wanted, key=lambda k: k.value)
    ]


def _parse_generic_csv(text: str, site_id: str):
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise ParseError("empty file, missing header", 1)
    header = [h.strip() for h in header]
    if header != ["time", "variable", "value"]:
        raise ParseError(f"expected header time,variable,value, found {','.join(header)}", 1)
    samples = {H: ([], []), V: ([], [])}
    dropped = {H: 0, V: 0}
    last = {H: None, V: None}
    for lineno, row in enumerate(reader, start=2):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, found {len(row)}", lineno)
        try:
            stamp = to_utc(row[0])
            kind = VariableKind.parse(row[1])
        except (ValueError, TypeError) as exc:
            raise ParseError(str(exc), lineno)
        if last[kind] is not None and stamp <= last[kind]:
            raise ParseError("timestamps are not strictly increasing", lineno)
        last[kind] = stamp
        token = row[2].strip()
        if not token:
            dropped[kind] += 1
            continue
        try:
            value = float(token)
        except ValueError:
            raise ParseError(f"non-numeric value {token!r}", lineno)
        if not np.isfinite(value):
            dropped[kind] += 1
            continue
        samples[kind][0].append(np.datetime64(stamp.replace(tzinfo=None), "s"))
        samples[kind][1].append(value)
    return [
        RawSampleBatch(kind, np.array(samples[kind][0], dtype="datetime64[s]"), samples[kind][1], site_id, dropped[kind])
        for kind in (H, V)
    ]


# -- archive fetch -----------------------------------------------------------

class FetchError(RuntimeError):
    pass


class HTTPStatusError(FetchError):
    def __init__(self, status: int, url: str):
        self.status = status
        self.url = url
        super().__init__(f"HTTP {status} for {url}")


class NotFound(HTTPStatusError):
    pass


class FetchTimeout(FetchError):
    pass


def fetch_historical(
    station_id: str,
    year: int,
    endpoint_template: str = DEFAULT_NDBC_TEMPLATE,
    retries: int = 3,
    backoff: float = 1.0,
    timeout: float = 30.0,
    sleep=time.sleep,
) -> bytes:
    """Download one historical file; retries timeouts and 5xx responses.

    ``endpoint_template`` is formatted with ``station`` and ``year``.  The
    body is returned untouched.
    """
    if not station_id or not str(station_id).strip():
        raise ValueError("station_id must be non-empty")
    current = datetime.now(timezone.utc).year
    if not 1970 <= int(year) <= current:
        raise ValueError(f"year {year} outside 1970..{current}")
    url = endpoint_template.format(station=station_id, year=int(year))

    attempt = 0
    while True:
        try:
            with urllib.request.urlopen(url, timeout=timeout) as resp:
                return resp.read()
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                raise NotFound(404, url) from None
            if exc.code < 500 or attempt >= retries:
                raise HTTPStatusError(exc.code, url) from None
            err = exc
        except (socket.timeout, TimeoutError) as exc:
            if attempt >= retries:
                raise FetchTimeout(f"timed out fetching {url}") from exc
            err = exc
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, (socket.timeout, TimeoutError)):
                if attempt >= retries:
                    raise FetchTimeout(f"timed out fetching {url}") from exc
                err = exc
            else:
                raise FetchError(f"cannot reach {url}: {exc.reason}") from exc
        delay = backoff * 2 ** attempt
        log.warning("fetch %s failed (%s); retrying in %.1fs", url, err, delay)
        sleep(delay)
        attempt += 1


# -- numerical model grids ----------------------------------------------------

@dataclass(frozen=True)
class GridPointSeries:
    latitude: float
    longitude: float
    series: HourlyTimeSeries

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0 or not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"grid point ({self.latitude}, {self.longitude}) out of range")

    @property
    def variable(self) -> VariableKind:
        return self.series.variable


GRID_COLUMNS = ("time", "lat", "lon", "variable", "value")


def parse_grid_file(data):
    """Parse a tabular grid extract (time, lat, lon, variable, value).

    Returns one GridPointSeries per (lat, lon, variable), each spanning the
    first to last hour seen for that key; hours without a row and blank
    values are missing.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    reader = csv.reader(io.StringIO(data))
    header = next(reader, None)
    if header is None:
        raise ParseError("empty grid file", 1)
    header = [h.strip() for h in header]
    for col in GRID_COLUMNS:
        if col not in header:
            raise ParseError(f"missing required column '{col}'", 1)
    pos = {col: header.index(col) for col in GRID_COLUMNS}

    groups = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", lineno)
        try:
            hour = hour_number(row[pos["time"]])
            lat = float(row[pos["lat"]])
            lon = float(row[pos["lon"]])
            kind = VariableKind.parse(row[pos["variable"]])
        except (ValueError, TypeError) as exc:
            raise ParseError(str(exc), lineno)
        token = row[pos["value"]].strip()
        if token:
            try:
                value = float(token)
            except ValueError:
                raise ParseError(f"non-numeric value {token!r}", lineno)
            if not np.isfinite(value):
                value = None
        else:
            value = None
        cells = groups.setdefault((lat, lon, kind), {})
        if hour in cells:
            raise ParseError(f"duplicate row for ({row[pos['time']]}, {lat}, {lon}, {kind.value})", lineno)
        cells[hour] = value

    out = []
    for (lat, lon, kind), cells in sorted(groups.items(), key=lambda kv: (kv[0][2].value, kv[0][0], kv[0][1])):
        lo, hi = min(cells), max(cells) + 1
        values = np.zeros(hi - lo)
        present = np.zeros(hi - lo, dtype=bool)
        for hour, value in cells.items():
            if value is not None:
                values[hour - lo] = value
                present[hour - lo] = True
        series = HourlyTimeSeries(kind, from_hour_number(lo), values, present, f"{lat},{lon}")
        out.append(GridPointSeries(lat, lon, series))
    return out


# -- triangulation -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Triangulation:
    """Planar triangulation of (lat, lon) points; triangles index into ``points``."""

    points: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 2)
        tris = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        pts.flags.writeable = False
        tris.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "triangles", tris)

    def areas(self) -> np.ndarray:
        a, b, c = (self.points[self.triangles[:, i]] for i in range(3))
        return 0.5 * _cross(b - a, c - a)


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _circumcircle(a, b, c):
    d = 2.0 * _cross(b - a, c - a)
    ab, ac = b - a, c - a
    ux = (ac[1] * (ab @ ab) - ab[1] * (ac @ ac)) / d
    uy = (ab[0] * (ac @ ac) - ac[0] * (ab @ ab)) / d
    centre = a + np.array([ux, uy])
    return centre, float(np.hypot(ux, uy))


def delaunay(points) -> Triangulation:
    """Delaunay triangulation of a small planar point set.

    Every triple with an empty circumcircle defines a Delaunay cell made of
    all points on that circle.  Cells with more than three co-circular points
    are fanned from their lexicographically smallest vertex, so the unit
    square is split along the diagonal through its smallest corner.

    Cost grows as O(n^4); meant for the handful of grid points around a buoy.
    """
    pts = np.array([(float(p[0]), float(p[1])) for p in points], dtype=np.float64)
    n = len(pts)
    if n < 3:
        raise ValueError("delaunay needs at least 3 points")
    if len({tuple(p) for p in pts}) != n:
        raise ValueError("duplicate points")
    scale = max(float(np.ptp(pts, axis=0).max()), 1.0)
    tol = 1e-12 * scale
    cells = set()
    for i, j, k in itertools.combinations(range(n), 3):
        a, b, c = pts[i], pts[j], pts[k]
        if abs(_cross(b - a, c - a)) <= tol * scale:
            continue
        centre, radius = _circumcircle(a, b, c)
        dist = np.hypot(*(pts - centre).T)
        rtol = 1e-9 * max(radius, scale)
        if np.any(dist < radius - rtol):
            continue
        cells.add(frozenset(np.flatnonzero(np.abs(dist - radius) <= rtol).tolist()))
    if not cells:
        raise ValueError("points are collinear")

    triangles = []
    for cell in cells:
        idx = sorted(cell)
        centroid = pts[idx].mean(axis=0)
        angle = np.arctan2(*(pts[idx] - centroid).T[::-1])
        ring = [idx[m] for m in np.argsort(angle)]
        first = min(ring, key=lambda m: tuple(pts[m]))
        r = ring.index(first)
        ring = ring[r:] + ring[:r]
        for m in range(1, len(ring) - 1):
            tri = [ring[0], ring[m], ring[m + 1]]
            a, b, c = pts[tri]
            if _cross(b - a, c - a) < 0:
                tri[1], tri[2] = tri[2], tri[1]
            triangles.append(tri)
    triangles.sort(key=lambda t: sorted(t))
    return Triangulation(pts, np.array(triangles, dtype=np.int64))


def _barycentric(tri: Triangulation, target):
    p = np.asarray(target, dtype=np.float64)
    a = tri.points[tri.triangles[:, 0]]
    b = tri.points[tri.triangles[:, 1]]
    c = tri.points[tri.triangles[:, 2]]
    area = _cross(b - a, c - a)
    wa = _cross(b - p, c - p) / area
    wb = _cross(c - p, a - p) / area
    wc = 1.0 - wa - wb
    return np.stack([wa, wb, wc], axis=1)


def locate(tri: Triangulation, target, tol: float = 1e-12):
    """Return (triangle index, barycentric weights) for ``target``.

    Points on a shared edge go to the first containing triangle.
    """
    weights = _barycentric(tri, target)
    inside = np.all(weights >= -tol, axis=1)
    hits = np.flatnonzero(inside)
    if hits.size == 0:
        raise ValueError("extrapolation not supported: target outside the convex hull")
    k = int(hits[0])
    return k, weights[k]


def interpolation_weights(tri: Triangulation, target):
    """Vertex indices and weights used to interpolate at ``target``."""
    p = np.asarray(target, dtype=np.float64)
    dist = np.abs(tri.points - p).max(axis=1)
    hit = np.flatnonzero(dist <= VERTEX_TOL)
    if hit.size:
        return np.array([hit[0]]), np.array([1.0])
    k, w = locate(tri, p)
    return tri.triangles[k].copy(), w


def interpolate_to_point(tri: Triangulation, values_at_points, target):
    """Barycentric interpolation of per-point values at ``target``.

    ``values_at_points`` may contain None/NaN; the result is None when a
    vertex that the target depends on is missing.
    """
    verts, weights = interpolation_weights(tri, target)
    vals = []
    for v in verts:
        x = values_at_points[v]
        if x is None or not np.isfinite(x):
            return None
        vals.append(float(x))
    return float(np.dot(weights, vals))


def extract_numerical_series(grid, site, site_id: str = "") -> HourlyTimeSeries:
    """Interpolate a set of grid-point series of one variable to ``site`` (lat, lon).

    The output spans the union of the grid-point horizons; an hour is missing
    whenever one of the vertices used at the site is missing.
    """
    if not grid:
        raise ValueError("no grid points supplied")
    kinds = {g.variable for g in grid}
    if len(kinds) != 1:
        raise ValueError("grid points mix variables; extract one variable at a time")
    tri = delaunay([(g.latitude, g.longitude) for g in grid])
    verts, weights = interpolation_weights(tri, site)
    lo, hi = union_grid([g.series for g in grid])
    stacked = [grid[v].series.reindex(lo, hi) for v in verts]
    values = sum(w * s.values for w, s in zip(weights, stacked))
    present = np.logical_and.reduce([s.present for s in stacked])
    return HourlyTimeSeries(kinds.pop(), from_hour_number(lo), values, present, site_id)
