import http.server
import itertools
import threading
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from metocean import synthetic
from metocean.ingest import (
    FetchTimeout,
    GridPointSeries,
    HTTPStatusError,
    NotFound,
    ObservationFormat,
    ParseError,
    delaunay,
    extract_numerical_series,
    fetch_historical,
    interpolate_to_point,
    locate,
    parse_grid_file,
    parse_observation_file,
)
from metocean.timeseries import H, V, HourlyTimeSeries, resample_to_hourly

T0 = datetime(2019, 1, 1, tzinfo=timezone.utc)

NDBC = """#YY  MM DD hh mm WDIR WSPD GST  WVHT   DPD   APD MWD   PRES  ATMP  WTMP  DEWP  VIS  TIDE
#yr  mo dy hr mn degT m/s  m/s     m   sec   sec degT   hPa  degC  degC  degC  nmi    ft
2019 01 01 00 50 270  8.1 99.0  1.20  8.00  6.00 999 1015.0  10.0  12.0   5.0 99.0 99.00
2019 01 01 01 50 270  MM  99.0 99.00  8.00  6.00 999 1015.0  10.0  12.0   5.0 99.0 99.00
2019 01 01 02 50 270  9.3 99.0  1.45  8.00  6.00 999 1015.0  10.0  12.0   5.0 99.0 99.00
"""


# -- observation parsing -------------------------------------------------------

def test_ndbc_sentinels_dropped_and_counted():
    batches = {b.variable: b for b in parse_observation_file(NDBC.encode(), ObservationFormat.NDBC_STDMET)}
    h, v = batches[H], batches[V]
    assert list(h.values) == [1.20, 1.45]
    assert h.dropped == 1
    assert list(v.values) == [8.1, 9.3]
    assert v.dropped == 1
    assert h.times[0] == np.datetime64("2019-01-01T00:50:00")


def test_ndbc_two_digit_year_without_minutes():
    text = "YY MM DD hh WSPD WVHT\n98 03 04 05 7.0 2.0\n"
    batches = {b.variable: b for b in parse_observation_file(text, "NDBC_STDMET")}
    assert batches[H].times[0] == np.datetime64("1998-03-04T05:00:00")


def test_ndbc_errors_are_positioned():
    bad = NDBC.splitlines()
    bad[3], bad[4] = bad[4], bad[3]
    with pytest.raises(ParseError) as exc:
        parse_observation_file("\n".join(bad), ObservationFormat.NDBC_STDMET)
    assert exc.value.line == 5
    with pytest.raises(ParseError) as exc:
        parse_observation_file("FOO BAR\n1 2\n", ObservationFormat.NDBC_STDMET)
    assert exc.value.line == 1
    with pytest.raises(ParseError) as exc:
        parse_observation_file(NDBC + "2019 01 01 03 50 270\n", ObservationFormat.NDBC_STDMET)
    assert exc.value.line == 6


def test_generic_csv():
    text = "time,variable,value\n2019-01-01T00:00Z,H,1.25\n2019-01-01T00:00Z,v,7.5\n2019-01-01T01:00Z,H,\n"
    batches = {b.variable: b for b in parse_observation_file(text, ObservationFormat.GENERIC_CSV)}
    assert batches[H].times[0] == np.datetime64("2019-01-01T00:00:00")
    assert list(batches[H].values) == [1.25]
    assert batches[H].dropped == 1
    assert list(batches[V].values) == [7.5]


def test_header_only_gives_empty_batches():
    for text, fmt in (("time,variable,value\n", "GENERIC_CSV"), (NDBC.split("2019")[0], "NDBC_STDMET")):
        batches = parse_observation_file(text, fmt)
        assert batches and all(len(b) == 0 for b in batches)


def test_generic_csv_errors():
    with pytest.raises(ParseError):
        parse_observation_file("when,what\n", "GENERIC_CSV")
    with pytest.raises(ParseError) as exc:
        parse_observation_file("time,variable,value\n2019-01-01T00:00Z,X,1\n", "GENERIC_CSV")
    assert exc.value.line == 2
    with pytest.raises(ValueError):
        parse_observation_file("time,variable,value\n", "NETCDF")


def test_synthetic_ndbc_round_trip():
    wave, wind = synthetic.metocean_truth(T0, 48, seed=3)
    missing = np.zeros(48, dtype=bool)
    missing[[5, 6, 30]] = True
    batches = {b.variable: b for b in parse_observation_file(synthetic.ndbc_text(T0, wave, wind, missing), "NDBC_STDMET")}
    s = resample_to_hourly(batches[H])
    assert len(s) == 48 and s.n_missing == 3
    np.testing.assert_allclose(s.values[s.present], np.round(wave, 2)[~missing])


# -- grid parsing --------------------------------------------------------------

def test_grid_file_grouping_and_blanks():
    points = synthetic.cell_around(40.0, -70.0)
    field = np.tile(np.arange(24.0), (4, 1))
    field[2, 7] = np.nan
    grid = parse_grid_file(synthetic.grid_csv(T0, points, {H: field}))
    assert len(grid) == 4
    assert all(len(g.series) == 24 for g in grid)
    by_point = {(g.latitude, g.longitude): g for g in grid}
    assert by_point[points[2]].series.to_list()[7] is None
    assert by_point[points[0]].series.n_missing == 0


def test_grid_file_errors():
    with pytest.raises(ParseError, match="'lon'"):
        parse_grid_file("time,lat,variable,value\n")
    row = "2019-01-01T00:00Z,40,-70,H,1.0\n"
    with pytest.raises(ParseError, match="duplicate"):
        parse_grid_file("time,lat,lon,variable,value\n" + row + row)


# -- triangulation --------------------------------------------------------------

def circumcircle_empty(pts, tri, tol=1e-9):
    """Independent check: no point strictly inside the triangle's circumcircle (incircle determinant)."""
    a, b, c = pts[tri]
    for p in pts:
        m = np.array([[*(q - p), (q - p) @ (q - p)] for q in (a, b, c)])
        det = np.linalg.det(m)
        orient = (b - a)[0] * (c - a)[1] - (b - a)[1] * (c - a)[0]
        if det * np.sign(orient) > tol:
            return False
    return True


def test_unit_square_tie_break():
    tri = delaunay([(0, 0), (0, 1), (1, 0), (1, 1)])
    assert len(tri.triangles) == 2
    for t in tri.triangles:
        assert 0 in t and 3 in t


def test_single_triangle_and_errors():
    assert len(delaunay([(0, 0), (1, 0), (0, 1)]).triangles) == 1
    with pytest.raises(ValueError, match="collinear"):
        delaunay([(0, 0), (1, 0), (2, 0)])
    with pytest.raises(ValueError):
        delaunay([(0, 0), (1, 0)])


def cross2(u, v):
    return u[0] * v[1] - u[1] * v[0]


coords = st.floats(-5, 5, allow_nan=False).map(lambda x: round(x, 3))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(coords, coords), min_size=3, max_size=8, unique=True))
def test_delaunay_properties(points):
    pts = np.array(points, dtype=float)
    assume(np.linalg.matrix_rank(pts[1:] - pts[0]) == 2)
    # reject near-degenerate configurations where floating tolerances decide
    for i, j, k in itertools.combinations(range(len(pts)), 3):
        assume(abs(cross2(pts[j] - pts[i], pts[k] - pts[i])) > 1e-3)
    tri = delaunay(points)
    areas = tri.areas()
    assert np.all(areas > 0)
    scipy_spatial = pytest.importorskip("scipy.spatial")
    hull = scipy_spatial.ConvexHull(pts)
    assert areas.sum() == pytest.approx(hull.volume, rel=1e-9)
    for t in tri.triangles:
        assert circumcircle_empty(pts, t)


def test_delaunay_matches_scipy_in_general_position():
    spatial = pytest.importorskip("scipy.spatial")
    rng = np.random.default_rng(7)
    for _ in range(20):
        pts = rng.uniform(-1, 1, (7, 2))
        ours = {tuple(sorted(t)) for t in delaunay(pts).triangles.tolist()}
        ref = {tuple(sorted(t)) for t in spatial.Delaunay(pts).simplices.tolist()}
        assert ours == ref


# -- interpolation ----------------------------------------------------------------

def test_interpolation_examples():
    tri = delaunay([(0, 0), (0, 1), (1, 0), (1, 1)])
    assert interpolate_to_point(tri, [2.0, 5.0, 7.0, 9.0], (0, 0)) == 2.0
    assert interpolate_to_point(tri, [2.0, 5.0, 7.0, 9.0], (1 + 1e-10, 1)) == 9.0
    t = delaunay([(0, 0), (3, 0), (0, 3)])
    assert interpolate_to_point(t, [1.0, 2.0, 3.0], (1, 1)) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValueError, match="extrapolation not supported"):
        interpolate_to_point(tri, [1, 2, 3, 4], (2, 2))


def test_interpolation_affine_field():
    corners = [(0, 0), (0, 1), (1, 0), (1, 1)]
    tri = delaunay(corners)
    f = lambda lat, lon: 2 + 3 * lat - 1 * lon
    vals = [f(*c) for c in corners]
    rng = np.random.default_rng(0)
    for target in rng.uniform(0, 1, (100, 2)):
        assert abs(interpolate_to_point(tri, vals, target) - f(*target)) <= 1e-9


def test_interpolation_missing_vertex():
    tri = delaunay([(0, 0), (0, 1), (1, 0), (1, 1)])
    k, _ = locate(tri, (0.9, 0.1))
    used = set(tri.triangles[k].tolist())
    unused = ({0, 1, 2, 3} - used).pop()
    vals = [1.0, 1.0, 1.0, 1.0]
    vals[unused] = None
    assert interpolate_to_point(tri, vals, (0.9, 0.1)) == 1.0
    vals = [1.0, 1.0, 1.0, 1.0]
    vals[next(iter(used - {0, 3}))] = None
    assert interpolate_to_point(tri, vals, (0.9, 0.1)) is None


def test_on_edge_goes_to_first_triangle():
    tri = delaunay([(0, 0), (0, 1), (1, 0), (1, 1)])
    k, _ = locate(tri, (0.5, 0.5))
    assert k == 0


@settings(max_examples=100)
@given(st.lists(st.floats(-50, 50), min_size=4, max_size=4),
       st.floats(0, 1), st.floats(0, 1))
def test_interpolation_within_vertex_range(vals, x, y):
    tri = delaunay([(0, 0), (0, 1), (1, 0), (1, 1)])
    k, _ = locate(tri, (x, y))
    used = [vals[i] for i in tri.triangles[k]]
    out = interpolate_to_point(tri, vals, (x, y))
    assert min(used) - 1e-9 <= out <= max(used) + 1e-9


# -- series extraction -----------------------------------------------------------

def _grid(points, field):
    return [GridPointSeries(lat, lon, HourlyTimeSeries.from_array(H, T0, field[i])) for i, (lat, lon) in enumerate(points)]


def test_extract_constant():
    pts = synthetic.cell_around(40.0, -70.0)
    s = extract_numerical_series(_grid(pts, np.ones((4, 24))), (40.0, -70.0))
    assert s.to_list() == [1.0] * 24


def test_extract_per_hour_linear_field():
    pts = [(40.0, -70.0), (40.0, -69.5), (40.5, -70.0), (40.5, -69.5)]
    hours = np.arange(24)
    field = np.array([[1 + 0.1 * h + 2 * lat - 0.5 * lon for h in hours] for lat, lon in pts])
    site = (40.2, -69.7)
    s = extract_numerical_series(_grid(pts, field), site)
    expected = [1 + 0.1 * h + 2 * site[0] - 0.5 * site[1] for h in hours]
    np.testing.assert_allclose(s.values, expected, atol=1e-9)


def test_extract_missing_propagates():
    pts = [(40.0, -70.0), (40.0, -69.5), (40.5, -70.0), (40.5, -69.5)]
    site = (40.4, -69.9)
    tri = delaunay(pts)
    k, _ = locate(tri, site)
    field = np.ones((4, 10))
    field[tri.triangles[k][1], 3] = np.nan
    s = extract_numerical_series(_grid(pts, field), site)
    assert s.to_list()[3] is None and s.n_missing == 1


def test_extract_outside_hull():
    pts = synthetic.cell_around(40.0, -70.0)
    with pytest.raises(ValueError, match="extrapolation"):
        extract_numerical_series(_grid(pts, np.ones((4, 5))), (41.0, -70.0))


# -- fetch ----------------------------------------------------------------------------

class _Handler(http.server.BaseHTTPRequestHandler):
    plan = {}
    hits = {}

    def do_GET(self):
        _Handler.hits[self.path] = _Handler.hits.get(self.path, 0) + 1
        codes = _Handler.plan.get(self.path, [404])
        code = codes[min(_Handler.hits[self.path] - 1, len(codes) - 1)]
        if code == "slow":
            import time
            time.sleep(0.5)
            code = 200
        self.send_response(code)
        self.end_headers()
        if code == 200:
            self.wfile.write(b"payload " + self.path.encode())

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    _Handler.plan, _Handler.hits = {}, {}
    srv = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    th = threading.Thread(target=srv.serve_forever, daemon=True)
    th.start()
    yield f"http://127.0.0.1:{srv.server_address[1]}" + "/{station}/{year}", _Handler
    srv.shutdown()


def test_fetch_success(server):
    template, handler = server
    handler.plan["/44008/2019"] = [200]
    assert fetch_historical("44008", 2019, template) == b"payload /44008/2019"


def test_fetch_404_no_retry(server):
    template, handler = server
    sleeps = []
    with pytest.raises(NotFound) as exc:
        fetch_historical("nope", 2019, template, sleep=sleeps.append)
    assert exc.value.status == 404
    assert handler.hits["/nope/2019"] == 1 and sleeps == []


def test_fetch_retries_5xx_with_backoff(server):
    template, handler = server
    handler.plan["/s/2019"] = [503, 500, 200]
    sleeps = []
    assert fetch_historical("s", 2019, template, sleep=sleeps.append).startswith(b"payload")
    assert sleeps == [1.0, 2.0]
    handler.plan["/t/2019"] = [502]
    with pytest.raises(HTTPStatusError) as exc:
        fetch_historical("t", 2019, template, sleep=sleeps.append)
    assert exc.value.status == 502 and handler.hits["/t/2019"] == 4


def test_fetch_timeout(server):
    template, handler = server
    handler.plan["/slow/2019"] = ["slow"]
    with pytest.raises(FetchTimeout):
        fetch_historical("slow", 2019, template, retries=1, timeout=0.05, sleep=lambda s: None)


def test_fetch_preconditions_before_network():
    with pytest.raises(ValueError):
        fetch_historical("44008", 1850, "http://invalid.invalid/{station}/{year}")
    with pytest.raises(ValueError):
        fetch_historical("", 2019, "http://invalid.invalid/{station}/{year}")
