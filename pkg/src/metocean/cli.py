"""
Command-line pipeline: ingest -> fit -> metrics -> report, plus fetch.

Every command reads one JSON run configuration.  Exit status is 0 on full
success, 1 when some units failed, 2 on configuration or usage errors.
Diagnostics go to stderr; results go to files under the output directory.
"""

from __future__ import annotations

import argparse
import csv
import gzip
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import ingest as ing
from . import metrics as met
from . import store
from . import tsr
from .timeseries import (
    ALL_YEAR,
    HourlyTimeSeries,
    SeasonFilter,
    SiteDataset,
    VariableKind,
    format_time,
    from_hour_number,
    hour_number,
    missing_report,
    pool_series,
    quality_filter,
    resample_to_hourly,
    to_utc,
    union_grid,
)

log = logging.getLogger("metocean")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2
CACHE_ENV = "METOCEAN_CACHE_DIR"
SOURCES = ("observed", "numerical", "tsr")


class ConfigError(ValueError):
    pass


# -- configuration --------------------------------------------------------------------

@dataclass
class ObservationSource:
    path: Path
    format: str


@dataclass
class SiteConfig:
    site_id: str
    lat: Optional[float]
    lon: Optional[float]
    observations: list = field(default_factory=list)
    grids: list = field(default_factory=list)
    members: list = field(default_factory=list)


@dataclass
class RouteConfig:
    route_id: str
    locations: list
    profile: met.OperationalProfile
    model_from: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    sites: list
    variables: list
    fourier: tsr.FourierConfig
    epoch: object
    train: tuple
    test: tuple
    h_limits: list
    v_limits: list
    zetas: list
    seasons: list
    routes: list
    output_dir: Path
    window: Optional[tuple] = None
    quality_bounds: dict = field(default_factory=dict)

    @property
    def limits_grid(self):
        kinds = set(self.variables)
        h = self.h_limits if VariableKind.SignificantWaveHeight in kinds else None
        v = self.v_limits if VariableKind.WindSpeed in kinds else None
        return met.limits_grid(h, v)

    def site(self, site_id):
        for s in self.sites:
            if s.site_id == site_id:
                return s
        raise KeyError(site_id)


def _window(pair, name):
    if not isinstance(pair, (list, tuple)) or len(pair) != 2:
        raise ConfigError(f"{name} must be a [start, end] pair")
    lo, hi = to_utc(pair[0]), to_utc(pair[1])
    if hi <= lo:
        raise ConfigError(f"{name} end must be after start")
    return lo, hi


def _site(doc, base: Path, check_files: bool) -> SiteConfig:
    try:
        site_id = str(doc["site_id"])
    except KeyError:
        raise ConfigError("every site needs a site_id")
    obs = []
    for entry in doc.get("observations", []):
        if isinstance(entry, str):
            entry = {"path": entry}
        path = (base / entry["path"]).resolve()
        fmt = entry.get("format", "NDBC_STDMET")
        try:
            ing.ObservationFormat(fmt)
        except ValueError:
            raise ConfigError(f"site {site_id}: unknown observation format {fmt!r}")
        obs.append(ObservationSource(path, fmt))
    grids = [(base / g).resolve() for g in doc.get("grids", [])]
    members = [_site(m, base, check_files) for m in doc.get("members", [])]
    if check_files:
        for p in [o.path for o in obs] + grids:
            if not p.exists():
                raise ConfigError(f"site {site_id}: file not found: {p}")
    lat, lon = doc.get("lat"), doc.get("lon")
    if (lat is None or lon is None) and members:
        lat = float(np.mean([m.lat for m in members]))
        lon = float(np.mean([m.lon for m in members]))
    if lat is None or lon is None:
        raise ConfigError(f"site {site_id}: lat/lon required")
    return SiteConfig(site_id, float(lat), float(lon), obs, grids, members)


def load_config(path, check_files: bool = True, output_dir=None) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    base = path.parent.resolve()
    try:
        sites = [_site(s, base, check_files) for s in doc.get("sites", [])]
        if not sites:
            raise ConfigError("config lists no sites")
        ids = [s.site_id for s in sites]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate site_id in config")
        variables = [VariableKind.parse(v) for v in doc.get("variables", ["H", "v"])]
        four = doc.get("fourier", {})
        fourier = tsr.FourierConfig(four.get("K", 8), four.get("period_short", 720.0),
                                    four.get("period_long", 8760.0))
        split = doc.get("split", {})
        train = _window(split.get("train", ["2019-01-01T00:00Z", "2023-01-01T00:00Z"]), "split.train")
        test = _window(split.get("test", ["2023-01-01T00:00Z", "2024-01-01T00:00Z"]), "split.test")
        if train[0] < test[1] and test[0] < train[1]:
            raise ConfigError("train and test windows overlap")
        window = _window(doc["window"], "window") if "window" in doc else None
        limits = doc.get("limits", {})
        h_limits = [float(x) for x in limits.get("H", met.DEFAULT_H_LIMITS)]
        v_limits = [float(x) for x in limits.get("v", [met.DEFAULT_V_LIMIT])]
        zetas = [int(z) for z in doc.get("zeta", met.DEFAULT_ZETAS)]
        if not h_limits or not v_limits or not zetas:
            raise ConfigError("limit and zeta grids must be non-empty")
        seasons = [SeasonFilter(frozenset(s["months"]), s.get("label", "")) for s in doc["seasons"]] \
            if "seasons" in doc else list(met.DEFAULT_SEASONS)
        if not seasons:
            raise ConfigError("season list must be non-empty")
        routes = []
        for r in doc.get("routes", []):
            locs = [str(x) for x in r["locations"]]
            for loc in locs:
                if loc not in ids:
                    raise ConfigError(f"route {r['route_id']}: unknown location site {loc!r}")
            profile = met.OperationalProfile(tuple(tuple(leg) for leg in r["profile"]))
            met.build_position_matrix(profile, len(locs))
            routes.append(RouteConfig(str(r["route_id"]), locs, profile, dict(r.get("model_from", {}))))
        bounds = {VariableKind.parse(k): tuple(v) for k, v in doc.get("quality_bounds", {}).items()}
        out = Path(output_dir) if output_dir else (base / doc.get("output_dir", "out"))
        return RunConfig(sites, variables, fourier, to_utc(doc.get("epoch", tsr.DEFAULT_EPOCH)),
                         train, test, h_limits, v_limits, zetas, seasons, routes, out, window, bounds)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


# -- ingest -----------------------------------------------------------------------------

def _observed_series(site: SiteConfig, cfg: RunConfig) -> dict:
    """Hourly, quality-filtered observations per variable for one buoy."""
    pieces = {}
    for src in site.observations:
        batches = ing.parse_observation_file(src.path.read_bytes(), src.format, site.site_id)
        for batch in batches:
            if batch.variable not in cfg.variables or len(batch) == 0:
                continue
            hourly = resample_to_hourly(batch)
            bounds = cfg.quality_bounds.get(batch.variable)
            hourly, n_bad = quality_filter(hourly, bounds)
            if n_bad:
                log.info("%s %s: discarded %d implausible values", site.site_id, batch.variable.value, n_bad)
            pieces.setdefault(batch.variable, []).append(hourly)
    out = {}
    for kind, parts in pieces.items():
        out[kind] = parts[0] if len(parts) == 1 else pool_series(parts, site.site_id)
        out[kind] = out[kind].replace(site_id=site.site_id)
    return out


def _missing_rows(site_id, lat, lon, series: dict, window) -> list:
    rows = []
    for kind in sorted(series, key=lambda k: k.value):
        s = series[kind]
        idx = np.flatnonzero(s.present)
        if idx.size == 0:
            continue
        first, last = int(s.hours[idx[0]]), int(s.hours[idx[-1]])
        cover = missing_report(s, (from_hour_number(first), from_hour_number(last + 1)))
        full = missing_report(s, window) if window else cover
        rows.append([site_id, kind.value, repr(lat), repr(lon), format_time(from_hour_number(first)),
                     format_time(from_hour_number(last)), f"{cover:.6f}", f"{full:.6f}"])
    return rows


def _check_files(site: SiteConfig):
    for p in [o.path for o in site.observations] + list(site.grids):
        if not p.exists():
            raise FileNotFoundError(f"file not found: {p}")
    for m in site.members:
        _check_files(m)


def ingest_site(site: SiteConfig, cfg: RunConfig):
    """Build the aligned dataset of one site; returns (SiteDataset, missingness rows)."""
    _check_files(site)
    rows = []
    if site.members:
        member_series = []
        for m in site.members:
            ms = _observed_series(m, cfg)
            rows += _missing_rows(m.site_id, m.lat, m.lon, ms, cfg.window)
            member_series.append(ms)
        observed = {}
        for kind in cfg.variables:
            parts = [ms[kind] for ms in member_series if kind in ms]
            if len(parts) >= 2:
                observed[kind] = pool_series(parts, site.site_id)
            elif parts:
                observed[kind] = parts[0].replace(site_id=site.site_id)
        observed.update({k: v for k, v in _observed_series(site, cfg).items() if k not in observed})
    else:
        observed = _observed_series(site, cfg)

    numerical = {}
    points = []
    for g in site.grids:
        points += ing.parse_grid_file(g.read_bytes())
    for kind in cfg.variables:
        pts = [p for p in points if p.variable is kind]
        if pts:
            numerical[kind] = ing.extract_numerical_series(pts, (site.lat, site.lon), site.site_id)

    everything = list(observed.values()) + list(numerical.values())
    if not everything:
        raise ValueError(f"site {site.site_id}: no observation or grid data")
    if cfg.window:
        lo, hi = hour_number(cfg.window[0]), hour_number(cfg.window[1])
    else:
        lo, hi = union_grid(everything)
    observed = {k: s.reindex(lo, hi) for k, s in observed.items()}
    numerical = {k: s.reindex(lo, hi) for k, s in numerical.items()}
    rows += _missing_rows(site.site_id, site.lat, site.lon, observed, cfg.window)
    return SiteDataset(site.site_id, site.lat, site.lon, observed, numerical), rows


def _parallel(fn, items, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _guard(fn):
    def wrapped(item):
        try:
            return item, fn(item), None
        except Exception as exc:  # per-unit failure is reported, the run continues
            return item, None, exc
    return wrapped


MISSING_HEADER = ["site_id", "variable", "lat", "lon", "start", "end", "missing_in_coverage",
                  "missing_in_window"]


def cmd_ingest(cfg: RunConfig, jobs: int = 1) -> int:
    results = _parallel(_guard(lambda s: ingest_site(s, cfg)), cfg.sites, jobs)
    index, miss_rows, failures = [], [], 0
    for site, res, err in results:
        if err is not None:
            failures += 1
            log.error("ingest %s failed: %s", site.site_id, err)
            continue
        ds, rows = res
        store.write_site_dataset(cfg.output_dir, ds)
        miss_rows += rows
        grid = next(iter(list(ds.observed.values()) + list(ds.numerical.values())))
        index.append({
            "site_id": ds.site_id,
            "lat": ds.latitude,
            "lon": ds.longitude,
            "variables": [k.value for k in ds.variables],
            "observed": [k.value for k in sorted(ds.observed, key=lambda k: k.value)],
            "numerical": [k.value for k in sorted(ds.numerical, key=lambda k: k.value)],
            "start": format_time(grid.start),
            "hours": len(grid),
        })
    index.sort(key=lambda d: d["site_id"])
    miss_rows.sort(key=lambda r: (r[0], r[1]))
    store.atomic_write(cfg.output_dir / "datasets" / "sites.json", store.dump_json(index))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MISSING_HEADER)
    w.writerows(miss_rows)
    store.atomic_write(cfg.output_dir / "datasets" / "missingness.csv", buf.getvalue())
    return _status(failures, len(cfg.sites))


def _status(failures, total):
    if failures == 0:
        return EXIT_OK
    return EXIT_PARTIAL


def _load_index(cfg: RunConfig) -> list:
    path = cfg.output_dir / "datasets" / "sites.json"
    if not path.exists():
        raise ConfigError(f"no ingested datasets under {cfg.output_dir}; run 'ingest' first")
    return json.loads(path.read_text(encoding="utf-8"))


def _load_dataset(cfg, entry) -> SiteDataset:
    return store.read_site_dataset(cfg.output_dir, entry["site_id"], entry["lat"], entry["lon"],
                                   entry["variables"])


# -- fit ------------------------------------------------------------------------------------

EVAL_HEADER = ["site_id", "variable", "method", "r2", "rmse", "bias", "mae", "n", "error"]


def model_path(root, site_id, kind) -> Path:
    return Path(root) / "models" / f"{store.safe_name(site_id)}__{kind.value}.json"


def fit_unit(ds: SiteDataset, kind: VariableKind, cfg: RunConfig, clamp: bool = True):
    obs, num = ds.observed[kind], ds.numerical[kind]
    train_num = num.slice_time(*cfg.train)
    train_obs = obs.slice_time(*cfg.train)
    model = tsr.fit(tsr.build_design(train_num, train_obs, cfg.epoch, cfg.fourier))
    pred = tsr.predict(model, num, clamp=clamp)
    test_obs = obs.slice_time(*cfg.test)
    ev_tsr = tsr.evaluate(pred.slice_time(*cfg.test), test_obs)
    ev_num = tsr.evaluate(num.slice_time(*cfg.test), test_obs)
    return model, ev_tsr, ev_num


def _eval_row(site_id, kind, method, ev):
    return [site_id, kind.value, method, repr(ev.r2), repr(ev.rmse), repr(ev.bias), repr(ev.mae), ev.n, ""]


def cmd_fit(cfg: RunConfig, jobs: int = 1, clamp: bool = True) -> int:
    index = _load_index(cfg)
    units = []
    for entry in index:
        ds = _load_dataset(cfg, entry)
        for kind in cfg.variables:
            if kind in ds.observed and kind in ds.numerical:
                units.append((ds, kind))
    if not units:
        log.error("no site has both observed and numerical data to fit")
        return EXIT_PARTIAL
    results = _parallel(_guard(lambda u: fit_unit(u[0], u[1], cfg, clamp)), units, jobs)
    rows, failures = [], 0
    collected = {}
    for (ds, kind), res, err in results:
        if err is not None:
            failures += 1
            log.error("fit %s/%s failed: %s", ds.site_id, kind.value, err)
            rows.append([ds.site_id, kind.value, "tsr", "", "", "", "", "", str(err)])
            continue
        model, ev_tsr, ev_num = res
        store.atomic_write(model_path(cfg.output_dir, ds.site_id, kind), model.to_json() + "\n")
        rows.append(_eval_row(ds.site_id, kind, "tsr", ev_tsr))
        rows.append(_eval_row(ds.site_id, kind, "numerical", ev_num))
        collected.setdefault((kind, "tsr"), []).append(ev_tsr)
        collected.setdefault((kind, "numerical"), []).append(ev_num)
    rows.sort(key=lambda r: (r[1], r[0], r[2]))
    for (kind, method) in sorted(collected, key=lambda k: (k[0].value, k[1])):
        evs = collected[(kind, method)]
        rows.append(["Average", kind.value, method,
                     repr(float(np.mean([e.r2 for e in evs]))),
                     repr(float(np.mean([e.rmse for e in evs]))),
                     repr(float(np.mean([e.bias for e in evs]))),
                     repr(float(np.mean([e.mae for e in evs]))),
                     sum(e.n for e in evs), ""])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVAL_HEADER)
    w.writerows(rows)
    store.atomic_write(cfg.output_dir / "evaluation.csv", buf.getvalue())
    return _status(failures, len(units))


# -- metrics ------------------------------------------------------------------------------

def source_series(cfg: RunConfig, ds: SiteDataset, source: str, model_site: Optional[str] = None,
                  clamp: bool = True) -> dict:
    """Per-variable series of a site drawn from the requested source."""
    if source == "observed":
        return dict(ds.observed)
    if source == "numerical":
        return dict(ds.numerical)
    out = {}
    for kind, num in ds.numerical.items():
        path = model_path(cfg.output_dir, model_site or ds.site_id, kind)
        if not path.exists():
            raise FileNotFoundError(f"no fitted model {path.name} for {ds.site_id}")
        model = tsr.TsrModel.from_json(path.read_text(encoding="utf-8"))
        out[kind] = tsr.predict(model, num, clamp=clamp)
    return out


def _table_csv(cells):
    return met.sweep_to_csv(cells)


def _route(cfg, rc: RouteConfig, datasets: dict, source: str, clamp: bool) -> met.Route:
    locs, series = [], []
    for sid in rc.locations:
        ds = datasets[sid]
        ser = source_series(cfg, ds, source, rc.model_from.get(sid), clamp)
        missing = [k.value for k in cfg.variables if k not in ser]
        if missing:
            raise ValueError(f"route {rc.route_id}: location {sid} has no {source} series for {missing}")
        locs.append(met.Location(sid, ds.latitude, ds.longitude))
        series.append(ser)
    return met.Route(rc.route_id, tuple(locs), tuple(series))


def _profile_cells(route: met.Route, limits_list, zeta, seasons, strict):
    cells = []
    for lim in limits_list:
        for season in seasons:
            try:
                prof = met.route_accessibility_profile(route, lim, met.MissionWindow(zeta), season, strict)
            except ValueError as exc:
                cells.append(met.SweepCell(f"{route.route_id}/average", "accessibility", lim, zeta,
                                           season.label, error=str(exc)))
                continue
            for j, rep in enumerate(prof.accessibility, start=1):
                rep = met.MetricReport(rep.metric, rep.score, rep.passed, rep.evaluated, rep.excluded_missing,
                                       rep.limits, rep.zeta, rep.season,
                                       f"{route.route_id}/{j}:{route.locations[j - 1].site_id}")
                cells.append(met.SweepCell(rep.subject, "accessibility", lim, zeta, season.label, report=rep))
            cells.append(met.SweepCell(f"{route.route_id}/average", "accessibility", lim, zeta, season.label,
                                       aggregate=prof.average_accessibility))
    return cells


def cmd_metrics(cfg: RunConfig, source: str, strict_missing: bool = False, jobs: int = 1,
                clamp: bool = True) -> int:
    if source not in SOURCES:
        raise ConfigError(f"unknown source {source!r}")
    index = _load_index(cfg)
    datasets = {e["site_id"]: _load_dataset(cfg, e) for e in index}
    limits_list = cfg.limits_grid
    tables = {"approachability": [], "accessibility": [], "serviceability": [], "route_accessibility": []}
    failures, units = 0, 0
    for sid in sorted(datasets):
        if source != "numerical" and not datasets[sid].observed:
            log.info("metrics %s skipped: no observations, so no %s series", sid, source)
            continue
        units += 1
        try:
            series = source_series(cfg, datasets[sid], source, clamp=clamp)
            if not series:
                raise ValueError(f"no {source} series")
        except (OSError, ValueError) as exc:
            failures += 1
            log.error("metrics %s failed: %s", sid, exc)
            continue
        tables["approachability"] += met.sweep(series, limits_list, (1,), cfg.seasons, "approachability",
                                               subject=sid, strict_missing=strict_missing, jobs=jobs)
        tables["accessibility"] += met.sweep(series, limits_list, cfg.zetas, cfg.seasons, "accessibility",
                                             subject=sid, strict_missing=strict_missing, jobs=jobs)
    for rc in cfg.routes:
        units += 1
        try:
            route = _route(cfg, rc, datasets, source, clamp)
        except (KeyError, OSError, ValueError) as exc:
            failures += 1
            log.error("route %s failed: %s", rc.route_id, exc)
            continue
        P = met.build_position_matrix(rc.profile, route.J)
        tables["serviceability"] += met.sweep(route, limits_list, (P.zeta,), cfg.seasons, "serviceability",
                                              position_matrix=P, strict_missing=strict_missing, jobs=jobs)
        tables["route_accessibility"] += _profile_cells(route, limits_list, P.zeta, cfg.seasons, strict_missing)

    out = cfg.output_dir / "metrics" / source
    for name, cells in tables.items():
        cells = sorted(cells, key=lambda c: c.key)
        store.atomic_write(out / f"{name}.csv", _table_csv(cells))
        store.atomic_write(out / f"{name}.json", met.sweep_to_json(cells))
    if units and failures == units:
        return EXIT_PARTIAL
    return _status(failures, units)


# -- report ---------------------------------------------------------------------------------

class SchemaError(ValueError):
    pass


def _read_table(path: Path, required) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise SchemaError(f"{path.name}: missing column '{col}'")
        return list(reader)


def _f(x):
    return f"{float(x):.3f}" if x not in ("", None) else "  -  "


def render_evaluation(rows) -> list:
    """Side-by-side TSR / numerical table; '*' marks the better method per metric."""
    lines = []
    by_key = {}
    for r in rows:
        by_key.setdefault((r["variable"], r["site_id"]), {})[r["method"]] = r
    for var in sorted({k[0] for k in by_key}):
        lines.append(f"Evaluation on the test window, variable {var}")
        lines.append(f"{'site':<14}{'TSR r2':>10}{'rmse':>9}{'bias':>9}   {'NUM r2':>9}{'rmse':>9}{'bias':>9}")
        sites = sorted((s for v, s in by_key if v == var), key=lambda s: (s == "Average", s))
        for site in sites:
            pair = by_key[(var, site)]
            t, n = pair.get("tsr"), pair.get("numerical")
            if t is None or n is None or t.get("error") or not t.get("r2"):
                err = (t or {}).get("error", "incomplete")
                lines.append(f"{site:<14}  error: {err}")
                continue
            cells_t, cells_n = [], []
            for metric, better in (("r2", max), ("rmse", min), ("bias", None)):
                a, b = float(t[metric]), float(n[metric])
                if better is None:
                    best = "t" if abs(a) < abs(b) else ("n" if abs(b) < abs(a) else "")
                else:
                    best = "t" if better(a, b) == a and a != b else ("n" if a != b else "")
                cells_t.append(f"{a:8.3f}{'*' if best == 't' else ' '}")
                cells_n.append(f"{b:8.3f}{'*' if best == 'n' else ' '}")
            lines.append(f"{site:<14}{''.join(cells_t)} | {''.join(cells_n)}")
        lines.append("")
    return lines


def render_heatmaps(rows, source) -> list:
    lines = []
    ok = [r for r in rows if r["score"] != ""]
    for subject in sorted({r["subject"] for r in ok}):
        for season in sorted({r["season"] for r in ok if r["subject"] == subject}):
            sel = [r for r in ok if r["subject"] == subject and r["season"] == season]
            zetas = sorted({int(r["zeta"]) for r in sel})
            labels = sorted({r["variable_limits"] for r in sel},
                            key=lambda lab: [(k, float(v)) for k, v in (p.split("<") for p in lab.split(";"))])
            lines.append(f"Accessibility [{source}] {subject}, season {season} (rows: limits, cols: zeta h)")
            lines.append(f"{'limits':<16}" + "".join(f"{z:>8d}" for z in zetas))
            table = {(r["variable_limits"], int(r["zeta"])): r["score"] for r in sel}
            for lab in labels:
                lines.append(f"{lab:<16}" + "".join(f"{_f(table.get((lab, z), '')):>8}" for z in zetas))
            lines.append("")
    return lines


def render_routes(serv_rows, prof_rows, source) -> list:
    lines = []
    for route in sorted({r["subject"] for r in serv_rows}):
        for season in sorted({r["season"] for r in serv_rows if r["subject"] == route}):
            lines.append(f"Route {route} [{source}], season {season}: serviceability vs accessibility")
            locs = sorted({r["subject"] for r in prof_rows
                           if r["subject"].startswith(route + "/") and not r["subject"].endswith("/average")},
                          key=lambda s: int(s.split("/")[-1].split(":")[0]))
            header = f"{'limits':<16}{'serv':>8}" + "".join(f"{s.split('/')[-1]:>12}" for s in locs) + f"{'average':>10}"
            lines.append(header)
            serv = {r["variable_limits"]: r["score"] for r in serv_rows if r["subject"] == route and r["season"] == season}
            prof = {(r["subject"], r["variable_limits"]): r["score"] for r in prof_rows if r["season"] == season}
            for lab in sorted(serv, key=lambda lab: [(k, float(v)) for k, v in (p.split("<") for p in lab.split(";"))]):
                line = f"{lab:<16}{_f(serv[lab]):>8}"
                line += "".join(f"{_f(prof.get((s, lab), '')):>12}" for s in locs)
                line += f"{_f(prof.get((route + '/average', lab), '')):>10}"
                lines.append(line)
            lines.append("")
    return lines


def cmd_report(cfg: RunConfig) -> int:
    root = cfg.output_dir
    lines = []
    long_rows = []
    eval_path = root / "evaluation.csv"
    if eval_path.exists():
        lines += render_evaluation(_read_table(eval_path, EVAL_HEADER[:-1]))
    req = met.CSV_HEADER[:-1]
    metrics_root = root / "metrics"
    for source in SOURCES:
        d = metrics_root / source
        if not d.is_dir():
            continue
        tabs = {}
        for name in ("approachability", "accessibility", "serviceability", "route_accessibility"):
            p = d / f"{name}.csv"
            tabs[name] = _read_table(p, req) if p.exists() else []
            for r in tabs[name]:
                if r["score"] != "":
                    long_rows.append([source, name, r["subject"], r["variable_limits"], r["zeta"],
                                      r["season"], r["score"]])
        lines += render_heatmaps(tabs["accessibility"], source)
        lines += render_routes(tabs["serviceability"], tabs["route_accessibility"], source)
    if not lines and not long_rows:
        lines = ["no results"]
    text = "\n".join(lines).rstrip() + "\n"
    long_rows.sort()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "metric", "subject", "variable_limits", "zeta", "season", "score"])
    w.writerows(long_rows)
    store.atomic_write(root / "report" / "summary.txt", text)
    store.atomic_write(root / "report" / "plot_data.csv", buf.getvalue())
    sys.stdout.write(text)
    return EXIT_OK


# -- fetch ---------------------------------------------------------------------------------

def cmd_fetch(stations, years, template, out_dir: Path) -> int:
    cache = os.environ.get(CACHE_ENV)
    failures, total = 0, 0
    for station in stations:
        for year in years:
            total += 1
            name = f"{store.safe_name(station)}h{year}.txt"
            cached = Path(cache) / name if cache else None
            try:
                if cached is not None and cached.exists():
                    body = cached.read_bytes()
                else:
                    body = ing.fetch_historical(station, year, template)
                    if body[:2] == b"\x1f\x8b":
                        body = gzip.decompress(body)
                    if cached is not None:
                        cached.parent.mkdir(parents=True, exist_ok=True)
                        cached.write_bytes(body)
            except (ing.FetchError, ValueError, OSError) as exc:
                failures += 1
                log.error("fetch %s %s failed: %s", station, year, exc)
                continue
            store.atomic_write(out_dir / name, body.decode("utf-8", errors="replace"))
    if total and failures == total:
        return EXIT_PARTIAL
    return _status(failures, total)


# -- entry point -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metocean", description=__doc__.strip().splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="run configuration (JSON)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers")

    common(sub.add_parser("ingest", help="parse, filter, pool and interpolate input files"))
    p = sub.add_parser("fit", help="fit calibration models and evaluate on the test window")
    common(p)
    p.add_argument("--no-clamp", action="store_true", help="evaluate unclamped predictions")
    p = sub.add_parser("metrics", help="compute approachability/accessibility/serviceability sweeps")
    common(p)
    p.add_argument("--source", choices=SOURCES, default="tsr")
    p.add_argument("--strict-missing", action="store_true", help="count missing data as failures")
    p.add_argument("--no-clamp", action="store_true", help="use unclamped model predictions")
    common(sub.add_parser("report", help="render text summaries and long-format plot data"))
    p = sub.add_parser("fetch", help="download historical NDBC stdmet files")
    p.add_argument("--station", action="append", required=True)
    p.add_argument("--year", type=int, action="append", required=True)
    p.add_argument("--template", default=ing.DEFAULT_NDBC_TEMPLATE)
    p.add_argument("--out", default=".", help="directory for downloaded files")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "fetch":
            return cmd_fetch(args.station, args.year, args.template, Path(args.out))
        cfg = load_config(args.config, check_files=False, output_dir=args.out)
        jobs = max(1, args.jobs)
        if args.command == "ingest":
            return cmd_ingest(cfg, jobs)
        if args.command == "fit":
            return cmd_fit(cfg, jobs, clamp=not args.no_clamp)
        if args.command == "metrics":
            return cmd_metrics(cfg, args.source, args.strict_missing, jobs, clamp=not args.no_clamp)
        return cmd_report(cfg)
    except (ConfigError, SchemaError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
