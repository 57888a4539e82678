"""
Synthetic buoy/model data for demos and tests.

Produces plausible wave-height and wind-speed records with seasonal cycles,
persistence and a biased "numerical model" counterpart, and writes them in
the NDBC standard-meteorological and grid-extract formats.
"""

from __future__ import annotations

import numpy as np

from .timeseries import H, V, HourlyTimeSeries, from_hour_number, hour_number, to_utc


def ar1(n: int, phi: float, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    e = rng.normal(0.0, scale, n)
    out = np.empty(n)
    out[0] = e[0] / np.sqrt(1 - phi ** 2)
    for i in range(1, n):
        out[i] = phi * out[i - 1] + e[i]
    return out


def metocean_truth(start, hours: int, seed: int = 0, severity: float = 1.0):
    """True H (m) and v (m/s) arrays with winter peaks and hourly persistence."""
    rng = np.random.default_rng(seed)
    t = np.arange(hours) + hour_number(start)
    yearly = np.cos(2 * np.pi * (t / 8760.0 - 15 / 365.0))
    wind = np.clip(7.5 + 2.0 * yearly * severity + 2.5 * ar1(hours, 0.97, rng, 0.25), 0.2, None)
    log_h = np.log(1.1 + 0.35 * severity) + 0.25 * yearly + 0.45 * ar1(hours, 0.985, rng, 0.17)
    wave = np.clip(np.exp(log_h) + 0.05 * (wind - 7.5), 0.1, None)
    return wave, wind


def numerical_from_truth(truth: np.ndarray, kind, seed: int = 1) -> np.ndarray:
    """A biased, noisy model counterpart of ``truth``."""
    rng = np.random.default_rng(seed)
    if kind is H:
        out = 0.92 * truth - 0.02 + 0.12 * ar1(truth.size, 0.8, rng, 0.6)
    else:
        out = 1.05 * truth + 0.8 + 0.9 * ar1(truth.size, 0.7, rng, 0.7)
    return np.clip(out, 0.0, None)


def ndbc_text(start, wave: np.ndarray, wind: np.ndarray, missing=None) -> str:
    """Render hourly values as an NDBC stdmet file (10-minute column fixed at 50)."""
    lines = [
        "#YY  MM DD hh mm WDIR WSPD GST  WVHT   DPD   APD MWD   PRES  ATMP  WTMP  DEWP  VIS  TIDE",
        "#yr  mo dy hr mn degT m/s  m/s     m   sec   sec degT   hPa  degC  degC  degC  nmi    ft",
    ]
    h0 = hour_number(start)
    missing = np.zeros(wave.size, dtype=bool) if missing is None else missing
    for i in range(wave.size):
        ts = from_hour_number(h0 + i)
        wv = "99.00" if missing[i] or not np.isfinite(wave[i]) else f"{wave[i]:.2f}"
        ws = "99.0" if missing[i] or not np.isfinite(wind[i]) else f"{wind[i]:.1f}"
        lines.append(
            f"{ts.year:4d} {ts.month:02d} {ts.day:02d} {ts.hour:02d} 50 270 {ws:>4} 99.0 {wv:>5}"
            "  8.00  6.00 999 1015.0  10.0  12.0   5.0 99.0 99.00"
        )
    return "\n".join(lines) + "\n"


def grid_csv(start, points, fields) -> str:
    """Grid-extract CSV for ``points`` [(lat, lon)] and ``fields`` {kind: (n_points, hours) array}."""
    h0 = hour_number(start)
    rows = ["time,lat,lon,variable,value"]
    for kind in sorted(fields, key=lambda k: k.value):
        arr = fields[kind]
        for p, (lat, lon) in enumerate(points):
            for i in range(arr.shape[1]):
                ts = from_hour_number(h0 + i).strftime("%Y-%m-%dT%H:%MZ")
                val = "" if not np.isfinite(arr[p, i]) else f"{arr[p, i]:.4f}"
                rows.append(f"{ts},{lat},{lon},{kind.value},{val}")
    return "\n".join(rows) + "\n"


def cell_around(lat: float, lon: float, step: float = 0.25):
    """North, south, east and west grid points around a site."""
    return [(lat + step, lon), (lat - step, lon), (lat, lon + step), (lat, lon - step)]


def spread_to_cell(values: np.ndarray, seed: int = 2, spread: float = 0.03) -> np.ndarray:
    """N/S/E/W copies of ``values`` with small opposite-signed scalings.

    Opposite points average back to ``values``, so interpolation at the cell
    centre (which lies on a diagonal) recovers the input.
    """
    a, b = spread * np.random.default_rng(seed).uniform(-1, 1, 2)
    factors = np.array([1 + a, 1 - a, 1 + b, 1 - b])
    return np.outer(factors, values)


def series(kind, start, data, site_id="") -> HourlyTimeSeries:
    return HourlyTimeSeries.from_array(kind, to_utc(start), data, site_id)


def obs_csv(start, kind_values) -> str:
    """GENERIC_CSV text for {kind: array}; NaN entries are left out."""
    h0 = hour_number(start)
    rows = ["time,variable,value"]
    n = len(next(iter(kind_values.values())))
    for i in range(n):
        ts = from_hour_number(h0 + i).strftime("%Y-%m-%dT%H:%MZ")
        for kind in sorted(kind_values, key=lambda k: k.value):
            x = kind_values[kind][i]
            if np.isfinite(x):
                rows.append(f"{ts},{kind.value},{x:.3f}")
    return "\n".join(rows) + "\n"


def write_fixture(root, start="2019-01-01T00:00Z", hours: int = 24 * 365 * 2, seed: int = 0,
                  K: int = 8) -> "Path":
    """Write a small synthetic project (inputs plus run config) under ``root``.

    Sites: a buoy ``B1`` with an NDBC file, a pooled site ``POOL`` built from
    two generic-CSV members with staggered outages, and two grid-only route
    points ``G2``/``G3``.  Route ``R`` runs B1 -> G2 -> G3 and borrows B1's
    calibration for the grid-only points.  Two thirds of the span (whole
    days) train the models, the rest tests them; keep the training part
    longer than a year when K is large.  Returns the config path.
    """
    import json
    from pathlib import Path

    root = Path(root)
    (root / "inputs").mkdir(parents=True, exist_ok=True)
    start = to_utc(start)
    rng = np.random.default_rng(seed)
    sites = {"B1": (40.0, -70.0), "POOL": (40.5, -71.0), "G2": (40.25, -69.5), "G3": (40.5, -69.0)}
    cfg_sites = []
    for n, (sid, (lat, lon)) in enumerate(sites.items()):
        wave, wind = metocean_truth(start, hours, seed=seed + 10 * n, severity=1.0 + 0.15 * n)
        fields = {H: spread_to_cell(numerical_from_truth(wave, H, seed + 10 * n + 1), seed + n),
                  V: spread_to_cell(numerical_from_truth(wind, V, seed + 10 * n + 2), seed + n + 50)}
        grid_name = f"inputs/{sid}_grid.csv"
        (root / grid_name).write_text(grid_csv(start, cell_around(lat, lon), fields))
        entry = {"site_id": sid, "lat": lat, "lon": lon, "grids": [grid_name]}
        if sid == "B1":
            missing = rng.random(hours) < 0.03
            name = "inputs/B1_stdmet.txt"
            (root / name).write_text(ndbc_text(start, wave, wind, missing))
            entry["observations"] = [{"path": name, "format": "NDBC_STDMET"}]
        elif sid == "POOL":
            members = []
            for m, (a, b) in enumerate(((0.1, 0.4), (0.35, 0.7))):
                w, v = wave.copy(), wind.copy()
                w[int(a * hours):int(b * hours)] = np.nan
                v[int(a * hours):int(b * hours)] = np.nan
                name = f"inputs/POOL_m{m + 1}.csv"
                (root / name).write_text(obs_csv(start, {H: w, V: v}))
                members.append({"site_id": f"POOL-m{m + 1}", "lat": lat + 0.01 * m, "lon": lon,
                                "observations": [{"path": name, "format": "GENERIC_CSV"}]})
            entry["members"] = members
        cfg_sites.append(entry)

    split = from_hour_number(hour_number(start) + (hours * 2 // 3) // 24 * 24)
    end = from_hour_number(hour_number(start) + hours)
    fmt = "%Y-%m-%dT%H:%MZ"
    config = {
        "sites": cfg_sites,
        "variables": ["H", "v"],
        "fourier": {"K": K},
        "epoch": start.strftime(fmt),
        "split": {"train": [start.strftime(fmt), split.strftime(fmt)],
                  "test": [split.strftime(fmt), end.strftime(fmt)]},
        "limits": {"H": [1.5 + 0.25 * i for i in range(13)], "v": [12.0]},
        "zeta": [2, 6, 12, 18, 24],
        "routes": [{
            "route_id": "R",
            "locations": ["B1", "G2", "G3"],
            "profile": [[1, 1], [2, 2], [3, 3], [2, 2], [1, 1]],
            "model_from": {"G2": "B1", "G3": "B1"},
        }],
        "output_dir": "out",
    }
    path = root / "config.json"
    path.write_text(json.dumps(config, indent=2) + "\n")
    return path
