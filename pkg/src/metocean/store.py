"""
On-disk formats shared by the command-line pipeline.

Dataset files are CSV with header ``time,observed,numerical``; ``NA``
marks a missing slot.  Floats are written with ``repr`` so a round trip is
exact.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .timeseries import HourlyTimeSeries, SiteDataset, VariableKind, format_time, from_hour_number, hour_number

MISSING = "NA"
DATASET_HEADER = ("time", "observed", "numerical")


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def safe_name(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in text)


def dataset_path(root, site_id: str, kind: VariableKind) -> Path:
    return Path(root) / "datasets" / f"{safe_name(site_id)}__{kind.value}.csv"


def _cell(value, present) -> str:
    return repr(float(value)) if present else MISSING


def dataset_to_csv(observed: HourlyTimeSeries, numerical: HourlyTimeSeries) -> str:
    if not observed.same_grid(numerical):
        raise ValueError("observed and numerical series must share a grid")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DATASET_HEADER)
    for i, hour in enumerate(observed.hours):
        w.writerow([
            format_time(from_hour_number(int(hour))),
            _cell(observed.values[i], observed.present[i]),
            _cell(numerical.values[i], numerical.present[i]),
        ])
    return buf.getvalue()


def dataset_from_csv(text: str, kind: VariableKind, site_id: str = ""):
    """Inverse of dataset_to_csv; returns (observed, numerical)."""
    reader = csv.reader(io.StringIO(text))
    header = tuple(h.strip() for h in next(reader, ()))
    for col in DATASET_HEADER:
        if col not in header:
            raise ValueError(f"dataset file lacks column '{col}'")
    pos = [header.index(c) for c in DATASET_HEADER]
    hours, obs, num = [], [], []
    for row in reader:
        if not row:
            continue
        hours.append(hour_number(row[pos[0]]))
        obs.append(None if row[pos[1]] == MISSING else float(row[pos[1]]))
        num.append(None if row[pos[2]] == MISSING else float(row[pos[2]]))
    if not hours:
        raise ValueError("dataset file has no rows")
    if any(b - a != 1 for a, b in zip(hours, hours[1:])):
        raise ValueError("dataset rows are not consecutive hours")
    start = from_hour_number(hours[0])
    return (
        HourlyTimeSeries.from_values(kind, start, obs, site_id),
        HourlyTimeSeries.from_values(kind, start, num, site_id),
    )


def write_site_dataset(root, ds: SiteDataset) -> list:
    written = []
    for kind in ds.variables:
        obs = ds.observed.get(kind)
        num = ds.numerical.get(kind)
        ref = obs if obs is not None else num
        empty = HourlyTimeSeries(kind, ref.start, np.zeros(len(ref)), np.zeros(len(ref), dtype=bool), ds.site_id)
        path = dataset_path(root, ds.site_id, kind)
        atomic_write(path, dataset_to_csv(obs if obs is not None else empty,
                                          num if num is not None else empty))
        written.append(path)
    return written


def read_site_dataset(root, site_id: str, lat: float, lon: float, variables) -> SiteDataset:
    observed, numerical = {}, {}
    for kind in variables:
        kind = VariableKind.parse(kind)
        text = dataset_path(root, site_id, kind).read_text(encoding="utf-8")
        obs, num = dataset_from_csv(text, kind, site_id)
        if obs.present.any():
            observed[kind] = obs
        if num.present.any():
            numerical[kind] = num
    return SiteDataset(site_id, lat, lon, observed, numerical)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
