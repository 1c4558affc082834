"""File formats: run CSV + JSON sidecar, statistic CSV, alarm and report JSON."""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .errors import InputFault
from .mspc import AlarmEvent, StatSeries
from .plant import RunRecord


def _fmt(x):
    # repr round-trips float64 exactly
    return repr(float(x))


def run_header(variable_names):
    return (["time_s"] + [f"{n}_c" for n in variable_names]
            + [f"{n}_p" for n in variable_names])


def write_run_csv(path, run):
    """Write ``<path>`` and its ``.meta.json`` sidecar; return the sidecar path."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(run_header(run.variable_names))
        for t, c, p in zip(run.times, run.controller_view, run.process_view):
            w.writerow([_fmt(t)] + [_fmt(v) for v in c] + [_fmt(v) for v in p])
    meta_path = meta_path_for(path)
    meta = dict(run.meta)
    meta["variable_names"] = list(run.variable_names)
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta_path


def meta_path_for(path):
    root = str(path)
    if root.endswith(".csv"):
        root = root[:-4]
    return root + ".meta.json"


def read_run_csv(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputFault(f"cannot read {path}: {exc}") from None
    if not rows or rows[0][0] != "time_s":
        raise InputFault(f"{path} is not a run CSV")
    header = rows[0]
    m = (len(header) - 1) // 2
    names = tuple(h[:-2] for h in header[1:1 + m])
    if header != run_header(names):
        raise InputFault(f"{path}: malformed header")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    if data.size == 0:
        data = data.reshape(0, 1 + 2 * m)
    meta = {}
    mp = meta_path_for(path)
    if os.path.exists(mp):
        with open(mp, encoding="utf-8") as fh:
            meta = json.load(fh)
        meta.pop("variable_names", None)
    return RunRecord(
        times=data[:, 0].copy(),
        controller_view=data[:, 1:1 + m].copy(),
        process_view=data[:, 1 + m:].copy(),
        variable_names=names,
        meta=meta,
    )


def write_stats_csv(path, series_by_view):
    """One row per time step: ``time_s,d_<view>,q_<view>...``."""
    views = list(series_by_view)
    first = series_by_view[views[0]]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s"] + [f"{s}_{v}" for v in views for s in ("d", "q")])
        cols = [first.t] + [getattr(series_by_view[v], s) for v in views for s in ("d", "q")]
        for row in zip(*cols):
            w.writerow([_fmt(x) for x in row])


def read_stats_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    out = {}
    for j in range(1, len(header), 2):
        view = header[j][2:]
        out[view] = StatSeries(data[:, 0].copy(), data[:, j].copy(), data[:, j + 1].copy())
    return out


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputFault(f"cannot read {path}: {exc}") from None


def write_alarms(path, alarms):
    write_json(path, [a.to_dict() for a in alarms])


def read_alarms(path):
    return [AlarmEvent.from_dict(d) for d in read_json(path)]
