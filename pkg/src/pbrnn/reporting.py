"""CSV artifacts shared by the command line: forecasts, summaries, decompositions, manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import __version__
from .dataset import DailyMatrix, UNITS

FORECAST_HEADER = ["date", "hour", "forecast", "actual", "lem_component", "rnn_component", "kf_component"]
BRANCH_COLUMNS = {"lem": "lem_component", "rnn": "rnn_component", "kf": "kf_component"}


def _num(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def _writer(fh):
    return csv.writer(fh, lineterminator="\r\n")


def write_forecasts(records, path):
    """One row per forecast day and hour; absent branches leave their column empty."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(FORECAST_HEADER)
        for r in records:
            date = str(np.datetime64(r.date, "D"))
            for h in range(r.forecast.size):
                comps = [_num(r.components[b][h]) if b in r.components else "" for b in BRANCH_COLUMNS]
                w.writerow([date, h, _num(r.forecast[h]), _num(r.actual[h]), *comps])


class ForecastTable:
    """Forecast CSV reshaped to ``days x hours`` matrices."""

    def __init__(self, dates, forecast, actual, components):
        self.dates = dates
        self.forecast = forecast
        self.actual = actual
        self.components = components  # branch -> matrix, only for populated columns

    @classmethod
    def read(cls, path) -> "ForecastTable":
        rows = {}
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != FORECAST_HEADER:
                raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
            for rec in reader:
                rows.setdefault(rec["date"], {})[int(rec["hour"])] = rec
        dates = sorted(rows)
        n_hours = max(len(v) for v in rows.values())

        def grid(col):
            out = np.full((len(dates), n_hours), np.nan)
            for i, d in enumerate(dates):
                for h, rec in rows[d].items():
                    if rec[col] != "":
                        out[i, h] = float(rec[col])
            return out

        comps = {}
        for b, col in BRANCH_COLUMNS.items():
            g = grid(col)
            if not np.all(np.isnan(g)):
                comps[b] = g
        return cls(np.array(dates, dtype="datetime64[D]"), grid("forecast"), grid("actual"), comps)


def summary_rows(dm: DailyMatrix):
    """Descriptive statistics per series (mean, std, min, quartiles, max)."""
    series = {"price": dm.price.ravel()}
    for j, name in enumerate(dm.fund_names):
        series[name] = dm.fundamentals[:, :, j].ravel()
    from .dataset import FUEL_ORDER

    for j, name in enumerate(FUEL_ORDER):
        series[name] = dm.fuels[:, j]
    unit_of = {"load": "MWh", "wind": "MWh", "solar": "MWh", "wind_onshore": "MWh", "wind_offshore": "MWh"}
    out = []
    for name, x in series.items():
        q = np.quantile(x, [0.25, 0.5, 0.75])
        std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
        unit = UNITS.get(name, unit_of.get(name, ""))
        out.append([name, unit, float(np.mean(x)), std, float(np.min(x)), *map(float, q), float(np.max(x))])
    return out


def write_summary(dm: DailyMatrix, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["series", "unit", "mean", "std", "min", "q25", "median", "q75", "max"])
        for row in summary_rows(dm):
            w.writerow(row[:2] + [_num(v) for v in row[2:]])


def decomposition_tables(table: ForecastTable):
    """Daily means and hour-of-day means of actual, combined and component series."""
    cols = {"actual": table.actual, "combined": table.forecast}
    for b in BRANCH_COLUMNS:
        cols[b] = table.components.get(b)
    daily = []
    for i, d in enumerate(table.dates):
        daily.append([str(d)] + [None if m is None else float(np.mean(m[i])) for m in cols.values()])
    hourly = []
    for h in range(table.forecast.shape[1]):
        hourly.append([h] + [None if m is None else float(np.mean(m[:, h])) for m in cols.values()])
    return list(cols), daily, hourly


def write_decomposition(table: ForecastTable, daily_path, hourly_path):
    names, daily, hourly = decomposition_tables(table)
    for path, key, rows in ((daily_path, "date", daily), (hourly_path, "hour", hourly)):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = _writer(fh)
            w.writerow([key] + names)
            for row in rows:
                w.writerow([row[0]] + [_num(v) for v in row[1:]])


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def write_manifest(path, command: str, config: Mapping, seed, inputs: Iterable, outputs: Iterable):
    """Reproducibility record: seed, config hash, input hashes and output hashes."""
    inputs = [Path(p) for p in inputs]
    outputs = [Path(p) for p in outputs]
    doc = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config_hash": config_hash(config),
        "data_hash": {p.name: file_sha256(p) for p in inputs},
        "outputs": {p.name: file_sha256(p) for p in outputs},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return doc
