"""Command line front end: ``pbrnn {synth,prepare,tune,backtest,evaluate,decompose}``.

Configuration is one JSON document (``--config``); command-line flags
override its values.  Keys and defaults are listed in :data:`DEFAULT_CONFIG`.

Exit codes: 0 success, 2 data validation, 3 insufficient history,
4 tuning failure, 5 internal invariant violation.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    DailyMatrix,
    DegenerateFeatureWarning,
    LagConfig,
    ScenarioConfig,
    build_features,
    load_csv,
    split,
    synth_generate,
    to_daily,
    write_panel_csv,
)
from .errors import (
    AllTrialsFailed,
    DegenerateColumn,
    GapError,
    InsufficientHistory,
    ParseError,
    PbrnnError,
    RangeError,
)
from .models import ArchType, save_checkpoint
from .numerics import make_rng
from .reporting import (
    ForecastTable,
    decomposition_tables,
    write_decomposition,
    write_forecasts,
    write_manifest,
    write_summary,
)

log = logging.getLogger("pbrnn")

EXIT_OK, EXIT_DATA, EXIT_HISTORY, EXIT_TUNING, EXIT_INTERNAL = 0, 2, 3, 4, 5

DEFAULT_CONFIG = {
    "seed": 0,
    "out_dir": "out",
    "arch": "lem-kf-rnn",
    "schema": {},  # CSV column renames / timestamp header / tz
    "separate_wind": False,
    "scalar_target": False,
    "warm_start": True,
    "split": {"val_days": 60, "test_days": 30},
    "params": {},  # hyperparameter overrides for backtest
    "tune": {"budget": 50, "sampler": "tpe", "workers": None},  # None: all cores
    "synth": {"scenario": "realistic", "days": 730, "start": "2021-01-04"},
    "plots": True,
}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if args.config:
        try:
            cfg = _merge(cfg, json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}", EXIT_DATA) from exc
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out_dir is not None:
        cfg["out_dir"] = args.out_dir
    if args.arch is not None:
        cfg["arch"] = args.arch
    cfg["arch"] = ArchType.parse(cfg["arch"]).value
    return cfg


def _out(cfg) -> Path:
    p = Path(cfg["out_dir"])
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_cache(path) -> DailyMatrix:
    try:
        return DailyMatrix.load(path)
    except (OSError, KeyError, ValueError) as exc:
        raise CliError(f"cannot read prepared data {path}: {exc}", EXIT_DATA) from exc


def _ranges(cfg, dm: DailyMatrix):
    lags = LagConfig()
    usable = dm.n_days
    sp = cfg["split"]
    val, test = int(sp.get("val_days", 0)), int(sp["test_days"])
    train = usable - val - test
    try:
        tr, va, te = split(usable, train, val, test)
    except RangeError as exc:
        raise CliError(f"split does not fit {usable} days: {exc}", EXIT_HISTORY) from exc
    if tr.stop <= lags.max_lag:
        raise CliError("no training days left before the validation range", EXIT_HISTORY)
    return tr, va, te


# --------------------------------------------------------------------------- commands


def cmd_synth(args, cfg):
    sc = dict(cfg["synth"])
    if args.scenario_config:
        try:
            sc.update(json.loads(Path(args.scenario_config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read scenario file: {exc}", EXIT_DATA) from exc
    if args.scenario:
        sc["scenario"] = args.scenario
    if args.days:
        sc["days"] = args.days
    sc.setdefault("seed", cfg["seed"])
    if args.seed is not None:
        sc["seed"] = args.seed
    try:
        scenario = ScenarioConfig.from_dict(sc)
        panel = synth_generate(make_rng(scenario.seed), scenario.days, scenario)
    except (ValueError, TypeError) as exc:
        raise CliError(f"invalid scenario: {exc}", EXIT_DATA) from exc
    out = _out(cfg) / (args.output or "synthetic.csv")
    write_panel_csv(panel, out)
    write_manifest(_out(cfg) / "synth.manifest.json", "synth", {**cfg, "synth": sc}, scenario.seed, [], [out])
    print(f"wrote {out} ({scenario.days} days, scenario {scenario.scenario})")


def cmd_prepare(args, cfg):
    try:
        panel = load_csv(args.input, cfg["schema"])
        dm = to_daily(panel, separate_wind=cfg["separate_wind"])
        build_features(dm)
    except (ParseError, GapError) as exc:
        raise CliError(f"{args.input}: {exc}", EXIT_DATA) from exc
    except InsufficientHistory as exc:
        raise CliError(f"{args.input}: {exc}", EXIT_HISTORY) from exc
    out = _out(cfg)
    cache, summary = out / "daily.npz", out / "summary.csv"
    dm.save(cache)
    write_summary(dm, summary)
    write_manifest(out / "prepare.manifest.json", "prepare", cfg, cfg["seed"], [args.input], [cache, summary])
    print(f"wrote {cache} ({dm.n_days} days) and {summary}")


def _features(dm):
    try:
        return build_features(dm)
    except InsufficientHistory as exc:
        raise CliError(str(exc), EXIT_HISTORY) from exc


def cmd_tune(args, cfg):
    from .hpo import IntRange, SearchSpace, save_best, tune

    dm = _load_cache(args.cache)
    fs = _features(dm)
    tr, va, _ = _ranges(cfg, dm)
    if len(va) == 0:
        raise CliError("tuning needs a validation range (split.val_days > 0)", EXIT_HISTORY)
    t = cfg["tune"]
    budget = args.budget or t["budget"]
    sampler = args.sampler or t["sampler"]
    workers = args.workers or t.get("workers") or os.cpu_count() or 1
    # windows may not reach before the first usable feature row
    avail = va.start - int(fs.day_index[0]) - 6
    if avail < 2:
        raise CliError("not enough history before the validation range", EXIT_HISTORY)
    overrides = {
        "d_init": IntRange(min(30, avail), min(730, avail)),
        "d_all": IntRange(2, min(365, avail)),
    }
    arch = cfg["arch"]
    space = SearchSpace.for_arch(arch, overrides)
    out = _out(cfg)
    hist_path = out / f"trials_{arch}.csv"
    best_path = out / f"best_params_{arch}.json"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateFeatureWarning)
        try:
            res = tune(fs, arch, va.start, va.stop, budget, cfg["seed"], sampler, space, workers, hist_path)
        except AllTrialsFailed as exc:
            raise CliError(str(exc), EXIT_TUNING) from exc
    save_best(best_path, res.best, arch, {"sampler": sampler, "budget": budget})
    write_manifest(out / f"tune_{arch}.manifest.json", "tune", cfg, cfg["seed"], [args.cache], [hist_path, best_path])
    print(f"best trial {res.best.id}: validation RMSE {res.best.value:.4f}; wrote {best_path}")


def cmd_backtest(args, cfg):
    from .hpo import load_params
    from .training import HyperParams, rolling_forecast

    dm = _load_cache(args.cache)
    fs = _features(dm)
    _, _, te = _ranges(cfg, dm)
    arch = cfg["arch"]
    inputs = [args.cache]
    if args.params:
        hp, doc = load_params(args.params)
        if "arch" in doc and args.arch is None and doc["arch"] != arch:
            arch = ArchType.parse(doc["arch"]).value
        inputs.append(args.params)
    else:
        hp = HyperParams.from_dict({**HyperParams().to_dict(), **cfg["params"]})
    out = _out(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateFeatureWarning)
        try:
            spec = hp.model_spec(arch, fs)
            records, state, std = rolling_forecast(
                fs,
                spec,
                hp.train_config(),
                hp.plan(te.start, te.stop, cfg["warm_start"]),
                seed=cfg["seed"],
                scalar_target=cfg["scalar_target"],
                return_state=True,
            )
        except (InsufficientHistory, RangeError) as exc:
            raise CliError(str(exc), EXIT_HISTORY) from exc
        except DegenerateColumn as exc:
            raise CliError(str(exc), EXIT_DATA) from exc
    fc_path = out / f"forecasts_{arch}.csv"
    ck_path = out / f"model_{arch}.json"
    write_forecasts(records, fc_path)
    save_checkpoint(ck_path, spec, state, std)
    write_manifest(
        out / f"backtest_{arch}.manifest.json", "backtest", {**cfg, "params": hp.to_dict(), "arch": arch},
        cfg["seed"], inputs, [fc_path, ck_path],
    )
    print(f"wrote {fc_path} ({len(records)} days)")


def _named(specs):
    out = {}
    for s in specs:
        if "=" in s:
            name, path = s.split("=", 1)
        else:
            path = s
            name = Path(s).stem.removeprefix("forecasts_")
        out[name] = Path(path)
    return out


def _read_table(path) -> ForecastTable:
    try:
        return ForecastTable.read(path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read forecasts {path}: {exc}", EXIT_DATA) from exc


def cmd_evaluate(args, cfg):
    from .evaluation import evaluate, weekly_naive_matrix, write_gw_csv, write_hourly_csv, write_metrics_csv

    dm = _load_cache(args.cache)
    day_of = {str(d): i for i, d in enumerate(dm.dates)}
    tables = {name: _read_table(p) for name, p in _named(args.forecasts).items()}
    if not tables:
        raise CliError("no forecast files given", EXIT_DATA)
    ref = next(iter(tables.values()))
    for name, t in tables.items():
        if not np.array_equal(t.dates, ref.dates):
            raise CliError(f"{name}: forecast dates differ from the first file", EXIT_DATA)
    try:
        days = [day_of[str(d)] for d in ref.dates]
    except KeyError as exc:
        raise CliError(f"forecast date {exc} not in prepared data", EXIT_DATA) from exc
    actual = dm.price[days]
    try:
        naive = weekly_naive_matrix(dm.price, days)
    except InsufficientHistory as exc:
        raise CliError(str(exc), EXIT_HISTORY) from exc
    report = evaluate(actual, {k: t.forecast for k, t in tables.items()}, naive, dates=ref.dates)
    out = _out(cfg)
    paths = [out / "metrics.csv", out / "metrics_hourly.csv", out / "gw_pvalues.csv"]
    write_metrics_csv(report, paths[0])
    write_hourly_csv(report, paths[1])
    write_gw_csv(report, paths[2])
    if cfg["plots"] and not args.no_plots:
        from . import plots

        paths.append(plots.gw_heatmap(report.gw_names, report.gw_pvalues, out / "gw_pvalues.png"))
        paths.append(plots.rmse_by_hour(report, out / "rmse_by_hour.png"))
    for note in report.warnings:
        print(f"warning: {note}", file=sys.stderr)
    inputs = [args.cache, *[p for p in _named(args.forecasts).values()]]
    write_manifest(out / "evaluate.manifest.json", "evaluate", cfg, cfg["seed"], inputs, paths)
    for name, m in report.metrics.items():
        print(f"{name:>16s}  RMSE {m.rmse:9.4f}  MAE {m.mae:9.4f}  rMAE {m.rmae:.4f}")


def cmd_decompose(args, cfg):
    table = _read_table(args.forecast)
    out = _out(cfg)
    stem = Path(args.forecast).stem.removeprefix("forecasts_")
    daily, hourly = out / f"decomposition_daily_{stem}.csv", out / f"decomposition_hourly_{stem}.csv"
    write_decomposition(table, daily, hourly)
    paths = [daily, hourly]
    if cfg["plots"] and not args.no_plots:
        from . import plots

        names, drows, hrows = decomposition_tables(table)
        paths.append(plots.decomposition(names, drows, out / f"decomposition_daily_{stem}.png", "date"))
        paths.append(plots.decomposition(names, hrows, out / f"decomposition_hourly_{stem}.png", "hour"))
    write_manifest(out / f"decompose_{stem}.manifest.json", "decompose", cfg, cfg["seed"], [args.forecast], paths)
    print(f"wrote {daily} and {hourly}")


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", default=None)
    common.add_argument("--arch", choices=[a.value for a in ArchType], default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pbrnn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic market CSV")
    s.add_argument("--scenario", choices=["flat", "linear", "nonlinear", "mixed", "realistic"])
    s.add_argument("--days", type=int)
    s.add_argument("--scenario-config", help="JSON scenario file")
    s.add_argument("--output", help="file name inside the output directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("prepare", parents=[common], help="validate a CSV and cache daily matrices")
    s.add_argument("input")
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("tune", parents=[common], help="hyperparameter search on the validation range")
    s.add_argument("--cache", default=None)
    s.add_argument("--budget", type=int)
    s.add_argument("--sampler", choices=["tpe", "random"])
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_tune)

    s = sub.add_parser("backtest", parents=[common], help="rolling out-of-sample forecasts on the test range")
    s.add_argument("--cache", default=None)
    s.add_argument("--params", help="best-params JSON from tune")
    s.set_defaults(func=cmd_backtest)

    s = sub.add_parser("evaluate", parents=[common], help="metrics, weekly naive benchmark and GW tests")
    s.add_argument("forecasts", nargs="+", help="forecast CSVs, optionally as name=path")
    s.add_argument("--cache", default=None)
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("decompose", parents=[common], help="per-branch daily and hourly component series")
    s.add_argument("forecast")
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_decompose)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if getattr(args, "cache", "unset") is None:
            args.cache = str(Path(cfg["out_dir"]) / "daily.npz")
        args.func(args, cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except PbrnnError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - report, do not crash with a traceback
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
