"""Hyperparameter search: random and TPE-style samplers over the tuning space.

The TPE sampler is univariate: after the start-up trials it splits the
history at the lower ``gamma`` quantile of the objective, fits a Parzen
(Gaussian kernel) density to the good and the bad parameter values of every
dimension, draws candidates from the good density and keeps the one with the
largest good/bad density ratio.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .dataset import FeatureSets
from .errors import AllTrialsFailed, PbrnnError, TrialFailed
from .models import ArchType
from .numerics import child_seed, make_rng
from .training import HyperParams, records_rmse, rolling_forecast

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------- domains


@dataclass(frozen=True)
class IntRange:
    low: int
    high: int

    def sample(self, rng):
        return int(rng.integers(self.low, self.high + 1))

    def contains(self, x):
        return isinstance(x, (int, np.integer)) and self.low <= x <= self.high

    # internal continuous coordinates used by the Parzen estimator
    def to_internal(self, x):
        return float(x)

    def from_internal(self, u):
        return int(min(max(round(u), self.low), self.high))

    @property
    def bounds(self):
        return self.low - 0.5, self.high + 0.5


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def sample(self, rng):
        return float(rng.uniform(self.low, self.high)) if self.high > self.low else float(self.low)

    def contains(self, x):
        return self.low <= x <= self.high

    def to_internal(self, x):
        return float(x)

    def from_internal(self, u):
        return float(min(max(u, self.low), self.high))

    @property
    def bounds(self):
        return self.low, self.high


@dataclass(frozen=True)
class LogUniform:
    low: float
    high: float

    def sample(self, rng):
        if self.high <= self.low:
            return float(self.low)
        return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))

    def contains(self, x):
        return self.low * (1 - 1e-12) <= x <= self.high * (1 + 1e-12)

    def to_internal(self, x):
        return math.log(x)

    def from_internal(self, u):
        return float(min(max(math.exp(u), self.low), self.high))

    @property
    def bounds(self):
        return math.log(self.low), math.log(self.high)


@dataclass(frozen=True)
class Categorical:
    choices: tuple

    def sample(self, rng):
        return self.choices[int(rng.integers(len(self.choices)))]

    def contains(self, x):
        return x in self.choices


Domain = IntRange | Uniform | LogUniform | Categorical


def default_space() -> dict[str, Domain]:
    """The tuning space of the study design."""
    return {
        "hidden": IntRange(1, 128),
        "seq_len": IntRange(1, 7),
        "d_init": IntRange(30, 730),
        "d_all": IntRange(2, 365),
        "epochs_init": Categorical((10, 20, 50, 100)),
        "epochs_all": Categorical((5, 10, 20, 50)),
        "lr_init": LogUniform(1e-5, 1e-2),
        "lr_all": LogUniform(1e-4, 1e-2),
        "wd_init": LogUniform(1e-8, 1e-2),
        "wd_all": LogUniform(1e-8, 1e-2),
        "l1_init": LogUniform(1e-6, 1e-1),
        "l1_all": LogUniform(1e-6, 1e-1),
        "ols_alpha": Uniform(0.0, 2.0),
        "use_ols": Categorical((True, False)),
        "batch_size": Categorical((8, 16, 32, 64)),
        "clip_norm": Uniform(0.1, 10.0),
        "dropout": Uniform(0.0, 0.5),
    }


_LEM_ONLY = ("ols_alpha", "use_ols")
_RECURRENT_ONLY = ("hidden", "seq_len", "dropout")


def masked_dimensions(arch) -> tuple[str, ...]:
    """Dimensions that have no effect for ``arch``."""
    arch = ArchType.parse(arch)
    masked = []
    if not arch.has_lem:
        masked += _LEM_ONLY
    if not arch.is_recurrent:
        masked += _RECURRENT_ONLY
    return tuple(masked)


@dataclass(frozen=True)
class SearchSpace:
    domains: dict
    masked: tuple = ()
    defaults: HyperParams = field(default_factory=HyperParams)

    @classmethod
    def for_arch(cls, arch, overrides: Mapping[str, Domain] | None = None, defaults: HyperParams | None = None):
        domains = default_space()
        domains.update(overrides or {})
        return cls(domains, masked_dimensions(arch), defaults or HyperParams())

    @property
    def active(self) -> list[str]:
        return [k for k in self.domains if k not in self.masked]

    def contains(self, params: Mapping) -> bool:
        return all(self.domains[k].contains(params[k]) for k in self.active)

    def complete(self, sampled: Mapping) -> dict:
        """Fill masked and unsampled dimensions from the defaults."""
        base = self.defaults.to_dict()
        base.update({k: v for k, v in sampled.items() if k not in self.masked})
        return base


# --------------------------------------------------------------------------- trials


@dataclass
class Trial:
    id: int
    params: dict
    value: float | None
    status: str  # "complete" | "failed"
    seed: int
    error: str = ""

    @property
    def complete(self) -> bool:
        return self.status == "complete"


def _parzen_logpdf(x: np.ndarray, centers: np.ndarray, bw: float, low: float, high: float) -> np.ndarray:
    """Log density of an equal-weight Gaussian mixture plus a uniform prior component."""
    n = centers.size
    z = (x[:, None] - centers[None, :]) / bw
    comp = np.exp(-0.5 * z * z) / (bw * math.sqrt(2 * math.pi))
    prior = 1.0 / (high - low)
    dens = (comp.sum(axis=1) + prior) / (n + 1)
    return np.log(dens)


def _bandwidth(points: np.ndarray, low: float, high: float) -> float:
    width = high - low
    sd = float(np.std(points, ddof=1)) if points.size > 1 else 0.0
    bw = sd * points.size ** (-1.0 / 5.0)  # Scott's rule, one dimension
    # floor keeps a tight good set from collapsing the search onto one point
    floor = width / min(100.0, points.size + 1.0)
    return float(min(max(bw, floor), width))


def _tpe_dimension(dom: Domain, good: list, bad: list, rng, n_candidates: int):
    if isinstance(dom, Categorical):
        k = len(dom.choices)
        cg = np.array([sum(1 for v in good if v == c) for c in dom.choices], dtype=float) + 1.0
        cb = np.array([sum(1 for v in bad if v == c) for c in dom.choices], dtype=float) + 1.0
        pg, pb = cg / cg.sum(), cb / cb.sum()
        cand = rng.choice(k, size=n_candidates, p=pg)
        score = np.log(pg[cand]) - np.log(pb[cand])
        return dom.choices[int(cand[int(np.argmax(score))])]
    low, high = dom.bounds
    if high <= low:
        return dom.from_internal(low)
    g = np.array([dom.to_internal(v) for v in good])
    b = np.array([dom.to_internal(v) for v in bad])
    bw_g, bw_b = _bandwidth(g, low, high), _bandwidth(b, low, high)
    # draw from the good mixture (prior component included)
    comp = rng.integers(0, g.size + 1, size=n_candidates)
    from_prior = comp == g.size
    centers = g[np.minimum(comp, g.size - 1)]
    cand = np.where(from_prior, rng.uniform(low, high, n_candidates), centers + bw_g * rng.normal(size=n_candidates))
    cand = np.clip(cand, low, high)
    score = _parzen_logpdf(cand, g, bw_g, low, high) - _parzen_logpdf(cand, b, bw_b, low, high)
    return dom.from_internal(float(cand[int(np.argmax(score))]))


def sample(
    space: SearchSpace,
    history: Sequence[Trial],
    rng: np.random.Generator,
    sampler: str = "tpe",
    n_startup: int = 10,
    gamma: float = 0.25,
    n_candidates: int = 24,
) -> dict:
    """Draw one configuration (active dimensions only, masked ones filled with defaults)."""
    done = [t for t in history if t.complete]
    if sampler not in ("random", "tpe"):
        raise ValueError(f"unknown sampler {sampler!r}")
    out = {}
    if sampler == "random" or len(done) < n_startup:
        for k in space.active:
            out[k] = space.domains[k].sample(rng)
        return space.complete(out)
    ranked = sorted(done, key=lambda t: (t.value, t.id))
    n_good = max(1, int(math.ceil(gamma * len(ranked))))
    good, bad = ranked[:n_good], ranked[n_good:] or ranked[:n_good]
    for k in space.active:
        dom = space.domains[k]
        out[k] = _tpe_dimension(dom, [t.params[k] for t in good], [t.params[k] for t in bad], rng, n_candidates)
    return space.complete(out)


# --------------------------------------------------------------------------- objective and search


def objective(params: Mapping, fs: FeatureSets, arch, val_start: int, val_end: int, seed: int = 0, warm_start=True) -> float:
    """Rolling validation RMSE (EUR/MWh) of ``params`` over target days ``[val_start, val_end)``."""
    hp = params if isinstance(params, HyperParams) else HyperParams.from_dict(params)
    try:
        spec = hp.model_spec(arch, fs)
        records = rolling_forecast(fs, spec, hp.train_config(), hp.plan(val_start, val_end, warm_start), seed=seed)
        value = records_rmse(records)
    except (PbrnnError, ValueError, FloatingPointError) as exc:
        raise TrialFailed(f"{type(exc).__name__}: {exc}") from exc
    if not math.isfinite(value):
        raise TrialFailed("non-finite validation RMSE")
    return value


def _run_trial(evaluate, params, trial_id, seed):
    try:
        return Trial(trial_id, params, float(evaluate(params, seed)), "complete", seed)
    except TrialFailed as exc:
        return Trial(trial_id, params, None, "failed", seed, str(exc))


@dataclass
class SearchResult:
    best: Trial
    history: list[Trial]

    def best_so_far(self) -> list[float]:
        """Running minimum of completed objectives (NaN until the first success)."""
        out, cur = [], math.inf
        for t in self.history:
            if t.complete and t.value < cur:
                cur = t.value
            out.append(cur if math.isfinite(cur) else float("nan"))
        return out


def optimize(
    space: SearchSpace,
    budget: int,
    evaluate: Callable[[dict, int], float],
    seed: int = 0,
    sampler: str = "tpe",
    workers: int = 1,
    history_path=None,
    **sampler_kw,
) -> SearchResult:
    """Run ``budget`` trials and return the argmin (ties to the lower trial id).

    ``evaluate(params, trial_seed)`` returns the objective or raises
    :class:`TrialFailed`.  With ``workers > 1`` trials are evaluated in
    batches of ``workers``; each batch samples from the same history snapshot,
    so results depend on ``workers`` but stay deterministic for a given value.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = make_rng(seed)
    history: list[Trial] = []
    if history_path is not None:
        Path(history_path).write_text("", encoding="utf-8")
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while len(history) < budget:
            n = min(max(workers, 1), budget - len(history))
            batch = []
            for j in range(n):
                tid = len(history) + j
                batch.append((tid, sample(space, history, rng, sampler, **sampler_kw), child_seed(seed, tid)))
            if pool is None:
                results = [_run_trial(evaluate, p, tid, s) for tid, p, s in batch]
            else:
                futures = [pool.submit(_run_trial, evaluate, p, tid, s) for tid, p, s in batch]
                results = [f.result() for f in futures]
            for t in results:
                history.append(t)
                if history_path is not None:
                    append_history(history_path, t)
                log.info("trial %d %s %s", t.id, t.status, t.value)
    finally:
        if pool is not None:
            pool.shutdown()
    done = [t for t in history if t.complete]
    if not done:
        raise AllTrialsFailed(f"all {budget} trials failed")
    best = min(done, key=lambda t: (t.value, t.id))
    return SearchResult(best, history)


class DatasetObjective:
    """Picklable ``evaluate`` callable binding the data and validation range."""

    def __init__(self, fs: FeatureSets, arch, val_start: int, val_end: int):
        self.fs, self.arch, self.val_start, self.val_end = fs, ArchType.parse(arch), val_start, val_end

    def __call__(self, params, seed):
        return objective(params, self.fs, self.arch, self.val_start, self.val_end, seed)


def tune(fs, arch, val_start, val_end, budget=50, seed=0, sampler="tpe", space=None, workers=1, history_path=None):
    space = space or SearchSpace.for_arch(arch)
    return optimize(space, budget, DatasetObjective(fs, arch, val_start, val_end), seed, sampler, workers, history_path)


# --------------------------------------------------------------------------- persistence


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def append_history(path, trial: Trial):
    """Append one ``trial_id, params, rmse, status, seed`` CSV record."""
    import csv

    p = Path(path)
    new = not p.exists() or p.stat().st_size == 0
    with p.open("a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        if new:
            w.writerow(["trial_id", "params", "rmse", "status", "seed"])
        params = ";".join(f"{k}={_fmt(v)}" for k, v in trial.params.items())
        w.writerow([trial.id, params, "" if trial.value is None else repr(trial.value), trial.status, trial.seed])


def read_history(path) -> list[Trial]:
    import csv

    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            params = dict(kv.split("=", 1) for kv in row["params"].split(";") if kv)
            hp = HyperParams.from_dict(params).to_dict()
            value = float(row["rmse"]) if row["rmse"] else None
            out.append(Trial(int(row["trial_id"]), hp, value, row["status"], int(row["seed"])))
    return out


def save_best(path, trial: Trial, arch, extra: Mapping | None = None):
    doc = {"arch": ArchType.parse(arch).value, "trial_id": trial.id, "rmse": trial.value, "seed": trial.seed}
    doc["params"] = HyperParams.from_dict(trial.params).to_dict()
    doc.update(extra or {})
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_params(path) -> tuple[HyperParams, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    params = doc.get("params", doc)
    return HyperParams.from_dict(params), doc
