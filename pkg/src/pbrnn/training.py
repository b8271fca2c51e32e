"""Loss, Adam with clipping and decoupled decay, plateau scheduling and rolling re-estimation."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Mapping

import numpy as np

from .dataset import Affine, FeatureSets, Standardizer, fit_standardizer
from .errors import InsufficientHistory, NonFiniteGradient, RangeError
from .models import (
    DECAY_KEYS,
    L1_KEYS,
    LEM_KEYS,
    ArchType,
    BranchOutputs,
    DayInputs,
    ModelSpec,
    ModelState,
    decompose,
    fit_lem_ols,
    forward,
    init_weights,
    rebase,
)
from .numerics import child_seed, make_rng
from .tape import GradTape, absolute, square, value_of

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr_init: float = 3e-3
    lr_all: float = 1e-3
    wd_init: float = 1e-6
    wd_all: float = 1e-6
    l1_init: float = 1e-6
    l1_all: float = 1e-6
    epochs_init: int = 50
    epochs_all: int = 5
    batch_size: int = 32
    clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    sched_factor: float = 0.5
    sched_patience: int = 5
    sched_threshold: float = 1e-4
    min_lr: float = 1e-7
    raw_adam: bool = False

    def __post_init__(self):
        for f in ("lr_init", "lr_all", "wd_init", "wd_all", "l1_init", "l1_all", "clip_norm"):
            if getattr(self, f) < 0:
                raise ValueError(f"{f} must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if self.epochs_init < 0 or self.epochs_all < 0:
            raise ValueError("epoch counts must be non-negative")


@dataclass(frozen=True)
class RollingPlan:
    """Forecast target days ``[start, end)`` as rows of the DailyMatrix."""

    d_init: int
    d_all: int
    start: int
    end: int
    warm_start: bool = True

    def __post_init__(self):
        if self.d_init < 2 or self.d_all < 2:
            raise RangeError("training windows need at least two days")
        if self.end <= self.start:
            raise RangeError("empty forecast range")


@dataclass(frozen=True)
class HyperParams:
    """One point of the tuning space: architecture, data windows and learning dynamics."""

    hidden: int = 16
    seq_len: int = 1
    d_init: int = 365
    d_all: int = 365
    epochs_init: int = 50
    epochs_all: int = 5
    lr_init: float = 3e-3
    lr_all: float = 1e-3
    wd_init: float = 1e-6
    wd_all: float = 1e-6
    l1_init: float = 1e-6
    l1_all: float = 1e-6
    ols_alpha: float = 1.0
    use_ols: bool = True
    batch_size: int = 32
    clip_norm: float = 5.0
    dropout: float = 0.0

    def model_spec(self, arch, fs: FeatureSets | None = None, **extra) -> ModelSpec:
        dims = {} if fs is None else {"n_rnn": fs.n_rnn, "n_linear": fs.n_linear}
        return ModelSpec(
            arch=ArchType.parse(arch),
            hidden=self.hidden,
            seq_len=self.seq_len,
            dropout=self.dropout,
            use_ols=self.use_ols,
            ols_alpha=self.ols_alpha,
            **dims,
            **extra,
        )

    def train_config(self, **extra) -> TrainConfig:
        keys = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in asdict(self).items() if k in keys}, **extra)

    def plan(self, start: int, end: int, warm_start: bool = True) -> RollingPlan:
        return RollingPlan(self.d_init, self.d_all, start, end, warm_start)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "HyperParams":
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
        out = {}
        defaults = cls()
        for k, v in d.items():
            kind = type(getattr(defaults, k))
            if kind is bool and isinstance(v, str):
                v = v.strip().lower() in ("1", "true", "yes")
            out[k] = kind(v)
        return cls(**out)


# --------------------------------------------------------------------------- loss and optimiser


def loss(predictions, targets, params: Mapping, l1: float = 0.0, weight_decay: float = 0.0):
    """Mean squared error plus an L1 penalty on the output-side linear maps.

    ``weight_decay`` is accepted for symmetry with the optimiser but is not part
    of the value: L2 shrinkage happens as decoupled decay inside :func:`adam_step`.
    """
    err = predictions - targets
    total = square(err).mean() if hasattr(err, "tape") else np.mean(np.square(err))
    if l1 > 0:
        for k in L1_KEYS:
            if k in params:
                term = absolute(params[k]).sum() * l1
                total = total + term
    return total


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "OptimizerState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()}, 0)


def clip_gradients(grads: Mapping[str, np.ndarray], max_norm: float) -> tuple[dict, float]:
    """Rescale all gradients jointly so their global L2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if not math.isfinite(norm):
        raise NonFiniteGradient("gradient contains NaN or Inf")
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        return {k: g * scale for k, g in grads.items()}, norm
    return dict(grads), norm


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    opt: OptimizerState,
    lr: float,
    weight_decay: float = 0.0,
    clip_norm: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    raw: bool = False,
    frozen: tuple = (),
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One clipped, decoupled-decay Adam update; returns new parameters and optimiser state.

    ``raw=True`` skips the bias correction of the moment estimates.
    ``clip_norm <= 0`` disables clipping.
    """
    live = {k: g for k, g in grads.items() if k not in frozen}
    g_all, _ = clip_gradients(live, clip_norm)
    t = opt.t + 1
    new_p, new_m, new_v = dict(params), dict(opt.m), dict(opt.v)
    c1 = 1.0 if raw else 1.0 - beta1**t
    c2 = 1.0 if raw else 1.0 - beta2**t
    for k, g in g_all.items():
        p = params[k]
        if weight_decay > 0 and k in DECAY_KEYS:
            p = p * (1.0 - lr * weight_decay)
        m = beta1 * opt.m[k] + (1.0 - beta1) * g
        v = beta2 * opt.v[k] + (1.0 - beta2) * g * g
        new_p[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[k], new_v[k] = m, v
    return new_p, OptimizerState(new_m, new_v, t)


class PlateauScheduler:
    """Halve the learning rate after ``patience`` epochs without relative improvement."""

    def __init__(self, lr, factor=0.5, patience=5, threshold=1e-4, min_lr=1e-7):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.min_lr = min_lr
        self.best = math.inf
        self.bad_epochs = 0

    def step(self, value: float) -> float:
        if value < self.best * (1.0 - self.threshold):
            self.best = value
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.lr = max(self.lr * self.factor, self.min_lr)
            self.bad_epochs = 0
        return self.lr


def scheduler_step(lr: float, history, factor=0.5, patience=5, threshold=1e-4, min_lr=1e-7) -> float:
    """Learning rate after replaying ``history`` of epoch losses through a fresh scheduler."""
    history = list(history)
    if not history:
        raise ValueError("loss history is empty")
    if lr <= min_lr:
        return lr
    sched = PlateauScheduler(lr, factor, patience, threshold, min_lr)
    for v in history:
        sched.step(v)
    return sched.lr


# --------------------------------------------------------------------------- window training


@dataclass
class WindowData:
    """Standardized training arrays for one rolling window."""

    linear: np.ndarray | None  # (n, 24, p)
    sequence: np.ndarray | None  # (n, L, D)
    targets: np.ndarray  # (n, 24)

    def __len__(self):
        return self.targets.shape[0]

    def batch(self, idx) -> tuple[DayInputs, np.ndarray]:
        return (
            DayInputs(
                linear=None if self.linear is None else self.linear[idx],
                sequence=None if self.sequence is None else self.sequence[idx],
            ),
            self.targets[idx],
        )


def gather_inputs(fs: FeatureSets, rows, std: Standardizer, spec: ModelSpec) -> DayInputs:
    rows = np.asarray(rows, dtype=np.int64)
    linear = std.linear.apply(fs.linear[rows]) if spec.arch.has_lem else None
    sequence = None
    if spec.arch.is_recurrent:
        L = spec.seq_len
        if rows.size and rows.min() - (L - 1) < 0:
            raise InsufficientHistory(f"sequence length {L} reaches before the first feature row")
        idx = rows[:, None] + np.arange(-(L - 1), 1)[None, :]
        sequence = std.rnn.apply(fs.rnn[idx])
    return DayInputs(linear=linear, sequence=sequence)


def window_data(fs: FeatureSets, rows, std: Standardizer, spec: ModelSpec) -> WindowData:
    inp = gather_inputs(fs, rows, std, spec)
    return WindowData(inp.linear, inp.sequence, std.target.apply(fs.targets[np.asarray(rows)]))


def window_rows(fs: FeatureSets, row: int, length: int, spec: ModelSpec) -> np.ndarray:
    """Feature rows of the ``length`` days right before ``row``."""
    if length < spec.seq_len + 1:
        raise InsufficientHistory(f"window of {length} days is too short for sequence length {spec.seq_len}")
    first = (spec.seq_len - 1) if spec.arch.is_recurrent else 0
    lo = row - length
    if lo < first:
        raise InsufficientHistory(f"window of {length} days before row {row} reaches before the usable history")
    return np.arange(lo, row)


def _dropout_masks(spec: ModelSpec, rng: np.random.Generator, n: int):
    if spec.dropout <= 0:
        return None
    keep = 1.0 - spec.dropout
    return {
        b: (rng.random((n, spec.hidden)) < keep) / keep for b in spec.arch.branches if b != "lem"
    }


def loss_and_grads(state: ModelState, spec: ModelSpec, inputs: DayInputs, targets, l1: float, masks=None):
    """Value of :func:`loss` and its gradient for every parameter, via one tape."""
    tape = GradTape()
    frozen = LEM_KEYS if spec.freeze_lem else ()
    vars_ = {k: (v if k in frozen else tape.param(k, v)) for k, v in state.params.items()}
    out = forward(vars_, spec, inputs, masks)
    total = loss(out.combined, targets, vars_, l1)
    grads = tape.backward(total)
    return float(value_of(total)), grads


def train_window(
    data: WindowData,
    spec: ModelSpec,
    state: ModelState,
    rng: np.random.Generator,
    lr: float,
    weight_decay: float,
    l1: float,
    epochs: int,
    config: TrainConfig | None = None,
) -> tuple[ModelState, list[float]]:
    """Minibatch Adam over the window for ``epochs`` epochs; returns final state and epoch losses."""
    config = config or TrainConfig()
    n = len(data)
    if n < max(2, spec.seq_len + 1):
        raise InsufficientHistory(f"window has {n} samples; need at least {max(2, spec.seq_len + 1)}")
    params = {k: v.copy() for k, v in state.params.items()}
    if epochs <= 0:
        return ModelState(params), []
    frozen = LEM_KEYS if spec.freeze_lem else ()
    opt = OptimizerState.zeros_like({k: v for k, v in params.items() if k not in frozen})
    sched = PlateauScheduler(lr, config.sched_factor, config.sched_patience, config.sched_threshold, config.min_lr)
    trace = []
    B = config.batch_size
    for _ in range(epochs):
        perm = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, B):
            idx = perm[lo : lo + B]
            inputs, targets = data.batch(idx)
            masks = _dropout_masks(spec, rng, idx.size)
            value, grads = loss_and_grads(ModelState(params), spec, inputs, targets, l1, masks)
            grads = {k: g for k, g in grads.items() if k not in frozen}
            params, opt = adam_step(
                params,
                grads,
                opt,
                sched.lr,
                weight_decay,
                config.clip_norm,
                config.beta1,
                config.beta2,
                config.eps,
                config.raw_adam,
            )
            total += value * idx.size
        epoch_loss = total / n
        trace.append(epoch_loss)
        sched.step(epoch_loss)
    return ModelState(params), trace


# --------------------------------------------------------------------------- rolling forecasts


@dataclass
class ForecastRecord:
    day: int
    date: np.datetime64
    forecast: np.ndarray  # (24,) EUR/MWh
    actual: np.ndarray  # (24,)
    components: dict[str, np.ndarray]  # de-standardized branch contributions
    standardized: BranchOutputs
    target: Affine
    loss_trace: list[float]


def predict(state: ModelState, spec: ModelSpec, fs: FeatureSets, rows, std: Standardizer) -> BranchOutputs:
    return forward(state, spec, gather_inputs(fs, rows, std, spec))


def _fresh_state(spec, fs, rows, std, data: WindowData, rng):
    ols = None
    if spec.arch.has_lem and spec.use_ols:
        ols = fit_lem_ols(data.linear, data.targets)
    return init_weights(spec, rng, ols)


def rolling_forecast(
    fs: FeatureSets,
    spec: ModelSpec,
    config: TrainConfig,
    plan: RollingPlan,
    seed: int = 0,
    scalar_target: bool = False,
    return_state: bool = False,
):
    """Daily re-estimation and one-day-ahead forecasts for every day in ``plan``.

    The first day trains on ``d_init`` days with the initial settings; later
    days retrain the previous weights (rebased to the new standardization) on
    the latest ``d_all`` days.  Each day draws from its own seeded stream, so a
    forecast depends only on data before its target day.
    """
    first_row = fs.row_of_day(plan.start)
    last_row = fs.row_of_day(plan.end - 1)
    records = []
    state = prev_std = None
    for row in range(first_row, last_row + 1):
        initial = state is None
        length = plan.d_init if initial else plan.d_all
        rows = window_rows(fs, row, length, spec)
        std = fit_standardizer(fs, rows, scalar_target)
        data = window_data(fs, rows, std, spec)
        rng = make_rng(child_seed(seed, row))
        if initial or not plan.warm_start:
            start_state = _fresh_state(spec, fs, rows, std, data, rng)
        else:
            start_state = rebase(state, spec, prev_std, std)
        if initial:
            lr, wd, l1, epochs = config.lr_init, config.wd_init, config.l1_init, config.epochs_init
        else:
            lr, wd, l1, epochs = config.lr_all, config.wd_all, config.l1_all, config.epochs_all
        state, trace = train_window(data, spec, start_state, rng, lr, wd, l1, epochs, config)
        out = forward(state, spec, gather_inputs(fs, [row], std, spec))
        single = BranchOutputs(**{k: (None if v is None else v[0]) for k, v in vars(out).items()})
        dec = decompose(single, std.target)
        records.append(
            ForecastRecord(
                day=int(fs.day_index[row]),
                date=fs.dates[row],
                forecast=dec.combined,
                actual=fs.targets[row].copy(),
                components=dec.components,
                standardized=single,
                target=std.target,
                loss_trace=trace,
            )
        )
        prev_std = std
        log.debug("forecast day %s done (%d epochs)", fs.dates[row], len(trace))
    if return_state:
        return records, state, prev_std
    return records


def records_rmse(records) -> float:
    err = np.stack([r.forecast - r.actual for r in records])
    return float(np.sqrt(np.mean(err**2)))
