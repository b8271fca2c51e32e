"""Branch models: linear expert model, ReLU Elman RNN and the Kalman-filter branch.

All branch outputs live on the standardized target scale and are summed to
form the combined forecast.  The model code accepts either plain ndarrays or
:class:`pbrnn.tape.Var` parameters, so the same functions serve inference and
gradient recording.
"""
from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__
from .dataset import Affine, Standardizer
from .errors import MissingInput, ShapeMismatch
from .numerics import ols_fit_robust, uniform_init
from .tape import identity, relu, value_of

HOURS = 24


class ArchType(enum.Enum):
    RNN = "rnn"
    KF = "kf"
    LEM = "lem"
    LEM_RNN = "lem-rnn"
    KF_RNN = "kf-rnn"
    LEM_KF_RNN = "lem-kf-rnn"

    @property
    def branches(self) -> tuple[str, ...]:
        return _BRANCHES[self]

    @property
    def has_lem(self) -> bool:
        return "lem" in self.branches

    @property
    def is_recurrent(self) -> bool:
        return "rnn" in self.branches or "kf" in self.branches

    @classmethod
    def parse(cls, value) -> "ArchType":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for a in cls:
            if a.value == key or a.name.lower().replace("_", "-") == key:
                return a
        raise ValueError(f"unknown architecture {value!r}")


# branch order is also the summation order of the combined forecast
_BRANCHES = {
    ArchType.RNN: ("rnn",),
    ArchType.KF: ("kf",),
    ArchType.LEM: ("lem",),
    ArchType.LEM_RNN: ("lem", "rnn"),
    ArchType.KF_RNN: ("rnn", "kf"),
    ArchType.LEM_KF_RNN: ("lem", "rnn", "kf"),
}

# parameter names per recurrent branch: (hidden-hidden, input-hidden, hidden bias, output map, output bias)
RECURRENT_KEYS = {
    "rnn": ("rnn.W_hid", "rnn.W_ext", "rnn.b_hid", "rnn.W_out", "rnn.b_out"),
    "kf": ("kf.A_hid", "kf.A_ext", "kf.b_hid", "kf.A_out", "kf.b_out"),
}
LEM_KEYS = ("lem.coef", "lem.intercept")
# output-side linear maps carrying the L1 penalty
L1_KEYS = ("rnn.W_out", "kf.A_out", "lem.coef")
# weight matrices subject to decoupled weight decay (biases and intercepts excluded)
DECAY_KEYS = ("rnn.W_hid", "rnn.W_ext", "rnn.W_out", "kf.A_hid", "kf.A_ext", "kf.A_out", "lem.coef")


@dataclass(frozen=True)
class ModelSpec:
    arch: ArchType
    hidden: int = 16
    seq_len: int = 1
    dropout: float = 0.0
    use_ols: bool = True
    ols_alpha: float = 1.0
    n_rnn: int = 103
    n_linear: int = 13
    freeze_lem: bool = False
    init_scale: float | None = None  # None -> 1/sqrt(hidden)

    def __post_init__(self):
        object.__setattr__(self, "arch", ArchType.parse(self.arch))
        if not 1 <= self.hidden <= 128:
            raise ValueError("hidden size must lie in [1, 128]")
        if not 1 <= self.seq_len <= 7:
            raise ValueError("sequence length must lie in [1, 7]")
        if not 0.0 <= self.dropout <= 0.5:
            raise ValueError("dropout must lie in [0, 0.5]")
        if not 0.0 <= self.ols_alpha <= 2.0:
            raise ValueError("OLS scale must lie in [0, 2]")

    @property
    def scale(self) -> float:
        return self.init_scale if self.init_scale is not None else 1.0 / np.sqrt(self.hidden)

    def shapes(self) -> dict[str, tuple]:
        H, D, p = self.hidden, self.n_rnn, self.n_linear
        out = {}
        for b in ("rnn", "kf"):
            if b in self.arch.branches:
                hid, ext, bh, wo, bo = RECURRENT_KEYS[b]
                out.update({hid: (H, H), ext: (H, D), bh: (H,), wo: (HOURS, H), bo: (HOURS,)})
        if self.arch.has_lem:
            out.update({"lem.coef": (HOURS, p), "lem.intercept": (HOURS,)})
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["arch"] = self.arch.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        return cls(**dict(d))


@dataclass
class ModelState:
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "ModelState":
        return ModelState({k: v.copy() for k, v in self.params.items()})

    def __getitem__(self, key):
        return self.params[key]

    def check(self, spec: ModelSpec):
        expected = spec.shapes()
        if set(expected) != set(self.params):
            raise ShapeMismatch(f"parameter set {sorted(self.params)} does not match {spec.arch.value}")
        for k, shape in expected.items():
            if self.params[k].shape != shape:
                raise ShapeMismatch(f"{k}: expected {shape}, got {self.params[k].shape}")
            if not np.all(np.isfinite(self.params[k])):
                raise ValueError(f"{k} holds non-finite values")


@dataclass
class BranchOutputs:
    combined: np.ndarray
    lem: np.ndarray | None = None
    rnn: np.ndarray | None = None
    kf: np.ndarray | None = None

    def present(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in ("lem", "rnn", "kf") if getattr(self, k) is not None}


@dataclass
class DayInputs:
    """Standardized model inputs for one day or a batch of days.

    ``linear``: (24, p) or (B, 24, p); ``sequence``: (L, D) or (B, L, D).
    """

    linear: np.ndarray | None = None
    sequence: np.ndarray | None = None


# --------------------------------------------------------------------------- branch recurrences


def _recurrence(params, keys, sequence, hidden_in, activation, dropout_mask):
    W_hid, W_ext, b_hid, W_out, b_out = (params[k] for k in keys)
    H = value_of(W_hid).shape[0]
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim != 3 or seq.shape[2] != value_of(W_ext).shape[1]:
        raise ShapeMismatch(f"sequence shape {seq.shape} does not match input width {value_of(W_ext).shape[1]}")
    h = np.zeros((seq.shape[0], H)) if hidden_in is None else hidden_in
    if value_of(h).shape != (seq.shape[0], H):
        raise ShapeMismatch(f"hidden state shape {value_of(h).shape} != {(seq.shape[0], H)}")
    W_hid_t, W_ext_t = W_hid.T, W_ext.T
    for step in range(seq.shape[1]):
        h = activation(h @ W_hid_t + seq[:, step, :] @ W_ext_t + b_hid)
    hidden_out = h
    if dropout_mask is not None:
        h = h * dropout_mask
    return h @ W_out.T + b_out, hidden_out


def _batched(sequence, hidden_in):
    seq = np.asarray(sequence, dtype=np.float64)
    single = seq.ndim == 2
    if single:
        seq = seq[None]
        if hidden_in is not None:
            hidden_in = np.asarray(hidden_in, dtype=np.float64)[None]
    return seq, hidden_in, single


def _params(state) -> Mapping:
    return state.params if isinstance(state, ModelState) else state


def rnn_forward(state, spec, sequence, hidden_in=None, activation="relu", dropout_mask=None, branch="rnn"):
    """Elman recursion ``h <- g(W_hid h + W_ext x + b_hid)`` over the sequence, then ``W_out h + b_out``.

    Returns ``(output, hidden_out)``; ``hidden_out`` is the pre-dropout final state.
    """
    g = {"relu": relu, "identity": identity}[activation] if isinstance(activation, str) else activation
    seq, h0, single = _batched(sequence, hidden_in)
    mask = dropout_mask
    if single and mask is not None:
        mask = np.asarray(mask)[None]
    out, hid = _recurrence(_params(state), RECURRENT_KEYS[branch], seq, h0, g, mask)
    if single:
        return out[0], hid[0]
    return out, hid


def kf_forward(state, spec, sequence, hidden_in=None, dropout_mask=None):
    """Kalman-filter branch: the same recursion with identity activation on the ``kf`` block."""
    return rnn_forward(state, spec, sequence, hidden_in, identity, dropout_mask, branch="kf")


def lem_forward(state, spec, linear_rows):
    """Per-hour linear model ``intercept_s + X_s . coef_s``."""
    params = _params(state)
    coef, intercept = params["lem.coef"], params["lem.intercept"]
    rows = np.asarray(linear_rows, dtype=np.float64)
    if rows.shape[-2:] != value_of(coef).shape:
        raise ShapeMismatch(f"design rows {rows.shape} do not match coefficients {value_of(coef).shape}")
    return (rows * coef).sum(axis=-1) + intercept


def forward(state, spec: ModelSpec, inputs: DayInputs, dropout_masks: Mapping | None = None):
    """Run the branches of ``spec.arch`` and sum them in branch order.

    ``dropout_masks`` maps branch name to a mask over the final hidden state
    (training only).  Returns a :class:`BranchOutputs`; with tape parameters
    the entries are ``Var`` nodes.
    """
    masks = dropout_masks or {}
    outs = {}
    for b in spec.arch.branches:
        if b == "lem":
            if inputs.linear is None:
                raise MissingInput(f"{spec.arch.value} needs linear design rows")
            outs[b] = lem_forward(state, spec, inputs.linear)
        else:
            if inputs.sequence is None:
                raise MissingInput(f"{spec.arch.value} needs a recurrent input sequence")
            act = "relu" if b == "rnn" else "identity"
            outs[b] = rnn_forward(state, spec, inputs.sequence, None, act, masks.get(b), branch=b)[0]
    combined = None
    for b in spec.arch.branches:
        combined = outs[b] if combined is None else combined + outs[b]
    return BranchOutputs(combined=combined, **outs)


# --------------------------------------------------------------------------- decomposition


@dataclass
class Decomposition:
    combined: np.ndarray
    components: dict[str, np.ndarray]


def decompose(outputs: BranchOutputs, target: Affine | Standardizer) -> Decomposition:
    """De-standardize each branch separately and the summed forecast once.

    The combined forecast equals ``sum(components) - (C - 1) * mean``.
    """
    aff = target.target if isinstance(target, Standardizer) else target
    comps = {k: aff.invert(v) for k, v in outputs.present().items()}
    total = None
    for v in outputs.present().values():
        total = v if total is None else total + v
    return Decomposition(combined=aff.invert(total), components=comps)


# --------------------------------------------------------------------------- initialisation


def fit_lem_ols(linear_std: np.ndarray, y_std: np.ndarray) -> np.ndarray:
    """Per-hour OLS on standardized data; returns (24, p + 1), intercept last."""
    n, S, p = linear_std.shape
    out = np.empty((S, p + 1))
    ones = np.ones((n, 1))
    for s in range(S):
        X = np.hstack([linear_std[:, s, :], ones])
        out[s] = ols_fit_robust(X, y_std[:, s : s + 1])[:, 0]
    return out


def init_weights(spec: ModelSpec, rng: np.random.Generator, ols_result: np.ndarray | None = None) -> ModelState:
    """Uniform(+-1/sqrt(H)) recurrent blocks; LEM block ``alpha * OLS`` when the flag is set."""
    params = {}
    shapes = spec.shapes()
    for b in ("rnn", "kf"):
        if b not in spec.arch.branches:
            continue
        for k in RECURRENT_KEYS[b]:
            shape = shapes[k]
            params[k] = uniform_init(rng, shape[0], shape[1] if len(shape) > 1 else None, spec.scale)
    if spec.arch.has_lem:
        p = spec.n_linear
        if spec.use_ols:
            if ols_result is None:
                raise ShapeMismatch("OLS initialisation requested without an OLS solution")
            ols = np.asarray(ols_result, dtype=np.float64)
            if ols.shape != (HOURS, p + 1):
                raise ShapeMismatch(f"OLS solution shape {ols.shape} != {(HOURS, p + 1)}")
            scaled = spec.ols_alpha * ols
            params["lem.coef"] = scaled[:, :p].copy()
            params["lem.intercept"] = scaled[:, p].copy()
        else:
            s = 1.0 / np.sqrt(p + 1)
            params["lem.coef"] = uniform_init(rng, HOURS, p, s)
            params["lem.intercept"] = uniform_init(rng, HOURS, None, s)
    return ModelState(params)


def rebase(state: ModelState, spec: ModelSpec, old: Standardizer, new: Standardizer) -> ModelState:
    """Re-express ``state`` for new standardization constants.

    The forecast in original units is unchanged: input maps absorb the
    feature rescaling, output maps the target rescaling.  The target shift is
    added to the LEM intercept if present, else to the first recurrent bias.
    """
    p = {k: v.copy() for k, v in state.params.items()}
    for b in ("rnn", "kf"):
        if b not in spec.arch.branches:
            continue
        _, ext, bh, _, _ = RECURRENT_KEYS[b]
        r = new.rnn.std / old.rnn.std
        d = (new.rnn.mean - old.rnn.mean) / old.rnn.std
        p[bh] = p[bh] + state.params[ext] @ d
        p[ext] = state.params[ext] * r[None, :]
    if spec.arch.has_lem:
        r = new.linear.std / old.linear.std
        d = (new.linear.mean - old.linear.mean) / old.linear.std
        p["lem.intercept"] = p["lem.intercept"] + (state.params["lem.coef"] * d).sum(axis=1)
        p["lem.coef"] = state.params["lem.coef"] * r
    q = old.target.std / new.target.std
    e = (old.target.mean - new.target.mean) / new.target.std
    for b in spec.arch.branches:
        if b == "lem":
            p["lem.coef"] = p["lem.coef"] * q[:, None]
            p["lem.intercept"] = p["lem.intercept"] * q
        else:
            _, _, _, wo, bo = RECURRENT_KEYS[b]
            p[wo] = p[wo] * q[:, None]
            p[bo] = p[bo] * q
    first = spec.arch.branches[0]
    shift_key = "lem.intercept" if first == "lem" else RECURRENT_KEYS[first][4]
    p[shift_key] = p[shift_key] + e
    return ModelState(p)


# --------------------------------------------------------------------------- checkpoints

CHECKPOINT_FORMAT = 1


def _enc(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _dec(d: Mapping) -> np.ndarray:
    return np.asarray(d["data"], dtype=np.float64).reshape(d["shape"])


def save_checkpoint(path, spec: ModelSpec, state: ModelState, std: Standardizer | None = None):
    """JSON checkpoint; float reprs round-trip exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": __version__,
        "spec": spec.to_dict(),
        "params": {k: _enc(v) for k, v in sorted(state.params.items())},
    }
    if std is not None:
        doc["standardizer"] = {
            name: {"mean": _enc(getattr(std, name).mean), "std": _enc(getattr(std, name).std)}
            for name in ("linear", "rnn", "target")
        }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
    spec = ModelSpec.from_dict(doc["spec"])
    state = ModelState({k: _dec(v) for k, v in doc["params"].items()})
    state.check(spec)
    std = None
    if "standardizer" in doc:
        s = doc["standardizer"]
        std = Standardizer(*(Affine(_dec(s[n]["mean"]), _dec(s[n]["std"])) for n in ("linear", "rnn", "target")))
    return spec, state, std
