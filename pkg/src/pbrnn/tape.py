"""Minimal reverse-mode differentiation over numpy arrays.

A :class:`GradTape` records every operation applied to its :class:`Var`
nodes in creation order, so a reversed sweep over the record is already a
valid topological order.  Plain ndarrays mixed into an expression are treated
as constants.  One tape is meant to live for a single optimisation step.

The helpers :func:`relu`, :func:`identity`, :func:`absolute` and
:func:`square` accept either ndarrays or ``Var`` nodes, so model code can be
written once and run both with and without gradient recording.
"""
from __future__ import annotations

from typing import Callable, Hashable

import numpy as np


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _promote(a: np.ndarray, b: np.ndarray, g):
    a2 = a[None, :] if a.ndim == 1 else a
    b2 = b[:, None] if b.ndim == 1 else b
    g2 = np.asarray(g).reshape(np.broadcast_shapes(a2.shape[:-2], b2.shape[:-2]) + (a2.shape[-2], b2.shape[-1]))
    return a2, b2, g2


def _matmul_grad_left(a: np.ndarray, b: np.ndarray, g) -> np.ndarray:
    """Gradient of ``a @ b`` with respect to ``a`` (1-D operands included)."""
    a2, b2, g2 = _promote(a, b, g)
    return _unbroadcast(g2 @ np.swapaxes(b2, -1, -2), a2.shape).reshape(a.shape)


def _matmul_grad_right(a: np.ndarray, b: np.ndarray, g) -> np.ndarray:
    a2, b2, g2 = _promote(a, b, g)
    return _unbroadcast(np.swapaxes(a2, -1, -2) @ g2, b2.shape).reshape(b.shape)


class Var:
    """A recorded node holding a float64 value."""

    __slots__ = ("value", "tape", "parents", "index")
    __array_ufunc__ = None  # make ndarray <op> Var dispatch to Var's reflected ops

    def __init__(self, value, tape: "GradTape", parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.tape = tape
        self.parents: tuple[tuple["Var", Callable[[np.ndarray], np.ndarray]], ...] = tuple(parents)
        self.index = tape._record(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    def _lift(self, other):
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise ValueError("cannot mix nodes from different tapes")
            return other
        return None

    def __add__(self, other):
        o = self._lift(other)
        if o is None:
            c = np.asarray(other, dtype=np.float64)
            return Var(self.value + c, self.tape, [(self, lambda g, s=self.shape: _unbroadcast(g, s))])
        return Var(
            self.value + o.value,
            self.tape,
            [
                (self, lambda g, s=self.shape: _unbroadcast(g, s)),
                (o, lambda g, s=o.shape: _unbroadcast(g, s)),
            ],
        )

    __radd__ = __add__

    def __neg__(self):
        return Var(-self.value, self.tape, [(self, lambda g: -g)])

    def __sub__(self, other):
        return self + (-other if isinstance(other, Var) else -np.asarray(other, dtype=np.float64))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._lift(other)
        if o is None:
            c = np.asarray(other, dtype=np.float64)
            return Var(self.value * c, self.tape, [(self, lambda g, s=self.shape: _unbroadcast(g * c, s))])
        a, b = self.value, o.value
        return Var(
            a * b,
            self.tape,
            [
                (self, lambda g, s=self.shape: _unbroadcast(g * b, s)),
                (o, lambda g, s=o.shape: _unbroadcast(g * a, s)),
            ],
        )

    __rmul__ = __mul__

    def __matmul__(self, other):
        o = self._lift(other)
        a = self.value
        b = np.asarray(other, dtype=np.float64) if o is None else o.value
        parents = [(self, lambda g: _matmul_grad_left(a, b, g))]
        if o is not None:
            parents.append((o, lambda g: _matmul_grad_right(a, b, g)))
        return Var(a @ b, self.tape, parents)

    def __rmatmul__(self, other):
        a = np.asarray(other, dtype=np.float64)
        b = self.value
        return Var(a @ b, self.tape, [(self, lambda g: _matmul_grad_right(a, b, g))])

    @property
    def T(self):
        return Var(self.value.T, self.tape, [(self, lambda g: g.T)])

    def sum(self, axis=None):
        shape = self.shape
        if axis is None:
            return Var(self.value.sum(), self.tape, [(self, lambda g: np.broadcast_to(g, shape).copy())])
        ax = axis if axis >= 0 else axis + len(shape)
        return Var(
            self.value.sum(axis=ax),
            self.tape,
            [(self, lambda g: np.broadcast_to(np.expand_dims(g, ax), shape).copy())],
        )

    def mean(self):
        return self.sum() * (1.0 / self.value.size)


class GradTape:
    """Records operations on registered parameters and replays them backwards."""

    def __init__(self):
        self._nodes: list[Var] = []
        self._params: dict[Hashable, Var] = {}

    def _record(self, node: Var) -> int:
        self._nodes.append(node)
        return len(self._nodes) - 1

    def param(self, key: Hashable, value) -> Var:
        if key in self._params:
            raise KeyError(f"parameter {key!r} already registered")
        v = Var(np.array(value, dtype=np.float64), self)
        self._params[key] = v
        return v

    @property
    def params(self) -> dict[Hashable, Var]:
        return dict(self._params)

    def __len__(self):
        return len(self._nodes)

    def backward(self, loss: Var | None = None) -> dict[Hashable, np.ndarray]:
        """Gradients of the scalar ``loss`` with respect to every registered parameter.

        Parameters that do not influence ``loss`` get an exact zero array.
        """
        grads_out = {k: np.zeros_like(v.value) for k, v in self._params.items()}
        if loss is None:
            return grads_out
        if loss.tape is not self:
            raise ValueError("loss was recorded on a different tape")
        if loss.value.size != 1:
            raise ValueError("loss must be a scalar")
        acc: dict[int, np.ndarray] = {loss.index: np.ones_like(loss.value)}
        for node in reversed(self._nodes[: loss.index + 1]):
            g = acc.pop(node.index, None)
            if g is None:
                continue
            for parent, vjp in node.parents:
                contrib = vjp(g)
                prev = acc.get(parent.index)
                acc[parent.index] = contrib if prev is None else prev + contrib
            # parameters are leaves; keep their gradient once reached
            if not node.parents:
                acc[node.index] = g
        for k, v in self._params.items():
            if v.index in acc:
                grads_out[k] = np.array(acc[v.index], dtype=np.float64).reshape(v.shape)
        return grads_out


def grad_backward(tape: GradTape, loss: Var | None) -> dict[Hashable, np.ndarray]:
    return tape.backward(loss)


def relu(x):
    if isinstance(x, Var):
        mask = x.value > 0
        return Var(np.where(mask, x.value, 0.0), x.tape, [(x, lambda g: g * mask)])
    return np.maximum(x, 0.0)


def identity(x):
    return x


def absolute(x):
    if isinstance(x, Var):
        sign = np.sign(x.value)  # subgradient 0 at 0
        return Var(np.abs(x.value), x.tape, [(x, lambda g: g * sign)])
    return np.abs(x)


def square(x):
    if isinstance(x, Var):
        v = x.value
        return Var(v * v, x.tape, [(x, lambda g: 2.0 * v * g)])
    return x * x


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x)
