"""Dense linear algebra helpers, least squares and seeded random streams.

Matrices are plain ``float64`` numpy arrays; the reverse-mode tape used for
training lives in :mod:`pbrnn.tape`.
"""
from __future__ import annotations

import numpy as np

from .errors import SingularDesign

# reciprocal condition number below which X'X counts as singular
_RCOND = 1e-12


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {m.shape}")
    return m


def ols_fit(X, y, ridge: float = 0.0) -> np.ndarray:
    """Solve ``min ||XW - y||^2 + ridge * ||W||^2`` for ``W``.

    With ``ridge == 0`` the normal equations must be well conditioned,
    otherwise :class:`SingularDesign` is raised so the caller can retry with
    :func:`fallback_ridge`.
    """
    X = as_matrix(X)
    y = as_matrix(y)
    n, p = X.shape
    if p < 1:
        raise ValueError("design matrix needs at least one column")
    if y.shape[0] != n:
        raise ValueError(f"row mismatch: X has {n} rows, y has {y.shape[0]}")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    if ridge == 0.0:
        if n < p:
            raise SingularDesign(f"{n} rows cannot identify {p} coefficients")
        # QR on X itself avoids squaring the condition number
        q, r = np.linalg.qr(X, mode="reduced")
        diag = np.abs(np.diag(r))
        if diag.size == 0 or diag.min() <= _RCOND * max(diag.max(), 1.0) * max(n, p):
            raise SingularDesign("design matrix is rank deficient")
        # scipy's triangular solve would do, numpy's general solve is fine at this size
        return np.linalg.solve(r, q.T @ y)
    gram = X.T @ X + ridge * np.eye(p)
    try:
        c = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - ridge > 0 keeps gram SPD
        raise SingularDesign(str(exc)) from exc
    z = np.linalg.solve(c, X.T @ y)
    return np.linalg.solve(c.T, z)


def fallback_ridge(X) -> float:
    """Ridge strength used after a :class:`SingularDesign`: 1e-8 * trace(X'X) / p."""
    X = as_matrix(X)
    p = X.shape[1]
    tr = float(np.einsum("ij,ij->", X, X))
    return 1e-8 * tr / p if tr > 0 else 1e-8


def ols_fit_robust(X, y) -> np.ndarray:
    try:
        return ols_fit(X, y, 0.0)
    except SingularDesign:
        return ols_fit(X, y, fallback_ridge(X))


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; identical seeds give identical draw sequences."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent child streams of ``seed`` (one per HPO trial, say)."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def child_seed(seed: int, *key: int) -> int:
    """Deterministic 63-bit seed derived from ``seed`` and an integer key path."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> np.uint64(1))


def uniform_init(rng: np.random.Generator, rows: int, cols: int | None, scale: float) -> np.ndarray:
    """I.i.d. draws on ``[-scale, scale]``; ``cols=None`` returns a vector."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    shape = (rows,) if cols is None else (rows, cols)
    return rng.uniform(-scale, scale, size=shape)
