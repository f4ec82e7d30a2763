"""Dense (node, time, channel) tensor algebra.

Tensors are plain float64 ``numpy`` arrays of shape (N, T, C) in row-major
layout; matrices are 2-D arrays. The fixed vectorization order stacks
channels innermost, time next, space outermost, i.e. ``x.reshape(-1)``.
The Kronecker/mode-product equivalence below only holds for this one
ordering, so it is frozen here and everything else (layer oracles, the
dense sum-of-Kronecker checks) builds on it:

    unfold(x xS A xT B) == kronecker(A, B).T @ unfold(x)

Mode products contract over the *input* extent: for ``mode="time"`` and
``u`` of shape (T_in, T_out), ``out[n, j, c] = sum_t x[n, t, c] * u[t, j]``.
"""

from __future__ import annotations

import numpy as np

MODES = ("space", "time", "feature")

_MODE_AXIS = {"space": 0, "time": 1, "feature": 2}

_MODE_EINSUM = {
    "space": ("ntc,nm->mtc", "bntc,nm->bmtc"),
    "time": ("ntc,tj->njc", "bntc,btj->bnjc"),
    "feature": ("ntc,cd->ntd", "bntc,cd->bntd"),
}


def as_tensor3(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"expected a 3-D (node, time, channel) tensor, got shape {x.shape}")
    return x


def as_matrix(u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {u.shape}")
    return u


def _check_finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"{what} produced non-finite values")
    return a


def mode_product(x, u, mode: str) -> np.ndarray:
    """Contract tensor ``x`` with matrix ``u`` along ``mode``.

    ``u`` has shape (extent_in, extent_out); the output extent along
    ``mode`` becomes ``u.shape[1]`` and the other extents are unchanged.
    """
    x = as_tensor3(x)
    u = as_matrix(u)
    if mode not in _MODE_AXIS:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    axis = _MODE_AXIS[mode]
    if u.shape[0] != x.shape[axis]:
        raise ValueError(
            f"mode {mode!r} extent mismatch: tensor has {x.shape[axis]} along that "
            f"mode but matrix has {u.shape[0]} rows"
        )
    out = np.einsum(_MODE_EINSUM[mode][0], x, u)
    return _check_finite(out, "mode_product")


def kronecker(a, b) -> np.ndarray:
    """Kronecker product: block (i, j) of the result is a[i, j] * b."""
    a = as_matrix(a)
    b = as_matrix(b)
    return np.kron(a, b)


def unfold(x) -> np.ndarray:
    """Matricize to (N*T, C); row index is n*T + t (time fastest)."""
    x = as_tensor3(x)
    n, t, c = x.shape
    return x.reshape(n * t, c)


def refold(m, dims: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`unfold`; exact bijection."""
    m = as_matrix(m)
    n, t, c = dims
    if m.shape != (n * t, c):
        raise ValueError(f"cannot refold {m.shape} into {dims}")
    return m.reshape(n, t, c)


def vec(x) -> np.ndarray:
    """Flatten with channels innermost, time next, space outermost."""
    return as_tensor3(x).reshape(-1)
