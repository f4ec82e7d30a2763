"""Reverse-mode differentiation over the array ops the delay model uses.

A :class:`Var` wraps a float64 numpy array and remembers how it was made;
``backward`` walks the graph once in reverse topological order and leaves
``.grad`` on every node. Ops cover exactly what the network needs (mode
contractions, softmax, gates, embedding lookup, masked RMSE) rather than a
general tensor language. Graphs are throwaway: build, backward, discard.

Arrays may carry one optional leading batch axis; kernels dispatch on
``ndim`` where the contraction pattern differs.
"""

from __future__ import annotations

import warnings

import numpy as np


class NonFiniteGradient(RuntimeError):
    """Raised when an optimizer step sees NaN/Inf gradients."""


class Var:
    """Node in the computation graph."""

    __slots__ = ("value", "grad", "_parents", "_vjp")

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)


class Param(Var):
    """Named leaf holding a trainable value."""

    __slots__ = ("name",)

    def __init__(self, name: str, value):
        super().__init__(value)
        self.name = name


def _lift(x) -> Var:
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=np.float64))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / arithmetic


def add(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    out = a.value + b.value
    return Var(out, (a, b), lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)))


def sub(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    out = a.value - b.value
    return Var(out, (a, b), lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)))


def mul(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    out = a.value * b.value
    return Var(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        ),
    )


def add_n(terms) -> Var:
    """Sum a list of same-shape Vars with a single graph node."""
    terms = [_lift(t) for t in terms]
    if not terms:
        raise ValueError("add_n needs at least one term")
    out = terms[0].value.copy()
    for t in terms[1:]:
        out += t.value
    return Var(out, tuple(terms), lambda g: tuple(g for _ in terms))


def sigmoid(a) -> Var:
    a = _lift(a)
    # clip keeps exp from overflowing; values beyond +-500 saturate anyway
    s = 1.0 / (1.0 + np.exp(-np.clip(a.value, -500.0, 500.0)))
    return Var(s, (a,), lambda g: (g * s * (1.0 - s),))


def relu(a) -> Var:
    a = _lift(a)
    mask = a.value > 0.0
    return Var(a.value * mask, (a,), lambda g: (g * mask,))


def prelu(a, slope: Var) -> Var:
    """PReLU with a single learned slope for negative inputs."""
    a, slope = _lift(a), _lift(slope)
    pos = a.value > 0.0
    s = float(slope.value)
    out = np.where(pos, a.value, s * a.value)

    def vjp(g):
        ga = g * np.where(pos, 1.0, s)
        gs = np.sum(g * np.where(pos, 0.0, a.value))
        return ga, np.asarray(gs)

    return Var(out, (a, slope), vjp)


def sin(a) -> Var:
    a = _lift(a)
    return Var(np.sin(a.value), (a,), lambda g: (g * np.cos(a.value),))


def cos(a) -> Var:
    a = _lift(a)
    return Var(np.cos(a.value), (a,), lambda g: (-g * np.sin(a.value),))


def sqrt(a) -> Var:
    a = _lift(a)
    root = np.sqrt(a.value)
    return Var(root, (a,), lambda g: (g * 0.5 / np.maximum(root, 1e-300),))


def pow_const(base, exponents) -> Var:
    """``base ** exponents`` for a scalar Var base and a constant exponent array.

    A negative base with fractional exponents yields NaN (not an error) so
    that a diverged parameter surfaces as a non-finite loss downstream.
    """
    base = _lift(base)
    e = np.asarray(exponents, dtype=np.float64)
    b = float(base.value)
    with np.errstate(invalid="ignore"):
        out = np.float_power(b, e)

    def vjp(g):
        with np.errstate(invalid="ignore"):
            return (np.asarray(np.sum(g * e * np.float_power(b, e - 1.0))),)

    return Var(out, (base,), vjp)


# ---------------------------------------------------------------------------
# reductions / shaping


def sum_all(a) -> Var:
    a = _lift(a)
    return Var(np.asarray(a.value.sum()), (a,), lambda g: (np.broadcast_to(g, a.value.shape).copy(),))


def mean_axes(a, axes: tuple) -> Var:
    a = _lift(a)
    out = a.value.mean(axis=axes)
    count = 1
    for ax in axes:
        count *= a.value.shape[ax]

    def vjp(g):
        g_exp = np.expand_dims(g, axes)
        return (np.broadcast_to(g_exp / count, a.value.shape).copy(),)

    return Var(out, (a,), vjp)


def reshape(a, shape) -> Var:
    a = _lift(a)
    return Var(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.value.shape),))


def concat_last(parts) -> Var:
    parts = [_lift(p) for p in parts]
    out = np.concatenate([p.value for p in parts], axis=-1)
    widths = [p.value.shape[-1] for p in parts]
    splits = np.cumsum(widths)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=-1))

    return Var(out, tuple(parts), vjp)


def interleave_last(a, b) -> Var:
    """out[..., 2i] = a[..., i], out[..., 2i+1] = b[..., i]."""
    a, b = _lift(a), _lift(b)
    if a.value.shape != b.value.shape:
        raise ValueError(f"interleave operands differ: {a.value.shape} vs {b.value.shape}")
    out = np.stack([a.value, b.value], axis=-1).reshape(*a.value.shape[:-1], -1)

    def vjp(g):
        gs = g.reshape(*a.value.shape[:-1], a.value.shape[-1], 2)
        return gs[..., 0], gs[..., 1]

    return Var(out, (a, b), vjp)


def slice_last(a, start: int, stop: int) -> Var:
    a = _lift(a)
    out = a.value[..., start:stop]

    def vjp(g):
        full = np.zeros_like(a.value)
        full[..., start:stop] = g
        return (full,)

    return Var(out, (a,), vjp)


def transpose_last2(a) -> Var:
    a = _lift(a)
    return Var(np.swapaxes(a.value, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def gather_rows(table, idx) -> Var:
    """Embedding lookup: table (V, E) indexed by an integer array."""
    table = _lift(table)
    idx = np.asarray(idx)
    out = table.value[idx]

    def vjp(g):
        gt = np.zeros_like(table.value)
        np.add.at(gt, idx.reshape(-1), g.reshape(-1, table.value.shape[-1]))
        return (gt,)

    return Var(out, (table,), vjp)


# ---------------------------------------------------------------------------
# contractions


def linear_last(x, w) -> Var:
    """Map the trailing axis through matrix ``w``: (..., i) @ (i, j)."""
    x, w = _lift(x), _lift(w)
    if x.value.shape[-1] != w.value.shape[0]:
        raise ValueError(
            f"trailing extent {x.value.shape[-1]} does not match matrix rows {w.value.shape[0]}"
        )
    out = np.einsum("...i,ij->...j", x.value, w.value)

    def vjp(g):
        gx = np.einsum("...j,ij->...i", g, w.value)
        i, j = w.value.shape
        gw = x.value.reshape(-1, i).T @ g.reshape(-1, j)
        return gx, gw

    return Var(out, (x, w), vjp)


def mode_space(x, a) -> Var:
    """Contract the node axis: out[.., m, t, c] = sum_n x[.., n, t, c] a[n, m]."""
    x, a = _lift(x), _lift(a)
    batched = x.value.ndim == 4
    eq, gx_eq, ga_eq = (
        ("bntc,nm->bmtc", "bmtc,nm->bntc", "bntc,bmtc->nm")
        if batched
        else ("ntc,nm->mtc", "mtc,nm->ntc", "ntc,mtc->nm")
    )
    out = np.einsum(eq, x.value, a.value)

    def vjp(g):
        return np.einsum(gx_eq, g, a.value), np.einsum(ga_eq, x.value, g)

    return Var(out, (x, a), vjp)


def mode_time(x, a) -> Var:
    """Contract the time axis; ``a`` may be shared (T_in, T_out) or per-sample (B, T_in, T_out)."""
    x, a = _lift(x), _lift(a)
    if x.value.ndim == 4 and a.value.ndim == 3:
        eq, gx_eq, ga_eq = "bntc,btj->bnjc", "bnjc,btj->bntc", "bntc,bnjc->btj"
    elif x.value.ndim == 4:
        eq, gx_eq, ga_eq = "bntc,tj->bnjc", "bnjc,tj->bntc", "bntc,bnjc->tj"
    else:
        eq, gx_eq, ga_eq = "ntc,tj->njc", "njc,tj->ntc", "ntc,njc->tj"
    out = np.einsum(eq, x.value, a.value)

    def vjp(g):
        return np.einsum(gx_eq, g, a.value), np.einsum(ga_eq, x.value, g)

    return Var(out, (x, a), vjp)


def mode_feature(x, w) -> Var:
    return linear_last(x, w)


def scores(q, k) -> Var:
    """Dot products between query and key rows: (..., Q, d) x (..., K, d) -> (..., Q, K)."""
    q, k = _lift(q), _lift(k)
    out = np.einsum("...qd,...kd->...qk", q.value, k.value)

    def vjp(g):
        gq = np.einsum("...qk,...kd->...qd", g, k.value)
        gk = np.einsum("...qk,...qd->...kd", g, q.value)
        return gq, gk

    return Var(out, (q, k), vjp)


def softmax_last(x) -> Var:
    x = _lift(x)
    shifted = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = np.sum(g * s, axis=-1, keepdims=True)
        return (s * (g - dot),)

    return Var(s, (x,), vjp)


# ---------------------------------------------------------------------------
# loss


def masked_rmse(pred, target, mask) -> Var:
    """Root mean squared error over unmasked entries only.

    ``mask`` is boolean, broadcastable to the prediction shape (a missing
    trailing channel axis broadcasts across channels). Zero unmasked
    entries yield a constant 0 with a warning; callers should skip such
    batches.
    """
    pred = _lift(pred)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask)
    if mask.ndim == pred.value.ndim - 1:
        mask = mask[..., None]
    mask = np.broadcast_to(mask, pred.value.shape).astype(np.float64)
    count = mask.sum()
    if count == 0:
        warnings.warn("masked_rmse: no unmasked entries, returning 0", RuntimeWarning)
        return Var(0.0)
    diff = sub(pred, target)
    sq = mul(mul(diff, diff), mask)
    return sqrt(mul(sum_all(sq), 1.0 / count))


def masked_count(mask) -> int:
    return int(np.asarray(mask).sum())


# ---------------------------------------------------------------------------
# backward pass


def _topo_order(root: Var) -> list:
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss: Var) -> None:
    """Populate ``.grad`` on every node reachable from ``loss``.

    The loss must be scalar. Each node is visited exactly once in reverse
    topological order; adjoints accumulate across fan-out.
    """
    if loss.value.shape != ():
        raise ValueError(f"backward requires a scalar loss, got shape {loss.value.shape}")
    order = _topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones((), dtype=np.float64)
    for node in reversed(order):
        if node._vjp is None or node.grad is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None:
                continue
            if parent.grad is None:
                parent.grad = np.array(g, dtype=np.float64)
            else:
                parent.grad = parent.grad + g


# ---------------------------------------------------------------------------
# parameters and optimizer


class ParamStore:
    """Named trainable leaves; the single writable state of a model."""

    def __init__(self, arrays: dict):
        self._params: dict[str, Param] = {
            name: Param(name, np.array(v, dtype=np.float64)) for name, v in arrays.items()
        }
        if len(self._params) != len(arrays):
            raise ValueError("duplicate parameter names")

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad = None

    def grad_arrays(self) -> dict:
        """Gradients by name; parameters off the loss path get zeros."""
        return {
            name: (np.zeros_like(p.value) if p.grad is None else np.asarray(p.grad))
            for name, p in self._params.items()
        }

    def to_arrays(self) -> dict:
        return {name: p.value.copy() for name, p in self._params.items()}


class AdamState:
    """First/second moment buffers plus the step counter."""

    def __init__(self, store: ParamStore):
        self.step = 0
        self.m = {name: np.zeros_like(p.value) for name, p in store.items()}
        self.v = {name: np.zeros_like(p.value) for name, p in store.items()}


def adam_step(
    store: ParamStore,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update from the grads currently on ``store``."""
    state.step += 1
    t = state.step
    grads = store.grad_arrays()
    for name, p in store.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            bad = int(np.sum(~np.isfinite(g)))
            raise NonFiniteGradient(
                f"non-finite gradient for {name!r} at step {t} ({bad} bad entries)"
            )
        m = state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        v = state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p.value = p.value - lr * m_hat / (np.sqrt(v_hat) + eps)
