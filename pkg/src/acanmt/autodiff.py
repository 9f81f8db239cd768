"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Every forward op records its inputs and a closure mapping the output gradient
to input gradients. ``backward`` walks the graph in reverse topological order
and accumulates gradients into leaf tensors.

The op set is deliberately small: exactly what the encoder, decoder,
attention and memory-control computations need, plus a handful of shape
plumbing ops (slicing, stacking, time selection) for batched sequences.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "UnknownOpError",
    "apply",
    "backward",
    "zero_grad",
    "no_grad",
    "finite_difference_check",
    "OPS",
]


class ShapeError(ValueError):
    """Raised when op inputs do not conform."""


class UnknownOpError(KeyError):
    pass


_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Build values only; no graph is recorded inside this block."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    """A node in the computation graph.

    Leaves are created directly (parameters, inputs). Interior nodes carry an
    ``op`` tag, their ``parents`` and a backward closure.
    """

    __slots__ = ("value", "grad", "requires_grad", "op", "parents", "_backward", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(value, dtype=dtype)
        if arr.dtype.kind not in "f":
            arr = arr.astype(np.float64)
        self.value = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op: str | None = None
        self.parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def is_leaf(self) -> bool:
        return self.op is None

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self) -> str:
        tag = self.op or ("param" if self.requires_grad else "const")
        label = f" {self.name}" if self.name else ""
        return f"Tensor<{tag}{label} shape={self.shape}>"

    # operator sugar for the common cases
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(value: np.ndarray, op: str, parents: tuple[Tensor, ...], grad_fn) -> Tensor:
    out = Tensor(value)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.op = op
        out.parents = parents
        out._backward = grad_fn
    else:
        out.op = op
    return out


# ---------------------------------------------------------------------------
# ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` with ``b`` 2-D; ``a`` may carry leading batch axes."""
    if b.value.ndim != 2 or a.value.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value

    def grad_fn(g):
        ga = g @ bv.T
        a2 = av.reshape(-1, av.shape[-1]) if av.ndim > 1 else av[None, :]
        g2 = g.reshape(-1, g.shape[-1]) if g.ndim > 1 else g[None, :]
        gb = a2.T @ g2
        return ga, gb

    return _make(av @ bv, "matmul", (a, b), grad_fn)


def transpose(a: Tensor) -> Tensor:
    if a.value.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got {a.shape}")
    return _make(a.value.T, "transpose", (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    av = a.value
    try:
        out = av.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from None
    return _make(out, "reshape", (a,), lambda g: (g.reshape(av.shape),))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum. ``b`` may be a bias over the last axis of ``a``."""
    av, bv = a.value, b.value
    if av.shape == bv.shape:
        return _make(av + bv, "add", (a, b), lambda g: (g, g))
    if bv.ndim == 1 and av.ndim >= 1 and av.shape[-1] == bv.shape[0]:
        def grad_fn(g):
            return g, g.reshape(-1, g.shape[-1]).sum(axis=0)

        return _make(av + bv, "add", (a, b), grad_fn)
    raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not conform")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product of equal-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")
    av, bv = a.value, b.value
    return _make(av * bv, "mul", (a, b), lambda g: (g * bv, g * av))


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.value * c, "scale", (a,), lambda g: (g * c,))


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along the feature axis (default last)."""
    if not xs:
        raise ShapeError("concat: no inputs")
    vals = [x.value for x in xs]
    ref = list(vals[0].shape)
    ax = axis % len(ref)
    for v in vals[1:]:
        other = list(v.shape)
        if len(other) != len(ref) or any(i != ax and other[i] != ref[i] for i in range(len(ref))):
            raise ShapeError(f"concat: shapes {tuple(ref)} and {tuple(other)} disagree off axis {axis}")
    sizes = [v.shape[ax] for v in vals]
    bounds = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make(np.concatenate(vals, axis=ax), "concat", tuple(xs), grad_fn)


def slice_last(a: Tensor, start: int, stop: int) -> Tensor:
    """``a[..., start:stop]``."""
    if not 0 <= start < stop <= a.shape[-1]:
        raise ShapeError(f"slice_last: [{start}:{stop}] out of range for {a.shape}")
    av = a.value

    def grad_fn(g):
        full = np.zeros_like(av)
        full[..., start:stop] = g
        return (full,)

    return _make(av[..., start:stop], "slice_last", (a,), grad_fn)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Column block ``a[:, start:stop]`` of a matrix."""
    if a.value.ndim != 2:
        raise ShapeError(f"slice_cols: expected a matrix, got {a.shape}")
    return slice_last(a, start, stop)


def select_time(a: Tensor, t: int) -> Tensor:
    """``a[:, t]`` for a (batch, time, ...) tensor."""
    if a.value.ndim < 2 or not 0 <= t < a.shape[1]:
        raise ShapeError(f"select_time: index {t} invalid for {a.shape}")
    av = a.value

    def grad_fn(g):
        full = np.zeros_like(av)
        full[:, t] = g
        return (full,)

    return _make(av[:, t], "select_time", (a,), grad_fn)


def stack_time(xs: Sequence[Tensor]) -> Tensor:
    """Stack (batch, ...) tensors into (batch, time, ...)."""
    if not xs:
        raise ShapeError("stack_time: no inputs")
    shape = xs[0].shape
    for x in xs:
        if x.shape != shape:
            raise ShapeError(f"stack_time: shapes {shape} and {x.shape} differ")
    n = len(xs)
    return _make(
        np.stack([x.value for x in xs], axis=1),
        "stack_time",
        tuple(xs),
        lambda g: tuple(g[:, i] for i in range(n)),
    )


def gather_time(a: Tensor, index: np.ndarray) -> Tensor:
    """Per-row time gather: ``out[b, t] = a[b, index[b, t]]``."""
    index = np.asarray(index)
    if a.value.ndim < 2 or index.shape != a.shape[:2]:
        raise ShapeError(f"gather_time: index {index.shape} does not match {a.shape}")
    av = a.value
    rows = np.arange(av.shape[0])[:, None]

    def grad_fn(g):
        full = np.zeros_like(av)
        np.add.at(full, (rows, index), g)
        return (full,)

    return _make(av[rows, index], "gather_time", (a,), grad_fn)


def sigmoid(a: Tensor) -> Tensor:
    # split form avoids overflow in exp for large |x|
    x = a.value
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make(out, "sigmoid", (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)
    return _make(out, "tanh", (a,), lambda g: (g * (1.0 - out * out),))


def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, max-shifted."""
    p = _softmax(a.value)

    def grad_fn(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _make(p, "softmax", (a,), grad_fn)


def log_softmax(a: Tensor) -> Tensor:
    x = a.value
    z = x - x.max(axis=-1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    def grad_fn(g):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return _make(out, "log_softmax", (a,), grad_fn)


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]``; ids may have any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.value.ndim != 2:
        raise ShapeError(f"embedding: table must be 2-D, got {table.shape}")
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        bad = ids[(ids < 0) | (ids >= vocab)].ravel()[0]
        raise IndexError(f"embedding: id {int(bad)} out of range for vocabulary of {vocab}")
    tv = table.value

    def grad_fn(g):
        full = np.zeros_like(tv)
        np.add.at(full, ids.ravel(), g.reshape(-1, tv.shape[1]))
        return (full,)

    return _make(tv[ids], "embedding", (table,), grad_fn)


def nll(logits: Tensor, targets, weights=None) -> Tensor:
    """Weighted negative log-softmax loss summed over rows.

    ``logits`` is (rows, classes); returns shape (1,) holding
    ``-sum_r w_r * log softmax(logits_r)[target_r]``.
    """
    targets = np.asarray(targets, dtype=np.int64)
    x = logits.value
    if x.ndim != 2 or targets.shape != (x.shape[0],):
        raise ShapeError(f"nll: logits {x.shape} vs targets {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= x.shape[1]):
        raise IndexError(f"nll: target id out of range for {x.shape[1]} classes")
    w = np.ones(x.shape[0], dtype=x.dtype) if weights is None else np.asarray(weights, dtype=x.dtype)
    z = x - x.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    rows = np.arange(x.shape[0])
    picked = z[rows, targets] - lse
    loss = np.array([-(w * picked).sum()], dtype=x.dtype)

    def grad_fn(g):
        p = np.exp(z - lse[:, None])
        p[rows, targets] -= 1.0
        return (p * (w * g[0])[:, None],)

    return _make(loss, "nll", (logits,), grad_fn)


def bilinear_scores(keys: Tensor, query: Tensor) -> Tensor:
    """``out[b, i] = keys[b, i] . query[b]`` for keys (B, n, D), query (B, D)."""
    kv, qv = keys.value, query.value
    if kv.ndim != 3 or qv.ndim != 2 or kv.shape[0] != qv.shape[0] or kv.shape[2] != qv.shape[1]:
        raise ShapeError(f"bilinear_scores: keys {kv.shape} vs query {qv.shape}")

    def grad_fn(g):
        return g[:, :, None] * qv[:, None, :], np.einsum("bn,bnd->bd", g, kv)

    return _make(np.einsum("bnd,bd->bn", kv, qv), "bilinear_scores", (keys, query), grad_fn)


def weighted_sum(weights: Tensor, values: Tensor) -> Tensor:
    """``out[b] = sum_i weights[b, i] * values[b, i]``."""
    wv, vv = weights.value, values.value
    if vv.ndim != 3 or wv.shape != vv.shape[:2]:
        raise ShapeError(f"weighted_sum: weights {wv.shape} vs values {vv.shape}")

    def grad_fn(g):
        return np.einsum("bd,bnd->bn", g, vv), wv[:, :, None] * g[:, None, :]

    return _make(np.einsum("bn,bnd->bd", wv, vv), "weighted_sum", (weights, values), grad_fn)


def total(a: Tensor) -> Tensor:
    """Sum of all entries, shape (1,)."""
    av = a.value
    return _make(np.array([av.sum()], dtype=av.dtype), "sum", (a,), lambda g: (np.full_like(av, g[0]),))


OPS: dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "transpose": transpose,
    "reshape": reshape,
    "add": add,
    "mul": mul,
    "scale": scale,
    "concat": concat,
    "slice_last": slice_last,
    "slice_cols": slice_cols,
    "select_time": select_time,
    "stack_time": stack_time,
    "gather_time": gather_time,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "softmax": softmax,
    "log_softmax": log_softmax,
    "embedding": embedding,
    "nll": nll,
    "bilinear_scores": bilinear_scores,
    "weighted_sum": weighted_sum,
    "sum": total,
}

_LIST_OPS = {"concat", "stack_time"}


def apply(op: str, inputs: Sequence[Tensor], **kwargs) -> Tensor:
    """Dispatch ``op`` by tag over ``inputs``."""
    try:
        fn = OPS[op]
    except KeyError:
        raise UnknownOpError(f"unknown op {op!r}") from None
    if op in _LIST_OPS:
        return fn(list(inputs), **kwargs)
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# backward


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    Leaves must have been zeroed (``zero_grad``) since their last backward;
    stale gradients raise rather than silently summing across calls.
    """
    if loss.shape != (1,):
        raise ShapeError(f"backward: loss must have shape (1,), got {loss.shape}")
    if not loss.requires_grad:
        return {}
    order = _topo_order(loss)
    leaves = [n for n in order if n.is_leaf]
    stale = [n for n in leaves if n.grad is not None]
    if stale:
        raise RuntimeError(
            f"backward: {len(stale)} leaf tensor(s) still hold gradients; call zero_grad first"
        )
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    owned: set[int] = set()  # buffers created here, safe to add into in place
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key not in grads:
                grads[key] = pg
            elif key in owned:
                grads[key] += pg
            else:
                grads[key] = grads[key] + pg
                owned.add(key)
    return {n: n.grad for n in leaves if n.grad is not None}


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def finite_difference_check(
    f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5
) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    ``f`` rebuilds the graph from ``params`` on every call and must be
    deterministic. The gap per coordinate is
    ``|analytic - numeric| / max(1e-8, |analytic|)``.
    """
    zero_grad(params)
    touched = backward(f())
    analytic = [np.zeros_like(p.value) if p.grad is None else p.grad.copy() for p in params]
    zero_grad(touched)
    worst = 0.0
    with no_grad():
        for p, a in zip(params, analytic):
            if not p.value.flags.c_contiguous:
                p.value = np.ascontiguousarray(p.value)
            flat = p.value.reshape(-1)
            a_flat = a.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + eps
                up = float(f().value[0])
                flat[k] = orig - eps
                down = float(f().value[0])
                flat[k] = orig
                numeric = (up - down) / (2 * eps)
                err = abs(a_flat[k] - numeric) / max(1e-8, abs(a_flat[k]))
                worst = max(worst, err)
    return worst
