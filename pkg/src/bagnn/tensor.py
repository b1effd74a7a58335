"""Dense float64 tensors with a recorded tape for reverse-mode gradients.

Every differentiable op appends a record (inputs, output, backward rule) to
the active :class:`Tape`.  :func:`backward` walks the records of the loss's
tape in reverse recording order, accumulating ``d loss / d leaf`` into the
``grad`` buffer of every leaf created with ``requires_grad=True``.

Only the operators the attention model needs are provided, and no
broadcasting happens beyond scalar * tensor.  Besides the small vector ops
(``matmul``, ``concat_rows``, ``masked_softmax``...) there are batched
gather / segment ops so that a layer over thousands of nodes is a handful of
numpy calls instead of a Python loop per node.
"""

from __future__ import annotations

import contextlib
import os
from typing import Callable, Sequence

import numpy as np

DEBUG = os.environ.get("BAGNN_DEBUG", "") not in ("", "0")


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def set_debug(flag: bool) -> None:
    """Toggle the NaN/Inf check run after every op."""
    global DEBUG
    DEBUG = bool(flag)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "tape_node", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.tape_node = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.tape_node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # convenience operators
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# tape


class _Record:
    __slots__ = ("inputs", "output", "backward", "op")

    def __init__(self, inputs, output, backward, op):
        self.inputs = inputs
        self.output = output
        self.backward = backward
        self.op = op


class Tape:
    """Ordered log of differentiable operations.

    Use as a context manager to scope recording; outside any ``with Tape()``
    block ops record onto a process-wide default tape.
    """

    def __init__(self):
        self.records: list[_Record] = []

    def __len__(self):
        return len(self.records)

    def reset(self):
        for rec in self.records:
            rec.output.tape_node = None
        self.records.clear()

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False


_DEFAULT_TAPE = Tape()
_TAPE_STACK: list[Tape] = []
_NO_GRAD = [0]


def current_tape() -> Tape:
    return _TAPE_STACK[-1] if _TAPE_STACK else _DEFAULT_TAPE


@contextlib.contextmanager
def no_grad():
    """Run ops without recording them."""
    _NO_GRAD[0] += 1
    try:
        yield
    finally:
        _NO_GRAD[0] -= 1


def _finish(out: np.ndarray, inputs: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    if DEBUG and not np.all(np.isfinite(out)):
        raise NonFiniteError(f"non-finite value produced by {op}")
    t = Tensor.__new__(Tensor)
    t.data = out
    t.grad = None
    t.name = None
    t.tape_node = None
    t.requires_grad = False
    if not _NO_GRAD[0] and any(x.requires_grad for x in inputs):
        t.requires_grad = True
        tape = current_tape()
        rec = _Record(tuple(inputs), t, backward, op)
        tape.records.append(rec)
        t.tape_node = (tape, len(tape.records) - 1)
    return t


def backward(loss: Tensor) -> None:
    """Accumulate ``d loss / d leaf`` into every reachable leaf's ``grad``.

    Calling twice without zeroing accumulates (grads double).
    """
    if loss.data.shape not in ((), (1,)):
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.tape_node is None:
        if loss.requires_grad:
            loss.grad += 1.0
            return
        raise ValueError("loss is not on a tape (no input requires grad)")
    tape, end = loss.tape_node
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for rec in reversed(tape.records[: end + 1]):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        in_grads = rec.backward(g)
        for x, gx in zip(rec.inputs, in_grads):
            if gx is None or not x.requires_grad:
                continue
            if x.tape_node is None:
                x.grad += gx
            else:
                prev = grads.get(id(x))
                grads[id(x)] = gx if prev is None else prev + gx


# ---------------------------------------------------------------------------
# elementary ops


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 2-D @ 2-D, 2-D @ 1-D and 1-D @ 2-D operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or (a.ndim == 1 and b.ndim == 1):
        raise ShapeError(f"matmul: unsupported shapes {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    A, B = a.data, b.data

    def bw(g):
        if A.ndim == 2 and B.ndim == 2:
            return g @ B.T, A.T @ g
        if A.ndim == 2:  # matrix @ vector
            return np.outer(g, B), A.T @ g
        return B @ g, np.outer(A, g)  # vector @ matrix

    return _finish(A @ B, (a, b), bw, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")
    return _finish(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "sub")
    return _finish(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of equal-shape tensors."""
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")
    A, B = a.data, b.data
    return _finish(A * B, (a, b), lambda g: (g * B, g * A), "mul")


def scale(a: Tensor, s: float) -> Tensor:
    a = as_tensor(a)
    s = float(s)
    return _finish(a.data * s, (a,), lambda g: (g * s,), "scale")


def concat_rows(*parts: Tensor) -> Tensor:
    """Concatenate along the first axis (for vectors: plain concatenation)."""
    if len(parts) == 1 and isinstance(parts[0], (list, tuple)):
        parts = tuple(parts[0])
    parts = tuple(as_tensor(p) for p in parts)
    if not parts:
        raise ShapeError("concat_rows: nothing to concatenate")
    tails = {p.shape[1:] for p in parts}
    if len(tails) != 1 or any(p.ndim == 0 for p in parts):
        raise ShapeError(f"concat_rows: incompatible shapes {[p.shape for p in parts]}")
    sizes = [p.shape[0] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=0))

    return _finish(np.concatenate([p.data for p in parts], axis=0), parts, bw, "concat_rows")


def sum_vectors(items: Sequence[Tensor]) -> Tensor:
    items = tuple(as_tensor(x) for x in items)
    if not items:
        raise ShapeError("sum_vectors: empty list")
    for x in items[1:]:
        _same_shape(items[0], x, "sum_vectors")
    out = np.sum([x.data for x in items], axis=0)
    return _finish(out, items, lambda g: tuple(g for _ in items), "sum_vectors")


def mean_vectors(items: Sequence[Tensor]) -> Tensor:
    items = tuple(as_tensor(x) for x in items)
    if not items:
        raise ShapeError("mean_vectors: empty list")
    for x in items[1:]:
        _same_shape(items[0], x, "mean_vectors")
    n = len(items)
    out = np.sum([x.data for x in items], axis=0) / n
    return _finish(out, items, lambda g: tuple(g / n for _ in items), "mean_vectors")


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data >= 0  # subgradient 1 at exactly 0
    out = np.where(mask, x.data, 0.0)
    return _finish(out, (x,), lambda g: (np.where(mask, g, 0.0),), "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    mask = x.data >= 0
    out = np.where(mask, x.data, slope * x.data)
    return _finish(out, (x,), lambda g: (np.where(mask, g, slope * g),), "leaky_relu")


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _finish(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    x = as_tensor(x)
    X = x.data
    return _finish(np.log(X), (x,), lambda g: (g / X,), "log")


def softplus(x: Tensor) -> Tensor:
    """``log(1 + exp(x))`` computed without overflow."""
    x = as_tensor(x)
    X = x.data
    out = np.logaddexp(0.0, X)

    def bw(g):
        return (g * _sigmoid(X),)

    return _finish(out, (x,), bw, "softplus")


def _sigmoid(X):
    return np.exp(-np.logaddexp(0.0, -X))


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return _finish(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def total(x: Tensor) -> Tensor:
    """Sum of all entries, as a scalar."""
    x = as_tensor(x)
    shape = x.shape
    return _finish(np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),), "total")


def mean(x: Tensor) -> Tensor:
    x = as_tensor(x)
    shape, n = x.shape, x.size
    if n == 0:
        raise ShapeError("mean of an empty tensor")
    return _finish(
        np.asarray(x.data.mean()), (x,), lambda g: (np.full(shape, float(g) / n),), "mean"
    )


def transpose(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"transpose needs a matrix, got {x.shape}")
    return _finish(x.data.T.copy(), (x,), lambda g: (g.T,), "transpose")


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    """Columns ``start:stop`` of a matrix (or entries of a vector)."""
    x = as_tensor(x)
    shape = x.shape

    def bw(g):
        res = np.zeros(shape)
        res[..., start:stop] = g
        return (res,)

    return _finish(x.data[..., start:stop].copy(), (x,), bw, "slice_cols")


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return _finish(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


# ---------------------------------------------------------------------------
# softmax family


def _stable_softmax(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - v.max())
    return e / e.sum()


def masked_softmax(logits: Tensor, active: Sequence[int]) -> Tensor:
    """Softmax over the ``active`` entries of a vector; zeros elsewhere."""
    logits = as_tensor(logits)
    if logits.ndim != 1:
        raise ShapeError(f"masked_softmax needs a vector, got {logits.shape}")
    idx = np.unique(np.asarray(list(active), dtype=np.int64))
    if idx.size == 0:
        raise ValueError("masked_softmax: empty active set")
    if idx[0] < 0 or idx[-1] >= logits.shape[0]:
        raise IndexError("masked_softmax: active index out of range")
    out = np.zeros_like(logits.data)
    p = _stable_softmax(logits.data[idx])
    out[idx] = p

    def bw(g):
        gi = g[idx]
        res = np.zeros_like(g)
        res[idx] = p * (gi - np.dot(p, gi))
        return (res,)

    return _finish(out, (logits,), bw, "masked_softmax")


def softmax_rows(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"softmax_rows needs a matrix, got {x.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return _finish(p, (x,), bw, "softmax_rows")


def log_softmax_rows(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"log_softmax_rows needs a matrix, got {x.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def bw(g):
        return (g - p * g.sum(axis=1, keepdims=True),)

    return _finish(out, (x,), bw, "log_softmax_rows")


def segment_softmax(logits: Tensor, segment: np.ndarray, num_segments: int) -> Tensor:
    """Softmax of a vector within groups of equal ``segment`` id.

    Each non-empty group sums to one; max-subtraction is per group.
    """
    logits = as_tensor(logits)
    seg = np.asarray(segment, dtype=np.int64)
    if logits.ndim != 1 or seg.shape != logits.shape:
        raise ShapeError(f"segment_softmax: logits {logits.shape} vs segment {seg.shape}")
    x = logits.data
    mx = np.full(num_segments, -np.inf)
    np.maximum.at(mx, seg, x)
    e = np.exp(x - mx[seg])
    den = np.zeros(num_segments)
    np.add.at(den, seg, e)
    p = e / den[seg]

    def bw(g):
        dots = np.zeros(num_segments)
        np.add.at(dots, seg, g * p)
        return (p * (g - dots[seg]),)

    return _finish(p, (logits,), bw, "segment_softmax")


# ---------------------------------------------------------------------------
# gather / scatter


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """``x[index]`` along the first axis."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.int64)
    shape = x.shape

    def bw(g):
        res = np.zeros(shape)
        np.add.at(res, idx, g)
        return (res,)

    return _finish(x.data[idx], (x,), bw, "gather_rows")


def take2d(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Vector of ``x[rows[k], cols[k]]``."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"take2d needs a matrix, got {x.shape}")
    r = np.asarray(rows, dtype=np.int64)
    c = np.asarray(cols, dtype=np.int64)
    shape = x.shape

    def bw(g):
        res = np.zeros(shape)
        np.add.at(res, (r, c), g)
        return (res,)

    return _finish(x.data[r, c], (x,), bw, "take2d")


def segment_sum(x: Tensor, segment: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``x`` into ``num_segments`` buckets given by ``segment``."""
    x = as_tensor(x)
    seg = np.asarray(segment, dtype=np.int64)
    if seg.shape != x.shape[:1]:
        raise ShapeError(f"segment_sum: x {x.shape} vs segment {seg.shape}")
    out = np.zeros((num_segments,) + x.shape[1:])
    np.add.at(out, seg, x.data)
    return _finish(out, (x,), lambda g: (g[seg],), "segment_sum")


def row_scale(x: Tensor, w: Tensor) -> Tensor:
    """Scale row ``k`` of matrix ``x`` by ``w[k]``."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 2 or w.shape != x.shape[:1]:
        raise ShapeError(f"row_scale: x {x.shape} vs w {w.shape}")
    X, W = x.data, w.data
    return _finish(
        X * W[:, None], (x, w), lambda g: (g * W[:, None], (g * X).sum(axis=1)), "row_scale"
    )


def rowwise_dot(a: Tensor, b: Tensor) -> Tensor:
    """Vector of dot products between corresponding rows."""
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "rowwise_dot")
    if a.ndim != 2:
        raise ShapeError(f"rowwise_dot needs matrices, got {a.shape}")
    A, B = a.data, b.data
    return _finish(
        np.einsum("ij,ij->i", A, B),
        (a, b),
        lambda g: (g[:, None] * B, g[:, None] * A),
        "rowwise_dot",
    )


def _chunked_dot(A, ia, B, ib, chunk=1 << 16) -> np.ndarray:
    out = np.empty(len(ia))
    for s in range(0, len(ia), chunk):
        out[s : s + chunk] = np.einsum("ij,ij->i", A[ia[s : s + chunk]], B[ib[s : s + chunk]])
    return out


def gather_dot(a: Tensor, ia: np.ndarray, b: Tensor, ib: np.ndarray) -> Tensor:
    """Vector of ``a[ia[k]] . b[ib[k]]`` without keeping the gathered rows.

    Same value as ``rowwise_dot(gather_rows(a, ia), gather_rows(b, ib))``.
    """
    a, b = as_tensor(a), as_tensor(b)
    ia = np.asarray(ia, dtype=np.int64)
    ib = np.asarray(ib, dtype=np.int64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1] or ia.shape != ib.shape:
        raise ShapeError(f"gather_dot: a {a.shape}[{ia.shape}], b {b.shape}[{ib.shape}]")
    A, B = a.data, b.data

    def bw(g):
        da, db = np.zeros_like(A), np.zeros_like(B)
        np.add.at(da, ia, g[:, None] * B[ib])
        np.add.at(db, ib, g[:, None] * A[ia])
        return da, db

    return _finish(_chunked_dot(A, ia, B, ib), (a, b), bw, "gather_dot")


def gather_weighted_sum(w: Tensor, x: Tensor, ix: np.ndarray, segment: np.ndarray, num_segments: int) -> Tensor:
    """``out[s] = sum over k with segment[k] == s of w[k] * x[ix[k]]``.

    Same value as ``segment_sum(row_scale(gather_rows(x, ix), w), segment, n)``
    without keeping the gathered rows.
    """
    w, x = as_tensor(w), as_tensor(x)
    ix = np.asarray(ix, dtype=np.int64)
    seg = np.asarray(segment, dtype=np.int64)
    if x.ndim != 2 or w.shape != ix.shape or seg.shape != ix.shape:
        raise ShapeError(f"gather_weighted_sum: w {w.shape}, x {x.shape}, ix {ix.shape}, segment {seg.shape}")
    W, X = w.data, x.data
    out = np.zeros((num_segments, X.shape[1]))
    np.add.at(out, seg, W[:, None] * X[ix])

    def bw(g):
        dx = np.zeros_like(X)
        np.add.at(dx, ix, W[:, None] * g[seg])
        return _chunked_dot(g, seg, X, ix), dx

    return _finish(out, (w, x), bw, "gather_weighted_sum")


def indexed_matvec(w: Tensor, index: np.ndarray, z: Tensor) -> Tensor:
    """Row ``k`` of the result is ``w[index[k]] @ z[k]``.

    ``w`` is a stack of matrices of shape ``(M, d_out, d_in)``; ``z`` is
    ``(n, d_in)``.  Used for relation-specific projections.
    """
    w, z = as_tensor(w), as_tensor(z)
    idx = np.asarray(index, dtype=np.int64)
    if w.ndim != 3 or z.ndim != 2 or z.shape[1] != w.shape[2] or idx.shape != z.shape[:1]:
        raise ShapeError(f"indexed_matvec: w {w.shape}, z {z.shape}, index {idx.shape}")
    W, Z = w.data, z.data
    out = np.zeros((Z.shape[0], W.shape[1]))
    groups = _groups(idx)
    for m, rows in groups:
        out[rows] = Z[rows] @ W[m].T

    def bw(g):
        dW = np.zeros_like(W)
        dZ = np.zeros_like(Z)
        for m, rows in groups:
            dW[m] = g[rows].T @ Z[rows]
            dZ[rows] = g[rows] @ W[m]
        return dW, dZ

    return _finish(out, (w, z), bw, "indexed_matvec")


def _groups(idx: np.ndarray):
    if idx.size == 0:
        return []
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    cuts = np.flatnonzero(np.diff(sorted_idx)) + 1
    return [(int(idx[part[0]]), part) for part in np.split(order, cuts)]


def row_norms(x: Tensor) -> Tensor:
    """Euclidean norm of each row; the gradient at a zero row is taken as 0."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"row_norms needs a matrix, got {x.shape}")
    X = x.data
    n = np.sqrt((X * X).sum(axis=1))

    def bw(g):
        safe = np.where(n > 0, n, 1.0)
        return (np.where(n[:, None] > 0, X * (g / safe)[:, None], 0.0),)

    return _finish(n, (x,), bw, "row_norms")
