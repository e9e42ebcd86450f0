"""Tape-based reverse-mode automatic differentiation over numpy arrays.

Only the operations the span scorers need are provided.  Every operation
checks operand extents up front, raises :class:`NumericError` on non-finite
output, and, when a :class:`Tape` is active and any input requires a
gradient, records a closure computing exact analytic input gradients.

Without an active tape nothing is recorded, which is how inference runs.

Gradient semantics: leaf tensors (parameters) *accumulate* over repeated
``backward`` calls until :meth:`Tensor.zero_grad` is called; intermediate
tensors are reset at the start of every backward pass.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ContractError, DimensionError, NumericError

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "parameter",
    "constant",
    "matmul",
    "affine",
    "concat",
    "add",
    "sub",
    "mul",
    "scale",
    "sigmoid",
    "tanh",
    "relu",
    "softmax",
    "dropout",
    "embedding_lookup",
    "index",
    "transpose",
    "reshape",
    "sum",
    "max",
    "sigmoid_cross_entropy",
    "softmax_cross_entropy",
    "lstm_scan",
]

_TAPES = []


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "is_leaf")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.array(data, dtype=dtype if dtype is not None else _float_dtype(data))
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.name = name
        self.is_leaf = True

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        if self.requires_grad:
            if self.grad is None:
                self.grad = np.zeros_like(self.data)
            else:
                self.grad[...] = 0.0

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

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
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None):
        return sum(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _float_dtype(data):
    dt = getattr(data, "dtype", None)
    if dt is not None and np.issubdtype(dt, np.floating):
        return dt
    return np.float64


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


def constant(data, dtype=None):
    return Tensor(data, requires_grad=False, dtype=dtype)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


class _Node:
    __slots__ = ("kind", "out", "inputs", "backward")

    def __init__(self, kind, out, inputs, backward):
        self.kind = kind
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of executed operations.

    Use as a context manager; operations executed inside the block are
    appended in execution order, so the list is topologically sorted.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, kind, out, inputs, backward_fn):
        self.nodes.append(_Node(kind, out, inputs, backward_fn))

    def clear(self):
        self.nodes = []

    def backward(self, loss):
        if not isinstance(loss, Tensor) or loss.data.size != 1:
            shape = getattr(loss, "shape", None)
            raise ContractError(f"backward needs a scalar loss, got shape {shape}")
        for node in self.nodes:
            node.out.grad = None
        if not loss.requires_grad or loss.is_leaf:
            if loss.is_leaf and loss.requires_grad:
                loss.grad = loss.grad + np.ones_like(loss.data)
            return
        loss.grad = np.ones_like(loss.data)
        leaves = {}
        for node in reversed(self.nodes):
            g = node.out.grad
            if g is None:
                continue
            grads = node.backward(g)
            for t, gi in zip(node.inputs, grads):
                if gi is None or not t.requires_grad:
                    continue
                if t.grad is None:
                    t.grad = np.array(gi, dtype=t.data.dtype)
                else:
                    t.grad += gi
                if t.is_leaf:
                    leaves[id(t)] = t
        for t in leaves.values():
            if not np.isfinite(t.grad).all():
                raise NumericError(f"non-finite gradient for {t!r}")


def backward(tape, loss):
    """Populate ``grad`` of every tensor on ``tape`` that requires one."""
    tape.backward(loss)


def _emit(kind, data, inputs, backward_fn):
    if not np.isfinite(data).all():
        raise NumericError(f"{kind}: non-finite output")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.is_leaf = False
    tape = _TAPES[-1] if _TAPES else None
    out.requires_grad = tape is not None and any(t.requires_grad for t in inputs)
    if out.requires_grad:
        tape.record(kind, out, inputs, backward_fn)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(op, "operands do not broadcast", (a.shape, b.shape)) from None


# -- linear algebra ---------------------------------------------------------


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError("matmul", "expected (m, k) @ (k, n)", (a.shape, b.shape))
    out = a.data @ b.data

    def bw(g):
        return (g @ b.data.T if a.requires_grad else None,
                a.data.T @ g if b.requires_grad else None)

    return _emit("matmul", out, (a, b), bw)


def affine(x, weight, bias):
    """``x @ weight + bias`` with ``bias`` broadcast over rows."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if (x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[0]
            or bias.shape != (weight.shape[1],)):
        raise DimensionError("affine", "expected (m, k), (k, n), (n,)",
                             (x.shape, weight.shape, bias.shape))
    out = x.data @ weight.data + bias.data

    def bw(g):
        return (g @ weight.data.T if x.requires_grad else None,
                x.data.T @ g if weight.requires_grad else None,
                g.sum(axis=0) if bias.requires_grad else None)

    return _emit("affine", out, (x, weight, bias), bw)


def transpose(x):
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError("transpose", "expected a matrix", (x.shape,))
    return _emit("transpose", x.data.T, (x,), lambda g: (g.T,))


def reshape(x, shape):
    x = _as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError("reshape", f"cannot reshape to {shape}", (x.shape,)) from None
    return _emit("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def concat(tensors, axis=-1):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat", "no operands")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError("concat", f"extents disagree off axis {axis}",
                             [t.shape for t in tensors]) from None
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def bw(g):
        grads = []
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[ax] = slice(lo, hi)
                grads.append(g[tuple(sl)])
            else:
                grads.append(None)
        return grads

    return _emit("concat", out, tuple(tensors), bw)


# -- elementwise ------------------------------------------------------------


def add(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _broadcast_shape("add", a, b)
    out = a.data + b.data

    def bw(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(g, b.shape) if b.requires_grad else None)

    return _emit("add", out, (a, b), bw)


def sub(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _broadcast_shape("sub", a, b)
    out = a.data - b.data

    def bw(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(-g, b.shape) if b.requires_grad else None)

    return _emit("sub", out, (a, b), bw)


def mul(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _broadcast_shape("mul", a, b)
    out = a.data * b.data

    def bw(g):
        return (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(g * a.data, b.shape) if b.requires_grad else None)

    return _emit("mul", out, (a, b), bw)


def scale(x, factor):
    x = _as_tensor(x)
    return _emit("scale", x.data * factor, (x,), lambda g: (g * factor,))


def _expit(z):
    # 0.5 * (1 + tanh(z / 2)) never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sigmoid(x):
    x = _as_tensor(x)
    s = _expit(x.data)
    return _emit("sigmoid", s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x):
    x = _as_tensor(x)
    t = np.tanh(x.data)
    return _emit("tanh", t, (x,), lambda g: (g * (1.0 - t * t),))


def relu(x):
    x = _as_tensor(x)
    pos = x.data > 0
    return _emit("relu", np.where(pos, x.data, 0.0).astype(x.dtype), (x,),
                 lambda g: (g * pos,))


def softmax(x, axis=-1):
    """Softmax along ``axis`` (rows for a matrix), max-shifted."""
    x = _as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", s, (x,), bw)


def dropout(x, keep_prob, training, rng=None, mask_shape=None):
    """Inverted dropout.  Identity at eval time or when ``keep_prob >= 1``.

    ``mask_shape`` lets callers share one mask across a broadcast axis.
    """
    x = _as_tensor(x)
    if not 0.0 < keep_prob <= 1.0:
        raise ContractError(f"keep_prob must lie in (0, 1], got {keep_prob}")
    if not training or keep_prob >= 1.0:
        return x
    if rng is None:
        raise ContractError("dropout in training mode needs an rng")
    shape = x.shape if mask_shape is None else mask_shape
    mask = (rng.random(shape) < keep_prob).astype(x.dtype) / keep_prob
    return mul(x, Tensor(mask, dtype=x.dtype))


# -- indexing ---------------------------------------------------------------


def embedding_lookup(table, ids):
    """Gather rows of ``table``; id ``-1`` yields a zero row (padding)."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise DimensionError("embedding_lookup", "table must be a matrix", (table.shape,))
    n = table.shape[0]
    if ids.size and (ids.max() >= n or ids.min() < -1):
        raise DimensionError("embedding_lookup", f"ids outside [-1, {n})", (table.shape, ids.shape))
    pad = ids < 0
    safe = np.where(pad, 0, ids)
    out = table.data[safe]
    has_pad = bool(pad.any())
    if has_pad:
        out[pad] = 0.0

    def bw(g):
        full = np.zeros_like(table.data)
        if has_pad:
            keep = ~pad
            np.add.at(full, safe[keep], g[keep])
        else:
            np.add.at(full, safe.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return _emit("embedding_lookup", out, (table,), bw)


def _is_basic_index(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, np.integer)) or i is None or i is Ellipsis for i in items)


def index(x, idx):
    """``x[idx]`` for basic slices or numpy advanced indices."""
    x = _as_tensor(x)
    try:
        out = x.data[idx]
    except IndexError as err:
        raise DimensionError("index", str(err), (x.shape,)) from None
    basic = _is_basic_index(idx)
    out = np.array(out, copy=True) if basic else out

    def bw(g):
        full = np.zeros_like(x.data)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _emit("index", out, (x,), bw)


# -- reductions -------------------------------------------------------------


def sum(x, axis=None):  # noqa: A001 - mirrors numpy
    x = _as_tensor(x)
    out = np.asarray(x.data.sum(axis=axis))

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return _emit("sum", out, (x,), bw)


def max(x, axis):  # noqa: A001
    """Max along one axis; gradient goes to the first maximal element."""
    x = _as_tensor(x)
    arg = x.data.argmax(axis=axis)
    out = np.take_along_axis(x.data, np.expand_dims(arg, axis), axis=axis).squeeze(axis)

    def bw(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _emit("max", out, (x,), bw)


# -- losses -----------------------------------------------------------------


def sigmoid_cross_entropy(logits, targets):
    """Summed binary cross entropy computed from logits.

    Uses ``softplus(r) - y * r`` which equals
    ``-(y log p + (1 - y) log(1 - p))`` with ``p = sigmoid(r)``.
    """
    logits = _as_tensor(logits)
    y = np.asarray(targets, dtype=logits.dtype)
    if y.shape != logits.shape:
        raise ContractError(f"{y.shape[0] if y.ndim else y.size} labels for "
                            f"{logits.shape} logits")
    r = logits.data
    out = np.asarray((np.logaddexp(0.0, r) - y * r).sum(), dtype=logits.dtype)
    return _emit("sigmoid_cross_entropy", out, (logits,), lambda g: (g * (_expit(r) - y),))


def softmax_cross_entropy(logits, targets):
    """Summed categorical cross entropy of integer ``targets`` given row logits."""
    logits = _as_tensor(logits)
    y = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or y.shape != (logits.shape[0],):
        raise ContractError(f"targets {y.shape} do not align with logits {logits.shape}")
    if y.size and (y.min() < 0 or y.max() >= logits.shape[1]):
        raise ContractError("target class outside [0, C)")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(y.size)
    out = np.asarray((log_norm - z[rows, y]).sum(), dtype=logits.dtype)

    def bw(g):
        p = np.exp(z - log_norm[:, None])
        p[rows, y] -= 1.0
        return (g * p,)

    return _emit("softmax_cross_entropy", out, (logits,), bw)


# -- recurrence -------------------------------------------------------------


def lstm_scan(projected, w_hidden, steps):
    """Run an LSTM over padded sequences as a single tape operation.

    ``projected`` is the ``(T, 4H)`` input projection (bias included) with
    gate blocks ordered input, forget, output, cell.  ``steps[:, t]`` is the
    row of ``projected`` fed to each of the S sequences at time t; ``-1``
    pads (the sequence is finished and its later states are never read).
    Returns hidden states stacked as ``(L * S, H)``, row ``t * S + s``.
    Backward is exact backpropagation through time.
    """
    projected, w_hidden = _as_tensor(projected), _as_tensor(w_hidden)
    steps = np.asarray(steps, dtype=np.int64)
    h_dim = w_hidden.shape[0]
    if (projected.data.ndim != 2 or projected.shape[1] != 4 * h_dim
            or w_hidden.shape != (h_dim, 4 * h_dim) or steps.ndim != 2):
        raise DimensionError("lstm_scan", "expected (T, 4H), (H, 4H), (S, L)",
                             (projected.shape, w_hidden.shape, steps.shape))
    n_seq, length = steps.shape
    dt = projected.dtype
    pad = steps < 0
    safe = np.where(pad, 0, steps)
    p, wh = projected.data, w_hidden.data
    gates = np.empty((length, n_seq, 4 * h_dim), dtype=dt)
    cells = np.empty((length, n_seq, h_dim), dtype=dt)
    hiddens = np.empty((length, n_seq, h_dim), dtype=dt)
    h = np.zeros((n_seq, h_dim), dtype=dt)
    c = np.zeros((n_seq, h_dim), dtype=dt)
    for t in range(length):
        z = p[safe[:, t]]
        z[pad[:, t]] = 0.0
        if t:
            z += h @ wh
        g = gates[t]
        g[:, :3 * h_dim] = _expit(z[:, :3 * h_dim])
        g[:, 3 * h_dim:] = np.tanh(z[:, 3 * h_dim:])
        i, f, o, cand = (g[:, k * h_dim:(k + 1) * h_dim] for k in range(4))
        c = i * cand if t == 0 else f * c + i * cand
        cells[t] = c
        h = o * np.tanh(c)
        hiddens[t] = h
    out = hiddens.reshape(length * n_seq, h_dim)

    def bw(g_out):
        g_out = g_out.reshape(length, n_seq, h_dim)
        d_proj = np.zeros_like(p) if projected.requires_grad else None
        d_wh = np.zeros_like(wh)
        dh_next = np.zeros((n_seq, h_dim), dtype=dt)
        dc_next = np.zeros((n_seq, h_dim), dtype=dt)
        dz = np.empty((n_seq, 4 * h_dim), dtype=dt)
        for t in range(length - 1, -1, -1):
            g = gates[t]
            i, f, o, cand = (g[:, k * h_dim:(k + 1) * h_dim] for k in range(4))
            tc = np.tanh(cells[t])
            dh = g_out[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz[:, :h_dim] = dc * cand * i * (1.0 - i)
            dz[:, h_dim:2 * h_dim] = (dc * cells[t - 1] * f * (1.0 - f)) if t else 0.0
            dz[:, 2 * h_dim:3 * h_dim] = dh * tc * o * (1.0 - o)
            dz[:, 3 * h_dim:] = dc * i * (1.0 - cand * cand)
            dc_next = dc * f
            if t:
                d_wh += hiddens[t - 1].T @ dz
                dh_next = dz @ wh.T
            if d_proj is not None:
                keep = ~pad[:, t]
                np.add.at(d_proj, safe[keep, t], dz[keep])
        return d_proj, (d_wh if w_hidden.requires_grad else None)

    return _emit("lstm_scan", out, (projected, w_hidden), bw)
