"""Central finite-difference verification of analytic gradients."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as _ad
from .autodiff import Tape
from .exceptions import ContractError


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    max_abs_error: float
    checked: int
    passed: bool


def relative_error(analytic, numeric, floor):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps entries whose true gradient is ~0 from reporting
    round-off as a large relative error.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def roundoff_floor(loss_value, step, tolerance, safety=10.0):
    """Smallest gradient magnitude a central difference can resolve to ``tolerance``.

    Evaluating the loss carries absolute error ~ eps * |loss|, so the
    difference quotient carries ~ eps * |loss| / step; gradients below
    ``safety`` times that, divided by ``tolerance``, are compared absolutely.
    """
    noise = safety * np.finfo(np.float64).eps * max(1.0, abs(loss_value)) / step
    return max(noise / tolerance, 1e-12)


def grad_check(loss_fn, params, tolerance=1e-4, step=1e-5, max_elements=None, seed=0,
               floor=None):
    """Compare tape gradients of ``loss_fn()`` with central differences.

    ``loss_fn`` must be deterministic (no dropout) and rebuild the loss
    from the current parameter values on every call.  When ``max_elements``
    is set, a seeded random subset of each parameter's entries is probed.
    ``floor`` defaults to :func:`roundoff_floor` of the loss.
    ``params`` may be a list or a ``{name: tensor}`` dict.
    Returns one :class:`GradCheckResult` per parameter.
    """
    if isinstance(params, dict):
        names, params = list(params), list(params.values())
    else:
        params = list(params)
        names = [p.name or f"param{i}" for i, p in enumerate(params)]
    for p in params:
        if p.dtype != np.float64:
            raise ContractError("grad_check needs 64-bit parameters")
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    if floor is None:
        floor = roundoff_floor(float(loss.data), step, tolerance)
    analytic = [p.grad.copy() for p in params]
    for p in params:
        p.zero_grad()

    rng = np.random.default_rng(seed)
    results = []
    for i, (p, grad) in enumerate(zip(params, analytic)):
        flat = p.data.reshape(-1)
        positions = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            positions = rng.choice(flat.size, size=max_elements, replace=False)
        numeric = np.empty(len(positions))
        for j, k in enumerate(positions):
            orig = flat[k]
            flat[k] = orig + step
            up = float(loss_fn().data)
            flat[k] = orig - step
            down = float(loss_fn().data)
            flat[k] = orig
            numeric[j] = (up - down) / (2.0 * step)
        a = grad.reshape(-1)[positions]
        rel = relative_error(a, numeric, floor)
        max_rel = float(rel.max()) if rel.size else 0.0
        max_abs = float(np.abs(a - numeric).max()) if rel.size else 0.0
        results.append(GradCheckResult(names[i], max_rel, max_abs,
                                       len(positions), max_rel <= tolerance))
    return results


TINY_ARCH = dict(max_width=4, word_dim=6, hash_dim=0, hash_buckets=50, char_cnn=False,
                 vectors_dir=None, vectors_dim=0, embedding_dropout=0.0, lstm_layers=3,
                 lstm_size=4, lstm_dropout=0.0, ffnn_layers=2, ffnn_size=5,
                 ffnn_dropout=0.0, width_dim=3, biaffine_dim=4, precision="float64")


def check_model(head, task="md", seed=0, tolerance=1e-4, max_elements=20, **overrides):
    """Gradient-check a tiny 64-bit network end to end on a synthetic document.

    Parameters are redrawn at a larger scale first: at the usual small
    initial values most ReLU inputs sit within a finite-difference step of
    the kink, which makes the numeric derivative meaningless there.
    """
    from .corpus import generate_synthetic
    from .model import SpanModel, resolve_architecture

    docs = generate_synthetic(2, seed=seed, nesting=task == "ner", max_width=4)
    doc = docs[0]
    params = dict(TINY_ARCH, head=head, task=task, labels=None, **overrides)
    model = SpanModel(resolve_architecture(params, docs), seed=seed)
    rng = np.random.default_rng(seed)
    named = {name: p for name, p in model.named_parameters() if p.requires_grad}
    for p in named.values():
        p.data[...] = rng.normal(scale=0.5, size=p.shape)
    return grad_check(lambda: model.loss(doc, training=False), named, tolerance=tolerance,
                      max_elements=max_elements, seed=seed)


def _weighted(out, seed=0):
    w = np.random.default_rng(seed).normal(size=out.shape)
    return _ad.sum(_ad.mul(out, _ad.constant(w)))


def op_cases():
    """``{kind: builder}``; ``builder(rng, m, n, k)`` returns ``(loss_fn, params)``.

    One small randomized problem per differentiable op kind, each loss a
    random linear functional of the op output so every entry is exercised.
    """

    def unary(op, positive=False):
        def build(rng, m, n, k):
            x = _ad.parameter(rng.normal(size=(m, n)) + (3.0 if positive else 0.0))
            return (lambda: _weighted(op(x))), [x]
        return build

    def matmul(rng, m, n, k):
        a, b = _ad.parameter(rng.normal(size=(m, n))), _ad.parameter(rng.normal(size=(n, k)))
        return (lambda: _weighted(_ad.matmul(a, b))), [a, b]

    def affine(rng, m, n, k):
        x, w, b = (_ad.parameter(rng.normal(size=s)) for s in [(m, n), (n, k), (k,)])
        return (lambda: _weighted(_ad.affine(x, w, b))), [x, w, b]

    def concat(rng, m, n, k):
        a, b = _ad.parameter(rng.normal(size=(m, n))), _ad.parameter(rng.normal(size=(m, k)))
        return (lambda: _weighted(_ad.concat([a, b], axis=1))), [a, b]

    def add_broadcast(rng, m, n, k):
        a, b = _ad.parameter(rng.normal(size=(m, n))), _ad.parameter(rng.normal(size=(n,)))
        return (lambda: _weighted(_ad.add(a, b))), [a, b]

    def mul_broadcast(rng, m, n, k):
        a, b = _ad.parameter(rng.normal(size=(m, n))), _ad.parameter(rng.normal(size=(m, 1)))
        return (lambda: _weighted(_ad.mul(a, b))), [a, b]

    def lookup(rng, m, n, k):
        table = _ad.parameter(rng.normal(size=(m, n)))
        ids = rng.integers(-1, m, size=k + 2)
        return (lambda: _weighted(_ad.embedding_lookup(table, ids))), [table]

    def dropout_fixed_mask(rng, m, n, k):
        x = _ad.parameter(rng.normal(size=(m, n)))
        seed = int(rng.integers(1 << 30))
        return (lambda: _weighted(_ad.dropout(x, 0.7, True, np.random.default_rng(seed)))), [x]

    def index_advanced(rng, m, n, k):
        x = _ad.parameter(rng.normal(size=(m, n)))
        rows = rng.integers(0, m, size=k)
        return (lambda: _weighted(_ad.index(x, (rows, slice(None))))), [x]

    def reshape_transpose(rng, m, n, k):
        x = _ad.parameter(rng.normal(size=(m, n)))
        return (lambda: _weighted(_ad.transpose(_ad.reshape(x, (n, m))))), [x]

    def max_axis(rng, m, n, k):
        x = _ad.parameter(rng.normal(size=(m, n, 2)))
        return (lambda: _weighted(_ad.max(x, axis=1))), [x]

    def sigmoid_ce(rng, m, n, k):
        x = _ad.parameter(rng.normal(size=m) * 3)
        y = rng.integers(0, 2, size=m)
        return (lambda: _ad.sigmoid_cross_entropy(x, y)), [x]

    def softmax_ce(rng, m, n, k):
        x = _ad.parameter(rng.normal(size=(m, n + 1)) * 3)
        y = rng.integers(0, n + 1, size=m)
        return (lambda: _ad.softmax_cross_entropy(x, y)), [x]

    def lstm(rng, m, n, k):
        h = max(1, k // 2)
        p = _ad.parameter(rng.normal(size=(m, 4 * h)))
        wh = _ad.parameter(rng.normal(size=(h, 4 * h)))
        steps = np.full((2, m), -1)
        steps[0] = np.arange(m)
        steps[1, :m // 2] = np.arange(m // 2)[::-1]
        return (lambda: _weighted(_ad.lstm_scan(p, wh, steps))), [p, wh]

    return {
        "sigmoid": unary(_ad.sigmoid),
        "tanh": unary(_ad.tanh),
        "relu": unary(_ad.relu, positive=True),
        "softmax": unary(_ad.softmax),
        "sum": unary(lambda x: _ad.sum(x, axis=0)),
        "scale": unary(lambda x: _ad.scale(x, -1.7)),
        "matmul": matmul,
        "affine": affine,
        "concat": concat,
        "add": add_broadcast,
        "mul": mul_broadcast,
        "embedding_lookup": lookup,
        "dropout": dropout_fixed_mask,
        "index": index_advanced,
        "reshape_transpose": reshape_transpose,
        "max": max_axis,
        "sigmoid_cross_entropy": sigmoid_ce,
        "softmax_cross_entropy": softmax_ce,
        "lstm_scan": lstm,
    }


def check_ops(seed=0, max_size=16, tolerance=1e-4, max_elements=24):
    """Run every op case once on random shapes up to ``max_size``; ``{kind: results}``."""
    rng = np.random.default_rng(seed)
    out = {}
    for kind, build in op_cases().items():
        m, n, k = (int(v) for v in rng.integers(1, max_size + 1, size=3))
        loss, params = build(np.random.default_rng(rng.integers(1 << 31)), m, n, k)
        out[kind] = grad_check(loss, params, tolerance=tolerance, max_elements=max_elements,
                               seed=seed)
    return out
