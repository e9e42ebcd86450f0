"""Candidate span enumeration and span representations."""

from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .exceptions import ContractError
from .nn import Module

_MASKED = -1e9


class SpanCandidate(NamedTuple):
    start: int
    end: int  # inclusive
    sentence: int

    @property
    def width(self):
        return self.end - self.start + 1


def span_arrays(lengths, max_width=None):
    """Flat ``(starts, ends, sentence_ids)`` for all same-sentence spans.

    Spans are ordered by ``(start, end)``; ``max_width=None`` means no cap.
    """
    if max_width is not None and max_width < 1:
        raise ContractError("max_width must be >= 1")
    starts, ends, sents = [], [], []
    offset = 0
    for sid, n in enumerate(lengths):
        n = int(n)
        cap = n if max_width is None else min(max_width, n)
        for s in range(n):
            for e in range(s, min(s + cap, n)):
                starts.append(offset + s)
                ends.append(offset + e)
                sents.append(sid)
        offset += n
    return (np.array(starts, dtype=np.int64), np.array(ends, dtype=np.int64),
            np.array(sents, dtype=np.int64))


def enumerate_spans(doc, max_width):
    """All spans of width <= ``max_width`` inside one sentence, by (start, end)."""
    starts, ends, sents = span_arrays(doc.sentence_lengths, max_width)
    return [SpanCandidate(int(s), int(e), int(k)) for s, e, k in zip(starts, ends, sents)]


def _window(starts, ends):
    width = int((ends - starts).max()) + 1 if len(starts) else 1
    idx = starts[:, None] + np.arange(width)[None, :]
    valid = idx <= ends[:, None]
    return np.where(valid, idx, -1), valid


def attention_head(starts, ends, x, alpha):
    """Soft head vector of each span: softmax(alpha) over its tokens, weighting ``x``.

    ``alpha`` holds one attention logit per token, shape ``(T, 1)``.
    Returns ``(heads, weights)`` with shapes ``(N, D)`` and ``(N, W)``; weights
    of positions past a span's end are exactly zero.
    """
    starts = np.asarray(starts, dtype=np.int64)
    ends = np.asarray(ends, dtype=np.int64)
    idx, valid = _window(starts, ends)
    n, width = idx.shape
    logits = ad.reshape(ad.embedding_lookup(alpha, idx.reshape(-1)), (n, width))
    if not valid.all():
        logits = ad.add(logits, ad.constant(np.where(valid, 0.0, _MASKED), dtype=x.dtype))
    weights = ad.softmax(logits, axis=1)
    tokens = ad.reshape(ad.embedding_lookup(x, idx.reshape(-1)), (n, width, x.shape[1]))
    heads = ad.sum(ad.mul(tokens, ad.reshape(weights, (n, width, 1))), axis=1)
    return heads, weights


class WidthFeature(Module):
    """One trainable vector per exact span width 1..max_width."""

    def __init__(self, max_width, rng, dim=20, dtype=np.float64):
        self.max_width = max_width
        self.dim = dim
        self.table = ad.parameter(rng.uniform(-0.05, 0.05, size=(max_width, dim)).astype(dtype))

    def __call__(self, widths):
        widths = np.asarray(widths, dtype=np.int64)
        if widths.size and (widths.min() < 1 or widths.max() > self.max_width):
            raise ContractError(f"span width outside 1..{self.max_width}")
        return ad.embedding_lookup(self.table, widths - 1)


def lee_representation(starts, ends, x, alpha, width_feature):
    """``[x_start, x_end, head, width_embedding]`` per span; dim ``3 * D + width_dim``."""
    heads, _ = attention_head(starts, ends, x, alpha)
    return ad.concat([ad.embedding_lookup(x, starts), ad.embedding_lookup(x, ends), heads,
                      width_feature(np.asarray(ends) - np.asarray(starts) + 1)], axis=1)


def start_end_representations(x, start_ffnn, end_ffnn, training=False, rng=None):
    return start_ffnn(x, training, rng), end_ffnn(x, training, rng)


def concat_representation(starts, ends, x):
    """``[x_start, x_end]`` per span; dim ``2 * D``."""
    return ad.concat([ad.embedding_lookup(x, starts), ad.embedding_lookup(x, ends)], axis=1)
