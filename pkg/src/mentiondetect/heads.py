"""Span scoring heads.

Every head maps contextual token vectors ``x`` (shape ``(T, D)``) and
candidate spans to raw scores of shape ``(N, C)``.  ``C == 1`` gives one
mention logit per span (sigmoid probability); ``C > 1`` gives nested-NER
scores where column 0 is the "not a named mention" class (softmax).
"""

import numpy as np

from . import autodiff as ad
from .exceptions import ContractError
from .nn import FFNN, Module, glorot_uniform
from .spans import (WidthFeature, concat_representation, lee_representation, span_arrays,
                    start_end_representations)


def sigmoid_probabilities(logits):
    logits = np.asarray(logits, dtype=np.float64)
    return 0.5 * (1.0 + np.tanh(0.5 * logits))


def softmax_probabilities(logits):
    logits = np.asarray(logits, dtype=np.float64)
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def span_probabilities(logits):
    """Sigmoid of a single score column, softmax across several."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim == 2 and logits.shape[1] == 1:
        return sigmoid_probabilities(logits[:, 0])
    if logits.ndim == 1:
        return sigmoid_probabilities(logits)
    return softmax_probabilities(logits)


class LeeHead(Module):
    """Endpoint vectors, attention head vector and width embedding, scored by an FFNN."""

    name = "lee"

    def __init__(self, in_dim, rng, n_out=1, max_width=30, width_dim=20, ffnn_size=150,
                 ffnn_layers=2, dropout=0.2, dtype=np.float64):
        self.max_width = max_width
        self.attention = FFNN(in_dim, ffnn_size, 0, 1, rng, dtype=dtype)
        self.width = WidthFeature(max_width, rng, width_dim, dtype)
        self.scorer = FFNN(3 * in_dim + width_dim, ffnn_size, ffnn_layers, n_out, rng,
                           dropout, dtype)

    def candidates(self, lengths):
        return span_arrays(lengths, self.max_width)[:2]

    def representations(self, x, starts, ends):
        return lee_representation(starts, ends, x, self.attention(x), self.width)

    def logits(self, x, starts, ends, training=False, rng=None):
        return self.scorer(self.representations(x, starts, ends), training, rng)


class ConcatHead(Module):
    """``[x_start, x_end]`` scored by an FFNN (the head used over frozen encoder vectors)."""

    name = "concat"

    def __init__(self, in_dim, rng, n_out=1, max_width=30, ffnn_size=150, ffnn_layers=2,
                 dropout=0.2, dtype=np.float64):
        self.max_width = max_width
        self.scorer = FFNN(2 * in_dim, ffnn_size, ffnn_layers, n_out, rng, dropout, dtype)

    def candidates(self, lengths):
        return span_arrays(lengths, self.max_width)[:2]

    def logits(self, x, starts, ends, training=False, rng=None):
        return self.scorer(concat_representation(starts, ends, x), training, rng)


def biaffine_scores(h_start, h_end, weight, bias):
    """Raw scores for every (start, end) pair as two batched products.

    ``weight`` is ``(d, C * d)`` (C stacked ``d x d`` blocks) and ``bias`` is
    ``(d, C)``.  Returns a tensor of shape ``(n, C, n)`` whose entry
    ``[s, c, e]`` is ``h_start[s] @ W_c @ h_end[e] + h_start[s] @ b_c``.
    """
    n, d = h_start.shape
    if h_end.shape != (n, d) or weight.shape[0] != d or weight.shape[1] % d:
        raise ContractError(f"biaffine shapes disagree: h_start {h_start.shape}, h_end "
                            f"{h_end.shape}, weight {weight.shape}")
    c = weight.shape[1] // d
    if bias.shape != (d, c):
        raise ContractError(f"biaffine bias must be ({d}, {c}), got {bias.shape}")
    left = ad.reshape(ad.matmul(h_start, weight), (n * c, d))
    bilinear = ad.reshape(ad.matmul(left, ad.transpose(h_end)), (n, c, n))
    linear = ad.reshape(ad.matmul(h_start, bias), (n, c, 1))
    return ad.add(bilinear, linear)


def biaffine_probabilities(scores):
    """Sigmoid of an ``(n, n)`` score matrix with cells ``start > end`` forced to 0."""
    scores = np.asarray(scores, dtype=np.float64)
    valid = np.triu(np.ones(scores.shape, dtype=bool))
    return np.where(valid, sigmoid_probabilities(scores), 0.0)


class BiaffineHead(Module):
    """Separate start/end FFNNs followed by a biaffine scorer over each sentence.

    Scores all same-sentence pairs with ``start <= end`` (no width cap).
    Invalid cells are never gathered, so no gradient flows through them.
    """

    name = "biaffine"

    def __init__(self, in_dim, rng, n_out=1, dim=150, ffnn_size=150, ffnn_layers=2,
                 dropout=0.2, dtype=np.float64):
        self.max_width = None
        self.dim = dim
        self.n_out = n_out
        self.start = FFNN(in_dim, ffnn_size, ffnn_layers, dim, rng, dropout, dtype)
        self.end = FFNN(in_dim, ffnn_size, ffnn_layers, dim, rng, dropout, dtype)
        self.weight = ad.parameter(
            glorot_uniform(rng, dim, dim, shape=(dim, n_out * dim), dtype=dtype))
        self.bias = ad.parameter(np.zeros((dim, n_out), dtype=dtype))

    def candidates(self, lengths):
        return span_arrays(lengths, None)[:2]

    def logits(self, x, starts, ends, training=False, rng=None):
        h_start, h_end = start_end_representations(x, self.start, self.end, training, rng)
        # document-wide matrix; only same-sentence cells with start <= end are read
        scores = biaffine_scores(h_start, h_end, self.weight, self.bias)
        classes = np.arange(self.n_out)[None, :]
        return ad.index(scores, (np.asarray(starts)[:, None], classes, np.asarray(ends)[:, None]))


HEADS = {"lee": LeeHead, "biaffine": BiaffineHead, "concat": ConcatHead}
