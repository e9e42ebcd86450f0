"""Turning span probabilities into predicted mentions.

Two operating modes: *high recall* keeps the ``floor(lambda * T)`` most
probable spans of a document, *high F1* keeps every span whose probability
is strictly above ``beta``.  Ties are broken by earlier start, then shorter
width, then enumeration order, so every selection is deterministic and
nested in the budget.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError

HIGH_RECALL = "high-recall"
HIGH_F1 = "high-f1"

_FLOOR_SLACK = 1e-9


@dataclass(frozen=True)
class OperatingMode:
    kind: str
    value: float

    def __post_init__(self):
        if self.kind == HIGH_RECALL:
            if not self.value > 0:
                raise ContractError(f"lambda must be positive, got {self.value}")
        elif self.kind == HIGH_F1:
            if not 0 < self.value < 1:
                raise ContractError(f"beta must lie in (0, 1), got {self.value}")
        else:
            raise ContractError(f"unknown mode {self.kind!r}")

    @classmethod
    def high_recall(cls, lam=0.4):
        return cls(HIGH_RECALL, lam)

    @classmethod
    def high_f1(cls, beta=0.5):
        return cls(HIGH_F1, beta)

    def check_width(self, max_width):
        if self.kind == HIGH_RECALL and max_width is not None and not self.value < max_width:
            raise ContractError(f"lambda {self.value} must be below the max width {max_width}")


def span_budget(lam, n_tokens):
    # slack guards products like 0.29 * 100 = 28.999999999999996
    return int(math.floor(lam * n_tokens + _FLOOR_SLACK))


def ranking(spans, probs):
    """Candidate indices, most probable first, under the fixed tie order."""
    spans = np.asarray(spans, dtype=np.int64).reshape(-1, 2)
    probs = np.asarray(probs, dtype=np.float64)
    if len(spans) != len(probs):
        raise ContractError(f"{len(probs)} probabilities for {len(spans)} spans")
    order = np.arange(len(spans))
    width = spans[:, 1] - spans[:, 0]
    return np.lexsort((order, width, spans[:, 0], -probs))


def select_high_recall(spans, probs, lam, n_tokens):
    """Indices of the ``min(floor(lam * T), N)`` top-ranked spans, in rank order."""
    if not lam > 0:
        raise ContractError(f"lambda must be positive, got {lam}")
    k = min(span_budget(lam, n_tokens), len(probs))
    return ranking(spans, probs)[:k]


def select_high_f1(probs, beta):
    """Indices of spans with probability strictly greater than ``beta``."""
    if not 0 < beta < 1:
        raise ContractError(f"beta must lie in (0, 1), got {beta}")
    return np.flatnonzero(np.asarray(probs) > beta)


def select(spans, probs, mode, n_tokens):
    if mode.kind == HIGH_RECALL:
        return select_high_recall(spans, probs, mode.value, n_tokens)
    return select_high_f1(probs, mode.value)


def select_ner(spans, class_probs, mode, n_tokens):
    """Labelled predictions from ``(N, C)`` class probabilities (column 0 = null).

    High F1: spans whose argmax class is not null, labelled by that argmax.
    High recall: the top ``floor(lambda * T)`` spans by ``1 - p_null``,
    labelled by their most probable non-null class.  Nested and overlapping
    predictions are all kept.  Returns ``(indices, class_ids)``.
    """
    class_probs = np.asarray(class_probs, dtype=np.float64)
    if class_probs.ndim != 2 or class_probs.shape[1] < 2:
        raise ContractError("NER selection needs (N, C) probabilities with C >= 2")
    if mode.kind == HIGH_F1:
        best = class_probs.argmax(axis=1)
        idx = np.flatnonzero(best != 0)
        return idx, best[idx]
    idx = select_high_recall(spans, 1.0 - class_probs[:, 0], mode.value, n_tokens)
    return idx, class_probs[idx, 1:].argmax(axis=1) + 1
