"""Training objectives and gold labelling of candidate spans."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .exceptions import ContractError


@dataclass
class GoldLabeling:
    """Per-candidate targets plus the gold spans no candidate can reach.

    ``targets`` holds 0/1 for mention detection or a class index for NER
    (0 = not a named mention, ``k`` = ``labels[k - 1]``).
    """

    targets: np.ndarray
    unreachable: int


def label_candidates(starts, ends, gold, labels=None):
    """Label candidates against ``gold`` spans.

    ``gold`` is ``[(s, e), ...]`` for mention detection or
    ``[(s, e, label), ...]`` with ``labels`` given for NER.
    """
    lookup = {(int(s), int(e)): i for i, (s, e) in enumerate(zip(starts, ends))}
    targets = np.zeros(len(lookup), dtype=np.int64)
    unreachable = 0
    if labels is None:
        for s, e in gold:
            i = lookup.get((s, e))
            if i is None:
                unreachable += 1
            else:
                targets[i] = 1
    else:
        class_of = {lab: k + 1 for k, lab in enumerate(labels)}
        for s, e, lab in gold:
            if lab not in class_of:
                raise ContractError(f"label {lab!r} not in inventory {list(labels)}")
            i = lookup.get((s, e))
            if i is None:
                unreachable += 1
            else:
                targets[i] = class_of[lab]
    return GoldLabeling(targets, unreachable)


def sigmoid_ce_loss(logits, labels):
    """Summed binary cross entropy from raw scores, in the overflow-free form."""
    logits = ad.reshape(logits, (-1,)) if logits.data.ndim == 2 else logits
    labels = np.asarray(labels)
    if labels.shape != logits.shape:
        raise ContractError(f"{labels.size} labels for {logits.shape[0]} candidates")
    return ad.sigmoid_cross_entropy(logits, labels)


def softmax_ce_loss(logits, labels):
    """Summed categorical cross entropy of gold class indices."""
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise ContractError(f"{labels.size} labels for {logits.shape[0]} candidates")
    return ad.softmax_cross_entropy(logits, labels)


def batch_loss(doc_losses):
    """Mean over documents of per-document summed losses."""
    doc_losses = list(doc_losses)
    total = doc_losses[0]
    for loss in doc_losses[1:]:
        total = ad.add(total, loss)
    return ad.scale(total, 1.0 / len(doc_losses))
