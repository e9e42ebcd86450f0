"""Exact-boundary recall / precision / F1 for mentions and labelled NER spans."""

from __future__ import annotations

from dataclasses import dataclass, field

from .exceptions import ContractError, DataError


@dataclass
class MetricsReport:
    gold: int
    predicted: int
    correct: int
    recall: float
    precision: float
    f1: float
    both_empty: bool = False
    unreachable: int = 0
    per_category: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "gold": self.gold, "predicted": self.predicted, "correct": self.correct,
            "recall": self.recall, "precision": self.precision, "f1": self.f1,
            "unreachable": self.unreachable,
        }
        if self.both_empty:
            out["warning"] = "no gold and no predicted spans; scores reported as 1"
        if self.per_category:
            out["per_category"] = {k: v.to_dict() for k, v in self.per_category.items()}
        return out

    def format(self):
        lines = [f"{'':<12}{'R':>8}{'P':>8}{'F1':>8}{'gold':>8}{'pred':>8}{'correct':>9}"]

        def row(name, r):
            lines.append(f"{name:<12}{100 * r.recall:8.2f}{100 * r.precision:8.2f}"
                         f"{100 * r.f1:8.2f}{r.gold:8d}{r.predicted:8d}{r.correct:9d}")

        for name, sub in sorted(self.per_category.items()):
            row(name, sub)
        row("overall", self)
        if self.unreachable:
            lines.append(f"oracle-unreachable gold spans: {self.unreachable}")
        if self.both_empty:
            lines.append("warning: no gold and no predicted spans")
        return "\n".join(lines)


def from_counts(gold, predicted, correct, unreachable=0):
    if correct > min(gold, predicted):
        raise ContractError("correct count exceeds gold or predicted count")
    if gold == 0 and predicted == 0:
        return MetricsReport(0, 0, 0, 1.0, 1.0, 1.0, both_empty=True, unreachable=unreachable)
    recall = correct / gold if gold else 0.0
    precision = correct / predicted if predicted else 0.0
    # 2PR / (P + R) written over counts: one rounding instead of several
    f1 = 2 * correct / (gold + predicted) if correct else 0.0
    return MetricsReport(gold, predicted, correct, recall, precision, f1,
                         unreachable=unreachable)


def _pooled(predicted, gold):
    """Yield (pred_set, gold_set) per document; accepts flat collections or doc-keyed dicts."""
    if isinstance(predicted, dict) or isinstance(gold, dict):
        if not (isinstance(predicted, dict) and isinstance(gold, dict)):
            raise ContractError("pass both predicted and gold as doc-keyed dicts or neither")
        if set(predicted) != set(gold):
            missing = sorted(set(gold) ^ set(predicted))[:3]
            raise ContractError(f"predicted and gold cover different documents, e.g. {missing}")
        for key in gold:
            yield set(map(tuple, predicted[key])), set(map(tuple, gold[key]))
    else:
        yield set(map(tuple, predicted)), set(map(tuple, gold))


def score_mentions(predicted, gold, unreachable=0):
    """Micro-averaged exact (start, end) matching."""
    g = p = c = 0
    for pred_set, gold_set in _pooled(predicted, gold):
        g += len(gold_set)
        p += len(pred_set)
        c += len(pred_set & gold_set)
    return from_counts(g, p, c, unreachable)


def score_ner(predicted, gold, labels=None, unreachable=0):
    """Exact (start, end, label) matching with one row per category."""
    pairs = list(_pooled(predicted, gold))
    seen = {lab for pred_set, gold_set in pairs for *_, lab in pred_set | gold_set}
    if labels is None:
        labels = sorted(seen)
    else:
        unknown = seen - set(labels)
        if unknown:
            raise DataError(f"labels {sorted(unknown)} not in inventory {list(labels)}")
    per_category = {}
    for lab in labels:
        g = p = c = 0
        for pred_set, gold_set in pairs:
            ps = {x for x in pred_set if x[2] == lab}
            gs = {x for x in gold_set if x[2] == lab}
            g, p, c = g + len(gs), p + len(ps), c + len(ps & gs)
        per_category[lab] = from_counts(g, p, c)
    report = score_mentions({i: ps for i, (ps, _) in enumerate(pairs)},
                            {i: gs for i, (_, gs) in enumerate(pairs)}, unreachable)
    report.per_category = per_category
    return report
