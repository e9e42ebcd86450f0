"""scikit-learn style estimator wrapping the span model, its training loop and output modes."""

from __future__ import annotations

import logging
import os
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import autodiff as ad
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import Document, load_corpus
from .exceptions import ContractError
from .metrics import score_mentions, score_ner
from .model import SpanModel, resolve_architecture
from .objectives import batch_loss
from .optim import Adam
from .selection import HIGH_F1, HIGH_RECALL, OperatingMode, select, select_ner

log = logging.getLogger(__name__)


def check_documents(X):
    """Coerce ``X`` (Documents, record dicts, or a corpus path) to a list of Documents."""
    if isinstance(X, (str, os.PathLike)):
        return load_corpus(X)
    if isinstance(X, Document):
        return [X]
    docs = []
    for item in X:
        if isinstance(item, Document):
            docs.append(item)
        elif isinstance(item, dict):
            docs.append(Document.from_record(item))
        else:
            raise TypeError(f"expected Document or record dict, got {type(item).__name__}")
    return docs


def check_mode(mode, lam, beta):
    if mode == HIGH_RECALL:
        return OperatingMode.high_recall(lam)
    if mode == HIGH_F1:
        return OperatingMode.high_f1(beta)
    raise ContractError(f"unknown mode {mode!r}")


class MentionDetector(BaseEstimator):
    """Neural mention detector / nested-NER tagger over enumerated spans.

    ``X`` is always a sequence of :class:`Document`; gold annotations travel
    inside the documents, so ``y`` is ignored.  ``head`` picks the scoring
    architecture (``"lee"``, ``"biaffine"`` or ``"concat"``), ``task`` picks
    sigmoid mention detection (``"md"``) or softmax nested NER (``"ner"``),
    and ``mode`` with ``lam``/``beta`` picks the output operating point.
    """

    def __init__(self, head="biaffine", task="md", labels=None, mode="high-f1", lam=0.4,
                 beta=0.5, max_width=30, word_dim=300, hash_dim=0, hash_buckets=10000,
                 char_cnn=None, vectors_dir=None, vectors_dim=1024, embedding_dropout=0.5,
                 lstm_layers=3, lstm_size=200, lstm_dropout=0.4, ffnn_layers=2, ffnn_size=150,
                 ffnn_dropout=0.2, width_dim=20, biaffine_dim=150, learning_rate=1e-3,
                 train_steps=40000, batch_size=1, eval_interval=2000, no_dev=False,
                 precision="float32", seed=0):
        self.head = head
        self.task = task
        self.labels = labels
        self.mode = mode
        self.lam = lam
        self.beta = beta
        self.max_width = max_width
        self.word_dim = word_dim
        self.hash_dim = hash_dim
        self.hash_buckets = hash_buckets
        self.char_cnn = char_cnn
        self.vectors_dir = vectors_dir
        self.vectors_dim = vectors_dim
        self.embedding_dropout = embedding_dropout
        self.lstm_layers = lstm_layers
        self.lstm_size = lstm_size
        self.lstm_dropout = lstm_dropout
        self.ffnn_layers = ffnn_layers
        self.ffnn_size = ffnn_size
        self.ffnn_dropout = ffnn_dropout
        self.width_dim = width_dim
        self.biaffine_dim = biaffine_dim
        self.learning_rate = learning_rate
        self.train_steps = train_steps
        self.batch_size = batch_size
        self.eval_interval = eval_interval
        self.no_dev = no_dev
        self.precision = precision
        self.seed = seed

    # -- training ---------------------------------------------------------------

    def fit(self, X, y=None, X_dev=None, callback=None):
        """Train for ``train_steps`` Adam updates of ``batch_size`` documents each.

        Every ``eval_interval`` steps (and after the last) a record
        ``{"step", "loss"[, "dev"]}`` is appended to ``log_`` and passed to
        ``callback``.  With a dev set (and ``no_dev`` off) the parameters with
        the best dev F1 are kept; otherwise the final parameters are.
        """
        docs = check_documents(X)
        if not docs:
            raise ContractError("fit needs at least one document")
        dev = check_documents(X_dev) if X_dev is not None and not self.no_dev else None
        mode = check_mode(self.mode, self.lam, self.beta)
        if self.head != "biaffine":
            mode.check_width(self.max_width)
        init_seed, dropout_seed, shuffle_seed = np.random.SeedSequence(self.seed).spawn(3)
        dropout_rng = np.random.default_rng(dropout_seed)
        shuffle_rng = np.random.default_rng(shuffle_seed)
        arch = resolve_architecture(self.get_params(), docs)
        self.model_ = SpanModel(arch, seed=int(init_seed.generate_state(1)[0]))
        optimizer = Adam(self.model_.parameters(), self.learning_rate)

        self.log_ = []
        best_f1, best_state = -1.0, None
        order = shuffle_rng.permutation(len(docs))
        cursor = 0
        running, counted = 0.0, 0
        for step in range(1, self.train_steps + 1):
            batch = []
            for _ in range(min(self.batch_size, len(docs))):
                if cursor == len(order):
                    order, cursor = shuffle_rng.permutation(len(docs)), 0
                batch.append(docs[order[cursor]])
                cursor += 1
            with ad.Tape() as tape:
                loss = batch_loss(self.model_.loss(d, True, dropout_rng) for d in batch)
            tape.backward(loss)
            optimizer.step()
            running += float(loss.data)
            counted += 1
            if step % self.eval_interval == 0 or step == self.train_steps:
                record = {"step": step, "loss": running / counted}
                running, counted = 0.0, 0
                if dev is not None:
                    report = self._evaluate(dev, mode)
                    record["dev"] = report.to_dict()
                    if report.f1 > best_f1:
                        best_f1, best_state = report.f1, self.model_.state_dict()
                self.log_.append(record)
                log.info("step %d loss %.4f%s", step, record["loss"],
                         f" dev F1 {record['dev']['f1']:.4f}" if dev is not None else "")
                if callback is not None:
                    callback(record)
        if best_state is not None:
            self.model_.load_state_dict(best_state)
        self.n_steps_ = self.train_steps
        return self

    # -- inference --------------------------------------------------------------

    def predict_proba(self, X):
        """Per document ``(spans, probs)`` over every candidate span."""
        check_is_fitted(self, "model_")
        return [self.model_.probabilities(d) for d in check_documents(X)]

    def _select(self, doc, spans, probs, mode):
        if self.model_.n_out == 1:
            idx = select(spans, probs, mode, doc.n_tokens)
            return [(int(s), int(e)) for s, e in spans[idx]], probs[idx]
        idx, classes = select_ner(spans, probs, mode, doc.n_tokens)
        labels = self.model_.labels
        out = [(int(s), int(e), labels[c - 1]) for (s, e), c in zip(spans[idx], classes)]
        return out, probs[idx, classes]

    def predict(self, X, mode=None):
        """Predicted spans per document; ``(start, end, label)`` triples for NER."""
        return [spans for spans, _ in self.predict_scored(X, mode)]

    def predict_scored(self, X, mode=None):
        check_is_fitted(self, "model_")
        mode = mode or check_mode(self.mode, self.lam, self.beta)
        out = []
        for doc in check_documents(X):
            spans, probs = self.model_.probabilities(doc)
            out.append(self._select(doc, spans, probs, mode))
        return out

    def predict_documents(self, X, mode=None):
        """Copies of the documents with predictions in place of the gold field."""
        docs = check_documents(X)
        out = []
        for doc, (spans, probs) in zip(docs, self.predict_scored(docs, mode)):
            field = "mentions" if self.model_.n_out == 1 else "ner"
            out.append(doc.replace(**{field: sorted(spans)},
                                   probabilities=[float(p) for _, p in
                                                  sorted(zip(spans, probs))]))
        return out

    def _evaluate(self, docs, mode):
        preds, gold = {}, {}
        unreachable = 0
        for doc in docs:
            spans, probs = self.model_.probabilities(doc)
            selected, _ = self._select(doc, spans, probs, mode)
            preds[doc.doc_key] = selected
            gold[doc.doc_key] = doc.mentions if self.model_.n_out == 1 else doc.ner
            unreachable += self.model_.gold(doc, spans[:, 0], spans[:, 1]).unreachable
        if self.model_.n_out == 1:
            return score_mentions(preds, gold, unreachable)
        return score_ner(preds, gold, self.model_.labels, unreachable)

    def evaluate(self, X, mode=None):
        """:class:`MetricsReport` for ``X`` under ``mode`` (default: the configured one)."""
        check_is_fitted(self, "model_")
        return self._evaluate(check_documents(X), mode or check_mode(self.mode, self.lam, self.beta))

    def score(self, X, y=None):
        return self.evaluate(X).f1

    # -- persistence --------------------------------------------------------------

    def save(self, path):
        check_is_fitted(self, "model_")
        return save_checkpoint(self.model_, path, seed=self.seed,
                               metadata={"params": self.get_params()})

    @classmethod
    def load(cls, path, expected_head=None):
        model, manifest = load_checkpoint(Path(path), expected_head)
        est = cls(**manifest["metadata"].get("params", {}))
        est.model_ = model
        return est
