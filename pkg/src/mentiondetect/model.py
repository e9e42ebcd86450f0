"""The full network: embeddings -> (optional) BiLSTM -> span scoring head."""

import numpy as np

from . import autodiff as ad
from .encoders import (BiRecurrentEncoder, CharConvEncoder, HashedEmbedding, PrecomputedVectors,
                       TrainableLookup, embed_tokens)
from .exceptions import ContractError
from .heads import HEADS, span_probabilities
from .nn import Module
from .objectives import label_candidates, sigmoid_ce_loss, softmax_ce_loss

ARCH_KEYS = (
    "head", "task", "labels", "max_width", "word_dim", "hash_dim", "hash_buckets", "char_cnn",
    "vectors_dir", "vectors_dim", "embedding_dropout", "lstm_layers", "lstm_size",
    "lstm_dropout", "ffnn_layers", "ffnn_size", "ffnn_dropout", "width_dim", "biaffine_dim",
    "precision",
)


def resolve_architecture(params, docs):
    """Freeze hyperparameters plus corpus-derived vocabularies into a plain dict."""
    arch = {k: params[k] for k in ARCH_KEYS}
    if arch["head"] not in HEADS:
        raise ContractError(f"unknown head {arch['head']!r}")
    if arch["char_cnn"] is None:
        arch["char_cnn"] = arch["head"] == "lee"
    if arch["task"] == "ner":
        if not arch["labels"]:
            arch["labels"] = sorted({lab for d in docs for *_, lab in d.ner})
        if not arch["labels"]:
            raise ContractError("NER task needs a label inventory or labelled documents")
        arch["labels"] = list(arch["labels"])
    else:
        arch["labels"] = None
    vocab = set()
    chars = set()
    for d in docs:
        vocab.update(d.tokens)
        for t in d.tokens:
            chars.update(t)
    arch["word_vocab"] = sorted(vocab) if arch["word_dim"] else []
    arch["char_vocab"] = sorted(chars) if arch["char_cnn"] else []
    if not (arch["word_dim"] or arch["hash_dim"] or arch["vectors_dir"]):
        raise ContractError("at least one embedding provider must be enabled")
    return arch


class SpanModel(Module):
    def __init__(self, arch, seed=0):
        self.arch = dict(arch)
        self.dtype = np.dtype(arch["precision"])
        rng = np.random.default_rng(seed)
        dtype = self.dtype
        self.providers = []
        if arch["word_dim"]:
            self.providers.append(TrainableLookup(arch["word_vocab"], arch["word_dim"], rng, dtype))
        if arch["hash_dim"]:
            self.providers.append(HashedEmbedding(arch["hash_buckets"], arch["hash_dim"], rng,
                                                  hash_seed=seed, dtype=dtype))
        if arch["vectors_dir"]:
            self.providers.append(PrecomputedVectors(arch["vectors_dir"], arch["vectors_dim"],
                                                     dtype))
        self.char = CharConvEncoder(arch["char_vocab"], rng, dtype=dtype) if arch["char_cnn"] else None
        in_dim = sum(p.dim for p in self.providers) + (self.char.dim if self.char else 0)
        self.embedding_dim = in_dim
        self.encoder = None
        if arch["lstm_layers"]:
            self.encoder = BiRecurrentEncoder(in_dim, rng, arch["lstm_size"], arch["lstm_layers"],
                                              arch["lstm_dropout"], dtype)
            in_dim = self.encoder.out_dim
        self.n_out = 1 if arch["task"] == "md" else len(arch["labels"]) + 1
        common = dict(n_out=self.n_out, ffnn_size=arch["ffnn_size"],
                      ffnn_layers=arch["ffnn_layers"], dropout=arch["ffnn_dropout"], dtype=dtype)
        if arch["head"] == "lee":
            self.head = HEADS["lee"](in_dim, rng, max_width=arch["max_width"],
                                     width_dim=arch["width_dim"], **common)
        elif arch["head"] == "concat":
            self.head = HEADS["concat"](in_dim, rng, max_width=arch["max_width"], **common)
        else:
            self.head = HEADS["biaffine"](in_dim, rng, dim=arch["biaffine_dim"], **common)

    @property
    def head_type(self):
        return self.arch["head"]

    @property
    def labels(self):
        return self.arch["labels"]

    def encode(self, doc, training=False, rng=None):
        x = embed_tokens(doc, self.providers, self.char)
        keep = 1.0 - self.arch["embedding_dropout"]
        x = ad.dropout(x, keep, training, rng)
        if self.encoder is not None:
            x = self.encoder(x, doc.sentence_lengths, training, rng)
        return x

    def candidates(self, doc):
        return self.head.candidates(doc.sentence_lengths)

    def forward(self, doc, training=False, rng=None):
        """``(starts, ends, logits)``; logits has shape ``(N, 1)`` or ``(N, C)``."""
        starts, ends = self.candidates(doc)
        if len(starts) == 0:
            return starts, ends, None
        x = self.encode(doc, training, rng)
        return starts, ends, self.head.logits(x, starts, ends, training, rng)

    def gold(self, doc, starts, ends):
        if self.arch["task"] == "md":
            return label_candidates(starts, ends, doc.mentions)
        return label_candidates(starts, ends, doc.ner, self.labels)

    def loss(self, doc, training=True, rng=None):
        starts, ends, logits = self.forward(doc, training, rng)
        if logits is None:
            return ad.constant(0.0, dtype=self.dtype)
        labels = self.gold(doc, starts, ends).targets
        if self.n_out == 1:
            return sigmoid_ce_loss(logits, labels)
        return softmax_ce_loss(logits, labels)

    def probabilities(self, doc):
        """``(spans, probs)``: probs is ``(N,)`` for MD, ``(N, C)`` for NER."""
        starts, ends, logits = self.forward(doc)
        spans = np.stack([starts, ends], axis=1) if len(starts) else np.zeros((0, 2), np.int64)
        if logits is None:
            shape = (0,) if self.n_out == 1 else (0, self.n_out)
            return spans, np.zeros(shape)
        return spans, span_probabilities(logits.data)
