"""Token embedding providers, the character CNN, and the bidirectional LSTM.

Precomputed vector files (one per document, file name = document key)::

    {"dimension": D, "doc_key": "...", "token_count": N}\\n
    <N * D little-endian float32 values>

``token_count`` is either the document's token count or, for documents
carrying a sub-word segmentation, its piece count; piece vectors are then
reduced to one vector per token by taking each token's first piece.
"""

from __future__ import annotations

import json
import logging
import zlib
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .exceptions import AlignmentError, ContractError, DataError, FormatError
from .nn import Module, glorot_uniform

log = logging.getLogger(__name__)

UNK = "<unk>"
CONTINUATION = "##"


# -- sub-word alignment -------------------------------------------------------


def align_pieces(tokens, pieces, marker=CONTINUATION):
    """Index of each token's first piece within ``pieces``.

    A piece that starts with ``marker`` continues the previous token.
    """
    alignment = []
    i = 0
    for t, token in enumerate(tokens):
        if i >= len(pieces):
            raise AlignmentError("ran out of pieces", t)
        first = pieces[i]
        if first.startswith(marker):
            raise AlignmentError(f"piece {first!r} continues nothing", t)
        alignment.append(i)
        text = first
        i += 1
        while i < len(pieces) and pieces[i].startswith(marker):
            text += pieces[i][len(marker):]
            i += 1
        if text != token:
            raise AlignmentError(f"pieces spell {text!r}, token is {token!r}", t)
    if i != len(pieces):
        raise AlignmentError("pieces left over after the last token", len(tokens))
    return np.array(alignment, dtype=np.int64)


# -- precomputed vector files -------------------------------------------------


def write_vectors(path, doc_key, vectors):
    vectors = np.asarray(vectors, dtype="<f4")
    if vectors.ndim != 2:
        raise FormatError("vectors must be a (count, dimension) matrix")
    header = {"dimension": int(vectors.shape[1]), "doc_key": doc_key,
              "token_count": int(vectors.shape[0])}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(vectors.tobytes())


def read_vectors(path):
    """Return ``(header, matrix)``; the matrix is float32 of shape (count, dim)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise FormatError(f"{path}: no header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
        dim, count = int(header["dimension"]), int(header["token_count"])
    except (ValueError, KeyError, TypeError):
        raise FormatError(f"{path}: malformed header") from None
    body = raw[newline + 1:]
    if len(body) != 4 * dim * count:
        raise FormatError(f"{path}: expected {count}x{dim} float32 values, "
                          f"found {len(body)} bytes")
    return header, np.frombuffer(body, dtype="<f4").reshape(count, dim)


# -- providers ------------------------------------------------------------------


class TrainableLookup(Module):
    """Word -> vector table; unknown words share one trained UNK row."""

    kind = "trainable"

    def __init__(self, vocab, dim, rng, dtype=np.float64, frozen=False):
        self.vocab = [UNK] + [w for w in vocab if w != UNK]
        self.index = {w: i for i, w in enumerate(self.vocab)}
        self.dim = dim
        table = rng.uniform(-0.05, 0.05, size=(len(self.vocab), dim)).astype(dtype)
        self.table = ad.Tensor(table, requires_grad=not frozen)

    @classmethod
    def from_documents(cls, docs, dim, rng, min_count=1, **kw):
        counts = {}
        for doc in docs:
            for t in doc.tokens:
                counts[t] = counts.get(t, 0) + 1
        vocab = sorted(w for w, c in counts.items() if c >= min_count)
        return cls(vocab, dim, rng, **kw)

    def ids(self, tokens):
        return np.array([self.index.get(t, 0) for t in tokens], dtype=np.int64)

    def __call__(self, doc):
        return ad.embedding_lookup(self.table, self.ids(doc.tokens))


class HashedEmbedding(Module):
    """Tokens hash into ``buckets`` trainable rows; no vocabulary needed."""

    kind = "hashed"

    def __init__(self, buckets, dim, rng, hash_seed=0, dtype=np.float64):
        self.buckets = buckets
        self.dim = dim
        self.hash_seed = hash_seed
        self.table = ad.parameter(rng.uniform(-0.05, 0.05, size=(buckets, dim)).astype(dtype))

    def ids(self, tokens):
        salt = f"{self.hash_seed}:".encode()
        return np.array([zlib.crc32(salt + t.encode("utf-8")) % self.buckets for t in tokens],
                        dtype=np.int64)

    def __call__(self, doc):
        return ad.embedding_lookup(self.table, self.ids(doc.tokens))


class PrecomputedVectors(Module):
    """Frozen per-document vectors read from ``directory/<doc_key>``."""

    kind = "precomputed"

    def __init__(self, directory, dim, dtype=np.float64, cache=True):
        self.directory = Path(directory)
        self.dim = dim
        self.dtype = dtype
        self._cache = {} if cache else None

    def vectors(self, doc):
        if self._cache is not None and doc.doc_key in self._cache:
            return self._cache[doc.doc_key]
        path = self.directory / doc.doc_key
        if not path.exists():
            raise DataError(f"doc {doc.doc_key!r}: no precomputed vectors at {path} "
                            f"(token 0 missing)")
        header, mat = read_vectors(path)
        if header["dimension"] != self.dim:
            raise FormatError(f"{path}: dimension {header['dimension']} != provider "
                              f"dimension {self.dim}")
        if header.get("doc_key") not in (None, doc.doc_key):
            raise FormatError(f"{path}: header names doc {header['doc_key']!r}")
        n_pieces = sum(len(p) for p in doc.pieces) if doc.pieces is not None else None
        if n_pieces is not None and n_pieces != doc.n_tokens and len(mat) == n_pieces:
            flat = [p for sent in doc.pieces for p in sent]
            mat = mat[align_pieces(doc.tokens, flat)]
        elif len(mat) < doc.n_tokens:
            raise DataError(f"doc {doc.doc_key!r}: no precomputed vector for token "
                            f"{len(mat)}")
        elif len(mat) > doc.n_tokens:
            raise FormatError(f"{path}: {len(mat)} records for {doc.n_tokens} tokens")
        out = np.ascontiguousarray(mat, dtype=self.dtype)
        if self._cache is not None:
            self._cache[doc.doc_key] = out
        return out

    def __call__(self, doc):
        return ad.constant(self.vectors(doc), dtype=self.dtype)


class CharConvEncoder(Module):
    """Character CNN: 8-dim char embeddings, max-pooled ReLU convolutions.

    Output width is ``filters * len(widths)`` (150 by default).
    """

    def __init__(self, chars, rng, char_dim=8, widths=(3, 4, 5), filters=50,
                 dtype=np.float64):
        self.chars = [UNK] + sorted(set(chars) - {UNK})
        self.index = {c: i for i, c in enumerate(self.chars)}
        self.widths = tuple(widths)
        self.filters = filters
        self.char_dim = char_dim
        self.table = ad.parameter(
            rng.uniform(-0.05, 0.05, size=(len(self.chars), char_dim)).astype(dtype))
        self.kernels = [ad.parameter(glorot_uniform(rng, w * char_dim, filters, dtype=dtype))
                        for w in self.widths]
        self.biases = [ad.parameter(np.zeros(filters, dtype=dtype)) for _ in self.widths]

    @property
    def dim(self):
        return self.filters * len(self.widths)

    @classmethod
    def from_documents(cls, docs, rng, **kw):
        chars = {c for doc in docs for t in doc.tokens for c in t}
        return cls(sorted(chars), rng, **kw)

    def named_parameters(self, prefix=""):
        yield prefix + "table", self.table
        for w, k, b in zip(self.widths, self.kernels, self.biases):
            yield f"{prefix}kernel{w}", k
            yield f"{prefix}bias{w}", b

    def char_ids(self, tokens):
        width = max(max((len(t) for t in tokens), default=1), max(self.widths))
        ids = np.full((len(tokens), width), -1, dtype=np.int64)
        for i, t in enumerate(tokens):
            ids[i, :len(t)] = [self.index.get(c, 0) for c in t]
        return ids

    def __call__(self, doc):
        ids = self.char_ids(doc.tokens)
        n, width = ids.shape
        outs = []
        for w, kernel, bias in zip(self.widths, self.kernels, self.biases):
            positions = width - w + 1
            windows = np.stack([ids[:, p:p + w] for p in range(positions)], axis=1)
            emb = ad.embedding_lookup(self.table, windows.reshape(-1))
            conv = ad.relu(ad.affine(ad.reshape(emb, (n * positions, w * self.char_dim)),
                                     kernel, bias))
            outs.append(ad.max(ad.reshape(conv, (n, positions, self.filters)), axis=1))
        return ad.concat(outs, axis=1)


def embed_tokens(doc, providers, char=None):
    """Concatenate every provider's per-token vectors (plus char CNN features)."""
    if not providers:
        raise ContractError("embed_tokens needs at least one provider")
    parts = [p(doc) for p in providers]
    if char is not None:
        parts.append(char(doc))
    return parts[0] if len(parts) == 1 else ad.concat(parts, axis=1)


# -- recurrent encoder ----------------------------------------------------------


class _LSTMDirection(Module):
    """One direction of one layer; gates ordered input, forget, output, cell."""

    def __init__(self, in_dim, hidden, rng, dtype):
        self.w_input = ad.parameter(glorot_uniform(rng, in_dim, 4 * hidden, dtype=dtype))
        self.w_hidden = ad.parameter(glorot_uniform(rng, hidden, 4 * hidden, dtype=dtype))
        self.bias = ad.parameter(np.zeros(4 * hidden, dtype=dtype))
        self.hidden = hidden

    def run(self, x, steps):
        return ad.lstm_scan(ad.affine(x, self.w_input, self.bias), self.w_hidden, steps)

    def run_unfused(self, x, steps):
        """Reference composition of elementary ops; same result as :meth:`run`.

        ``steps[:, t]`` holds the token row fed at time t (-1 = padding).

        Returns per-step hidden states stacked as a ``(L * S, H)`` tensor,
        row ``t * S + s`` for sequence ``s`` at step ``t``.
        """
        n_seq, length = steps.shape
        h_dim = self.hidden
        projected = ad.affine(x, self.w_input, self.bias)
        h = c = None
        states = []
        for t in range(length):
            z = ad.embedding_lookup(projected, steps[:, t])
            if h is not None:
                z = ad.add(z, ad.matmul(h, self.w_hidden))
            gates = ad.sigmoid(ad.index(z, (slice(None), slice(0, 3 * h_dim))))
            cand = ad.tanh(ad.index(z, (slice(None), slice(3 * h_dim, 4 * h_dim))))
            i_gate = ad.index(gates, (slice(None), slice(0, h_dim)))
            f_gate = ad.index(gates, (slice(None), slice(h_dim, 2 * h_dim)))
            o_gate = ad.index(gates, (slice(None), slice(2 * h_dim, 3 * h_dim)))
            if c is None:
                c = ad.mul(i_gate, cand)
            else:
                c = ad.add(ad.mul(f_gate, c), ad.mul(i_gate, cand))
            h = ad.mul(o_gate, ad.tanh(c))
            states.append(h)
        return states[0] if length == 1 else ad.concat(states, axis=0)


class BiRecurrentEncoder(Module):
    """Stacked bidirectional LSTM run independently per sentence.

    Output per token is ``[forward; backward]`` of the last layer.  All
    sentences of a document are batched by padding; padding only ever
    trails a sequence, so it never influences a real token's state.
    Dropout between layers uses one mask per sentence (variational).
    """

    def __init__(self, in_dim, rng, hidden=200, layers=3, dropout=0.4, dtype=np.float64):
        self.hidden = hidden
        self.n_layers = layers
        self.dropout = dropout
        self.layers = []
        for k in range(layers):
            d = in_dim if k == 0 else 2 * hidden
            self.layers.append([_LSTMDirection(d, hidden, rng, dtype),
                                _LSTMDirection(d, hidden, rng, dtype)])

    @property
    def out_dim(self):
        return 2 * self.hidden

    def named_parameters(self, prefix=""):
        for k, (fw, bw) in enumerate(self.layers):
            yield from fw.named_parameters(f"{prefix}layer{k}.forward.")
            yield from bw.named_parameters(f"{prefix}layer{k}.backward.")

    @staticmethod
    def schedule(lengths):
        lengths = [int(n) for n in lengths]
        starts = np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.int64)
        live = [(s, n) for s, n in zip(starts, lengths) if n > 0]
        n_seq = len(live)
        longest = max((n for _, n in live), default=0)
        fwd = np.full((n_seq, longest), -1, dtype=np.int64)
        bwd = np.full((n_seq, longest), -1, dtype=np.int64)
        total = int(sum(lengths))
        fwd_rows = np.zeros(total, dtype=np.int64)
        bwd_rows = np.zeros(total, dtype=np.int64)
        seq_of = np.zeros(total, dtype=np.int64)
        for q, (s, n) in enumerate(live):
            j = np.arange(n)
            fwd[q, :n] = s + j
            bwd[q, :n] = s + n - 1 - j
            fwd_rows[s + j] = j * n_seq + q
            bwd_rows[s + n - 1 - j] = j * n_seq + q
            seq_of[s + j] = q
        return fwd, bwd, fwd_rows, bwd_rows, seq_of

    def __call__(self, x, lengths, training=False, rng=None):
        if any(int(n) == 0 for n in lengths):
            log.warning("skipping %d empty sentence(s)", sum(int(n) == 0 for n in lengths))
        fwd, bwd, fwd_rows, bwd_rows, seq_of = self.schedule(lengths)
        if fwd.shape[0] == 0:
            return ad.constant(np.zeros((0, self.out_dim), dtype=x.dtype))
        for k, (f_dir, b_dir) in enumerate(self.layers):
            if k > 0 and training and self.dropout > 0:
                keep = 1.0 - self.dropout
                mask = (rng.random((fwd.shape[0], x.shape[1])) < keep) / keep
                x = ad.mul(x, ad.constant(mask[seq_of], dtype=x.dtype))
            forward = ad.embedding_lookup(f_dir.run(x, fwd), fwd_rows)
            backward = ad.embedding_lookup(b_dir.run(x, bwd), bwd_rows)
            x = ad.concat([forward, backward], axis=1)
        return x


def encode_sentences(token_vectors, lengths, encoder, training=False, rng=None):
    """Contextual vectors for a flat ``(T, D)`` tensor grouped by sentence ``lengths``."""
    return encoder(token_vectors, lengths, training, rng)
