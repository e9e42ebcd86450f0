"""Document model, the jsonlines corpus format, and a synthetic corpus generator.

One JSON object per line::

    {"doc_key": "...", "sentences": [["tok", ...], ...],
     "mentions": [[start, end], ...],          # flat, 0-based, end inclusive
     "ner": [[start, end, "LABEL"], ...],
     "pieces": [["piece", "##piece", ...], ...],   # optional
     "singletons": [[start, end], ...]}            # optional

All indices are flat token offsets into the concatenated sentences, with
inclusive end indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .encoders import align_pieces
from .exceptions import DataError


@dataclass(frozen=True)
class Document:
    doc_key: str
    sentences: tuple
    mentions: tuple = ()
    ner: tuple = ()
    pieces: tuple | None = None
    singletons: tuple = ()
    probabilities: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "sentences", tuple(tuple(str(t) for t in s) for s in self.sentences))
        set_(self, "mentions", tuple((int(s), int(e)) for s, e in self.mentions))
        set_(self, "ner", tuple((int(s), int(e), str(lab)) for s, e, lab in self.ner))
        set_(self, "singletons", tuple((int(s), int(e)) for s, e in self.singletons))
        if self.pieces is not None:
            set_(self, "pieces", tuple(tuple(str(p) for p in s) for s in self.pieces))
        if self.probabilities is not None:
            set_(self, "probabilities", tuple(float(p) for p in self.probabilities))
        self._validate()

    def _fail(self, message):
        raise DataError(f"doc {self.doc_key!r}: {message}")

    def _check_span(self, s, e, what):
        if not 0 <= s <= e < self.n_tokens:
            self._fail(f"{what} ({s}, {e}) outside [0, {self.n_tokens})")
        sid = self.sentence_ids
        if sid[s] != sid[e]:
            self._fail(f"{what} ({s}, {e}) crosses a sentence boundary")

    def _validate(self):
        seen = set()
        for s, e in self.mentions:
            self._check_span(s, e, "mention")
            if (s, e) in seen:
                self._fail(f"duplicate mention ({s}, {e})")
            seen.add((s, e))
        seen = set()
        for s, e, _ in self.ner:
            self._check_span(s, e, "ner span")
            if (s, e) in seen:
                self._fail(f"duplicate ner span ({s}, {e})")
            seen.add((s, e))
        for s, e in self.singletons:
            self._check_span(s, e, "singleton")
        if self.pieces is not None:
            if len(self.pieces) != len(self.sentences):
                self._fail("pieces must have one list per sentence")
            align_pieces(self.tokens, [p for sent in self.pieces for p in sent])

    @cached_property
    def tokens(self):
        return [t for s in self.sentences for t in s]

    @property
    def n_tokens(self):
        return len(self.tokens)

    @cached_property
    def sentence_lengths(self):
        return np.array([len(s) for s in self.sentences], dtype=np.int64)

    @cached_property
    def sentence_starts(self):
        return np.concatenate([[0], np.cumsum(self.sentence_lengths)[:-1]]).astype(np.int64)

    @cached_property
    def sentence_ids(self):
        return np.repeat(np.arange(len(self.sentences)), self.sentence_lengths)

    def to_local(self, index):
        """Flat token index -> (sentence id, offset within sentence)."""
        if not 0 <= index < self.n_tokens:
            raise IndexError(index)
        sent = int(self.sentence_ids[index])
        return sent, int(index - self.sentence_starts[sent])

    def to_flat(self, sentence, offset):
        if not 0 <= offset < self.sentence_lengths[sentence]:
            raise IndexError((sentence, offset))
        return int(self.sentence_starts[sentence] + offset)

    def to_record(self):
        rec = {
            "doc_key": self.doc_key,
            "sentences": [list(s) for s in self.sentences],
            "mentions": [list(m) for m in self.mentions],
            "ner": [list(n) for n in self.ner],
        }
        if self.pieces is not None:
            rec["pieces"] = [list(p) for p in self.pieces]
        if self.singletons:
            rec["singletons"] = [list(m) for m in self.singletons]
        if self.probabilities is not None:
            rec["probabilities"] = list(self.probabilities)
        return rec

    @classmethod
    def from_record(cls, rec):
        if not isinstance(rec, dict):
            raise DataError("record is not a JSON object")
        for key in ("doc_key", "sentences"):
            if key not in rec:
                raise DataError(f"record lacks {key!r}")
        try:
            return cls(
                doc_key=rec["doc_key"],
                sentences=rec["sentences"],
                mentions=rec.get("mentions", ()),
                ner=rec.get("ner", ()),
                pieces=rec.get("pieces"),
                singletons=rec.get("singletons", ()),
                probabilities=rec.get("probabilities"),
            )
        except (TypeError, ValueError) as err:
            if isinstance(err, DataError):
                raise
            raise DataError(f"doc {rec.get('doc_key')!r}: malformed field ({err})") from None

    def replace(self, **changes):
        rec = {
            "doc_key": self.doc_key, "sentences": self.sentences, "mentions": self.mentions,
            "ner": self.ner, "pieces": self.pieces, "singletons": self.singletons,
            "probabilities": self.probabilities,
        }
        rec.update(changes)
        return Document(**rec)


def load_corpus(path, labels=None, drop_singletons=False):
    """Parse a jsonlines corpus.  Violations raise :class:`DataError` with the line number.

    ``labels`` restricts NER categories to a declared inventory.
    ``drop_singletons`` removes mentions listed under ``singletons``.
    """
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc = Document.from_record(rec)
            except json.JSONDecodeError as err:
                raise DataError(f"{path}:{lineno}: malformed JSON ({err.msg})") from None
            except DataError as err:
                raise DataError(f"{path}:{lineno}: {err}") from None
            if labels is not None:
                unknown = {lab for _, _, lab in doc.ner} - set(labels)
                if unknown:
                    raise DataError(f"{path}:{lineno}: doc {doc.doc_key!r}: "
                                    f"labels {sorted(unknown)} not in inventory")
            if drop_singletons and doc.singletons:
                single = set(doc.singletons)
                doc = doc.replace(mentions=[m for m in doc.mentions if m not in single])
            docs.append(doc)
    return docs


def write_corpus(docs, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_record(), ensure_ascii=False) + "\n")


# -- synthetic corpora --------------------------------------------------------

_SYLLABLES = ["ka", "lo", "mi", "ne", "su", "ta", "ri", "vo", "pe", "zu",
              "go", "be", "fa", "di", "xo", "ju", "wa", "ho", "ce", "ny"]
_LEXICON_SEED = 1234


def _pseudo_words(rng, n, n_syll, taken, capitalize=False):
    words = []
    while len(words) < n:
        w = "".join(rng.choice(_SYLLABLES, size=n_syll))
        if capitalize:
            w = w.capitalize()
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


class _Lexicon:
    """Fixed vocabulary shared by every synthetic corpus, whatever its seed."""

    def __init__(self, categories):
        rng = np.random.default_rng(_LEXICON_SEED)
        taken = {"of", "the", "a", "this", "that", "some", "every", "he", "she", "it", "they"}
        self.determiners = ["the", "a", "this", "that", "some", "every"]
        self.pronouns = ["he", "she", "it", "they"]
        self.adjectives = _pseudo_words(rng, 30, 3, taken)
        self.fillers = _pseudo_words(rng, 60, 2, taken) + [","]
        self.nouns = {c: _pseudo_words(rng, 15, 2, taken) for c in categories}
        self.names = {c: _pseudo_words(rng, 20, 2, taken, capitalize=True) for c in categories}
        self.cues = {c: _pseudo_words(rng, 3, 4, taken) for c in categories}


def _entity(rng, lex, cat, max_width):
    """A flat entity: a determiner phrase or a multi-token name."""
    if rng.random() < 0.5 and max_width >= 2:
        n_adj = int(rng.integers(0, min(3, max_width - 2) + 1))
        return ([str(rng.choice(lex.determiners))] + list(rng.choice(lex.adjectives, n_adj))
                + [str(rng.choice(lex.nouns[cat]))])
    k = int(rng.integers(1, min(3, max_width) + 1))
    return [str(w) for w in rng.choice(lex.names[cat], k)]


def generate_synthetic(n_docs, seed=7, nesting=False, nested_fraction=0.3,
                       categories=("PROT", "DNA", "CELL"), max_width=10,
                       pronoun_rate=0.15, pieces=False, key_prefix="synth"):
    """Build a deterministic corpus whose mentions follow surface templates.

    Mentions are determiner phrases, capitalised names and pronouns,
    separated by filler words drawn from a disjoint vocabulary.  With
    ``nesting`` on, entity slots become container/inner pairs so that about
    ``nested_fraction`` of all gold spans properly contain another gold
    span.  NER labels are the entity category; pronouns are mentions but
    not named entities.  No gold span is wider than ``max_width``.
    """
    if max_width < 1:
        raise ValueError("max_width must be >= 1")
    categories = list(categories)
    lex = _Lexicon(categories)
    rng = np.random.default_rng(seed)
    pair_prob = nested_fraction / (1.0 - nested_fraction) if nesting else 0.0
    if pair_prob > 1.0:
        raise ValueError("nested_fraction must be <= 0.5")
    docs = []
    for d in range(n_docs):
        sentences, mentions, ner = [], [], []
        offset = 0
        for _ in range(int(rng.integers(2, 5))):
            toks = []
            if rng.random() < 0.5:
                toks.append(str(rng.choice(lex.fillers[:-1])))
            for slot in range(int(rng.integers(1, 4))):
                if slot:
                    toks.extend(str(w) for w in rng.choice(lex.fillers, int(rng.integers(1, 4))))
                start = offset + len(toks)
                if rng.random() < pronoun_rate:
                    toks.append(str(rng.choice(lex.pronouns)))
                    mentions.append((start, start))
                    continue
                cat = str(rng.choice(categories))
                if rng.random() < pair_prob and max_width >= 3:
                    outer_cat = str(rng.choice(categories))
                    if rng.random() < 0.5 and max_width >= 4:
                        # "<det> <noun> of <inner>"
                        inner = _entity(rng, lex, cat, max_width - 3)
                        words = [str(rng.choice(lex.determiners)),
                                 str(rng.choice(lex.nouns[outer_cat])), "of"] + inner
                        inner_start = start + 3
                    else:
                        # "<inner> <cue>"
                        inner = _entity(rng, lex, cat, max_width - 1)
                        words = inner + [str(rng.choice(lex.cues[outer_cat]))]
                        inner_start = start
                    toks.extend(words)
                    end = start + len(words) - 1
                    inner_end = inner_start + len(inner) - 1
                    mentions += [(start, end), (inner_start, inner_end)]
                    ner += [(start, end, outer_cat), (inner_start, inner_end, cat)]
                else:
                    words = _entity(rng, lex, cat, max_width)
                    toks.extend(words)
                    end = start + len(words) - 1
                    mentions.append((start, end))
                    ner.append((start, end, cat))
            toks.append(".")
            sentences.append(toks)
            offset += len(toks)
        piece_lists = None
        if pieces:
            piece_lists = [[p for t in s for p in _split_pieces(t)] for s in sentences]
        mentions.sort()
        ner.sort()
        docs.append(Document(f"{key_prefix}/{seed}/{d:05d}", sentences, mentions, ner,
                             pieces=piece_lists))
    return docs


def _split_pieces(token):
    if len(token) <= 6:
        return [token]
    return [token[:4], "##" + token[4:]]


def count_nested(spans):
    """Number of spans that properly contain at least one other span."""
    spans = sorted({(int(s[0]), int(s[1])) for s in spans})
    n = 0
    for s, e in spans:
        if any(s <= s2 and e2 <= e and (s2, e2) != (s, e) for s2, e2 in spans):
            n += 1
    return n
