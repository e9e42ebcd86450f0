"""Span-based neural mention detection and nested NER on a small numpy autodiff engine."""

from .config import RunConfig
from .corpus import Document, generate_synthetic, load_corpus, write_corpus
from .estimator import MentionDetector
from .metrics import MetricsReport, score_mentions, score_ner
from .selection import OperatingMode

__all__ = [
    "Document",
    "MentionDetector",
    "MetricsReport",
    "OperatingMode",
    "RunConfig",
    "generate_synthetic",
    "load_corpus",
    "score_mentions",
    "score_ner",
    "write_corpus",
]

__version__ = "0.1.0"
