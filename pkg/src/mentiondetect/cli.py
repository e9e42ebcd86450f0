"""Command line: ``mentiondetect {train,predict,evaluate,gradcheck,synth}``.

Model and training flags mirror :class:`RunConfig` field names (``--lstm-size``
for ``lstm_size``); ``--config`` reads a JSON file whose keys are the same
field names, and flags given on the command line win over the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from .config import HEAD_TYPES, MODES, TASKS, RunConfig
from .corpus import generate_synthetic, load_corpus, write_corpus
from .estimator import MentionDetector
from .exceptions import MentionDetectError
from .gradcheck import check_model, check_ops
from .metrics import score_mentions, score_ner
from .selection import HIGH_F1, HIGH_RECALL, OperatingMode, span_budget

log = logging.getLogger("mentiondetect")

_CHOICES = {"head": HEAD_TYPES, "task": TASKS, "mode": MODES,
            "precision": ("float32", "float64")}
# fields with dedicated flags or handled elsewhere
_SPECIAL = {"lam", "beta", "labels", "char_cnn", "no_dev", "drop_singletons",
            "train_path", "dev_path", "test_path", "output_dir"}


class UsageError(Exception):
    pass


def _add_mode_flags(p):
    group = p.add_mutually_exclusive_group()
    group.add_argument("--lambda", dest="lam", type=float, default=None,
                       help="high-recall mode: keep floor(lambda * T) spans per document")
    group.add_argument("--beta", type=float, default=None,
                       help="high-F1 mode: keep spans with probability above beta")


def _add_config_flags(p):
    p.add_argument("--config", type=Path, help="JSON file of RunConfig fields")
    for f in fields(RunConfig):
        if f.name.startswith("_") or f.name in _SPECIAL:
            continue
        kind = type(f.default) if f.default is not None else str
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind, default=None,
                       choices=_CHOICES.get(f.name))
    p.add_argument("--labels", type=lambda s: s.split(","), default=None,
                   help="comma-separated NER label inventory")
    p.add_argument("--char-cnn", dest="char_cnn", action=argparse.BooleanOptionalAction,
                   default=None)
    p.add_argument("--no-dev", dest="no_dev", action="store_true", default=None,
                   help="ignore the dev set and keep the final parameters")
    p.add_argument("--drop-singletons", dest="drop_singletons", action="store_true",
                   default=None)
    _add_mode_flags(p)


def build_parser():
    parser = argparse.ArgumentParser(prog="mentiondetect",
                                     description="Span-based mention detection and nested NER.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_config_flags(p)
    p.add_argument("--train", dest="train_path")
    p.add_argument("--dev", dest="dev_path")
    p.add_argument("--test", dest="test_path")
    p.add_argument("--output-dir", dest="output_dir")

    p = sub.add_parser("predict", help="write a predictions file")
    p.add_argument("--model", required=True, type=Path, help="checkpoint directory")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--output", required=True, type=Path)
    _add_mode_flags(p)

    p = sub.add_parser("evaluate", help="score predictions or a model against gold")
    p.add_argument("--gold", required=True, type=Path)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--pred", type=Path, help="predictions file")
    source.add_argument("--model", type=Path, help="checkpoint to run on the gold file")
    p.add_argument("--task", choices=TASKS, default=None)
    p.add_argument("--min-f1", type=float, default=None,
                   help="exit with status 1 when F1 falls below this value")
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    _add_mode_flags(p)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op and head")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("--output", required=True, type=Path)
    p.add_argument("--docs", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--nesting", action="store_true")
    p.add_argument("--nested-fraction", type=float, default=0.3)
    p.add_argument("--max-width", type=int, default=10)
    p.add_argument("--categories", type=lambda s: tuple(s.split(",")),
                   default=("PROT", "DNA", "CELL"))
    p.add_argument("--pronoun-rate", type=float, default=0.15)
    p.add_argument("--pieces", action="store_true", help="add a sub-word segmentation")
    p.add_argument("--key-prefix", default="synth")
    return parser


def _existing(path, what):
    if path is None:
        raise UsageError(f"{what} is required")
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{what} {path} does not exist")
    return path


def _mode_from(args, default=None):
    if args.lam is not None:
        return OperatingMode.high_recall(args.lam)
    if args.beta is not None:
        return OperatingMode.high_f1(args.beta)
    return default


def resolve_config(args):
    """Merge ``--config`` with explicitly given flags (flags win)."""
    given = {f.name: getattr(args, f.name) for f in fields(RunConfig)
             if not f.name.startswith("_") and getattr(args, f.name, None) is not None}
    if args.lam is not None:
        given["mode"] = HIGH_RECALL
    elif args.beta is not None:
        given["mode"] = HIGH_F1
    if args.config is not None:
        return RunConfig.from_file(_existing(args.config, "--config"), **given)
    return RunConfig(**given)


def _write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def cmd_train(args):
    cfg = resolve_config(args)
    train = load_corpus(_existing(cfg.train_path, "--train"),
                        drop_singletons=cfg.drop_singletons)
    dev = load_corpus(_existing(cfg.dev_path, "--dev"),
                      drop_singletons=cfg.drop_singletons) if cfg.dev_path else None
    if cfg.output_dir is None:
        raise UsageError("--output-dir is required")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
    est = MentionDetector(**cfg.estimator_params())
    log_path = out / "metrics.jsonl"
    log_path.write_text("")

    def record(rec):
        with open(log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    started = time.perf_counter()
    est.fit(train, X_dev=dev, callback=record)
    est.save(out / "checkpoint")
    if cfg.test_path:
        report = est.evaluate(load_corpus(_existing(cfg.test_path, "--test")))
        (out / "test_metrics.json").write_text(json.dumps(report.to_dict(), indent=1))
        print(report.format())
    print(f"trained {cfg.train_steps} steps in {time.perf_counter() - started:.1f}s; "
          f"checkpoint at {out / 'checkpoint'}")
    return 0


def cmd_predict(args):
    est = MentionDetector.load(_existing(args.model, "--model"))
    docs = load_corpus(_existing(args.input, "--input"))
    mode = _mode_from(args)
    if mode is not None and est.max_width is not None and est.head != "biaffine":
        mode.check_width(est.max_width)
    write_corpus(est.predict_documents(docs, mode), args.output)
    print(f"wrote {len(docs)} documents to {args.output}")
    return 0


def _reselect(doc, spans, mode):
    """Apply a mode to a prediction file's spans using their stored probabilities."""
    if mode is None or doc.probabilities is None:
        return list(spans)
    probs = np.asarray(doc.probabilities)
    if mode.kind == HIGH_F1:
        return [s for s, p in zip(spans, probs) if p > mode.value]
    order = sorted(range(len(spans)), key=lambda i: (-probs[i], spans[i][0],
                                                     spans[i][1] - spans[i][0], i))
    return [spans[i] for i in order[:span_budget(mode.value, doc.n_tokens)]]


def cmd_evaluate(args):
    gold_docs = load_corpus(_existing(args.gold, "--gold"))
    mode = _mode_from(args)
    if args.model is not None:
        est = MentionDetector.load(_existing(args.model, "--model"))
        pred_docs = est.predict_documents(gold_docs, mode)
        task = "ner" if est.model_.n_out > 1 else "md"
    else:
        pred_docs = load_corpus(_existing(args.pred, "--pred"))
        task = args.task or ("ner" if any(d.ner for d in gold_docs) and
                             not any(d.mentions for d in gold_docs) else "md")
    gold_keys = [d.doc_key for d in gold_docs]
    by_key = {d.doc_key: d for d in pred_docs}
    if set(by_key) != set(gold_keys):
        raise UsageError("prediction and gold files cover different documents")
    field = "mentions" if task == "md" else "ner"
    preds, gold, ratios = {}, {}, []
    for g in gold_docs:
        p = by_key[g.doc_key]
        if p.tokens != g.tokens:
            raise UsageError(f"doc {g.doc_key!r}: predicted tokens differ from gold")
        selected = _reselect(p, getattr(p, field), mode if args.pred is not None else None)
        preds[g.doc_key] = selected
        gold[g.doc_key] = getattr(g, field)
        ratios.append(len(selected) / max(g.n_tokens, 1))
    report = score_mentions(preds, gold) if task == "md" else score_ner(preds, gold)
    if args.json:
        out = report.to_dict()
        out["mention_token_ratio"] = {"mean": float(np.mean(ratios)),
                                      "min": float(np.min(ratios)),
                                      "max": float(np.max(ratios))}
        print(json.dumps(out, indent=1))
    else:
        print(report.format())
        print(f"mention/token ratio per document: mean {np.mean(ratios):.4f} "
              f"min {np.min(ratios):.4f} max {np.max(ratios):.4f}")
    if args.min_f1 is not None and report.f1 < args.min_f1:
        print(f"F1 {report.f1:.4f} is below the required {args.min_f1:.4f}", file=sys.stderr)
        return 1
    return 0


def cmd_gradcheck(args):
    started = time.perf_counter()
    failed = 0
    for kind, results in check_ops(seed=args.seed, tolerance=args.tolerance).items():
        worst = max(r.max_rel_error for r in results)
        ok = all(r.passed for r in results)
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} op {kind:<22} max rel error {worst:.2e}")
    for head in HEAD_TYPES:
        for task in TASKS:
            results = check_model(head, task, seed=args.seed, tolerance=args.tolerance)
            worst = max(r.max_rel_error for r in results)
            ok = all(r.passed for r in results)
            failed += not ok
            print(f"{'PASS' if ok else 'FAIL'} head {head}/{task:<17} max rel error {worst:.2e}")
    print(f"{failed} failure(s) in {time.perf_counter() - started:.1f}s")
    return 1 if failed else 0


def cmd_synth(args):
    docs = generate_synthetic(args.docs, seed=args.seed, nesting=args.nesting,
                              nested_fraction=args.nested_fraction, categories=args.categories,
                              max_width=args.max_width, pronoun_rate=args.pronoun_rate,
                              pieces=args.pieces, key_prefix=args.key_prefix)
    write_corpus(docs, args.output)
    print(f"wrote {len(docs)} documents to {args.output}")
    return 0


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "evaluate": cmd_evaluate,
            "gradcheck": cmd_gradcheck, "synth": cmd_synth}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as err:
        parser.error(str(err))
    except (MentionDetectError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
