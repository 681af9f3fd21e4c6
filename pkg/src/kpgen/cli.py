"""Command-line entry point.

Subcommands map one-to-one onto pipeline stages; `make-toy` writes the
bundled synthetic corpus and a ready-to-run config for it. Verbosity is
controlled by the KPGEN_LOG_LEVEL environment variable (DEBUG, INFO,
WARNING, ...; default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .config import PipelineConfig, load_config
from .pipeline import PipelineError
from .toydata import dump_dataset, generate_toy_corpus, toy_config_text

logger = logging.getLogger(__name__)

STAGES = ("preprocess", "build-index", "train", "train-scorer", "predict", "evaluate")


def run_subcommand(name: str, cfg: PipelineConfig, extras: dict | None = None) -> int:
    """Dispatch one pipeline stage; returns the process exit status."""
    extras = extras or {}
    if name == "preprocess":
        pipeline.stage_preprocess(cfg)
    elif name == "build-index":
        pipeline.stage_build_index(cfg, corpus_path=extras.get("corpus"),
                                   out_path=extras.get("out"))
    elif name == "train":
        pipeline.stage_train(cfg)
    elif name == "train-scorer":
        pipeline.stage_train_scorer(cfg)
    elif name == "predict":
        pipeline.stage_predict(cfg, input_path=extras.get("input"))
    elif name == "evaluate":
        pipeline.stage_evaluate(cfg, pred_path=extras.get("pred"),
                                gold_path=extras.get("gold"),
                                out_path=extras.get("out"))
    else:
        raise ValueError(f"unknown subcommand {name!r}")
    return 0


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--seed", type=int, help="override the base RNG seed")
    parser.add_argument("--threads", type=int, help="worker threads for predict")
    parser.add_argument("--mode", help="KG-KE | KG-KR | KG-KE-KR | KG-KE-KR-M")
    parser.add_argument("--profile", help="kp20k | other | semeval")
    parser.add_argument("--output-dir", dest="output_dir", help="artifact directory")
    parser.add_argument("--force", action="store_true", default=None,
                        help="use artifacts whose config hash mismatches")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kpgen",
                                     description="keyphrase generation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="build the vocabulary from the train set")
    _add_common(p)

    p = sub.add_parser("build-index", help="build the retrieval index")
    _add_common(p)
    p.add_argument("--corpus", help="dataset to index (default: train_path)")
    p.add_argument("--stopwords", help="stopword list, one token per line")
    p.add_argument("--out", help="index output path (default: <output_dir>/index.json)")

    p = sub.add_parser("train", help="train the extractor + generator network")
    _add_common(p)

    p = sub.add_parser("train-scorer", help="train the candidate-document scorer")
    _add_common(p)

    p = sub.add_parser("predict", help="write candidates and ranked predictions")
    _add_common(p)
    p.add_argument("--input", help="dataset to predict on (default: test_path)")

    p = sub.add_parser("evaluate", help="score predictions against gold keyphrases")
    _add_common(p)
    p.add_argument("--pred", help="predictions file (default: <output_dir>/predictions.jsonl)")
    p.add_argument("--gold", help="gold dataset (default: test_path)")
    p.add_argument("--out", help="report path (default: <output_dir>/report.json)")

    p = sub.add_parser("make-toy", help="write the bundled synthetic corpus")
    p.add_argument("--out", required=True, help="directory for the toy files")
    p.add_argument("--seed", type=int, default=1)

    return parser


def _configure_logging():
    level_name = os.environ.get("KPGEN_LOG_LEVEL", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _make_toy(out_dir: str, seed: int) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, valid, test = generate_toy_corpus(seed=seed)
    dump_dataset(train, out / "toy_train.jsonl")
    dump_dataset(valid, out / "toy_valid.jsonl")
    dump_dataset(test, out / "toy_test.jsonl")
    (out / "toy_config.txt").write_text(toy_config_text(out), encoding="utf-8")
    print(f"toy corpus ({len(train)} train / {len(valid)} valid / {len(test)} test) "
          f"written to {out}")
    return 0


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "make-toy":
            return _make_toy(args.out, args.seed)
        overrides = {
            "seed": args.seed,
            "threads": args.threads,
            "mode": args.mode,
            "profile": args.profile,
            "output_dir": args.output_dir,
            "force": args.force,
        }
        if args.command == "build-index" and args.stopwords:
            overrides["stopwords_path"] = args.stopwords
        cfg = load_config(args.config, overrides)
        extras = {k: getattr(args, k, None)
                  for k in ("corpus", "out", "input", "pred", "gold")}
        return run_subcommand(args.command, cfg, extras)
    except (PipelineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
