"""Pipeline stages behind the CLI: artifact plumbing with provenance checks.

Every artifact records the semantic config hash that produced it, either
in-band (JSON and checkpoint formats) or in a `<name>.meta.json` sidecar
(plain-text and JSONL formats). Stages refuse inputs whose hash disagrees
with the current config unless force is set. All writes are atomic
(temp file in the same directory, then rename).
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .candidates import assemble, candidate_record, collect_extracted
from .config import PipelineConfig
from .corpus import (
    Vocabulary,
    build_vocabulary,
    dedup_corpus,
    encode_extended,
    load_dataset,
    split_tuples,
    tokenize_document,
)
from .evaluation import DocRecord, evaluate_documents
from .merger import (
    MergedCandidate,
    RankedPrediction,
    merge,
    parse_prediction_record,
    prediction_record,
    select_final,
)
from .model import KGModel
from .retriever import (
    build_index,
    collect_retrieved_candidates,
    concat_retrieved,
    load_index,
    load_stopwords,
    retrieve,
    save_index,
)
from .scorer import ScorerModel, build_examples

logger = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    pass


@dataclass
class StagePaths:
    output_dir: Path

    @classmethod
    def from_config(cls, cfg: PipelineConfig) -> "StagePaths":
        return cls(output_dir=Path(cfg.output_dir))

    @property
    def vocab(self) -> Path:
        return self.output_dir / "vocab.txt"

    @property
    def index(self) -> Path:
        return self.output_dir / "index.json"

    @property
    def model(self) -> Path:
        return self.output_dir / "model.ckpt"

    @property
    def scorer(self) -> Path:
        return self.output_dir / "scorer.ckpt"

    @property
    def train_log(self) -> Path:
        return self.output_dir / "train_log.jsonl"

    @property
    def scorer_log(self) -> Path:
        return self.output_dir / "scorer_log.jsonl"

    @property
    def candidates(self) -> Path:
        return self.output_dir / "candidates.jsonl"

    @property
    def predictions(self) -> Path:
        return self.output_dir / "predictions.jsonl"

    @property
    def report(self) -> Path:
        return self.output_dir / "report.json"

    @property
    def effective_config(self) -> Path:
        return self.output_dir / "effective_config.txt"


# -- atomic writes and provenance -------------------------------------------------


def atomic_write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_meta(path, kind: str, config_hash: str):
    meta = {"config_hash": config_hash, "format_version": 1, "kind": kind}
    atomic_write_text(str(path) + ".meta.json", json.dumps(meta, sort_keys=True) + "\n")


def require_artifact(path, stage_hint: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"missing artifact: {path} (run `kpgen {stage_hint}` first)")
    return path


def check_meta(path, kind: str, config_hash: str, force: bool):
    meta_path = Path(str(path) + ".meta.json")
    if not meta_path.exists():
        if force:
            logger.warning("%s: no provenance sidecar, continuing under --force", path)
            return
        raise PipelineError(
            f"{path}: no provenance sidecar ({meta_path.name}); pass --force to use it anyway"
        )
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    check_hash(path, meta.get("config_hash", ""), config_hash, force)
    if meta.get("kind") != kind:
        raise PipelineError(f"{path}: expected a {kind} artifact, found {meta.get('kind')!r}")


def check_hash(path, found: str, expected: str, force: bool):
    if found == expected:
        return
    message = (f"{path}: config hash mismatch (artifact {found or 'unset'!s}, "
               f"current {expected}); pass --force to use it anyway")
    if force:
        logger.warning("%s", message.replace("; pass --force to use it anyway", ""))
        return
    raise PipelineError(message)


def echo_effective_config(cfg: PipelineConfig, paths: StagePaths):
    atomic_write_text(paths.effective_config, cfg.effective_text())


# -- shared loading ---------------------------------------------------------------


def _require_dataset(path_value: str, flag: str) -> Path:
    if not path_value:
        raise PipelineError(f"no dataset configured: set {flag} in the config file")
    path = Path(path_value)
    if not path.exists():
        raise PipelineError(f"missing dataset: {path}")
    return path


def _tokenized(docs, cfg: PipelineConfig):
    return [tokenize_document(doc, max_src_len=cfg.max_src_len) for doc in docs]


def _load_vocab(paths: StagePaths, cfg: PipelineConfig) -> Vocabulary:
    require_artifact(paths.vocab, "preprocess")
    check_meta(paths.vocab, "vocab", cfg.config_hash(), cfg.force)
    return Vocabulary.load(paths.vocab)


def _load_index(paths: StagePaths, cfg: PipelineConfig):
    require_artifact(paths.index, "build-index")
    index = load_index(paths.index)
    check_hash(paths.index, index.config_hash, cfg.config_hash(), cfg.force)
    return index


def _retrieval_inputs(tdoc, index, cfg: PipelineConfig):
    """((rk, rs), r_tokens) for one document; empty in the no-retrieval mode."""
    if cfg.mode == "KG-KE":
        return ([], []), []
    result = retrieve(tdoc, index, k=cfg.retrieval_k)
    rk, rs = collect_retrieved_candidates(result)
    return (rk, rs), concat_retrieved(result)


def _doc_tuples(tdocs, index, vocab, cfg: PipelineConfig):
    tuples = []
    for tdoc in tdocs:
        _, r_tokens = _retrieval_inputs(tdoc, index, cfg)
        tuples.extend(split_tuples(tdoc, r_tokens, vocab, stem_match=cfg.label_stemming))
    return tuples


# -- stages -----------------------------------------------------------------------


def stage_preprocess(cfg: PipelineConfig):
    """Build the shared vocabulary from the (optionally deduplicated) train set."""
    paths = StagePaths.from_config(cfg)
    echo_effective_config(cfg, paths)
    train_path = _require_dataset(cfg.train_path, "train_path")
    docs = load_dataset(train_path)
    if cfg.dedup_train:
        stopwords = load_stopwords(cfg.stopwords_path or None)
        before = len(docs)
        docs = dedup_corpus(docs, stopwords, threshold=cfg.dedup_threshold)
        logger.info("near-duplicate filter kept %d/%d documents", len(docs), before)
    tdocs = _tokenized(docs, cfg)
    vocab = build_vocabulary(tdocs, max_size=cfg.vocab_size)
    tmp = paths.vocab.with_name(paths.vocab.name + ".tmp")
    paths.output_dir.mkdir(parents=True, exist_ok=True)
    vocab.save(tmp)
    os.replace(tmp, paths.vocab)
    write_meta(paths.vocab, "vocab", cfg.config_hash())
    logger.info("vocabulary of %d tokens written to %s", len(vocab), paths.vocab)


def stage_build_index(cfg: PipelineConfig, corpus_path=None, out_path=None):
    paths = StagePaths.from_config(cfg)
    echo_effective_config(cfg, paths)
    corpus_path = Path(corpus_path) if corpus_path else _require_dataset(cfg.train_path, "train_path")
    if not corpus_path.exists():
        raise PipelineError(f"missing dataset: {corpus_path}")
    out_path = Path(out_path) if out_path else paths.index
    docs = load_dataset(corpus_path)
    stopwords = load_stopwords(cfg.stopwords_path or None)
    tdocs = _tokenized(docs, cfg)
    index = build_index(tdocs, stopwords, config_hash=cfg.config_hash())
    out_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = out_path.with_name(out_path.name + ".tmp")
    save_index(index, tmp)
    os.replace(tmp, out_path)
    logger.info("index over %d documents written to %s", len(index), out_path)


def stage_train(cfg: PipelineConfig):
    paths = StagePaths.from_config(cfg)
    echo_effective_config(cfg, paths)
    vocab = _load_vocab(paths, cfg)
    index = None if cfg.mode == "KG-KE" else _load_index(paths, cfg)
    train_docs = load_dataset(_require_dataset(cfg.train_path, "train_path"))
    valid_docs = load_dataset(_require_dataset(cfg.valid_path, "valid_path"))
    train_tuples = _doc_tuples(_tokenized(train_docs, cfg), index, vocab, cfg)
    valid_tuples = _doc_tuples(_tokenized(valid_docs, cfg), index, vocab, cfg)
    model = KGModel(cfg.model_config(), len(vocab), np.random.default_rng(cfg.seed))
    log = model.train(train_tuples, valid_tuples, np.random.default_rng(cfg.seed + 1))
    tmp = paths.model.with_name(paths.model.name + ".tmp")
    model.save(tmp, config_hash=cfg.config_hash())
    os.replace(tmp, paths.model)
    atomic_write_text(paths.train_log,
                      "".join(json.dumps(e, sort_keys=True) + "\n" for e in log))
    write_meta(paths.train_log, "train-log", cfg.config_hash())
    logger.info("trained %d epochs; final train loss %.4f, valid ppl %.3f",
                len(log), log[-1]["train_loss"], log[-1]["valid_ppl"])


def stage_train_scorer(cfg: PipelineConfig):
    paths = StagePaths.from_config(cfg)
    echo_effective_config(cfg, paths)
    vocab = _load_vocab(paths, cfg)
    index = _load_index(paths, cfg)
    train_docs = load_dataset(_require_dataset(cfg.train_path, "train_path"))
    valid_docs = load_dataset(_require_dataset(cfg.valid_path, "valid_path"))

    def examples_for(docs, seed_offset):
        tdocs = _tokenized(docs, cfg)
        retrieved = {}
        for tdoc in tdocs:
            result = retrieve(tdoc, index, k=cfg.retrieval_k)
            retrieved[tdoc.doc_id], _ = collect_retrieved_candidates(result)
        return build_examples(tdocs, retrieved, cfg.scorer_neg_ratio,
                              np.random.default_rng(cfg.seed + seed_offset))

    train_examples = examples_for(train_docs, 2)
    valid_examples = examples_for(valid_docs, 3)
    model = ScorerModel(cfg.scorer_config(), len(vocab), np.random.default_rng(cfg.seed))
    log = model.train(train_examples, valid_examples, vocab,
                      np.random.default_rng(cfg.seed + 1))
    tmp = paths.scorer.with_name(paths.scorer.name + ".tmp")
    model.save(tmp, config_hash=cfg.config_hash())
    os.replace(tmp, paths.scorer)
    atomic_write_text(paths.scorer_log,
                      "".join(json.dumps(e, sort_keys=True) + "\n" for e in log))
    write_meta(paths.scorer_log, "scorer-log", cfg.config_hash())
    logger.info("scorer trained %d epochs; valid accuracy %.3f",
                len(log), log[-1]["valid_acc"])


def _predict_document(tdoc, model, vocab, index, scoring, cfg: PipelineConfig):
    """(candidate record, prediction record) for one document."""
    (rk, rs), r_tokens = _retrieval_inputs(tdoc, index, cfg)
    x_ids = vocab.encode(tdoc.tokens)
    x_ext, oov_tokens = encode_extended(tdoc.tokens, vocab)
    r_ids = vocab.encode(r_tokens)
    if model.config.uses_extractor:
        enc = model.encode_source(x_ids)
        beta = model.extract_scores(enc).data[0].tolist()
        ek, es = collect_extracted(tdoc.tokens, beta, cfg.extract_epsilon,
                                   cfg.extract_filter_punct)
    else:
        ek, es = [], []
    generated = model.beam_search(x_ids, x_ext, oov_tokens, r_ids, vocab)
    gk = [phrase for phrase, _ in generated]
    gs = [score for _, score in generated]
    cand_set = assemble(tdoc.doc_id, tdoc.tokens, (rk, rs), (ek, es), (gk, gs))
    if cfg.mode == "KG-KE-KR-M":
        ranked = merge(cand_set, list(tdoc.tokens), scoring)
    else:
        items = [
            MergedCandidate(phrase=p, final=s, r_adj=0.0, e_adj=0.0, g_adj=s,
                            present=flag)
            for p, s, flag in zip(cand_set.gk, cand_set.gs, cand_set.gk_present)
        ]
        ranked = RankedPrediction(doc_id=tdoc.doc_id, items=items)
    final_items = select_final(ranked.items, cfg.profile)
    pred = RankedPrediction(doc_id=tdoc.doc_id, items=final_items)
    return candidate_record(cand_set), prediction_record(pred)


def stage_predict(cfg: PipelineConfig, input_path=None):
    paths = StagePaths.from_config(cfg)
    echo_effective_config(cfg, paths)
    vocab = _load_vocab(paths, cfg)
    require_artifact(paths.model, "train")
    model, meta = KGModel.load(paths.model)
    check_hash(paths.model, meta.get("config_hash", ""), cfg.config_hash(), cfg.force)
    index = None if cfg.mode == "KG-KE" else _load_index(paths, cfg)
    scoring = None
    if cfg.mode == "KG-KE-KR-M":
        require_artifact(paths.scorer, "train-scorer")
        scorer_model, smeta = ScorerModel.load(paths.scorer)
        check_hash(paths.scorer, smeta.get("config_hash", ""), cfg.config_hash(), cfg.force)
        scoring = scorer_model.scoring_fn(vocab)
    docs_path = Path(input_path) if input_path else _require_dataset(cfg.test_path, "test_path")
    if not docs_path.exists():
        raise PipelineError(f"missing dataset: {docs_path}")
    tdocs = _tokenized(load_dataset(docs_path), cfg)

    def work(tdoc):
        try:
            return _predict_document(tdoc, model, vocab, index, scoring, cfg)
        except Exception as exc:
            raise PipelineError(f"document {tdoc.doc_id}: {exc}") from exc

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(work, tdocs))
    else:
        results = [work(tdoc) for tdoc in tdocs]

    cand_lines = "".join(json.dumps(c, sort_keys=True) + "\n" for c, _ in results)
    pred_lines = "".join(json.dumps(p, sort_keys=True) + "\n" for _, p in results)
    atomic_write_text(paths.candidates, cand_lines)
    write_meta(paths.candidates, "candidates", cfg.config_hash())
    atomic_write_text(paths.predictions, pred_lines)
    write_meta(paths.predictions, "predictions", cfg.config_hash())
    logger.info("wrote candidates and predictions for %d documents", len(results))


def stage_evaluate(cfg: PipelineConfig, pred_path=None, gold_path=None, out_path=None):
    paths = StagePaths.from_config(cfg)
    echo_effective_config(cfg, paths)
    pred_path = Path(pred_path) if pred_path else paths.predictions
    require_artifact(pred_path, "predict")
    check_meta(pred_path, "predictions", cfg.config_hash(), cfg.force)
    gold_path = Path(gold_path) if gold_path else _require_dataset(cfg.test_path, "test_path")
    if not gold_path.exists():
        raise PipelineError(f"missing dataset: {gold_path}")
    out_path = Path(out_path) if out_path else paths.report

    preds_by_id = {}
    with open(pred_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc_id, phrases = parse_prediction_record(json.loads(line))
            except (json.JSONDecodeError, ValueError) as exc:
                raise PipelineError(f"{pred_path}:{lineno}: {exc}") from exc
            if doc_id in preds_by_id:
                raise PipelineError(f"{pred_path}:{lineno}: duplicate id {doc_id!r}")
            preds_by_id[doc_id] = phrases

    gold_docs = _tokenized(load_dataset(gold_path), cfg)
    records = []
    for tdoc in gold_docs:
        phrases = preds_by_id.pop(tdoc.doc_id, None)
        if phrases is None:
            logger.warning("no predictions for document %s; scoring as empty", tdoc.doc_id)
            phrases = []
        records.append(DocRecord(
            doc_id=tdoc.doc_id,
            preds=phrases,
            gold=[list(p) for p in tdoc.gold_phrases],
            source_tokens=list(tdoc.tokens),
        ))
    for extra in preds_by_id:
        logger.warning("predictions for unknown document %s ignored", extra)

    report = evaluate_documents(records, profile=cfg.profile,
                                precision_denominator=cfg.eval_precision_denominator)
    report["config_hash"] = cfg.config_hash()
    atomic_write_text(out_path, json.dumps(report, sort_keys=True, indent=2) + "\n")
    logger.info("report written to %s", out_path)
    return report
