"""Shared fixture: one tiny end-to-end pipeline run over a toy subset.

The run directory is session-scoped and treated as immutable; tests that
need to mutate artifacts copy the tree into their own tmp dir first.
"""

import dataclasses

import pytest

from kpgen import pipeline
from kpgen.config import PipelineConfig
from kpgen.toydata import dump_dataset, generate_toy_corpus

TINY = dict(
    mode="KG-KE-KR-M",
    seed=1,
    embedding_dim=12,
    hidden_dim=16,
    dropout=0.0,
    batch_size=10,
    lr=0.004,
    epochs=2,
    patience=2,
    beam_depth=3,
    beam_size=10,
    scorer_embedding_dim=8,
    scorer_hidden_dim=8,
    scorer_ff_dim=4,
    scorer_epochs=1,
    scorer_patience=1,
)


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    """Full artifact set from train -> evaluate on a 15/5/5 toy subset."""
    root = tmp_path_factory.mktemp("toyrun")
    train, valid, test = generate_toy_corpus(seed=1)
    dump_dataset(train[:15], root / "train.jsonl")
    dump_dataset(valid[:5], root / "valid.jsonl")
    dump_dataset(test[:5], root / "test.jsonl")
    cfg = PipelineConfig(
        train_path=str(root / "train.jsonl"),
        valid_path=str(root / "valid.jsonl"),
        test_path=str(root / "test.jsonl"),
        output_dir=str(root / "run"),
        **TINY,
    )
    pipeline.stage_preprocess(cfg)
    pipeline.stage_build_index(cfg)
    pipeline.stage_train(cfg)
    pipeline.stage_train_scorer(cfg)
    pipeline.stage_predict(cfg)
    report = pipeline.stage_evaluate(cfg)
    return {"root": root, "cfg": cfg, "report": report,
            "paths": pipeline.StagePaths.from_config(cfg)}


def clone_run(toy_run, tmp_path, **changes):
    """Copy of the session run dir with an optionally modified config."""
    import shutil

    out = tmp_path / "run"
    shutil.copytree(toy_run["paths"].output_dir, out)
    cfg = dataclasses.replace(toy_run["cfg"], output_dir=str(out), **changes)
    return cfg, pipeline.StagePaths.from_config(cfg)
