import dataclasses
import json

import pytest

from kpgen import pipeline
from kpgen.candidates import parse_candidate_record
from kpgen.corpus import load_dataset
from kpgen.merger import parse_prediction_record

from conftest import clone_run


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


class TestArtifacts:
    def test_all_artifacts_written(self, toy_run):
        p = toy_run["paths"]
        for path in (p.vocab, p.index, p.model, p.scorer, p.train_log,
                     p.scorer_log, p.candidates, p.predictions, p.report,
                     p.effective_config):
            assert path.exists(), path

    def test_no_temp_files_left(self, toy_run):
        leftovers = list(toy_run["paths"].output_dir.glob("*.tmp"))
        assert leftovers == []

    def test_effective_config_echoed_with_hash(self, toy_run):
        text = toy_run["paths"].effective_config.read_text(encoding="utf-8")
        assert f"# config_hash = {toy_run['cfg'].config_hash()}" in text
        assert "mode = KG-KE-KR-M" in text

    def test_sidecar_provenance(self, toy_run):
        p = toy_run["paths"]
        meta = json.loads((p.vocab.parent / (p.vocab.name + ".meta.json")).read_text())
        assert meta == {"config_hash": toy_run["cfg"].config_hash(),
                        "format_version": 1, "kind": "vocab"}

    def test_candidate_and_prediction_schemas(self, toy_run):
        p = toy_run["paths"]
        test_ids = [d.id for d in load_dataset(toy_run["cfg"].test_path)]
        cands = read_jsonl(p.candidates)
        preds = read_jsonl(p.predictions)
        assert [c["id"] for c in cands] == test_ids
        assert [r["id"] for r in preds] == test_ids
        for obj in cands:
            parse_candidate_record(obj)
        for obj in preds:
            doc_id, phrases = parse_prediction_record(obj)
            assert all(phrase for phrase in phrases)

    def test_report_shape(self, toy_run):
        report = toy_run["report"]
        assert report["n_documents"] == 5
        assert report["config_hash"] == toy_run["cfg"].config_hash()
        assert set(report["total"]) == {"f1_at_5", "f1_at_10", "map_at_10", "n_docs"}
        assert len(report["documents"]) == 5
        on_disk = json.loads(toy_run["paths"].report.read_text(encoding="utf-8"))
        assert on_disk == report


class TestDeterminism:
    def test_predict_rerun_byte_identical(self, toy_run, tmp_path):
        cfg, paths = clone_run(toy_run, tmp_path)
        before_pred = paths.predictions.read_bytes()
        before_cand = paths.candidates.read_bytes()
        pipeline.stage_predict(cfg)
        assert paths.predictions.read_bytes() == before_pred
        assert paths.candidates.read_bytes() == before_cand

    def test_threaded_predict_matches_single(self, toy_run, tmp_path):
        cfg, paths = clone_run(toy_run, tmp_path, threads=2)
        assert cfg.config_hash() == toy_run["cfg"].config_hash()
        pipeline.stage_predict(cfg)
        assert paths.predictions.read_bytes() == toy_run["paths"].predictions.read_bytes()

    def test_evaluate_rerun_byte_identical(self, toy_run, tmp_path):
        cfg, paths = clone_run(toy_run, tmp_path)
        before = paths.report.read_bytes()
        pipeline.stage_evaluate(cfg)
        assert paths.report.read_bytes() == before


class TestProvenanceChecks:
    def test_semantic_change_refused(self, toy_run, tmp_path):
        cfg, _ = clone_run(toy_run, tmp_path, lr=0.002)
        with pytest.raises(pipeline.PipelineError, match="config hash mismatch"):
            pipeline.stage_predict(cfg)

    def test_force_overrides_mismatch(self, toy_run, tmp_path):
        cfg, paths = clone_run(toy_run, tmp_path, lr=0.002, force=True)
        pipeline.stage_predict(cfg)
        assert paths.predictions.exists()

    def test_path_change_is_not_semantic(self, toy_run, tmp_path):
        moved = tmp_path / "moved.jsonl"
        moved.write_bytes((toy_run["root"] / "test.jsonl").read_bytes())
        cfg, paths = clone_run(toy_run, tmp_path, test_path=str(moved))
        pipeline.stage_predict(cfg)
        assert paths.predictions.read_bytes() == toy_run["paths"].predictions.read_bytes()

    def test_missing_artifact_names_stage(self, toy_run, tmp_path):
        cfg = dataclasses.replace(toy_run["cfg"], output_dir=str(tmp_path / "empty"))
        with pytest.raises(pipeline.PipelineError, match="kpgen preprocess"):
            pipeline.stage_predict(cfg)

    def test_missing_sidecar_requires_force(self, toy_run, tmp_path):
        cfg, paths = clone_run(toy_run, tmp_path)
        (paths.output_dir / "vocab.txt.meta.json").unlink()
        with pytest.raises(pipeline.PipelineError, match="--force"):
            pipeline.stage_predict(cfg)
        pipeline.stage_predict(dataclasses.replace(cfg, force=True))

    def test_wrong_kind_artifact_rejected(self, toy_run, tmp_path):
        cfg, paths = clone_run(toy_run, tmp_path)
        meta_path = paths.output_dir / "vocab.txt.meta.json"
        meta = json.loads(meta_path.read_text())
        meta["kind"] = "predictions"
        meta_path.write_text(json.dumps(meta))
        with pytest.raises(pipeline.PipelineError, match="expected a vocab artifact"):
            pipeline.stage_predict(cfg)


class TestModes:
    def test_plain_joint_mode_reuses_artifacts_and_skips_merge(self, toy_run, tmp_path):
        # same network hash as the merge variant, so no retrain needed
        cfg, paths = clone_run(toy_run, tmp_path, mode="KG-KE-KR")
        assert cfg.config_hash() == toy_run["cfg"].config_hash()
        pipeline.stage_predict(cfg)
        merged_rows = read_jsonl(toy_run["paths"].predictions)
        plain_rows = read_jsonl(paths.predictions)
        assert plain_rows != merged_rows
        for row in plain_rows:
            assert row["predictions"], row["id"]
            for item in row["predictions"]:
                assert item["sources"]["r"] == 0.0
                assert item["sources"]["e"] == 0.0
                assert item["sources"]["g"] == item["score"]

    def test_scorer_not_required_outside_merge_mode(self, toy_run, tmp_path):
        cfg, paths = clone_run(toy_run, tmp_path, mode="KG-KE-KR")
        (paths.output_dir / "scorer.ckpt").unlink()
        pipeline.stage_predict(cfg)


class TestEvaluateEdges:
    def test_missing_document_scored_empty_with_warning(self, toy_run, tmp_path, caplog):
        cfg, paths = clone_run(toy_run, tmp_path)
        rows = paths.predictions.read_text(encoding="utf-8").splitlines()
        paths.predictions.write_text("\n".join(rows[1:]) + "\n", encoding="utf-8")
        with caplog.at_level("WARNING", logger="kpgen.pipeline"):
            report = pipeline.stage_evaluate(cfg)
        assert "no predictions for document" in caplog.text
        assert report["n_documents"] == 5

    def test_extra_document_warned_and_ignored(self, toy_run, tmp_path, caplog):
        cfg, paths = clone_run(toy_run, tmp_path)
        rows = paths.predictions.read_text(encoding="utf-8").splitlines()
        ghost = json.loads(rows[0])
        ghost["id"] = "no-such-doc"
        rows.append(json.dumps(ghost))
        paths.predictions.write_text("\n".join(rows) + "\n", encoding="utf-8")
        with caplog.at_level("WARNING", logger="kpgen.pipeline"):
            report = pipeline.stage_evaluate(cfg)
        assert "no-such-doc" in caplog.text
        assert report["n_documents"] == 5

    def test_duplicate_prediction_id_rejected(self, toy_run, tmp_path):
        cfg, paths = clone_run(toy_run, tmp_path)
        rows = paths.predictions.read_text(encoding="utf-8").splitlines()
        rows.append(rows[0])
        paths.predictions.write_text("\n".join(rows) + "\n", encoding="utf-8")
        with pytest.raises(pipeline.PipelineError, match="duplicate id"):
            pipeline.stage_evaluate(cfg)

    def test_malformed_prediction_line_names_location(self, toy_run, tmp_path):
        cfg, paths = clone_run(toy_run, tmp_path)
        paths.predictions.write_text("not json\n", encoding="utf-8")
        with pytest.raises(pipeline.PipelineError, match=":1:"):
            pipeline.stage_evaluate(cfg)
