"""CLI stage commands, manifest bookkeeping, resume, and report assembly tests."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from adrcheck import cli
from conftest import make_gating_repo, run_stages, write_config


def _manifest(out_dir: Path) -> dict:
    return json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))


class TestScan:
    def test_writes_corpus_per_project(self, pipeline_run):
        _, out_dir = pipeline_run
        files = list((out_dir / "corpus").glob("*.json"))
        assert [f.name for f in files] == ["proj.json"]
        stage = _manifest(out_dir)["stages"]["scan"]
        assert stage["projects"][0]["files"] == 3
        assert stage["complete"] is True

    def test_rerun_byte_identical(self, tmp_path, fixture_repo):
        out_dir = tmp_path / "out"
        config = write_config(tmp_path / "c.yaml", [fixture_repo], out_dir)
        assert cli.main(["--config", str(config), "scan"]) == 0
        first = (out_dir / "corpus" / "proj.json").read_bytes()
        assert cli.main(["--config", str(config), "scan"]) == 0
        assert (out_dir / "corpus" / "proj.json").read_bytes() == first

    def test_missing_root_exit_config(self, tmp_path, capsys):
        config = write_config(tmp_path / "c.yaml", [tmp_path / "nope"], tmp_path / "out")
        assert cli.main(["--config", str(config), "scan"]) == cli.EXIT_CONFIG
        assert "error:" in capsys.readouterr().err

    def test_config_required(self, capsys):
        assert cli.main(["scan"]) == cli.EXIT_CONFIG


class TestAdrs:
    def test_gating_bookkeeping(self, tmp_path):
        repo = make_gating_repo(tmp_path / "gate")
        out_dir = tmp_path / "out"
        config = write_config(tmp_path / "c.yaml", [repo], out_dir)
        assert run_stages(config, ("scan", "adrs")) == [0, 0]
        stage = _manifest(out_dir)["stages"]["adrs"]
        assert stage["adr_files"] == 4
        assert stage["decisions_total"] == 12
        assert stage["accepted"] == 9
        assert stage["gated_out"] == 3
        lines = (out_dir / "decisions.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 9

    def test_unknown_template_skipped(self, tmp_path):
        repo = tmp_path / "p"
        (repo / "docs" / "adr").mkdir(parents=True)
        (repo / "docs" / "adr" / "notes.md").write_text("just prose\n", encoding="utf-8")
        out_dir = tmp_path / "out"
        config = write_config(tmp_path / "c.yaml", [repo], out_dir)
        assert run_stages(config, ("scan", "adrs")) == [0, 0]
        stage = _manifest(out_dir)["stages"]["adrs"]
        assert stage["unknown_template"] == 1
        assert stage["decisions_total"] == 0


class TestJudgeAndValidate:
    def test_full_pipeline_outputs(self, pipeline_run):
        _, out_dir = pipeline_run
        judgements = (out_dir / "judgements.jsonl").read_text(encoding="utf-8").splitlines()
        verdicts = (out_dir / "verdicts.jsonl").read_text(encoding="utf-8").splitlines()
        outcomes = (out_dir / "outcomes.jsonl").read_text(encoding="utf-8").splitlines()
        # 4 accepted decisions, 3 validators each
        assert len(judgements) == 4
        assert len(verdicts) == 12
        assert len(outcomes) == 4
        for line in judgements:
            assert json.loads(line)["label"] in ("C", "NC", "CIA")

    def test_judge_without_decisions_is_config_error(self, tmp_path, fixture_repo):
        config = write_config(tmp_path / "c.yaml", [fixture_repo], tmp_path / "out")
        assert cli.main(["--config", str(config), "judge"]) == cli.EXIT_CONFIG

    def test_resume_after_truncation_matches_clean_run(self, tmp_path, fixture_repo):
        out_dir = tmp_path / "out"
        config = write_config(tmp_path / "c.yaml", [fixture_repo], out_dir)
        assert run_stages(config) == [0, 0, 0, 0, 0]
        clean = (out_dir / "judgements.jsonl").read_bytes()

        # Simulate a crash mid-judge: drop the last record and the stage marker.
        lines = clean.decode("utf-8").splitlines(keepends=True)
        (out_dir / "judgements.jsonl").write_text("".join(lines[:-1]), encoding="utf-8")
        manifest = _manifest(out_dir)
        manifest["stages"]["judge"]["complete"] = False
        (out_dir / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")

        assert cli.main(["--config", str(config), "--resume", "judge"]) == 0
        assert (out_dir / "judgements.jsonl").read_bytes() == clean

    def test_resume_skips_complete_stage(self, pipeline_run):
        config, out_dir = pipeline_run
        before = (out_dir / "judgements.jsonl").read_bytes()
        assert cli.main(["--config", str(config), "--resume", "judge"]) == 0
        assert (out_dir / "judgements.jsonl").read_bytes() == before


class TestAgreement:
    def test_from_run_artifacts(self, pipeline_run):
        config, out_dir = pipeline_run
        assert cli.main(["--out-dir", str(out_dir), "agreement"]) == 0
        payload = json.loads((out_dir / "reports" / "agreement.json").read_text(encoding="utf-8"))
        assert payload["N"] == 4
        assert payload["n"] == 4
        assert payload["excluded_items"] == 0
        assert (out_dir / "reports" / "agreement.md").exists()

    def test_from_ratings_csv(self, tmp_path):
        csv_path = tmp_path / "ratings.csv"
        csv_path.write_text(
            "item_id,R1,R2,R3\n" "i1,C,C,C\n" "i2,C,NC,NC\n",
            encoding="utf-8",
        )
        out_dir = tmp_path / "out"
        assert cli.main(["--out-dir", str(out_dir), "agreement", "--ratings", str(csv_path)]) == 0
        payload = json.loads((out_dir / "reports" / "agreement.json").read_text(encoding="utf-8"))
        # P_i: 1 and 1/3; mean 2/3.
        assert payload["observed_agreement_mean"] == pytest.approx(2 / 3, abs=1e-6)


class TestEvaluate:
    def test_against_judgements(self, pipeline_run, tmp_path):
        config, out_dir = pipeline_run
        records = [
            json.loads(line)
            for line in (out_dir / "judgements.jsonl").read_text(encoding="utf-8").splitlines()
        ]
        truth = tmp_path / "truth.csv"
        truth.write_text(
            "decision_id,expert_label\n"
            + "".join(f"{r['decision_id']},{r['label']}\n" for r in records),
            encoding="utf-8",
        )
        code = cli.main(
            ["--out-dir", str(out_dir), "evaluate", "--truth", str(truth)]
        )
        assert code == 0
        payload = json.loads((out_dir / "reports" / "performance.json").read_text(encoding="utf-8"))
        assert payload["accuracy"] == 1.0
        assert payload["evaluated_items"] == len(records)

    def test_bad_truth_rows_exit_partial(self, pipeline_run, tmp_path):
        config, out_dir = pipeline_run
        first = json.loads(
            (out_dir / "judgements.jsonl").read_text(encoding="utf-8").splitlines()[0]
        )
        truth = tmp_path / "truth.csv"
        truth.write_text(
            "decision_id,expert_label\n"
            f"{first['decision_id']},{first['label']}\n"
            "bogus-id,Maybe\n",
            encoding="utf-8",
        )
        code = cli.main(["--out-dir", str(out_dir), "evaluate", "--truth", str(truth)])
        assert code == cli.EXIT_PARTIAL
        payload = json.loads((out_dir / "reports" / "performance.json").read_text(encoding="utf-8"))
        assert len(payload["rejected_truth_rows"]) == 1


class TestSample:
    def test_from_decisions_file(self, pipeline_run):
        config, out_dir = pipeline_run
        assert cli.main(["--out-dir", str(out_dir), "sample"]) == 0
        plan = json.loads((out_dir / "reports" / "sample.json").read_text(encoding="utf-8"))
        assert plan["population_size"] == 4
        assert plan["sample_size"] == 4  # capped at population
        assert plan["seed"] == 42

    def test_plain_id_list_and_seed_flag(self, tmp_path):
        ids = tmp_path / "ids.txt"
        ids.write_text("".join(f"d{i}\n" for i in range(1471)), encoding="utf-8")
        out_dir = tmp_path / "out"
        code = cli.main(
            ["--out-dir", str(out_dir), "--seed", "7", "sample", "--population-file", str(ids)]
        )
        assert code == 0
        plan = json.loads((out_dir / "reports" / "sample.json").read_text(encoding="utf-8"))
        assert plan["sample_size"] == 305
        assert plan["seed"] == 7
        assert len(set(plan["sampled_ids"])) == 305


class TestReport:
    def test_assembles_sections(self, pipeline_run):
        config, out_dir = pipeline_run
        assert cli.main(["--out-dir", str(out_dir), "agreement"]) == 0
        assert cli.main(["--out-dir", str(out_dir), "sample"]) == 0
        assert cli.main(["--out-dir", str(out_dir), "report"]) == 0
        text = (out_dir / "reports" / "report.md").read_text(encoding="utf-8")
        assert "Decision bookkeeping" in text
        assert "Human-validation sample" in text
        assert "Run id:" in text


class TestManifest:
    def test_rerun_manifest_byte_identical(self, tmp_path, fixture_repo):
        # No timestamps or other volatile fields: a rerun reproduces the
        # manifest exactly.
        out_dir = tmp_path / "out"
        config = write_config(tmp_path / "c.yaml", [fixture_repo], out_dir)
        assert run_stages(config) == [0, 0, 0, 0, 0]
        first = (out_dir / "manifest.json").read_bytes()
        assert run_stages(config) == [0, 0, 0, 0, 0]
        assert (out_dir / "manifest.json").read_bytes() == first

    def test_run_id_stable_for_same_config(self, tmp_path, fixture_repo):
        out_dir = tmp_path / "out"
        config = write_config(tmp_path / "c.yaml", [fixture_repo], out_dir)
        assert cli.main(["--config", str(config), "scan"]) == 0
        first = _manifest(out_dir)["run_id"]
        assert cli.main(["--config", str(config), "scan"]) == 0
        assert _manifest(out_dir)["run_id"] == first

    def test_changed_config_resets_stages(self, tmp_path, fixture_repo):
        out_dir = tmp_path / "out"
        config = write_config(tmp_path / "c.yaml", [fixture_repo], out_dir)
        assert run_stages(config, ("scan", "adrs")) == [0, 0]
        assert "adrs" in _manifest(out_dir)["stages"]
        config2 = write_config(tmp_path / "c2.yaml", [fixture_repo], out_dir, k=3)
        assert cli.main(["--config", str(config2), "scan"]) == 0
        stages = _manifest(out_dir)["stages"]
        assert "adrs" not in stages  # new run id starts fresh
