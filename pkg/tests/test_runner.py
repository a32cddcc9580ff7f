"""End-to-end runner tests: determinism, resume, leakage audit, baseline path."""

import json
from pathlib import Path

import pytest

import stanceval.llm as llm_module
from stanceval.corpus import load_labeled_corpus, split_dataset
from stanceval.labels import StanceLabel
from stanceval.parse import parse_label
from stanceval.runner import (
    RunConfig,
    RunnerError,
    config_hash,
    emit_report,
    read_records,
    report_from_records,
    run_evaluation,
)
from stanceval.vectorize import TrainConfig, fit_baseline, save_model

FIXTURES = Path(__file__).parent.parent / "data" / "fixtures"
CORPUS_12 = FIXTURES / "comments_12.csv"
SCORING_RULES = FIXTURES / "mock_rules_scoring.txt"

EXPECTED_12 = {
    "c01": "Pro-Israel", "c02": "Pro-Israel", "c03": "Pro-Israel", "c04": "Neutral",
    "c05": "Pro-Palestine", "c06": "Pro-Palestine", "c07": "Pro-Palestine",
    "c08": "Pro-Israel", "c09": "Neutral", "c10": "Neutral", "c11": "Neutral",
    "c12": "Pro-Palestine",
}


def _config(tmp_path, name="out", **kwargs):
    defaults = dict(
        corpus_path=CORPUS_12,
        output_dir=tmp_path / name,
        strategy="zero_shot",
        endpoint="mock",
        subset="all",
        split_seed=7,
        exemplar_seed=13,
        concurrency=4,
    )
    defaults.update(kwargs)
    return RunConfig(**defaults)


def _output_bytes(out_dir: Path) -> dict[str, bytes]:
    return {
        name: (out_dir / name).read_bytes()
        for name in ("records.jsonl", "report.md", "confusion.csv", "metrics.json")
    }


class TestMockRun:
    def test_twelve_comment_fixture_accuracy(self, tmp_path):
        report = run_evaluation(_config(tmp_path))
        assert report.n_comments == 12
        assert report.metrics.accuracy == pytest.approx(0.75, abs=1e-12)
        assert report.metrics.unparsed_count == 0
        # gold rows (Neutral, Pro-Palestine, Pro-Israel) hand-tallied from the
        # fixture keywords and the bundled mock rule table.
        assert report.confusion.counts.tolist() == [[3, 1, 0], [0, 3, 1], [1, 0, 3]]

    def test_per_record_predictions_match_rule_table(self, tmp_path):
        run_evaluation(_config(tmp_path))
        _, records = read_records(tmp_path / "out" / "records.jsonl")
        assert len(records) == 12
        for record in records:
            want = EXPECTED_12[record.comment_id]
            got = record.predicted.display if record.predicted is not None else "Unparsed"
            assert got == want, record.comment_id

    def test_two_runs_byte_identical(self, tmp_path):
        run_evaluation(_config(tmp_path, "a"))
        run_evaluation(_config(tmp_path, "b"))
        assert _output_bytes(tmp_path / "a") == _output_bytes(tmp_path / "b")

    def test_concurrency_does_not_change_results(self, tmp_path):
        run_evaluation(_config(tmp_path, "serial", concurrency=1))
        run_evaluation(_config(tmp_path, "parallel", concurrency=4))
        assert _output_bytes(tmp_path / "serial") == _output_bytes(tmp_path / "parallel")

    def test_records_written_in_comment_id_order(self, tmp_path):
        run_evaluation(_config(tmp_path))
        _, records = read_records(tmp_path / "out" / "records.jsonl")
        ids = [r.comment_id for r in records]
        assert ids == sorted(ids)

    def test_replayability_predicted_equals_parse_of_final_response(self, tmp_path):
        run_evaluation(_config(tmp_path, strategy="scoring_reflective_reread",
                               mock_rules_path=SCORING_RULES))
        _, records = read_records(tmp_path / "out" / "records.jsonl")
        for record in records:
            reparsed = parse_label(record.phase_responses[-1])
            assert record.predicted is reparsed.label

    def test_mock_latency_and_attempts(self, tmp_path):
        run_evaluation(_config(tmp_path))
        _, records = read_records(tmp_path / "out" / "records.jsonl")
        assert all(r.latency == 0.0 for r in records)
        assert all(r.attempts == 1 for r in records)


class TestScoringStrategy:
    def test_two_phases_and_score_triples(self, tmp_path):
        config = _config(
            tmp_path, strategy="scoring_reflective_reread",
            mock_rules_path=SCORING_RULES,
        )
        report = run_evaluation(config)
        _, records = read_records(tmp_path / "out" / "records.jsonl")
        for record in records:
            assert len(record.phase_prompts) == 2
            assert len(record.phase_responses) == 2
            assert record.scores is not None
            # phase 2 embeds the phase 1 response verbatim
            assert record.phase_responses[0] in record.phase_prompts[1]
        assert report.metrics.accuracy == pytest.approx(0.75, abs=1e-12)

    def test_meta_self_critique_two_phases(self, tmp_path):
        config = _config(tmp_path, strategy="meta_self_critique")
        run_evaluation(config)
        _, records = read_records(tmp_path / "out" / "records.jsonl")
        for record in records:
            assert len(record.phase_responses) == 2
            assert record.scores is None


class TestResume:
    def test_interrupted_run_resumes_to_identical_bytes(self, tmp_path, monkeypatch):
        run_evaluation(_config(tmp_path, "full", concurrency=1))

        calls = {"n": 0}
        real = llm_module.mock_complete

        def crashing(rules, prompt):
            calls["n"] += 1
            if calls["n"] > 5:
                raise RuntimeError("endpoint died mid-run")
            return real(rules, prompt)

        monkeypatch.setattr(llm_module, "mock_complete", crashing)
        with pytest.raises(RuntimeError):
            run_evaluation(_config(tmp_path, "resumed", concurrency=1))
        monkeypatch.setattr(llm_module, "mock_complete", real)

        partial = (tmp_path / "resumed" / "records.jsonl").read_text().splitlines()
        assert 1 < len(partial) < 13  # header plus a strict prefix

        run_evaluation(_config(tmp_path, "resumed", concurrency=1))
        assert _output_bytes(tmp_path / "resumed") == _output_bytes(tmp_path / "full")

    def test_torn_trailing_line_is_truncated(self, tmp_path):
        run_evaluation(_config(tmp_path, "full", concurrency=1))
        records_path = tmp_path / "full" / "records.jsonl"
        lines = records_path.read_text().splitlines()
        torn = "\n".join(lines[:6]) + '\n{"comment_id": "c06", "phase'
        records_path.write_text(torn)
        report = run_evaluation(_config(tmp_path, "full", concurrency=1))
        assert report.n_comments == 12
        fresh = run_evaluation(_config(tmp_path, "fresh", concurrency=1))
        assert report.metrics == fresh.metrics
        assert _output_bytes(tmp_path / "full") == _output_bytes(tmp_path / "fresh")

    def test_config_mismatch_refuses_resume(self, tmp_path):
        run_evaluation(_config(tmp_path, "out", split_seed=7))
        with pytest.raises(RunnerError, match="refusing to resume"):
            run_evaluation(_config(tmp_path, "out", split_seed=8))

    def test_template_change_refuses_resume(self, tmp_path):
        run_evaluation(_config(tmp_path, "out"))
        custom = tmp_path / "templates"
        custom.mkdir()
        source = Path("src/stanceval/templates")
        for template in source.glob("*.txt"):
            custom.joinpath(template.name).write_text(template.read_text())
        custom.joinpath("zero_shot.txt").write_text(
            "Changed wording. Labels Pro-Israel, Pro-Palestine, Neutral.\n{comment_text}\n"
        )
        with pytest.raises(RunnerError, match="refusing to resume"):
            run_evaluation(_config(tmp_path, "out", template_dir=custom))


class TestLeakage:
    def test_exemplars_never_from_evaluation_subset(self, tmp_path):
        config = _config(tmp_path, strategy="three_shot", subset="test")
        run_evaluation(config)
        comments = load_labeled_corpus(CORPUS_12)
        split = split_dataset(comments, seed=7)
        test_ids = {c.id for c in split.test}
        test_texts = {c.truncated_text for c in split.test}
        _, records = read_records(tmp_path / "out" / "records.jsonl")
        assert records, "expected records for the test subset"
        for record in records:
            assert record.exemplar_ids, "three_shot must carry exemplars"
            assert not (set(record.exemplar_ids) & test_ids)
            for text in record.exemplar_texts:
                assert text not in test_texts


class TestBaseline:
    def _train_model(self, tmp_path):
        comments = load_labeled_corpus(CORPUS_12)
        split = split_dataset(comments, seed=7)
        items = [(c.truncated_text, c.gold) for c in split.train]
        model = fit_baseline(items, config=TrainConfig(epochs=80, seed=1))
        path = tmp_path / "model.json"
        save_model(model, path)
        return path

    def test_baseline_run_bypasses_prompts(self, tmp_path):
        model_path = self._train_model(tmp_path)
        config = _config(tmp_path, endpoint="baseline", model_path=model_path)
        report = run_evaluation(config)
        assert report.endpoint == "baseline"
        assert report.n_comments == 12
        _, records = read_records(tmp_path / "out" / "records.jsonl")
        for record in records:
            assert record.phase_prompts == ()
            assert record.phase_responses == ()
            assert record.strategy == "baseline"
            assert record.predicted is not None

    def test_baseline_requires_model_file(self, tmp_path):
        config = _config(tmp_path, endpoint="baseline")
        with pytest.raises(RunnerError, match="model"):
            run_evaluation(config)


class TestValidation:
    def test_missing_corpus(self, tmp_path):
        config = _config(tmp_path, corpus_path=tmp_path / "nope.csv")
        with pytest.raises(RunnerError, match="not found"):
            run_evaluation(config)

    def test_empty_subset_fails_before_output(self, tmp_path):
        three = FIXTURES / "comments_3.csv"
        config = _config(tmp_path, corpus_path=three, subset="validation")
        with pytest.raises(RunnerError, match="empty"):
            run_evaluation(config)
        assert not (tmp_path / "out" / "records.jsonl").exists()

    def test_unresolvable_endpoint(self, tmp_path):
        config = _config(tmp_path, endpoint="mixtral")
        with pytest.raises(RunnerError, match="mixtral"):
            run_evaluation(config, endpoints={})

    def test_unknown_subset(self, tmp_path):
        with pytest.raises(RunnerError, match="subset"):
            run_evaluation(_config(tmp_path, subset="dev"))

    def test_config_hash_ignores_output_dir_and_concurrency(self, tmp_path):
        a = config_hash(_config(tmp_path, "a", concurrency=1))
        b = config_hash(_config(tmp_path, "b", concurrency=8))
        assert a == b
        c = config_hash(_config(tmp_path, "c", split_seed=99))
        assert c != a


class TestReportRoundTrip:
    def test_report_recomputed_from_records_matches(self, tmp_path):
        report = run_evaluation(_config(tmp_path))
        records_path = tmp_path / "out" / "records.jsonl"
        again = report_from_records(records_path)
        assert again == report
        emit_report(again, tmp_path / "rerendered")
        for name in ("report.md", "confusion.csv", "metrics.json"):
            assert (tmp_path / "rerendered" / name).read_bytes() == (
                tmp_path / "out" / name
            ).read_bytes()

    def test_metrics_json_embeds_both_macro_f1(self, tmp_path):
        run_evaluation(_config(tmp_path))
        payload = json.loads((tmp_path / "out" / "metrics.json").read_text())
        assert "macro_f1_paper" in payload["metrics"]
        assert "macro_f1_per_class_avg" in payload["metrics"]
        assert payload["config_hash"]

    def test_report_md_prints_both_macro_f1(self, tmp_path):
        run_evaluation(_config(tmp_path))
        text = (tmp_path / "out" / "report.md").read_text()
        assert "harmonic mean of macro precision" in text
        assert "mean of per-class F1" in text
        assert "| Test Accuracy |" in text.replace("| Test Accuracy ", "| Test Accuracy |")
        assert "Class-wise performance" in text
