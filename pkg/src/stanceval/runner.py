"""Evaluation orchestration: corpus -> prompts -> endpoint -> parser -> metrics.

Runs are reproducible and resumable. Records are appended to
``records.jsonl`` in comment-id order behind a header line that pins the
config hash and template hashes; resuming verifies the header and continues
where the file ends. With the mock endpoint an entire run is deterministic:
two runs produce byte-identical record and report files.

Wall-clock timestamps are deliberately kept out of all emitted files (they
would break that byte-level determinism); run timing goes to the log instead.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import llm
from .annotation import assign_gold_labels
from .corpus import (
    KeywordFilter,
    LabeledComment,
    deduplicate,
    filter_by_keywords,
    load_keywords,
    load_labeled_corpus,
    split_dataset,
)
from .labels import StanceLabel
from .metrics import ConfusionMatrix, MetricsReport, confusion_matrix, metrics_report
from .parse import (
    ParseError,
    ScoreTriple,
    load_label_rules,
    parse_label,
    parse_scores,
)
from .prompt import (
    TEMPLATE_DIR,
    Strategy,
    build_plan,
    get_strategy,
    render_phase,
    select_exemplars,
    template_hash,
)

logger = logging.getLogger(__name__)

RECORDS_FORMAT_VERSION = 1
RECORDS_FILENAME = "records.jsonl"

SUBSETS = ("train", "test", "validation", "all")


class RunnerError(Exception):
    """Configuration or checkpoint problems that abort a run."""


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines an evaluation run."""

    corpus_path: Path
    output_dir: Path
    strategy: str = "zero_shot"
    endpoint: str = "mock"  # "mock", "baseline", or a named HTTP endpoint
    subset: str = "test"
    split_seed: int = 7
    exemplar_seed: int = 13
    corpus_format: str | None = None
    keyword_path: Path | None = None  # opt-in keyword filtering before the split
    mock_rules_path: Path | None = None
    label_rules_path: Path | None = None
    model_path: Path | None = None  # required for the baseline endpoint
    concurrency: int = 4
    requests_per_minute: float | None = None
    template_dir: Path = TEMPLATE_DIR

    def validate(self) -> None:
        if not Path(self.corpus_path).is_file():
            raise RunnerError(f"corpus file not found: {self.corpus_path}")
        for label, path in (
            ("keyword file", self.keyword_path),
            ("mock rules file", self.mock_rules_path),
            ("label rules file", self.label_rules_path),
        ):
            if path is not None and not Path(path).is_file():
                raise RunnerError(f"{label} not found: {path}")
        if self.subset not in SUBSETS:
            raise RunnerError(f"unknown subset {self.subset!r}; expected one of {SUBSETS}")
        if self.endpoint == "baseline":
            if self.model_path is None or not Path(self.model_path).is_file():
                raise RunnerError(
                    f"baseline endpoint needs an existing model file, got {self.model_path}"
                )
        else:
            get_strategy(self.strategy)
        if self.concurrency < 1:
            raise RunnerError("concurrency must be >= 1")


@dataclass(frozen=True)
class RunRecord:
    """One evaluated comment: prompts, responses, parsed outcome, gold label."""

    comment_id: str
    strategy: str
    endpoint_name: str
    phase_prompts: tuple[str, ...]
    phase_responses: tuple[str, ...]
    predicted: StanceLabel | None
    rule_id: str | None
    scores: ScoreTriple | None
    gold: StanceLabel
    attempts: int
    latency: float
    exemplar_ids: tuple[str, ...] = ()
    exemplar_texts: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "record_type": "result",
            "comment_id": self.comment_id,
            "strategy": self.strategy,
            "endpoint": self.endpoint_name,
            "phase_prompts": list(self.phase_prompts),
            "phase_responses": list(self.phase_responses),
            "predicted": self.predicted.display if self.predicted is not None else "Unparsed",
            "rule_id": self.rule_id,
            "scores": self.scores.as_dict() if self.scores else None,
            "gold": self.gold.display,
            "attempts": self.attempts,
            "latency": self.latency,
            "exemplar_ids": list(self.exemplar_ids),
            "exemplar_texts": list(self.exemplar_texts),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        predicted = data["predicted"]
        scores = data.get("scores")
        return cls(
            comment_id=data["comment_id"],
            strategy=data["strategy"],
            endpoint_name=data["endpoint"],
            phase_prompts=tuple(data["phase_prompts"]),
            phase_responses=tuple(data["phase_responses"]),
            predicted=None if predicted == "Unparsed" else StanceLabel.from_name(predicted),
            rule_id=data.get("rule_id"),
            scores=ScoreTriple(**scores) if scores else None,
            gold=StanceLabel.from_name(data["gold"]),
            attempts=int(data["attempts"]),
            latency=float(data["latency"]),
            exemplar_ids=tuple(data.get("exemplar_ids", ())),
            exemplar_texts=tuple(data.get("exemplar_texts", ())),
        )


@dataclass(frozen=True)
class EvalReport:
    """Metrics plus the run metadata needed to audit and re-render them."""

    metrics: MetricsReport
    confusion: ConfusionMatrix
    config_hash: str
    template_hashes: dict[str, str]
    strategy: str
    endpoint: str
    subset: str
    n_comments: int
    unparsed_ids: tuple[str, ...]


def _canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def _file_sha256(path: str | Path | None) -> str | None:
    if path is None:
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(config: RunConfig) -> str:
    """Hash of everything that determines run results.

    Input files are hashed by content, so the hash is independent of where
    outputs go and of throughput settings (concurrency, rate limits).
    """
    material = {
        "corpus_sha": _file_sha256(config.corpus_path),
        "keywords_sha": _file_sha256(config.keyword_path),
        "mock_rules_sha": _file_sha256(config.mock_rules_path)
        if config.endpoint == "mock"
        else None,
        "label_rules_sha": _file_sha256(config.label_rules_path),
        "model_sha": _file_sha256(config.model_path)
        if config.endpoint == "baseline"
        else None,
        "strategy": config.strategy,
        "endpoint": config.endpoint,
        "subset": config.subset,
        "split_seed": config.split_seed,
        "exemplar_seed": config.exemplar_seed,
    }
    return hashlib.sha256(_canonical_json(material).encode("utf-8")).hexdigest()


def strategy_template_hashes(
    strategy: Strategy, template_dir: Path = TEMPLATE_DIR
) -> dict[str, str]:
    return {tid: template_hash(tid, template_dir) for tid in strategy.phase_templates}


def load_evaluation_corpus(config: RunConfig) -> list[LabeledComment]:
    """Ingest the corpus for a run: optional keyword filter, dedup, gold labels."""
    comments = load_labeled_corpus(config.corpus_path, config.corpus_format)
    if config.keyword_path is not None:
        kfilter = KeywordFilter(tuple(load_keywords(config.keyword_path)))
        comments = filter_by_keywords(comments, kfilter)
    comments = deduplicate(comments)
    comments = assign_gold_labels(comments)
    unlabeled = [c.id for c in comments if c.gold is None]
    if unlabeled:
        raise RunnerError(
            f"{len(unlabeled)} comment(s) have no gold label "
            f"(first: {unlabeled[:3]}); cannot evaluate"
        )
    return comments


def _build_complete_fn(
    config: RunConfig, endpoints: dict[str, llm.EndpointConfig] | None
) -> Callable[[str], llm.CompletionResult]:
    if config.endpoint == "mock":
        rules = llm.load_mock_rules(config.mock_rules_path)
        return lambda prompt: llm.mock_complete(rules, prompt)
    if not endpoints or config.endpoint not in endpoints:
        raise RunnerError(
            f"endpoint {config.endpoint!r} is not defined; "
            f"known endpoints: {sorted(endpoints or {})}"
        )
    endpoint = endpoints[config.endpoint]
    limiter = llm.RateLimiter(config.requests_per_minute)

    def complete(prompt: str) -> llm.CompletionResult:
        limiter.acquire()
        return llm.complete(endpoint, prompt)

    return complete


def _read_checkpoint(records_path: Path, header_line: str) -> list[str]:
    """Validate an existing records file and return the done comment ids.

    A torn trailing line (killed run) is truncated away; a header that does
    not match this run's config/template hashes is an error.
    """
    raw = records_path.read_text(encoding="utf-8")
    lines = raw.split("\n")
    if not lines or lines[0] != header_line:
        raise RunnerError(
            f"checkpoint {records_path} was written under a different "
            "config or template set; refusing to resume"
        )
    done: list[str] = []
    good = [lines[0]]
    for line in lines[1:]:
        if not line:
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError:
            logger.warning("dropping torn trailing record in %s", records_path)
            break
        done.append(data["comment_id"])
        good.append(line)
    records_path.write_text("\n".join(good) + "\n", encoding="utf-8")
    return done


def run_evaluation(
    config: RunConfig, endpoints: dict[str, llm.EndpointConfig] | None = None
) -> EvalReport:
    """Evaluate every comment of the chosen subset and write records + reports."""
    config.validate()
    comments = load_evaluation_corpus(config)
    split = split_dataset(comments, seed=config.split_seed)
    eval_subset = sorted(split.subset(config.subset), key=lambda c: c.id)
    if not eval_subset:
        raise RunnerError(f"evaluation subset {config.subset!r} is empty")

    run_hash = config_hash(config)
    label_rules = load_label_rules(config.label_rules_path) if config.label_rules_path else None

    baseline = config.endpoint == "baseline"
    if baseline:
        from . import vectorize

        model = vectorize.load_model(config.model_path)
        strategy = None
        template_hashes: dict[str, str] = {}
        exemplars: list = []
        forbidden: frozenset[str] = frozenset()
        complete_fn = None
    else:
        strategy = get_strategy(config.strategy)
        template_hashes = strategy_template_hashes(strategy, config.template_dir)
        exemplars = (
            select_exemplars(list(split.train), strategy.shots, config.exemplar_seed)
            if strategy.shots > 0
            else []
        )
        # Exemplars come from the train split; when evaluating the train split
        # itself, only self-exemplification is forbidden.
        forbidden = (
            frozenset(c.id for c in eval_subset) if config.subset != "train" else frozenset()
        )
        complete_fn = _build_complete_fn(config, endpoints)

    strategy_name = "baseline" if baseline else strategy.name

    def evaluate(comment: LabeledComment) -> RunRecord:
        if baseline:
            from . import vectorize

            predicted = vectorize.predict_text(model, comment.truncated_text)
            return RunRecord(
                comment_id=comment.id,
                strategy="baseline",
                endpoint_name="baseline",
                phase_prompts=(),
                phase_responses=(),
                predicted=predicted,
                rule_id=None,
                scores=None,
                gold=comment.gold,
                attempts=1,
                latency=0.0,
            )
        plan = build_plan(
            strategy, comment, exemplars, forbidden, template_dir=config.template_dir
        )
        prompts: list[str] = []
        responses: list[llm.CompletionResult] = []
        prior: str | None = None
        for phase in plan.phases:
            prompt_text = render_phase(phase, prior, template_dir=config.template_dir)
            result = complete_fn(prompt_text)
            prompts.append(prompt_text)
            responses.append(result)
            prior = result.text
        final_text = responses[-1].text
        try:
            parsed = parse_label(final_text, label_rules)
            predicted, rule_id = parsed.label, parsed.rule_id
        except ParseError:
            predicted, rule_id = None, None
        scores = None
        if strategy.name == "scoring_reflective_reread":
            try:
                scores = parse_scores(responses[0].text, label_rules)
            except ParseError:
                scores = None
        return RunRecord(
            comment_id=comment.id,
            strategy=strategy.name,
            endpoint_name=config.endpoint,
            phase_prompts=tuple(prompts),
            phase_responses=tuple(r.text for r in responses),
            predicted=predicted,
            rule_id=rule_id,
            scores=scores,
            gold=comment.gold,
            attempts=sum(r.attempts for r in responses),
            latency=sum(r.latency for r in responses),
            exemplar_ids=tuple(ex.comment_id for ex in plan.exemplars),
            exemplar_texts=tuple(ex.text for ex in plan.exemplars),
        )

    header = {
        "record_type": "header",
        "format_version": RECORDS_FORMAT_VERSION,
        "config_hash": run_hash,
        "template_hashes": template_hashes,
        "strategy": strategy_name,
        "endpoint": config.endpoint,
        "subset": config.subset,
        "split_seed": config.split_seed,
        "exemplar_seed": config.exemplar_seed,
        "n_comments": len(eval_subset),
    }
    header_line = _canonical_json(header)

    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    records_path = output_dir / RECORDS_FILENAME

    done_ids: list[str] = []
    if records_path.is_file() and records_path.stat().st_size > 0:
        done_ids = _read_checkpoint(records_path, header_line)
        expected_prefix = [c.id for c in eval_subset[: len(done_ids)]]
        if done_ids != expected_prefix:
            raise RunnerError(
                f"checkpoint {records_path} does not match this run's "
                "evaluation order; refusing to resume"
            )
        logger.info("resuming run: %d/%d comments done", len(done_ids), len(eval_subset))

    todo = eval_subset[len(done_ids) :]
    started = time.monotonic()
    with records_path.open("a", encoding="utf-8") as out:
        if not done_ids:
            out.write(header_line + "\n")
            out.flush()
        if todo:
            with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
                for record in pool.map(evaluate, todo):
                    out.write(_canonical_json(record.to_dict()) + "\n")
                    out.flush()
    logger.info(
        "evaluated %d comment(s) in %.2fs (%d resumed)",
        len(todo), time.monotonic() - started, len(done_ids),
    )

    report = report_from_records(records_path)
    emit_report(report, output_dir)
    return report


def read_records(records_path: str | Path) -> tuple[dict, list[RunRecord]]:
    """Load a records file; returns (header, records) and checks phase counts."""
    records_path = Path(records_path)
    if not records_path.is_file():
        raise RunnerError(f"records file not found: {records_path}")
    header: dict | None = None
    records: list[RunRecord] = []
    with records_path.open("r", encoding="utf-8") as handle:
        for line_num, line in enumerate(handle, 1):
            if not line.strip():
                continue
            data = json.loads(line)
            if data.get("record_type") == "header":
                header = data
                continue
            record = RunRecord.from_dict(data)
            if record.strategy != "baseline":
                expected = get_strategy(record.strategy).n_phases
                if len(record.phase_prompts) != expected or len(
                    record.phase_responses
                ) != expected:
                    raise RunnerError(
                        f"{records_path}, line {line_num}: record for "
                        f"{record.comment_id!r} has "
                        f"{len(record.phase_responses)} phases, strategy "
                        f"{record.strategy!r} requires {expected}"
                    )
            records.append(record)
    if header is None:
        raise RunnerError(f"{records_path}: missing header line")
    return header, records


def report_from_records(records_path: str | Path) -> EvalReport:
    """Recompute the evaluation report from a records file."""
    header, records = read_records(records_path)
    if not records:
        raise RunnerError(f"{records_path}: no result records")
    pairs = [(r.gold, r.predicted) for r in records]
    matrix = confusion_matrix(pairs)
    return EvalReport(
        metrics=metrics_report(matrix),
        confusion=matrix,
        config_hash=header["config_hash"],
        template_hashes=dict(header.get("template_hashes", {})),
        strategy=header["strategy"],
        endpoint=header["endpoint"],
        subset=header["subset"],
        n_comments=len(records),
        unparsed_ids=tuple(r.comment_id for r in records if r.predicted is None),
    )


_REPORT_CLASS_ORDER = (
    StanceLabel.NEUTRAL,
    StanceLabel.PRO_ISRAEL,
    StanceLabel.PRO_PALESTINE,
)
_MATRIX_ORDER = (StanceLabel.NEUTRAL, StanceLabel.PRO_PALESTINE, StanceLabel.PRO_ISRAEL)


def render_report_md(report: EvalReport) -> str:
    """Human-readable report; metric columns mirror the published table layout."""
    m = report.metrics
    lines = [
        "# Stance evaluation report",
        "",
        f"- Config hash: `{report.config_hash}`",
        f"- Strategy: {report.strategy}",
        f"- Endpoint: {report.endpoint}",
        f"- Subset: {report.subset} ({report.n_comments} comments)",
    ]
    if report.template_hashes:
        lines.append("- Template hashes:")
        for tid in sorted(report.template_hashes):
            lines.append(f"  - {tid}: `{report.template_hashes[tid]}`")
    lines += [
        "",
        "## Metrics",
        "",
        "| Model | Test Accuracy | Test Precision (macro) | Test Recall (macro) "
        "| Test F1 Score (macro) |",
        "| --- | --- | --- | --- | --- |",
        f"| {report.endpoint} / {report.strategy} | {m.accuracy:.4f} "
        f"| {m.macro_precision:.4f} | {m.macro_recall:.4f} "
        f"| {m.macro_f1_per_class_avg:.4f} |",
        "",
        f"- Macro F1, mean of per-class F1 (table column above): "
        f"{m.macro_f1_per_class_avg:.4f}",
        f"- Macro F1, harmonic mean of macro precision and macro recall: "
        f"{m.macro_f1_paper:.4f}",
        "",
        "## Class-wise performance",
        "",
        "| Class | Precision | Recall | F1-Score |",
        "| --- | --- | --- | --- |",
    ]
    for label in _REPORT_CLASS_ORDER:
        p, r, f = m.per_class[int(label)]
        lines.append(f"| {label.display} | {p:.4f} | {r:.4f} | {f:.4f} |")
    if m.degenerate_classes:
        lines.append("")
        lines.append(
            "Classes with a 0/0 metric coerced to 0: "
            + ", ".join(m.degenerate_classes)
        )
    lines += [
        "",
        "## Confusion matrix (rows = gold, columns = predicted)",
        "",
        "| Gold \\ Predicted | "
        + " | ".join(l.display for l in _MATRIX_ORDER)
        + " | Unparsed |",
        "| --- | --- | --- | --- | --- |",
    ]
    for gold in _MATRIX_ORDER:
        row = [str(int(report.confusion.counts[int(gold), int(p)])) for p in _MATRIX_ORDER]
        row.append(str(int(report.confusion.unparsed[int(gold)])))
        lines.append(f"| {gold.display} | " + " | ".join(row) + " |")
    lines += ["", "## Unparsed responses", ""]
    if report.unparsed_ids:
        lines.append(f"{len(report.unparsed_ids)} unparsed: "
                     + ", ".join(report.unparsed_ids))
    else:
        lines.append("None.")
    lines.append("")
    return "\n".join(lines)


def emit_report(report: EvalReport, output_dir: str | Path) -> list[Path]:
    """Write report.md, confusion.csv, and metrics.json into the output directory."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    report_path = output_dir / "report.md"
    report_path.write_text(render_report_md(report), encoding="utf-8")

    confusion_path = output_dir / "confusion.csv"
    with confusion_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["gold"] + [l.display for l in _MATRIX_ORDER] + ["Unparsed"])
        for gold in _MATRIX_ORDER:
            writer.writerow(
                [gold.display]
                + [int(report.confusion.counts[int(gold), int(p)]) for p in _MATRIX_ORDER]
                + [int(report.confusion.unparsed[int(gold)])]
            )

    metrics_path = output_dir / "metrics.json"
    payload = {
        "config_hash": report.config_hash,
        "strategy": report.strategy,
        "endpoint": report.endpoint,
        "subset": report.subset,
        "n_comments": report.n_comments,
        "template_hashes": report.template_hashes,
        "metrics": report.metrics.to_dict(),
        "unparsed_ids": list(report.unparsed_ids),
    }
    metrics_path.write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return [report_path, confusion_path, metrics_path]
