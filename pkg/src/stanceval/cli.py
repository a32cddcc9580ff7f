"""Command-line interface for the stance-evaluation harness.

Subcommands: ingest, stats, agree, split, train-baseline, run, report.
``run`` accepts a YAML config file (nested sections for corpus, strategy,
endpoint, run) with individual flags overriding config values.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import llm, vectorize
from .annotation import (
    NoMajorityError,
    agreement_report,
    assign_gold_labels,
    rows_from_comments,
)
from .corpus import (
    CorpusError,
    KeywordFilter,
    deduplicate,
    filter_by_keywords,
    keyword_frequency,
    label_distribution,
    load_keywords,
    load_labeled_corpus,
    split_dataset,
    temporal_distribution,
    write_corpus,
    write_split_manifest,
)
from .parse import ParseError
from .prompt import STRATEGIES, PromptError
from .runner import (
    RunConfig,
    RunnerError,
    emit_report,
    report_from_records,
    run_evaluation,
)

logger = logging.getLogger(__name__)

_HANDLED_ERRORS = (
    CorpusError,
    RunnerError,
    PromptError,
    ParseError,
    NoMajorityError,
    llm.EndpointError,
    vectorize.ModelFormatError,
    ValueError,
    OSError,
)


def _add_corpus_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--corpus", required=True, type=Path, help="comment records file")
    parser.add_argument(
        "--format", choices=["csv", "jsonl"], default=None,
        help="corpus format (default: by file extension)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stanceval",
        description="Stance-classification evaluation harness",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load + filter + dedup + truncate a corpus")
    _add_corpus_args(p)
    p.add_argument("--output", required=True, type=Path)
    p.add_argument("--output-format", choices=["csv", "jsonl"], default=None)
    p.add_argument("--keywords", type=Path, default=None,
                   help="keyword file (default: bundled list)")
    p.add_argument("--no-filter", action="store_true",
                   help="skip keyword filtering")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="label, keyword, and temporal statistics")
    _add_corpus_args(p)
    p.add_argument("--keywords", type=Path, default=None)
    p.add_argument("--top", type=int, default=5)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("agree", help="majority labels and Fleiss' kappa")
    _add_corpus_args(p)
    p.add_argument("--json", type=Path, default=None,
                   help="also write the agreement report as JSON")
    p.set_defaults(func=cmd_agree)

    p = sub.add_parser("split", help="emit a train/test/validation manifest")
    _add_corpus_args(p)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--output", required=True, type=Path)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train-baseline", help="train the linear softmax baseline")
    _add_corpus_args(p)
    p.add_argument("--output", required=True, type=Path, help="model file to write")
    p.add_argument("--split-seed", type=int, default=7)
    p.add_argument("--vectorizer", choices=sorted(vectorize.VECTORIZERS), default="bow")
    p.add_argument("--min-df", type=int, default=1)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--learning-rate", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--train-seed", type=int, default=0)
    p.set_defaults(func=cmd_train_baseline)

    p = sub.add_parser("run", help="run an evaluation")
    p.add_argument("--config", type=Path, default=None, help="YAML run config")
    p.add_argument("--corpus", type=Path, default=None)
    p.add_argument("--format", choices=["csv", "jsonl"], default=None)
    p.add_argument("--output-dir", type=Path, default=None)
    p.add_argument("--strategy", choices=sorted(STRATEGIES), default=None)
    p.add_argument("--endpoint", default=None,
                   help="'mock', 'baseline', or an endpoint named in the config")
    p.add_argument("--subset", choices=["train", "test", "validation", "all"],
                   default=None)
    p.add_argument("--split-seed", type=int, default=None)
    p.add_argument("--exemplar-seed", type=int, default=None)
    p.add_argument("--keywords", type=Path, default=None)
    p.add_argument("--mock-rules", type=Path, default=None)
    p.add_argument("--label-rules", type=Path, default=None)
    p.add_argument("--model", type=Path, default=None, help="baseline model file")
    p.add_argument("--concurrency", type=int, default=None)
    p.add_argument("--rpm", type=float, default=None, help="requests per minute")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="re-render reports from a records file")
    p.add_argument("--records", required=True, type=Path)
    p.add_argument("--output-dir", required=True, type=Path)
    p.set_defaults(func=cmd_report)

    return parser


def cmd_ingest(args) -> int:
    comments = load_labeled_corpus(args.corpus, args.format)
    print(f"loaded {len(comments)} comment(s) from {args.corpus}")
    if not args.no_filter:
        keywords = load_keywords(args.keywords)
        comments = filter_by_keywords(comments, KeywordFilter(tuple(keywords)))
        print(f"kept {len(comments)} after keyword filtering ({len(keywords)} keywords)")
    comments = deduplicate(comments)
    print(f"kept {len(comments)} after deduplication")
    write_corpus(comments, args.output, args.output_format)
    print(f"wrote cleaned corpus (truncated text) to {args.output}")
    return 0


def cmd_stats(args) -> int:
    comments = assign_gold_labels(load_labeled_corpus(args.corpus, args.format))
    print(f"{len(comments)} comment(s)")
    dist = label_distribution(comments)
    total = sum(dist.values())
    print("label distribution:")
    for label, count in dist.items():
        share = count / total if total else 0.0
        print(f"  {label.display}: {count} ({share:.1%})")
    keywords = load_keywords(args.keywords)
    print(f"top {args.top} keywords by comment containment:")
    for keyword, count in keyword_frequency(comments, keywords, args.top):
        print(f"  {keyword}: {count}")
    print("comments per month:")
    for month, count in temporal_distribution(comments).items():
        print(f"  {month}: {count}")
    return 0


def cmd_agree(args) -> int:
    comments = load_labeled_corpus(args.corpus, args.format)
    rows = rows_from_comments(comments)
    if not rows:
        raise RunnerError(f"{args.corpus}: no records carry all three annotator labels")
    report = agreement_report(rows)
    golds = label_distribution(assign_gold_labels(comments))
    print(report.summary())
    print("majority-label distribution:")
    for label, count in golds.items():
        print(f"  {label.display}: {count}")
    if args.json:
        payload = {
            "kappa": report.kappa,
            "n_items": report.n_items,
            "n_annotators": report.n_annotators,
            "per_category_proportions": {
                label.display: p
                for label, p in zip(golds, report.per_category_proportions)
            },
        }
        args.json.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                             encoding="utf-8")
        print(f"wrote agreement report to {args.json}")
    return 0


def cmd_split(args) -> int:
    comments = assign_gold_labels(load_labeled_corpus(args.corpus, args.format))
    split = split_dataset(comments, seed=args.seed)
    write_split_manifest(split, args.output)
    print(
        f"split {len(comments)} comments with seed {args.seed}: "
        f"train={len(split.train)} test={len(split.test)} "
        f"validation={len(split.validation)}"
    )
    print(f"wrote manifest to {args.output}")
    return 0


def cmd_train_baseline(args) -> int:
    comments = assign_gold_labels(load_labeled_corpus(args.corpus, args.format))
    split = split_dataset(comments, seed=args.split_seed)
    train_items = [(c.truncated_text, c.gold) for c in split.train if c.gold is not None]
    if not train_items:
        raise RunnerError("train split holds no labelled comments")
    config = vectorize.TrainConfig(
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        seed=args.train_seed,
    )
    model = vectorize.fit_baseline(
        train_items, vectorizer=args.vectorizer, min_df=args.min_df, config=config
    )
    correct = sum(
        1 for text, gold in train_items if vectorize.predict_text(model, text) == gold
    )
    vectorize.save_model(model, args.output)
    print(
        f"trained {args.vectorizer} baseline on {len(train_items)} comments: "
        f"final loss {model.final_loss:.6f}, "
        f"train accuracy {correct / len(train_items):.4f}"
    )
    print(f"wrote model to {args.output}")
    return 0


def _endpoint_from_dict(name: str, data: dict) -> llm.EndpointConfig:
    retry_data = data.get("retry") or {}
    retry = llm.RetryPolicy(
        max_attempts=int(retry_data.get("max_attempts", 3)),
        base_backoff=float(retry_data.get("base_backoff", 1.0)),
        backoff_multiplier=float(retry_data.get("backoff_multiplier", 2.0)),
        max_backoff=float(retry_data.get("max_backoff", 30.0)),
    )
    return llm.EndpointConfig(
        name=str(data.get("name", name)),
        base_url=str(data["base_url"]),
        flavor=str(data.get("flavor", "hf")),
        auth_token_env=data.get("auth_token_env"),
        timeout=float(data.get("timeout", 30.0)),
        max_prompt_chars=int(data.get("max_prompt_chars", 8000)),
        temperature=float(data.get("temperature", 0.0)),
        max_output_tokens=int(data.get("max_output_tokens", 64)),
        retry=retry,
    )


def load_config_file(path: Path) -> tuple[dict, dict[str, llm.EndpointConfig]]:
    """Read the nested YAML run config into RunConfig fields + endpoint table."""
    data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    corpus = data.get("corpus") or {}
    strategy = data.get("strategy") or {}
    endpoint = data.get("endpoint") or {}
    run = data.get("run") or {}
    fields = {
        "corpus_path": corpus.get("path"),
        "corpus_format": corpus.get("format"),
        "keyword_path": corpus.get("keywords"),
        "split_seed": (data.get("split") or {}).get("seed"),
        "strategy": strategy.get("name"),
        "exemplar_seed": strategy.get("exemplar_seed"),
        "endpoint": endpoint.get("name"),
        "mock_rules_path": endpoint.get("mock_rules"),
        "label_rules_path": (data.get("parse") or {}).get("label_rules"),
        "model_path": (data.get("baseline") or {}).get("model"),
        "subset": run.get("subset"),
        "concurrency": run.get("concurrency"),
        "requests_per_minute": run.get("requests_per_minute"),
        "output_dir": run.get("output_dir"),
    }
    endpoints = {
        name: _endpoint_from_dict(name, spec)
        for name, spec in (data.get("endpoints") or {}).items()
    }
    return {k: v for k, v in fields.items() if v is not None}, endpoints


def cmd_run(args) -> int:
    fields: dict = {}
    endpoints: dict[str, llm.EndpointConfig] = {}
    if args.config:
        fields, endpoints = load_config_file(args.config)
    overrides = {
        "corpus_path": args.corpus,
        "corpus_format": args.format,
        "output_dir": args.output_dir,
        "strategy": args.strategy,
        "endpoint": args.endpoint,
        "subset": args.subset,
        "split_seed": args.split_seed,
        "exemplar_seed": args.exemplar_seed,
        "keyword_path": args.keywords,
        "mock_rules_path": args.mock_rules,
        "label_rules_path": args.label_rules,
        "model_path": args.model,
        "concurrency": args.concurrency,
        "requests_per_minute": args.rpm,
    }
    fields.update({k: v for k, v in overrides.items() if v is not None})
    if "corpus_path" not in fields:
        raise RunnerError("no corpus given (use --corpus or the config file)")
    if "output_dir" not in fields:
        raise RunnerError("no output directory given (use --output-dir or the config file)")
    for key in ("corpus_path", "output_dir", "keyword_path", "mock_rules_path",
                "label_rules_path", "model_path"):
        if key in fields and fields[key] is not None:
            fields[key] = Path(fields[key])
    config = RunConfig(**fields)
    report = run_evaluation(config, endpoints)
    m = report.metrics
    print(
        f"{report.endpoint} / {report.strategy} on {report.subset} "
        f"({report.n_comments} comments): accuracy {m.accuracy:.4f}, "
        f"macro P {m.macro_precision:.4f}, macro R {m.macro_recall:.4f}, "
        f"macro F1 {m.macro_f1_per_class_avg:.4f} "
        f"(harmonic {m.macro_f1_paper:.4f}), {m.unparsed_count} unparsed"
    )
    print(f"records and reports written to {config.output_dir}")
    return 0


def cmd_report(args) -> int:
    report = report_from_records(args.records)
    paths = emit_report(report, args.output_dir)
    for path in paths:
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except _HANDLED_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
