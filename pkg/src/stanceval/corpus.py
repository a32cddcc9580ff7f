"""Corpus ingestion, keyword filtering, deduplication, truncation, stats, and splitting.

File formats accepted for comment records: CSV (``format="csv"``) and
line-delimited JSON (``format="jsonl"``). Both carry the fields ``id``,
``created_utc`` (ISO-8601), ``text``, and optionally ``label`` and
``annotator_1`` .. ``annotator_3`` with the exact label spellings
``Neutral`` / ``Pro-Palestine`` / ``Pro-Israel``.

The dataset split is reproducible across platforms: shuffling uses Python's
Mersenne Twister (``random.Random(seed)``), stratified by gold label with a
largest-remainder allocation, and subset sizes follow the floor rule
|train| = floor(0.70 N), |validation| = floor(0.15 N), |test| = remainder.
"""

from __future__ import annotations

import csv
import json
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from random import Random
from typing import Iterable, Sequence, TypeVar

from .labels import ALL_LABELS, StanceLabel, decode_label, encode_label

TRUNCATION_LIMIT = 700
SPLIT_RATIOS = (0.70, 0.15, 0.15)  # (train, test, validation)

DEFAULT_KEYWORDS_FILE = Path(__file__).parent / "data" / "keywords.txt"

_ANNOTATOR_FIELDS = ("annotator_1", "annotator_2", "annotator_3")


class CorpusError(Exception):
    """Base class for corpus ingestion errors."""


class MalformedRecordError(CorpusError):
    """A record that cannot be parsed; carries the offending line number."""

    def __init__(self, path: str | Path, line: int, reason: str):
        super().__init__(f"{path}, line {line}: {reason}")
        self.path = str(path)
        self.line = line
        self.reason = reason


class DuplicateIdError(CorpusError):
    """Two records share an id within one loaded corpus."""

    def __init__(self, path: str | Path, line: int, comment_id: str):
        super().__init__(f"{path}, line {line}: duplicate comment id {comment_id!r}")
        self.comment_id = comment_id


@dataclass(frozen=True)
class RawComment:
    """One ingested comment record."""

    id: str
    created_utc: datetime
    text: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("comment id must be nonempty")


@dataclass(frozen=True)
class LabeledComment:
    """A comment carrying its truncated text and (optionally) gold/annotator labels."""

    id: str
    created_utc: datetime
    text: str
    truncated_text: str = ""
    gold: StanceLabel | None = None
    annotator_labels: tuple[StanceLabel, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise ValueError("comment id must be nonempty")
        if not self.truncated_text:
            object.__setattr__(self, "truncated_text", truncate_text(self.text))
        if len(self.truncated_text) > TRUNCATION_LIMIT:
            raise ValueError(
                f"truncated_text exceeds {TRUNCATION_LIMIT} characters "
                f"({len(self.truncated_text)})"
            )
        if len(self.annotator_labels) not in (0, 3):
            raise ValueError("annotator_labels must hold exactly 0 or 3 labels")
        if self.gold is not None and len(self.annotator_labels) == 3:
            counts = Counter(self.annotator_labels)
            top, top_count = counts.most_common(1)[0]
            if top_count >= 2 and top != self.gold:
                raise ValueError(
                    f"gold label {self.gold.display} disagrees with the "
                    f"annotator majority {top.display}"
                )

    @classmethod
    def from_raw(
        cls,
        raw: RawComment,
        gold: StanceLabel | None = None,
        annotator_labels: Sequence[StanceLabel] = (),
    ) -> "LabeledComment":
        return cls(
            id=raw.id,
            created_utc=raw.created_utc,
            text=raw.text,
            gold=gold,
            annotator_labels=tuple(annotator_labels),
        )


@dataclass(frozen=True)
class KeywordFilter:
    """Substring keyword filter; matching is case-insensitive unless requested."""

    keywords: tuple[str, ...]
    case_sensitive: bool = False

    def __post_init__(self):
        if not self.keywords:
            raise ValueError("keyword set must be nonempty")
        if any(k == "" for k in self.keywords):
            raise ValueError("keywords must not be empty strings")
        if not self.case_sensitive:
            object.__setattr__(
                self, "keywords", tuple(k.casefold() for k in self.keywords)
            )

    def matches(self, text: str) -> bool:
        haystack = text if self.case_sensitive else text.casefold()
        return any(k in haystack for k in self.keywords)


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/test/validation partition of a labeled corpus."""

    train: tuple[LabeledComment, ...]
    test: tuple[LabeledComment, ...]
    validation: tuple[LabeledComment, ...]
    seed: int

    def subset(self, name: str) -> tuple[LabeledComment, ...]:
        if name == "all":
            return self.train + self.test + self.validation
        if name not in ("train", "test", "validation"):
            raise ValueError(f"unknown subset {name!r}")
        return getattr(self, name)


def _parse_timestamp(value, path, line) -> datetime:
    if not isinstance(value, str) or not value:
        raise MalformedRecordError(path, line, f"invalid created_utc: {value!r}")
    text = value.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        stamp = datetime.fromisoformat(text)
    except ValueError:
        raise MalformedRecordError(
            path, line, f"created_utc is not ISO-8601: {value!r}"
        ) from None
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.astimezone(timezone.utc)


def _parse_label_field(value, path, line) -> StanceLabel:
    try:
        return StanceLabel.from_name(value)
    except ValueError:
        raise MalformedRecordError(path, line, f"invalid label value: {value!r}") from None


def _iter_records(path: Path, fmt: str) -> Iterable[tuple[int, dict]]:
    """Yield (line_number, field_dict) pairs for each record in the file."""
    if fmt == "csv":
        with path.open("r", encoding="utf-8", newline="") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames is None:
                return  # empty file -> no records
            for required in ("id", "created_utc", "text"):
                if required not in reader.fieldnames:
                    raise MalformedRecordError(
                        path, 1, f"missing required column {required!r}"
                    )
            for row in reader:
                yield reader.line_num, {
                    k: v for k, v in row.items() if k is not None and v not in (None, "")
                }
    elif fmt == "jsonl":
        with path.open("r", encoding="utf-8") as handle:
            for line_num, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise MalformedRecordError(path, line_num, f"invalid JSON: {exc}") from None
                if not isinstance(record, dict):
                    raise MalformedRecordError(path, line_num, "record is not an object")
                yield line_num, {k: v for k, v in record.items() if v not in (None, "")}
    else:
        raise ValueError(f"unknown corpus format {fmt!r} (expected 'csv' or 'jsonl')")


def detect_format(path: str | Path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".jsonl", ".ndjson", ".json"):
        return "jsonl"
    return "csv"


def _load(path: str | Path, fmt: str | None, labeled: bool):
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"corpus file not found: {path}")
    fmt = fmt or detect_format(path)
    out = []
    seen_ids: set[str] = set()
    for line_num, record in _iter_records(path, fmt):
        for required in ("id", "created_utc", "text"):
            if required not in record:
                raise MalformedRecordError(path, line_num, f"missing field {required!r}")
        comment_id = str(record["id"])
        if comment_id in seen_ids:
            raise DuplicateIdError(path, line_num, comment_id)
        seen_ids.add(comment_id)
        raw = RawComment(
            id=comment_id,
            created_utc=_parse_timestamp(record["created_utc"], path, line_num),
            text=str(record["text"]),
        )
        if not labeled:
            out.append(raw)
            continue
        gold = None
        if "label" in record:
            gold = _parse_label_field(record["label"], path, line_num)
        present = [f for f in _ANNOTATOR_FIELDS if f in record]
        if present and len(present) != 3:
            raise MalformedRecordError(
                path, line_num, f"expected all three annotator fields, got {present}"
            )
        annotators = tuple(
            _parse_label_field(record[f], path, line_num) for f in present
        )
        try:
            out.append(LabeledComment.from_raw(raw, gold=gold, annotator_labels=annotators))
        except ValueError as exc:
            raise MalformedRecordError(path, line_num, str(exc)) from None
    return out


def load_corpus(path: str | Path, fmt: str | None = None) -> list[RawComment]:
    """Load raw comment records, preserving file order; validates ids and timestamps."""
    return _load(path, fmt, labeled=False)


def load_labeled_corpus(path: str | Path, fmt: str | None = None) -> list[LabeledComment]:
    """Like :func:`load_corpus` but also parses optional label/annotator fields."""
    return _load(path, fmt, labeled=True)


def write_corpus(
    comments: Sequence[LabeledComment], path: str | Path, fmt: str | None = None
) -> None:
    """Write comments back out (truncated text in the ``text`` column)."""
    path = Path(path)
    fmt = fmt or detect_format(path)
    rows = []
    for c in comments:
        row = {
            "id": c.id,
            "created_utc": c.created_utc.isoformat().replace("+00:00", "Z"),
            "text": c.truncated_text,
            "label": c.gold.display if c.gold is not None else "",
        }
        for name, lab in zip(_ANNOTATOR_FIELDS, c.annotator_labels):
            row[name] = lab.display
        rows.append(row)
    if fmt == "csv":
        fields = ["id", "created_utc", "text", "label", *_ANNOTATOR_FIELDS]
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=fields, restval="")
            writer.writeheader()
            writer.writerows(rows)
    elif fmt == "jsonl":
        with path.open("w", encoding="utf-8") as handle:
            for row in rows:
                handle.write(json.dumps({k: v for k, v in row.items() if v != ""},
                                        sort_keys=True) + "\n")
    else:
        raise ValueError(f"unknown corpus format {fmt!r}")


def load_keywords(path: str | Path | None = None) -> list[str]:
    """Read a keyword list: one keyword per line, ``#`` comment lines ignored."""
    path = Path(path) if path is not None else DEFAULT_KEYWORDS_FILE
    keywords = []
    for line in path.read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        keywords.append(stripped)
    return keywords


C = TypeVar("C", RawComment, LabeledComment)


def filter_by_keywords(comments: Sequence[C], kfilter: KeywordFilter) -> list[C]:
    """Keep the comments whose text contains at least one keyword; order preserved."""
    return [c for c in comments if kfilter.matches(c.text)]


def deduplicate(comments: Sequence[C]) -> list[C]:
    """Drop later comments whose NFC-normalized text already occurred."""
    seen: set[str] = set()
    kept = []
    for c in comments:
        key = unicodedata.normalize("NFC", c.text)
        if key in seen:
            continue
        seen.add(key)
        kept.append(c)
    return kept


def truncate_text(text: str, limit: int = TRUNCATION_LIMIT) -> str:
    """First ``limit`` Unicode scalar characters of ``text``."""
    if limit < 1:
        raise ValueError("limit must be >= 1")
    return text if len(text) <= limit else text[:limit]


def _apportion(
    ideal: dict[int, Fraction], capacity: dict[int, int], total: int
) -> dict[int, int]:
    """Integer allocation per group: floor of the ideal share, then the shortfall
    distributed by largest fractional remainder (ties by group key), respecting
    per-group capacity."""
    alloc = {k: min(math.floor(ideal[k]), capacity[k]) for k in ideal}
    shortfall = total - sum(alloc.values())
    order = sorted(ideal, key=lambda k: (-(ideal[k] - math.floor(ideal[k])), k))
    while shortfall > 0:
        progressed = False
        for k in order:
            if shortfall == 0:
                break
            if alloc[k] < capacity[k]:
                alloc[k] += 1
                shortfall -= 1
                progressed = True
        if not progressed:
            raise RuntimeError("split allocation infeasible")  # cannot happen: totals <= N
    return alloc


def split_dataset(
    comments: Sequence[LabeledComment],
    ratios: tuple[float, float, float] = SPLIT_RATIOS,
    seed: int = 0,
) -> DatasetSplit:
    """Deterministic stratified train/test/validation split.

    Subset sizes follow the floor rule (train = floor(r0 N), validation =
    floor(r2 N), test = remainder); within each gold-label stratum items are
    allocated proportionally by largest remainder, so per-label proportions in
    every subset stay within one item per label of the global proportions.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    n = len(comments)
    if n < 3:
        raise ValueError(f"need at least 3 comments to split, got {n}")
    # Exact rational shares keep the floor rule immune to float rounding
    # (0.7 * 90 is 62.999... in binary but floor must give 63).
    r_train = Fraction(ratios[0]).limit_denominator(10**6)
    r_val = Fraction(ratios[2]).limit_denominator(10**6)
    n_train = math.floor(r_train * n)
    n_val = math.floor(r_val * n)
    n_test = n - n_train - n_val

    rng = Random(seed)
    order = list(comments)
    rng.shuffle(order)

    groups: dict[int, list[LabeledComment]] = {}
    for c in order:
        key = encode_label(c.gold) if c.gold is not None else -1
        groups.setdefault(key, []).append(c)

    sizes = {k: len(g) for k, g in groups.items()}
    train_alloc = _apportion(
        {k: r_train * sizes[k] for k in sizes}, dict(sizes), n_train
    )
    val_capacity = {k: sizes[k] - train_alloc[k] for k in sizes}
    val_alloc = _apportion(
        {k: r_val * sizes[k] for k in sizes}, val_capacity, n_val
    )

    train: list[LabeledComment] = []
    test: list[LabeledComment] = []
    validation: list[LabeledComment] = []
    for key in sorted(groups):
        group = groups[key]
        t, v = train_alloc[key], val_alloc[key]
        train.extend(group[:t])
        validation.extend(group[t : t + v])
        test.extend(group[t + v :])
    assert (len(train), len(test), len(validation)) == (n_train, n_test, n_val)

    rng.shuffle(train)
    rng.shuffle(test)
    rng.shuffle(validation)
    return DatasetSplit(tuple(train), tuple(test), tuple(validation), seed)


def write_split_manifest(split: DatasetSplit, path: str | Path) -> None:
    """One record per comment: ``id,subset`` with subset in {train,test,validation}."""
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "subset"])
        for name in ("train", "test", "validation"):
            for c in split.subset(name):
                writer.writerow([c.id, name])


def keyword_frequency(
    comments: Sequence[RawComment | LabeledComment],
    keywords: Iterable[str],
    k: int,
    case_sensitive: bool = False,
) -> list[tuple[str, int]]:
    """Top-k keywords by the number of comments containing them.

    Descending by count, ties broken lexicographically.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not comments:
        return []
    keywords = list(dict.fromkeys(keywords))
    texts = [c.text if case_sensitive else c.text.casefold() for c in comments]
    counts = {}
    for kw in keywords:
        needle = kw if case_sensitive else kw.casefold()
        counts[kw] = sum(1 for t in texts if needle in t)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k]


def temporal_distribution(
    comments: Sequence[RawComment | LabeledComment],
) -> dict[str, int]:
    """Comment counts per UTC calendar month ("YYYY-MM"), zero-filled over the span."""
    if not comments:
        return {}
    months = [
        (c.created_utc.astimezone(timezone.utc).year,
         c.created_utc.astimezone(timezone.utc).month)
        for c in comments
    ]
    counts = Counter(months)
    year, month = min(months)
    last = max(months)
    out: dict[str, int] = {}
    while (year, month) <= last:
        out[f"{year:04d}-{month:02d}"] = counts.get((year, month), 0)
        month += 1
        if month > 12:
            year, month = year + 1, 1
    return out


def label_distribution(comments: Sequence[LabeledComment]) -> dict[StanceLabel, int]:
    """Gold-label counts in code order; unlabeled comments are not counted."""
    counts = Counter(c.gold for c in comments if c.gold is not None)
    return {label: counts.get(label, 0) for label in ALL_LABELS}
