"""Extract stance labels and 1-5 score triples from free-form model responses.

Label extraction scans an ordered synonym table (shipped as
``data/label_rules.txt``, user-overridable): matching is case-insensitive,
the longest pattern wins at a given position, and the earliest match in the
response wins overall. A response mentioning several labels therefore parses
to the first one mentioned; the fired rule is recorded so such cases stay
auditable downstream.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .labels import ALL_LABELS, StanceLabel

DEFAULT_RULES_FILE = Path(__file__).parent / "data" / "label_rules.txt"

MIN_SCORE = 1
MAX_SCORE = 5

_INT_RE = re.compile(r"\d+")


class ParseError(Exception):
    """No stance label could be extracted from a response."""


class ScoreParseError(ParseError):
    """The three category scores could not be extracted from a response."""


@dataclass(frozen=True)
class LabelRule:
    """One synonym-table entry: a lowercase substring pattern mapped to a label."""

    pattern: str
    label: StanceLabel

    def __post_init__(self):
        if not self.pattern:
            raise ValueError("rule pattern must be nonempty")
        object.__setattr__(self, "pattern", self.pattern.lower())


@dataclass(frozen=True)
class ParsedPrediction:
    """A parsed label plus the span and rule that produced it."""

    label: StanceLabel
    matched_span: str
    rule_id: str


@dataclass(frozen=True)
class ScoreTriple:
    """Alignment scores (1-5) for the three stance categories."""

    pro_israel: int
    pro_palestine: int
    neutral: int

    def __post_init__(self):
        for name in ("pro_israel", "pro_palestine", "neutral"):
            value = getattr(self, name)
            if not MIN_SCORE <= value <= MAX_SCORE:
                raise ValueError(
                    f"{name} score must be in [{MIN_SCORE}, {MAX_SCORE}], got {value}"
                )

    def as_dict(self) -> dict[str, int]:
        return {
            "pro_israel": self.pro_israel,
            "pro_palestine": self.pro_palestine,
            "neutral": self.neutral,
        }


def load_label_rules(path: str | Path | None = None) -> list[LabelRule]:
    """Read an ordered rule file: one ``pattern => Label`` per line, ``#`` comments."""
    path = Path(path) if path is not None else DEFAULT_RULES_FILE
    rules = []
    for line_num, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=>" not in stripped:
            raise ValueError(f"{path}, line {line_num}: expected 'pattern => label'")
        pattern, _, label_name = stripped.partition("=>")
        rules.append(LabelRule(pattern.strip(), StanceLabel.from_name(label_name.strip())))
    if not rules:
        raise ValueError(f"{path}: no rules found")
    return rules


_DEFAULT_RULES: list[LabelRule] | None = None


def default_label_rules() -> list[LabelRule]:
    global _DEFAULT_RULES
    if _DEFAULT_RULES is None:
        _DEFAULT_RULES = load_label_rules(DEFAULT_RULES_FILE)
    return _DEFAULT_RULES


def parse_label(
    response: str, rules: Sequence[LabelRule] | None = None
) -> ParsedPrediction:
    """Earliest (then longest) synonym match in the response, case-insensitive."""
    if rules is None:
        rules = default_label_rules()
    lowered = response.lower()
    best_key = None
    best_rule = None
    for index, rule in enumerate(rules):
        pos = lowered.find(rule.pattern)
        if pos == -1:
            continue
        key = (pos, -len(rule.pattern), index)
        if best_key is None or key < best_key:
            best_key, best_rule = key, rule
    if best_rule is None:
        raise ParseError(f"no stance label found in response: {response!r}")
    pos = best_key[0]
    return ParsedPrediction(
        label=best_rule.label,
        matched_span=response[pos : pos + len(best_rule.pattern)],
        rule_id=best_rule.pattern,
    )


def parse_scores(
    response: str, rules: Sequence[LabelRule] | None = None
) -> ScoreTriple:
    """Associate each stance category with the nearest integer following its mention.

    Every category must resolve; a resolved value outside [1, 5] or two
    mentions of one category resolving to different values are errors.
    Mentions with no following integer are ignored when the category resolves
    elsewhere in the response.
    """
    if rules is None:
        rules = default_label_rules()
    lowered = response.lower()
    patterns: dict[StanceLabel, list[str]] = {label: [] for label in ALL_LABELS}
    for rule in rules:
        patterns[rule.label].append(rule.pattern)

    values: dict[StanceLabel, int] = {}
    for label in ALL_LABELS:
        resolved: list[int] = []
        for pattern in patterns[label]:
            start = 0
            while (pos := lowered.find(pattern, start)) != -1:
                match = _INT_RE.search(response, pos + len(pattern))
                if match:
                    resolved.append(int(match.group()))
                start = pos + 1
        if not resolved:
            raise ScoreParseError(
                f"no score found for category {label.display!r} in response: {response!r}"
            )
        for value in resolved:
            if not MIN_SCORE <= value <= MAX_SCORE:
                raise ScoreParseError(
                    f"score {value} for category {label.display!r} is outside "
                    f"[{MIN_SCORE}, {MAX_SCORE}]"
                )
        if len(set(resolved)) > 1:
            raise ScoreParseError(
                f"conflicting scores {sorted(set(resolved))} for category {label.display!r}"
            )
        values[label] = resolved[0]

    return ScoreTriple(
        pro_israel=values[StanceLabel.PRO_ISRAEL],
        pro_palestine=values[StanceLabel.PRO_PALESTINE],
        neutral=values[StanceLabel.NEUTRAL],
    )
