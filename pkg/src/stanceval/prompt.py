"""Compile prompting strategies into one- or two-phase prompt plans.

Templates live in ``templates/`` (one plain-text file per strategy phase,
``{slot}`` placeholders) and can be overridden by pointing a plan builder at
another directory. Rendering is deterministic; the checked-in golden files,
not any external description, are the byte-level source of truth for prompt
wording.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import TYPE_CHECKING, AbstractSet, Sequence

from .labels import ALL_LABELS, StanceLabel

if TYPE_CHECKING:
    from .corpus import LabeledComment

TEMPLATE_DIR = Path(__file__).parent / "templates"

_SLOT_RE = re.compile(r"\{([a-z_]+)\}")


class PromptError(Exception):
    """Base class for prompt-compilation errors."""


class InsufficientExemplarsError(PromptError):
    """Fewer exemplars supplied than the strategy requires."""


class ExemplarLeakageError(PromptError):
    """An exemplar was drawn from the evaluation subset."""


class TemplateError(PromptError):
    """A template slot could not be filled, or a prior response is missing."""


@dataclass(frozen=True)
class Strategy:
    """A prompting strategy: required exemplar count and its phase templates."""

    name: str
    shots: int
    phase_templates: tuple[str, ...]

    @property
    def n_phases(self) -> int:
        return len(self.phase_templates)


STRATEGIES: dict[str, Strategy] = {
    s.name: s
    for s in (
        Strategy("zero_shot", 0, ("zero_shot",)),
        Strategy("one_shot", 1, ("one_shot",)),
        Strategy("three_shot", 3, ("few_shot",)),
        Strategy("five_shot", 5, ("few_shot",)),
        Strategy("re2_zero_shot", 0, ("re2_zero_shot",)),
        Strategy("re2_one_shot", 1, ("re2_one_shot",)),
        Strategy(
            "meta_self_critique",
            0,
            ("meta_self_critique_initial", "meta_self_critique_refine"),
        ),
        Strategy("context_extraction", 0, ("context_extraction",)),
        Strategy(
            "scoring_reflective_reread",
            0,
            ("scoring_phase", "reflective_reread_phase"),
        ),
    )
}


def get_strategy(name: str) -> Strategy:
    try:
        return STRATEGIES[name]
    except KeyError:
        raise ValueError(
            f"unknown strategy {name!r}; expected one of {sorted(STRATEGIES)}"
        ) from None


@dataclass(frozen=True)
class Exemplar:
    """One labelled demonstration embedded in a prompt."""

    comment_id: str
    text: str
    label: StanceLabel


@dataclass(frozen=True)
class PromptPhase:
    """A single prompt of a plan: template id plus its build-time slot values."""

    template_id: str
    slots: tuple[tuple[str, str], ...]
    consumes_prior: bool = False


@dataclass(frozen=True)
class PromptPlan:
    """An ordered list of 1-2 phases compiled for one comment."""

    strategy: str
    comment_id: str
    phases: tuple[PromptPhase, ...]
    exemplars: tuple[Exemplar, ...] = ()


def _load_template(template_id: str, template_dir: Path) -> str:
    path = template_dir / f"{template_id}.txt"
    if not path.is_file():
        raise TemplateError(f"template file not found: {path}")
    return path.read_text(encoding="utf-8")


def template_hash(template_id: str, template_dir: Path = TEMPLATE_DIR) -> str:
    """SHA-256 of a template file, used to pin prompts in run headers."""
    return hashlib.sha256(
        _load_template(template_id, template_dir).encode("utf-8")
    ).hexdigest()


def format_examples(exemplars: Sequence[Exemplar]) -> str:
    """The example block embedded into one-/few-shot templates."""
    return "\n\n".join(
        f"Comment:\n{ex.text}\nStance: {ex.label.display}" for ex in exemplars
    )


def build_plan(
    strategy: Strategy | str,
    comment: "LabeledComment",
    exemplars: Sequence[Exemplar] = (),
    forbidden_ids: AbstractSet[str] = frozenset(),
    template_dir: Path = TEMPLATE_DIR,
) -> PromptPlan:
    """Compile a (strategy, comment, exemplars) triple into a prompt plan.

    ``forbidden_ids`` carries the evaluation-subset ids; exemplars drawn from
    it (or equal to the comment itself) are rejected as leakage.
    """
    if isinstance(strategy, str):
        strategy = get_strategy(strategy)
    if len(exemplars) < strategy.shots:
        raise InsufficientExemplarsError(
            f"strategy {strategy.name!r} needs {strategy.shots} exemplars, "
            f"got {len(exemplars)}"
        )
    used = tuple(exemplars[: strategy.shots])
    for ex in used:
        if ex.comment_id in forbidden_ids or ex.comment_id == comment.id:
            raise ExemplarLeakageError(
                f"exemplar {ex.comment_id!r} is part of the evaluation subset"
            )

    available = {"comment_text": comment.truncated_text}
    if used:
        available["examples"] = format_examples(used)

    phases = []
    for position, template_id in enumerate(strategy.phase_templates):
        template = _load_template(template_id, template_dir)
        consumes_prior = position > 0
        slots = {}
        for slot in _SLOT_RE.findall(template):
            if slot == "prior_response":
                if not consumes_prior:
                    raise TemplateError(
                        f"template {template_id!r} uses prior_response in a first phase"
                    )
                continue
            if slot not in available:
                raise TemplateError(
                    f"template {template_id!r} needs slot {slot!r}, which is "
                    f"not available for strategy {strategy.name!r}"
                )
            slots[slot] = available[slot]
        phases.append(
            PromptPhase(
                template_id=template_id,
                slots=tuple(sorted(slots.items())),
                consumes_prior=consumes_prior,
            )
        )
    return PromptPlan(
        strategy=strategy.name,
        comment_id=comment.id,
        phases=tuple(phases),
        exemplars=used,
    )


def render_phase(
    phase: PromptPhase,
    prior_response: str | None = None,
    template_dir: Path = TEMPLATE_DIR,
) -> str:
    """Deterministic rendering of one phase; byte-identical for equal inputs."""
    if phase.consumes_prior and prior_response is None:
        raise TemplateError(
            f"phase {phase.template_id!r} consumes a prior response, none given"
        )
    if not phase.consumes_prior and prior_response is not None:
        raise TemplateError(
            f"phase {phase.template_id!r} does not consume a prior response"
        )
    template = _load_template(phase.template_id, template_dir)
    values = dict(phase.slots)
    if prior_response is not None:
        values["prior_response"] = prior_response

    def substitute(match: re.Match) -> str:
        slot = match.group(1)
        if slot not in values:
            raise TemplateError(
                f"unfilled slot {slot!r} in template {phase.template_id!r}"
            )
        return values[slot]

    return _SLOT_RE.sub(substitute, template)


def select_exemplars(
    train: Sequence["LabeledComment"], k: int, seed: int
) -> list[Exemplar]:
    """Deterministic exemplar selection from the training split.

    For k >= 3 the selection covers all three classes (one per class first,
    remaining slots filled from the shuffled pool).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pool = [c for c in train if c.gold is not None]
    if len(pool) < k:
        raise InsufficientExemplarsError(
            f"need {k} labelled train comments, got {len(pool)}"
        )
    rng = Random(seed)
    order = list(pool)
    rng.shuffle(order)

    picked: list["LabeledComment"] = []
    if k >= 3:
        for label in ALL_LABELS:
            candidate = next((c for c in order if c.gold == label), None)
            if candidate is None:
                raise InsufficientExemplarsError(
                    f"train split has no comment with gold label {label.display!r}"
                )
            picked.append(candidate)
    remaining = [c for c in order if c not in picked]
    picked.extend(remaining[: k - len(picked)])
    return [Exemplar(c.id, c.truncated_text, c.gold) for c in picked[:k]]
