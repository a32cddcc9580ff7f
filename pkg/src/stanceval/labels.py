"""Three-way stance labels and their fixed integer encoding."""

from __future__ import annotations

import enum


class StanceLabel(enum.IntEnum):
    """Ideological stance of a comment, with the dataset's integer codes."""

    NEUTRAL = 0
    PRO_PALESTINE = 1
    PRO_ISRAEL = 2

    @property
    def display(self) -> str:
        """Canonical data-file spelling ("Neutral", "Pro-Palestine", "Pro-Israel")."""
        return _DISPLAY[self]

    @classmethod
    def from_name(cls, name: str) -> "StanceLabel":
        """Parse the canonical spelling; rejects anything else."""
        try:
            return _BY_NAME[name]
        except KeyError:
            raise ValueError(f"unknown stance label: {name!r}") from None


_DISPLAY = {
    StanceLabel.NEUTRAL: "Neutral",
    StanceLabel.PRO_PALESTINE: "Pro-Palestine",
    StanceLabel.PRO_ISRAEL: "Pro-Israel",
}
_BY_NAME = {name: label for label, name in _DISPLAY.items()}

# Code order, used everywhere a deterministic label iteration is needed.
ALL_LABELS = (StanceLabel.NEUTRAL, StanceLabel.PRO_PALESTINE, StanceLabel.PRO_ISRAEL)


def encode_label(label: StanceLabel) -> int:
    """Integer code: Neutral=0, Pro-Palestine=1, Pro-Israel=2."""
    return int(label)


def decode_label(code: int) -> StanceLabel:
    """Inverse of :func:`encode_label`; rejects integers outside {0, 1, 2}."""
    try:
        return StanceLabel(code)
    except ValueError:
        raise ValueError(f"invalid stance code: {code!r}") from None
