"""Chord label algebra: label sets, chord tones, spelling and seventh types."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import total_ordering
from typing import Iterable

__all__ = [
    "TRIAD_MODES",
    "AUG6_MODES",
    "SUS_POW_MODES",
    "ADDED_NOTES",
    "ChordLabel",
    "NOCHORD",
    "LabelSetConfig",
    "PRESETS",
    "ChordTones",
    "LabelError",
    "build_label_set",
    "chord_tones",
    "parse_label",
    "format_label",
    "normalize_enharmonic",
    "root_name",
    "seventh_type",
    "bigram_tokens",
    "bigram_capacity",
]

TRIAD_MODES = ("maj", "min", "dim")
AUG6_MODES = ("it6", "fr6", "ger6")
SUS_POW_MODES = ("sus2", "sus4", "7sus4", "pow")
ADDED_NOTES = (4, 6, 7)
ALL_MODES = TRIAD_MODES + AUG6_MODES + SUS_POW_MODES

_FLAT_NAMES = ("C", "Db", "D", "Eb", "E", "F", "Gb", "G", "Ab", "A", "Bb", "B")
_SHARP_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "Bb", "B")
_LETTER_PC = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
_ROOT_RE = re.compile(r"^([A-Ga-g])([#b]*)$")


class LabelError(ValueError):
    pass


@total_ordering
@dataclass(frozen=True)
class ChordLabel:
    """A chord label.

    For augmented sixth labels ``root`` holds the pitch class of the bass.
    ``added`` is ``None`` or one of 4, 6, 7 and only set for triad modes.
    """

    root: int
    mode: str
    added: int | None = None

    def _key(self):
        return (self.root, self.mode, -1 if self.added is None else self.added)

    def __lt__(self, other):
        if not isinstance(other, ChordLabel):
            return NotImplemented
        return self._key() < other._key()

    def __post_init__(self):
        if self.mode not in ALL_MODES and self.mode != "nochord":
            raise LabelError(f"unknown mode {self.mode!r}")
        if not 0 <= self.root < 12:
            raise LabelError(f"root must be a pitch class 0-11, got {self.root!r}")
        if self.added is not None:
            if self.added not in ADDED_NOTES:
                raise LabelError(f"unknown added note {self.added!r}")
            if self.mode not in TRIAD_MODES:
                raise LabelError(f"mode {self.mode} cannot carry an added note")

    @property
    def is_triad(self) -> bool:
        return self.mode in TRIAD_MODES

    @property
    def is_aug6(self) -> bool:
        return self.mode in AUG6_MODES

    @property
    def is_sus_pow(self) -> bool:
        return self.mode in SUS_POW_MODES

    @property
    def is_nochord(self) -> bool:
        return self.mode == "nochord"

    @property
    def kind(self) -> str:
        if self.is_triad:
            return "triad"
        if self.is_aug6:
            return "aug6"
        if self.is_sus_pow:
            return "sp"
        return "nochord"

    @property
    def token(self) -> str:
        """``mode.added`` token used by the chord bigram features."""
        return f"{self.mode}.{'none' if self.added is None else f'add{self.added}'}"

    def __str__(self) -> str:
        return format_label(self)


NOCHORD = ChordLabel(0, "nochord")


@dataclass(frozen=True)
class LabelSetConfig:
    include_aug6: bool = False
    include_sus_pow: bool = False
    allowed_added: frozenset[int] = frozenset(ADDED_NOTES)

    def __post_init__(self):
        object.__setattr__(self, "allowed_added", frozenset(self.allowed_added))
        if not self.allowed_added <= set(ADDED_NOTES):
            raise LabelError(f"allowed_added must be a subset of {ADDED_NOTES}")


PRESETS = {
    "bach": LabelSetConfig(allowed_added={4, 6, 7}),
    "tavern": LabelSetConfig(allowed_added={6, 7}),
    "kp": LabelSetConfig(include_aug6=True, allowed_added={7}),
    "rock": LabelSetConfig(include_sus_pow=True, allowed_added={4, 6, 7}),
}


def build_label_set(config: LabelSetConfig | str) -> list[ChordLabel]:
    if isinstance(config, str):
        try:
            config = PRESETS[config]
        except KeyError:
            raise LabelError(f"unknown label preset {config!r}; choose from {sorted(PRESETS)}") from None
    added = [None] + sorted(config.allowed_added)
    labels = [ChordLabel(root, mode, a) for root in range(12) for mode in TRIAD_MODES for a in added]
    if config.include_aug6:
        labels += [ChordLabel(bass, mode) for bass in range(12) for mode in AUG6_MODES]
    if config.include_sus_pow:
        labels += [ChordLabel(root, mode) for root in range(12) for mode in SUS_POW_MODES]
    return labels


@dataclass(frozen=True)
class ChordTones:
    """Pitch classes of a label's chord tones.

    Triads fill ``root``/``third``/``fifth`` and ``added`` (the set of
    pitch classes accepted as the added note).  Augmented sixths fill
    ``bass`` (also mirrored in ``root``), ``third``, ``sixth`` and, for
    French and German sixths, ``fifth``.  Suspended and power chords fill
    ``root``, ``replacement`` (2nd or 4th, absent for pow), ``fifth`` and
    ``seventh`` (7sus4 only).
    """

    root: int
    third: int | None = None
    fifth: int | None = None
    added: frozenset[int] = frozenset()
    bass: int | None = None
    sixth: int | None = None
    replacement: int | None = None
    seventh: int | None = None
    members: frozenset[int] = field(default=frozenset(), compare=False)

    @property
    def mask(self) -> int:
        m = 0
        for pc in self.members:
            m |= 1 << pc
        return m


def chord_tones(label: ChordLabel) -> ChordTones:
    r = label.root
    if label.is_nochord:
        raise LabelError("sentinel has no tones")
    if label.is_triad:
        third = (r + (4 if label.mode == "maj" else 3)) % 12
        fifth = (r + (6 if label.mode == "dim" else 7)) % 12
        if label.added == 4:
            added = frozenset({(r + 5) % 12})
        elif label.added == 6:
            added = frozenset({(r + 9) % 12})
        elif label.added == 7:
            steps = (9, 10) if label.mode == "dim" else (10, 11)
            added = frozenset((r + s) % 12 for s in steps)
        else:
            added = frozenset()
        return ChordTones(root=r, third=third, fifth=fifth, added=added,
                          members=frozenset({r, third, fifth}) | added)
    if label.is_aug6:
        third = (r + 4) % 12
        sixth = (r + 10) % 12
        fifth = None
        if label.mode == "ger6":
            fifth = (r + 7) % 12
        elif label.mode == "fr6":
            fifth = (r + 6) % 12
        members = {r, third, sixth} | ({fifth} if fifth is not None else set())
        return ChordTones(root=r, bass=r, third=third, sixth=sixth, fifth=fifth,
                          members=frozenset(members))
    fifth = (r + 7) % 12
    replacement = {"sus2": (r + 2) % 12, "sus4": (r + 5) % 12, "7sus4": (r + 5) % 12}.get(label.mode)
    seventh = (r + 10) % 12 if label.mode == "7sus4" else None
    members = {r, fifth} | {pc for pc in (replacement, seventh) if pc is not None}
    return ChordTones(root=r, fifth=fifth, replacement=replacement, seventh=seventh,
                      members=frozenset(members))


def root_name(pc: int, mode: str) -> str:
    names = _SHARP_NAMES if mode in ("min", "dim") else _FLAT_NAMES
    return names[pc % 12]


def format_label(label: ChordLabel) -> str:
    if label.is_nochord:
        return "N"
    text = f"{root_name(label.root, label.mode)}:{label.mode}"
    if label.added is not None:
        text += f":add{label.added}"
    return text


def _parse_root(token: str) -> int:
    m = _ROOT_RE.match(token)
    if not m:
        raise LabelError(f"bad chord root {token!r}")
    letter, accidentals = m.groups()
    return (_LETTER_PC[letter.upper()] + accidentals.count("#") - accidentals.count("b")) % 12


def parse_label(text: str) -> ChordLabel:
    """Parse ``<root>:<mode>[:<added>]``; spelled roots collapse to pitch classes."""
    parts = text.strip().split(":")
    if len(parts) not in (2, 3):
        raise LabelError(f"bad chord label {text!r}")
    root = _parse_root(parts[0])
    mode = parts[1]
    if mode not in ALL_MODES:
        raise LabelError(f"bad chord mode {mode!r} in {text!r}")
    added = None
    if len(parts) == 3:
        token = parts[2]
        digits = token[3:] if token.startswith("add") else token
        if digits not in ("4", "6", "7"):
            raise LabelError(f"bad added note {token!r} in {text!r}")
        added = int(digits)
    return ChordLabel(root, mode, added)


def normalize_enharmonic(text: str) -> tuple[ChordLabel, str]:
    """Parse a spelled label and return it with its canonical spelling.

    >>> normalize_enharmonic("C#:maj")[1]
    'Db:maj'
    """
    label = parse_label(text)
    return label, format_label(label)


_SEVENTH_TYPES = {
    ("maj", 11): "maj7",
    ("maj", 10): "dom7",
    ("min", 11): "minmaj7",
    ("min", 10): "min7",
    ("dim", 9): "fulldim7",
    ("dim", 10): "halfdim7",
}


def seventh_type(label: ChordLabel, pitch_classes: Iterable[int]) -> str:
    """Seventh chord type of an ``add7`` label given its non-figuration pitch classes.

    Intervals are tried in the order 11, 10, 9 half steps above the root.
    """
    if label.added != 7:
        raise LabelError(f"{format_label(label)} has no added seventh")
    present = {(pc - label.root) % 12 for pc in pitch_classes}
    for interval in (11, 10, 9):
        kind = _SEVENTH_TYPES.get((label.mode, interval))
        if kind is not None and interval in present:
            return kind
    raise LabelError("no seventh present")


def bigram_tokens() -> list[str]:
    """All ``mode.added`` tokens a bigram feature can mention."""
    tokens = [ChordLabel(0, m, a).token for m in TRIAD_MODES for a in (None,) + ADDED_NOTES]
    tokens += [ChordLabel(0, m).token for m in AUG6_MODES + SUS_POW_MODES]
    return tokens


def bigram_capacity() -> int:
    return len(bigram_tokens()) ** 2 * 12
