"""Note lists, meters and the event stream derived from them.

Times are exact :class:`fractions.Fraction` values in quarter notes.  An
event is the set of pitches sounding between two consecutive partition
points (note onsets/offsets); a piece's event stream tiles the interval
from its first onset to its last offset.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

__all__ = [
    "Note",
    "Meter",
    "Event",
    "Segment",
    "Piece",
    "IngestError",
    "to_fraction",
    "compute_partition_points",
    "build_events",
    "accent_value",
]

_BEAT_UNITS = (1, 2, 4, 8, 16)
# finest grid probed by accent_value, in quarters
_MIN_GRID = Fraction(1, 64)


class IngestError(ValueError):
    """Raised for malformed notes, meters or annotations."""


def to_fraction(value) -> Fraction:
    """Parse ``"num/den"`` strings, ints and Fractions into a Fraction.

    Floats are accepted only when they are exactly representable as a
    short binary fraction (e.g. 0.5, 1.75); anything else is ambiguous.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise IngestError(f"not a time value: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        frac = Fraction(value)
        if frac.denominator > 1024:
            raise IngestError(f"float time {value!r} is not an exact rational; use 'num/den'")
        return frac
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise IngestError(f"bad rational {value!r}") from exc
    raise IngestError(f"not a time value: {value!r}")


@dataclass(frozen=True)
class Note:
    pitch: int
    onset: Fraction
    offset: Fraction

    def __post_init__(self):
        object.__setattr__(self, "onset", to_fraction(self.onset))
        object.__setattr__(self, "offset", to_fraction(self.offset))
        if not isinstance(self.pitch, int) or not 0 <= self.pitch <= 127:
            raise IngestError(f"pitch out of range [0, 127]: {self.pitch!r}")
        if self.offset <= self.onset:
            raise IngestError(f"note {self.pitch} has offset {self.offset} <= onset {self.onset}")

    @property
    def pc(self) -> int:
        return self.pitch % 12

    @property
    def duration(self) -> Fraction:
        return self.offset - self.onset


@dataclass(frozen=True)
class Meter:
    beats_per_measure: int = 4
    beat_unit: int = 4
    anacrusis: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "anacrusis", to_fraction(self.anacrusis))
        if not isinstance(self.beats_per_measure, int) or self.beats_per_measure < 1:
            raise IngestError(f"beats per measure must be a positive integer: {self.beats_per_measure!r}")
        if self.beat_unit not in _BEAT_UNITS:
            raise IngestError(f"beat unit must be one of {_BEAT_UNITS}: {self.beat_unit!r}")

    @property
    def measure_length(self) -> Fraction:
        """Measure duration in quarters."""
        return Fraction(4 * self.beats_per_measure, self.beat_unit)

    def level_factors(self) -> list[int]:
        """Division factors from the measure down to the notated beat unit.

        Compound meters (numerator divisible by 3 and larger than 3) are
        grouped into dotted beats first; power-of-two numerators split in
        halves; anything else divides straight into beats.
        """
        b = self.beats_per_measure
        factors: list[int] = []
        if b % 3 == 0 and b > 3:
            groups = b // 3
            factors.extend(_split_factors(groups))
            factors.append(3)
        else:
            factors.extend(_split_factors(b))
        return factors


def _split_factors(n: int) -> list[int]:
    if n == 1:
        return []
    if n & (n - 1) == 0:
        return [2] * (n.bit_length() - 1)
    return [n]


@dataclass(frozen=True)
class Event:
    """Pitches sounding between two consecutive partition points.

    ``pitches`` holds ``(pitch, held)`` pairs sorted by pitch, where
    ``held`` is true when the note already sounded in the previous event.
    ``notes`` holds the indices (into ``Piece.notes``) of the sounding
    notes, aligned with ``pitches``.
    """

    index: int
    start: Fraction
    end: Fraction
    acc: float
    pitches: tuple[tuple[int, bool], ...]
    notes: tuple[int, ...]

    @property
    def len(self) -> Fraction:
        return self.end - self.start

    @property
    def bass(self) -> int | None:
        return self.pitches[0][0] if self.pitches else None

    @property
    def pitch_set(self) -> frozenset[int]:
        return frozenset(p for p, _ in self.pitches)


@dataclass(frozen=True)
class Segment:
    """A run of events ``first..last`` (0-based, inclusive)."""

    first: int
    last: int

    def __post_init__(self):
        if self.first < 0 or self.last < self.first:
            raise ValueError(f"invalid segment bounds ({self.first}, {self.last})")

    def __len__(self) -> int:
        return self.last - self.first + 1

    def events(self, piece: "Piece") -> list[Event]:
        return piece.events[self.first:self.last + 1]

    def note_ids(self, piece: "Piece") -> list[int]:
        """Indices of all notes sounding anywhere in the segment, sorted."""
        ids = set()
        for ev in piece.events[self.first:self.last + 1]:
            ids.update(ev.notes)
        return sorted(ids)


def compute_partition_points(notes: Sequence[Note]) -> list[Fraction]:
    if not notes:
        raise IngestError("empty piece")
    points = {n.onset for n in notes} | {n.offset for n in notes}
    return sorted(points)


def accent_value(t, meter: Meter) -> float:
    """Beat strength of time ``t`` (quarters) under the notated meter.

    The downbeat scores 1.0 and every level of the metrical hierarchy
    halves the value, so in 4/4 beat 3 is 0.5, beats 2 and 4 are 0.25,
    eighth offbeats 0.125 and sixteenths 0.0625.  Positions that never
    land on a binary grid down to a 1/64-quarter resolution (triplets,
    for instance) rank one level below that finest grid.
    """
    if not isinstance(meter, Meter):
        raise IngestError("accent_value needs a Meter")
    t = to_fraction(t)
    if t < 0:
        raise IngestError(f"negative time {t}")
    measure = meter.measure_length
    pos = (t - meter.anacrusis) % measure
    if pos == 0:
        return 1.0
    grid = measure
    depth = 0
    for factor in meter.level_factors():
        grid /= factor
        depth += 1
        if pos % grid == 0:
            return 0.5 ** depth
    while grid > _MIN_GRID:
        grid /= 2
        depth += 1
        if pos % grid == 0:
            return 0.5 ** depth
    return 0.5 ** (depth + 1)


def build_events(notes: Sequence[Note], meter: Meter) -> list[Event]:
    points = compute_partition_points(notes)
    order = sorted(range(len(notes)), key=lambda k: (notes[k].onset, notes[k].pitch, notes[k].offset))
    events: list[Event] = []
    active: list[int] = []
    cursor = 0
    for idx, (start, end) in enumerate(zip(points[:-1], points[1:])):
        while cursor < len(order) and notes[order[cursor]].onset <= start:
            active.append(order[cursor])
            cursor += 1
        active = [k for k in active if notes[k].offset > start]
        sounding = sorted(active, key=lambda k: (notes[k].pitch, k))
        pitches = tuple((notes[k].pitch, notes[k].onset < start) for k in sounding)
        events.append(Event(
            index=idx,
            start=start,
            end=end,
            acc=accent_value(start, meter),
            pitches=pitches,
            notes=tuple(sounding),
        ))
    return events


@dataclass
class Piece:
    """A piece of music: note list plus its derived event stream.

    Besides ``events``, a few per-note lookups are precomputed:
    ``note_span[k]`` gives the first and last event index of note ``k``,
    ``note_len[k]`` its duration in quarters and ``note_acc[k]`` the
    accent of its onset event.
    """

    id: str
    meter: Meter
    notes: list[Note]
    events: list[Event] = field(init=False, repr=False)
    note_span: list[tuple[int, int]] = field(init=False, repr=False)

    def __post_init__(self):
        self.notes = list(self.notes)
        self.events = build_events(self.notes, self.meter)
        first: dict[int, int] = {}
        last: dict[int, int] = {}
        for ev in self.events:
            for k in ev.notes:
                first.setdefault(k, ev.index)
                last[k] = ev.index
        self.note_span = [(first[k], last[k]) for k in range(len(self.notes))]
        self._starts = [ev.start for ev in self.events]
        self._index_of_point = {ev.start: ev.index for ev in self.events}
        self._index_of_point[self.events[-1].end] = len(self.events)

    def __len__(self) -> int:
        return len(self.events)

    @classmethod
    def from_notes(cls, id: str, notes: Iterable, meter: Meter | None = None) -> "Piece":
        """Build a piece from ``Note`` objects or ``(pitch, onset, offset)`` tuples."""
        parsed = [n if isinstance(n, Note) else Note(int(n[0]), to_fraction(n[1]), to_fraction(n[2]))
                  for n in notes]
        return cls(id=id, meter=meter or Meter(), notes=parsed)

    @property
    def start(self) -> Fraction:
        return self.events[0].start

    @property
    def end(self) -> Fraction:
        return self.events[-1].end

    def note_len(self, k: int) -> Fraction:
        return self.notes[k].duration

    def note_acc(self, k: int) -> float:
        return self.events[self.note_span[k][0]].acc

    def boundary_index(self, t) -> int:
        """Event index starting at partition point ``t`` (``len(self)`` for the end).

        Raises :class:`IngestError` when ``t`` is not a partition point.
        """
        t = to_fraction(t)
        try:
            return self._index_of_point[t]
        except KeyError:
            raise IngestError(f"piece {self.id!r}: time {t} is not a partition point") from None

    def segment_at(self, start, end) -> Segment:
        """Segment covering the partition-point interval ``[start, end)``."""
        first = self.boundary_index(start)
        stop = self.boundary_index(end)
        if stop <= first:
            raise IngestError(f"piece {self.id!r}: empty segment [{start}, {end})")
        return Segment(first, stop - 1)

    def segment_times(self, seg: Segment) -> tuple[Fraction, Fraction]:
        return self.events[seg.first].start, self.events[seg.last].end
