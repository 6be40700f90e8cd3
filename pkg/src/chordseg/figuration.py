"""Heuristic detection of figuration notes (passing, neighbor, suspension, anticipation).

Figuration is always judged relative to a segment and a candidate label.
Everything that does not depend on the label is precomputed once per piece
by :class:`FigurationIndex`; for a given segment the remaining test
reduces to bit-mask checks against the label's chord tones, which is what
the feature extractor uses to evaluate all labels at once.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import NamedTuple

from .chords import ChordLabel, chord_tones, seventh_type
from .music import Event, Piece, Segment

__all__ = [
    "CONSONANT_INTERVALS",
    "FIGURATION_KINDS",
    "FigurationVerdict",
    "FigurationIndex",
    "figuration_index",
    "anchor_is_harmonic_fallback",
    "detect_figuration",
    "figuration_notes",
    "resolve_seventh",
]

# octaves, thirds, fifths and their inversions, as interval classes mod 12
CONSONANT_INTERVALS = frozenset({0, 3, 4, 5, 7, 8, 9})
FIGURATION_KINDS = ("passing", "neighbor", "suspension", "anticipation")
_STEPS = (1, 2)


@dataclass(frozen=True)
class FigurationVerdict:
    note: int
    kind: str
    anchors: tuple[int, ...]


class Candidate(NamedTuple):
    """A possible figuration reading of ``note`` within one segment.

    It holds for a label iff the note is not a chord tone and every pitch
    class in ``required`` (the in-segment anchors) is a chord tone.
    """

    note: int
    kind: str
    anchors: tuple[int, ...]
    required: int  # bit mask of pitch classes


def anchor_is_harmonic_fallback(anchor: int, event: Event) -> bool:
    """Consonance test for an anchor note whose segment label is unknown.

    ``anchor`` is a note index sounding in ``event``.  With two or more
    other notes in the event at least two must be consonant with the
    anchor; with one other note it must be consonant; with none the test
    passes.
    """
    pitch = None
    others = []
    for k, (p, _) in zip(event.notes, event.pitches):
        if k == anchor and pitch is None:
            pitch = p
        else:
            others.append(p)
    if pitch is None:
        raise ValueError(f"note {anchor} does not sound in event {event.index}")
    consonant = sum((p - pitch) % 12 in CONSONANT_INTERVALS for p in others)
    if len(others) >= 2:
        return consonant >= 2
    if len(others) == 1:
        return consonant == 1
    return True


class FigurationIndex:
    """Label-independent figuration structure of a piece."""

    def __init__(self, piece: Piece):
        self.piece = piece
        notes = piece.notes
        events = piece.events
        by_offset = defaultdict(list)
        by_onset = defaultdict(list)
        for k, n in enumerate(notes):
            by_offset[n.offset].append(k)
            by_onset[n.onset].append(k)
        lens = [n.duration for n in notes]
        accs = [piece.note_acc(k) for k in range(len(notes))]
        self._fallback_cache: dict[tuple[int, int], bool] = {}

        # passing / neighbor: (kind, n1, n2, n1 fallback ok, n2 fallback ok)
        self.two_anchor: dict[int, list[tuple[str, int, int, bool, bool]]] = {}
        for k, n in enumerate(notes):
            found = []
            before = by_offset.get(n.onset, ())
            after = by_onset.get(n.offset, ())
            if not before or not after:
                continue
            ev_before = events[piece.boundary_index(n.onset) - 1]
            ev_after = events[piece.boundary_index(n.offset)] if n.offset < piece.end else None
            for a in before:
                if not (lens[k] <= lens[a] and accs[k] < accs[a]):
                    continue
                d1 = notes[a].pitch - n.pitch
                for b in after:
                    if not lens[k] <= lens[b]:
                        continue
                    d2 = notes[b].pitch - n.pitch
                    kind = _two_anchor_kind(d1, d2)
                    if kind is None:
                        continue
                    found.append((kind, a, b,
                                  self._fallback(a, ev_before),
                                  self._fallback(b, ev_after)))
            if found:
                found.sort(key=lambda c: (FIGURATION_KINDS.index(c[0]), c[1], c[2]))
                self.two_anchor[k] = found

        # suspension anchors keyed by the event the suspended note starts a segment in
        self.suspension: dict[int, dict[int, int]] = {}
        for i in range(1, len(events)):
            prev, ev = events[i - 1], events[i]
            hits = {}
            for k in ev.notes:
                n = notes[k]
                for m in prev.notes:
                    if notes[m].pitch != n.pitch:
                        continue
                    tied = m == k
                    restruck = m != k and notes[m].offset == n.onset == ev.start
                    if (tied or restruck) and lens[k] <= lens[m] and self._fallback(m, prev):
                        hits.setdefault(k, m)
            if hits:
                self.suspension[i] = hits

        # anticipation anchors keyed by the event the anticipating note ends a segment in
        self.anticipation: dict[int, dict[int, int]] = {}
        for j in range(len(events) - 1):
            ev, nxt = events[j], events[j + 1]
            hits = {}
            for k in ev.notes:
                n = notes[k]
                for m in nxt.notes:
                    if notes[m].pitch != n.pitch:
                        continue
                    tied = m == k
                    restruck = m != k and n.offset == notes[m].onset == nxt.start
                    if (tied or restruck) and lens[k] <= lens[m] and self._fallback(m, nxt):
                        hits.setdefault(k, m)
            if hits:
                self.anticipation[j] = hits

    def _fallback(self, note: int, event: Event | None) -> bool:
        if event is None:
            return False
        key = (note, event.index)
        if key not in self._fallback_cache:
            self._fallback_cache[key] = anchor_is_harmonic_fallback(note, event)
        return self._fallback_cache[key]

    def candidates(self, segment: Segment, note_ids=None) -> list[Candidate]:
        """All figuration readings available to notes of ``segment``."""
        piece = self.piece
        span = piece.note_span
        first, last = segment.first, segment.last
        if note_ids is None:
            note_ids = segment.note_ids(piece)
        out: list[Candidate] = []
        sus = self.suspension.get(first, {}) if first > 0 else {}
        ant = self.anticipation.get(last, {})
        for k in note_ids:
            for kind, a, b, ok_a, ok_b in self.two_anchor.get(k, ()):
                in_a = span[a][1] >= first and span[a][0] <= last
                in_b = span[b][1] >= first and span[b][0] <= last
                if not (in_a or in_b):
                    continue
                if (not in_a and not ok_a) or (not in_b and not ok_b):
                    continue
                required = 0
                if in_a:
                    required |= 1 << piece.notes[a].pc
                if in_b:
                    required |= 1 << piece.notes[b].pc
                out.append(Candidate(k, kind, (a, b), required))
            if k in sus:
                out.append(Candidate(k, "suspension", (sus[k],), 0))
            if k in ant:
                out.append(Candidate(k, "anticipation", (ant[k],), 0))
        return out


def figuration_index(piece: Piece) -> FigurationIndex:
    """Cached :class:`FigurationIndex` for ``piece``."""
    index = getattr(piece, "_figuration_index", None)
    if index is None:
        index = FigurationIndex(piece)
        piece._figuration_index = index
    return index


def _two_anchor_kind(d1: int, d2: int) -> str | None:
    # d1, d2: anchor pitch minus figuration pitch, for the earlier and later anchor
    if (-d1 in _STEPS and d2 in _STEPS) or (d1 in _STEPS and -d2 in _STEPS):
        return "passing"
    if (d1 in _STEPS and d2 in _STEPS) or (-d1 in _STEPS and -d2 in _STEPS):
        return "neighbor"
    return None


def _select(candidates, pcs, tone_mask: int) -> dict[int, Candidate]:
    chosen: dict[int, Candidate] = {}
    for cand in candidates:
        if cand.note in chosen:
            continue
        if (tone_mask >> pcs[cand.note]) & 1:
            continue
        if cand.required & ~tone_mask:
            continue
        chosen[cand.note] = cand
    return chosen


def detect_figuration(segment: Segment, label: ChordLabel, piece: Piece) -> set[FigurationVerdict]:
    index = figuration_index(piece)
    mask = chord_tones(label).mask
    pcs = [n.pc for n in piece.notes]
    cands = sorted(index.candidates(segment), key=lambda c: (c.note, FIGURATION_KINDS.index(c.kind)))
    return {FigurationVerdict(c.note, c.kind, c.anchors) for c in _select(cands, pcs, mask).values()}


def figuration_notes(segment: Segment, label: ChordLabel, piece: Piece) -> set[int]:
    return {v.note for v in detect_figuration(segment, label, piece)}


def resolve_seventh(piece: Piece, segment: Segment, label: ChordLabel) -> str:
    """Seventh-chord type of an ``add7`` segment, ignoring figuration notes."""
    fig = figuration_notes(segment, label, piece)
    pcs = [piece.notes[k].pc for k in segment.note_ids(piece) if k not in fig]
    return seventh_type(label, pcs)
