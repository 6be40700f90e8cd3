"""Small generated four-voice corpora with known chord annotations.

Each chord lasts a half note in 4/4. The soprano may decorate it with a
passing tone, a lower or upper neighbor, or a suspension carried over
from the previous chord, so the corpus exercises the figuration rules.
Useful for tests and for trying out the command line tool.
"""

from __future__ import annotations

import random
from fractions import Fraction
from pathlib import Path

from .chords import chord_tones, parse_label
from .io import annotation_path, save_annotation, save_piece
from .music import Meter, Note, Piece
from .semicrf import Example, LabeledSegmentation

__all__ = ["PROGRESSION_POOL", "make_piece", "make_corpus", "write_corpus"]

PROGRESSION_POOL = ("C:maj", "F:maj", "G:maj", "A:min", "D:min", "E:min", "G:maj:add7")
_HALF = Fraction(2)
_Q = Fraction(1)
_E = Fraction(1, 2)


def _sounding_pcs(label) -> list[int]:
    third = (label.root + (4 if label.mode == "maj" else 3)) % 12
    fifth = (label.root + (6 if label.mode == "dim" else 7)) % 12
    pcs = [label.root, third, fifth]
    if label.added == 7:
        pcs[0] = (label.root + 10) % 12  # the bass keeps the root; the seventh replaces it above
    return pcs


def _upper_voicing(label, prev_top: int | None) -> list[int]:
    pcs = _sounding_pcs(label)
    top = min((p for p in range(60, 80) if p % 12 in pcs), key=lambda p: (abs(p - (prev_top or 72)), p))
    inner: list[int] = []
    for p in range(top - 1, 52, -1):
        if p % 12 in pcs and p % 12 != top % 12 and all(p % 12 != q % 12 for q in inner):
            inner.append(p)
            if len(inner) == 2:
                break
    return sorted(inner) + [top]


def _passing(top: int, tones) -> tuple[int, int] | None:
    for target in (top + 3, top + 4):
        if target % 12 not in tones:
            continue
        for mid in (top + 1, top + 2):
            if mid % 12 not in tones and target - mid in (1, 2):
                return mid, target
    return None


def make_piece(piece_id: str, n_chords: int, rng: random.Random) -> Example:
    """One generated piece and its gold annotation."""
    labels = [parse_label(rng.choice(PROGRESSION_POOL))]
    while len(labels) < n_chords:
        y = parse_label(rng.choice(PROGRESSION_POOL))
        if y != labels[-1]:
            labels.append(y)
    notes: list[Note] = []
    prev_top = None
    resolution = None  # pitch a suspension from the previous chord resolves to
    for k, y in enumerate(labels):
        t = k * _HALF
        end = t + _HALF
        tones = chord_tones(y).members
        voices = _upper_voicing(y, prev_top)
        notes.append(Note(36 + y.root + (12 if y.root < 5 else 0), t, end))
        notes += [Note(p, t, end) for p in voices[:-1]]
        top = voices[-1]
        nxt = labels[k + 1] if k + 1 < n_chords else None
        if resolution is not None:
            notes.append(Note(resolution, t + _E, end))
            prev_top, resolution = resolution, None
            continue
        choice = rng.random()
        if choice < 0.25 and (pt := _passing(top, tones)):
            mid, target = pt
            notes += [Note(top, t, t + _Q), Note(mid, t + _Q, t + _Q + _E), Note(target, t + _Q + _E, end)]
            prev_top = target
            continue
        if choice < 0.5:
            nb = next((top + s for s in (2, 1, -1, -2) if (top + s) % 12 not in tones), None)
            if nb is not None:
                notes += [Note(top, t, t + _Q), Note(nb, t + _Q, t + _Q + _E), Note(top, t + _Q + _E, end)]
                prev_top = top
                continue
        if choice < 0.75 and nxt is not None:
            nxt_tones = chord_tones(nxt).members
            steps = [top - s for s in (1, 2) if (top - s) % 12 in nxt_tones]
            if top % 12 not in nxt_tones and steps:
                notes.append(Note(top, t, end + _E))  # tied over the chord change
                resolution = prev_top = steps[0]
                continue
        notes.append(Note(top, t, end))
        prev_top = top
    piece = Piece(id=piece_id, meter=Meter(), notes=notes)
    segments = tuple(piece.segment_at(k * _HALF, (k + 1) * _HALF) for k in range(n_chords))
    return Example(piece, LabeledSegmentation(segments, tuple(labels)))


def make_corpus(n_pieces: int = 5, n_chords: int = 8, seed: int = 0) -> list[Example]:
    rng = random.Random(seed)
    return [make_piece(f"synth{j:03d}", n_chords, rng) for j in range(n_pieces)]


def write_corpus(directory, n_pieces: int = 5, n_chords: int = 8, seed: int = 0) -> list[Path]:
    """Write pieces and their ``.ann.json`` sidecars into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for ex in make_corpus(n_pieces, n_chords, seed):
        path = directory / f"{ex.piece.id}.json"
        save_piece(ex.piece, path)
        save_annotation(ex.gold, ex.piece, annotation_path(path))
        paths.append(path)
    return paths
