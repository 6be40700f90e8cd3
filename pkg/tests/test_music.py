from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chordseg.music import (
    IngestError,
    Meter,
    Note,
    Piece,
    Segment,
    accent_value,
    build_events,
    compute_partition_points,
    to_fraction,
)

NAMES = {48: "C3", 52: "E3", 55: "G3", 59: "B3", 60: "C4", 62: "D4", 67: "G4",
         71: "B4", 72: "C5", 74: "D5", 76: "E5", 77: "F5", 79: "G5"}


def test_partition_points_examples():
    assert compute_partition_points([Note(60, 0, 1), Note(64, F(1, 2), F(3, 2))]) == [0, F(1, 2), 1, F(3, 2)]
    assert compute_partition_points([Note(60, 0, 1)]) == [0, 1]


def test_partition_points_empty():
    with pytest.raises(IngestError, match="empty piece"):
        compute_partition_points([])


def test_table1_points(table1):
    points = [ev.start for ev in table1.events] + [table1.end]
    assert points == [0, F(1, 2), 1, F(7, 4), 2, F(5, 2), 3, F(7, 2), 4]


def test_table1_events(table1):
    expected = [
        ("G3 B3 D4 G5", F(1, 8)), ("G3 B3 D4 F5", F(1, 8)), ("B4 D5", F(3, 16)), ("B4 D5", F(1, 16)),
        ("C4 C5 E5", F(1, 8)), ("G3 C5 E5", F(1, 8)), ("E3 G4 C5 E5", F(1, 8)), ("C3 G4 C5 E5", F(1, 8)),
    ]
    assert len(table1.events) == 8
    for ev, (pitches, whole_len) in zip(table1.events, expected):
        assert " ".join(NAMES[p] for p, _ in ev.pitches) == pitches
        assert ev.len == 4 * whole_len


def test_held_flags(table1):
    e5, e6 = table1.events[4], table1.events[5]
    assert dict(e5.pitches)[72] is False and dict(e5.pitches)[76] is False
    assert dict(e6.pitches)[72] is True and dict(e6.pitches)[76] is True
    # a restruck note is a new note, not held
    assert all(not held for _, held in table1.events[3].pitches)


def test_rest_event_has_no_bass():
    piece = Piece.from_notes("gap", [(60, 0, 1), (64, 2, 3)])
    assert [len(ev.pitches) for ev in piece.events] == [1, 0, 1]
    assert piece.events[1].bass is None


@pytest.mark.parametrize("t,acc", [(0, 1.0), (2, 0.5), (1, 0.25), (3, 0.25), (F(1, 2), 0.125),
                                   (F(1, 4), 0.0625), (4, 1.0), (F(1, 8), 0.03125)])
def test_accent_4_4(t, acc):
    assert accent_value(t, Meter(4, 4)) == acc


def test_accent_compound_and_anacrusis():
    m68 = Meter(6, 8)
    assert [accent_value(F(k, 2), m68) for k in range(6)] == [1.0, 0.25, 0.25, 0.5, 0.25, 0.25]
    pickup = Meter(4, 4, anacrusis=1)
    assert accent_value(1, pickup) == 1.0 and accent_value(0, pickup) == 0.25
    # off every binary grid down to 1/64 quarter (depth 8 in 4/4): one level below that
    assert accent_value(F(1, 3), Meter(4, 4)) == 0.5 ** 9


def test_accent_errors():
    with pytest.raises(IngestError):
        accent_value(-1, Meter())
    with pytest.raises(IngestError):
        Meter(0, 4)
    with pytest.raises(IngestError):
        Meter(4, 3)


def test_note_validation():
    with pytest.raises(IngestError):
        Note(60, 1, 1)
    with pytest.raises(IngestError):
        Note(128, 0, 1)
    assert to_fraction("3/4") == F(3, 4)
    with pytest.raises(IngestError):
        to_fraction(0.1)


def test_boundary_lookup(table1):
    assert table1.segment_at(0, 2) == Segment(0, 3)
    with pytest.raises(IngestError, match="woo68-m12"):
        table1.boundary_index(F(1, 3))


notes_strategy = st.lists(
    st.tuples(st.integers(40, 90), st.integers(0, 15), st.integers(1, 8)),
    min_size=1, max_size=10,
).map(lambda xs: [Note(p, F(on, 4), F(on + d, 4)) for p, on, d in xs])


@settings(max_examples=80, deadline=None)
@given(notes_strategy)
def test_event_stream_properties(notes):
    events = build_events(notes, Meter())
    assert events[0].start == min(n.onset for n in notes)
    assert events[-1].end == max(n.offset for n in notes)
    for a, b in zip(events, events[1:]):
        assert a.end == b.start and a.len > 0
    for k, n in enumerate(notes):
        covered = sum((ev.len for ev in events if k in ev.notes), F(0))
        assert covered == n.duration
    for ev in events:
        if ev.pitches:
            assert ev.bass == min(p for p, _ in ev.pitches)
    assert build_events(notes, Meter()) == events


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 255), st.integers(0, 5))
def test_accent_halves_per_level(k, depth):
    t = F(k, 2 ** depth)
    fine = F(2 * k + 1, 2 ** (depth + 1))
    assert accent_value(fine, Meter()) <= accent_value(t, Meter()) / 2
