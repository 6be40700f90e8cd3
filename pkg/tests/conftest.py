import sys
from fractions import Fraction as F
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chordseg.music import Piece  # noqa: E402

# Measure 12 of Beethoven WoO 68 as eight events; times in quarters.
TABLE1_NOTES = [
    (55, 0, 1), (59, 0, 1), (62, 0, 1),          # G3 B3 D4 under e1, e2
    (79, 0, F(1, 2)), (77, F(1, 2), 1),          # G5 then F5
    (71, 1, F(7, 4)), (74, 1, F(7, 4)),          # B4 D5, dotted eighth
    (71, F(7, 4), 2), (74, F(7, 4), 2),          # B4 D5 restruck, sixteenth
    (60, 2, F(5, 2)), (72, 2, 4), (76, 2, 4),    # C4 under held C5 E5
    (55, F(5, 2), 3), (52, 3, F(7, 2)), (67, 3, 4), (48, F(7, 2), 4),
]


@pytest.fixture
def table1() -> Piece:
    return Piece.from_notes("woo68-m12", TABLE1_NOTES)


# acceptance verdicts, echoed after the run so they survive output capture
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
