"""Joint chord segmentation and labeling of symbolic music with a weak semi-Markov CRF."""

from .chords import ChordLabel, build_label_set, chord_tones, parse_label, format_label
from .music import Meter, Note, Piece, Segment
from .semicrf import LabeledSegmentation, ModelParams, TrainingConfig, Example, train, viterbi

__version__ = "0.1.0"
