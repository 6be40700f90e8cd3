"""Event accuracy, segment precision/recall/F and shuffled k-fold cross-validation.

Two comparison modes exist.  ``full`` compares whole labels.  ``root``
compares roots only and ignores events (and segments) that gold labels as
augmented sixth chords; a predicted augmented sixth has no root and never
matches.
"""

from __future__ import annotations

import json
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .chords import ChordLabel
from .semicrf import Example, LabeledSegmentation, TrainingConfig, train, viterbi

__all__ = [
    "MODES",
    "EvalReport",
    "FoldPlan",
    "CVReport",
    "EvaluationError",
    "event_accuracy",
    "segment_prf",
    "evaluate_piece",
    "evaluate_corpus",
    "make_fold_plan",
    "cross_validate",
    "format_table",
]

log = logging.getLogger(__name__)

MODES = ("full", "root")
MEASURES = ("acc_e", "p_s", "r_s", "f_s")


class EvaluationError(ValueError):
    pass


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise EvaluationError(f"unknown evaluation mode {mode!r}; use 'full' or 'root'")


def _same(pred: ChordLabel, gold: ChordLabel, mode: str) -> bool:
    if mode == "full":
        return pred == gold
    return not pred.is_aug6 and pred.root == gold.root


def _check_tiling(pred: LabeledSegmentation, gold: LabeledSegmentation) -> int:
    n = sum(len(s) for s in gold.segments)
    try:
        gold.validate(n)
        pred.validate(n)
    except ValueError as exc:
        raise EvaluationError(f"prediction and gold do not tile the same events: {exc}") from None
    return n


@dataclass(frozen=True)
class EvalReport:
    """Pooled counts with the derived measures.

    ``p_s``/``r_s``/``f_s`` follow these conventions: no predictions and no
    gold segments give 1.0 throughout; only one side empty gives 0.0.
    """

    events_total: int = 0
    events_correct: int = 0
    segments_pred: int = 0
    segments_gold: int = 0
    segments_matched: int = 0

    @property
    def acc_e(self) -> float:
        return self.events_correct / self.events_total if self.events_total else 1.0

    @property
    def p_s(self) -> float:
        if not self.segments_pred:
            return 1.0 if not self.segments_gold else 0.0
        return self.segments_matched / self.segments_pred

    @property
    def r_s(self) -> float:
        if not self.segments_gold:
            return 1.0 if not self.segments_pred else 0.0
        return self.segments_matched / self.segments_gold

    @property
    def f_s(self) -> float:
        # equals 2PR/(P+R), computed from counts so simple ratios stay exact
        denom = self.segments_pred + self.segments_gold
        if not denom:
            return 1.0
        return 2 * self.segments_matched / denom

    def __add__(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(*(a + b for a, b in zip(_counts(self), _counts(other))))

    def measures(self) -> dict[str, float]:
        return {m: getattr(self, m) for m in MEASURES}

    def to_dict(self) -> dict:
        return {**asdict(self), **self.measures()}


def _counts(r: EvalReport) -> tuple[int, ...]:
    return (r.events_total, r.events_correct, r.segments_pred, r.segments_gold, r.segments_matched)


def _event_counts(pred, gold, mode) -> tuple[int, int]:
    total = correct = 0
    for p, g in zip(pred.event_labels(), gold.event_labels()):
        if mode == "root" and g.is_aug6:
            continue
        total += 1
        correct += _same(p, g, mode)
    return total, correct


def _segment_counts(pred, gold, mode) -> tuple[int, int, int]:
    gold_map = {(s.first, s.last): y for s, y in zip(gold.segments, gold.labels)}
    skipped = set()
    if mode == "root":
        skipped = {b for b, y in gold_map.items() if y.is_aug6}
    n_gold = len(gold_map) - len(skipped)
    n_pred = matched = 0
    for s, y in zip(pred.segments, pred.labels):
        bounds = (s.first, s.last)
        if bounds in skipped:
            continue
        n_pred += 1
        g = gold_map.get(bounds)
        matched += g is not None and _same(y, g, mode)
    return n_pred, n_gold, matched


def evaluate_piece(pred: LabeledSegmentation, gold: LabeledSegmentation, mode: str = "full") -> EvalReport:
    _check_mode(mode)
    _check_tiling(pred, gold)
    return EvalReport(*_event_counts(pred, gold, mode), *_segment_counts(pred, gold, mode))


def event_accuracy(pred: LabeledSegmentation, gold: LabeledSegmentation, mode: str = "full") -> float:
    """Fraction of events whose predicted label agrees with gold."""
    return evaluate_piece(pred, gold, mode).acc_e


def segment_prf(pred: LabeledSegmentation, gold: LabeledSegmentation,
                mode: str = "full") -> tuple[float, float, float]:
    """Precision, recall and F of exact boundary-and-label segment matches."""
    r = evaluate_piece(pred, gold, mode)
    return r.p_s, r.r_s, r.f_s


def evaluate_corpus(pairs, mode: str = "full") -> EvalReport:
    """Pool counts over ``(pred, gold)`` pairs."""
    total = EvalReport()
    for pred, gold in pairs:
        total = total + evaluate_piece(pred, gold, mode)
    return total


# cross-validation


@dataclass(frozen=True)
class FoldPlan:
    seed: int
    repeat: int
    k: int
    folds: tuple[tuple[str, ...], ...]

    def fold_of(self, piece_id: str) -> int:
        for f, ids in enumerate(self.folds):
            if piece_id in ids:
                return f
        raise KeyError(piece_id)


def make_fold_plan(piece_ids: Sequence[str], k: int, seed: int = 0, repeat: int = 0,
                   sizes: Sequence[int] | None = None) -> FoldPlan:
    """Shuffle ``piece_ids`` and cut them into ``k`` folds.

    Without ``sizes`` the folds differ in size by at most one.  The shuffle
    depends only on ``(seed, repeat)``.
    """
    ids = list(piece_ids)
    if len(set(ids)) != len(ids):
        raise EvaluationError("piece ids must be unique")
    if k < 2:
        raise EvaluationError("need at least 2 folds")
    if len(ids) < k:
        raise EvaluationError(f"{len(ids)} pieces cannot fill {k} folds")
    order = np.random.default_rng([seed, repeat]).permutation(len(ids))
    if sizes is None:
        chunks = np.array_split(order, k)
    else:
        sizes = list(sizes)
        if len(sizes) != k or sum(sizes) != len(ids) or min(sizes) < 1:
            raise EvaluationError(f"fold sizes {sizes} do not split {len(ids)} pieces into {k} folds")
        chunks = np.split(order, np.cumsum(sizes)[:-1])
    return FoldPlan(seed, repeat, k, tuple(tuple(ids[j] for j in chunk) for chunk in chunks))


@dataclass
class CVReport:
    """Per-repeat pooled reports plus their mean and sample standard deviation."""

    k: int
    repeats: int
    seed: int
    runs: dict[str, list[EvalReport]] = field(default_factory=dict)

    def values(self, mode: str, measure: str) -> list[float]:
        return [getattr(r, measure) for r in self.runs[mode]]

    def mean(self, mode: str, measure: str) -> float:
        return statistics.fmean(self.values(mode, measure))

    def std(self, mode: str, measure: str) -> float | None:
        vals = self.values(mode, measure)
        return statistics.stdev(vals) if len(vals) > 1 else None

    def summary(self) -> dict:
        return {mode: {m: {"mean": self.mean(mode, m), "std": self.std(mode, m)} for m in MEASURES}
                for mode in self.runs}

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "repeats": self.repeats,
            "seed": self.seed,
            "summary": self.summary(),
            "runs": {mode: [r.to_dict() for r in reps] for mode, reps in self.runs.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _run_fold(train_set, test_set, config: TrainingConfig):
    params, _ = train(train_set, config)
    return [(viterbi(ex.piece, params).best, ex.gold) for ex in test_set]


def cross_validate(corpus: Sequence[Example], config: TrainingConfig | None = None, k: int = 10,
                   repeats: int = 1, seed: int = 0, sizes: Sequence[int] | None = None,
                   jobs: int = 1, modes: Sequence[str] = MODES) -> CVReport:
    """Repeated shuffled k-fold cross-validation with pooled fold results."""
    config = config or TrainingConfig()
    for mode in modes:
        _check_mode(mode)
    if repeats < 1:
        raise EvaluationError("repeats must be at least 1")
    by_id = {ex.piece.id: ex for ex in corpus}
    if len(by_id) != len(corpus):
        raise EvaluationError("piece ids must be unique")
    plans = [make_fold_plan(list(by_id), k, seed, r, sizes) for r in range(repeats)]
    tasks = []
    for plan in plans:
        for f, held_out in enumerate(plan.folds):
            held = set(held_out)
            tasks.append(([by_id[i] for i in by_id if i not in held], [by_id[i] for i in held_out], config))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold, *zip(*tasks)))
    else:
        results = [_run_fold(*t) for t in tasks]
    report = CVReport(k=k, repeats=repeats, seed=seed, runs={m: [] for m in modes})
    for r in range(repeats):
        pairs = [pair for fold in results[r * k:(r + 1) * k] for pair in fold]
        for mode in modes:
            report.runs[mode].append(evaluate_corpus(pairs, mode))
        log.info("repeat %d: %s", r + 1, report.runs[modes[0]][-1].measures())
    return report


def _cell(mean: float, std: float | None) -> str:
    text = f"{100 * mean:6.2f}"
    return text + (f" ± {100 * std:5.2f}" if std is not None else "")


def format_table(report: EvalReport | CVReport | dict[str, EvalReport]) -> str:
    """Aligned text table with one row per mode and columns Acc_E, P_S, R_S, F_S (percent)."""
    if isinstance(report, EvalReport):
        report = {"full": report}
    rows = []
    if isinstance(report, CVReport):
        for mode in report.runs:
            rows.append((mode, [_cell(report.mean(mode, m), report.std(mode, m)) for m in MEASURES]))
    else:
        for mode, r in report.items():
            rows.append((mode, [_cell(v, None) for v in r.measures().values()]))
    width = max(len(c) for _, cells in rows for c in cells)
    header = f"{'mode':<6}" + "".join(f"  {h:>{width}}" for h in ("Acc_E", "P_S", "R_S", "F_S"))
    lines = [header, "-" * len(header)]
    lines += [f"{mode:<6}" + "".join(f"  {c:>{width}}" for c in cells) for mode, cells in rows]
    return "\n".join(lines)
