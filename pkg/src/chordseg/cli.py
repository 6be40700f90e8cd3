"""Command line entry point: ``chordseg {train,predict,evaluate,cv}``.

Exit status is 0 on success, 1 when training or evaluation itself fails
(for instance misaligned predictions) and 2 for unreadable input or bad
configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .chords import PRESETS, LabelError
from .evaluation import EvaluationError, cross_validate, evaluate_corpus, format_table
from .features import extract
from .figuration import FIGURATION_KINDS, detect_figuration, resolve_seventh
from .io import (
    annotation_path,
    annotation_to_dict,
    discover_corpus,
    load_annotation,
    load_model,
    load_piece,
    save_annotation,
    save_model,
)
from .music import IngestError, Piece
from .semicrf import Example, ModelParams, TrainingConfig, TrainingError, train, viterbi

EXIT_OK, EXIT_EVAL, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    """Bad configuration detected after argument parsing."""


@dataclass(frozen=True)
class RunConfig:
    preset: str = "bach"
    max_seg_len: int = 32
    lam: float = 0.1
    cutoff: int = 5
    tol: float = 1e-4
    max_iters: int = 500
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise UsageError(f"unknown preset {self.preset!r}; choose from {', '.join(sorted(PRESETS))}")
        for name in ("max_seg_len", "cutoff", "max_iters", "jobs"):
            if getattr(self, name) < 1:
                raise UsageError(f"--{name.replace('_', '-')} must be at least 1")
        if self.lam < 0 or self.tol <= 0:
            raise UsageError("--lambda must be non-negative and --tol positive")

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        return cls(**{f: getattr(args, f) for f in cls.__dataclass_fields__ if hasattr(args, f)})

    def training(self) -> TrainingConfig:
        return TrainingConfig(preset=self.preset, L=self.max_seg_len, lam=self.lam, cutoff=self.cutoff,
                              tol=self.tol, max_iters=self.max_iters)


def load_corpus(directory, with_paths: bool = False):
    """Annotated pieces of ``directory``; every piece needs its sidecar."""
    paths = discover_corpus(directory)
    if not paths:
        raise FileNotFoundError("no pieces found")
    examples = []
    for path in paths:
        piece = load_piece(path)
        ann = annotation_path(path)
        if not ann.exists():
            raise IngestError(f"{path.name}: missing annotation {ann.name}")
        examples.append(Example(piece, load_annotation(ann, piece)))
    return (examples, paths) if with_paths else examples


def _decode(piece: Piece, params: ModelParams):
    return viterbi(piece, params).best


def _sevenths(piece: Piece, sy) -> list:
    out = []
    for seg, y in zip(sy.segments, sy.labels):
        if y.added != 7:
            out.append(None)
            continue
        try:
            out.append(resolve_seventh(piece, seg, y))
        except LabelError:
            out.append(None)
    return out


def _dump(piece: Piece, sy, params: ModelParams, figuration: bool, features: bool) -> None:
    for seg, y in zip(sy.segments, sy.labels):
        start, end = piece.segment_times(seg)
        record = {"piece": piece.id, "start": str(start), "end": str(end), "label": str(y)}
        if figuration:
            verdicts = sorted(detect_figuration(seg, y, piece),
                              key=lambda v: (v.note, FIGURATION_KINDS.index(v.kind)))
            record["figuration"] = [{"note": v.note, "pitch": piece.notes[v.note].pitch, "kind": v.kind,
                                     "anchors": list(v.anchors)} for v in verdicts]
        if features:
            vec = extract(piece, seg, y, params.registry, params.bins)
            record["features"] = {params.registry.names[i]: float(params.w[i]) for i in vec.indices}
        print(json.dumps(record), file=sys.stderr)


# subcommands


def cmd_train(args) -> int:
    config = RunConfig.from_args(args)
    corpus = load_corpus(args.corpus)
    params, trace = train(corpus, config.training())
    for k, value in enumerate(trace):
        print(f"iter {k:4d}  objective {value:.6f}")
    save_model(params, args.output)
    print(f"wrote {args.output}: {len(params.registry)} segment features, "
          f"{len(params.transition_registry)} transition features")
    return EXIT_OK


def cmd_predict(args) -> int:
    params = load_model(args.model)
    pieces = [load_piece(p) for p in args.pieces]
    if args.jobs > 1 and len(pieces) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_decode, pieces, [params] * len(pieces)))
    else:
        results = [_decode(p, params) for p in pieces]
    out_dir = Path(args.output) if args.output else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    for path, piece, sy in zip(args.pieces, pieces, results):
        sevenths = _sevenths(piece, sy) if args.resolve_sevenths else None
        if args.dump_figuration or args.dump_features:
            _dump(piece, sy, params, args.dump_figuration, args.dump_features)
        if out_dir:
            save_annotation(sy, piece, annotation_path(out_dir / Path(path).name), sevenths)
        else:
            print(json.dumps(annotation_to_dict(sy, piece, sevenths), indent=None if len(pieces) > 1 else 1))
    return EXIT_OK


def _modes(args) -> tuple[str, ...]:
    return ("root",) if args.root_only else ("full",)


def cmd_evaluate(args) -> int:
    gold, paths = load_corpus(args.gold, with_paths=True)
    pairs = []
    for ex, gold_path in zip(gold, paths):
        path = annotation_path(Path(args.pred) / gold_path.name)
        if not path.exists():
            raise EvaluationError(f"no prediction for piece {ex.piece.id!r} ({path})")
        try:
            pred = load_annotation(path, ex.piece)
        except IngestError as exc:
            raise EvaluationError(str(exc)) from None
        pairs.append((pred, ex.gold))
    reports = {mode: evaluate_corpus(pairs, mode) for mode in _modes(args)}
    if args.json:
        print(json.dumps({m: r.to_dict() for m, r in reports.items()}, indent=1))
    else:
        print(format_table(reports))
    return EXIT_OK


def cmd_cv(args) -> int:
    config = RunConfig.from_args(args)
    corpus = load_corpus(args.corpus)
    k = len(corpus) if args.leave_one_out else args.folds
    sizes = [int(s) for s in args.fold_sizes.split(",")] if args.fold_sizes else None
    report = cross_validate(corpus, config.training(), k=k, repeats=args.repeats, seed=config.seed,
                            sizes=sizes, jobs=config.jobs, modes=_modes(args))
    print(report.to_json() if args.json else format_table(report))
    return EXIT_OK


# argument parsing


def _training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", default="bach", help="label set: " + ", ".join(PRESETS))
    p.add_argument("--max-seg-len", type=int, default=32, help="maximum segment length L in events")
    p.add_argument("--lambda", dest="lam", type=float, default=0.1, help="L2 regularization strength")
    p.add_argument("--cutoff", type=int, default=5, help="minimum gold count for a feature instance")
    p.add_argument("--tol", type=float, default=1e-4, help="gradient tolerance of L-BFGS")
    p.add_argument("--max-iters", type=int, default=500)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chordseg", description="Chord segmentation and labeling of symbolic music with a semi-Markov CRF.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log optimizer progress")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for decoding and CV folds")
    parser.add_argument("--seed", type=int, default=0, help="seed for fold shuffling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model on an annotated corpus directory")
    p.add_argument("corpus")
    p.add_argument("-o", "--output", default="model.json")
    _training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="decode pieces with a trained model")
    p.add_argument("model")
    p.add_argument("pieces", nargs="+")
    p.add_argument("-o", "--output", help="directory for <id>.ann.json files (default: stdout)")
    p.add_argument("--resolve-sevenths", action="store_true", help="annotate add7 segments with their seventh type")
    p.add_argument("--dump-figuration", action="store_true", help="JSON lines of figuration verdicts on stderr")
    p.add_argument("--dump-features", action="store_true", help="JSON lines of active features on stderr")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a prediction directory against gold")
    p.add_argument("gold")
    p.add_argument("pred")
    p.add_argument("--root-only", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cv", help="repeated shuffled k-fold cross-validation")
    p.add_argument("corpus")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--leave-one-out", action="store_true")
    p.add_argument("--fold-sizes", help="comma separated explicit fold sizes")
    p.add_argument("--root-only", action="store_true")
    p.add_argument("--json", action="store_true")
    _training_flags(p)
    p.set_defaults(func=cmd_cv)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"chordseg: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_IO
    except (IngestError, LabelError, UsageError, OSError) as exc:
        print(f"chordseg: {exc}", file=sys.stderr)
        return EXIT_IO
    except (EvaluationError, TrainingError) as exc:
        print(f"chordseg: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except ValueError as exc:
        # remaining ValueErrors come from configuration such as an oversized gold segment
        print(f"chordseg: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
