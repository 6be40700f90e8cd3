"""JSON formats for pieces, gold annotations and trained models."""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

import numpy as np

from .chords import LabelError, build_label_set, format_label, parse_label
from .features import Bins, FeatureRegistry
from .music import IngestError, Meter, Note, Piece, to_fraction
from .semicrf import LabeledSegmentation, ModelParams

__all__ = [
    "ANNOTATION_SUFFIX",
    "piece_from_dict",
    "piece_to_dict",
    "load_piece",
    "save_piece",
    "annotation_from_dict",
    "annotation_to_dict",
    "load_annotation",
    "save_annotation",
    "annotation_path",
    "discover_corpus",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

ANNOTATION_SUFFIX = ".ann.json"
MODEL_FORMAT = 1


def _time_str(t: Fraction) -> str | int:
    return t.numerator if t.denominator == 1 else f"{t.numerator}/{t.denominator}"


def _read_json(path: Path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def _write_json(path: Path, data) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def piece_from_dict(data: dict, default_id: str = "piece") -> Piece:
    if not isinstance(data, dict):
        raise IngestError("piece file must hold a JSON object")
    meter_data = data.get("meter") or {}
    try:
        meter = Meter(int(meter_data.get("beats", 4)), int(meter_data.get("unit", 4)),
                      to_fraction(meter_data.get("anacrusis", 0)))
        notes = [Note(int(n["pitch"]), to_fraction(n["onset"]), to_fraction(n["offset"]))
                 for n in data.get("notes", [])]
    except (KeyError, TypeError) as exc:
        raise IngestError(f"malformed piece {data.get('id', default_id)!r}: {exc}") from None
    return Piece(id=str(data.get("id", default_id)), meter=meter, notes=notes)


def piece_to_dict(piece: Piece) -> dict:
    m = piece.meter
    return {
        "id": piece.id,
        "meter": {"beats": m.beats_per_measure, "unit": m.beat_unit, "anacrusis": _time_str(m.anacrusis)},
        "notes": [{"pitch": n.pitch, "onset": _time_str(n.onset), "offset": _time_str(n.offset)}
                  for n in piece.notes],
    }


def load_piece(path) -> Piece:
    path = Path(path)
    return piece_from_dict(_read_json(path), default_id=path.name.removesuffix(".json"))


def save_piece(piece: Piece, path) -> None:
    _write_json(Path(path), piece_to_dict(piece))


def annotation_from_dict(data: dict, piece: Piece) -> LabeledSegmentation:
    """Map time-stamped segments onto ``piece``'s events; they must tile it."""
    if not isinstance(data, dict) or not isinstance(data.get("segments"), list):
        raise IngestError(f"piece {piece.id!r}: annotation needs a 'segments' list")
    segments, labels = [], []
    for item in data["segments"]:
        try:
            seg = piece.segment_at(item["start"], item["end"])
            label = parse_label(item["label"])
        except KeyError as exc:
            raise IngestError(f"piece {piece.id!r}: annotation segment lacks {exc}") from None
        except LabelError as exc:
            raise IngestError(f"piece {piece.id!r}: {exc}") from None
        segments.append(seg)
        labels.append(label)
    result = LabeledSegmentation(tuple(segments), tuple(labels))
    try:
        result.validate(len(piece.events))
    except ValueError as exc:
        raise IngestError(f"piece {piece.id!r}: annotation misaligned: {exc}") from None
    return result


def annotation_to_dict(sy: LabeledSegmentation, piece: Piece, sevenths: list | None = None) -> dict:
    out = []
    for k, (seg, y) in enumerate(zip(sy.segments, sy.labels)):
        start, end = piece.segment_times(seg)
        item = {"start": _time_str(start), "end": _time_str(end), "label": format_label(y)}
        if sevenths is not None and sevenths[k] is not None:
            item["seventh"] = sevenths[k]
        out.append(item)
    return {"id": piece.id, "segments": out}


def annotation_path(piece_path) -> Path:
    piece_path = Path(piece_path)
    return piece_path.with_name(piece_path.name.removesuffix(".json") + ANNOTATION_SUFFIX)


def load_annotation(path, piece: Piece) -> LabeledSegmentation:
    return annotation_from_dict(_read_json(Path(path)), piece)


def save_annotation(sy: LabeledSegmentation, piece: Piece, path, sevenths: list | None = None) -> None:
    _write_json(Path(path), annotation_to_dict(sy, piece, sevenths))


def discover_corpus(directory) -> list[Path]:
    """Piece files (``*.json`` minus annotation sidecars) in ``directory``, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise IngestError(f"not a directory: {directory}")
    return sorted(p for p in directory.glob("*.json") if not p.name.endswith(ANNOTATION_SUFFIX))


def model_to_dict(params: ModelParams) -> dict:
    return {
        "format": MODEL_FORMAT,
        "registry": list(params.registry.names),
        "transition_registry": list(params.transition_registry.names),
        "w": params.w.tolist(),
        "u": params.u.tolist(),
        "L": params.L,
        "lambda": params.lam,
        "label_config": params.preset,
        "labels": [format_label(y) for y in params.labels],
        "bins": list(params.bins.edges),
    }


def model_from_dict(data: dict) -> ModelParams:
    try:
        fields = {k: data[k] for k in ("registry", "transition_registry", "w", "u", "L", "lambda", "labels", "bins")}
    except (KeyError, TypeError) as exc:
        raise IngestError(f"model file lacks field {exc}") from None
    preset = data.get("label_config")
    try:
        labels = [parse_label(s) for s in fields["labels"]]
        if preset is not None and labels != build_label_set(preset):
            raise IngestError(f"model labels do not match the {preset!r} preset")
        return ModelParams(FeatureRegistry(list(fields["registry"]), frozen=True),
                           FeatureRegistry(list(fields["transition_registry"]), frozen=True),
                           np.asarray(fields["w"], float), np.asarray(fields["u"], float), labels,
                           L=int(fields["L"]), lam=float(fields["lambda"]), preset=preset,
                           bins=Bins(tuple(fields["bins"])))
    except (KeyError, ValueError, TypeError) as exc:
        if isinstance(exc, IngestError):
            raise
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        raise IngestError(f"invalid model file: {msg}") from None


def save_model(params: ModelParams, path) -> None:
    _write_json(Path(path), model_to_dict(params))


def load_model(path) -> ModelParams:
    return model_from_dict(_read_json(Path(path)))
