"""Segment-label and label-transition features.

Every segment-label feature instance is a Boolean with a stable string
name.  Real-valued measurements (purity, weighted coverage, bass time,
accent) are discretized into ``K + 2`` instances: ``/zero``, ``/one`` and
one ``/bin(a,b]`` per bin.  The full set of instances for a bin layout is
the :class:`FeatureSpace`; a :class:`FeatureRegistry` is the subset kept
for a trained model.

Features never test the absolute chord root: every measurement is taken
relative to the label's chord tones, so transposing notes and label
together leaves the feature vector unchanged.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .chords import ChordLabel, NOCHORD, bigram_tokens, chord_tones
from .figuration import figuration_index
from .music import Piece, Segment

__all__ = [
    "Bins",
    "DEFAULT_BINS",
    "discretize",
    "bin_instance",
    "FeatureSpace",
    "feature_space",
    "TransitionSpace",
    "TRANSITIONS",
    "FeatureRegistry",
    "SparseFeatureVector",
    "LabelTable",
    "Lattice",
    "segment_values",
    "segment_feature_names",
    "purity_features",
    "coverage_features",
    "bass_features",
    "accent_change_feature",
    "transition_features",
    "extract",
    "build_lattice",
    "build_registry",
]

_EPS = 1e-12


@dataclass(frozen=True)
class Bins:
    edges: tuple[float, ...] = tuple(k / 10 for k in range(11))

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        if len(edges) < 2 or edges[0] != 0.0 or edges[-1] != 1.0:
            raise ValueError("bin edges must start at 0 and end at 1")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("bin edges must be strictly increasing")

    @property
    def k(self) -> int:
        return len(self.edges) - 1

    def level_names(self) -> list[str]:
        inner = [f"bin({_fmt(a)},{_fmt(b)}]" for a, b in zip(self.edges, self.edges[1:])]
        return ["zero", *inner, "one"]


DEFAULT_BINS = Bins()


def _fmt(x: float) -> str:
    return f"{x:g}"


def _levels(values: np.ndarray, bins: Bins) -> np.ndarray:
    """Vectorized discretization; level 0 is ``zero``, ``K + 1`` is ``one``."""
    v = np.round(values, 12)
    lev = np.searchsorted(np.asarray(bins.edges), v, side="left")
    lev = np.where(v <= _EPS, 0, lev)
    return np.where(v >= 1.0 - _EPS, bins.k + 1, lev)


def discretize(value: float, bins: Bins = DEFAULT_BINS) -> str:
    """Name of the single Boolean instance that fires for ``value``.

    >>> discretize(0.35)
    'bin(0.3,0.4]'
    """
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"value {value!r} outside [0, 1]")
    return bins.level_names()[int(_levels(np.array([value]), bins)[0])]


def bin_instance(family: str, value: float, bins: Bins = DEFAULT_BINS) -> str:
    return f"{family}/{discretize(value, bins)}"


# ---------------------------------------------------------------------------
# feature families

_ROLES = {
    "triad": ("root", "third", "fifth", "added"),
    "aug6": ("bass", "third", "sixth", "fifth"),
    "sp": ("root", "repl", "fifth", "seventh"),
}


# roles that also get duration/accent weighted coverage and bass duration features
_WEIGHTED_ROLES = {"triad": _ROLES["triad"], "aug6": ("bass", "fifth"), "sp": ("root", "seventh")}


def _base_families() -> list[tuple[str, bool]]:
    fam: list[tuple[str, bool]] = [(f"purity.{w}", True) for w in ("count", "dur", "acc")]

    tr = _ROLES["triad"]
    fam += [(f"cov.triad.{r}", False) for r in tr[:3]]
    fam += [("cov.triad.all", False), ("cov.triad.added.present", False),
            ("cov.triad.added.absent", False), ("cov.triad.added_longer", False)]
    fam += [(f"cov.triad.{w}.{r}", True) for w in ("dur", "acc", "time") for r in tr]
    fam += [(f"bass.triad.{w}.{r}", False) for w in ("first", "min") for r in tr]
    fam += [(f"bass.triad.{w}.{r}", True) for w in ("dur", "acc") for r in tr]

    a6 = _ROLES["aug6"]
    fam += [(f"cov.aug6.{r}", False) for r in a6]
    fam += [(f"cov.aug6.{w}.{r}", True) for w in ("dur", "acc") for r in ("bass", "fifth")]
    fam += [("cov.aug6.time.bass", True)]
    fam += [(f"bass.aug6.{w}.{r}", False) for w in ("first", "min") for r in a6]
    fam += [(f"bass.aug6.dur.{r}", True) for r in ("bass", "fifth")]

    sp = _ROLES["sp"]
    fam += [(f"cov.sp.{r}", False) for r in sp[:3]]
    fam += [("cov.sp.seventh.present", False), ("cov.sp.seventh.absent", False),
            ("cov.sp.seventh_longer", False)]
    fam += [(f"cov.sp.{w}.{r}", True) for w in ("dur", "acc") for r in ("root", "seventh")]
    fam += [("cov.sp.time.root", True)]
    fam += [(f"bass.sp.{w}.{r}", False) for w in ("first", "min") for r in sp]
    fam += [(f"bass.sp.dur.{r}", True) for r in ("root", "seventh")]
    return fam


class FeatureSpace:
    """Every segment-label feature instance for one bin layout.

    Instances are numbered family by family; ``names[i]`` is the stable
    name of instance ``i``.
    """

    def __init__(self, bins: Bins = DEFAULT_BINS):
        self.bins = bins
        base = _base_families()
        self.families = base + [(f"{n}.fig", b) for n, b in base] + [("accent.first", True)]
        self.family_index = {name: i for i, (name, _) in enumerate(self.families)}
        self.binned = np.array([b for _, b in self.families])
        level_names = bins.level_names()
        self.offsets = np.zeros(len(self.families), dtype=np.int64)
        self.names: list[str] = []
        for i, (name, binned) in enumerate(self.families):
            self.offsets[i] = len(self.names)
            if binned:
                self.names += [f"{name}/{lv}" for lv in level_names]
            else:
                self.names.append(name)
        self.index = {name: i for i, name in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.names)

    @property
    def sentinel(self) -> int:
        """Instance id meaning "nothing fires" (one past the last instance)."""
        return len(self.names)


@lru_cache(maxsize=8)
def feature_space(bins: Bins = DEFAULT_BINS) -> FeatureSpace:
    return FeatureSpace(bins)


class TransitionSpace:
    """Chord bigram instances ``bigram/<cur>|<prev>|<interval>`` plus ``bigram/<cur>|START``."""

    def __init__(self):
        self.tokens = bigram_tokens()
        self.token_index = {t: i for i, t in enumerate(self.tokens)}
        nt = len(self.tokens)
        self.names = [f"bigram/{a}|{b}|{iv}" for a in self.tokens for b in self.tokens for iv in range(12)]
        self.n_bigrams = len(self.names)
        self.names += [f"bigram/{a}|START" for a in self.tokens]
        self.index = {name: i for i, name in enumerate(self.names)}
        self._nt = nt

    def __len__(self) -> int:
        return len(self.names)

    def instance(self, y: ChordLabel, y_prev: ChordLabel) -> int:
        if y.is_nochord:
            raise ValueError("current label cannot be the no-chord sentinel")
        a = self.token_index[y.token]
        if y_prev.is_nochord:
            return self.n_bigrams + a
        b = self.token_index[y_prev.token]
        return (a * self._nt + b) * 12 + (y.root - y_prev.root) % 12

    def matrix(self, labels: Sequence[ChordLabel]) -> np.ndarray:
        """Instance ids for every (previous, current) pair; the last row is the no-chord start."""
        prev = list(labels) + [NOCHORD]
        return np.array([[self.instance(y, p) for y in labels] for p in prev], dtype=np.int64)


TRANSITIONS = TransitionSpace()


def transition_features(y: ChordLabel, y_prev: ChordLabel, registry: "FeatureRegistry | None" = None) -> list[str]:
    """Bigram instance names firing for ``g(y, y_prev)``.

    With a registry, only instances it contains are returned.
    """
    name = TRANSITIONS.names[TRANSITIONS.instance(y, y_prev)]
    if registry is not None and name not in registry:
        return []
    return [name]


# ---------------------------------------------------------------------------
# registries and sparse vectors


class FeatureRegistry:
    """Name to index map over feature instances, with training counts."""

    def __init__(self, names: Iterable[str] = (), counts: dict[str, int] | None = None, frozen: bool = False):
        self.names: list[str] = []
        self.index: dict[str, int] = {}
        self.counts: dict[str, int] = dict(counts or {})
        self.frozen = False
        for name in names:
            self.add(name)
        self.frozen = frozen

    @classmethod
    def from_counts(cls, counts: Counter, cutoff: int, order: Sequence[str]) -> "FeatureRegistry":
        """Keep instances counted at least ``cutoff`` times, in ``order``, and freeze."""
        kept = [n for n in order if counts.get(n, 0) >= cutoff]
        return cls(kept, counts={n: counts[n] for n in kept}, frozen=True)

    def add(self, name: str) -> int:
        if name in self.index:
            return self.index[name]
        if self.frozen:
            raise KeyError(f"registry is frozen; unknown feature {name!r}")
        self.index[name] = len(self.names)
        self.names.append(name)
        return self.index[name]

    def freeze(self) -> "FeatureRegistry":
        self.frozen = True
        return self

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name) -> bool:
        return name in self.index

    def __iter__(self):
        return iter(self.names)

    def positions_in(self, names_index: dict[str, int]) -> np.ndarray:
        """Ids of this registry's instances inside a feature space."""
        try:
            return np.array([names_index[n] for n in self.names], dtype=np.int64)
        except KeyError as exc:
            raise KeyError(f"registry feature {exc.args[0]!r} is not defined for this feature space") from None


@dataclass(frozen=True)
class SparseFeatureVector:
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise ValueError("indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def dot(self, weights: np.ndarray) -> float:
        return float(np.dot(weights[self.indices], self.values))

    def __len__(self) -> int:
        return len(self.indices)


# ---------------------------------------------------------------------------
# label tables


class LabelTable:
    """Per-label chord-tone roles as ``(Y, 12)`` Boolean matrices."""

    def __init__(self, labels: Sequence[ChordLabel]):
        self.labels = list(labels)
        if any(y.is_nochord for y in self.labels):
            raise ValueError("label set cannot contain the no-chord sentinel")
        n = len(self.labels)
        self.member = np.zeros((n, 12), dtype=bool)
        self.mask = np.zeros(n, dtype=np.int64)
        self.kind = np.array([y.kind for y in self.labels])
        self.roles = {f"{k}.{r}": np.zeros((n, 12), dtype=bool) for k, rs in _ROLES.items() for r in rs}
        for i, y in enumerate(self.labels):
            t = chord_tones(y)
            self.member[i, list(t.members)] = True
            self.mask[i] = t.mask
            k = y.kind
            if k == "triad":
                parts = {"root": {t.root}, "third": {t.third}, "fifth": {t.fifth}, "added": t.added}
            elif k == "aug6":
                parts = {"bass": {t.bass}, "third": {t.third}, "sixth": {t.sixth},
                         "fifth": {t.fifth} - {None}}
            else:
                parts = {"root": {t.root}, "fifth": {t.fifth}, "repl": {t.replacement} - {None},
                         "seventh": {t.seventh} - {None}}
            for r, pcs in parts.items():
                self.roles[f"{k}.{r}"][i, list(pcs)] = True
        self.is_triad = self.kind == "triad"
        self.has_role = {name: m.any(axis=1) for name, m in self.roles.items()}

    def __len__(self) -> int:
        return len(self.labels)


# ---------------------------------------------------------------------------
# per-piece arrays and per-segment statistics


class _PieceArrays:
    def __init__(self, piece: Piece):
        self.piece = piece
        notes = piece.notes
        self.note_pc = np.array([n.pc for n in notes], dtype=np.int64)
        self.note_len = np.array([float(n.duration) for n in notes])
        self.note_acc = np.array([piece.note_acc(k) for k in range(len(notes))])
        evs = piece.events
        self.ev_len = np.array([float(e.len) for e in evs])
        self.ev_acc = np.array([e.acc for e in evs])
        self.ev_pc = np.zeros((len(evs), 12), dtype=bool)
        self.ev_bass_pitch = np.full(len(evs), -1, dtype=np.int64)
        self.ev_bass_notes: list[tuple[int, ...]] = []
        self.ev_bass_acc = np.zeros(len(evs))
        for i, e in enumerate(evs):
            for p, _ in e.pitches:
                self.ev_pc[i, p % 12] = True
            if e.pitches:
                bass = e.pitches[0][0]
                self.ev_bass_pitch[i] = bass
                bnotes = tuple(k for k, (p, _) in zip(e.notes, e.pitches) if p == bass)
                self.ev_bass_notes.append(bnotes)
                self.ev_bass_acc[i] = max(self.note_acc[k] for k in bnotes)
            else:
                self.ev_bass_notes.append(())
        self.fig = figuration_index(piece)


class _Stats:
    """Accumulated statistics of a growing segment ``first..last``."""

    def __init__(self, arrays: _PieceArrays, first: int):
        self.a = arrays
        self.first = first
        self.last = first - 1
        self.notes: set[int] = set()
        self.count_pc = np.zeros(12)
        self.dur_pc = np.zeros(12)
        self.acc_pc = np.zeros(12)
        self.events: list[int] = []
        self.time_total = 0.0
        self.bass_events: list[int] = []

    def extend(self):
        a = self.a
        self.last += 1
        e = self.last
        self.events.append(e)
        self.time_total += a.ev_len[e]
        for k in a.piece.events[e].notes:
            if k not in self.notes:
                self.notes.add(k)
                pc = a.note_pc[k]
                self.count_pc[pc] += 1
                self.dur_pc[pc] += a.note_len[k]
                self.acc_pc[pc] += a.note_acc[k]
        if a.ev_bass_pitch[e] >= 0:
            self.bass_events.append(e)


def _fig_matrix(stats: _Stats, table: LabelTable):
    """Figuration flags per label for the candidate notes of a segment.

    Returns ``(notes, flags)`` where ``flags[y, j]`` says note ``notes[j]``
    is figuration under label ``y``; ``notes`` is empty when nothing can be.
    """
    a = stats.a
    cands = a.fig.candidates(Segment(stats.first, stats.last), sorted(stats.notes))
    if not cands:
        return [], None
    notes = sorted({c.note for c in cands})
    col = {k: j for j, k in enumerate(notes)}
    flags = np.zeros((len(table), len(notes)), dtype=bool)
    nonharm = {k: ~table.member[:, a.note_pc[k]] for k in notes}
    for c in cands:
        ok = nonharm[c.note] & ((c.required & ~table.mask) == 0)
        flags[:, col[c.note]] |= ok
    return notes, flags


def _compute_values(stats: _Stats, table: LabelTable, space: FeatureSpace) -> np.ndarray:
    """Real values of every family for every label: ``(Y, F)`` with NaN where not emitted."""
    a = stats.a
    n_lab = len(table)
    out = np.full((n_lab, len(space.families)), np.nan)
    fidx = space.family_index

    present = stats.count_pc > 0
    ev = np.array(stats.events)
    ev_pc = a.ev_pc[ev]
    ev_len = a.ev_len[ev]

    # bass bookkeeping over events that have a bass
    bev = np.array(stats.bass_events, dtype=np.int64)
    bass_pitch = a.ev_bass_pitch[bev]
    bass_pc = bass_pitch % 12
    bass_len = a.ev_len[bev]
    bass_acc = a.ev_bass_acc[bev]
    bdur_pc = np.bincount(bass_pc, weights=bass_len, minlength=12) if bev.size else np.zeros(12)
    bacc_pc = np.bincount(bass_pc, weights=bass_acc, minlength=12) if bev.size else np.zeros(12)

    fig_notes, fig = _fig_matrix(stats, table)
    plain_excl = np.zeros((n_lab, bev.size), dtype=bool)
    variants = [("", None, plain_excl)]
    if fig_notes:
        fcol = {k: j for j, k in enumerate(fig_notes)}
        excl = np.zeros((n_lab, bev.size), dtype=bool)
        for j, e in enumerate(bev):
            bnotes = a.ev_bass_notes[e]
            if all(k in fcol for k in bnotes):
                excl[:, j] = np.all(fig[:, [fcol[k] for k in bnotes]], axis=1)
        variants.append((".fig", fig, excl))
    else:
        variants.append((".fig", None, plain_excl))

    tot_count0 = stats.count_pc.sum()
    tot_dur0 = stats.dur_pc.sum()
    tot_acc0 = stats.acc_pc.sum()
    fig_len = a.note_len[fig_notes] if fig_notes else None
    fig_acc = a.note_acc[fig_notes] if fig_notes else None

    def ratio(num, den):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(den > _EPS, num / np.where(den > _EPS, den, 1.0), np.nan)

    def put(name, values, gate=None):
        v = np.asarray(values, dtype=float)
        if v.ndim == 0:
            v = np.full(n_lab, float(v))
        if gate is not None:
            v = np.where(gate, v, np.nan)
        out[:, fidx[name]] = v

    # event-time coverage does not change under figuration (figuration notes are never chord tones)
    time_cover = {}
    for role in ("triad.root", "triad.third", "triad.fifth", "triad.added", "aug6.bass", "sp.root"):
        hit = (ev_pc.astype(np.int64) @ table.roles[role].T.astype(np.int64)) > 0
        time_cover[role] = ratio(hit.T.astype(float) @ ev_len, np.full(n_lab, stats.time_total))

    for suffix, flags, excl in variants:
        if flags is None:
            tot_count = np.full(n_lab, tot_count0)
            tot_dur = np.full(n_lab, tot_dur0)
            tot_acc = np.full(n_lab, tot_acc0)
        else:
            tot_count = tot_count0 - flags.sum(axis=1)
            tot_dur = tot_dur0 - flags.astype(float) @ fig_len
            tot_acc = tot_acc0 - flags.astype(float) @ fig_acc
        keep = ~excl
        btot_dur = keep.astype(float) @ bass_len
        btot_acc = keep.astype(float) @ bass_acc
        if bev.size:
            has_bass = keep.any(axis=1)
            first_pc = np.where(has_bass, bass_pc[np.argmax(keep, axis=1)], -1)
            masked = np.where(keep, bass_pitch[None, :], np.iinfo(np.int64).max)
            min_pc = np.where(has_bass, bass_pitch[np.argmin(masked, axis=1)] % 12, -1)
        else:
            first_pc = min_pc = np.full(n_lab, -1)
        rows = np.arange(n_lab)

        def tone_at(role, pcs):
            m = table.roles[role]
            return np.where(pcs >= 0, m[rows, np.clip(pcs, 0, 11)], np.nan)

        harm = table.member.astype(float)
        put(f"purity.count{suffix}", ratio(harm @ stats.count_pc, tot_count))
        put(f"purity.dur{suffix}", ratio(harm @ stats.dur_pc, tot_dur))
        put(f"purity.acc{suffix}", ratio(harm @ stats.acc_pc, tot_acc))

        for kind, roles in _ROLES.items():
            for r in roles:
                role = f"{kind}.{r}"
                m = table.roles[role]
                gate = table.has_role[role]
                pres = (m & present).any(axis=1)
                if kind == "triad" and r == "added":
                    put(f"cov.triad.added.present{suffix}", pres, gate)
                    put(f"cov.triad.added.absent{suffix}", ~pres, gate)
                elif kind == "sp" and r == "seventh":
                    put(f"cov.sp.seventh.present{suffix}", pres, gate)
                    put(f"cov.sp.seventh.absent{suffix}", ~pres, gate)
                else:
                    put(f"cov.{kind}.{r}{suffix}", pres, gate)
                mf = m.astype(float)
                if r in _WEIGHTED_ROLES[kind]:
                    put(f"cov.{kind}.dur.{r}{suffix}", ratio(mf @ stats.dur_pc, tot_dur), gate)
                    put(f"cov.{kind}.acc.{r}{suffix}", ratio(mf @ stats.acc_pc, tot_acc), gate)
                    put(f"bass.{kind}.dur.{r}{suffix}", ratio(mf @ bdur_pc, btot_dur), gate)
                if kind == "triad":
                    put(f"cov.triad.time.{r}{suffix}", time_cover[role], gate)
                    put(f"bass.triad.acc.{r}{suffix}", ratio(mf @ bacc_pc, btot_acc), gate)
                put(f"bass.{kind}.first.{r}{suffix}", tone_at(role, first_pc), gate)
                put(f"bass.{kind}.min.{r}{suffix}", tone_at(role, min_pc), gate)

        triad = table.is_triad
        all_pres = np.ones(n_lab, dtype=bool)
        for r in ("root", "third", "fifth", "added"):
            role = f"triad.{r}"
            pres = (table.roles[role] & present).any(axis=1)
            all_pres &= pres | ~table.has_role[role]
        put(f"cov.triad.all{suffix}", all_pres, triad)
        rlen = table.roles["triad.root"].astype(float) @ stats.dur_pc
        alen = table.roles["triad.added"].astype(float) @ stats.dur_pc
        put(f"cov.triad.added_longer{suffix}", alen > rlen, table.has_role["triad.added"])
        rlen = table.roles["sp.root"].astype(float) @ stats.dur_pc
        alen = table.roles["sp.seventh"].astype(float) @ stats.dur_pc
        put(f"cov.sp.seventh_longer{suffix}", alen > rlen, table.has_role["sp.seventh"])
        put(f"cov.aug6.time.bass{suffix}", time_cover["aug6.bass"], table.has_role["aug6.bass"])
        put(f"cov.sp.time.root{suffix}", time_cover["sp.root"], table.has_role["sp.root"])

    put("accent.first", a.ev_acc[stats.first])
    return out


def _instance_rows(values: np.ndarray, space: FeatureSpace, width: int | None = None) -> np.ndarray:
    """Firing instance ids per label, sorted, padded with the sentinel."""
    n_lab, n_fam = values.shape
    ids = np.full((n_lab, n_fam), space.sentinel, dtype=np.int64)
    binned = space.binned
    bool_fire = (values == 1.0) & ~binned[None, :]
    ids = np.where(bool_fire, space.offsets[None, :], ids)
    valid = ~np.isnan(values) & binned[None, :]
    lev = _levels(np.nan_to_num(values), space.bins)
    ids = np.where(valid, space.offsets[None, :] + lev, ids)
    ids.sort(axis=1)
    if width is not None:
        ids = ids[:, :width]
    return ids


def _arrays(piece: Piece) -> _PieceArrays:
    arrays = getattr(piece, "_feature_arrays", None)
    if arrays is None:
        arrays = _PieceArrays(piece)
        piece._feature_arrays = arrays
    return arrays


def _stats_for(piece: Piece, segment: Segment) -> _Stats:
    if segment.last >= len(piece.events):
        raise ValueError(f"segment {segment} out of range for piece of {len(piece.events)} events")
    stats = _Stats(_arrays(piece), segment.first)
    for _ in range(len(segment)):
        stats.extend()
    return stats


def segment_values(piece: Piece, segment: Segment, labels: Sequence[ChordLabel],
                   bins: Bins = DEFAULT_BINS) -> list[dict[str, float]]:
    """Undiscretized family values for each label (families that emit nothing are omitted)."""
    space = feature_space(bins)
    table = LabelTable(labels)
    values = _compute_values(_stats_for(piece, segment), table, space)
    result = []
    for row in values:
        result.append({space.families[f][0]: float(v) for f, v in enumerate(row) if not np.isnan(v)})
    return result


def segment_feature_names(piece: Piece, segment: Segment, label: ChordLabel,
                          bins: Bins = DEFAULT_BINS) -> list[str]:
    """Names of all segment-label instances firing for ``(segment, label)``."""
    space = feature_space(bins)
    values = _compute_values(_stats_for(piece, segment), LabelTable([label]), space)
    ids = _instance_rows(values, space)[0]
    return [space.names[i] for i in ids if i != space.sentinel]


def _family_filter(prefixes):
    def run(piece, segment, label, bins=DEFAULT_BINS):
        return [n for n in segment_feature_names(piece, segment, label, bins) if n.startswith(prefixes)]
    return run


purity_features = _family_filter(("purity.",))
coverage_features = _family_filter(("cov.",))
bass_features = _family_filter(("bass.",))
purity_features.__doc__ = "Purity instances (plain and figuration-controlled) for ``(segment, label)``."
coverage_features.__doc__ = "Chord coverage instances for ``(segment, label)``."
bass_features.__doc__ = "Bass instances for ``(segment, label)``."


def accent_change_feature(piece: Piece, segment: Segment, bins: Bins = DEFAULT_BINS) -> str:
    return bin_instance("accent.first", piece.events[segment.first].acc, bins)


def extract(piece: Piece, segment: Segment, label: ChordLabel, registry: FeatureRegistry,
            bins: Bins = DEFAULT_BINS) -> SparseFeatureVector:
    """``f(segment, label)`` restricted to ``registry``, as a sparse vector."""
    idx = sorted(registry.index[n] for n in segment_feature_names(piece, segment, label, bins) if n in registry)
    return SparseFeatureVector(np.array(idx, dtype=np.int64), np.ones(len(idx)))


# ---------------------------------------------------------------------------
# lattices


@dataclass
class Lattice:
    """Features of every candidate (start, length, label) of one piece.

    ``cell[i, l - 1, y]`` is the row of ``rows`` describing the segment of
    ``l`` events starting at event ``i`` with label ``y``, or -1 when it
    runs past the end.  Rows hold feature-space instance ids padded with
    the sentinel; identical rows are stored once.
    """

    piece: Piece
    labels: list[ChordLabel]
    L: int
    space: FeatureSpace
    rows: np.ndarray
    cell: np.ndarray
    transitions: np.ndarray

    @property
    def n(self) -> int:
        return self.cell.shape[0]

    def row_of(self, segment: Segment, label_index: int) -> int:
        length = len(segment)
        if length > self.L:
            raise ValueError(f"segment of {length} events exceeds the maximum length {self.L}")
        return int(self.cell[segment.first, length - 1, label_index])


def build_lattice(piece: Piece, labels: Sequence[ChordLabel], L: int, bins: Bins = DEFAULT_BINS) -> Lattice:
    space = feature_space(bins)
    table = LabelTable(labels)
    arrays = _arrays(piece)
    n = len(piece.events)
    n_lab = len(table)
    cell = np.full((n, L, n_lab), -1, dtype=np.int64)
    seen: dict[bytes, int] = {}
    blocks: list[np.ndarray] = []
    width = None
    for i in range(n):
        stats = _Stats(arrays, i)
        for length in range(1, min(L, n - i) + 1):
            stats.extend()
            ids = _instance_rows(_compute_values(stats, table, space), space)
            if width is None:
                width = ids.shape[1]
            ids = ids.astype(np.int32)
            for y in range(n_lab):
                key = ids[y].tobytes()
                r = seen.get(key)
                if r is None:
                    r = len(blocks)
                    seen[key] = r
                    blocks.append(ids[y])
                cell[i, length - 1, y] = r
    rows = np.array(blocks, dtype=np.int32)
    # trim columns that only ever hold the sentinel
    live = (rows != space.sentinel).any(axis=0)
    rows = rows[:, : max(1, int(live.nonzero()[0].max()) + 1 if live.any() else 1)]
    return Lattice(piece, list(labels), L, space, rows, cell, TRANSITIONS.matrix(labels))


def build_registry(examples: Iterable, cutoff: int = 5, bigram_cutoff: int | None = None,
                   bins: Bins = DEFAULT_BINS, L: int | None = None) -> tuple[FeatureRegistry, FeatureRegistry]:
    """Count feature instances over gold segmentations and keep the frequent ones.

    ``examples`` yields ``(piece, gold)`` pairs where ``gold`` has
    ``segments`` and ``labels``.  Returns the frozen segment-label and
    transition registries.
    """
    space = feature_space(bins)
    bigram_cutoff = cutoff if bigram_cutoff is None else bigram_cutoff
    seg_counts: Counter = Counter()
    tr_counts: Counter = Counter()
    for piece, gold in examples:
        prev = NOCHORD
        for seg, label in zip(gold.segments, gold.labels):
            if L is not None and len(seg) > L:
                raise ValueError(f"piece {piece.id!r}: gold segment {piece.segment_times(seg)} "
                                 f"spans {len(seg)} events, more than the maximum {L}")
            seg_counts.update(segment_feature_names(piece, seg, label, bins))
            tr_counts.update(transition_features(label, prev))
            prev = label
    return (FeatureRegistry.from_counts(seg_counts, cutoff, space.names),
            FeatureRegistry.from_counts(tr_counts, bigram_cutoff, TRANSITIONS.names))
