"""Weak semi-Markov CRF: scoring, Viterbi decoding, forward-backward and training.

A labeled segmentation scores ``w . F + u . G`` where ``F`` sums the
segment-label features of its segments and ``G`` the bigram features of
consecutive labels, the first segment pairing with the no-chord start
label.  Because transition features ignore the segment, both dynamic
programs factor through per-start quantities and run in
``O(n * L * Y + n * Y^2)`` rather than ``O(n * L * Y^2)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .chords import ChordLabel, NOCHORD, build_label_set
from .features import (
    DEFAULT_BINS,
    TRANSITIONS,
    Bins,
    FeatureRegistry,
    Lattice,
    build_lattice,
    build_registry,
)
from .music import Piece, Segment

__all__ = [
    "LabeledSegmentation",
    "ModelParams",
    "InferenceResult",
    "Example",
    "TrainingConfig",
    "Prepared",
    "prepare",
    "score_labeled",
    "viterbi",
    "log_partition_and_expectations",
    "nll_and_gradient",
    "train",
    "TrainingError",
]

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LabeledSegmentation:
    segments: tuple[Segment, ...]
    labels: tuple[ChordLabel, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.segments) != len(self.labels):
            raise ValueError("segments and labels differ in length")
        if any(y.is_nochord for y in self.labels):
            raise ValueError("the no-chord sentinel cannot label a segment")

    def __len__(self) -> int:
        return len(self.segments)

    def validate(self, n_events: int, L: int | None = None) -> None:
        """Raise ValueError unless the segments tile ``0..n_events-1``."""
        expected = 0
        for seg in self.segments:
            if seg.first != expected:
                raise ValueError(f"segments do not tile the events: expected start {expected}, got {seg.first}")
            if L is not None and len(seg) > L:
                raise ValueError(f"segment {seg.first}-{seg.last} longer than the maximum length {L}")
            expected = seg.last + 1
        if expected != n_events:
            raise ValueError(f"segments cover {expected} of {n_events} events")

    def event_labels(self) -> list[ChordLabel]:
        out = []
        for seg, y in zip(self.segments, self.labels):
            out.extend([y] * len(seg))
        return out


@dataclass
class ModelParams:
    """Weights over a pair of frozen registries plus decoding settings."""

    registry: FeatureRegistry
    transition_registry: FeatureRegistry
    w: np.ndarray
    u: np.ndarray
    labels: list[ChordLabel]
    L: int = 32
    lam: float = 0.1
    preset: str | None = None
    bins: Bins = DEFAULT_BINS

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.w.shape != (len(self.registry),) or self.u.shape != (len(self.transition_registry),):
            raise ValueError("weight vector lengths do not match the registries")
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.u))):
            raise ValueError("weights must be finite")
        if self.L < 1:
            raise ValueError("maximum segment length must be positive")
        if self.lam < 0:
            raise ValueError("regularization must be non-negative")
        self.labels = list(self.labels)
        self.label_index = {y: i for i, y in enumerate(self.labels)}
        self._w_pos = self.registry.positions_in(self._space().index)
        self._u_pos = self.transition_registry.positions_in(TRANSITIONS.index)

    def _space(self):
        from .features import feature_space
        return feature_space(self.bins)

    @classmethod
    def zeros(cls, registry, transition_registry, labels, **kw) -> "ModelParams":
        return cls(registry, transition_registry, np.zeros(len(registry)), np.zeros(len(transition_registry)),
                   labels, **kw)

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.w, self.u])

    def with_theta(self, theta: np.ndarray) -> "ModelParams":
        nw = len(self.w)
        return ModelParams(self.registry, self.transition_registry, theta[:nw].copy(), theta[nw:].copy(),
                           self.labels, L=self.L, lam=self.lam, preset=self.preset, bins=self.bins)

    def space_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Weights spread over the full feature/transition spaces (plus a zero sentinel slot)."""
        space = self._space()
        W = np.zeros(len(space) + 1)
        W[self._w_pos] = self.w
        U = np.zeros(len(TRANSITIONS))
        U[self._u_pos] = self.u
        return W, U


@dataclass
class InferenceResult:
    best: LabeledSegmentation
    score: float
    segment_scores: list[float] = field(default_factory=list)
    dp_score: float = 0.0


def _lattice_for(x: Piece, params: ModelParams, lattice: Lattice | None) -> Lattice:
    if lattice is not None:
        if lattice.labels != params.labels or lattice.L < params.L or lattice.space.bins != params.bins:
            raise ValueError("lattice was built for different labels, L or bins")
        return lattice
    if len(x.events) == 0:
        raise ValueError("empty piece")
    return build_lattice(x, params.labels, params.L, params.bins)


def _tables(lat: Lattice, params: ModelParams):
    """Segment scores ``S[i, l-1, y]`` and transition scores ``T[y', y]`` (last row: start)."""
    W, U = params.space_weights()
    row_scores = W[lat.rows].sum(axis=1)
    cell = lat.cell[:, :params.L, :]
    S = np.where(cell >= 0, row_scores[np.maximum(cell, 0)], -np.inf)
    T = U[lat.transitions]
    return S, T, row_scores


def score_labeled(x: Piece, sy: LabeledSegmentation, params: ModelParams, lattice: Lattice | None = None) -> float:
    sy.validate(len(x.events), params.L)
    lat = _lattice_for(x, params, lattice)
    S, T, _ = _tables(lat, params)
    return _score_path(sy, S, T, params)


def _score_path(sy, S, T, params) -> float:
    total = 0.0
    prev = len(params.labels)  # start row
    for seg, y in zip(sy.segments, sy.labels):
        yi = params.label_index[y]
        total = total + T[prev, yi]
        total = total + S[seg.first, len(seg) - 1, yi]
        prev = yi
    return float(total)


def viterbi(x: Piece, params: ModelParams, lattice: Lattice | None = None) -> InferenceResult:
    """Best labeled segmentation.

    Ties prefer the shorter last segment, then the lower label index.
    """
    lat = _lattice_for(x, params, lattice)
    S, T, _ = _tables(lat, params)
    n, L, Y = S.shape
    V = np.full((n + 1, Y), -np.inf)
    P = np.empty((n, Y))          # best score entering a segment that starts at i, per label
    P_arg = np.full((n, Y), -1)   # best previous label (-1: start)
    back_len = np.zeros((n + 1, Y), dtype=np.int64)
    P[0] = T[Y]
    for j in range(1, n + 1):
        best = np.full(Y, -np.inf)
        best_l = np.zeros(Y, dtype=np.int64)
        for l in range(1, min(L, j) + 1):
            cand = P[j - l] + S[j - l, l - 1]
            better = cand > best
            best = np.where(better, cand, best)
            best_l = np.where(better, l, best_l)
        V[j] = best
        back_len[j] = best_l
        if j < n:
            tot = V[j][:, None] + T[:Y]
            P_arg[j] = np.argmax(tot, axis=0)
            P[j] = tot[P_arg[j], np.arange(Y)]
    y = int(np.argmax(V[n]))
    dp_score = float(V[n, y])
    segments, labels = [], []
    j = n
    while j > 0:
        l = int(back_len[j, y])
        i = j - l
        segments.append(Segment(i, j - 1))
        labels.append(params.labels[y])
        if i > 0:
            y = int(P_arg[i, y])
        j = i
    best = LabeledSegmentation(tuple(reversed(segments)), tuple(reversed(labels)))
    seg_scores = [float(S[s.first, len(s) - 1, params.label_index[lab]])
                  for s, lab in zip(best.segments, best.labels)]
    return InferenceResult(best, _score_path(best, S, T, params), seg_scores, dp_score)


def _forward_backward(S: np.ndarray, T: np.ndarray):
    n, L, Y = S.shape
    alpha = np.full((n + 1, Y), -np.inf)
    P = np.empty((n, Y))
    P[0] = T[Y]
    for j in range(1, n + 1):
        ls = range(1, min(L, j) + 1)
        alpha[j] = logsumexp(np.stack([P[j - l] + S[j - l, l - 1] for l in ls]), axis=0)
        if j < n:
            P[j] = logsumexp(alpha[j][:, None] + T[:Y], axis=0)
    logZ = float(logsumexp(alpha[n]))
    beta = np.full((n + 1, Y), -np.inf)
    beta[n] = 0.0
    C = np.empty((n, Y))
    for i in range(n - 1, -1, -1):
        ls = range(1, min(L, n - i) + 1)
        C[i] = logsumexp(np.stack([S[i, l - 1] + beta[i + l] for l in ls]), axis=0)
        if i > 0:
            beta[i] = logsumexp(T[:Y] + C[i][None, :], axis=1)
    return logZ, alpha, P, beta, C


def log_partition_and_expectations(x: Piece, params: ModelParams, lattice: Lattice | None = None):
    """``(logZ, E[F], E[G])`` with expectations over the registries' coordinates."""
    lat = _lattice_for(x, params, lattice)
    logZ, ef_space, eg_space = _expectations(lat, params)
    return logZ, ef_space[params._w_pos], eg_space[params._u_pos]


def _expectations(lat: Lattice, params: ModelParams):
    S, T, _ = _tables(lat, params)
    n, L, Y = S.shape
    logZ, alpha, P, beta, C = _forward_backward(S, T)
    # segment marginals mu[i, l-1, y]
    idx_end = np.arange(n)[:, None] + np.arange(1, L + 1)[None, :]
    valid = idx_end <= n
    beta_end = beta[np.minimum(idx_end, n)]
    with np.errstate(invalid="ignore"):
        logmu = P[:, None, :] + S + beta_end
    logmu = np.where(valid[:, :, None], logmu, -np.inf)
    mu = np.exp(logmu - logZ)
    cell = lat.cell[:, :params.L, :]
    row_mass = np.bincount(np.maximum(cell, 0).ravel(), weights=np.where(cell >= 0, mu, 0.0).ravel(),
                           minlength=len(lat.rows))
    n_space = len(lat.space) + 1
    ef = np.bincount(lat.rows.ravel().astype(np.int64), weights=np.repeat(row_mass, lat.rows.shape[1]),
                     minlength=n_space)[:-1]
    # transition marginals
    xi = np.zeros((Y + 1, Y))
    xi[Y] = np.exp(T[Y] + C[0] - logZ)
    for i in range(1, n):
        xi[:Y] += np.exp(alpha[i][:, None] + T[:Y] + C[i][None, :] - logZ)
    eg = np.bincount(lat.transitions.ravel(), weights=xi.ravel(), minlength=len(TRANSITIONS))
    return logZ, ef, eg


@dataclass(frozen=True)
class Example:
    piece: Piece
    gold: LabeledSegmentation


@dataclass
class Prepared:
    """A training example with its lattice and gold feature counts over the full spaces."""

    example: Example
    lattice: Lattice
    gold_f: np.ndarray
    gold_g: np.ndarray


def prepare(examples: Sequence[Example], params: ModelParams, lattices: dict | None = None) -> list[Prepared]:
    out = []
    n_space = len(params._space())
    for ex in examples:
        piece, gold = ex.piece, ex.gold
        try:
            gold.validate(len(piece.events), params.L)
        except ValueError as exc:
            raise ValueError(f"piece {piece.id!r}: {exc}") from None
        lat = (lattices or {}).get(piece.id) or build_lattice(piece, params.labels, params.L, params.bins)
        gold_f = np.zeros(n_space + 1)
        gold_g = np.zeros(len(TRANSITIONS))
        prev = NOCHORD
        for seg, y in zip(gold.segments, gold.labels):
            if y not in params.label_index:
                raise ValueError(f"piece {piece.id!r}: gold label {y} is not in the label set")
            row = lat.row_of(seg, params.label_index[y])
            np.add.at(gold_f, lat.rows[row].astype(np.int64), 1.0)
            gold_g[TRANSITIONS.instance(y, prev)] += 1.0
            prev = y
        out.append(Prepared(ex, lat, gold_f[:-1], gold_g))
    return out


def nll_and_gradient(data: Sequence[Prepared], params: ModelParams):
    """Regularized negative log-likelihood and its gradient blocks ``(value, grad_w, grad_u)``."""
    value = 0.0
    grad_w = np.zeros_like(params.w)
    grad_u = np.zeros_like(params.u)
    for item in data:
        with np.errstate(over="ignore", invalid="ignore"):
            logZ, ef, eg = _expectations(item.lattice, params)
            gold_score = params.w @ item.gold_f[params._w_pos] + params.u @ item.gold_g[params._u_pos]
            contrib = logZ - gold_score
        if not np.isfinite(contrib):
            raise TrainingError(f"non-finite objective on piece {item.example.piece.id!r}")
        value += contrib
        grad_w += ef[params._w_pos] - item.gold_f[params._w_pos]
        grad_u += eg[params._u_pos] - item.gold_g[params._u_pos]
    value += 0.5 * params.lam * (params.w @ params.w + params.u @ params.u)
    grad_w += params.lam * params.w
    grad_u += params.lam * params.u
    return float(value), grad_w, grad_u


@dataclass
class TrainingConfig:
    preset: str = "bach"
    labels: list[ChordLabel] | None = None
    L: int = 32
    lam: float = 0.1
    cutoff: int = 5
    bigram_cutoff: int | None = None
    tol: float = 1e-4
    max_iters: int = 500
    bins: Bins = DEFAULT_BINS

    def label_set(self) -> list[ChordLabel]:
        return list(self.labels) if self.labels is not None else build_label_set(self.preset)


def train(examples: Sequence[Example], config: TrainingConfig | None = None,
          init: ModelParams | None = None) -> tuple[ModelParams, list[float]]:
    """Fit weights by L-BFGS on the regularized negative log-likelihood.

    Returns the trained parameters and the objective value after each
    iteration.
    """
    config = config or TrainingConfig()
    if not examples:
        raise ValueError("no training examples")
    if init is None:
        registry, tr_registry = build_registry(((ex.piece, ex.gold) for ex in examples),
                                               cutoff=config.cutoff, bigram_cutoff=config.bigram_cutoff,
                                               bins=config.bins, L=config.L)
        init = ModelParams.zeros(registry, tr_registry, config.label_set(), L=config.L, lam=config.lam,
                                 preset=config.preset if config.labels is None else None, bins=config.bins)
    data = prepare(examples, init)
    nw = len(init.w)
    trace: list[float] = []

    def fun(theta):
        value, gw, gu = nll_and_gradient(data, init.with_theta(theta))
        return value, np.concatenate([gw, gu])

    def callback(intermediate_result):
        trace.append(float(intermediate_result.fun))
        log.info("iter %d  objective %.6f", len(trace), trace[-1])

    theta0 = init.theta
    if theta0.size == 0:
        return init, trace
    trace.append(fun(theta0)[0])
    res = minimize(fun, theta0, jac=True, method="L-BFGS-B", callback=callback,
                   options={"maxiter": config.max_iters, "gtol": config.tol, "ftol": 1e-15, "maxcor": 10})
    if not np.all(np.isfinite(res.x)):
        raise TrainingError("optimizer produced non-finite weights")
    log.info("L-BFGS finished after %d iterations: %s", res.nit, res.message)
    return init.with_theta(res.x), trace
