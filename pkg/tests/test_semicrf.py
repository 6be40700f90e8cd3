import numpy as np
import pytest
from oracles import ALL_LABELS, BruteForce, random_params, random_piece

from chordseg.chords import NOCHORD, parse_label
from chordseg.features import TRANSITIONS, FeatureRegistry, build_lattice, extract, transition_features
from chordseg.music import Piece, Segment
from chordseg.semicrf import (
    LabeledSegmentation,
    ModelParams,
    TrainingConfig,
    TrainingError,
    log_partition_and_expectations,
    nll_and_gradient,
    prepare,
    score_labeled,
    train,
    viterbi,
)
from chordseg.synthetic import make_corpus

LABELS = [parse_label(s) for s in ("C:maj", "G:maj", "G:maj:add7", "A:min")]


def test_score_labeled_is_sum_of_parts(table1):
    rng = np.random.default_rng(5)
    params = random_params(rng, LABELS, L=8)
    sy = LabeledSegmentation((Segment(0, 3), Segment(4, 7)), (LABELS[2], LABELS[0]))
    by_hand = (extract(table1, Segment(0, 3), LABELS[2], params.registry).dot(params.w)
               + extract(table1, Segment(4, 7), LABELS[0], params.registry).dot(params.w))
    for y, prev in ((LABELS[2], NOCHORD), (LABELS[0], LABELS[2])):
        by_hand += params.u[params.transition_registry.index[transition_features(y, prev)[0]]]
    assert score_labeled(table1, sy, params) == pytest.approx(by_hand, rel=1e-12)


def test_single_event_piece():
    piece = Piece.from_notes("one", [(60, 0, 1), (64, 0, 1), (67, 0, 1)])
    params = random_params(np.random.default_rng(0), LABELS, L=4)
    best = viterbi(piece, params).best
    assert best.segments == (Segment(0, 0),)


def test_ties_prefer_short_segments_and_low_label_index(table1):
    reg = FeatureRegistry(frozen=True)
    params = ModelParams.zeros(reg, FeatureRegistry(frozen=True), LABELS, L=8)
    res = viterbi(table1, params)
    assert res.score == 0.0
    assert [len(s) for s in res.best.segments] == [1] * 8
    assert set(res.best.labels) == {LABELS[0]}


def test_segment_scores_add_up(table1):
    params = random_params(np.random.default_rng(2), LABELS, L=8)
    res = viterbi(table1, params)
    prev, trans = NOCHORD, 0.0
    for y in res.best.labels:
        trans += params.u[params.transition_registry.index[transition_features(y, prev)[0]]]
        prev = y
    assert sum(res.segment_scores) + trans == pytest.approx(res.score, rel=1e-12)
    assert res.dp_score == pytest.approx(res.score, rel=1e-12)


def test_viterbi_respects_max_length():
    rng = np.random.default_rng(9)
    piece = random_piece(rng)
    params = random_params(rng, LABELS, L=2)
    assert all(len(s) <= 2 for s in viterbi(piece, params).best.segments)


def test_partition_function_matches_enumeration_with_sparse_registry():
    # only some features are registered; unregistered ones contribute nothing
    rng = np.random.default_rng(11)
    piece = random_piece(rng)
    full = random_params(rng, LABELS, L=3)
    reg = FeatureRegistry(full.registry.names[::3], frozen=True)
    treg = FeatureRegistry(TRANSITIONS.names[::5], frozen=True)
    params = random_params(rng, LABELS, L=3, registry=reg, transition_registry=treg)
    bf = BruteForce(piece, params)
    logz, ef, eg = log_partition_and_expectations(piece, params)
    assert logz == pytest.approx(bf.log_z(), rel=1e-12)
    bef, beg = bf.expectations()
    np.testing.assert_allclose(ef, bef, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(eg, beg, rtol=1e-9, atol=1e-12)


def test_labeled_segmentation_validation():
    sy = LabeledSegmentation((Segment(0, 1), Segment(3, 4)), (LABELS[0], LABELS[1]))
    with pytest.raises(ValueError, match="tile"):
        sy.validate(5)
    with pytest.raises(ValueError):
        LabeledSegmentation((Segment(0, 1),), (NOCHORD,))
    ok = LabeledSegmentation((Segment(0, 2),), (LABELS[0],))
    with pytest.raises(ValueError, match="longer"):
        ok.validate(3, L=2)


def test_lattice_mismatch(table1):
    params = random_params(np.random.default_rng(0), LABELS, L=4)
    lat = build_lattice(table1, LABELS[:2], 4)
    with pytest.raises(ValueError, match="different"):
        viterbi(table1, params, lattice=lat)


def test_params_validation():
    reg = FeatureRegistry(["purity.count/one"], frozen=True)
    treg = FeatureRegistry(frozen=True)
    with pytest.raises(ValueError):
        ModelParams(reg, treg, np.zeros(2), np.zeros(0), LABELS)
    with pytest.raises(ValueError):
        ModelParams(reg, treg, np.array([np.inf]), np.zeros(0), LABELS)
    with pytest.raises(KeyError):
        ModelParams(FeatureRegistry(["no.such/feature"], frozen=True), treg, np.zeros(1), np.zeros(0), LABELS)


def test_nonfinite_objective_names_the_piece():
    ex = make_corpus(1, 3, seed=0)[0]
    labels = sorted(set(ex.gold.labels))
    reg = FeatureRegistry(["purity.count/one"], frozen=True)
    params = ModelParams(reg, FeatureRegistry(frozen=True), np.array([1e308]), np.zeros(0), labels, L=4)
    data = prepare([ex], params)
    with pytest.raises(TrainingError, match=ex.piece.id):
        nll_and_gradient(data, params)


def test_gold_outside_label_set():
    ex = make_corpus(1, 3, seed=0)[0]
    other = [y for y in LABELS if y not in ex.gold.labels][:1]
    params = ModelParams.zeros(FeatureRegistry(frozen=True), FeatureRegistry(frozen=True), other, L=4)
    with pytest.raises(ValueError, match="label set"):
        prepare([ex], params)


def test_training_decreases_objective_and_is_deterministic():
    corpus = make_corpus(2, 4, seed=3)
    config = TrainingConfig(labels=LABELS + [parse_label(s) for s in ("F:maj", "D:min", "E:min")],
                            L=4, cutoff=1, max_iters=30)
    p1, trace = train(corpus, config)
    p2, _ = train(corpus, config)
    assert trace[-1] < trace[0]
    assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))
    np.testing.assert_array_equal(p1.w, p2.w)
    with pytest.raises(ValueError):
        train([], config)


def test_probabilities_of_all_paths_sum_to_one():
    rng = np.random.default_rng(21)
    piece = random_piece(rng, max_events=5)
    params = random_params(rng, ALL_LABELS[:3], L=3)
    bf = BruteForce(piece, params)
    lattice = build_lattice(piece, params.labels, params.L)
    logz, _, _ = log_partition_and_expectations(piece, params, lattice)
    total = 0.0
    for segs, S in bf.tensors:
        for ys in np.ndindex(S.shape):
            total += np.exp(score_labeled(piece, bf.labeled(segs, ys), params, lattice) - logz)
    assert total == pytest.approx(1.0, abs=1e-9)


def test_gradient_at_zero_weights_is_expected_minus_gold():
    rng = np.random.default_rng(4)
    ex = make_corpus(1, 3, seed=5)[0]
    labels = sorted(set(ex.gold.labels)) + [parse_label("D:min")]
    base = random_params(rng, labels, L=4)
    params = ModelParams.zeros(base.registry, base.transition_registry, labels, L=4, lam=0.0)
    data = prepare([ex], params)
    _, gw, gu = nll_and_gradient(data, params)
    _, ef, eg = log_partition_and_expectations(ex.piece, params)
    gold_w = np.zeros(len(params.registry))
    for seg, y in zip(ex.gold.segments, ex.gold.labels):
        gold_w[extract(ex.piece, seg, y, params.registry).indices] += 1
    np.testing.assert_allclose(gw, ef - gold_w, atol=1e-12)
    assert gu.shape == eg.shape


def test_larger_lambda_shrinks_weights():
    corpus = make_corpus(2, 4, seed=6)
    labels = sorted({y for ex in corpus for y in ex.gold.labels})
    norms = []
    for lam in (0.01, 0.1, 1.0):
        params, _ = train(corpus, TrainingConfig(labels=labels, L=4, cutoff=1, lam=lam, tol=1e-6))
        norms.append(float(params.theta @ params.theta))
    assert norms[0] > norms[1] > norms[2]
