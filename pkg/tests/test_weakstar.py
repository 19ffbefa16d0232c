import itertools

import numpy as np
import pytest

from graphonlab.core import (
    Partition,
    StepGraphon,
    apply_ordered_partition,
    int_f,
    stepping,
    uniform_breaks,
)
from graphonlab.cutnorm import cutnorm_bilinear_exact
from graphonlab.functionals import ENTROPY, NEG_SQUARE, binary_entropy
from graphonlab.weakstar import (
    NOEL_VALUE,
    ShiftData,
    StripeSampleConfig,
    aggregate,
    block_integrals,
    chessboard_family,
    chessboard_int_h,
    ell_part_shift_experiment,
    en_tail,
    en_threshold,
    event_frequency,
    improvement_experiment,
    mixing_entropy,
    noel_family,
    noel_region_average,
    permuted_bipartite,
    rect_profile,
    sample_stripe_version,
    set_mask,
    shift_left_version,
    staged_partition,
    stepping_attainment_trial,
    weakstar_pseudometric,
)

from conftest import random_graphon, random_partition


def brute_pseudometric(W1, W2, depth):
    """Enumerate every rectangle with dyadic endpoints at the given depth."""
    n = 1 << depth
    pts = np.arange(n + 1) / n
    best = 0.0
    for x0, x1 in itertools.combinations(pts, 2):
        for y0, y1 in itertools.combinations(pts, 2):
            d = W1.rect_integral(x0, x1, y0, y1) - W2.rect_integral(x0, x1, y0, y1)
            best = max(best, abs(d))
    return best


# --- rectangle profiles -----------------------------------------------------


def test_profile_constant(half):
    p = rect_profile(half, 1)
    assert np.allclose(p.cells, 0.125, atol=1e-15)


def test_profile_bipartite(bipartite):
    p = rect_profile(bipartite, 1)
    assert np.allclose(p.cells, [[0, 0.25], [0.25, 0]], atol=1e-15)


def test_profile_additive_and_bounded():
    rng = np.random.default_rng(0)
    for _ in range(20):
        W = random_graphon(rng, int(rng.integers(1, 7)))
        p = rect_profile(W, 3)
        for d in range(3):
            c = p.coarsen(d)
            assert np.allclose(c.cells, rect_profile(W, d).cells, atol=1e-12)
        area = 1 / 64
        assert np.all(p.cells >= -1e-15) and np.all(p.cells <= area + 1e-15)
        assert p.rect(0, 3, 1, 8) == pytest.approx(W.rect_integral(0, 3 / 8, 1 / 8, 1), abs=1e-12)
        assert p.rect(0, 1, 0, 1, 0) == pytest.approx(W.rect_integral(0, 1, 0, 1), abs=1e-12)


def test_profile_items_cover_all_depths():
    p = rect_profile(StepGraphon.constant(0.5), 2)
    items = list(p.items())
    assert len(items) == 1 + 4 + 16
    for x0, x1, y0, y1, v in items:
        assert v == pytest.approx(0.5 * (x1 - x0) * (y1 - y0), abs=1e-15)


def test_profile_depth_bounds():
    with pytest.raises(ValueError):
        rect_profile(StepGraphon.constant(0.5), 13)
    with pytest.raises(ValueError):
        rect_profile(StepGraphon.constant(0.5), 2).rect(0, 1, 0, 1, depth=3)


# --- pseudometric -----------------------------------------------------------


def test_pseudometric_matches_enumeration():
    rng = np.random.default_rng(1)
    for _ in range(10):
        A, B = random_graphon(rng, 4), random_graphon(rng, 3)
        for d in (0, 1, 2):
            assert weakstar_pseudometric(A, B, d) == pytest.approx(brute_pseudometric(A, B, d), abs=1e-12)


def test_pseudometric_axioms():
    rng = np.random.default_rng(2)
    for _ in range(30):
        A, B, C = (random_graphon(rng, int(rng.integers(1, 6))) for _ in range(3))
        d = int(rng.integers(0, 5))
        assert weakstar_pseudometric(A, A, d) == 0.0
        ab = weakstar_pseudometric(A, B, d)
        assert ab == pytest.approx(weakstar_pseudometric(B, A, d), abs=1e-15)
        assert ab <= weakstar_pseudometric(A, C, d) + weakstar_pseudometric(C, B, d) + 1e-12


def test_pseudometric_monotone_in_depth_and_below_cutnorm():
    rng = np.random.default_rng(3)
    for _ in range(20):
        A, B = random_graphon(rng, 5), random_graphon(rng, 4)
        vals = [weakstar_pseudometric(A, B, d) for d in range(6)]
        assert all(x <= y + 1e-12 for x, y in zip(vals, vals[1:]))
        assert vals[-1] <= cutnorm_bilinear_exact(A - B).value + 1e-9


def test_aggregate_of_one_is_its_stepping():
    W = random_graphon(np.random.default_rng(4), 3)
    A = aggregate([W], 2)
    assert A.equals_ae(stepping(W, Partition.uniform(4)), tol=1e-12)
    with pytest.raises(ValueError):
        aggregate([], 2)


# --- stripe sampler ---------------------------------------------------------


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        StripeSampleConfig(Partition.trivial(), 0)


def test_sampler_single_stripe_is_identity():
    W = random_graphon(np.random.default_rng(5), 4)
    U = sample_stripe_version(W, StripeSampleConfig(Partition.uniform(3), 1, seed=2))
    assert U.equals_ae(W)


def test_sampler_constant():
    c = StepGraphon.constant(0.3)
    U = sample_stripe_version(c, StripeSampleConfig(Partition.uniform(2), 7, seed=1))
    assert np.allclose(U.values, 0.3)


def test_sampler_is_a_version():
    rng = np.random.default_rng(6)
    for _ in range(30):
        W = random_graphon(rng, int(rng.integers(1, 6)))
        P = random_partition(rng, uniform_breaks(int(rng.integers(1, 5))))
        s = int(rng.integers(1, 9))
        U = sample_stripe_version(W, StripeSampleConfig(P, s, seed=int(rng.integers(1 << 30))))
        hw, hu = W.weighted_histogram(), U.weighted_histogram()
        assert hw.keys() == hu.keys()
        assert all(hw[v] == pytest.approx(hu[v], abs=1e-12) for v in hw)
        for f in (ENTROPY, NEG_SQUARE):
            assert int_f(U, f) == pytest.approx(int_f(W, f), abs=1e-12)
        assert np.allclose(block_integrals(U, P), block_integrals(W, P), atol=1e-12, rtol=0)


def test_sampler_stripe_layout():
    """Two stripes swapped within the whole interval moves [0, 1/2) to [1/2, 1)."""
    W = StepGraphon([0.5, 0.5], [[1.0, 0.2], [0.2, 0.0]])
    outs = set()
    for seed in range(20):
        U = sample_stripe_version(W, StripeSampleConfig(Partition.trivial(), 2, seed=seed))
        outs.add(round(U(0.1, 0.1), 6))
    assert outs == {0.0, 1.0}


def test_sampler_seed_determinism():
    W = random_graphon(np.random.default_rng(7), 3)
    cfg = StripeSampleConfig(Partition.uniform(2), 5, seed=9)
    assert sample_stripe_version(W, cfg).equals_ae(sample_stripe_version(W, cfg), tol=0)


def test_sampler_bipartite_quarter_block(bipartite):
    """int over [0,1/2]^2 of a 64-stripe sample is near 1/8 for most seeds."""
    n = 64
    hits = 0
    for seed in range(200):
        U = sample_stripe_version(bipartite, StripeSampleConfig(Partition.trivial(), n, seed=seed))
        hits += abs(U.rect_integral(0, 0.5, 0, 0.5) - 0.125) <= en_threshold(n)
    assert hits == 200


def test_en_formulas():
    assert en_threshold(64) == pytest.approx(64 ** -0.25 + 1 / 16)
    assert en_tail(400) == pytest.approx(2 * np.exp(-5))
    assert en_tail(400) == pytest.approx(0.013476, abs=1e-6)


def test_attainment_constant_sequence():
    c = StepGraphon.constant(0.5)
    rows = stepping_attainment_trial([c] * 5, Partition.trivial(), [1, 2, 4, 8, 16], seed=0)
    assert all(r.pseudometric == 0 and not r.event and r.blocks_preserved for r in rows)
    assert [r.n for r in rows] == [1, 2, 3, 4, 5]


def test_attainment_bipartite():
    B = StepGraphon.from_matrix([[0, 1], [1, 0]])
    ns = [50, 100, 150]
    rows = stepping_attainment_trial([B] * 3, Partition.trivial(), ns, seed=1, ns=ns)
    assert all(r.blocks_preserved for r in rows)
    assert all(r.int_f == 0.0 for r in rows)
    assert all(r.pseudometric < en_threshold(r.n) for r in rows)


def test_event_frequency_small():
    B = StepGraphon.from_matrix([[0, 1], [1, 0]])
    rep = event_frequency(B, Partition.trivial(), 64, trials=20, seed=3)
    assert rep.blocks_preserved and rep.frequency <= rep.bound
    assert rep.max_pseudometric < 0.5


# --- shift-left versions ----------------------------------------------------


def test_shift_left_of_left_set_is_identity():
    W = random_graphon(np.random.default_rng(8), 4)
    assert shift_left_version(W, [(0.0, 0.4)]).equals_ae(W, tol=1e-12)


def test_shift_left_block_swap(bipartite):
    assert shift_left_version(bipartite, [(0.5, 1.0)]).equals_ae(bipartite)


def test_shift_left_preserves_int_f():
    rng = np.random.default_rng(9)
    for _ in range(30):
        W = random_graphon(rng, int(rng.integers(2, 7)))
        mask = rng.random(W.k) < 0.5
        V = shift_left_version(W, mask)
        m = float(W.measures[mask].sum())
        assert V.rect_integral(0, m, 0, m) == pytest.approx(
            W.set_integral(mask.astype(float)), abs=1e-12)
        for f in (ENTROPY, NEG_SQUARE):
            assert int_f(V, f) == pytest.approx(int_f(W, f), abs=1e-12)


def test_shift_data_invariants():
    rng = np.random.default_rng(10)
    masks = []
    for _ in range(6):
        W = random_graphon(rng, 5)
        masks.append(set_mask(W, rng.random(5) < 0.5))
    sd = ShiftData.from_masks(masks, 3)
    assert sd.theta[0] == 0 and np.all(np.diff(sd.theta) >= -1e-15)
    assert sd.theta[-1] + (sd.xi[-1] - sd.xi[0]) == pytest.approx(1.0, abs=1e-12)
    n = 8
    expect = sd.theta[-1] + np.concatenate([[0], np.cumsum(1 - sd.psi) / n])
    assert np.allclose(sd.xi, expect, atol=1e-15)


# --- improvement experiments ------------------------------------------------


def _bipartite_sequence(ns, seed):
    rng = np.random.default_rng(seed)
    gammas, sets = [], []
    for n in ns:
        G, side = permuted_bipartite(n, rng)
        gammas.append(G)
        sets.append(side)
    return gammas, sets


def test_improvement_bipartite():
    gammas, sets = _bipartite_sequence([32, 64, 64, 128], 0)
    for depth in (2, 3, 4):
        rep = improvement_experiment(gammas, sets, ENTROPY, depth)
        assert rep.int_f_gap < 0
        assert rep.claim_holds and rep.claim_gap > 0


def test_improvement_empty_sets():
    gammas, _ = _bipartite_sequence([16, 32], 1)
    rep = improvement_experiment(gammas, [np.zeros(G.k, dtype=bool) for G in gammas], ENTROPY, 3)
    assert rep.W_hat.equals_ae(rep.W_tilde_hat, tol=1e-12)
    assert rep.int_f_gap == pytest.approx(0.0, abs=1e-12)


def test_improvement_constant_sequence():
    rng = np.random.default_rng(2)
    gammas = [StepGraphon.constant(0.5).refine(uniform_breaks(8)) for _ in range(4)]
    sets = [rng.random(8) < 0.5 for _ in gammas]
    rep = improvement_experiment(gammas, sets, ENTROPY, 3)
    assert rep.int_f_gap == pytest.approx(0.0, abs=1e-12)
    # with |B_n| fixed the shifted block matches the psi-weighted baseline
    sets = [rng.permutation(8) < 4 for _ in gammas]
    rep = improvement_experiment(gammas, sets, ENTROPY, 3)
    assert rep.claim_gap == pytest.approx(0.0, abs=1e-12)


def test_improvement_rejects_mismatch():
    with pytest.raises(ValueError):
        improvement_experiment([StepGraphon.constant(0.5)], [], ENTROPY, 2)


def test_staged_partition():
    J = Partition.uniform(3)
    assert staged_partition(J, 0).n_parts == 1
    S1 = staged_partition(J, 1)
    assert S1.n_parts == 2 and list(S1.labels) == [1, 1, 0]
    assert list(staged_partition(J, 3).labels) == [0, 1, 2]
    with pytest.raises(ValueError):
        staged_partition(J, 4)


def test_ell_one_is_a_no_op():
    gammas = [chessboard_family(k) for k in range(1, 5)]
    rep = ell_part_shift_experiment(gammas, [Partition.trivial()] * 4, ENTROPY, 3)
    assert rep.ell == 1 and rep.gaps == (0.0,)


def test_ell_two_matches_improvement():
    gammas, sets = _bipartite_sequence([32, 64, 64], 3)
    parts = []
    for G, m in zip(gammas, sets):
        # (B, I \ B) as an ordered partition: label 0 = B
        parts.append(Partition(G.breaks, (~m).astype(int)))
    rep = ell_part_shift_experiment(gammas, parts, ENTROPY, 4)
    imp = improvement_experiment(gammas, sets, ENTROPY, 4)
    assert rep.int_f_chain[0] == pytest.approx(imp.int_f_hat, abs=1e-12)
    assert rep.int_f_chain[-1] == pytest.approx(imp.int_f_tilde, abs=1e-12)


def test_ell_three_chain_on_chessboard_tail():
    rng = np.random.default_rng(0)
    ks = range(25, 33)
    gammas = [chessboard_family(k) for k in ks]
    parts = []
    for G in gammas:
        cuts = np.sort(rng.choice(np.arange(1, G.k), 2, replace=False))
        breaks = np.concatenate([[0.0], G.breaks[cuts], [1.0]])
        parts.append(Partition(breaks, rng.permutation(3)))
    rep = ell_part_shift_experiment(gammas, parts, ENTROPY, 4)
    assert rep.ell == 3
    assert max(rep.gaps) <= 1e-4


def test_ell_rejects_varying_parts():
    W = StepGraphon.constant(0.5)
    with pytest.raises(ValueError, match="varying"):
        ell_part_shift_experiment([W, W], [Partition.uniform(2), Partition.uniform(3)])


# --- scripted families ------------------------------------------------------


@pytest.mark.parametrize("k", range(1, 9))
def test_chessboard_closed_form(k):
    W = chessboard_family(k)
    assert W.k == 2 * k + 4
    assert int_f(W, ENTROPY) == pytest.approx(chessboard_int_h(k), abs=1e-12)


def test_chessboard_k3_area():
    W = chessboard_family(3)
    assert W.k == 10
    gray = sum(w for v, w in W.weighted_histogram().items() if v == 0.5)
    assert gray == pytest.approx(0.36, abs=1e-12)
    assert int_f(W, ENTROPY) == pytest.approx(0.36, abs=1e-12)


def test_chessboard_int_h_decreasing():
    vals = [chessboard_int_h(k) for k in range(1, 40)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_noel_entropy():
    for ell in (2, 5, 10):
        W = noel_family(ell, 20 * ell, seed=ell)
        assert int_f(W, ENTROPY) == pytest.approx(binary_entropy(NOEL_VALUE) / ell**2, abs=1e-9)
    assert int_f(noel_family(10, 100, 0), ENTROPY) == pytest.approx(0.0088129, abs=1e-6)
    with pytest.raises(ValueError):
        noel_family(3, 10, 0)


def test_noel_region_and_mixing():
    for ell in (2, 5):
        assert 0.6 <= noel_region_average(ell, 20 * ell, seed=0, samples=8) <= 0.8
    m = [mixing_entropy(ell, 20 * ell, seed=0, samples=32) for ell in (2, 5, 10)]
    assert m[0] < m[1] < m[2]
    assert m[2] > 0.99


def test_permuted_bipartite():
    G, side = permuted_bipartite(10, np.random.default_rng(0))
    assert side.sum() == 5
    assert np.all(G.values[np.ix_(side, side)] == 0)
    assert np.all(G.values[np.ix_(side, ~side)] == 1)
    assert int_f(shift_left_version(G, side), ENTROPY) == 0.0
    # after shifting the side left, the graphon is the 2-block chessboard
    V = shift_left_version(G, side)
    assert V.rect_integral(0, 0.5, 0, 0.5) == pytest.approx(0.0, abs=1e-15)
    assert apply_ordered_partition(G, Partition.trivial()).k == G.k
