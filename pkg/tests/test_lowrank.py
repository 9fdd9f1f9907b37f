import itertools

import numpy as np
import pytest

from cirfindex import gf, lowrank
from cirfindex.exceptions import DitherExhausted, RankTooLarge
from cirfindex.lowrank import FactorIndex

P = gf.REFERENCE


def best_cover_residual(X, max_support=3):
    """Smallest rank-2 squared residual with row-factor supports of size <= max_support.

    The column factor is optimal per column for each candidate row factor pair.
    """
    h = X.shape[0]
    supports = [s for n in range(max_support + 1) for s in itertools.combinations(range(h), n)]
    cols = np.zeros((len(supports), h), dtype=np.int64)
    for n, s in enumerate(supports):
        cols[n, list(s)] = 1
    best = X.size
    for a, b in itertools.combinations_with_replacement(range(len(supports)), 2):
        # the four integer columns reachable by choosing (b0, b1) in {0,1}^2
        cand = np.stack([np.zeros(h, int), cols[a], cols[b], cols[a] + cols[b]])
        err = ((X[None, :, :] - cand[:, :, None]) ** 2).sum(axis=1).min(axis=0).sum()
        best = min(best, int(err))
    return best


def test_zero_image_gives_zero_factors():
    idx = lowrank.factorize(np.zeros((32, 64), int), 2)
    assert not idx.x_alpha.any() and not idx.x_beta.any()
    assert not lowrank.reconstruct(idx).any()


def test_rank_one_image_exact():
    rng = np.random.default_rng(0)
    u, v = rng.integers(0, 2, 32), rng.integers(0, 2, 64)
    X = np.outer(u, v)
    idx = lowrank.factorize(X, 1)
    assert lowrank.mismatch(X, idx) == 0


@pytest.mark.parametrize("seed", range(12))
def test_rank_two_beats_small_support_covers(seed):
    X = (np.random.default_rng(seed).random((8, 8)) < 0.35).astype(np.int64)
    idx = lowrank.factorize(X, 2, seed=0)
    assert idx.x_alpha.shape == (8, 2) and idx.x_beta.shape == (8, 2)
    assert set(np.unique(idx.x_alpha)) <= {0, 1} and set(np.unique(idx.x_beta)) <= {0, 1}
    assert lowrank.residual(X, idx) <= best_cover_residual(X)


@pytest.mark.parametrize("shape", [(32, 64), (12, 40), (8, 8)])
def test_rank_monotone(shape):
    X = (np.random.default_rng(4).random(shape) < 0.2).astype(np.int64)
    errs = [lowrank.residual(X, lowrank.factorize(X, k)) for k in (1, 2, 3)]
    assert errs[0] >= errs[1] >= errs[2]


def test_exact_search_is_optimal_at_rank_one():
    X = (np.random.default_rng(8).random((6, 7)) < 0.5).astype(np.int64)
    best = min(
        int(np.count_nonzero(X != np.outer(a, b)))
        for a in itertools.product((0, 1), repeat=6)
        for b in itertools.product((0, 1), repeat=7)
    )
    assert lowrank.mismatch(X, lowrank.factorize(X, 1)) == best


def test_overlap_counts_twice():
    # two overlapping strokes: the residual charges the doubly covered pixel
    X = np.zeros((8, 8), int)
    X[2, 1:7] = 1
    X[1:6, 4] = 1
    idx = FactorIndex(np.eye(8, dtype=int)[:, [2]], np.ones((8, 1), int))
    assert lowrank.mismatch(X, idx) == lowrank.residual(X, idx)
    both = FactorIndex(np.stack([np.eye(8, dtype=int)[2], X[:, 4]], 1), np.stack([X[2], np.eye(8, dtype=int)[4]], 1))
    assert lowrank.mismatch(X, both) == 0 and lowrank.residual(X, both) == 1
    assert lowrank.residual(X, lowrank.factorize(X, 2)) <= 1


def test_factorize_deterministic():
    X = (np.random.default_rng(5).random((32, 64)) < 0.2).astype(np.int64)
    assert lowrank.factorize(X, 2, seed=7) == lowrank.factorize(X, 2, seed=7)


def test_rank_too_large():
    with pytest.raises(RankTooLarge):
        lowrank.factorize(np.zeros((4, 8), int), 5)


def test_reconstruct_is_sum_of_outer_products():
    rng = np.random.default_rng(6)
    idx = FactorIndex(rng.integers(0, 2, (32, 2)), rng.integers(0, 2, (64, 2)))
    expected = np.outer(idx.x_alpha[:, 0], idx.x_beta[:, 0]) + np.outer(idx.x_alpha[:, 1], idx.x_beta[:, 1])
    assert np.array_equal(lowrank.reconstruct(idx), expected)
    assert not lowrank.reconstruct(FactorIndex(np.zeros((32, 1)), np.zeros((64, 1)))).any()


def test_check_anchor_delta_and_zero_columns():
    delta_a = np.zeros((32, 1), int)
    delta_a[3] = 1
    delta_b = np.zeros((64, 1), int)
    delta_b[0] = 1
    ok, same = lowrank.check_anchor(FactorIndex(delta_a, delta_b), P)
    assert ok and same == FactorIndex(delta_a, delta_b)
    ok, fixed = lowrank.check_anchor(FactorIndex(np.zeros((32, 1)), delta_b), P)
    assert not ok
    assert np.all(gf.ntt1d(fixed.x_alpha[:, 0], P.alpha, P.p))


def test_check_anchor_margin_mode_uses_wrap_point():
    col = np.zeros((32, 1), int)
    col[10:14] = 1  # even-length run: zero at the half-period coefficient
    assert gf.ntt1d(col[:, 0], P.alpha, P.p)[16] == 0
    b = np.zeros((64, 1), int)
    b[0] = 1
    ok, fixed = lowrank.check_anchor(FactorIndex(col, b), P, margin=True)
    changed = np.flatnonzero(fixed.x_alpha[:, 0] != col[:, 0])
    assert not ok and changed.tolist() in ([31], [0])


def test_dither_budget_exhausted():
    col = np.zeros((32, 1), int)
    col[10:14] = 1
    b = np.zeros((64, 1), int)
    b[0] = 1
    with pytest.raises(DitherExhausted):
        lowrank.check_anchor(FactorIndex(col, b), P, budget=0)


def test_random_columns_mostly_zero_free():
    rng = np.random.default_rng(7)
    cols = (rng.random((10_000, 32)) < 0.3).astype(np.int64)
    ok = np.all(gf.ntt1d(cols, P.alpha, P.p), axis=1)
    # frozen Monte Carlo rate for iid density-0.3 columns at this seed
    assert ok.mean() == pytest.approx(0.8137)
    failed = np.flatnonzero(~ok)[:20]
    b = np.zeros((64, 1), int)
    b[0] = 1
    for n in failed:
        _, fixed = lowrank.check_anchor(FactorIndex(cols[n][:, None], b), P)
        assert np.all(gf.ntt1d(fixed.x_alpha[:, 0], P.alpha, P.p))
