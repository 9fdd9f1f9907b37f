import numpy as np
import pytest
import sympy

from cirfindex import cirf, gf, index, lowrank
from cirfindex.checks import random_factor, index_instance
from cirfindex.cirf import APPROX_WINDOW
from cirfindex.exceptions import ShapeMismatch, ZeroFilterEntry
from cirfindex.index import AnchorParam, IndexParam
from cirfindex.lowrank import FactorIndex

P = gf.REFERENCE


def ones_params(k):
    return (
        IndexParam(np.ones((P.h, k), int), np.ones((P.w, k), int)),
        AnchorParam(np.ones(P.h, int), np.ones(P.w, int)),
    )


def test_enroll_identity_filters_give_column_transforms():
    idx = random_factor(np.random.default_rng(0), P, 2)
    rp, ap = ones_params(2)
    t = index.transform_index_enroll(idx, rp, ap, P, is_anchor=True)
    for c in range(2):
        assert np.array_equal(t.t_alpha[c], gf.ntt1d(idx.x_alpha[:, c], P.alpha, P.p))
        assert np.array_equal(t.t_beta[c], gf.ntt1d(idx.x_beta[:, c], P.beta, P.p))
    assert np.array_equal(t.anchor_t[0], t.t_alpha[0])


def test_enroll_zero_column_stays_zero():
    idx = FactorIndex(np.zeros((P.h, 1), int), np.ones((P.w, 1), int))
    rng = np.random.default_rng(1)
    t = index.transform_index_enroll(idx, IndexParam.draw(P, 1, rng), AnchorParam.draw(P, rng), P)
    assert not t.t_alpha.any() and not t.is_anchor


def test_enroll_matches_composition():
    rng = np.random.default_rng(2)
    idx = random_factor(rng, P, 2)
    rp, ap = IndexParam.draw(P, 2, rng), AnchorParam.draw(P, rng)
    t = index.transform_index_enroll(idx, rp, ap, P, is_anchor=True)
    for c in range(2):
        expected = gf.hadamard(gf.ntt1d(idx.x_alpha[:, c], P.alpha, P.p), rp.r_alpha[:, c], P.p)
        assert np.array_equal(t.t_alpha[c], expected)
    assert np.array_equal(t.anchor_t[1], gf.hadamard(gf.ntt1d(idx.x_beta[:, 0], P.beta, P.p), ap.r_prime_beta, P.p))
    assert t.pixel_count == 3 * 96


def test_zero_filter_rejected():
    rng = np.random.default_rng(3)
    rp = IndexParam.draw(P, 1, rng)
    bad = IndexParam(rp.r_alpha.copy(), rp.r_beta)
    bad.r_alpha[0, 0] = 0
    with pytest.raises(ZeroFilterEntry):
        index.transform_index_enroll(random_factor(rng, P, 1), bad, AnchorParam.draw(P, rng), P)


def test_query_transform():
    rng = np.random.default_rng(4)
    y = random_factor(rng, P, 2, zero_free=True)
    rp, ap = ones_params(2)
    q = index.transform_index_query(y, rp, ap, P, is_anchor=True)
    assert np.array_equal(q.v_alpha[1], gf.ntt1d(y.x_alpha[::-1, 1], P.alpha, P.p))
    assert q.anchor_v[0].shape == (1, P.h)
    rp, ap = IndexParam.draw(P, 2, rng), AnchorParam.draw(P, rng)
    q = index.transform_index_query(y, rp, ap, P, is_anchor=True)
    expected = gf.hadamard(gf.ntt1d(y.x_beta[::-1, 0], P.beta, P.p), gf.hadamard_inv(rp.r_beta[:, 0], P.p), P.p)
    assert np.array_equal(q.v_beta[0], expected)
    y1 = random_factor(rng, P, 1)
    q1 = index.transform_index_query(y1, IndexParam.draw(P, 1, rng), ap, P, is_anchor=True)
    assert q1.anchor_v[0].shape == (0, P.h)


def _direct_products(xs, y):
    ya, yb = index.column_transforms(y, P, flipped=True)
    out = []
    for x in xs:
        xa, xb = index.column_transforms(x, P)
        out.append((xa[:, None, :] * ya[None] % P.p, xb[:, None, :] * yb[None] % P.p))
    return out


def test_mst_identity_filters():
    rng = np.random.default_rng(5)
    x = random_factor(rng, P, 2, zero_free=True)
    y = random_factor(rng, P, 2, zero_free=True)
    rp, ap = ones_params(2)
    Pa, Pb = index.mst_recover_products(
        [index.transform_index_enroll(x, rp, ap, P, True)], [index.transform_index_query(y, rp, ap, P, True)], P
    )
    (da, db), = _direct_products([x], y)
    assert np.array_equal(Pa[0], da) and np.array_equal(Pb[0], db)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_mst_random_filters(k):
    rng = np.random.default_rng(6 + k)
    _, _, (xs, y, Pa, Pb) = index_instance(P, rng, k, 5)
    for n, (da, db) in enumerate(_direct_products(xs, y)):
        assert np.array_equal(Pa[n], da) and np.array_equal(Pb[n], db)


def test_mst_needs_one_anchor():
    rng = np.random.default_rng(9)
    x = random_factor(rng, P, 2)
    rp, ap = IndexParam.draw(P, 2, rng), AnchorParam.draw(P, rng)
    t = index.transform_index_enroll(x, rp, ap, P)
    v = index.transform_index_query(x, rp, ap, P)
    with pytest.raises(ValueError):
        index.mst_recover_products([t], [v], P)
    with pytest.raises(ShapeMismatch):
        index.mst_recover_products([t], [], P)


def test_compute_M_zero_query():
    rng = np.random.default_rng(10)
    x = random_factor(rng, P, 2, zero_free=True)
    rp, ap = ones_params(2)
    y = FactorIndex(np.zeros((P.h, 2), int), np.zeros((P.w, 2), int))
    # the zero query breaks the spanning-tree edges, so build its products directly
    (da, db), = _direct_products([x], y)
    assert not index.compute_M(da, db, P).any()


def test_compute_M_rank_one():
    rng = np.random.default_rng(11)
    u, v = rng.integers(0, 2, P.h), rng.integers(0, 2, P.w)
    s, t = rng.integers(0, 2, P.h), rng.integers(0, 2, P.w)
    x, y = FactorIndex(u[:, None], v[:, None]), FactorIndex(s[:, None], t[:, None])
    (da, db), = _direct_products([x], y)
    M = index.compute_M(da, db, P)
    shift = cirf.calibrate_index_map(P).to_shift_table(M)
    assert np.array_equal(shift, cirf.brute_corr_full(np.outer(u, v), np.outer(s, t)))


@pytest.mark.parametrize("k", [1, 2])
def test_compute_M_equals_reconstruction_correlation(k):
    M, expected, _ = index_instance(P, np.random.default_rng(12 + k), k, 5)
    assert np.array_equal(M, expected)


def test_compute_M_counter():
    _, _, (_, _, Pa, Pb) = index_instance(P, np.random.default_rng(14), 2, 3)
    c = gf.InttCounter()
    index.compute_M(Pa, Pb, P, c)
    assert c.count == 3 * 8


def test_windowed_M_matches_full():
    _, _, (_, _, Pa, Pb) = index_instance(P, np.random.default_rng(15), 2, 4)
    full = cirf.correlation_window(index.compute_M(Pa, Pb, P), APPROX_WINDOW, P)
    assert np.array_equal(index.windowed_M(Pa, Pb, APPROX_WINDOW, P), full)


def test_approx_score():
    assert index.approx_score(np.zeros(P.shape, int), APPROX_WINDOW, P) == 0
    rng = np.random.default_rng(16)
    u, v = rng.integers(0, 2, P.h), rng.integers(0, 2, P.w)
    x = FactorIndex(u[:, None], v[:, None])
    (da, db), = _direct_products([x], x)
    M = index.compute_M(da, db, P)
    X = np.outer(u, v)
    assert index.approx_score(M, cirf.ShiftWindow(0, 0), P) == int((X * X).sum())
    _, _, (xs, y, Pa, Pb) = index_instance(P, rng, 2, 1)
    table = cirf.brute_corr(lowrank.reconstruct(xs[0]), lowrank.reconstruct(y), APPROX_WINDOW)
    assert index.approx_score(index.compute_M(Pa[0], Pb[0], P), APPROX_WINDOW, P) == table.max()


def test_solve_index_param_unique():
    rng = np.random.default_rng(17)
    idx = random_factor(rng, P, 2, zero_free=True)
    rp, ap = IndexParam.draw(P, 2, rng), AnchorParam.draw(P, rng)
    t = index.transform_index_enroll(idx, rp, ap, P, is_anchor=True)
    srp, sap = index.solve_index_param(idx, t, P)
    assert np.array_equal(srp.r_alpha, rp.r_alpha) and np.array_equal(srp.r_beta, rp.r_beta)
    assert np.array_equal(sap.r_prime_alpha, ap.r_prime_alpha)
    assert np.array_equal(sap.r_prime_beta, ap.r_prime_beta)


def test_equation_counts_symbolic():
    (N, h, w, k), table = index.equation_counts()
    assert sympy.expand(table[("individual", "templates")][0] - (N + 1) * h * w) == 0
    assert sympy.expand(table[("individual", "indexes")][1] - (N * k + k - 1) * (h + w)) == 0
    for u, e in table.values():
        # every pair differs by a positive amount for all positive sizes
        assert sympy.simplify(u - e).is_positive


@pytest.mark.parametrize("N", [1, 10, 1000])
def test_equation_audit_underdetermined(N):
    rows = index.equation_audit(N, 32, 64, 2)
    assert len(rows) == 4 and all(r.underdetermined for r in rows)
