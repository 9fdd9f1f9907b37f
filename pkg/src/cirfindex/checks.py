"""Self-checks shared by the ``verify`` and ``secrecy-test`` commands.

Each check returns a :class:`CheckResult`; none of them raise on a failed
comparison so a report can list every failure at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import cirf, gf, index, lowrank
from .cirf import EXACT_WINDOW, BioImage, TemplateParam
from .gf import GFParams
from .index import AnchorParam, IndexParam
from .lowrank import FactorIndex
from .synth import zero_pad


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def random_binary(rng: np.random.Generator, shape, density: float = 0.3) -> np.ndarray:
    return (rng.random(shape) < density).astype(np.int64)


def random_padded(rng, params: GFParams, win=EXACT_WINDOW, density=0.3) -> BioImage:
    return zero_pad(random_binary(rng, params.shape, density), win)


def random_factor(rng, params: GFParams, k: int, zero_free: bool = False) -> FactorIndex:
    while True:
        idx = FactorIndex(random_binary(rng, (params.h, k), 0.4), random_binary(rng, (params.w, k), 0.4))
        if not zero_free:
            return idx
        a, b = index.column_transforms(idx, params)
        if np.all(a) and np.all(b):
            return idx


def check_cirf(params: GFParams, rng, n: int = 100, win=EXACT_WINDOW) -> CheckResult:
    bad = 0
    for _ in range(n):
        X = random_padded(rng, params, win)
        Y = random_binary(rng, params.shape)
        r = cirf.random_filter(params, rng)
        C = cirf.match_correlation(cirf.transform_template(X, r, params), cirf.transform_query(Y, r, params), params)
        bad += not np.array_equal(cirf.correlation_window(C, win, params), cirf.brute_corr(X, Y, win))
    return CheckResult("cirf-correlation", bad == 0, f"{n - bad}/{n} pairs equal the direct correlation")


def check_hamming(params: GFParams, rng, n: int = 100, win=EXACT_WINDOW) -> CheckResult:
    bad = 0
    for _ in range(n):
        X = random_padded(rng, params, win)
        Y = random_binary(rng, params.shape)
        tp = TemplateParam.draw(params, rng)
        got = cirf.min_hamming_score(cirf.protect_template(X, tp, params), cirf.protect_query(Y, tp, params), win, params)
        bad += got != cirf.brute_min_hamming(X, Y, win)
    return CheckResult("min-hamming", bad == 0, f"{n - bad}/{n} pairs equal the direct count")


def index_instance(params: GFParams, rng, k: int, N: int):
    """Random enrolled/query factors and filters.

    Returns the recovered correlations rearranged by shift, the directly
    computed correlations of the reconstructions, and the intermediates.
    """
    ap = AnchorParam.draw(params, rng)
    xs = [random_factor(rng, params, k, zero_free=(n == 0)) for n in range(N)]
    y = random_factor(rng, params, k, zero_free=True)
    rps = [IndexParam.draw(params, k, rng) for _ in range(N)]
    t_idx = [index.transform_index_enroll(x, rp, ap, params, is_anchor=(n == 0)) for n, (x, rp) in enumerate(zip(xs, rps))]
    v_idx = [index.transform_index_query(y, rp, ap, params, is_anchor=(n == 0)) for n, rp in enumerate(rps)]
    Pa, Pb = index.mst_recover_products(t_idx, v_idx, params)
    M = index.compute_M(Pa, Pb, params)
    Yh = lowrank.reconstruct(y)
    expected = np.stack([cirf.brute_corr_full(lowrank.reconstruct(x), Yh) for x in xs]) % params.p
    return cirf.calibrate_index_map(params).to_shift_table(M), expected, (xs, y, Pa, Pb)


def check_index_correlation(params: GFParams, rng, n: int = 100, ks=(1, 2), N: int = 5) -> CheckResult:
    bad = total = 0
    for k in ks:
        for _ in range(n):
            M, expected, _ = index_instance(params, rng, k, N)
            bad += not np.array_equal(M, expected)
            total += 1
    return CheckResult("index-correlation", bad == 0, f"{total - bad}/{total} instances equal the reconstruction correlation")


def check_mst(params: GFParams, rng, n: int = 20, k: int = 2, N: int = 5) -> CheckResult:
    bad = 0
    p = params.p
    for _ in range(n):
        _, _, (xs, y, Pa, Pb) = index_instance(params, rng, k, N)
        ya, yb = index.column_transforms(y, params, flipped=True)
        for m, x in enumerate(xs):
            xa, xb = index.column_transforms(x, params)
            bad += not np.array_equal(Pa[m], xa[:, None, :] * ya[None, :, :] % p)
            bad += not np.array_equal(Pb[m], xb[:, None, :] * yb[None, :, :] % p)
    return CheckResult("spanning-tree-products", bad == 0, f"{bad} mismatching product tables in {n} instances")


def check_revocation(params: GFParams, rng, n: int = 100) -> CheckResult:
    bad = 0
    for _ in range(n):
        X = random_binary(rng, params.shape)
        r1, r2 = cirf.random_filter(params, rng), cirf.random_filter(params, rng)
        T = cirf.transform_template(X, r1, params)
        bad += not np.array_equal(cirf.revoke(T, r1, r2, params), cirf.transform_template(X, r2, params))
    return CheckResult("revocation", bad == 0, f"{n - bad}/{n} re-keyed templates equal a fresh transform")


def check_counters(params: GFParams, rng, k: int = 2) -> CheckResult:
    c = gf.InttCounter()
    X = random_padded(rng, params)
    Y = random_binary(rng, params.shape)
    tp = TemplateParam.draw(params, rng)
    cirf.min_hamming_score(cirf.protect_template(X, tp, params), cirf.protect_query(Y, tp, params), EXACT_WINDOW, params, c)
    exact = c.reset()
    _, _, (_, _, Pa, Pb) = index_instance(params, rng, k, 1)
    index.compute_M(Pa[0], Pb[0], params, c)
    approx = c.reset()
    ok = exact == 2 * (params.h + params.w) and approx == 2 * k * k
    return CheckResult("inverse-transform-count", ok, f"exact score {exact}, approximate score {approx}")


def verify_suite(params: GFParams, seed: int = 0, n: int = 100, ks=(1, 2)) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [
        check_cirf(params, rng, n),
        check_index_correlation(params, rng, n, ks),
        check_hamming(params, rng, n),
        check_mst(params, rng, max(1, n // 5), k=max(ks)),
        check_revocation(params, rng, n),
        check_counters(params, rng, max(ks)),
    ]


# ---------------------------------------------------------------------------
# secrecy


def solve_template_filter(X, T, params: GFParams) -> np.ndarray:
    """The only filter with ``transform_template(X, r) == T`` (needs a zero-free transform of X)."""
    return gf.hadamard(T, gf.hadamard_inv(gf.ntt2d(cirf.pixels_of(X), params), params.p), params.p)


def check_bijection(params: GFParams, rng, n: int = 1000, k: int = 2) -> CheckResult:
    bad = 0
    for i in range(n):
        if i % 2 == 0:
            while True:
                X = random_binary(rng, params.shape)
                if np.all(gf.ntt2d(X, params)):
                    break
            r = cirf.random_filter(params, rng)
            T = cirf.transform_template(X, r, params)
            solved = solve_template_filter(X, T, params)
            bad += not (np.array_equal(solved, r) and np.array_equal(cirf.transform_template(X, solved, params), T))
        else:
            idx = random_factor(rng, params, k, zero_free=True)
            rp, ap = IndexParam.draw(params, k, rng), AnchorParam.draw(params, rng)
            t_idx = index.transform_index_enroll(idx, rp, ap, params, is_anchor=True)
            srp, sap = index.solve_index_param(idx, t_idx, params)
            again = index.transform_index_enroll(idx, srp, sap, params, is_anchor=True)
            bad += not (
                np.array_equal(srp.r_alpha, rp.r_alpha)
                and np.array_equal(srp.r_beta, rp.r_beta)
                and np.array_equal(sap.r_prime_alpha, ap.r_prime_alpha)
                and np.array_equal(again.t_alpha, t_idx.t_alpha)
            )
    return CheckResult("parameter-uniqueness", bad == 0, f"{n - bad}/{n} filters reconstructed uniquely")


def chi_square_uniform(samples: np.ndarray, p: int) -> float:
    """p-value of a chi-square test that ``samples`` are uniform over 1..p-1."""
    counts = np.bincount(np.asarray(samples).ravel(), minlength=p)
    if counts[0]:
        return 0.0
    return float(stats.chisquare(counts[1:]).pvalue)


def uniformity_pvalues(params: GFParams, rng, samples: int = 100_000, k: int = 2) -> dict[str, float]:
    """Chi-square p-values for one pixel of every protected vector class.

    The plaintext is fixed and only the filters are redrawn, so each sample
    is one entry of a fresh protection of the same data.
    """
    p = params.p
    while True:
        X = random_binary(rng, params.shape)
        FX = gf.ntt2d(X, params)
        if np.all(FX):
            break
    idx = random_factor(rng, params, k, zero_free=True)
    ga, gb = index.column_transforms(idx, params)
    i, j = rng.integers(params.h), rng.integers(params.w)
    out = {"template": FX[i, j]}
    for c in range(k):
        out[f"t_alpha[{c}]"] = ga[c, i]
        out[f"t_beta[{c}]"] = gb[c, j]
    out["t_prime_alpha"] = ga[0, i]
    out["t_prime_beta"] = gb[0, j]
    return {
        name: chi_square_uniform(gf.hadamard(coef, gf.random_nonzero(samples, p, rng), p), p)
        for name, coef in out.items()
    }


def unlinkability_pvalue(params: GFParams, rng, trials: int = 2000) -> float:
    """Independence test between two protections of the same image.

    Pools pixel pairs ``(T1[i, j], T2[i, j])`` from independent filters and
    tests the rank correlation against zero.
    """
    X = random_binary(rng, params.shape)
    a, b = [], []
    for _ in range(trials):
        T1 = cirf.transform_template(X, cirf.random_filter(params, rng), params)
        T2 = cirf.transform_template(X, cirf.random_filter(params, rng), params)
        i, j = rng.integers(params.h), rng.integers(params.w)
        a.append(T1[i, j])
        b.append(T2[i, j])
    return float(stats.spearmanr(a, b).pvalue)


def secrecy_suite(params: GFParams, seed: int = 0, n: int = 1000, samples: int = 100_000, alpha: float = 0.001):
    rng = np.random.default_rng(seed)
    results = [check_bijection(params, rng, n)]
    for name, pv in uniformity_pvalues(params, rng, samples).items():
        results.append(CheckResult(f"uniformity:{name}", pv > alpha, f"chi-square p = {pv:.4g}"))
    pv = unlinkability_pvalue(params, rng)
    results.append(CheckResult("unlinkability", pv > alpha, f"rank-correlation p = {pv:.4g}"))
    return results


def audit_rows(params: GFParams, k: int, Ns=(1, 10, 1000)):
    rows = []
    for N in Ns:
        rows += [(N, r) for r in index.equation_audit(N, params.h, params.w, k)]
    return rows

