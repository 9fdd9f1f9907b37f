"""Rank-k binary factorization of feature images.

The factor product is an ordinary integer matrix product, so a reconstructed
pixel may reach ``k``. Factors minimize the squared integer residual
``sum((X - A @ B.T)**2)``, which charges overlapping components for the
pixels they count twice; :func:`mismatch` reports the boolean view.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import gf
from .cirf import pixels_of
from .exceptions import DitherExhausted, RankTooLarge
from .gf import GFParams


@dataclass(frozen=True, eq=False)
class FactorIndex:
    """Plaintext index of an image: ``x_alpha`` is ``h x k``, ``x_beta`` is ``w x k``."""

    x_alpha: np.ndarray
    x_beta: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.x_alpha, dtype=np.int64)
        b = np.asarray(self.x_beta, dtype=np.int64)
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1] or a.shape[1] < 1:
            raise ValueError(f"incompatible factor shapes {a.shape} and {b.shape}")
        object.__setattr__(self, "x_alpha", a)
        object.__setattr__(self, "x_beta", b)

    @property
    def k(self) -> int:
        return self.x_alpha.shape[1]

    def __eq__(self, other):
        if not isinstance(other, FactorIndex):
            return NotImplemented
        return np.array_equal(self.x_alpha, other.x_alpha) and np.array_equal(
            self.x_beta, other.x_beta
        )

    __hash__ = None


def reconstruct(idx: FactorIndex, p: int | None = None) -> np.ndarray:
    """``x_alpha @ x_beta.T``, reduced mod ``p`` when given."""
    out = idx.x_alpha @ idx.x_beta.T
    return out if p is None else out % p


def mismatch(X, idx: FactorIndex) -> int:
    """Pixels where ``X`` differs from the boolean view of the reconstruction."""
    X = pixels_of(X)
    return int(np.count_nonzero(X != np.minimum(reconstruct(idx), 1)))


def residual(X, idx: FactorIndex) -> int:
    """Squared integer residual ``sum((X - reconstruct(idx))**2)``, the factorization objective."""
    return _sq_error(pixels_of(X), idx.x_alpha, idx.x_beta)


def _ascend(W: np.ndarray, b: np.ndarray):
    """Alternating ascent of ``a @ W @ b`` over binary supports from column start ``b``."""
    a = (W @ b > 0).astype(np.int64)
    for _ in range(100):
        b_new = (W.T @ a > 0).astype(np.int64)
        a_new = (W @ b_new > 0).astype(np.int64)
        if np.array_equal(a_new, a) and np.array_equal(b_new, b):
            break
        a, b = a_new, b_new
    return a, b, int(a @ W @ b)


def _candidate_rectangles(W: np.ndarray, rng: np.random.Generator, restarts: int, top: int):
    """Distinct positive-gain rectangles, best gain first.

    Ascent starts from ``restarts`` random column supports and from every
    distinct row with a positive gain.
    """
    starts = [(rng.random(W.shape[1]) < 0.5).astype(np.int64) for _ in range(restarts)]
    starts += [r for r in np.unique((W > 0).astype(np.int64), axis=0) if r.any()]
    found = {}
    for b in starts:
        a, b, gain = _ascend(W, b)
        if gain > 0:
            found[(a.tobytes(), b.tobytes())] = (gain, a, b)
    return sorted(found.values(), key=lambda t: -t[0])[:top]


def _combos(m: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=m)), dtype=np.int64)


def _refit_side(X: np.ndarray, other: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Best binary row assignment of one factor with the other held fixed.

    Each row of ``X`` picks the component combination that minimizes its
    squared residual; the current choice wins ties so the error never rises.
    """
    m = other.shape[1]
    combos = _combos(m)
    cover = combos @ other.T  # (2^m, n)
    # sum_n (x - c)^2 with x binary: sum(x) - 2 x.c + sum(c^2)
    cost = X.sum(axis=1)[:, None] - 2 * X @ cover.T + (cover**2).sum(axis=1)[None, :]
    cur = (current @ (1 << np.arange(m - 1, -1, -1))).astype(np.int64)
    cur_cost = cost[np.arange(len(cost)), cur]
    pick = np.argmin(cost, axis=1)
    keep = cur_cost <= cost[np.arange(len(cost)), pick]
    pick = np.where(keep, cur, pick)
    return combos[pick]


def _refine(X, A, B, max_iter=50):
    for _ in range(max_iter):
        A_new = _refit_side(X, B, A)
        B_new = _refit_side(X.T, A_new, B)
        if np.array_equal(A_new, A) and np.array_equal(B_new, B):
            break
        A, B = A_new, B_new
    return A, B


def _sq_error(X, A, B) -> int:
    return int(((X - A @ B.T) ** 2).sum())


EXACT_SEARCH_BITS = 16


def _exact_feasible(shape, k: int) -> bool:
    bits = min(shape) * k
    # the cost table holds 2^bits * 2^k * max(shape) entries
    return bits <= EXACT_SEARCH_BITS and bits + k + int(max(shape)).bit_length() <= 24


def _factorize_exact(X: np.ndarray, k: int):
    """Optimal rank-k factors by enumerating the shorter side's factor.

    For each candidate factor the other one is chosen per column, which is
    optimal given the first, so the minimum over all candidates is global.
    """
    transpose = X.shape[0] > X.shape[1]
    Z = X.T if transpose else X
    n = Z.shape[0]
    # all binary n x k factors, one per row of `cands`
    cands = ((np.arange(2 ** (n * k))[:, None] >> np.arange(n * k)) & 1).reshape(-1, n, k)
    combos = _combos(k)
    cover = np.einsum("cm,anm->acn", combos, cands)  # (cand, combo, n)
    cost = Z.sum(axis=0) - 2 * cover @ Z + (cover**2).sum(axis=-1)[..., None]  # (cand, combo, columns)
    total = cost.min(axis=1).sum(axis=1)
    best = int(np.argmin(total))
    F = cands[best].astype(np.int64)
    G = combos[cost[best].argmin(axis=0)]
    return (G, F) if transpose else (F, G)


def factorize(X, k: int, seed: int = 0, restarts: int = 8, top: int = 4) -> FactorIndex:
    """Binary rank-k factors minimizing the squared integer residual.

    Small problems (shorter side times ``k`` at most ``EXACT_SEARCH_BITS``,
    with a bounded cost table) are solved exactly. Otherwise components are
    added one at a time: the ``top`` rectangles with the largest residual
    reduction are each tried, all components are re-optimized by alternating
    refinement, and the lowest residual wins, keeping the previous components
    when nothing improves. The search starts from the largest rank that can be
    solved exactly, so the residual never increases with ``k``. Component
    ``c`` draws from a generator seeded with ``(seed, c)``.
    """
    X = pixels_of(X)
    if not np.isin(X, (0, 1)).all():
        raise ValueError("factorize expects a binary image")
    h, w = X.shape
    if not 1 <= k <= min(h, w):
        raise RankTooLarge(f"rank {k} not in [1, {min(h, w)}]")
    A = np.zeros((h, k), dtype=np.int64)
    B = np.zeros((w, k), dtype=np.int64)
    start = max((c for c in range(k + 1) if c == 0 or _exact_feasible(X.shape, c)))
    if start:
        A[:, :start], B[:, :start] = _factorize_exact(X, start)
    for c in range(start, k):
        rng = np.random.default_rng([seed, c])
        # residual change of adding 1 to a pixel currently reconstructed as v
        V = A @ B.T
        W = np.where(X == 1, 1 - 2 * V, -(2 * V + 1))
        best = _refine(X, A[:, : c + 1].copy(), B[:, : c + 1].copy())
        err = _sq_error(X, *best)
        for _, a, b in _candidate_rectangles(W, rng, restarts, top):
            A2, B2 = A[:, : c + 1].copy(), B[:, : c + 1].copy()
            A2[:, c], B2[:, c] = a, b
            A2, B2 = _refine(X, A2, B2)
            e = _sq_error(X, A2, B2)
            if e < err:
                best, err = (A2, B2), e
        A[:, : c + 1], B[:, : c + 1] = best
    return FactorIndex(A, B)


def _dither_order(col: np.ndarray) -> list[int]:
    """Positions nearest the column's support centroid come first.

    Perturbing inside the support thickens an existing stroke instead of
    adding a spurious one elsewhere; an empty column starts from its middle.
    """
    support = np.flatnonzero(col)
    mid = support.mean() if support.size else (len(col) - 1) / 2
    return sorted(range(len(col)), key=lambda i: (abs(i - mid), i))


def _margin_order(n: int) -> list[int]:
    """Positions by cyclic distance from the wrap point between ``n - 1`` and ``0``.

    That point is the middle of the zero margin of a padded image, the spot
    farthest from the feature region.
    """
    return sorted(range(n), key=lambda i: (min(i + 0.5, n - 0.5 - i), i))


def _column_ok(col: np.ndarray, root: int, p: int) -> bool:
    return bool(np.all(gf.ntt1d(col, root, p)))


def _repair_columns(F: np.ndarray, root: int, p: int, budget: int, margin: bool) -> tuple[np.ndarray, bool]:
    F = F.copy()
    clean = True
    for c in range(F.shape[1]):
        if _column_ok(F[:, c], root, p):
            continue
        clean = False
        order = _margin_order(F.shape[0]) if margin else _dither_order(F[:, c])
        for pos in order[:budget]:
            trial = F[:, c].copy()
            trial[pos] = (trial[pos] + 1) % p
            if _column_ok(trial, root, p):
                F[:, c] = trial
                break
        else:
            raise DitherExhausted(f"no zero-free variant of column {c} within {budget} positions")
    return F, clean


def check_anchor(idx: FactorIndex, params: GFParams, budget: int = 16, margin: bool = False):
    """Check that every factor column has a zero-free 1D transform.

    Returns ``(True, idx)`` when it does. Otherwise returns ``(False,
    repaired)`` where each offending column had one pixel incremented by
    1 mod p, trying at most ``budget`` positions. Positions are tried
    outwards from the centroid of the column's support, or, with
    ``margin=True``, outwards from the middle of the zero margin of a padded
    image. A margin pixel leaves windowed correlations against padded images
    unchanged whenever the margin is wider than the shift window.
    """
    A, ok_a = _repair_columns(idx.x_alpha % params.p, params.alpha, params.p, budget, margin)
    B, ok_b = _repair_columns(idx.x_beta % params.p, params.beta, params.p, budget, margin)
    if ok_a and ok_b:
        return True, idx
    return False, FactorIndex(A, B)
