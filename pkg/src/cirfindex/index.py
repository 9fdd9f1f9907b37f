"""Cancelable index: protected rank-k factors and fast approximate correlation.

Every factor column is moved to the 1D transform domain and masked with its
own random filter. At query time the server multiplies each stored vector with
the matching query vector, which yields the diagonal products
``G(x_i) * G(flip y_i)``. The cross products ``G(x_i) * G(flip y_j)`` follow by
walking a spanning tree rooted at the anchor record's first column:

    G(x_i) G(y_j) = [G(x_i) G(y_i)] * [G(x_a) G(y_i)]^-1 * [G(x_a) G(y_j)]

where the anchor terms come from the extra vectors ``t'`` / ``v'``. After
``2 k^2`` inverse 1D transforms the outer product of the two sides is the
cyclic cross-correlation of the rank-k reconstructions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import sympy

from . import gf
from .cirf import ShiftWindow, calibrate_index_map, correlation_window
from .exceptions import ShapeMismatch, ZeroElement, ZeroFilterEntry
from .gf import GFParams, InttCounter
from .lowrank import FactorIndex


@dataclass(frozen=True)
class IndexParam:
    """Per-column filters: ``r_alpha`` is ``h x k``, ``r_beta`` is ``w x k``."""

    r_alpha: np.ndarray
    r_beta: np.ndarray

    @classmethod
    def draw(cls, params: GFParams, k: int, rng: np.random.Generator) -> "IndexParam":
        return cls(
            gf.random_nonzero((params.h, k), params.p, rng),
            gf.random_nonzero((params.w, k), params.p, rng),
        )


@dataclass(frozen=True)
class AnchorParam:
    """The extra filters applied to the anchor record's first column pair."""

    r_prime_alpha: np.ndarray
    r_prime_beta: np.ndarray

    @classmethod
    def draw(cls, params: GFParams, rng: np.random.Generator) -> "AnchorParam":
        return cls(
            gf.random_nonzero(params.h, params.p, rng),
            gf.random_nonzero(params.w, params.p, rng),
        )


@dataclass(frozen=True)
class TransformedIndex:
    """Stored index: ``t_alpha`` (k x h), ``t_beta`` (k x w), anchor pair or None."""

    t_alpha: np.ndarray
    t_beta: np.ndarray
    anchor_t: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def is_anchor(self) -> bool:
        return self.anchor_t is not None

    @property
    def pixel_count(self) -> int:
        n = self.t_alpha.size + self.t_beta.size
        if self.anchor_t is not None:
            n += self.anchor_t[0].size + self.anchor_t[1].size
        return n


@dataclass(frozen=True)
class TransformedQueryIndex:
    """Query index for one record; ``anchor_v`` holds ``v'_j`` for ``j = 2..k``."""

    v_alpha: np.ndarray
    v_beta: np.ndarray
    anchor_v: tuple[np.ndarray, np.ndarray] | None = None


def _nonzero(r, p) -> np.ndarray:
    r = np.asarray(r, dtype=np.int64)
    if np.any(r % p == 0):
        raise ZeroFilterEntry("index filters must not contain zero entries")
    return r


def column_transforms(idx: FactorIndex, params: GFParams, flipped: bool = False):
    """1D transforms of the factor columns, as ``(k x h, k x w)`` arrays."""
    a, b = idx.x_alpha.T, idx.x_beta.T
    if flipped:
        a, b = a[:, ::-1], b[:, ::-1]
    return gf.ntt1d(a, params.alpha, params.p), gf.ntt1d(b, params.beta, params.p)


def transform_index_enroll(
    idx: FactorIndex,
    rp: IndexParam,
    ap: AnchorParam,
    params: GFParams,
    is_anchor: bool = False,
) -> TransformedIndex:
    p = params.p
    ga, gb = column_transforms(idx, params)
    t_alpha = gf.hadamard(ga, _nonzero(rp.r_alpha, p).T, p)
    t_beta = gf.hadamard(gb, _nonzero(rp.r_beta, p).T, p)
    anchor = None
    if is_anchor:
        anchor = (
            gf.hadamard(ga[0], _nonzero(ap.r_prime_alpha, p), p),
            gf.hadamard(gb[0], _nonzero(ap.r_prime_beta, p), p),
        )
    return TransformedIndex(t_alpha, t_beta, anchor)


def query_index_arrays(y_idx: FactorIndex, r_alpha, r_beta, ap: AnchorParam, params: GFParams):
    """Batched query transform.

    ``r_alpha``/``r_beta`` have shape ``(..., h, k)``/``(..., w, k)``; the
    result is ``(v_alpha (..., k, h), v_beta (..., k, w), anchor_v)``.
    """
    p = params.p
    ga, gb = column_transforms(y_idx, params, flipped=True)
    inv_a = gf.hadamard_inv(_nonzero(r_alpha, p), p)
    inv_b = gf.hadamard_inv(_nonzero(r_beta, p), p)
    v_alpha = gf.hadamard(ga, np.swapaxes(inv_a, -1, -2), p)
    v_beta = gf.hadamard(gb, np.swapaxes(inv_b, -1, -2), p)
    anchor_v = (
        gf.hadamard(ga[1:], gf.hadamard_inv(_nonzero(ap.r_prime_alpha, p), p), p),
        gf.hadamard(gb[1:], gf.hadamard_inv(_nonzero(ap.r_prime_beta, p), p), p),
    )
    return v_alpha, v_beta, anchor_v


def transform_index_query(
    y_idx: FactorIndex,
    rp: IndexParam,
    ap: AnchorParam,
    params: GFParams,
    is_anchor: bool = False,
) -> TransformedQueryIndex:
    v_alpha, v_beta, anchor_v = query_index_arrays(y_idx, rp.r_alpha, rp.r_beta, ap, params)
    return TransformedQueryIndex(v_alpha, v_beta, anchor_v if is_anchor else None)


def anchor_edges(anchor_diag_alpha, anchor_diag_beta, anchor_t, anchor_v, p: int):
    """Products ``G(x_anchor,1) * G(flip y_j)`` for every ``j``, both sides.

    ``j = 1`` is the anchor record's own diagonal product; ``j >= 2`` comes
    from ``t' * v'_j``. Shapes are ``(k, h)`` and ``(k, w)``.
    """
    edge_a = np.concatenate([anchor_diag_alpha[None], gf.hadamard(anchor_t[0], anchor_v[0], p)])
    edge_b = np.concatenate([anchor_diag_beta[None], gf.hadamard(anchor_t[1], anchor_v[1], p)])
    return edge_a, edge_b


def _complete(diag: np.ndarray, edge: np.ndarray, edge_inv: np.ndarray, p: int) -> np.ndarray:
    """Fill the ``k x k`` product table of every record from its diagonal."""
    k = diag.shape[-2]
    # diag (..., k, n) -> (..., i, j, n) = diag_i * edge_i^-1 * edge_j
    scaled = gf.hadamard(diag, edge_inv, p)
    table = gf.hadamard(scaled[..., :, None, :], edge, p)
    i = np.arange(k)
    table[..., i, i, :] = diag
    return table


def recover_product_arrays(
    t_alpha, t_beta, v_alpha, v_beta, anchor_pos: int, anchor_t, anchor_v, p: int, edges=None
):
    """Cross Hadamard products for stacked records.

    Inputs are ``(N, k, h)``/``(N, k, w)`` arrays; returns tables of shape
    ``(N, k, k, h)`` and ``(N, k, k, w)`` indexed ``[n, i, j]``. ``edges`` may
    carry precomputed ``(edge_a, edge_a_inv, edge_b, edge_b_inv)``.
    """
    diag_a = gf.hadamard(t_alpha, v_alpha, p)
    diag_b = gf.hadamard(t_beta, v_beta, p)
    k = diag_a.shape[-2]
    if k == 1:
        return diag_a[..., None, :], diag_b[..., None, :]
    if edges is None:
        edges = anchor_edge_inverses(diag_a[anchor_pos, 0], diag_b[anchor_pos, 0], anchor_t, anchor_v, p)
    edge_a, inv_a, edge_b, inv_b = edges
    return _complete(diag_a, edge_a, inv_a, p), _complete(diag_b, edge_b, inv_b, p)


def anchor_edge_inverses(anchor_diag_alpha, anchor_diag_beta, anchor_t, anchor_v, p: int):
    edge_a, edge_b = anchor_edges(anchor_diag_alpha, anchor_diag_beta, anchor_t, anchor_v, p)
    try:
        inv_a = gf.hadamard_inv(edge_a, p)
        inv_b = gf.hadamard_inv(edge_b, p)
    except ZeroElement as exc:
        raise ZeroElement(f"spanning-tree edge through the anchor has a zero entry: {exc}") from None
    return edge_a, inv_a, edge_b, inv_b


def mst_recover_products(
    t_idx: Sequence[TransformedIndex], v_idx: Sequence[TransformedQueryIndex], params: GFParams
):
    """All ``G(x_i^(n)) * G(flip y_j)`` products for every record ``n``.

    Exactly one entry of ``t_idx`` (and the matching ``v_idx``) must carry the
    anchor vectors. Returns ``(P_alpha, P_beta)`` with shapes ``(N, k, k, h)``
    and ``(N, k, k, w)``.
    """
    if len(t_idx) != len(v_idx) or not t_idx:
        raise ShapeMismatch("need one query index per stored index")
    anchors = [n for n, t in enumerate(t_idx) if t.is_anchor]
    if len(anchors) != 1:
        raise ValueError(f"expected exactly one anchor record, found {len(anchors)}")
    a = anchors[0]
    k = t_idx[0].t_alpha.shape[0]
    if k > 1 and v_idx[a].anchor_v is None:
        raise ValueError("the anchor record's query index lacks the v' vectors")
    return recover_product_arrays(
        np.stack([t.t_alpha for t in t_idx]),
        np.stack([t.t_beta for t in t_idx]),
        np.stack([v.v_alpha for v in v_idx]),
        np.stack([v.v_beta for v in v_idx]),
        a,
        t_idx[a].anchor_t,
        v_idx[a].anchor_v,
        params.p,
    )


def compute_M(P_alpha, P_beta, params: GFParams, counter: InttCounter | None = None) -> np.ndarray:
    """Approximate correlation matrix from the product tables of one or more records.

    Consumes ``2 k^2`` inverse 1D transforms per record.
    """
    P_alpha = np.asarray(P_alpha)
    P_beta = np.asarray(P_beta)
    k = P_alpha.shape[-2]
    if (
        P_alpha.shape[-3:] != (k, k, params.h)
        or P_beta.shape[-3:] != (k, k, params.w)
        or P_alpha.shape[:-3] != P_beta.shape[:-3]
    ):
        raise ShapeMismatch(f"bad product tables {P_alpha.shape} / {P_beta.shape}")
    lead = P_alpha.shape[:-3]
    # column (i-1)k + j of M_alpha is the inverse transform of product [i, j]
    M_alpha = gf.intt1d(P_alpha.reshape(*lead, k * k, params.h), params.alpha, params.p, counter)
    M_beta = gf.intt1d(P_beta.reshape(*lead, k * k, params.w), params.beta, params.p, counter)
    return np.matmul(np.swapaxes(M_alpha, -1, -2), M_beta) % params.p


def windowed_M(P_alpha, P_beta, win: ShiftWindow, params: GFParams, counter: InttCounter | None = None):
    """``correlation_window(compute_M(...))`` without forming the full matrix.

    Performs the same ``2 k^2`` inverse 1D transforms per record, then only
    the rows and columns the window reads are multiplied out.
    """
    P_alpha = np.asarray(P_alpha)
    P_beta = np.asarray(P_beta)
    k = P_alpha.shape[-2]
    lead = P_alpha.shape[:-3]
    M_alpha = gf.intt1d(P_alpha.reshape(*lead, k * k, params.h), params.alpha, params.p, counter)
    M_beta = gf.intt1d(P_beta.reshape(*lead, k * k, params.w), params.beta, params.p, counter)
    rows, cols = calibrate_index_map(params).window_coords(win)
    a = np.swapaxes(M_alpha[..., rows[:, 0]], -1, -2).astype(np.float64)
    b = M_beta[..., cols[0, :]].astype(np.float64)
    # k^2 (p-1)^2 stays far below 2^53, so the float product is exact
    return np.rint(np.matmul(a, b)).astype(np.int64) % params.p


def approx_score(M, win: ShiftWindow, params: GFParams):
    """Largest correlation of ``M`` inside the shift window (a similarity)."""
    scores = correlation_window(M, win, params).max(axis=(-2, -1))
    return int(scores) if np.ndim(scores) == 0 else scores


# ---------------------------------------------------------------------------
# secrecy mechanics


def solve_index_param(idx: FactorIndex, t_idx: TransformedIndex, params: GFParams):
    """The unique filters mapping ``idx`` onto ``t_idx``.

    Requires every column transform of ``idx`` to be zero-free. Returns
    ``(IndexParam, AnchorParam or None)``.
    """
    p = params.p
    ga, gb = column_transforms(idx, params)
    inv_a, inv_b = gf.hadamard_inv(ga, p), gf.hadamard_inv(gb, p)
    rp = IndexParam(gf.hadamard(t_idx.t_alpha, inv_a, p).T, gf.hadamard(t_idx.t_beta, inv_b, p).T)
    ap = None
    if t_idx.anchor_t is not None:
        ap = AnchorParam(
            gf.hadamard(t_idx.anchor_t[0], inv_a[0], p),
            gf.hadamard(t_idx.anchor_t[1], inv_b[0], p),
        )
    return rp, ap


@dataclass(frozen=True)
class AuditRow:
    scenario: str
    data: str
    unknowns: int
    equations: int

    @property
    def underdetermined(self) -> bool:
        return self.unknowns > self.equations


def equation_counts():
    """Symbolic unknown/equation counts an attacker holding all protected data faces."""
    N, h, w, k = sympy.symbols("N h w k", positive=True, integer=True)
    return (N, h, w, k), {
        ("individual", "templates"): ((N + 1) * h * w, N * h * w),
        ("individual", "indexes"): ((N * k + k) * (h + w), (N * k + k - 1) * (h + w)),
        ("common", "templates"): ((N + 2) * h * w, (N + 1) * h * w),
        ("common", "indexes"): ((N * k + 2 * k + 1) * (h + w), (N * k + 2 * k) * (h + w)),
    }


def equation_audit(N: int, h: int, w: int, k: int) -> list[AuditRow]:
    (sN, sh, sw, sk), table = equation_counts()
    subs = {sN: N, sh: h, sw: w, sk: k}
    return [
        AuditRow(scenario, data, int(u.subs(subs)), int(e.subs(subs)))
        for (scenario, data), (u, e) in table.items()
    ]
