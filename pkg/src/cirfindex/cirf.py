"""Correlation-invariant random filtering of binary feature images.

A template ``X`` is protected as ``T = F(X) * R`` and a query ``Y`` as
``V = F(flip(Y)) * R^-1`` (pixel-wise products in the 2D transform domain).
The filters cancel in ``T * V``, so one inverse 2D transform yields the cyclic
cross-correlation of ``X`` and ``Y`` without either image being restored.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from . import gf
from .exceptions import ShapeMismatch, WindowTooLarge, ZeroFilterEntry
from .gf import GFParams, InttCounter


class ShiftWindow(NamedTuple):
    """Largest vertical/horizontal shift searched when matching."""

    di_max: int
    dj_max: int

    def check(self, h: int, w: int) -> "ShiftWindow":
        if not (0 <= self.di_max < h and 0 <= self.dj_max < w):
            raise WindowTooLarge(f"window {tuple(self)} does not fit a {h}x{w} image")
        return self

    @property
    def table_shape(self) -> tuple[int, int]:
        return (2 * self.di_max + 1, 2 * self.dj_max + 1)

    def shifts(self):
        """All ``(di, dj)`` pairs in row-major table order."""
        for di in range(-self.di_max, self.di_max + 1):
            for dj in range(-self.dj_max, self.dj_max + 1):
                yield di, dj


EXACT_WINDOW = ShiftWindow(6, 12)
APPROX_WINDOW = ShiftWindow(2, 4)


@dataclass(frozen=True, eq=False)
class BioImage:
    """A feature image with optional zeroed margins.

    When ``pad_i``/``pad_j`` are nonzero the top/bottom ``pad_i`` rows and the
    left/right ``pad_j`` columns must be zero; the remaining region is the
    interior.
    """

    pixels: np.ndarray
    pad_i: int = 0
    pad_j: int = 0

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.int64)
        if px.ndim != 2:
            raise ShapeMismatch(f"image must be 2D, got shape {px.shape}")
        h, w = px.shape
        if not (0 <= 2 * self.pad_i <= h and 0 <= 2 * self.pad_j <= w):
            raise ValueError(f"margins ({self.pad_i}, {self.pad_j}) exceed a {h}x{w} image")
        if self.padded and np.any(px[~self.interior_mask(px.shape)]):
            raise ValueError("padded image has nonzero margin pixels")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    @property
    def padded(self) -> bool:
        return self.pad_i > 0 or self.pad_j > 0

    def interior_mask(self, shape=None) -> np.ndarray:
        h, w = self.pixels.shape if shape is None else shape
        mask = np.zeros((h, w), dtype=bool)
        mask[self.pad_i : h - self.pad_i, self.pad_j : w - self.pad_j] = True
        return mask

    def complement(self) -> "BioImage":
        """Flip 0 and 1 inside the interior; margins stay zero."""
        _require_binary(self.pixels)
        out = np.where(self.interior_mask(), 1 - self.pixels, 0)
        return BioImage(out, self.pad_i, self.pad_j)

    def __eq__(self, other):
        if not isinstance(other, BioImage):
            return NotImplemented
        return (
            (self.pad_i, self.pad_j) == (other.pad_i, other.pad_j)
            and np.array_equal(self.pixels, other.pixels)
        )

    __hash__ = None


def pixels_of(image) -> np.ndarray:
    return image.pixels if isinstance(image, BioImage) else np.asarray(image, dtype=np.int64)


def _require_binary(px: np.ndarray):
    if not np.isin(px, (0, 1)).all():
        raise ValueError("image must be binary")


def flip(Y):
    """``out[i, j] = Y[h-1-i, w-1-j]``; keeps the :class:`BioImage` wrapper."""
    if isinstance(Y, BioImage):
        return BioImage(Y.pixels[::-1, ::-1], Y.pad_i, Y.pad_j)
    Y = np.asarray(Y)
    return Y[..., ::-1, ::-1]


# ---------------------------------------------------------------------------
# mapping between shifts and coordinates of the inverse-transform output


@dataclass(frozen=True)
class IndexMap:
    """Where shift ``(di, dj)`` lands in an ``h x w`` correlation matrix."""

    origin_i: int
    origin_j: int
    sign_i: int
    sign_j: int
    h: int
    w: int

    def coords(self, di, dj):
        return (
            (self.origin_i + self.sign_i * np.asarray(di)) % self.h,
            (self.origin_j + self.sign_j * np.asarray(dj)) % self.w,
        )

    def window_coords(self, win: ShiftWindow):
        win.check(self.h, self.w)
        di = np.arange(-win.di_max, win.di_max + 1)[:, None]
        dj = np.arange(-win.dj_max, win.dj_max + 1)[None, :]
        return self.coords(di, dj)

    def to_shift_table(self, C: np.ndarray) -> np.ndarray:
        """Rearrange a full matrix so entry ``[di % h, dj % w]`` holds shift ``(di, dj)``."""
        di = np.arange(self.h)[:, None]
        dj = np.arange(self.w)[None, :]
        rows, cols = self.coords(di, dj)
        return C[..., rows, cols]


def _locate_probe(params: GFParams, si: int, sj: int) -> tuple[int, int]:
    X = np.zeros(params.shape, dtype=np.int64)
    X[0, 0] = 1
    Y = np.zeros(params.shape, dtype=np.int64)
    Y[si % params.h, sj % params.w] = 1
    C = gf.intt2d(
        gf.hadamard(gf.ntt2d(X, params), gf.ntt2d(flip(Y), params), params.p),
        params,
        counter=InttCounter(),
    )
    hits = np.argwhere(C)
    assert len(hits) == 1 and C[tuple(hits[0])] == 1
    return int(hits[0][0]), int(hits[0][1])


@lru_cache(maxsize=32)
def calibrate_index_map(params: GFParams) -> IndexMap:
    """Derive the shift-to-coordinate map from delta-image probes.

    ``X`` = delta at the origin and ``Y`` = delta at ``(si, sj)`` correlate to
    a single 1 at shift ``(si, sj)``; locating that 1 after the transform path
    pins the origin and orientation of each axis.
    """
    oi, oj = _locate_probe(params, 0, 0)
    sign_i = sign_j = 1
    if params.h > 1:
        pi, _ = _locate_probe(params, 1, 0)
        sign_i = 1 if (pi - oi) % params.h == 1 else -1
    if params.w > 1:
        _, pj = _locate_probe(params, 0, 1)
        sign_j = 1 if (pj - oj) % params.w == 1 else -1
    return IndexMap(oi, oj, sign_i, sign_j, params.h, params.w)


# ---------------------------------------------------------------------------
# transforms and matching


def _check_filter(r, params: GFParams) -> np.ndarray:
    r = np.asarray(r, dtype=np.int64)
    if np.any(r % params.p == 0):
        raise ZeroFilterEntry("random filters must not contain zero entries")
    return r


def random_filter(params: GFParams, rng: np.random.Generator, shape=None) -> np.ndarray:
    return gf.random_nonzero(params.shape if shape is None else shape, params.p, rng)


def transform_template(X, r, params: GFParams) -> np.ndarray:
    """``T = F(X) * r``."""
    r = _check_filter(r, params)
    return gf.hadamard(gf.ntt2d(pixels_of(X), params), r, params.p)


def transform_query(Y, r, params: GFParams) -> np.ndarray:
    """``V = F(flip(Y)) * r^-1``."""
    r = _check_filter(r, params)
    return gf.hadamard(gf.ntt2d(flip(pixels_of(Y)), params), gf.hadamard_inv(r, params.p), params.p)


def match_correlation(T, V, params: GFParams, counter: InttCounter | None = None) -> np.ndarray:
    """Cyclic cross-correlation matrix recovered from a protected pair."""
    T = np.asarray(T)
    V = np.asarray(V)
    if T.shape[-2:] != params.shape or V.shape[-2:] != params.shape:
        raise ShapeMismatch(f"expected {params.shape} operands, got {T.shape} and {V.shape}")
    return gf.intt2d(gf.hadamard(T, V, params.p), params, counter)


def correlation_window(C, win: ShiftWindow, params: GFParams) -> np.ndarray:
    """Table of correlation values, ``table[di + di_max, dj + dj_max]``."""
    rows, cols = calibrate_index_map(params).window_coords(win)
    return np.asarray(C)[..., rows, cols]


def revoke(T, r_old, r_new, params: GFParams) -> np.ndarray:
    """Re-key a protected template: ``T * r_new * r_old^-1``."""
    p = params.p
    r_old = _check_filter(r_old, params)
    r_new = _check_filter(r_new, params)
    return gf.hadamard(gf.hadamard(T, r_new, p), gf.hadamard_inv(r_old, p), p)


# ---------------------------------------------------------------------------
# minimum Hamming distance over shifts


@dataclass(frozen=True)
class TemplateParam:
    """Independent filters for the template (``r1``) and its complement (``r2``)."""

    r1: np.ndarray
    r2: np.ndarray

    @classmethod
    def draw(cls, params: GFParams, rng: np.random.Generator) -> "TemplateParam":
        return cls(random_filter(params, rng), random_filter(params, rng))


@dataclass(frozen=True)
class TransformedTemplate:
    """``t = F(X) * r1`` and ``t_bar = F(complement(X)) * r2``.

    Fields may carry leading batch axes (one entry per enrolled record).
    """

    t: np.ndarray
    t_bar: np.ndarray


@dataclass(frozen=True)
class TransformedQuery:
    """``v = F(flip(Y)) * r2^-1`` and ``v_bar = F(flip(1 - Y)) * r1^-1``."""

    v: np.ndarray
    v_bar: np.ndarray


def protect_template(X: BioImage, param: TemplateParam, params: GFParams) -> TransformedTemplate:
    if not isinstance(X, BioImage):
        X = BioImage(X)
    _require_binary(X.pixels)
    return TransformedTemplate(
        t=transform_template(X, param.r1, params),
        t_bar=transform_template(X.complement(), param.r2, params),
    )


def protect_query(Y, param: TemplateParam, params: GFParams) -> TransformedQuery:
    """Protect a query; the complement spans the whole image."""
    Y = pixels_of(Y)
    _require_binary(Y)
    return TransformedQuery(
        v=transform_query(Y, param.r2, params),
        v_bar=transform_query(1 - Y, param.r1, params),
    )


def hamming_tables(
    template: TransformedTemplate,
    query: TransformedQuery,
    win: ShiftWindow,
    params: GFParams,
    counter: InttCounter | None = None,
) -> np.ndarray:
    """Mismatch counts per shift, using two inverse 2D transforms per pair."""
    if not isinstance(template, TransformedTemplate) or not isinstance(query, TransformedQuery):
        raise TypeError("expected a TransformedTemplate and a TransformedQuery")
    p = params.p
    # complement(X) against Y pairs r2 with r2^-1; X against complement(Y) pairs r1 with r1^-1
    prods = np.stack(
        np.broadcast_arrays(
            gf.hadamard(template.t_bar, query.v, p),
            gf.hadamard(template.t, query.v_bar, p),
        )
    )
    C = gf.intt2d(prods, params, counter)
    return correlation_window(C[0] + C[1], win, params)


def min_hamming_score(
    template: TransformedTemplate,
    query: TransformedQuery,
    win: ShiftWindow = EXACT_WINDOW,
    params: GFParams = gf.REFERENCE,
    counter: InttCounter | None = None,
):
    """Smallest overlap Hamming distance over the shift window.

    Returns an ``int`` for a single pair, or an array when the template
    and/or query carry batch axes.
    """
    scores = hamming_tables(template, query, win, params, counter).min(axis=(-2, -1))
    return int(scores) if scores.ndim == 0 else scores


# ---------------------------------------------------------------------------
# brute-force oracles


def brute_corr(X, Y, win: ShiftWindow) -> np.ndarray:
    """Cyclic cross-correlation evaluated directly from its definition."""
    X = pixels_of(X)
    Y = pixels_of(Y)
    h, w = X.shape
    win.check(h, w)
    table = np.zeros(win.table_shape, dtype=np.int64)
    for di, dj in win.shifts():
        shifted = np.roll(Y, (-di, -dj), axis=(0, 1))
        table[di + win.di_max, dj + win.dj_max] = int(np.sum(X * shifted))
    return table


def brute_corr_full(X, Y) -> np.ndarray:
    """All ``h*w`` shifts; ``out[di % h, dj % w]`` holds shift ``(di, dj)``."""
    X = pixels_of(X)
    Y = pixels_of(Y)
    h, w = X.shape
    out = np.empty((h, w), dtype=np.int64)
    for di in range(h):
        # A[j, l] = sum_i X[i, j] * Y[i + di, l]
        A = X.T @ np.roll(Y, -di, axis=0)
        A2 = np.concatenate([A, A], axis=1)
        # diagonals: B[j, dj] = A[j, (j + dj) % w]
        s0, s1 = A2.strides
        B = np.lib.stride_tricks.as_strided(A2, shape=(w, w), strides=(s0 + s1, s1))
        out[di] = B.sum(axis=0)
    return out


def brute_min_hamming(X, Y, win: ShiftWindow) -> int:
    """Fewest mismatching pixels between the interior of ``X`` and shifted ``Y``."""
    if not isinstance(X, BioImage):
        X = BioImage(X)
    Y = pixels_of(Y)
    h, w = X.shape
    win.check(h, w)
    mask = X.interior_mask()
    best = None
    for di, dj in win.shifts():
        shifted = np.roll(Y, (-di, -dj), axis=(0, 1))
        count = int(np.count_nonzero((X.pixels != shifted) & mask))
        best = count if best is None else min(best, count)
    return best
