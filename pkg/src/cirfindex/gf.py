"""Exact arithmetic over Z_p and 1D/2D number theoretic transforms.

Transforms are evaluated as dense products with the Vandermonde matrix of the
root (the direct O(n^2) sum). A 2D transform applies the length-``h``
transform to every column and the length-``w`` transform to every row, so one
inverse 2D transform costs exactly ``h + w`` inverse 1D transforms. That cost
is tracked by :class:`InttCounter`.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import lru_cache
from math import gcd

import numpy as np
from sympy import factorint, isprime

from .exceptions import (
    CorrelationBoundViolation,
    DivisibilityViolation,
    LengthMismatch,
    NotPrime,
    OrderMismatch,
    ShapeMismatch,
    WidthOverflow,
    ZeroElement,
)

_FLOAT_EXACT = 2**53
_INT64_EXACT = 2**63


class InttCounter:
    """Thread-safe tally of 1D inverse transforms."""

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    @property
    def count(self) -> int:
        return self._count

    def add(self, n: int) -> None:
        if n < 0:
            raise ValueError("counter increments must be nonnegative")
        with self._lock:
            self._count += int(n)

    def reset(self) -> int:
        """Zero the counter and return the value it held."""
        with self._lock:
            old, self._count = self._count, 0
        return old

    def __repr__(self):
        return f"InttCounter(count={self._count})"


INTT_COUNTER = InttCounter()


def _counter(counter):
    return INTT_COUNTER if counter is None else counter


@dataclass(frozen=True)
class GFParams:
    """Field and geometry for the 2D transform.

    ``alpha`` has multiplicative order ``h`` and ``beta`` has order ``w``
    modulo the prime ``p``. Build instances through :func:`validate_params`
    or :func:`find_params`.
    """

    p: int
    alpha: int
    beta: int
    h: int
    w: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.h, self.w)

    def max_correlation(self, max_pixel: int = 1) -> int:
        return self.h * self.w * max_pixel * max_pixel


def _check_positive(**kwargs):
    for name, value in kwargs.items():
        if int(value) != value or value < 1:
            raise ValueError(f"{name} must be a positive integer, got {value!r}")


def has_order(a: int, n: int, p: int) -> bool:
    """True iff ``a`` has multiplicative order exactly ``n`` modulo ``p``."""
    a %= p
    if a == 0 or pow(a, n, p) != 1:
        return False
    return all(pow(a, n // q, p) != 1 for q in factorint(n))


def validate_params(p, alpha, beta, h, w, max_pixel=1) -> GFParams:
    """Check a field configuration and return it as :class:`GFParams`.

    ``max_pixel`` is the largest pixel value the configuration must support;
    ``p`` has to exceed ``h * w * max_pixel**2``.
    """
    _check_positive(p=p, alpha=alpha, beta=beta, h=h, w=w)
    p, alpha, beta, h, w = (int(v) for v in (p, alpha, beta, h, w))
    if not isprime(p):
        raise NotPrime(f"p={p} is not prime")
    if (p - 1) % h:
        raise DivisibilityViolation(f"h={h} does not divide p-1={p - 1}")
    if (p - 1) % w:
        raise DivisibilityViolation(f"w={w} does not divide p-1={p - 1}")
    if not has_order(alpha, h, p):
        raise OrderMismatch(f"alpha={alpha} does not have order h={h} mod {p}")
    if not has_order(beta, w, p):
        raise OrderMismatch(f"beta={beta} does not have order w={w} mod {p}")
    if max(h, w) * (p - 1) ** 2 >= _INT64_EXACT:
        raise WidthOverflow(f"p={p} too large for exact int64 accumulation")
    params = GFParams(p, alpha, beta, h, w)
    bound = params.max_correlation(max_pixel)
    if p <= bound:
        raise CorrelationBoundViolation(
            f"p={p} does not exceed the correlation bound {bound}"
        )
    return params


def primitive_root(p: int) -> int:
    if p == 2:
        return 1
    factors = list(factorint(p - 1))
    g = 2
    while any(pow(g, (p - 1) // q, p) == 1 for q in factors):
        g += 1
    return g


def find_params(h: int, w: int, correlation_bound: int) -> GFParams:
    """Smallest prime ``p > correlation_bound`` with ``lcm(h, w) | p - 1``."""
    _check_positive(h=h, w=w, correlation_bound=correlation_bound)
    step = h * w // gcd(h, w)
    p = (correlation_bound // step) * step + 1
    while p <= correlation_bound or not isprime(p):
        p += step
    g = primitive_root(p)
    alpha = pow(g, (p - 1) // h, p)
    beta = pow(g, (p - 1) // w, p)
    return GFParams(p, alpha, beta, h, w)


REFERENCE = validate_params(8641, 40, 948, 32, 64, max_pixel=2)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def to_field(x, p: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    # min/max are much cheaper than an integer mod over already-reduced data
    if x.size and 0 <= x.min() and x.max() < p:
        return x
    return np.mod(x, p)


def hadamard(a, b, p: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"cannot multiply shapes {a.shape} and {b.shape}") from None
    return (a * b) % p


@lru_cache(maxsize=8)
def _inverse_table(p: int) -> np.ndarray:
    table = np.zeros(p, dtype=np.int64)
    table[1:] = _powmod(np.arange(1, p, dtype=np.int64), p - 2, p)
    table.setflags(write=False)
    return table


def _powmod(a: np.ndarray, e: int, p: int) -> np.ndarray:
    result = np.ones_like(a)
    base = a % p
    while e:
        if e & 1:
            result = result * base % p
        base = base * base % p
        e >>= 1
    return result


def hadamard_inv(a, p: int) -> np.ndarray:
    """Elementwise multiplicative inverse; every entry must be nonzero."""
    a = to_field(a, p)
    if not np.all(a):
        raise ZeroElement(f"{int(np.count_nonzero(a == 0))} zero entries cannot be inverted")
    if p <= 1 << 20:
        return _inverse_table(p)[a]
    return _powmod(a, p - 2, p)


def random_nonzero(shape, p: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from (Z_p^*)^shape."""
    return rng.integers(1, p, size=shape, dtype=np.int64)


# ---------------------------------------------------------------------------
# transforms


@lru_cache(maxsize=64)
def _root_order(root: int, p: int) -> int:
    root %= p
    if root == 0:
        return 0
    for d in sorted(_divisors(p - 1)):
        if pow(root, d, p) == 1:
            return d
    return p - 1


def _divisors(n: int) -> list[int]:
    divs = [1]
    for q, e in factorint(n).items():
        divs = [d * q**i for d in divs for i in range(e + 1)]
    return divs


@lru_cache(maxsize=64)
def _vandermonde(root: int, n: int, p: int) -> np.ndarray:
    powers = np.empty(n, dtype=np.int64)
    acc = 1
    for i in range(n):
        powers[i] = acc
        acc = acc * root % p
    exponents = np.outer(np.arange(n), np.arange(n)) % n
    mat = powers[exponents]
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=64)
def _vandermonde_f(root: int, n: int, p: int) -> np.ndarray:
    mat = _vandermonde(root, n, p).astype(np.float64)
    mat.setflags(write=False)
    return mat


def _fmod(x: np.ndarray, p: int) -> np.ndarray:
    """Reduce exact nonnegative float integers mod p (np.mod on floats is slow)."""
    q = np.floor(x * (1.0 / p))
    x -= q * p
    # the reciprocal may misround q by one near multiples of p
    x[x < 0] += p
    x[x >= p] -= p
    return x.astype(np.int64)


def _matmod(a: np.ndarray, b: np.ndarray, inner: int, p: int) -> np.ndarray:
    """``a @ b mod p`` for operands already reduced mod p."""
    if inner * (p - 1) ** 2 < _FLOAT_EXACT:
        return _fmod(np.matmul(a.astype(np.float64, copy=False), b.astype(np.float64, copy=False)), p)
    return np.matmul(a.astype(np.int64, copy=False), b.astype(np.int64, copy=False)) % p


@dataclass(frozen=True)
class _Plan2D:
    fwd_cols: np.ndarray
    fwd_rows: np.ndarray
    inv_cols: np.ndarray  # carries the (h*w)^-1 scale
    inv_rows: np.ndarray
    single_pass: bool


@lru_cache(maxsize=16)
def _plan2d(params: GFParams) -> _Plan2D:
    p, h, w = params.p, params.h, params.w
    # both stages can share one float accumulation when the worst-case
    # unreduced value h*w*(p-1)^3 stays exactly representable
    single = h * w * (p - 1) ** 3 < _FLOAT_EXACT
    conv = (lambda m: m.astype(np.float64)) if h * (p - 1) ** 2 < _FLOAT_EXACT else (lambda m: m)
    return _Plan2D(
        conv(_vandermonde(params.alpha, h, p)),
        conv(_vandermonde(params.beta, w, p)),
        conv(_vandermonde(pow(params.alpha, -1, p), h, p) * pow(h * w, -1, p) % p),
        conv(_vandermonde(pow(params.beta, -1, p), w, p)),
        single,
    )


def _apply2d(X: np.ndarray, cols: np.ndarray, rows: np.ndarray, params: GFParams) -> np.ndarray:
    """``cols @ X @ rows mod p``: length-h transforms down columns, length-w along rows."""
    p = params.p
    if _plan2d(params).single_pass:
        return _fmod(np.matmul(np.matmul(cols, X.astype(np.float64)), rows), p)
    return _matmod(_matmod(cols, X, params.h, p), rows, params.w, p)


@lru_cache(maxsize=32)
def _inverse_matrix(root: int, n: int, p: int) -> np.ndarray:
    """Vandermonde matrix of ``root^-1`` scaled by ``n^-1``."""
    m = _vandermonde(pow(root, -1, p), n, p) * pow(n, -1, p) % p
    m.setflags(write=False)
    return m


def _check_root(root: int, n: int, p: int):
    if _root_order(int(root), p) != n:
        raise LengthMismatch(
            f"vector length {n} does not match the order {_root_order(int(root), p)} of root {root}"
        )


def ntt1d(v, root: int, p: int) -> np.ndarray:
    """Forward transform along the last axis: ``out[u] = sum_i root^(u*i) v[i]``."""
    v = to_field(v, p)
    n = v.shape[-1]
    _check_root(root, n, p)
    # the Vandermonde matrix is symmetric, so v @ W applies it per vector
    return _matmod(v, _vandermonde(int(root) % p, n, p), n, p)


def intt1d(v, root: int, p: int, counter: InttCounter | None = None) -> np.ndarray:
    """Inverse of :func:`ntt1d` along the last axis.

    Counts one inverse transform per vector in ``v``.
    """
    v = to_field(v, p)
    n = v.shape[-1]
    _check_root(root, n, p)
    out = _matmod(v, _inverse_matrix(int(root) % p, n, p), n, p)
    _counter(counter).add(v.size // n if n else 0)
    return out


def _check_shape(X: np.ndarray, params: GFParams):
    if X.ndim < 2 or X.shape[-2:] != params.shape:
        raise ShapeMismatch(f"expected trailing shape {params.shape}, got {X.shape}")


def ntt2d(X, params: GFParams) -> np.ndarray:
    """2D transform of an ``h x w`` matrix (or a stack of them)."""
    X = to_field(X, params.p)
    _check_shape(X, params)
    plan = _plan2d(params)
    return _apply2d(X, plan.fwd_cols, plan.fwd_rows, params)


def intt2d(T, params: GFParams, counter: InttCounter | None = None) -> np.ndarray:
    """Inverse 2D transform; counts ``h + w`` 1D inverses per matrix.

    The forward row-column transform with inverted roots, scaled by
    ``(h*w)^-1``.
    """
    p, h, w = params.p, params.h, params.w
    T = to_field(T, p)
    _check_shape(T, params)
    plan = _plan2d(params)
    out = _apply2d(T, plan.inv_cols, plan.inv_rows, params)
    _counter(counter).add((T.size // (h * w)) * (h + w))
    return out


def intt2d_window(T, params: GFParams, rows, cols, counter: InttCounter | None = None) -> np.ndarray:
    """``intt2d(T)[..., rows, :][..., cols]`` evaluating only those outputs.

    Counted like :func:`intt2d`: the same ``h + w`` 1D inverses per matrix,
    each evaluated at the requested positions only.
    """
    p, h, w = params.p, params.h, params.w
    T = to_field(T, p)
    _check_shape(T, params)
    plan = _plan2d(params)
    rows, cols = np.asarray(rows), np.asarray(cols)
    out = _apply2d(T, plan.inv_cols[rows], plan.inv_rows[:, cols], params)
    _counter(counter).add((T.size // (h * w)) * (h + w))
    return out
