"""Corpus-level evaluation: ranking quality, decisions, error rates and timings."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import identify as ident
from .cirf import APPROX_WINDOW, EXACT_WINDOW, ShiftWindow
from .gf import GFParams, InttCounter
from .synth import Dataset


@dataclass
class MetricsReport:
    hit_rate_curve: np.ndarray  # hit_rate_curve[n] = hit rate at N' = n
    ranks: np.ndarray
    avg_exact: float | None = None
    eer: float | None = None
    timing: dict[str, float] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)

    def hit_rate(self, n_prime: int) -> float:
        return float(self.hit_rate_curve[min(n_prime, len(self.hit_rate_curve) - 1)])


@dataclass
class Enrolled:
    db: ident.Database
    keys: ident.KeyStore
    ids: list[str]


def enroll_dataset(
    ds: Dataset,
    params: GFParams,
    k: int,
    scenario: str = "individual",
    subjects=None,
    seed: int = 0,
) -> Enrolled:
    """Enroll sample 0 of both fingers for each selected subject."""
    subjects = range(ds.subjects) if subjects is None else subjects
    db = ident.Database(params, k, scenario)
    keys = ident.KeyStore(params, k, scenario)
    rng = np.random.default_rng(seed)
    ids = []
    for s in subjects:
        ident.enroll(db, keys, f"subject-{s:05d}", ds.enrollment_image(s, 0), ds.enrollment_image(s, 1), rng)
        ids.append(f"subject-{s:05d}")
    return Enrolled(db, keys, ids)


def prepare_queries(ds: Dataset, params: GFParams, k: int, subjects=None, sample: int = 1):
    subjects = range(ds.subjects) if subjects is None else subjects
    return [ident.prepare_query(ds.query_image(s, 0, sample), ds.query_image(s, 1, sample), params, k) for s in subjects]


def approximate_orders(enr: Enrolled, queries, win: ShiftWindow = APPROX_WINDOW, threads: int = 1):
    return [ident.ranking(ident.approximate_scores(enr.db, enr.keys, q, win, threads=threads)) for q in queries]


def exhaustive_matrix(enr: Enrolled, queries, win: ShiftWindow = EXACT_WINDOW) -> np.ndarray:
    """Fused exact distances ``[query, record]``."""
    return np.stack([ident.exhaustive_scores(enr.db, enr.keys, None, None, win, prepared=q) for q in queries])


def ranking_report(orders, genuine_positions, n_records: int) -> MetricsReport:
    ranks = ident.genuine_ranks(orders, genuine_positions)
    return MetricsReport(ident.hit_rate_curve(ranks, n_records), ranks)


def genuine_impostor(scores: np.ndarray, genuine_positions) -> tuple[np.ndarray, np.ndarray]:
    """Genuine fused distance per query and the best impostor distance per query."""
    rows = np.arange(len(scores))
    g = scores[rows, genuine_positions]
    masked = scores.astype(float).copy()
    masked[rows, genuine_positions] = np.inf
    return g, masked.min(axis=1)


def time_scores(enr: Enrolled, queries, repeats: int = 3, warmup: int = 1) -> dict[str, float]:
    """Mean and median wall time per score, both kinds batched over the database.

    Each timing sample scores one query against every record; the per-score
    time is the batch time divided by the number of records.
    """
    N = len(enr.db)
    rows = np.arange(N)
    approx, exact = [], []
    for rep in range(warmup + repeats):
        for q in queries:
            t0 = time.perf_counter()
            ident.approximate_scores(enr.db, enr.keys, q)
            t1 = time.perf_counter()
            ident.exact_scores(enr.db, enr.keys, q, rows)
            t2 = time.perf_counter()
            if rep >= warmup:
                approx.append((t1 - t0) / N)
                exact.append((t2 - t1) / N)
    a, e = np.array(approx), np.array(exact)
    return {
        "approx_mean_s": float(a.mean()),
        "approx_median_s": float(np.median(a)),
        "exact_mean_s": float(e.mean()),
        "exact_median_s": float(np.median(e)),
        "exact_over_approx": float(e.mean() / a.mean()),
        "scores_timed": int(a.size * N),
    }


def count_inverse_transforms(enr: Enrolled, query, threshold: float) -> tuple[int, ident.IdentResult]:
    c = InttCounter()
    r = ident.identify(enr.db, enr.keys, None, None, threshold, counter=c, prepared=query)
    return c.count, r
