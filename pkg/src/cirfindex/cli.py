"""Command-line entry point: ``cirfindex <command> [options]``.

Commands write CSV files into ``--out-dir`` (default: ``$CIRFINDEX_OUT`` or
the working directory). Every CSV row carries the configuration hash and
seed, so reruns differ only in wall-time columns.

CSV schemas (version 1):

* ``identify``: query, genuine_id, decision, enrollee_id, exact_computations,
  genuine_rank, fused_exact_score, approx_ms, exact_ms, config_hash, seed
* ``bench``: metric, value, config_hash, seed
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import bench, checks, gf, synth
from . import identify as ident
from .cirf import APPROX_WINDOW, EXACT_WINDOW, ShiftWindow
from .exceptions import CIRFError

CSV_VERSION = 1
OUT_ENV = "CIRFINDEX_OUT"


def _window(text: str) -> ShiftWindow:
    try:
        di, dj = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected DI,DJ, got {text!r}") from None
    return ShiftWindow(di, dj)


def _pair(text: str) -> tuple[int, int]:
    return tuple(_window(text))


def _add_field_args(ap: argparse.ArgumentParser):
    g = ap.add_argument_group("field and geometry")
    g.add_argument("--p", type=int, default=gf.REFERENCE.p, help="prime modulus (default %(default)s)")
    g.add_argument("--alpha", type=int, default=gf.REFERENCE.alpha, help="order-h root (default %(default)s)")
    g.add_argument("--beta", type=int, default=gf.REFERENCE.beta, help="order-w root (default %(default)s)")
    g.add_argument("--h", type=int, default=gf.REFERENCE.h, help="image height (default %(default)s)")
    g.add_argument("--w", type=int, default=gf.REFERENCE.w, help="image width (default %(default)s)")


def _add_match_args(ap: argparse.ArgumentParser):
    g = ap.add_argument_group("matching")
    g.add_argument("--k", type=int, default=2, help="index rank (default %(default)s)")
    g.add_argument("--scenario", choices=ident.SCENARIOS, default="individual",
                   help="filter scenario (default %(default)s)")
    g.add_argument("--approx-window", type=_window, default=APPROX_WINDOW, metavar="DI,DJ",
                   help="shift window of the approximate score (default 2,4)")
    g.add_argument("--exact-window", type=_window, default=EXACT_WINDOW, metavar="DI,DJ",
                   help="shift window of the exact score (default 6,12)")
    g.add_argument("--threshold", type=float, default=100.0,
                   help="accept when the fused exact distance is below this (default %(default)s)")


def _add_corpus_args(ap: argparse.ArgumentParser, subjects: int = 200):
    d = synth.CorpusSpec()
    g = ap.add_argument_group("synthetic corpus")
    g.add_argument("--subjects", type=int, default=subjects, help="number of subjects (default %(default)s)")
    g.add_argument("--pad", type=_pair, default=(d.pad_i, d.pad_j), metavar="PI,PJ",
                   help="enrollment zero margins (default 6,12)")
    g.add_argument("--curve-count", type=_pair, default=d.curve_count, metavar="LO,HI",
                   help="strokes per image (default 3,5)")
    g.add_argument("--curve-thickness", type=_pair, default=d.curve_thickness, metavar="LO,HI",
                   help="stroke thickness in pixels (default 2,3)")
    g.add_argument("--flip-noise", type=float, default=d.pixel_flip_noise,
                   help="per-pixel flip probability of the second sample (default %(default)s)")
    g.add_argument("--genuine-shift", type=_pair, default=d.genuine_shift_range, metavar="DI,DJ",
                   help="largest cyclic shift of the second sample (default 2,4)")


def _common(ap: argparse.ArgumentParser):
    ap.add_argument("--seed", type=int, default=0, help="master seed (default %(default)s)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for approximate scoring")
    ap.add_argument("--out-dir", type=Path, default=None,
                    help=f"output directory (default ${OUT_ENV} or the working directory)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cirfindex", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus file")
    _common(p)
    _add_field_args(p)
    _add_corpus_args(p)
    p.add_argument("--output", default="corpus.cirfds", help="dataset file name (default %(default)s)")

    p = sub.add_parser("enroll", help="enroll sample 0 of every subject")
    _common(p)
    _add_match_args(p)
    _add_field_args(p)
    p.add_argument("--dataset", type=Path, required=True, help="dataset file")
    p.add_argument("--db", default="enrolled.cirfdb", help="database file name (default %(default)s)")
    p.add_argument("--keys", default="keys.npz", help="client key file name (default %(default)s)")

    p = sub.add_parser("identify", help="identify sample 1 of every subject")
    _common(p)
    _add_match_args(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--db", type=Path, required=True)
    p.add_argument("--keys", type=Path, required=True)
    p.add_argument("--csv", default="identify.csv", help="output CSV name (default %(default)s)")

    p = sub.add_parser("bench", help="end-to-end metrics on a fresh synthetic corpus")
    _common(p)
    _add_match_args(p)
    _add_field_args(p)
    _add_corpus_args(p)
    p.add_argument("--timing-queries", type=int, default=4,
                   help="queries timed against the whole database (default %(default)s)")
    p.add_argument("--csv", default="bench.csv", help="output CSV name (default %(default)s)")

    p = sub.add_parser("verify", help="run the exact-equality self-checks")
    _common(p)
    _add_field_args(p)
    p.add_argument("--instances", type=int, default=100, help="random instances per check (default %(default)s)")
    p.add_argument("--k", type=int, nargs="+", default=[1, 2], help="index ranks to check (default 1 2)")
    p.add_argument("--db", type=Path, default=None, help="also check the integrity of this database file")

    p = sub.add_parser("secrecy-test", help="parameter uniqueness, uniformity, unlinkability and equation audit")
    _common(p)
    _add_field_args(p)
    p.add_argument("--instances", type=int, default=1000, help="bijection instances (default %(default)s)")
    p.add_argument("--samples", type=int, default=100_000, help="draws per uniformity test (default %(default)s)")
    p.add_argument("--significance", type=float, default=0.001, help="test level (default %(default)s)")
    p.add_argument("--k", type=int, default=2)
    return ap


# ---------------------------------------------------------------------------
# helpers

_PATH_KEYS = {"out_dir", "dataset", "db", "keys", "csv", "output", "threads", "command", "func"}


def config_hash(args: argparse.Namespace) -> str:
    """Hash of every option that can change non-timing output."""
    items = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(args).items() if k not in _PATH_KEYS}
    blob = json.dumps(items, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def out_dir(args) -> Path:
    d = args.out_dir or Path(os.environ.get(OUT_ENV, "."))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _resolve(args, name) -> Path:
    path = Path(name)
    return path if path.is_absolute() or path.parent != Path(".") else out_dir(args) / path


def _params(args) -> gf.GFParams:
    return gf.validate_params(args.p, args.alpha, args.beta, args.h, args.w, max_pixel=2)


def _corpus_spec(args) -> synth.CorpusSpec:
    return synth.CorpusSpec(
        subjects=args.subjects,
        h=args.h,
        w=args.w,
        pad_i=args.pad[0],
        pad_j=args.pad[1],
        curve_count=args.curve_count,
        curve_thickness=args.curve_thickness,
        pixel_flip_noise=args.flip_noise,
        genuine_shift_range=args.genuine_shift,
        seed=args.seed,
    )


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _report(results, stream=None) -> int:
    """Tab-separated ``PASS|FAIL``, check name and detail; returns the exit code."""
    stream = stream or sys.stdout
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}\t{r.name}\t{r.detail}", file=stream)
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> int:
    ds = synth.generate_corpus(_corpus_spec(args))
    path = _resolve(args, args.output)
    synth.save_dataset(ds, path)
    print(f"wrote {ds.subjects} subjects to {path}")
    return 0


def cmd_enroll(args) -> int:
    ds = synth.load_dataset(args.dataset)
    enr = bench.enroll_dataset(ds, _params(args), args.k, args.scenario, seed=args.seed)
    db_path, key_path = _resolve(args, args.db), _resolve(args, args.keys)
    ident.save_database(enr.db, db_path)
    enr.keys.save(key_path)
    print(f"enrolled {len(enr.db)} subjects into {db_path}; client keys in {key_path}")
    return 0


def cmd_identify(args) -> int:
    ds = synth.load_dataset(args.dataset)
    db = ident.load_database(args.db)
    keys = ident.KeyStore.load(args.keys)
    if db.k != args.k or db.scenario != args.scenario:
        raise ident.ScenarioMismatch(
            f"database holds k={db.k}, {db.scenario}; options ask for k={args.k}, {args.scenario}"
        )
    ids = {r.enrollee_id: n for n, r in enumerate(db.records)}
    h = config_hash(args)
    rows = []
    for s in range(ds.subjects):
        genuine = f"subject-{s:05d}"
        r = ident.identify(
            db, keys, ds.query_image(s, 0), ds.query_image(s, 1), args.threshold,
            args.approx_window, args.exact_window, threads=args.threads, seed=0,
        )
        rank = int(np.flatnonzero(r.visited_order == ids[genuine])[0]) + 1 if genuine in ids else ""
        rows.append([s, genuine, r.decision, r.enrollee_id or "", r.exact_computations, rank,
                     "" if r.fused_exact_score is None else r.fused_exact_score,
                     f"{r.approx_time * 1e3:.3f}", f"{r.exact_time * 1e3:.3f}", h, args.seed])
    path = _resolve(args, args.csv)
    _write_csv(path, ["query", "genuine_id", "decision", "enrollee_id", "exact_computations", "genuine_rank",
                      "fused_exact_score", "approx_ms", "exact_ms", "config_hash", "seed"], rows)
    accepted = sum(r[2] == "accepted" for r in rows)
    print(f"{accepted}/{len(rows)} accepted; results in {path}")
    return 0


def cmd_bench(args) -> int:
    params = _params(args)
    ds = synth.generate_corpus(_corpus_spec(args))
    t0 = time.perf_counter()
    enr = bench.enroll_dataset(ds, params, args.k, args.scenario, seed=args.seed)
    t_enroll = time.perf_counter() - t0
    queries = bench.prepare_queries(ds, params, args.k)
    N = len(enr.db)
    orders = bench.approximate_orders(enr, queries, args.approx_window, args.threads)
    report = bench.ranking_report(orders, np.arange(N), N)
    scores = bench.exhaustive_matrix(enr, queries, args.exact_window)
    genuine, impostor = bench.genuine_impostor(scores, np.arange(N))
    results = [
        ident.identify(enr.db, enr.keys, None, None, args.threshold, args.approx_window, args.exact_window,
                          threads=args.threads, prepared=q)
        for q in queries
    ]
    accepted = [r for r in results if r.accepted]
    counter_total, _ = bench.count_inverse_transforms(enr, queries[0], args.threshold)
    timing = bench.time_scores(enr, queries[: args.timing_queries])
    h = config_hash(args)
    metrics = [
        ("csv_version", CSV_VERSION),
        ("subjects", N),
        ("k", args.k),
        ("hit_rate_at_N_over_10", report.hit_rate(max(1, N // 10))),
        *[(f"hit_rate_at_{n}", report.hit_rate(n)) for n in sorted({1, 5, 10, max(1, N // 10), max(1, N // 4), N})],
        ("mean_genuine_rank", float(report.ranks.mean())),
        ("accepted", len(accepted)),
        ("avg_exact_computations", ident.avg_exact_computations(accepted) if accepted else float("nan")),
        ("eer", ident.eer(genuine, impostor)),
        ("genuine_distance_max", int(genuine.max())),
        ("impostor_best_distance_min", float(impostor.min())),
        ("intt_per_identification", counter_total),
        ("enroll_s", t_enroll),
        *timing.items(),
    ]
    path = _resolve(args, args.csv)
    _write_csv(path, ["metric", "value", "config_hash", "seed"], [[m, v, h, args.seed] for m, v in metrics])
    for m, v in metrics:
        print(f"{m}\t{v}")
    print(f"metrics in {path}")
    return 0


def cmd_verify(args) -> int:
    results = checks.verify_suite(_params(args), args.seed, args.instances, tuple(args.k))
    if args.db is not None:
        try:
            db = ident.load_database(args.db)
            results.append(checks.CheckResult("database-integrity", True, f"{len(db)} records intact"))
        except ident.CorruptRecord as exc:
            results.append(checks.CheckResult("database-integrity", False, f"record {exc.index}: {exc}"))
        except CIRFError as exc:
            results.append(checks.CheckResult("database-integrity", False, str(exc)))
    return _report(results)


def cmd_secrecy_test(args) -> int:
    params = _params(args)
    results = checks.secrecy_suite(params, args.seed, args.instances, args.samples, args.significance)
    code = _report(results)
    print("N\tscenario\tdata\tunknowns\tequations\tunderdetermined")
    for N, row in checks.audit_rows(params, args.k):
        print(f"{N}\t{row.scenario}\t{row.data}\t{row.unknowns}\t{row.equations}\t{row.underdetermined}")
        code |= not row.underdetermined
    return code


COMMANDS = {
    "gen-data": cmd_gen_data,
    "enroll": cmd_enroll,
    "identify": cmd_identify,
    "bench": cmd_bench,
    "verify": cmd_verify,
    "secrecy-test": cmd_secrecy_test,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (CIRFError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
