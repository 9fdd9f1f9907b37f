"""Two-finger identification over a protected database.

The server holds only transformed templates and transformed indexes. The
client holds the random filters (:class:`KeyStore`). Identification ranks all
records by the fused approximate similarity, then walks that order computing
fused exact distances and accepts the first record below the threshold.
"""

from __future__ import annotations

import dataclasses
import struct
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import gf, index, lowrank
from .cirf import (
    APPROX_WINDOW,
    EXACT_WINDOW,
    BioImage,
    ShiftWindow,
    TemplateParam,
    TransformedTemplate,
    calibrate_index_map,
    flip,
    pixels_of,
    protect_template,
)
from .exceptions import (
    CorruptHeader,
    CorruptRecord,
    DitherExhausted,
    EmptyScores,
    FormatVersionMismatch,
    ScenarioMismatch,
    WidthOverflow,
)
from .gf import GFParams, InttCounter
from .index import AnchorParam, IndexParam, TransformedIndex
from .lowrank import FactorIndex

SCENARIOS = ("individual", "common")
FINGERS = 2


@dataclass(frozen=True)
class FingerRecord:
    template: TransformedTemplate
    index: TransformedIndex


@dataclass(frozen=True)
class EnrollRecord:
    """What the server stores for one enrollee."""

    enrollee_id: str
    fingers: tuple[FingerRecord, ...]
    anchor: bool = False


@dataclass(frozen=True)
class FingerKeys:
    template: TemplateParam
    index: IndexParam


@dataclass
class KeyStore:
    """Client-held filters.

    In the individual scenario ``records[n]`` holds fresh filters for record
    ``n``; in the common scenario every entry is the same object.
    """

    params: GFParams
    k: int
    scenario: str = "individual"
    anchor: tuple[AnchorParam, ...] | None = None
    records: list[tuple[FingerKeys, ...]] = field(default_factory=list)
    _stack_cache: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")

    def draw_record(self, rng: np.random.Generator) -> tuple[FingerKeys, ...]:
        if self.anchor is None:
            self.anchor = tuple(AnchorParam.draw(self.params, rng) for _ in range(FINGERS))
        if self.scenario == "common" and self.records:
            keys = self.records[0]
        else:
            keys = tuple(
                FingerKeys(TemplateParam.draw(self.params, rng), IndexParam.draw(self.params, self.k, rng))
                for _ in range(FINGERS)
            )
        self.records.append(keys)
        self._stack_cache = None
        return keys

    def inverse_stacks(self) -> dict:
        """Inverted filters stacked ``[record, finger, ...]``.

        The common scenario keeps a single leading entry that broadcasts.
        """
        if self._stack_cache is None:
            p = self.params.p
            recs = self.records[:1] if self.scenario == "common" else self.records

            def stack(get):
                return gf.hadamard_inv(np.array([[get(fk) for fk in r] for r in recs]), p)

            self._stack_cache = {
                "r1": stack(lambda fk: fk.template.r1),
                "r2": stack(lambda fk: fk.template.r2),
                "ra": np.swapaxes(stack(lambda fk: fk.index.r_alpha), -1, -2),
                "rb": np.swapaxes(stack(lambda fk: fk.index.r_beta), -1, -2),
                "anchor_a": gf.hadamard_inv(np.array([a.r_prime_alpha for a in self.anchor]), p),
                "anchor_b": gf.hadamard_inv(np.array([a.r_prime_beta for a in self.anchor]), p),
            }
        return self._stack_cache

    def save(self, path) -> None:
        arrays = {
            "meta": np.array([self.params.p, self.params.alpha, self.params.beta, self.params.h,
                              self.params.w, self.k, SCENARIOS.index(self.scenario)]),
            "anchor_a": np.array([a.r_prime_alpha for a in self.anchor]),
            "anchor_b": np.array([a.r_prime_beta for a in self.anchor]),
        }
        recs = self.records[:1] if self.scenario == "common" else self.records
        for name, get in (
            ("r1", lambda fk: fk.template.r1),
            ("r2", lambda fk: fk.template.r2),
            ("ra", lambda fk: fk.index.r_alpha),
            ("rb", lambda fk: fk.index.r_beta),
        ):
            arrays[name] = np.array([[get(fk) for fk in r] for r in recs])
        arrays["count"] = np.array(len(self.records))
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "KeyStore":
        with np.load(path) as z:
            p, alpha, beta, h, w, k, sc = (int(v) for v in z["meta"])
            ks = cls(gf.validate_params(p, alpha, beta, h, w), k, SCENARIOS[sc])
            ks.anchor = tuple(AnchorParam(a, b) for a, b in zip(z["anchor_a"], z["anchor_b"]))
            stored = [
                tuple(
                    FingerKeys(TemplateParam(z["r1"][n, f], z["r2"][n, f]), IndexParam(z["ra"][n, f], z["rb"][n, f]))
                    for f in range(FINGERS)
                )
                for n in range(len(z["r1"]))
            ]
            count = int(z["count"])
        ks.records = stored * count if ks.scenario == "common" else stored
        return ks


class Database:
    """Server-side store of protected records with stacked arrays for scoring."""

    def __init__(self, params: GFParams, k: int, scenario: str = "individual"):
        if scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
        self.params = params
        self.k = k
        self.scenario = scenario
        self.records: list[EnrollRecord] = []
        self._stacks: dict | None = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def anchor_position(self) -> int:
        for n, r in enumerate(self.records):
            if r.anchor:
                return n
        raise ValueError("no record carries the anchor flag")

    @property
    def has_anchor(self) -> bool:
        return any(r.anchor for r in self.records)

    def add(self, record: EnrollRecord) -> None:
        if record.anchor and self.has_anchor:
            raise ValueError("the database already has an anchor record")
        self.records.append(record)
        self._stacks = None

    def stacks(self) -> dict:
        """Record arrays stacked ``[record, finger, ...]`` (rebuilt after enrollment)."""
        if self._stacks is None:
            recs = self.records
            a = self.records[self.anchor_position]
            self._stacks = {
                "t": np.array([[f.template.t for f in r.fingers] for r in recs]),
                "t_bar": np.array([[f.template.t_bar for f in r.fingers] for r in recs]),
                "t_alpha": np.array([[f.index.t_alpha for f in r.fingers] for r in recs]),
                "t_beta": np.array([[f.index.t_beta for f in r.fingers] for r in recs]),
                "anchor_t": [f.index.anchor_t for f in a.fingers],
            }
        return self._stacks

    def index_pixel_count(self) -> int:
        return sum(f.index.pixel_count for r in self.records for f in r.fingers) // FINGERS

    def __eq__(self, other):
        if not isinstance(other, Database):
            return NotImplemented
        if (self.params, self.k, self.scenario, len(self)) != (other.params, other.k, other.scenario, len(other)):
            return False
        return all(_records_equal(a, b) for a, b in zip(self.records, other.records))

    __hash__ = None


def _records_equal(a: EnrollRecord, b: EnrollRecord) -> bool:
    if (a.enrollee_id, a.anchor, len(a.fingers)) != (b.enrollee_id, b.anchor, len(b.fingers)):
        return False
    for fa, fb in zip(a.fingers, b.fingers):
        pairs = [(fa.template.t, fb.template.t), (fa.template.t_bar, fb.template.t_bar),
                 (fa.index.t_alpha, fb.index.t_alpha), (fa.index.t_beta, fb.index.t_beta)]
        if (fa.index.anchor_t is None) != (fb.index.anchor_t is None):
            return False
        if fa.index.anchor_t is not None:
            pairs += list(zip(fa.index.anchor_t, fb.index.anchor_t))
        if not all(np.array_equal(x, y) for x, y in pairs):
            return False
    return True


# ---------------------------------------------------------------------------
# enrollment and query preparation


def _factor(image, k: int, params: GFParams, seed: int, dither: bool, budget: int = 16) -> FactorIndex:
    idx = lowrank.factorize(image, k, seed=seed)
    if dither:
        idx = lowrank.check_anchor(idx, params, budget, margin=True)[1]
    return idx


def enroll(
    db: Database,
    keys: KeyStore,
    enrollee_id: str,
    left_image,
    right_image,
    rng: np.random.Generator,
    seed: int = 0,
) -> EnrollRecord:
    """Protect and store both fingers of one enrollee.

    The first record becomes the anchor; its factor columns are dithered until
    their 1D transforms have no zero entry. If dithering fails, the record is
    stored as an ordinary one and the next enrollee tries again. Plaintext
    images and factors never leave this function.
    """
    if keys.scenario != db.scenario or keys.k != db.k or keys.params != db.params:
        raise ScenarioMismatch("key store and database configurations differ")
    if len(keys.records) != len(db):
        raise ValueError("key store and database are out of step")
    params, k = db.params, db.k
    images = [im if isinstance(im, BioImage) else BioImage(pixels_of(im)) for im in (left_image, right_image)]
    is_anchor = not db.has_anchor
    try:
        factors = [_factor(im, k, params, seed, dither=is_anchor) for im in images]
    except DitherExhausted:
        is_anchor = False
        factors = [_factor(im, k, params, seed, dither=False) for im in images]
    finger_keys = keys.draw_record(rng)
    fingers = []
    for f, (image, idx) in enumerate(zip(images, factors)):
        fk = finger_keys[f]
        fingers.append(
            FingerRecord(
                protect_template(image, fk.template, params),
                index.transform_index_enroll(idx, fk.index, keys.anchor[f], params, is_anchor),
            )
        )
    record = EnrollRecord(str(enrollee_id), tuple(fingers), is_anchor)
    db.add(record)
    return record


@dataclass(frozen=True)
class PreparedQuery:
    """Per-finger transforms of a query, computed once and reused for every record."""

    fy: np.ndarray  # (F, h, w)  F(flip Y)
    fy_bar: np.ndarray  # (F, h, w)  F(flip(1 - Y))
    ga: np.ndarray  # (F, k, h)  G(flip y_alpha_j)
    gb: np.ndarray  # (F, k, w)


def prepare_query(left_query, right_query, params: GFParams, k: int, seed: int = 0) -> PreparedQuery:
    fy, fy_bar, ga, gb = [], [], [], []
    for Y in (left_query, right_query):
        Y = pixels_of(Y)
        if not np.isin(Y, (0, 1)).all():
            raise ValueError("query images must be binary")
        # anchor edges divide by G(flip y_j), so query factors must be zero-free;
        # the repair pixel goes where padded enrolled images are zero
        idx = _factor(Y, k, params, seed, dither=k > 1)
        a, b = index.column_transforms(idx, params, flipped=True)
        ga.append(a)
        gb.append(b)
        fy.append(flip(Y))
        fy_bar.append(flip(1 - Y))
    F = gf.ntt2d(np.stack(fy + fy_bar), params)
    return PreparedQuery(F[:FINGERS], F[FINGERS:], np.stack(ga), np.stack(gb))


def _key_rows(stack: np.ndarray, rows) -> np.ndarray:
    return stack if stack.shape[0] == 1 else stack[rows]


def approximate_scores(
    db: Database,
    keys: KeyStore,
    q: PreparedQuery,
    win: ShiftWindow = APPROX_WINDOW,
    counter: InttCounter | None = None,
    threads: int = 1,
    per_finger: bool = False,
) -> np.ndarray:
    """Fused (summed over fingers) approximate similarity for every record."""
    params, p = db.params, db.params.p
    st = db.stacks()
    ks = keys.inverse_stacks()
    N = len(db)
    a = db.anchor_position
    edges = []
    for f in range(FINGERS):
        # anchor record's own diagonal and its v' vectors root the spanning tree
        ra = _key_rows(ks["ra"], [a])[0, f]
        rb = _key_rows(ks["rb"], [a])[0, f]
        diag_a = gf.hadamard(st["t_alpha"][a, f, 0], gf.hadamard(q.ga[f, 0], ra[0], p), p)
        diag_b = gf.hadamard(st["t_beta"][a, f, 0], gf.hadamard(q.gb[f, 0], rb[0], p), p)
        anchor_v = (
            gf.hadamard(q.ga[f, 1:], ks["anchor_a"][f], p),
            gf.hadamard(q.gb[f, 1:], ks["anchor_b"][f], p),
        )
        if db.k > 1:
            edges.append(index.anchor_edge_inverses(diag_a, diag_b, st["anchor_t"][f], anchor_v, p))
        else:
            edges.append(None)

    def score_chunk(rows: np.ndarray) -> np.ndarray:
        out = np.zeros((len(rows), FINGERS), dtype=np.int64)
        ra = _key_rows(ks["ra"], rows)
        rb = _key_rows(ks["rb"], rows)
        for f in range(FINGERS):
            v_alpha = gf.hadamard(q.ga[f], ra[:, f], p)
            v_beta = gf.hadamard(q.gb[f], rb[:, f], p)
            Pa, Pb = index.recover_product_arrays(
                st["t_alpha"][rows, f], st["t_beta"][rows, f], v_alpha, v_beta,
                0, None, None, p, edges=edges[f],
            )
            out[:, f] = index.windowed_M(Pa, Pb, win, params, counter).max(axis=(-2, -1))
        return out

    chunks = np.array_split(np.arange(N), max(1, min(threads, N)))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(score_chunk, chunks))
    else:
        parts = [score_chunk(c) for c in chunks]
    scores = np.concatenate(parts)
    return scores if per_finger else scores.sum(axis=1)


def exact_scores(
    db: Database,
    keys: KeyStore,
    q: PreparedQuery,
    rows,
    win: ShiftWindow = EXACT_WINDOW,
    counter: InttCounter | None = None,
    per_finger: bool = False,
) -> np.ndarray:
    """Fused minimum Hamming distances for the records in ``rows``.

    Two inverse 2D transforms per finger and record.
    """
    params, p = db.params, db.params.p
    rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
    st = db.stacks()
    ks = keys.inverse_stacks()
    v = gf.hadamard(q.fy, _key_rows(ks["r2"], rows), p)
    v_bar = gf.hadamard(q.fy_bar, _key_rows(ks["r1"], rows), p)
    prods = np.stack(
        np.broadcast_arrays(gf.hadamard(st["t_bar"][rows], v, p), gf.hadamard(st["t"][rows], v_bar, p)),
        axis=-3,
    )
    map_rows, map_cols = calibrate_index_map(params).window_coords(win)
    C = gf.intt2d_window(prods, params, map_rows[:, 0], map_cols[0, :], counter)
    per = (C[..., 0, :, :] + C[..., 1, :, :]).min(axis=(-2, -1))
    return per if per_finger else per.sum(axis=-1)


# ---------------------------------------------------------------------------
# identification


@dataclass(frozen=True)
class IdentResult:
    accepted: bool
    enrollee_id: str | None
    exact_computations: int
    visited_order: np.ndarray
    fused_exact_score: int | None
    approx_time: float = 0.0
    exact_time: float = 0.0

    @property
    def decision(self) -> str:
        return "accepted" if self.accepted else "rejected"


def ranking(approx: np.ndarray) -> np.ndarray:
    """Descending similarity; ties keep enrollment order."""
    return np.argsort(-np.asarray(approx), kind="stable")


def identify(
    db: Database,
    keys: KeyStore,
    left_query,
    right_query,
    threshold: float,
    approx_window: ShiftWindow = APPROX_WINDOW,
    exact_window: ShiftWindow = EXACT_WINDOW,
    counter: InttCounter | None = None,
    threads: int = 1,
    seed: int = 0,
    prepared: PreparedQuery | None = None,
) -> IdentResult:
    """Rank by fused approximate similarity, then verify in that order.

    Accepts the first record whose fused exact distance is below
    ``threshold``; rejects after every record has been checked.
    """
    if not db.records:
        raise ValueError("empty database")
    if keys.scenario != db.scenario or keys.k != db.k or keys.params != db.params:
        raise ScenarioMismatch(
            f"query keys ({keys.scenario}, k={keys.k}) do not match the database ({db.scenario}, k={db.k})"
        )
    t0 = time.perf_counter()
    q = prepared if prepared is not None else prepare_query(left_query, right_query, db.params, db.k, seed)
    order = ranking(approximate_scores(db, keys, q, approx_window, counter, threads))
    t1 = time.perf_counter()
    for n, rec in enumerate(order, start=1):
        score = int(exact_scores(db, keys, q, rec, exact_window, counter)[0])
        if score < threshold:
            return IdentResult(True, db.records[rec].enrollee_id, n, order, score, t1 - t0, time.perf_counter() - t1)
    return IdentResult(False, None, len(order), order, None, t1 - t0, time.perf_counter() - t1)


def exhaustive_scores(
    db: Database,
    keys: KeyStore,
    left_query,
    right_query,
    exact_window: ShiftWindow = EXACT_WINDOW,
    seed: int = 0,
    chunk: int = 256,
    prepared: PreparedQuery | None = None,
) -> np.ndarray:
    """Fused exact distance against every record, in enrollment order."""
    q = prepared if prepared is not None else prepare_query(left_query, right_query, db.params, db.k, seed)
    return np.concatenate(
        [exact_scores(db, keys, q, r, exact_window) for r in np.array_split(np.arange(len(db)), -(-len(db) // chunk))]
    )


def exhaustive_decision(scores: np.ndarray, threshold: float, ids: Sequence[str]):
    """Baseline without an index: best-scoring record, accepted if below ``threshold``."""
    best = int(np.argmin(scores))
    if scores[best] < threshold:
        return True, ids[best]
    return False, None


# ---------------------------------------------------------------------------
# metrics


def genuine_ranks(orders: Iterable[np.ndarray], genuine: Iterable[int]) -> np.ndarray:
    """1-based position of each query's genuine record in its visiting order."""
    return np.array([int(np.flatnonzero(o == g)[0]) + 1 for o, g in zip(orders, genuine)])


def hit_rate(ranks, n_prime: int) -> float:
    """Fraction of queries whose genuine record lies in the first ``n_prime`` candidates."""
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise EmptyScores("no queries")
    return float(np.mean(ranks <= n_prime))


def hit_rate_curve(ranks, n_max: int) -> np.ndarray:
    ranks = np.asarray(ranks)
    return np.array([np.mean(ranks <= n) for n in range(n_max + 1)])


def avg_exact_computations(results: Iterable[IdentResult]) -> float:
    """Mean ``exact_computations`` over accepted identifications."""
    counts = [r.exact_computations for r in results if r.accepted]
    if not counts:
        raise EmptyScores("no accepted identifications")
    return float(np.mean(counts))


def eer(genuine_scores, impostor_scores) -> float:
    """Equal error rate of distance scores (accept when ``score < t``).

    FAR and FRR are swept over the pooled scores; the crossing is linearly
    interpolated between neighbouring thresholds.
    """
    g = np.sort(np.asarray(genuine_scores, dtype=float))
    i = np.sort(np.asarray(impostor_scores, dtype=float))
    if g.size == 0 or i.size == 0:
        raise EmptyScores("eer needs genuine and impostor scores")
    t = np.unique(np.concatenate([g, i, [max(g[-1], i[-1]) + 1]]))
    far = np.searchsorted(i, t, side="left") / i.size
    frr = 1.0 - np.searchsorted(g, t, side="left") / g.size
    d = far - frr
    c = int(np.argmax(d >= 0))
    if d[c] == 0 or c == 0:
        return float(far[c])
    frac = -d[c - 1] / (d[c] - d[c - 1])
    far_x = far[c - 1] + frac * (far[c] - far[c - 1])
    frr_x = frr[c - 1] + frac * (frr[c] - frr[c - 1])
    return float((far_x + frr_x) / 2)


def payload_size(scenario: str, N: int, h: int, w: int, k: int, bytes_per_pixel: int = 2) -> int:
    """Bytes of filter material the client must hold."""
    if scenario == "individual":
        return (N * h * w + (N * k + k - 1) * (h + w)) * bytes_per_pixel
    if scenario == "common":
        return (h * w + (2 * k - 1) * (h + w)) * bytes_per_pixel
    raise ValueError(f"unknown scenario {scenario!r}")


# ---------------------------------------------------------------------------
# storage audit and persistence

_PLAINTEXT_TYPES = (BioImage, FactorIndex)


def plaintext_fields(obj, path: str = "record") -> list[str]:
    """Paths of any plaintext image or factor objects reachable from ``obj``."""
    if isinstance(obj, _PLAINTEXT_TYPES):
        return [path]
    found = []
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            found += plaintext_fields(getattr(obj, f.name), f"{path}.{f.name}")
    elif isinstance(obj, (tuple, list)):
        for n, item in enumerate(obj):
            found += plaintext_fields(item, f"{path}[{n}]")
    return found


DB_MAGIC = b"CIRFDB"
DB_VERSION = 1
_DB_HEADER = struct.Struct("<6sHIIIHHHBBI")
_ID_BYTES = 32

# Layout (little-endian):
#   header: magic, version u16, p u32, alpha u32, beta u32, h u16, w u16, k u16,
#           scenario u8 (0 individual, 1 common), reserved u8, N u32
#   N records of fixed size: enrollee id (32 bytes, UTF-8, NUL padded),
#           anchor flag u8, reserved u8, then per finger t, t_bar (h*w each),
#           t_alpha (k*h), t_beta (k*w), anchor t' (h + w, zero unless anchor),
#           all u16; finally CRC32 (u32) of the preceding record bytes.


def _record_pixels(params: GFParams, k: int) -> int:
    h, w = params.h, params.w
    return FINGERS * (2 * h * w + k * (h + w) + (h + w))


def record_size(params: GFParams, k: int) -> int:
    return _ID_BYTES + 2 + 2 * _record_pixels(params, k) + 4


def save_database(db: Database, path) -> None:
    params = db.params
    if params.p > 1 << 16:
        raise WidthOverflow(f"p = {params.p} does not fit 16-bit storage")
    h, w = params.h, params.w
    header = _DB_HEADER.pack(DB_MAGIC, DB_VERSION, params.p, params.alpha, params.beta, h, w, db.k,
                             SCENARIOS.index(db.scenario), 0, len(db))
    chunks = [header]
    for rec in db.records:
        ident = rec.enrollee_id.encode("utf-8")
        if len(ident) > _ID_BYTES:
            raise ValueError(f"enrollee id {rec.enrollee_id!r} longer than {_ID_BYTES} bytes")
        parts = []
        for f in rec.fingers:
            anchor = np.zeros(h + w, dtype=np.int64)
            if f.index.anchor_t is not None:
                anchor = np.concatenate(f.index.anchor_t)
            parts += [f.template.t.ravel(), f.template.t_bar.ravel(), f.index.t_alpha.ravel(),
                      f.index.t_beta.ravel(), anchor]
        body = ident.ljust(_ID_BYTES, b"\0") + bytes([int(rec.anchor), 0])
        body += np.concatenate(parts).astype("<u2").tobytes()
        chunks.append(body + struct.pack("<I", zlib.crc32(body)))
    Path(path).write_bytes(b"".join(chunks))


def load_database(path) -> Database:
    raw = Path(path).read_bytes()
    if len(raw) < _DB_HEADER.size:
        raise CorruptHeader(f"{path}: shorter than the database header")
    magic, version, p, alpha, beta, h, w, k, sc, _, N = _DB_HEADER.unpack_from(raw)
    if magic != DB_MAGIC:
        raise CorruptHeader(f"{path}: bad magic {magic!r}")
    if version != DB_VERSION:
        raise FormatVersionMismatch(f"{path}: database version {version}, expected {DB_VERSION}")
    if sc >= len(SCENARIOS):
        raise CorruptHeader(f"{path}: unknown scenario tag {sc}")
    try:
        params = gf.validate_params(p, alpha, beta, h, w)
    except (ValueError, ZeroDivisionError) as exc:
        raise CorruptHeader(f"{path}: invalid field parameters: {exc}") from None
    size = record_size(params, k)
    if len(raw) != _DB_HEADER.size + N * size:
        raise CorruptHeader(f"{path}: header implies {N} records of {size} bytes, file has {len(raw)} bytes")
    db = Database(params, k, SCENARIOS[sc])
    off = _DB_HEADER.size
    for n in range(N):
        body = raw[off : off + size - 4]
        (crc,) = struct.unpack_from("<I", raw, off + size - 4)
        off += size
        if zlib.crc32(body) != crc:
            raise CorruptRecord(f"{path}: record {n} fails its checksum", index=n)
        ident = body[:_ID_BYTES].rstrip(b"\0").decode("utf-8")
        anchor = bool(body[_ID_BYTES])
        px = np.frombuffer(body, dtype="<u2", offset=_ID_BYTES + 2).astype(np.int64)
        if np.any(px >= p):
            raise CorruptRecord(f"{path}: record {n} holds values outside the field", index=n)
        fingers, pos = [], 0

        def take(count, shape):
            nonlocal pos
            out = px[pos : pos + count].reshape(shape)
            pos += count
            return out

        for _ in range(FINGERS):
            t = take(h * w, (h, w))
            t_bar = take(h * w, (h, w))
            ta = take(k * h, (k, h))
            tb = take(k * w, (k, w))
            at = take(h + w, (h + w,))
            anchor_t = (at[:h], at[h:]) if anchor else None
            fingers.append(FingerRecord(TransformedTemplate(t, t_bar), TransformedIndex(ta, tb, anchor_t)))
        try:
            db.add(EnrollRecord(ident, tuple(fingers), anchor))
        except ValueError as exc:
            raise CorruptRecord(f"{path}: record {n}: {exc}", index=n) from None
    return db
