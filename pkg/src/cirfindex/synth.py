"""Synthetic vein-like binary corpus and its on-disk format.

File layout (little-endian)::

    offset  size  field
    0       6     magic b"CIRFDS"
    6       2     format version (1)
    8       2     h
    10      2     w
    12      2     pad_i
    14      2     pad_j
    16      4     subjects
    20      1     fingers per subject
    21      1     samples per finger
    22      2     reserved (0)
    24      8     generator seed
    32      ...   images, subject-major then finger then sample; each image is
                  ceil(h*w/8) bytes, row-major pixels packed MSB-first

Sample 0 of every finger is the enrollment image and sample 1 the query.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cirf import BioImage, ShiftWindow
from .exceptions import CorruptHeader, FormatVersionMismatch

MAGIC = b"CIRFDS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<6sHHHHHIBBHQ")


@dataclass(frozen=True)
class CorpusSpec:
    subjects: int = 200
    fingers_per_subject: int = 2
    samples_per_finger: int = 2
    h: int = 32
    w: int = 64
    pad_i: int = 6
    pad_j: int = 12
    curve_count: tuple[int, int] = (3, 5)
    curve_thickness: tuple[int, int] = (2, 3)
    curve_length: tuple[float, float] = (0.4, 1.0)
    curve_drift: float = 0.5
    pixel_flip_noise: float = 0.02
    genuine_shift_range: tuple[int, int] = (2, 4)
    seed: int = 0

    def __post_init__(self):
        si, sj = self.genuine_shift_range
        if not (0 <= si <= self.pad_i and 0 <= sj <= self.pad_j):
            raise ValueError(
                f"genuine shift {self.genuine_shift_range} exceeds the matching window "
                f"({self.pad_i}, {self.pad_j})"
            )
        if self.subjects < 1 or self.fingers_per_subject < 1 or self.samples_per_finger < 1:
            raise ValueError("corpus counts must be positive")
        if not 0.0 <= self.pixel_flip_noise <= 1.0:
            raise ValueError("pixel_flip_noise must be a probability")

    @property
    def window(self) -> ShiftWindow:
        return ShiftWindow(self.pad_i, self.pad_j)


@dataclass(eq=False)
class Dataset:
    """Binary images indexed ``[subject, finger, sample, i, j]``."""

    images: np.ndarray
    pad_i: int = 6
    pad_j: int = 12
    seed: int = 0
    spec: CorpusSpec | None = field(default=None, compare=False)

    @property
    def subjects(self) -> int:
        return self.images.shape[0]

    @property
    def fingers(self) -> int:
        return self.images.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.images.shape[-2:]

    def enrollment_image(self, subject: int, finger: int) -> BioImage:
        return zero_pad(self.images[subject, finger, 0], ShiftWindow(self.pad_i, self.pad_j))

    def query_image(self, subject: int, finger: int, sample: int = 1) -> np.ndarray:
        return self.images[subject, finger, sample].astype(np.int64)


def zero_pad(image, win: ShiftWindow) -> BioImage:
    """Zero the outer ``di_max`` rows and ``dj_max`` columns on every side."""
    px = np.array(image.pixels if isinstance(image, BioImage) else image, dtype=np.int64)
    h, w = px.shape
    if 2 * win.di_max > h or 2 * win.dj_max > w:
        raise ValueError(f"margins {tuple(win)} exceed a {h}x{w} image")
    px[: win.di_max] = 0
    px[h - win.di_max :] = 0
    px[:, : win.dj_max] = 0
    px[:, w - win.dj_max :] = 0
    return BioImage(px, win.di_max, win.dj_max)


def _bezier(ctrl: np.ndarray, n: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    return (
        (1 - t) ** 3 * ctrl[0]
        + 3 * (1 - t) ** 2 * t * ctrl[1]
        + 3 * (1 - t) * t**2 * ctrl[2]
        + t**3 * ctrl[3]
    )


def vein_image(spec: CorpusSpec, rng: np.random.Generator) -> np.ndarray:
    """Rasterize a few nearly horizontal cubic strokes.

    Strokes are clipped to the region that survives enrollment padding, so
    the enrolled and query samples share their features. Each stroke covers a
    random fraction of that region's width and wanders vertically by at most
    ``curve_drift`` pixels around its starting row.
    """
    h, w = spec.h, spec.w
    img = np.zeros((h, w), dtype=np.uint8)
    lo, hi = spec.curve_count
    t_lo, t_hi = spec.curve_thickness
    for _ in range(rng.integers(lo, hi + 1)):
        span = w - 2 * spec.pad_j
        length = rng.uniform(*spec.curve_length) * span
        x0 = rng.uniform(spec.pad_j, spec.pad_j + span - length)
        xs = np.sort(rng.uniform(x0, x0 + length, size=2))
        thickness = int(rng.integers(t_lo, t_hi + 1))
        y0 = rng.uniform(spec.pad_i, max(spec.pad_i, h - spec.pad_i - thickness))
        ys = y0 + rng.uniform(-spec.curve_drift, spec.curve_drift, size=4)
        ctrl = np.column_stack([[x0, xs[0], xs[1], x0 + length], ys])
        pts = np.rint(_bezier(ctrl, 4 * w)).astype(int)
        for dy in range(thickness):
            rows = pts[:, 1] + dy
            cols = pts[:, 0]
            ok = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
            img[rows[ok], cols[ok]] = 1
    # rounding can push a stroke edge one pixel into the margin
    img[: spec.pad_i] = 0
    img[h - spec.pad_i :] = 0
    img[:, : spec.pad_j] = 0
    img[:, w - spec.pad_j :] = 0
    return img


def generate_corpus(spec: CorpusSpec) -> Dataset:
    """Deterministic corpus; each subject draws from its own ``(seed, subject)`` stream."""
    S, F, M = spec.subjects, spec.fingers_per_subject, spec.samples_per_finger
    images = np.zeros((S, F, M, spec.h, spec.w), dtype=np.uint8)
    si, sj = spec.genuine_shift_range
    for s in range(S):
        rng = np.random.default_rng([spec.seed, s])
        for f in range(F):
            base = vein_image(spec, rng)
            images[s, f, 0] = base
            for m in range(1, M):
                shift = (int(rng.integers(-si, si + 1)), int(rng.integers(-sj, sj + 1)))
                sample = np.roll(base, shift, axis=(0, 1))
                flips = rng.random(base.shape) < spec.pixel_flip_noise
                images[s, f, m] = sample ^ flips
    return Dataset(images, spec.pad_i, spec.pad_j, spec.seed, spec)


def image_bytes(h: int, w: int) -> int:
    return -(-h * w // 8)


def save_dataset(ds: Dataset, path) -> None:
    S, F, M, h, w = ds.images.shape
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, h, w, ds.pad_i, ds.pad_j, S, F, M, 0, ds.seed)
    bits = np.packbits(ds.images.reshape(S * F * M, h * w).astype(np.uint8), axis=1, bitorder="big")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(bits.tobytes())


def load_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CorruptHeader(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, version, h, w, pad_i, pad_j, S, F, M, _, seed = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CorruptHeader(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if min(h, w, S, F, M) == 0:
        raise CorruptHeader(f"{path}: header declares an empty corpus")
    per = image_bytes(h, w)
    expected = _HEADER.size + S * F * M * per
    if len(raw) != expected:
        raise CorruptHeader(f"{path}: header implies {expected} bytes, file has {len(raw)}")
    bits = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size).reshape(S * F * M, per)
    px = np.unpackbits(bits, axis=1, count=h * w, bitorder="big")
    return Dataset(px.reshape(S, F, M, h, w), pad_i, pad_j, seed)
