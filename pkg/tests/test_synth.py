import numpy as np
import pytest

from cirfindex import cirf, synth
from cirfindex.cirf import EXACT_WINDOW, ShiftWindow
from cirfindex.exceptions import CorruptHeader, FormatVersionMismatch
from cirfindex.synth import CorpusSpec


def test_corpus_shape_and_binary():
    ds = synth.generate_corpus(CorpusSpec(subjects=5))
    assert ds.images.shape == (5, 2, 2, 32, 64)
    assert set(np.unique(ds.images)) <= {0, 1}
    assert ds.subjects == 5 and ds.fingers == 2 and ds.shape == (32, 64)


def test_corpus_deterministic():
    a = synth.generate_corpus(CorpusSpec(subjects=6, seed=3))
    b = synth.generate_corpus(CorpusSpec(subjects=6, seed=3))
    c = synth.generate_corpus(CorpusSpec(subjects=6, seed=4))
    assert np.array_equal(a.images, b.images)
    assert not np.array_equal(a.images, c.images)


def test_subject_streams_independent_of_corpus_size():
    small = synth.generate_corpus(CorpusSpec(subjects=3, seed=1))
    large = synth.generate_corpus(CorpusSpec(subjects=8, seed=1))
    assert np.array_equal(small.images, large.images[:3])


def test_noise_free_unshifted_sample_is_identical():
    ds = synth.generate_corpus(CorpusSpec(subjects=3, pixel_flip_noise=0.0, genuine_shift_range=(0, 0)))
    assert np.array_equal(ds.images[:, :, 0], ds.images[:, :, 1])
    X = ds.enrollment_image(0, 0)
    assert cirf.brute_min_hamming(X, ds.query_image(0, 0), EXACT_WINDOW) == 0


def test_strokes_survive_padding():
    ds = synth.generate_corpus(CorpusSpec(subjects=20))
    for s in range(20):
        assert np.array_equal(ds.enrollment_image(s, 0).pixels, ds.images[s, 0, 0])


def test_impostor_overlap_near_density_squared():
    ds = synth.generate_corpus(CorpusSpec(subjects=60, seed=2))
    base = ds.images[:, 0, 0].astype(np.int64)
    inner = base[:, 6:26, 12:52]
    # strokes live in the 20 x 40 interior, so density^2 applies there
    expected = inner.mean() ** 2 * inner[0].size / base[0].size
    impostor = np.mean([(base[i] * base[i + 1]).mean() for i in range(59)])
    assert 0.5 * expected < impostor < 1.6 * expected
    win = ShiftWindow(2, 4)
    best_gen = np.mean([cirf.brute_corr(base[s], ds.query_image(s, 0), win).max() for s in range(60)])
    best_imp = np.mean([cirf.brute_corr(base[s], ds.query_image(s + 1, 0), win).max() for s in range(59)])
    # the best shift inflates impostor overlap too; genuine still clearly dominates
    assert best_gen > 1.5 * best_imp


def test_shift_beyond_window_rejected():
    with pytest.raises(ValueError):
        CorpusSpec(genuine_shift_range=(7, 0))


def test_zero_pad():
    ones = np.ones((32, 64), int)
    padded = synth.zero_pad(ones, EXACT_WINDOW)
    assert padded.pixels.sum() == (32 - 12) * (64 - 24)
    assert synth.zero_pad(padded, EXACT_WINDOW) == padded


def test_padded_cyclic_equals_linear_correlation():
    rng = np.random.default_rng(0)
    X = synth.zero_pad((rng.random((32, 64)) < 0.3).astype(int), EXACT_WINDOW).pixels
    Y = (rng.random((32, 64)) < 0.3).astype(int)
    table = cirf.brute_corr(X, Y, EXACT_WINDOW)
    Yp = np.pad(Y, ((6, 6), (12, 12)))
    for di, dj in [(0, 0), (-6, 12), (3, -7), (6, -12)]:
        # linear: no wrap, Y treated as zero outside its frame
        linear = int((X * Yp[6 + di : 6 + di + 32, 12 + dj : 12 + dj + 64]).sum())
        assert table[di + 6, dj + 12] == linear


def test_dataset_round_trip_and_size(tmp_path):
    ds = synth.generate_corpus(CorpusSpec(subjects=100, seed=5))
    path = tmp_path / "c.cirfds"
    synth.save_dataset(ds, path)
    assert path.stat().st_size == synth._HEADER.size + 100 * 2 * 2 * (32 * 64 // 8)
    back = synth.load_dataset(path)
    assert np.array_equal(back.images, ds.images)
    assert (back.pad_i, back.pad_j, back.seed) == (6, 12, 5)


def test_dataset_truncated_and_version(tmp_path):
    ds = synth.generate_corpus(CorpusSpec(subjects=2))
    path = tmp_path / "c.cirfds"
    synth.save_dataset(ds, path)
    raw = path.read_bytes()
    (tmp_path / "short").write_bytes(raw[:10])
    with pytest.raises(CorruptHeader):
        synth.load_dataset(tmp_path / "short")
    (tmp_path / "cut").write_bytes(raw[:-1])
    with pytest.raises(CorruptHeader):
        synth.load_dataset(tmp_path / "cut")
    bumped = bytearray(raw)
    bumped[6] = 9
    (tmp_path / "ver").write_bytes(bytes(bumped))
    with pytest.raises(FormatVersionMismatch):
        synth.load_dataset(tmp_path / "ver")


def test_bit_order_msb_first(tmp_path):
    images = np.zeros((1, 1, 1, 8, 8), np.uint8)
    images[0, 0, 0, 0, 0] = 1
    synth.save_dataset(synth.Dataset(images, 0, 0, 0), tmp_path / "b")
    assert (tmp_path / "b").read_bytes()[synth._HEADER.size] == 0x80


def test_window_property():
    assert CorpusSpec().window == ShiftWindow(6, 12)
