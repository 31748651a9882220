import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from semlink import codec
from semlink.errors import ConfigError, DataError


def test_codebook_three_bits():
    cb = codec.make_codebook(-1, 1, 3)
    assert cb.step == pytest.approx(2 / 7, abs=1e-15)
    np.testing.assert_allclose(cb.levels, -1 + np.arange(8) * 2 / 7, atol=1e-15)
    assert cb.levels[0] == -1.0 and cb.levels[-1] == 1.0


def test_codebook_unit_spacing():
    cb = codec.make_codebook(0, 255, 8)
    assert cb.step == 1.0
    np.testing.assert_array_equal(cb.levels, np.arange(256.0))


def test_codebook_seven_bits():
    assert codec.make_codebook(-1, 1, 7).step == pytest.approx(2 / 127, rel=1e-15)


@pytest.mark.parametrize("args", [(1, 1, 3), (2, 1, 3), (0, 1, 0), (0, 1, 17), (0, np.inf, 4)])
def test_codebook_rejects_bad_config(args):
    with pytest.raises(ConfigError):
        codec.make_codebook(*args)


def test_quantize_half_open_cell():
    cb = codec.make_codebook(-1, 1, 3)
    vals, idx = codec.quantize(np.array([0.0]), cb)
    assert idx[0] == 4
    assert vals[0] == pytest.approx(1 / 7)


def test_quantize_clamps_out_of_range():
    cb = codec.make_codebook(-1, 1, 3)
    vals, _ = codec.quantize(np.array([1.5, -7.0]), cb)
    np.testing.assert_array_equal(vals, [1.0, -1.0])


def test_quantize_levels_are_fixed_points():
    for bits in (1, 3, 7, 12):
        cb = codec.make_codebook(-2.5, 3.0, bits)
        vals, idx = codec.quantize(cb.levels, cb)
        np.testing.assert_array_equal(idx, np.arange(cb.n_levels))
        np.testing.assert_array_equal(vals, cb.levels)


def test_quantize_rejects_nan():
    with pytest.raises(DataError):
        codec.quantize(np.array([0.0, np.nan]), codec.make_codebook(0, 1, 2))


def test_dequantize_ends_and_range():
    cb = codec.make_codebook(-1, 1, 3)
    assert codec.dequantize(0, cb) == -1.0
    assert codec.dequantize(7, cb) == 1.0
    with pytest.raises(DataError):
        codec.dequantize(np.array([8]), cb)
    with pytest.raises(DataError):
        codec.dequantize(np.array([-1]), cb)


floats = st.floats(-10, 10, allow_nan=False)
codebooks = st.builds(
    lambda lo, width, bits: codec.make_codebook(lo, lo + width, bits),
    st.floats(-5, 5), st.floats(0.01, 10), st.integers(1, 12))


@given(codebooks, hnp.arrays(np.float64, 20, elements=floats))
def test_quantizer_idempotent(cb, y):
    once, _ = codec.quantize(y, cb)
    twice, _ = codec.quantize(once, cb)
    np.testing.assert_array_equal(once, twice)


@given(codebooks, floats, floats)
def test_quantizer_monotone(cb, a, b):
    lo, hi = min(a, b), max(a, b)
    qa, _ = codec.quantize(np.array([lo]), cb)
    qb, _ = codec.quantize(np.array([hi]), cb)
    assert qa[0] <= qb[0]


@given(codebooks, hnp.arrays(np.float64, 20, elements=floats))
def test_quantizer_error_bound(cb, y):
    clamped = np.clip(y, cb.u_min, cb.u_max)
    q, idx = codec.quantize(y, cb)
    assert np.all(np.abs(q - clamped) <= cb.step / 2 * (1 + 1e-9))
    np.testing.assert_array_equal(codec.dequantize(idx, cb), q)


def test_identity_block_shapes_and_round_trip():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 256, size=(8, 8, 3)).astype(float)
    spec = codec.EncoderSpec("identity_block", block=2)
    y = codec.encode(x, spec)
    assert y.shape == (4, 4, 12)
    np.testing.assert_array_equal(codec.decode(y, spec), x)
    # feature (i, j) holds exactly the pixels of block (i, j)
    np.testing.assert_array_equal(y[1, 2].reshape(2, 2, 3), x[2:4, 4:6])


def test_identity_block_zero_image():
    spec = codec.EncoderSpec("identity_block", block=2)
    np.testing.assert_array_equal(codec.encode(np.zeros((4, 6, 3)), spec), np.zeros((2, 3, 12)))
    assert not codec.zero_image_feature(spec, (2, 3, 12)).any()


def test_identity_block_rejects_indivisible():
    with pytest.raises(ConfigError):
        codec.encode(np.zeros((5, 4, 3)), codec.EncoderSpec("identity_block", block=2))


def test_gaussian_source_degenerate_variance():
    m = np.arange(24.0).reshape(2, 3, 4)
    spec = codec.EncoderSpec("gaussian_source", shape=(2, 3, 4), mean=m, variances=0.0)
    np.testing.assert_array_equal(codec.encode(None, spec, seed=5), m)
    np.testing.assert_array_equal(codec.decode(m, spec), m)


def test_gaussian_source_seeded_and_correlated():
    spec = codec.EncoderSpec("gaussian_source", shape=(16, 16, 200), corr=0.9, std=2.0)
    a = codec.encode(None, spec, seed=1)
    np.testing.assert_array_equal(a, codec.encode(None, spec, seed=1))
    assert a.std() == pytest.approx(2.0, rel=0.05)
    lag1 = np.mean(a[1:] * a[:-1]) / np.mean(a * a)
    assert lag1 == pytest.approx(0.9, abs=0.02)


def test_tensor_file_round_trip(tmp_path):
    y = np.random.default_rng(2).standard_normal((3, 2, 4))
    path = tmp_path / "f.bin"
    codec.write_tensor(path, y)
    raw = path.read_bytes()
    assert raw[:12] == bytes([3, 0, 0, 0, 2, 0, 0, 0, 4, 0, 0, 0])
    assert len(raw) == 12 + 8 * y.size
    # row-major: element (0, 0, 1) follows (0, 0, 0)
    assert np.frombuffer(raw[20:28], "<f8")[0] == y[0, 0, 1]
    np.testing.assert_array_equal(codec.read_tensor(path), y)


def test_tensor_file_truncated():
    with pytest.raises(DataError):
        codec.tensor_from_bytes(b"\x01\x00\x00\x00\x01\x00\x00\x00\x01\x00\x00\x00\x00")


@settings(max_examples=25)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_identity_block_is_bijection(block, gw, gh, seed):
    x = np.random.default_rng(seed).integers(0, 256, (gw * block, gh * block, 3)).astype(float)
    spec = codec.EncoderSpec("identity_block", block=block)
    np.testing.assert_array_equal(codec.decode(codec.encode(x, spec), spec), x)
