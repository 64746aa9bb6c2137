import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wtconv.tensor_core import (
    ParameterError,
    ShapeError,
    add,
    dump_tensor,
    index,
    l2_norm,
    load_tensor,
    max_abs_diff,
    new_filled,
    random_uniform,
    scalar_mul,
    splitmix64,
)


class TestNewFilled:
    def test_zeros(self):
        t = new_filled(1, 1, 2, 2, 0.0)
        assert t.shape == (1, 1, 2, 2)
        assert np.all(t == 0.0)

    def test_single(self):
        t = new_filled(1, 1, 1, 1, 3.5)
        assert t.size == 1 and t[0, 0, 0, 0] == 3.5

    def test_ones_and_index(self):
        t = new_filled(2, 3, 4, 4, 1.0)
        assert t.size == 96
        assert t.ravel()[index(t.shape, 1, 2, 3, 3)] == 1.0

    @pytest.mark.parametrize("dims", [(0, 1, 1, 1), (1, 1, 0, 3), (1, -2, 1, 1), (2**16, 2**16, 2, 2)])
    def test_bad_dims(self, dims):
        with pytest.raises(ShapeError):
            new_filled(*dims, 0.0)

    def test_dtype(self):
        assert new_filled(1, 1, 1, 1, 1.0, dtype=32).dtype == np.float32
        with pytest.raises(ParameterError):
            new_filled(1, 1, 1, 1, 1.0, dtype=np.int32)


class TestRandomUniform:
    def test_splitmix_reference_value(self):
        # first output of the reference SplitMix64 generator seeded with 0
        assert int(splitmix64(0, 1)[0]) == 0xE220A8397B1DCDAF

    def test_deterministic(self):
        a = random_uniform(1, 2, 8, 8, -1, 1, seed=11)
        b = random_uniform(1, 2, 8, 8, -1, 1, seed=11)
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a, random_uniform(1, 2, 8, 8, -1, 1, seed=12))

    def test_range(self):
        t = random_uniform(1, 1, 8, 8, -1, 1, seed=42)
        assert t.size == 64
        assert np.all(t >= -1) and np.all(t < 1)

    def test_range_float32(self):
        t = random_uniform(1, 1, 64, 64, 0.0, 1.0, seed=5, dtype=np.float32)
        assert t.dtype == np.float32
        assert np.all(t >= 0) and np.all(t < 1)

    def test_mean(self):
        t = random_uniform(1, 1, 1000, 1000, 0.0, 1.0, seed=2024)
        assert abs(t.mean() - 0.5) < 0.01

    def test_bad_range(self):
        with pytest.raises(ParameterError):
            random_uniform(1, 1, 2, 2, 1.0, 1.0, seed=0)


class TestArithmetic:
    def test_identities(self):
        x = random_uniform(2, 3, 4, 5, -1, 1, seed=1)
        z = new_filled(2, 3, 4, 5, 0.0)
        assert np.array_equal(add(x, z), x)
        assert np.array_equal(scalar_mul(x, 0), z)
        assert max_abs_diff(x, x) == 0.0

    def test_shape_mismatch(self):
        a = new_filled(1, 1, 2, 2, 0.0)
        b = new_filled(1, 1, 2, 3, 0.0)
        with pytest.raises(ShapeError):
            add(a, b)
        with pytest.raises(ShapeError):
            max_abs_diff(a, b)

    def test_mixed_precision_rejected(self):
        a = new_filled(1, 1, 2, 2, 0.0)
        with pytest.raises(ShapeError):
            add(a, a.astype(np.float32))

    @given(st.integers(0, 2**32), st.integers(0, 2**32), st.integers(0, 2**32))
    @settings(max_examples=25, deadline=None)
    def test_add_commutative_associative_dyadic(self, s1, s2, s3):
        # multiples of 2**-10 in [-4, 4) add exactly in float64
        a, b, c = (np.round(random_uniform(1, 2, 3, 3, -4, 4, s) * 1024) / 1024 for s in (s1, s2, s3))
        assert np.array_equal(add(a, b), add(b, a))
        assert np.array_equal(add(add(a, b), c), add(a, add(b, c)))

    @given(st.integers(0, 2**32), st.floats(-1e3, 1e3, allow_nan=False))
    @settings(max_examples=25, deadline=None)
    def test_norm_homogeneous(self, seed, s):
        x = random_uniform(1, 2, 4, 4, -1, 1, seed)
        assert l2_norm(scalar_mul(x, s)) == pytest.approx(abs(s) * l2_norm(x), rel=1e-12, abs=1e-300)

    def test_l2_norm(self):
        x = new_filled(1, 1, 2, 2, 3.0)
        assert l2_norm(x) == 6.0

    def test_index_round_trip(self):
        t = new_filled(2, 3, 4, 5, 0.0)
        flat = t.reshape(-1)
        for n, c, y, x in [(0, 0, 0, 0), (1, 2, 3, 4), (1, 0, 2, 1)]:
            flat[index(t.shape, n, c, y, x)] = 7.0 + n + c + y + x
            assert t[n, c, y, x] == 7.0 + n + c + y + x


class TestDump:
    @pytest.mark.parametrize("dtype,suffix", [(np.float64, ".f64t"), (np.float32, ".f32t")])
    def test_round_trip(self, tmp_path, dtype, suffix):
        x = random_uniform(2, 3, 4, 5, -1, 1, seed=3, dtype=dtype)
        path = dump_tensor(x, tmp_path / "t")
        assert path.endswith(suffix)
        y = load_tensor(path)
        assert y.dtype == dtype and np.array_equal(x, y)

    def test_header_layout(self, tmp_path):
        x = new_filled(1, 2, 3, 4, 1.5)
        path = dump_tensor(x, tmp_path / "t.f64t")
        raw = open(path, "rb").read()
        assert raw[:16] == bytes([1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 4, 0, 0, 0])
        assert len(raw) == 16 + 24 * 8
        assert np.frombuffer(raw[16:24], "<f8")[0] == 1.5

    def test_truncated(self, tmp_path):
        x = new_filled(1, 1, 2, 2, 1.0)
        path = dump_tensor(x, tmp_path / "t.f64t")
        with open(path, "r+b") as fh:
            fh.truncate(20)
        with pytest.raises(ShapeError):
            load_tensor(path)

    def test_bad_suffix(self, tmp_path):
        with pytest.raises(ParameterError):
            load_tensor(tmp_path / "t.bin")
