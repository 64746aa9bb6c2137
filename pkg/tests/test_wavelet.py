import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wtconv.conv_ops import depthwise_conv
from wtconv.tensor_core import ShapeError, inner, l2_norm, new_filled, random_uniform
from wtconv.wavelet import (
    HAAR,
    SubbandQuad,
    WaveletPyramid,
    wt_cascade,
    wt_cascade_inverse,
    wt_forward,
    wt_inverse,
)

# Haar kernels written out independently of the library bank
F = {
    "ll": [[1, 1], [1, 1]],
    "lh": [[1, -1], [1, -1]],
    "hl": [[1, 1], [-1, -1]],
    "hh": [[1, -1], [-1, 1]],
}


def loop_wt(x):
    """Quadruple loop applying the 2x2 kernels at stride 2."""
    n, c, h, w = x.shape
    out = {b: np.zeros((n, c, h // 2, w // 2)) for b in F}
    for b, f in F.items():
        for i in range(n):
            for ch in range(c):
                for y in range(h // 2):
                    for xx in range(w // 2):
                        acc = 0.0
                        for u in range(2):
                            for v in range(2):
                                acc += 0.5 * f[u][v] * x[i, ch, 2 * y + u, 2 * xx + v]
                        out[b][i, ch, y, xx] = acc
    return out


def random_quad(shape, seed):
    return SubbandQuad(*(random_uniform(*shape, -1, 1, seed + i) for i in range(4)))


class TestFilterBank:
    def test_values(self):
        assert np.array_equal(HAAR.ll, [[0.5, 0.5], [0.5, 0.5]])
        assert np.array_equal(HAAR.lh, [[0.5, -0.5], [0.5, -0.5]])
        assert np.array_equal(HAAR.hl, [[0.5, 0.5], [-0.5, -0.5]])
        assert np.array_equal(HAAR.hh, [[0.5, -0.5], [-0.5, 0.5]])

    def test_gram_is_identity_exactly(self):
        assert np.array_equal(HAAR.gram(), np.eye(4))


class TestForward:
    def test_constant(self):
        q = wt_forward(new_filled(1, 2, 4, 6, 3.0))
        assert np.all(q.ll == 6.0)
        for band in (q.lh, q.hl, q.hh):
            assert np.all(band == 0.0)

    def test_two_by_two(self):
        a, b, d, e = 1.0, 2.0, 4.0, 8.0
        q = wt_forward(np.array([[[[a, b], [d, e]]]]))
        assert q.ll.item() == (a + b + d + e) / 2
        assert q.lh.item() == (a - b + d - e) / 2
        assert q.hl.item() == (a + b - d - e) / 2
        assert q.hh.item() == (a - b - d + e) / 2

    def test_loop_oracle(self):
        x = random_uniform(1, 1, 8, 8, -1, 1, seed=7)
        q = wt_forward(x)
        expected = loop_wt(x)
        for b in F:
            np.testing.assert_allclose(getattr(q, b), expected[b], rtol=0, atol=1e-12)

    def test_butterfly_matches_convolution(self):
        x = random_uniform(2, 3, 8, 12, -1, 1, seed=8)
        slow, fast = wt_forward(x), wt_forward(x, fast=True)
        for a, b in zip(slow.bands(), fast.bands()):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)

    def test_is_strided_depthwise_conv(self):
        x = random_uniform(1, 3, 6, 6, -1, 1, seed=9)
        q = wt_forward(x)
        for name in F:
            k = np.broadcast_to(getattr(HAAR, name), (3, 2, 2)).copy()
            assert np.array_equal(getattr(q, name), depthwise_conv(x, k, stride=2, padding=0))

    @pytest.mark.parametrize("shape", [(1, 1, 3, 4), (1, 1, 4, 5)])
    def test_odd_rejected(self, shape):
        with pytest.raises(ShapeError):
            wt_forward(new_filled(*shape, 1.0))

    @given(st.integers(0, 2**31), st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=20, deadline=None)
    def test_linearity(self, seed, a, b):
        x = random_uniform(1, 2, 8, 8, -1, 1, seed)
        y = random_uniform(1, 2, 8, 8, -1, 1, seed + 1)
        lhs = wt_forward(a * x + b * y)
        rhs = wt_forward(x).scaled(a) + wt_forward(y).scaled(b)
        for u, v in zip(lhs.bands(), rhs.bands()):
            np.testing.assert_allclose(u, v, rtol=0, atol=1e-12)


class TestInverse:
    def test_perfect_reconstruction(self):
        x = random_uniform(2, 3, 10, 8, -1, 1, seed=1)
        assert np.max(np.abs(wt_inverse(wt_forward(x)) - x)) < 1e-12

    def test_ll_impulse(self):
        z = np.zeros((1, 1, 1, 1))
        out = wt_inverse(SubbandQuad(np.full((1, 1, 1, 1), 3.0), z, z, z))
        assert np.array_equal(out, np.full((1, 1, 2, 2), 1.5))

    def test_butterfly_matches_convolution(self):
        q = random_quad((2, 2, 4, 6), seed=30)
        np.testing.assert_allclose(wt_inverse(q), wt_inverse(q, fast=True), rtol=0, atol=1e-15)

    def test_adjoint(self):
        x = random_uniform(1, 2, 8, 8, -1, 1, seed=2)
        q = random_quad((1, 2, 4, 4), seed=3)
        lhs = sum(inner(a, b) for a, b in zip(wt_forward(x).bands(), q.bands()))
        rhs = inner(x, wt_inverse(q))
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            SubbandQuad(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 2)),
                        np.zeros((1, 1, 2, 3)), np.zeros((1, 1, 2, 2)))


class TestCascade:
    def test_single_level(self):
        x = random_uniform(1, 2, 8, 8, -1, 1, seed=4)
        p = wt_cascade(x, 1)
        assert len(p) == 1
        for a, b in zip(p[0].bands(), wt_forward(x).bands()):
            assert np.array_equal(a, b)

    def test_constant_three_levels(self):
        p = wt_cascade(new_filled(1, 1, 16, 16, 0.25), 3)
        assert len(p) == 3
        assert p[2].ll.shape == (1, 1, 2, 2)
        assert np.all(p[2].ll == 8 * 0.25)
        for q in p.levels:
            for band in (q.lh, q.hl, q.hh):
                assert np.all(band == 0)

    def test_recursion_uses_previous_ll(self):
        x = random_uniform(1, 1, 16, 16, -1, 1, seed=5)
        p = wt_cascade(x, 3)
        for prev, nxt in zip(p.levels, p.levels[1:]):
            for a, b in zip(wt_forward(prev.ll).bands(), nxt.bands()):
                assert np.array_equal(a, b)

    def test_divisibility_error_names_max_level(self):
        with pytest.raises(ShapeError, match="at most 2 levels"):
            wt_cascade(new_filled(1, 1, 12, 20, 1.0), 3)

    @pytest.mark.parametrize("levels", [1, 2, 3])
    def test_reconstruction(self, levels):
        x = random_uniform(1, 2, 16, 16, -1, 1, seed=10 + levels)
        assert np.max(np.abs(wt_cascade_inverse(wt_cascade(x, levels)) - x)) < 1e-12

    def test_zero_pyramid(self):
        x = new_filled(1, 1, 8, 8, 0.0)
        assert np.all(wt_cascade_inverse(wt_cascade(x, 2)) == 0)

    def test_inverse_linearity(self):
        p = wt_cascade(random_uniform(1, 2, 16, 16, -1, 1, seed=20), 2)
        q = wt_cascade(random_uniform(1, 2, 16, 16, -1, 1, seed=21), 2)
        lhs = wt_cascade_inverse(p + q)
        rhs = wt_cascade_inverse(p) + wt_cascade_inverse(q)
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)

    def test_malformed(self):
        q = random_quad((1, 1, 4, 4), 0)
        with pytest.raises(ShapeError):
            wt_cascade_inverse(WaveletPyramid([q, q]))

    @given(st.integers(1, 2), st.integers(1, 3), st.integers(1, 3), st.integers(1, 4),
           st.integers(1, 4), st.integers(0, 2**31))
    @settings(max_examples=30, deadline=None)
    def test_parseval_and_reconstruction(self, n, c, levels, mh, mw, seed):
        h, w = mh * 2**levels, mw * 2**levels
        x = random_uniform(n, c, h, w, -1, 1, seed)
        p = wt_cascade(x, levels)
        energy = sum(l2_norm(q.lh) ** 2 + l2_norm(q.hl) ** 2 + l2_norm(q.hh) ** 2 for q in p.levels)
        energy += l2_norm(p[-1].ll) ** 2
        assert energy == pytest.approx(l2_norm(x) ** 2, rel=1e-10)
        assert np.max(np.abs(wt_cascade_inverse(p) - x)) < 1e-12

    def test_reconstruction_float32(self):
        x = random_uniform(2, 3, 32, 32, -5, 5, seed=6, dtype=np.float32)
        err = np.max(np.abs(wt_cascade_inverse(wt_cascade(x, 3)) - x))
        assert err < 1e-5 * np.max(np.abs(x))
