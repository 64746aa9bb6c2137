"""Straight-line reference transcription of the WTConv forward pass.

Written independently of :mod:`wtconv.conv_ops` and :mod:`wtconv.wavelet`:
convolutions use sliding windows plus ``einsum``, the transform works on
reshaped 2x2 blocks, and the Haar kernels are spelled out again below.  It
is slow and memory hungry by design and only meant to check the fast path,
e.g. by materializing the layer as a dense matrix.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_HAAR = 0.5 * np.array([
    [[1, 1], [1, 1]],
    [[1, -1], [1, -1]],
    [[1, 1], [-1, -1]],
    [[1, -1], [-1, 1]],
], dtype=np.float64)


def conv_same(x, w):
    k = w.shape[-1]
    r = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (r, r), (r, r)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    return np.einsum("ncyxuv,cuv->ncyx", win, w)


def haar_split(x, kernels=_HAAR):
    n, c, h, w = x.shape
    blocks = x.reshape(n, c, h // 2, 2, w // 2, 2)
    bands = np.einsum("ncyaxb,fab->fncyx", blocks, kernels)
    return list(bands)


def haar_merge(bands, kernels=_HAAR):
    stacked = np.stack(bands)
    f, n, c, h, w = stacked.shape
    blocks = np.einsum("fncyx,fab->ncyaxb", stacked, kernels)
    return blocks.reshape(n, c, 2 * h, 2 * w)


def forward(x, w0, scale0, w_levels, scale_levels):
    """Direct transcription of the layer algorithm on float64 arrays."""
    c = x.shape[1]
    y0 = conv_same(x, w0) * scale0[None, :, None, None]
    ys = []
    ll = x
    for w, s in zip(w_levels, scale_levels):
        bands = haar_split(ll)
        y = conv_same(np.concatenate(bands, axis=1), w) * s[None, :, None, None]
        ys.append([y[:, j * c:(j + 1) * c] for j in range(4)])
        ll = bands[0]
    z = 0
    for y in reversed(ys):
        z = haar_merge([y[0] + z, y[1], y[2], y[3]])
    return y0 + z


def dense_operator(params, h, w):
    """Matrix ``M`` with ``M @ x.ravel() == layer(x).ravel()`` for one image of shape (c, h, w)."""
    c = params.c
    dim = c * h * w
    basis = np.eye(dim).reshape(dim, c, h, w)
    arrays = [a.astype(np.float64) for a in (params.w0, params.scale0)]
    cols = forward(basis, arrays[0], arrays[1],
                   [a.astype(np.float64) for a in params.w_levels],
                   [a.astype(np.float64) for a in params.scale_levels])
    return cols.reshape(dim, dim).T


def conv_loops(x, w, stride, padding):
    """Quadruple-loop depth-wise correlation; tiny inputs only."""
    n, c, h, wd = x.shape
    _, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (wd + 2 * pw - kw) // sw + 1
    out = np.zeros((n, c, oh, ow))
    for b in range(n):
        for ch in range(c):
            for y in range(oh):
                for xx in range(ow):
                    acc = 0.0
                    for u in range(kh):
                        for v in range(kw):
                            iy = y * sh - ph + u
                            ix = xx * sw - pw + v
                            if 0 <= iy < h and 0 <= ix < wd:
                                acc += x[b, ch, iy, ix] * w[ch, u, v]
                    out[b, ch, y, xx] = acc
    return out
