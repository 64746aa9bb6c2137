"""2D Haar wavelet transform as stride-2 depth-wise convolution.

The forward transform correlates every channel with the four 2x2 kernels of
the filter bank at stride 2; the inverse is the matching transposed
convolution.  Because the Haar bank is orthonormal the inverse is both the
adjoint and the exact inverse of the forward transform.

Odd spatial extents are rejected instead of padded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conv_ops import depthwise_conv, depthwise_conv_transposed, record_macs
from .tensor_core import ShapeError, check_tensor

BANDS = ("ll", "lh", "hl", "hh")


@dataclass(frozen=True)
class HaarFilterBank:
    """Four 2x2 analysis kernels; synthesis uses the same kernels transposed."""

    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray

    def kernels(self) -> np.ndarray:
        return np.stack([self.ll, self.lh, self.hl, self.hh])

    def gram(self) -> np.ndarray:
        flat = self.kernels().reshape(4, -1)
        return flat @ flat.T

    def with_sign_flip(self, band="hh", pos=(0, 0)) -> "HaarFilterBank":
        """Copy of the bank with one entry negated (fault injection)."""
        kernels = {b: getattr(self, b).copy() for b in BANDS}
        kernels[band][pos] *= -1
        return HaarFilterBank(**kernels)


HAAR = HaarFilterBank(
    ll=0.5 * np.array([[1.0, 1.0], [1.0, 1.0]]),
    lh=0.5 * np.array([[1.0, -1.0], [1.0, -1.0]]),
    hl=0.5 * np.array([[1.0, 1.0], [-1.0, -1.0]]),
    hh=0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]]),
)


@dataclass
class SubbandQuad:
    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray

    def __post_init__(self):
        shapes = {getattr(self, b).shape for b in BANDS}
        dtypes = {getattr(self, b).dtype for b in BANDS}
        if len(shapes) != 1 or len(dtypes) != 1:
            raise ShapeError(f"subbands disagree in shape/dtype: {shapes}, {dtypes}")

    @property
    def shape(self):
        return self.ll.shape

    def bands(self):
        return [self.ll, self.lh, self.hl, self.hh]

    def __add__(self, other):
        return SubbandQuad(*(a + b for a, b in zip(self.bands(), other.bands())))

    def scaled(self, s):
        return SubbandQuad(*(b * s for b in self.bands()))

    def pack(self) -> np.ndarray:
        """Concatenate along channels in LL, LH, HL, HH block order."""
        return np.concatenate(self.bands(), axis=1)

    @classmethod
    def unpack(cls, packed) -> "SubbandQuad":
        c4 = packed.shape[1]
        if c4 % 4:
            raise ShapeError(f"packed tensor has {c4} channels, not a multiple of 4")
        c = c4 // 4
        return cls(*(np.ascontiguousarray(packed[:, i * c:(i + 1) * c]) for i in range(4)))


@dataclass
class WaveletPyramid:
    levels: list[SubbandQuad] = field(default_factory=list)

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i):
        return self.levels[i]

    def __add__(self, other):
        if len(self) != len(other):
            raise ShapeError("pyramids differ in depth")
        return WaveletPyramid([a + b for a, b in zip(self.levels, other.levels)])


def max_levels(h, w) -> int:
    """Largest level count for which ``2**levels`` divides both extents."""
    lv = 0
    while h % 2 == 0 and w % 2 == 0:
        h //= 2
        w //= 2
        lv += 1
    return lv


def _bank_kernel(f, c, dtype):
    return np.ascontiguousarray(np.broadcast_to(f.astype(dtype), (c, 2, 2)))


def wt_forward(x, bank=HAAR, *, fast=False) -> SubbandQuad:
    """One level of the 2D transform.

    ``fast=True`` uses the add/subtract butterfly instead of four strided
    convolutions.  The butterfly hard-codes the Haar bank and ignores ``bank``.
    """
    check_tensor(x, "input")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"wavelet transform needs even extents, got {h}x{w}")
    if fast:
        return _wt_butterfly(x)
    return SubbandQuad(*(
        depthwise_conv(x, _bank_kernel(f, c, x.dtype), stride=2, tag="wt")
        for f in bank.kernels()))


def _wt_butterfly(x):
    a = x[:, :, 0::2, 0::2]
    b = x[:, :, 0::2, 1::2]
    d = x[:, :, 1::2, 0::2]
    e = x[:, :, 1::2, 1::2]
    s0, d0 = a + b, a - b
    s1, d1 = d + e, d - e
    half = x.dtype.type(0.5)
    # 4 add/sub in the row pass, 4 in the column pass, 4 scalings per block
    record_macs("wt_fast", 12 * a.size)
    return SubbandQuad((s0 + s1) * half, (d0 + d1) * half, (s0 - s1) * half, (d0 - d1) * half)


def _iwt_butterfly(q):
    ll, lh, hl, hh = q.bands()
    s0, s1 = ll + hl, ll - hl
    d0, d1 = lh + hh, lh - hh
    n, c, h, w = ll.shape
    out = np.empty((n, c, 2 * h, 2 * w), dtype=ll.dtype)
    half = ll.dtype.type(0.5)
    out[:, :, 0::2, 0::2] = (s0 + d0) * half
    out[:, :, 0::2, 1::2] = (s0 - d0) * half
    out[:, :, 1::2, 0::2] = (s1 + d1) * half
    out[:, :, 1::2, 1::2] = (s1 - d1) * half
    record_macs("iwt_fast", 12 * ll.size)
    return out


def wt_inverse(q: SubbandQuad, bank=HAAR, *, fast=False) -> np.ndarray:
    """Transposed stride-2 convolution with the bank; doubles both extents.

    ``fast=True`` uses the Haar butterfly instead.
    """
    check_tensor(q.ll, "subband")
    if fast:
        return _iwt_butterfly(q)
    c = q.shape[1]
    out = None
    for f, band in zip(bank.kernels(), q.bands()):
        part = depthwise_conv_transposed(band, _bank_kernel(f, c, band.dtype), stride=2, tag="iwt")
        out = part if out is None else out + part
    return out


def wt_cascade(x, levels, bank=HAAR) -> WaveletPyramid:
    check_tensor(x, "input")
    if levels < 1:
        raise ShapeError(f"cascade needs at least one level, got {levels}")
    admissible = max_levels(*x.shape[2:])
    if levels > admissible:
        raise ShapeError(
            f"extents {x.shape[2]}x{x.shape[3]} allow at most {admissible} levels, "
            f"{levels} requested")
    pyramid = WaveletPyramid()
    ll = x
    for _ in range(levels):
        quad = wt_forward(ll, bank)
        pyramid.levels.append(quad)
        ll = quad.ll
    return pyramid


def wt_cascade_inverse(p: WaveletPyramid, bank=HAAR) -> np.ndarray:
    """Rebuild the input from the deepest LL band and every level's details.

    Intermediate LL bands are redundant and ignored.
    """
    if len(p) == 0:
        raise ShapeError("empty pyramid")
    for upper, lower in zip(p.levels, p.levels[1:]):
        n, c, h, w = upper.shape
        if lower.shape != (n, c, h // 2, w // 2) or h % 2 or w % 2:
            raise ShapeError(f"malformed pyramid: level shapes {upper.shape} -> {lower.shape}")
    ll = p.levels[-1].ll
    for quad in reversed(p.levels):
        ll = wt_inverse(SubbandQuad(ll, quad.lh, quad.hl, quad.hh), bank)
    return ll
