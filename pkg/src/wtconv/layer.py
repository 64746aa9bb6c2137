"""The WTConv layer: depth-wise convolution in a cascaded Haar wavelet domain.

Forward pass for ``levels`` = L:

1. base path ``y0 = scale0 * conv(x, w0)``;
2. for each level, transform the previous LL band, pack the four subbands
   into ``4c`` channels (LL, LH, HL, HH blocks) and apply
   ``scale_i * conv(packed, w_i)``;
3. fold the levels back from the deepest one: ``z_i = IWT(y_i.ll + z_{i+1},
   y_i.lh, y_i.hl, y_i.hh)`` with ``z_{L+1} = 0``;
4. output ``y0 + z_1``.

Every convolution is stride 1 with zero "same" padding, so the output has the
input's shape.  The layer is linear in its input.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .conv_ops import channel_scale, depthwise_conv
from .tensor_core import ParameterError, ShapeError, check_tensor, resolve_dtype, uniform_stream
from .wavelet import HAAR, SubbandQuad, max_levels, wt_forward, wt_inverse

MAGIC = b"WTCV"
HEAD_TAG = b"HEAD"
FORMAT_VERSION = 1


@dataclass
class WTConvParams:
    c: int
    k: int
    levels: int
    w0: np.ndarray
    scale0: np.ndarray
    w_levels: list[np.ndarray] = field(default_factory=list)
    scale_levels: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.k < 1 or self.k % 2 == 0:
            raise ParameterError(f"kernel extent must be odd, got {self.k}")
        if self.levels < 0:
            raise ParameterError(f"level count must be >= 0, got {self.levels}")
        if len(self.w_levels) != self.levels or len(self.scale_levels) != self.levels:
            raise ShapeError(
                f"expected {self.levels} level kernels and scales, got "
                f"{len(self.w_levels)} and {len(self.scale_levels)}")
        c, k = self.c, self.k
        expected = [(self.w0, (c, k, k)), (self.scale0, (c,))]
        expected += [(w, (4 * c, k, k)) for w in self.w_levels]
        expected += [(s, (4 * c,)) for s in self.scale_levels]
        dtypes = set()
        for arr, shape in expected:
            if arr.shape != shape:
                raise ShapeError(f"parameter of shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ParameterError("parameters must be finite")
            dtypes.add(arr.dtype)
        if len(dtypes) != 1:
            raise ShapeError(f"parameters mix element types {sorted(map(str, dtypes))}")

    @property
    def dtype(self):
        return self.w0.dtype

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in serialization order."""
        return [self.w0, *self.w_levels, self.scale0, *self.scale_levels]

    def with_arrays(self, arrays) -> "WTConvParams":
        arrays = list(arrays)
        L = self.levels
        return WTConvParams(
            c=self.c, k=self.k, levels=L,
            w0=arrays[0], w_levels=arrays[1:1 + L],
            scale0=arrays[1 + L], scale_levels=arrays[2 + L:2 + 2 * L])

    def astype(self, dtype) -> "WTConvParams":
        dt = resolve_dtype(dtype)
        return self.with_arrays(a.astype(dt) for a in self.arrays())

    def copy(self) -> "WTConvParams":
        return self.with_arrays(a.copy() for a in self.arrays())


def init_params(c, k, levels, seed=0, scheme="uniform-fan-in", dtype=np.float64) -> WTConvParams:
    """Fresh parameters; all scales start at one.

    ``uniform-fan-in`` draws every kernel entry from ``U(-1/k, 1/k)`` (fan-in
    of a depth-wise k x k kernel is k**2).  Draws come from one SplitMix64
    stream consumed in serialization order.
    """
    if k < 1 or k % 2 == 0:
        raise ParameterError(f"kernel extent must be odd, got {k}")
    if levels < 0 or c < 1:
        raise ParameterError(f"invalid channel/level counts c={c}, levels={levels}")
    dt = resolve_dtype(dtype)
    shapes = [(c, k, k)] + [(4 * c, k, k)] * levels
    if scheme == "zeros":
        kernels = [np.zeros(s, dtype=dt) for s in shapes]
    elif scheme == "uniform-fan-in":
        bound = 1.0 / k
        sizes = [int(np.prod(s)) for s in shapes]
        draws = uniform_stream(seed, sum(sizes), -bound, bound)
        # reject the closed endpoint so entries stay inside (-1/k, 1/k)
        draws[draws == -bound] = 0.0
        kernels, start = [], 0
        for s, n in zip(shapes, sizes):
            kernels.append(draws[start:start + n].reshape(s).astype(dt))
            start += n
    else:
        raise ParameterError(f"unknown init scheme {scheme!r}")
    return WTConvParams(
        c=c, k=k, levels=levels,
        w0=kernels[0], w_levels=kernels[1:],
        scale0=np.ones(c, dtype=dt),
        scale_levels=[np.ones(4 * c, dtype=dt) for _ in range(levels)])


def identity_params(c, k, levels, dtype=np.float64) -> WTConvParams:
    """Delta kernels and unit scales.

    The base path passes ``x`` through and the first level reconstructs ``x``
    again, so ``levels=1`` gives ``2 * x``.  Each deeper level adds its LL
    band once more on top, because the aggregation feeds ``z_{i+1}`` into an
    LL slot that already carries the identity-convolved LL band.
    """
    p = init_params(c, k, levels, scheme="zeros", dtype=dtype)
    for w in [p.w0, *p.w_levels]:
        w[:, k // 2, k // 2] = 1
    return p


def passthrough_params(c, k, levels, dtype=np.float64) -> WTConvParams:
    """Delta kernels with the level scales set to zero, so the layer returns ``x`` exactly."""
    p = identity_params(c, k, levels, dtype=dtype)
    for s in p.scale_levels:
        s[:] = 0
    return p


def check_input(x, p: WTConvParams):
    check_tensor(x, "input")
    if x.shape[1] != p.c:
        raise ShapeError(f"input has {x.shape[1]} channels, layer expects {p.c}")
    if x.dtype != p.dtype:
        raise ShapeError(f"input dtype {x.dtype} differs from parameter dtype {p.dtype}")
    admissible = max_levels(*x.shape[2:])
    if p.levels > admissible:
        raise ShapeError(
            f"extents {x.shape[2]}x{x.shape[3]} allow at most {admissible} levels, "
            f"layer has {p.levels}")


def forward_trace(x, p: WTConvParams, bank=HAAR, *, fast=False):
    """Run the forward pass and keep the intermediates the backward pass needs.

    Returns ``(out, packed_inputs, conv_outputs, base_conv)`` where the lists
    hold, per level, the packed 4c-channel subbands and the unscaled
    wavelet-domain convolution outputs.  ``fast`` switches the transforms to
    the Haar butterfly.
    """
    check_input(x, p)
    pad = p.k // 2
    base_conv = depthwise_conv(x, p.w0, 1, pad)
    y0 = channel_scale(base_conv, p.scale0)

    packed_inputs, conv_outputs, level_out = [], [], []
    ll = x
    for w, s in zip(p.w_levels, p.scale_levels):
        quad = wt_forward(ll, bank, fast=fast)
        packed = quad.pack()
        conv = depthwise_conv(packed, w, 1, pad)
        packed_inputs.append(packed)
        conv_outputs.append(conv)
        level_out.append(SubbandQuad.unpack(channel_scale(conv, s)))
        ll = quad.ll

    z = None
    for y in reversed(level_out):
        low = y.ll if z is None else y.ll + z
        z = wt_inverse(SubbandQuad(low, y.lh, y.hl, y.hh), bank, fast=fast)
    out = y0 if z is None else y0 + z
    return out, packed_inputs, conv_outputs, base_conv


def wtconv_forward(x, p: WTConvParams, bank=HAAR, *, fast=False) -> np.ndarray:
    return forward_trace(x, p, bank, fast=fast)[0]


def param_breakdown(p: WTConvParams) -> dict[str, int]:
    c, k, L = p.c, p.k, p.levels
    parts = {
        "base_kernel": c * k * k,
        "level_kernels": L * 4 * c * k * k,
        "base_scale": c,
        "level_scales": L * 4 * c,
    }
    parts["total"] = sum(parts.values())
    return parts


def param_count(p: WTConvParams) -> int:
    return param_breakdown(p)["total"]


def receptive_field(p: WTConvParams) -> int:
    return 2**p.levels * p.k


# --- serialization ---------------------------------------------------------

def params_to_bytes(p: WTConvParams) -> bytes:
    width = p.dtype.itemsize * 8
    le = p.dtype.newbyteorder("<")
    header = MAGIC + struct.pack("<5I", FORMAT_VERSION, p.c, p.k, p.levels, width)
    return header + b"".join(np.ascontiguousarray(a).astype(le).tobytes() for a in p.arrays())


def head_to_bytes(weight, bias) -> bytes:
    """``HEAD`` block: tag, (features, classes), weights (features x classes), offsets."""
    le = weight.dtype.newbyteorder("<")
    return (HEAD_TAG + struct.pack("<2I", *weight.shape)
            + weight.astype(le).tobytes() + bias.astype(le).tobytes())


def save_params(p: WTConvParams, path, head=None):
    blob = params_to_bytes(p)
    if head is not None:
        blob += head_to_bytes(*head)
    with open(path, "wb") as fh:
        fh.write(blob)


def params_from_bytes(raw: bytes):
    """Parse a parameter file; returns ``(params, head)`` with ``head`` None when absent."""
    if raw[:4] != MAGIC or len(raw) < 24:
        raise ParameterError("not a WTConv parameter file (bad magic)")
    version, c, k, levels, width = struct.unpack("<5I", raw[4:24])
    if version != FORMAT_VERSION:
        raise ParameterError(f"unsupported parameter file version {version}")
    if width not in (32, 64):
        raise ParameterError(f"unsupported element width {width}")
    dt = np.dtype(f"<f{width // 8}")
    shapes = [(c, k, k)] + [(4 * c, k, k)] * levels + [(c,)] + [(4 * c,)] * levels
    pos, arrays = 24, []
    for shape in shapes:
        n = int(np.prod(shape))
        chunk = raw[pos:pos + n * dt.itemsize]
        if len(chunk) != n * dt.itemsize:
            raise ShapeError("truncated parameter file")
        arrays.append(np.frombuffer(chunk, dtype=dt).astype(dt.newbyteorder("=")).reshape(shape))
        pos += n * dt.itemsize
    template = WTConvParams.__new__(WTConvParams)
    template.c, template.k, template.levels = c, k, levels
    params = WTConvParams.with_arrays(template, arrays)

    head = None
    rest = raw[pos:]
    if rest:
        if rest[:4] != HEAD_TAG or len(rest) < 12:
            raise ParameterError("unexpected trailing data in parameter file")
        feats, classes = struct.unpack("<2I", rest[4:12])
        nw = feats * classes * dt.itemsize
        nb = classes * dt.itemsize
        if len(rest) != 12 + nw + nb:
            raise ShapeError("malformed HEAD block")
        weight = np.frombuffer(rest[12:12 + nw], dtype=dt).astype(dt.newbyteorder("=")).reshape(feats, classes)
        bias = np.frombuffer(rest[12 + nw:], dtype=dt).astype(dt.newbyteorder("="))
        head = (weight, bias)
    return params, head


def load_params(path):
    with open(path, "rb") as fh:
        return params_from_bytes(fh.read())
