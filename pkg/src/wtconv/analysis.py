"""Cost model and effective-receptive-field probing for WTConv layers."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .conv_ops import count_macs
from .grad import wtconv_backward
from .layer import WTConvParams, forward_trace, wtconv_forward
from .tensor_core import ParameterError, ShapeError, check_tensor

# --- FLOP accounting -------------------------------------------------------


def _positive(**kw):
    for name, v in kw.items():
        if int(v) != v or v < 1:
            raise ParameterError(f"{name} must be a positive integer, got {v}")


def _divisible(n_w, n_h, levels):
    if levels < 0:
        raise ParameterError(f"level count must be >= 0, got {levels}")
    if n_w % 2**levels or n_h % 2**levels:
        raise ParameterError(f"input {n_w}x{n_h} is not divisible by 2**{levels}")


def flops_depthwise(c, k_w, k_h, n_w, n_h, s_w=1, s_h=1) -> int:
    """``C * K_W * K_H * N_W * N_H / (S_W * S_H)``, exact as an integer."""
    _positive(c=c, k_w=k_w, k_h=k_h, n_w=n_w, n_h=n_h, s_w=s_w, s_h=s_h)
    num = c * k_w * k_h * n_w * n_h
    if num % (s_w * s_h):
        raise ParameterError(f"stride {s_w}x{s_h} does not divide the output count evenly")
    return num // (s_w * s_h)


def level_conv_flops(c, k, n_w, n_h, levels) -> list[int]:
    """Cost of each wavelet-domain convolution: ``4 C k^2 (N_W / 2^i)(N_H / 2^i)``."""
    _positive(c=c, k=k, n_w=n_w, n_h=n_h)
    _divisible(n_w, n_h, levels)
    return [4 * c * k * k * (n_w >> i) * (n_h >> i) for i in range(1, levels + 1)]


def flops_wtconv_convs(c, k, n_w, n_h, levels) -> int:
    return flops_depthwise(c, k, k, n_w, n_h) + sum(level_conv_flops(c, k, n_w, n_h, levels))


def flops_wt_iwt(c, n_w, n_h, levels) -> tuple[int, int]:
    """Naive (strided-convolution) cost of the cascade WT and of the IWT."""
    _positive(c=c, n_w=n_w, n_h=n_h)
    _divisible(n_w, n_h, levels)
    wt = 4 * c * sum((n_w >> i) * (n_h >> i) for i in range(levels))
    return wt, wt


@dataclass
class FlopReport:
    base_flops: int
    per_level: list[int]
    conv_flops: int
    wt_flops: int
    iwt_flops: int
    total: int = field(init=False)

    def __post_init__(self):
        self.total = self.conv_flops + self.wt_flops + self.iwt_flops
        assert self.base_flops + sum(self.per_level) == self.conv_flops

    def rows(self):
        rows = [("base_conv_flops", self.base_flops)]
        rows += [(f"level{i}_conv_flops", v) for i, v in enumerate(self.per_level, 1)]
        rows += [("conv_flops", self.conv_flops), ("wt_flops", self.wt_flops),
                 ("iwt_flops", self.iwt_flops), ("wt_iwt_flops", self.wt_flops + self.iwt_flops),
                 ("total", self.total)]
        return rows


def flop_report(c, k, n_w, n_h, levels, stride=1) -> FlopReport:
    if levels > 0 and stride != 1:
        raise ParameterError("WTConv is stride-1 only; strided costs apply to levels=0")
    base = flops_depthwise(c, k, k, n_w, n_h, stride, stride)
    per_level = level_conv_flops(c, k, n_w, n_h, levels)
    wt, iwt = flops_wt_iwt(c, n_w, n_h, levels)
    return FlopReport(base, per_level, base + sum(per_level), wt, iwt)


def render_approx(value) -> str:
    """Short rendering: one decimal below 100 units, whole units above, half-up."""
    value = int(value)
    for div, unit in ((10**9, "G"), (10**6, "M"), (10**3, "k")):
        if abs(value) >= div:
            q = Decimal(value) / Decimal(div)
            step = Decimal("1") if abs(q) >= 100 else Decimal("0.1")
            return f"≈{q.quantize(step, rounding=ROUND_HALF_UP)}{unit}"
    return str(value)


def measured_mac_count(x, p: WTConvParams, *, fast=False) -> dict[str, int]:
    """Multiply-accumulates actually executed by one forward pass, by category.

    Categories: ``conv`` (base and wavelet-domain convolutions), ``wt`` and
    ``iwt`` (strided-convolution transforms), ``wt_fast`` and ``iwt_fast``
    (butterfly add/sub/scale operations when ``fast`` is set).
    """
    with count_macs() as macs:
        forward_trace(x, p, fast=fast)
    return {key: macs.get(key, 0) for key in ("conv", "wt", "iwt", "wt_fast", "iwt_fast")}


# --- effective receptive field ---------------------------------------------


@dataclass
class ErfMap:
    values: np.ndarray

    @property
    def h(self):
        return self.values.shape[0]

    @property
    def w(self):
        return self.values.shape[1]

    def support(self) -> np.ndarray:
        return self.values > 0

    def bbox(self):
        """Inclusive ``(top, bottom, left, right)`` of the nonzero support."""
        ys, xs = np.nonzero(self.support())
        return int(ys.min()), int(ys.max()), int(xs.min()), int(xs.max())

    def to_csv(self) -> str:
        return "".join(",".join(f"{v:.17g}" for v in row) + "\n" for row in self.values)

    def to_pgm(self) -> bytes:
        pixels = np.floor(self.values * 255 + 0.5).astype(np.uint8)
        return f"P5\n{self.w} {self.h}\n255\n".encode("ascii") + pixels.tobytes()

    def save(self, csv_path=None, pgm_path=None):
        if csv_path is not None:
            with open(csv_path, "w", newline="") as fh:
                fh.write(self.to_csv())
        if pgm_path is not None:
            with open(pgm_path, "wb") as fh:
                fh.write(self.to_pgm())


def center(h, w):
    """Central position; for even extents the lower-right of the two candidates."""
    return h // 2, w // 2


def erf_map(stack, images) -> ErfMap:
    """Gradient of the central output (all channels) w.r.t. every input pixel.

    ``stack`` is a sequence of :class:`WTConvParams` applied in order (a plain
    depth-wise layer is ``levels=0``).  ``|d input|`` is summed over channels,
    batch entries and images, then max-normalized.
    """
    if isinstance(stack, WTConvParams):
        stack = [stack]
    images = list(images)
    if not images:
        raise ParameterError("erf_map needs at least one image")
    if not stack:
        raise ParameterError("erf_map needs at least one layer")
    shape = images[0].shape
    acc = np.zeros(shape[2:], dtype=np.float64)
    for img in images:
        check_tensor(img, "image")
        if img.shape != shape:
            raise ShapeError(f"images differ in shape: {img.shape} vs {shape}")
        inputs = []
        h = img
        for p in stack:
            inputs.append(h)
            h = wtconv_forward(h, p)
        dy = np.zeros_like(h)
        cy, cx = center(*h.shape[2:])
        dy[:, :, cy, cx] = 1
        for p, inp in zip(reversed(stack), reversed(inputs)):
            dy = wtconv_backward(inp, p, dy).d_input
        acc += np.abs(dy).astype(np.float64).sum(axis=(0, 1))
    peak = acc.max()
    if peak == 0:
        raise ParameterError("the stack has an all-zero gradient at the central output")
    return ErfMap(acc / peak)


def impulse_response(p: WTConvParams, h, w, dtype=np.float64) -> np.ndarray:
    """``|layer(delta at center)|`` summed over channels, on an ``h x w`` grid."""
    x = np.zeros((1, p.c, h, w), dtype=dtype)
    cy, cx = center(h, w)
    x[:, :, cy, cx] = 1
    return np.abs(wtconv_forward(x, p)).sum(axis=(0, 1))
