"""Reverse-mode gradients for the convolution primitives and the WTConv layer.

The computation graph of the layer is small and fixed, so the backward pass
is written out by hand: each step is the adjoint of the matching forward
step, traversed in reverse order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conv_ops import _pair, check_kernel, depthwise_conv_transposed, record_macs
from .layer import WTConvParams, forward_trace
from .tensor_core import ParameterError, ShapeError, check_tensor
from .wavelet import HAAR, SubbandQuad, wt_forward, wt_inverse


@dataclass
class WTConvGrads:
    d_input: np.ndarray
    d_w0: np.ndarray
    d_scale0: np.ndarray
    d_w_levels: list[np.ndarray] = field(default_factory=list)
    d_scale_levels: list[np.ndarray] = field(default_factory=list)

    def arrays(self) -> list[np.ndarray]:
        """Parameter gradients in the order of ``WTConvParams.arrays()``."""
        return [self.d_w0, *self.d_w_levels, self.d_scale0, *self.d_scale_levels]


def depthwise_conv_backward(x, w, dy, stride=1, padding=0):
    """Gradients ``(dX, dW)`` of ``<depthwise_conv(x, w, stride, padding), dy>``."""
    check_tensor(x, "input")
    check_tensor(dy, "output gradient")
    n, c, h, wd = x.shape
    check_kernel(w, c, x.dtype)
    s_h, s_w = _pair(stride)
    p_h, p_w = _pair(padding)
    k_h, k_w = w.shape[1:]
    out_h = (h + 2 * p_h - k_h) // s_h + 1
    out_w = (wd + 2 * p_w - k_w) // s_w + 1
    if dy.shape != (n, c, out_h, out_w) or dy.dtype != x.dtype:
        raise ShapeError(f"output gradient {dy.shape} does not match forward output {(n, c, out_h, out_w)}")

    dx = depthwise_conv_transposed(dy, w, (s_h, s_w), (p_h, p_w), output_size=(h, wd), tag="grad")

    xp = np.pad(x, ((0, 0), (0, 0), (p_h, p_h), (p_w, p_w))) if p_h or p_w else x
    span_h = s_h * (out_h - 1) + 1
    span_w = s_w * (out_w - 1) + 1
    dw = np.empty_like(w)
    for u in range(k_h):
        for v in range(k_w):
            window = xp[:, :, u:u + span_h:s_h, v:v + span_w:s_w]
            dw[:, u, v] = np.sum(dy * window, axis=(0, 2, 3))
    record_macs("grad", dy.size * k_h * k_w)
    return dx, dw


def wt_backward(dq: SubbandQuad, bank=HAAR, *, fast=False) -> np.ndarray:
    """Adjoint of the single-level transform: the transposed convolution."""
    return wt_inverse(dq, bank, fast=fast)


def iwt_backward(dx, bank=HAAR, *, fast=False) -> SubbandQuad:
    """Adjoint of the inverse transform: the strided convolution."""
    return wt_forward(dx, bank, fast=fast)


def wtconv_backward(x, p: WTConvParams, dy, bank=HAAR, *, fast=False, trace=None) -> WTConvGrads:
    """Gradients of ``<wtconv_forward(x, p), dy>`` w.r.t. the input and every parameter.

    ``trace`` is the result of ``forward_trace(x, p, bank)``; it is recomputed
    when omitted.
    """
    if trace is None:
        trace = forward_trace(x, p, bank, fast=fast)
    out, packed_inputs, conv_outputs, base_conv = trace
    check_tensor(dy, "output gradient")
    if dy.shape != out.shape or dy.dtype != out.dtype:
        raise ShapeError(f"output gradient {dy.shape} does not match output {out.shape}")
    pad = p.k // 2

    # base path
    d_scale0 = np.sum(dy * base_conv, axis=(0, 2, 3))
    dx_base, d_w0 = depthwise_conv_backward(x, p.w0, dy * p.scale0[None, :, None, None], 1, pad)

    # aggregation: z_i = IWT(y_i.ll + z_{i+1}, y_i.lh, y_i.hl, y_i.hh), walked top-down
    d_level_out = []
    dz = dy
    for _ in range(p.levels):
        dq = iwt_backward(dz, bank, fast=fast)
        d_level_out.append(dq.pack())
        dz = dq.ll

    d_w_levels, d_scale_levels, d_packed = [], [], []
    for i in range(p.levels):
        g = d_level_out[i]
        d_scale_levels.append(np.sum(g * conv_outputs[i], axis=(0, 2, 3)))
        scaled = g * p.scale_levels[i][None, :, None, None]
        dpk, dw = depthwise_conv_backward(packed_inputs[i], p.w_levels[i], scaled, 1, pad)
        d_packed.append(dpk)
        d_w_levels.append(dw)

    # analysis cascade: ll_{i-1} -> WT -> packed_i, and ll_i also feeds level i+1
    d_ll = None
    for i in reversed(range(p.levels)):
        dq = SubbandQuad.unpack(d_packed[i])
        if d_ll is not None:
            dq = SubbandQuad(dq.ll + d_ll, dq.lh, dq.hl, dq.hh)
        d_ll = wt_backward(dq, bank, fast=fast)

    d_input = dx_base if d_ll is None else dx_base + d_ll
    return WTConvGrads(
        d_input=d_input, d_w0=d_w0, d_scale0=d_scale0,
        d_w_levels=d_w_levels, d_scale_levels=d_scale_levels)


def sgd_step(p: WTConvParams, g: WTConvGrads, lr) -> WTConvParams:
    if not np.isfinite(lr):
        raise ParameterError(f"learning rate must be finite, got {lr}")
    lr = p.dtype.type(lr)
    return p.with_arrays(a - lr * d for a, d in zip(p.arrays(), g.arrays()))
