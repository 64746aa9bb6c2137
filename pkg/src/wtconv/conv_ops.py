"""Depth-wise convolution primitives.

All convolutions here are correlations (the kernel is not flipped) with
zero padding.  Within one output pixel the products are accumulated in
kernel-window raster order, so float64 results do not depend on how the
work is scheduled.

Kernels are arrays of shape ``(c, k_h, k_w)``; channel scales are arrays of
shape ``(c,)``.
"""

from __future__ import annotations

import contextlib
import contextvars
from collections import Counter

import numpy as np

from .tensor_core import ShapeError, check_tensor

_mac_counter: contextvars.ContextVar[Counter | None] = contextvars.ContextVar(
    "mac_counter", default=None)


@contextlib.contextmanager
def count_macs():
    """Count multiply-accumulates executed inside the block, by category.

    >>> with count_macs() as macs:
    ...     _ = depthwise_conv(x, w)
    >>> macs["conv"]
    """
    counter = Counter()
    token = _mac_counter.set(counter)
    try:
        yield counter
    finally:
        _mac_counter.reset(token)


def record_macs(category, amount):
    counter = _mac_counter.get()
    if counter is not None:
        counter[category] += int(amount)


def _pair(v):
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


def check_kernel(w, c, dtype, name="kernel"):
    if not isinstance(w, np.ndarray) or w.ndim != 3:
        raise ShapeError(f"{name} must have shape (c, k_h, k_w), got {getattr(w, 'shape', None)}")
    if w.shape[0] != c:
        raise ShapeError(f"{name} has {w.shape[0]} channels, input has {c}")
    if w.shape[1] < 1 or w.shape[2] < 1:
        raise ShapeError(f"{name} extents must be >= 1, got {w.shape[1:]}")
    if w.dtype != dtype:
        raise ShapeError(f"{name} dtype {w.dtype} differs from input dtype {dtype}")


def conv_output_size(h, w, k_h, k_w, stride=1, padding=0):
    s_h, s_w = _pair(stride)
    p_h, p_w = _pair(padding)
    return (h + 2 * p_h - k_h) // s_h + 1, (w + 2 * p_w - k_w) // s_w + 1


def depthwise_conv(x, w, stride=1, padding=0, *, tag="conv"):
    """Strided, zero-padded depth-wise correlation.

    ``out[n, c, y, x] = sum_{u, v} in[n, c, y*s_h - p_h + u, x*s_w - p_w + v] * w[c, u, v]``
    """
    check_tensor(x, "input")
    n, c, h, wd = x.shape
    check_kernel(w, c, x.dtype)
    s_h, s_w = _pair(stride)
    p_h, p_w = _pair(padding)
    if s_h < 1 or s_w < 1 or p_h < 0 or p_w < 0:
        raise ShapeError(f"invalid stride {stride} / padding {padding}")
    k_h, k_w = w.shape[1:]
    out_h, out_w = conv_output_size(h, wd, k_h, k_w, (s_h, s_w), (p_h, p_w))
    if out_h < 1 or out_w < 1:
        raise ShapeError(
            f"kernel {k_h}x{k_w} with padding {(p_h, p_w)} does not fit input {h}x{wd}")

    xp = np.pad(x, ((0, 0), (0, 0), (p_h, p_h), (p_w, p_w))) if p_h or p_w else x
    out = np.zeros((n, c, out_h, out_w), dtype=x.dtype)
    span_h = s_h * (out_h - 1) + 1
    span_w = s_w * (out_w - 1) + 1
    for u in range(k_h):
        for v in range(k_w):
            tap = w[:, u, v][None, :, None, None]
            out += xp[:, :, u:u + span_h:s_h, v:v + span_w:s_w] * tap
    record_macs(tag, out.size * k_h * k_w)
    return out


def depthwise_conv_transposed(x, w, stride=1, padding=0, output_size=None, *, tag="conv"):
    """Adjoint of :func:`depthwise_conv` with the same kernel, stride and padding.

    Without padding the output extents are ``(h - 1) * s + k``.  ``output_size``
    restores the forward input extents when the forward stride did not divide
    evenly; missing trailing rows/columns are zero-filled.
    """
    check_tensor(x, "input")
    n, c, h, wd = x.shape
    check_kernel(w, c, x.dtype)
    s_h, s_w = _pair(stride)
    p_h, p_w = _pair(padding)
    k_h, k_w = w.shape[1:]
    full_h = (h - 1) * s_h + k_h
    full_w = (wd - 1) * s_w + k_w
    out = np.zeros((n, c, full_h, full_w), dtype=x.dtype)
    span_h = s_h * (h - 1) + 1
    span_w = s_w * (wd - 1) + 1
    for u in range(k_h):
        for v in range(k_w):
            tap = w[:, u, v][None, :, None, None]
            out[:, :, u:u + span_h:s_h, v:v + span_w:s_w] += x * tap
    record_macs(tag, x.size * k_h * k_w)

    oh, ow = (full_h - 2 * p_h, full_w - 2 * p_w) if output_size is None else output_size
    if oh < full_h - 2 * p_h or ow < full_w - 2 * p_w:
        raise ShapeError(f"output_size {output_size} smaller than {(full_h - 2 * p_h, full_w - 2 * p_w)}")
    # rows/cols past the padded input's covered span received no contributions
    out = out[:, :, p_h:p_h + oh, p_w:p_w + ow]
    if out.shape[2:] != (oh, ow):
        out = np.pad(out, ((0, 0), (0, 0), (0, oh - out.shape[2]), (0, ow - out.shape[3])))
    return np.ascontiguousarray(out)


def channel_scale(x, s):
    check_tensor(x, "input")
    s = np.asarray(s)
    if s.shape != (x.shape[1],):
        raise ShapeError(f"scale of shape {s.shape} does not match {x.shape[1]} channels")
    if s.dtype != x.dtype:
        raise ShapeError(f"scale dtype {s.dtype} differs from input dtype {x.dtype}")
    return x * s[None, :, None, None]


def delta_kernel(c, k, dtype=np.float64):
    """Per-channel identity kernel of odd extent ``k``."""
    w = np.zeros((c, k, k), dtype=dtype)
    w[:, k // 2, k // 2] = 1
    return w
