"""Rank-4 tensor helpers.

Tensors are plain ``numpy.ndarray`` objects of shape ``(n, c, h, w)`` in
C (row-major) order with dtype ``float32`` or ``float64``.  The helpers here
validate that contract, provide a seeded generator that produces the same
values on every platform, and read/write the binary debug dump format.

Random numbers come from SplitMix64: element ``i`` of a draw with seed ``s``
is ``mix(s + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64)``, where ``mix`` is the
standard SplitMix64 finalizer.  The top 53 bits become a double in
``[0, 1)`` that is then affinely mapped to ``[lo, hi)``.
"""

from __future__ import annotations

import os
import struct

import numpy as np

DTYPES = {32: np.float32, 64: np.float64}
SUFFIXES = {np.dtype(np.float32): ".f32t", np.dtype(np.float64): ".f64t"}

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MAX_ELEMENTS = 2**31 - 1


class ShapeError(ValueError):
    """Raised when tensor extents are inconsistent with an operation."""


class ParameterError(ValueError):
    """Raised for invalid scalar arguments (ranges, seeds, schemes)."""


def resolve_dtype(dtype) -> np.dtype:
    if dtype in DTYPES:
        return np.dtype(DTYPES[dtype])
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ParameterError(f"unsupported element type {dt}; use float32 or float64")
    return dt


def _check_dims(n, c, h, w):
    dims = (n, c, h, w)
    if any(int(d) != d or d < 1 for d in dims):
        raise ShapeError(f"all extents must be positive integers, got {dims}")
    if n * c * h * w > _MAX_ELEMENTS:
        raise ShapeError(f"tensor of shape {dims} is too large")


def check_tensor(x, name="tensor") -> np.ndarray:
    """Validate the rank-4 float tensor contract and return ``x``."""
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        raise ShapeError(f"{name} must be a rank-4 array, got {getattr(x, 'shape', type(x))}")
    if x.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ShapeError(f"{name} has unsupported dtype {x.dtype}")
    if min(x.shape) < 1:
        raise ShapeError(f"{name} has an empty extent: {x.shape}")
    return x


def check_same(a, b, what="operands"):
    check_tensor(a)
    check_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"{what} differ in shape: {a.shape} vs {b.shape}")
    if a.dtype != b.dtype:
        raise ShapeError(f"{what} mix element types {a.dtype} and {b.dtype}")


def index(shape, n, c, y, x) -> int:
    """Flat offset of element ``(n, c, y, x)`` in a row-major tensor."""
    _, C, H, W = shape
    return ((n * C + c) * H + y) * W + x


def new_filled(n, c, h, w, value, dtype=np.float64) -> np.ndarray:
    _check_dims(n, c, h, w)
    return np.full((n, c, h, w), value, dtype=resolve_dtype(dtype))


def zeros_like(x) -> np.ndarray:
    return np.zeros_like(x)


def splitmix64(seed, count) -> np.ndarray:
    """First ``count`` outputs of SplitMix64 started from ``seed``."""
    seed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        z = seed + np.arange(1, count + 1, dtype=np.uint64) * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def uniform_stream(seed, count, lo=0.0, hi=1.0) -> np.ndarray:
    """``count`` float64 samples from ``[lo, hi)``."""
    if not lo < hi:
        raise ParameterError(f"need lo < hi, got lo={lo}, hi={hi}")
    u = (splitmix64(seed, count) >> np.uint64(11)).astype(np.float64) * 2.0**-53
    out = lo + (hi - lo) * u
    # affine map can round up onto hi
    return np.minimum(out, np.nextafter(hi, lo))


def random_uniform(n, c, h, w, lo, hi, seed, dtype=np.float64) -> np.ndarray:
    _check_dims(n, c, h, w)
    dt = resolve_dtype(dtype)
    vals = uniform_stream(seed, n * c * h * w, lo, hi).astype(dt)
    if dt != np.float64:
        vals = np.minimum(vals, np.nextafter(dt.type(hi), dt.type(lo)))
        vals = np.maximum(vals, dt.type(lo))
    return vals.reshape(n, c, h, w)


def add(a, b) -> np.ndarray:
    check_same(a, b)
    return a + b


def scalar_mul(a, s) -> np.ndarray:
    check_tensor(a)
    return a * a.dtype.type(s)


def max_abs_diff(a, b) -> float:
    check_same(a, b)
    return float(np.max(np.abs(a - b)))


def l2_norm(a) -> float:
    check_tensor(a)
    a = np.abs(a.astype(np.float64))
    peak = a.max()
    if peak == 0 or not np.isfinite(peak):
        return float(peak)
    # scale first so tiny or huge entries do not under/overflow when squared
    return float(peak * np.sqrt(np.sum((a / peak) ** 2)))


def inner(a, b) -> float:
    """Sum of elementwise products, accumulated in float64."""
    if a.shape != b.shape:
        raise ShapeError(f"inner product of shapes {a.shape} and {b.shape}")
    return float(np.dot(a.ravel().astype(np.float64), b.ravel().astype(np.float64)))


# --- binary dump -----------------------------------------------------------

def dump_tensor(x, path) -> str:
    """Write ``x`` as a 16-byte header plus little-endian raw elements.

    The element width is carried by the file suffix; a mismatching suffix is
    replaced so the file always describes its content.
    """
    check_tensor(x)
    suffix = SUFFIXES[x.dtype]
    root, ext = os.path.splitext(str(path))
    if ext != suffix:
        path = root + suffix if ext in SUFFIXES.values() else str(path) + suffix
    header = struct.pack("<4I", *x.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(x).astype(x.dtype.newbyteorder("<")).tobytes())
    return str(path)


def load_tensor(path) -> np.ndarray:
    path = str(path)
    if path.endswith(".f32t"):
        dt = np.dtype("<f4")
    elif path.endswith(".f64t"):
        dt = np.dtype("<f8")
    else:
        raise ParameterError(f"tensor dump {path!r} must end in .f32t or .f64t")
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise ShapeError(f"{path}: truncated header")
    shape = struct.unpack("<4I", raw[:16])
    _check_dims(*shape)
    body = raw[16:]
    expected = int(np.prod(shape)) * dt.itemsize
    if len(body) != expected:
        raise ShapeError(f"{path}: expected {expected} data bytes for shape {shape}, found {len(body)}")
    return np.frombuffer(body, dtype=dt).astype(dt.newbyteorder("=")).reshape(shape)
