"""Oracles shared by the unit and acceptance tests."""

import numpy as np

from wtconv.layer import init_params, wtconv_forward
from wtconv.tensor_core import inner


def random_params(c, k, levels, seed):
    """Random kernels and random (non-unit) scales."""
    p = init_params(c, k, levels, seed=seed)
    rng = np.random.default_rng(seed)
    p.scale0[:] = rng.uniform(0.5, 1.5, c)
    for s in p.scale_levels:
        s[:] = rng.uniform(0.5, 1.5, 4 * c)
    return p


def central_differences(x, p, dy, eps=1e-5):
    """Finite-difference gradients of ``<layer(x, p), dy>`` for the input and every parameter array.

    Perturbs one coordinate at a time; returns ``(d_input, [d_param, ...])``
    with the parameter list in ``p.arrays()`` order.
    """
    def loss(xx, pp):
        return inner(wtconv_forward(xx, pp), dy)

    d_input = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + eps
        up = loss(x, p)
        x[idx] = orig - eps
        down = loss(x, p)
        x[idx] = orig
        d_input[idx] = (up - down) / (2 * eps)

    d_params = []
    for arr in p.arrays():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            up = loss(x, p)
            arr[idx] = orig - eps
            down = loss(x, p)
            arr[idx] = orig
            g[idx] = (up - down) / (2 * eps)
        d_params.append(g)
    return d_input, d_params


def max_relative_error(analytic, numeric):
    """Largest ``|a - n| / max(|a|, |n|)`` over coordinates where either side is nonzero."""
    a = np.concatenate([np.ravel(v) for v in analytic])
    n = np.concatenate([np.ravel(v) for v in numeric])
    denom = np.maximum(np.abs(a), np.abs(n))
    mask = denom > 0
    return float(np.max(np.abs(a - n)[mask] / denom[mask])) if mask.any() else 0.0
