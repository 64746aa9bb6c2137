"""Self-check suites run by ``wtconv check``.

Each suite takes a filter bank (so a faulty bank can be injected) and returns
``(passed, detail)``.  Sizes are kept small so the whole run takes seconds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import reference
from .analysis import flop_report, flops_depthwise, measured_mac_count
from .conv_ops import depthwise_conv, depthwise_conv_transposed
from .grad import wtconv_backward
from .layer import init_params, wtconv_forward
from .tensor_core import inner, random_uniform
from .wavelet import SubbandQuad, wt_cascade, wt_cascade_inverse, wt_forward, wt_inverse


@dataclass(frozen=True)
class Suite:
    name: str
    group: str
    run: Callable


def _reconstruction(bank):
    worst64, worst32 = 0.0, 0.0
    shapes = [(1, 1, 8, 8), (2, 3, 16, 8), (2, 4, 64, 64), (1, 2, 32, 48)]
    for i, shape in enumerate(shapes):
        for levels in (1, 2, 3):
            x = random_uniform(*shape, -1, 1, seed=100 * i + levels)
            back = wt_cascade_inverse(wt_cascade(x, levels, bank), bank)
            worst64 = max(worst64, float(np.max(np.abs(back - x))))
            x32 = x.astype(np.float32)
            back32 = wt_cascade_inverse(wt_cascade(x32, levels, bank), bank)
            worst32 = max(worst32, float(np.max(np.abs(back32 - x32)) / np.max(np.abs(x32))))
    ok = worst64 < 1e-12 and worst32 < 1e-5
    return ok, f"max err f64 {worst64:.3g}, f32 relative {worst32:.3g}"


def _orthonormality(bank):
    gram_ok = np.array_equal(bank.gram(), np.eye(4))
    worst = 0.0
    for seed in range(5):
        x = random_uniform(1, 2, 32, 32, -1, 1, seed)
        pyr = wt_cascade(x, 3, bank)
        energy = sum(float(np.sum(b**2)) for q in pyr.levels for b in q.bands()[1:])
        energy += float(np.sum(pyr.levels[-1].ll ** 2))
        worst = max(worst, abs(energy - float(np.sum(x**2))) / float(np.sum(x**2)))
    return gram_ok and worst < 1e-10, f"gram exact {gram_ok}, energy rel err {worst:.3g}"


def _adjoints(bank):
    worst = 0.0
    x = random_uniform(2, 3, 9, 8, -1, 1, seed=1)
    w = random_uniform(1, 3, 3, 3, -1, 1, seed=2)[0]
    for stride, pad in ((1, 1), (2, 1), (2, 0)):
        y = depthwise_conv(x, w, stride, pad)
        v = random_uniform(*y.shape, -1, 1, seed=3)
        lhs = inner(y, v)
        rhs = inner(x, depthwise_conv_transposed(v, w, stride, pad, output_size=x.shape[2:]))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    x = random_uniform(1, 2, 8, 8, -1, 1, seed=4)
    q = SubbandQuad(*(random_uniform(1, 2, 4, 4, -1, 1, seed=5 + i) for i in range(4)))
    lhs = sum(inner(a, b) for a, b in zip(wt_forward(x, bank).bands(), q.bands()))
    rhs = inner(x, wt_inverse(q, bank))
    worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    return worst < 1e-12, f"max relative mismatch {worst:.3g}"


def _random_params(c, k, levels, seed):
    p = init_params(c, k, levels, seed=seed)
    rng = np.random.default_rng(seed)
    p.scale0[:] = rng.uniform(0.5, 1.5, c)
    for s in p.scale_levels:
        s[:] = rng.uniform(0.5, 1.5, 4 * c)
    return p


def _dense_oracle(bank):
    worst = 0.0
    for seed in range(3):
        p = _random_params(2, 3, 2, seed)
        x = random_uniform(1, 2, 8, 8, -1, 1, seed + 10)
        m = reference.dense_operator(p, 8, 8)
        expected = (m @ x.ravel()).reshape(x.shape)
        worst = max(worst, float(np.max(np.abs(wtconv_forward(x, p, bank) - expected))))
    return worst < 1e-10, f"max abs diff {worst:.3g}"


def _gradients(bank):
    p = _random_params(1, 3, 2, seed=7)
    x = random_uniform(1, 1, 8, 8, -1, 1, seed=8)
    dy = random_uniform(1, 1, 8, 8, -1, 1, seed=9)
    g = wtconv_backward(x, p, dy, bank)
    eps = 1e-5

    def loss():
        return inner(wtconv_forward(x, p, bank), dy)

    worst = 0.0
    for arr, grad in zip([x, *p.arrays()], [g.d_input, *g.arrays()]):
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            up = loss()
            arr[idx] = orig - eps
            down = loss()
            arr[idx] = orig
            fd = (up - down) / (2 * eps)
            denom = max(abs(fd), abs(grad[idx]))
            if denom > 0:
                worst = max(worst, abs(fd - grad[idx]) / denom)
    return worst < 1e-6, f"max relative error {worst:.3g}"


def _flops(bank):
    report = flop_report(1, 5, 512, 512, 3)
    values = [flops_depthwise(1, 7, 7, 512, 512), flops_depthwise(1, 31, 31, 512, 512),
              report.conv_flops, report.wt_flops + report.iwt_flops, report.total]
    ok = values == [12_845_056, 251_920_384, 15_155_200, 2_752_512, 17_907_712]
    p = init_params(2, 3, 2, seed=1)
    measured = measured_mac_count(random_uniform(1, 2, 16, 16, -1, 1, seed=2), p)
    small = flop_report(2, 3, 16, 16, 2)
    ok = ok and measured["conv"] == small.conv_flops and measured["wt"] == small.wt_flops
    return ok, f"worked values {'match' if ok else 'differ'}, measured conv MACs {measured['conv']}"


SUITES = [
    Suite("reconstruction", "wavelet", _reconstruction),
    Suite("orthonormality", "wavelet", _orthonormality),
    Suite("adjoints", "conv", _adjoints),
    Suite("dense-oracle", "layer", _dense_oracle),
    Suite("gradients", "grad", _gradients),
    Suite("flops", "analysis", _flops),
]


def select(names):
    """Suites whose name or group is in ``names`` (all when empty)."""
    if not names:
        return list(SUITES)
    known = {s.name for s in SUITES} | {s.group for s in SUITES}
    unknown = sorted(set(names) - known)
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}; known: {', '.join(sorted(known))}")
    return [s for s in SUITES if s.name in names or s.group in names]


def run_suites(suites, bank):
    results = []
    for suite in suites:
        try:
            ok, detail = suite.run(bank)
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((suite, bool(ok), detail))
    return results
