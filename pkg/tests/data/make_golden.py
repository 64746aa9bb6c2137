"""Regenerate the forward regression fixture.

The expected output comes from the einsum oracle in ``wtconv.reference``,
not from the layer under test.  Run from the repository root:

    python3 tests/data/make_golden.py
"""

import hashlib
import os

import numpy as np

from wtconv import reference
from wtconv.layer import init_params, save_params
from wtconv.tensor_core import dump_tensor, random_uniform

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    p = init_params(2, 3, 2, seed=2024)
    rng = np.random.default_rng(2024)
    p.scale0[:] = rng.uniform(0.5, 1.5, 2)
    for s in p.scale_levels:
        s[:] = rng.uniform(0.5, 1.5, 8)
    x = random_uniform(1, 2, 16, 12, -1, 1, seed=2025)
    expected = reference.forward(x, p.w0, p.scale0, p.w_levels, p.scale_levels)
    save_params(p, os.path.join(HERE, "golden_params.wtcv"))
    dump_tensor(x, os.path.join(HERE, "golden_input.f64t"))
    path = dump_tensor(np.ascontiguousarray(expected), os.path.join(HERE, "golden_expected.f64t"))
    with open(path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    with open(os.path.join(HERE, "golden_expected.sha256"), "w") as fh:
        fh.write(digest + "  golden_expected.f64t\n")


if __name__ == "__main__":
    main()
