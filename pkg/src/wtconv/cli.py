"""Command-line entry point: ``wtconv {check,flops,forward,erf,train,info}``.

Config files use an INI dialect: ``[section]`` headers and ``key = value``
lines, ``#`` or ``;`` comments.  Unknown sections or keys, malformed values
and unusable paths abort with exit status 2 before anything is written.

Exit codes: 0 success, 1 failed suite or diverged training, 2 usage or
config error.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys

import numpy as np

from . import __version__
from .analysis import ErfMap, erf_map, flop_report, flops_depthwise, render_approx
from .checks import SUITES, run_suites, select
from .layer import (
    WTConvParams,
    init_params,
    load_params,
    param_count,
    passthrough_params,
    receptive_field,
    save_params,
    wtconv_forward,
)
from .tensor_core import DTYPES, ParameterError, ShapeError, dump_tensor, load_tensor, random_uniform
from .toytrain import DataSpec, ToyModel, TrainingError, generate_dataset, train
from .wavelet import HAAR


class ConfigError(Exception):
    """Bad command line, config value or path; maps to exit status 2."""


# --- config ----------------------------------------------------------------


def _int(lo=None):
    def parse(text):
        v = int(text)
        if lo is not None and v < lo:
            raise ValueError(f"must be >= {lo}")
        return v
    return parse


def _float(lo=None):
    def parse(text):
        v = float(text)
        if not np.isfinite(v) or (lo is not None and v < lo):
            raise ValueError(f"must be a finite number >= {lo}")
        return v
    return parse


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return parse


def _precision(text):
    v = int(text)
    if v not in DTYPES:
        raise ValueError("must be 32 or 64")
    return v


def _path(text):
    if not text:
        raise ValueError("empty path")
    return text


_LAYER = {
    "c": (_int(1), 1),
    "k": (_int(1), 3),
    "levels": (_int(0), 1),
    "seed": (_int(0), 0),
    "init": (_choice("uniform-fan-in", "zeros", "identity"), "uniform-fan-in"),
    "params": (_path, None),
    "precision": (_precision, 64),
}

SCHEMAS = {
    "forward": {"layer": _LAYER},
    "erf": {
        "layer": {**_LAYER, "depth": (_int(1), 1)},
        "probe": {
            "h": (_int(1), 128),
            "w": (_int(1), 128),
            "images": (_int(1), 8),
            "seed": (_int(0), 0),
            "kind": (_choice("random", "constant"), "random"),
        },
        "output": {"csv": (_path, None), "pgm": (_path, None)},
    },
    "train": {
        "model": {
            "c": (_int(1), 4),
            "k": (_int(1), 3),
            "levels": (_int(0), 2),
            "seed": (_int(0), 0),
            "precision": (_precision, 32),
        },
        "data": {
            "task": (_choice("separable", "wavelength"), "separable"),
            "n_train": (_int(2), 512),
            "n_test": (_int(2), 256),
            "h": (_int(1), 64),
            "w": (_int(1), 64),
            "noise": (_float(0), 0.05),
            "seed": (_int(0), 0),
        },
        "train": {
            "epochs": (_int(0), 30),
            "lr": (_float(0), 0.05),
            "batch": (_int(1), 32),
            "seed": (_int(0), 0),
        },
        "output": {"log": (_path, None), "checkpoint": (_path, None)},
    },
}


def read_config(path, schema) -> dict:
    """Parse ``path`` against ``schema``; every section and key gets a value."""
    if path is None:
        text = ""
    else:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    parser = configparser.ConfigParser(interpolation=None, default_section="\0none")
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    unknown = [s for s in parser.sections() if s not in schema]
    if unknown:
        raise ConfigError(f"unknown section(s) [{'], ['.join(unknown)}]; expected {', '.join(schema)}")
    cfg = {}
    for section, keys in schema.items():
        given = dict(parser.items(section)) if parser.has_section(section) else {}
        extra = sorted(set(given) - set(keys))
        if extra:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(extra)}")
        values = {}
        for key, (parse, default) in keys.items():
            if key in given:
                try:
                    values[key] = parse(given[key].strip())
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key} = {given[key]!r}: {exc}") from exc
            else:
                values[key] = default
        cfg[section] = values
    return cfg


def check_inputs(*paths):
    for p in paths:
        if p is not None and not os.path.isfile(p):
            raise ConfigError(f"input file not found: {p}")


def check_outputs(*paths):
    seen = set()
    for p in paths:
        if p is None:
            continue
        parent = os.path.dirname(os.path.abspath(p))
        if not os.path.isdir(parent):
            raise ConfigError(f"output directory does not exist: {parent}")
        if not os.access(parent, os.W_OK):
            raise ConfigError(f"output directory is not writable: {parent}")
        if os.path.isdir(p):
            raise ConfigError(f"output path is a directory: {p}")
        if os.path.abspath(p) in seen:
            raise ConfigError(f"output path given twice: {p}")
        seen.add(os.path.abspath(p))


def build_layer(section) -> WTConvParams:
    """Layer from a parameter file or an init scheme; ``identity`` is the exact pass-through."""
    dtype = DTYPES[section["precision"]]
    if section["params"] is not None:
        p, _ = load_params(section["params"])
        return p.astype(dtype)
    c, k, levels = section["c"], section["k"], section["levels"]
    if section["init"] == "identity":
        return passthrough_params(c, k, levels, dtype=dtype)
    return init_params(c, k, levels, seed=section["seed"], scheme=section["init"], dtype=dtype)


# --- commands --------------------------------------------------------------


def reflect_pad(x, multiple):
    """Mirror-pad (no edge repetition) bottom/right up to a multiple; returns ``(padded, (h, w))``."""
    h, w = x.shape[2:]
    ph, pw = -h % multiple, -w % multiple
    if ph == 0 and pw == 0:
        return x, (h, w)
    if (ph and h < 2) or (pw and w < 2):
        raise ShapeError(f"cannot mirror-pad a {h}x{w} input")
    return np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="reflect"), (h, w)


def cmd_check(args, out):
    try:
        suites = select(args.suite or [])
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from exc
    bank = HAAR.with_sign_flip() if args.inject_fault else HAAR
    results = run_suites(suites, bank)
    width = max(len(s.name) for s, _, _ in results)
    for suite, ok, detail in results:
        print(f"{suite.name:<{width}}  {suite.group:<8}  {'PASS' if ok else 'FAIL'}  {detail}", file=out)
    failed = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - failed}/{len(results)} suites passed", file=out)
    return 1 if failed else 0


def cmd_flops(args, out):
    n_w = args.n if args.n_w is None else args.n_w
    n_h = args.n if args.n_h is None else args.n_h
    if n_w is None or n_h is None:
        raise ConfigError("give --n or both --n-w and --n-h")
    try:
        if args.levels == 0:
            base = flops_depthwise(args.c, args.k, args.k, n_w, n_h, args.stride, args.stride)
            rows = [("conv_flops", base), ("wt_flops", 0), ("iwt_flops", 0),
                    ("wt_iwt_flops", 0), ("total", base)]
        else:
            rows = flop_report(args.c, args.k, n_w, n_h, args.levels, args.stride).rows()
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value:>15,}  {render_approx(value)}", file=out)
    return 0


def cmd_forward(args, out):
    cfg = read_config(args.config, SCHEMAS["forward"])
    check_inputs(args.input, cfg["layer"]["params"])
    check_outputs(args.output)
    p = build_layer(cfg["layer"])
    x = load_tensor(args.input).astype(p.dtype)
    if x.shape[1] != p.c:
        raise ConfigError(f"input has {x.shape[1]} channels, layer expects {p.c}")
    padded, (h, w) = reflect_pad(x, 2**p.levels)
    y = np.ascontiguousarray(wtconv_forward(padded, p)[:, :, :h, :w])
    path = dump_tensor(y, args.output)
    print(f"output shape    {'x'.join(map(str, y.shape))} ({y.dtype})", file=out)
    print(f"receptive field {receptive_field(p)}", file=out)
    print(f"parameters      {param_count(p)}", file=out)
    print(f"wrote           {path}", file=out)
    return 0


def cmd_erf(args, out):
    cfg = read_config(args.config, SCHEMAS["erf"])
    layer, probe, dest = cfg["layer"], cfg["probe"], cfg["output"]
    check_inputs(layer["params"])
    if dest["csv"] is None and dest["pgm"] is None:
        raise ConfigError("[output] needs csv and/or pgm")
    check_outputs(dest["csv"], dest["pgm"])
    p = build_layer(layer)
    dtype = p.dtype
    if probe["kind"] == "constant":
        images = [np.ones((1, p.c, probe["h"], probe["w"]), dtype=dtype)]
    else:
        images = [random_uniform(1, p.c, probe["h"], probe["w"], -1, 1, probe["seed"] + i, dtype)
                  for i in range(probe["images"])]
    result: ErfMap = erf_map([p] * layer["depth"], images)
    result.save(dest["csv"], dest["pgm"])
    top, bottom, left, right = result.bbox()
    print(f"probe           {probe['h']}x{probe['w']}, {len(images)} image(s)", file=out)
    print(f"support bbox    rows {top}..{bottom}, cols {left}..{right} "
          f"({bottom - top + 1}x{right - left + 1})", file=out)
    print(f"support pixels  {int(result.support().sum())}", file=out)
    return 0


def cmd_train(args, out):
    cfg = read_config(args.config, SCHEMAS["train"])
    m, d, t, dest = cfg["model"], cfg["data"], cfg["train"], cfg["output"]
    check_outputs(dest["log"], dest["checkpoint"])
    if d["h"] % 2 ** m["levels"] or d["w"] % 2 ** m["levels"]:
        raise ConfigError(f"image extents {d['h']}x{d['w']} must be divisible by 2**{m['levels']}")
    common = dict(h=d["h"], w=d["w"], noise=d["noise"], task=d["task"])
    # test images use an offset seed so they never coincide with training images
    train_set = generate_dataset(DataSpec(n=d["n_train"], seed=d["seed"], **common))
    test_set = generate_dataset(DataSpec(n=d["n_test"], seed=d["seed"] + 1_000_003, **common))
    model = ToyModel.create(m["c"], m["k"], m["levels"], seed=m["seed"], dtype=DTYPES[m["precision"]])
    try:
        model, log = train(model, train_set, test_set, epochs=t["epochs"], lr=t["lr"],
                           batch=t["batch"], seed=t["seed"])
    except TrainingError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        if dest["log"] is not None and exc.log is not None:
            with open(dest["log"], "w", newline="") as fh:
                fh.write(exc.log.to_csv())
        return 1
    if dest["log"] is not None:
        with open(dest["log"], "w", newline="") as fh:
            fh.write(log.to_csv())
    if dest["checkpoint"] is not None:
        save_params(model.mixer, dest["checkpoint"], head=(model.head_w, model.head_b))
    print(f"final loss      {log.loss[-1]:.6f}", file=out)
    print(f"train accuracy  {log.train_acc[-1]:.4f}", file=out)
    print(f"test accuracy   {log.test_acc[-1]:.4f}", file=out)
    return 0


def cmd_info(args, out):
    if args.params is None and args.tensor is None:
        print(f"wtconv {__version__}", file=out)
        print(f"suites          {', '.join(s.name for s in SUITES)}", file=out)
        print("tensor dumps    .f32t / .f64t: <u4 n,c,h,w header + little-endian data", file=out)
        print("parameter files WTCV header + arrays, optional HEAD block", file=out)
        return 0
    check_inputs(args.params, args.tensor)
    if args.params is not None:
        p, head = load_params(args.params)
        print(f"params          c={p.c} k={p.k} levels={p.levels} dtype={p.dtype}", file=out)
        print(f"parameters      {param_count(p)}", file=out)
        print(f"receptive field {receptive_field(p)}", file=out)
        print(f"head            {'x'.join(map(str, head[0].shape)) if head else 'none'}", file=out)
    if args.tensor is not None:
        x = load_tensor(args.tensor)
        print(f"tensor          {'x'.join(map(str, x.shape))} ({x.dtype})", file=out)
    return 0


# --- argument parsing ------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="wtconv", description="WTConv layer tools.")
    parser.add_argument("--version", action="version", version=f"wtconv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="run the self-check suites")
    p.add_argument("--suite", action="append", help="suite or group name (repeatable)")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("flops", help="print the cost model")
    p.add_argument("--c", type=int, default=1)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, help="square input extent")
    p.add_argument("--n-w", type=int)
    p.add_argument("--n-h", type=int)
    p.add_argument("--levels", type=int, default=0)
    p.add_argument("--stride", type=int, default=1)
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("forward", help="run one layer on a tensor dump")
    p.add_argument("--config", help="config file with a [layer] section")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("erf", help="effective receptive field map")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_erf)

    p = sub.add_parser("train", help="toy classifier training")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("info", help="describe formats or inspect files")
    p.add_argument("--params")
    p.add_argument("--tensor")
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ParameterError, ShapeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
