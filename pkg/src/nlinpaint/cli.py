"""Command-line front end.

Errors are reported as one line ``error: <kind>: <message>`` on stderr with
exit status 2 (usage/config), 3 (I/O) or 4 (numerical failure).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import UnidentifiedImageError

from . import config as cfgmod
from .config import ConfigError, InpaintConfig
from .image import DimensionError, as_image, load_image, load_mask, psnr, save_image, save_mask
from .metric import compute_features
from .nnf import NoExemplarsError, compute_nnf_exact, compute_soft_weights
from .pipeline import (EnergyIncreaseError, PyramidError, build_bank, full_level, level_graphs, run,
                       run_baseline, write_trace)
from .solver import ConvergenceError, IllPosedError, UncoveredPixelError
from .synth import FIXTURES, fixture

EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override (repeatable)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--seed", type=int, help="top-level seed (same as --set seed=N)")
    p.add_argument("--trace", help="write the energy trace CSV here")
    p.add_argument("--dump-iters", help="directory for per-iteration images")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nlinpaint", description="Nonlocal feature-driven exemplar inpainting")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("inpaint", help="full alternating-minimization pipeline")
    p.add_argument("image")
    p.add_argument("mask")
    p.add_argument("-o", "--output", required=True)
    _common(p)

    p = sub.add_parser("baseline", help="harmonic or biharmonic Dirichlet extension")
    p.add_argument("image")
    p.add_argument("mask")
    p.add_argument("--kind", choices=["harmonic", "biharmonic"], required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    _common(p)

    p = sub.add_parser("nnf", help="exact nearest-neighbor field of an image (diagnostic)")
    p.add_argument("image")
    p.add_argument("mask")
    p.add_argument("--dump", required=True, help="output file, '-' for stdout")
    p.add_argument("--graph", type=int, default=1, help="graph number (1-based)")
    p.add_argument("--soft", type=float, metavar="SIGMA", help="dump soft weights at --at instead")
    p.add_argument("--at", metavar="ROW,COL", help="query pixel for --soft")
    _common(p)

    p = sub.add_parser("metrics", help="image comparison")
    p.add_argument("--psnr", nargs=2, metavar=("A", "B"), required=True)

    p = sub.add_parser("synth", help="write a synthetic fixture")
    p.add_argument("--fixture", choices=list(FIXTURES), required=True)
    p.add_argument("--size", type=int, default=200)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--mask-out", help="also write the fixture's inpainting mask")
    return ap


def _require_files(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"{p}: no such file")


def _load_config(args) -> tuple:
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    flat, base = {}, "."
    if args.config:
        _require_files(args.config)
        flat = cfgmod.parse_text(Path(args.config).read_text(), args.config)
        base = str(Path(args.config).parent)
    flat = cfgmod.apply_overrides(flat, overrides)
    config = InpaintConfig.from_flat(flat, base)
    # fail fast on every referenced file
    refs = list(config.kernels.values())
    if config.init.mode == "provided":
        refs.append(config.init.path)
    for g in config.graphs:
        for spec in list(g.lam.values()) + [g.beta]:
            if isinstance(spec, str):
                refs.append(spec.split(":")[1] if spec.startswith("aniso:") else spec[5:])
    _require_files(*refs)
    build_bank(config)
    return config


def _load_pair(image, mask):
    _require_files(image, mask)
    u = load_image(image)
    m = load_mask(mask)
    if m.shape != u.shape[:2]:
        raise DimensionError(f"mask {m.shape} does not match image {u.shape[:2]}")
    return u, m


def cmd_inpaint(args) -> int:
    config = _load_config(args)
    u, m = _load_pair(args.image, args.mask)
    res = run(u, m, config, threads=args.threads, dump_dir=args.dump_iters)
    save_image(args.output, res.image)
    Path(str(args.output) + ".config.txt").write_text(cfgmod.format_text(config.to_flat()))
    if args.trace:
        write_trace(args.trace, res.finest())
    if not res.converged:
        logging.getLogger("nlinpaint").warning("outer loop stopped at max_iter without reaching outer.tol")
    return 0


def cmd_baseline(args) -> int:
    u, m = _load_pair(args.image, args.mask)
    boundary = "replicate"
    if args.config or args.set:
        boundary = _load_config(args).boundary
    out = run_baseline(u, m, args.kind, boundary=boundary, tol=args.tol, threads=args.threads)
    save_image(args.output, out)
    return 0


def cmd_nnf(args) -> int:
    config = _load_config(args)
    u, m = _load_pair(args.image, args.mask)
    if not 1 <= args.graph <= len(config.graphs):
        raise ConfigError(f"--graph must be in 1..{len(config.graphs)}")
    bank = build_bank(config)
    regions, graphs = level_graphs(full_level(u, m, config), config, bank)
    graph = graphs[args.graph - 1]
    feats = compute_features(u, bank.kernels, config.boundary)
    out = sys.stdout if args.dump == "-" else open(args.dump, "w")
    try:
        if args.soft is not None:
            if not args.at:
                raise UsageError("--soft needs --at ROW,COL")
            r, c = (int(v) for v in args.at.split(","))
            if not (0 <= r < m.shape[0] and 0 <= c < m.shape[1]):
                raise UsageError(f"--at {args.at} lies outside the image")
            sw = compute_soft_weights(feats, graph, regions, (r, c), args.soft)
            W = m.shape[1]
            for y, w, d in zip(sw.candidates, sw.weights, sw.distances):
                out.write(f"{c} {r} -> {y % W} {y // W} {w:.17g} {d:.17g}\n")
        else:
            compute_nnf_exact(feats, graph, regions, graph_index=args.graph - 1).write_dump(out)
    finally:
        if out is sys.stdout:
            out.flush()
        else:
            out.close()
    return 0


def cmd_metrics(args) -> int:
    _require_files(*args.psnr)
    v = psnr(load_image(args.psnr[0]), load_image(args.psnr[1]))
    print("psnr: INF" if np.isinf(v) else f"psnr: {v:.6f} dB")
    return 0


def cmd_synth(args) -> int:
    img, mask = fixture(args.fixture, args.size)
    save_image(args.output, as_image(img))
    if args.mask_out:
        save_mask(args.mask_out, mask)
    return 0


_ERRORS = [
    ((UsageError, ConfigError, PyramidError), "usage", EXIT_USAGE),
    ((FileNotFoundError, IsADirectoryError, PermissionError, UnidentifiedImageError, DimensionError, OSError),
     "io", EXIT_IO),
    ((ConvergenceError, IllPosedError, UncoveredPixelError, EnergyIncreaseError, NoExemplarsError,
      FloatingPointError), "numerical", EXIT_NUMERIC),
    ((ValueError, KeyError), "usage", EXIT_USAGE),
]


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        handler = {"inpaint": cmd_inpaint, "baseline": cmd_baseline, "nnf": cmd_nnf,
                   "metrics": cmd_metrics, "synth": cmd_synth}[args.command]
        return handler(args)
    except SystemExit as e:      # --help
        return int(e.code or 0)
    except BrokenPipeError:      # reader went away, e.g. `nnf --dump - | head`
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except Exception as e:
        for types, kind, code in _ERRORS:
            if isinstance(e, types):
                msg = " ".join(str(e).split()) or type(e).__name__
                print(f"error: {kind}: {msg}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
