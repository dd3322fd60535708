"""Qualitative runs on generated stand-in scenes (not part of pass/fail).

    texture   periodic texture with a square hole, identity + gradient graph
    steering  two-region scene with a diagonal boundary, anisotropic
              dominance guided by a completed edge map
    mixed     two graphs whose partition fields split the image into halves

    python3 scripts/stand_in_scenes.py --size 96 --out results/scenes
"""
import argparse
import time
from pathlib import Path

import numpy as np

from nlinpaint.config import InpaintConfig, parse_text
from nlinpaint.image import psnr, save_image, save_mask
from nlinpaint.pipeline import run, run_baseline


def texture_scene(n, rng):
    tile = rng.random((8, 8))
    r, c = np.mgrid[:n, :n]
    img = 0.6 * np.tile(tile, (n // 8 + 1, n // 8 + 1))[:n, :n] + 0.2 * np.sin(2 * np.pi * c / 16) + 0.2
    mask = np.zeros((n, n), bool)
    mask[n // 3: 2 * n // 3, n // 3: 2 * n // 3] = True
    return np.clip(img, 0, 1), mask


def steering_scene(n, rng):
    r, c = np.mgrid[:n, :n]
    above = r < c
    img = np.where(above, 0.25, 0.75) + 0.05 * rng.standard_normal((n, n))
    mask = np.zeros((n, n), bool)
    mask[n // 3: 2 * n // 3, n // 3: 2 * n // 3] = True
    edges = np.abs(r - c) < 1
    return np.clip(img, 0, 1), mask, edges


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=96)
    ap.add_argument("--out", default="results/scenes")
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0)
    n = args.size
    base = "graph.1.patch.size = 9x9\ngraph.1.patch.sigma = 4\ninit = multiscale\nouter.max_iter = 20\n"

    img, mask = texture_scene(n, rng)
    scenes = {"texture": (img, mask, base + "graph.1.filters = identity,grad\ngraph.1.lambda.grad = 0.5\n")}

    img, mask, edges = steering_scene(n, rng)
    save_mask(out / "steering_edges.png", edges)
    scenes["steering"] = (img, mask, base + "graph.1.filters = identity,grad\n"
                          f"graph.1.lambda.grad = aniso:{(out / 'steering_edges.png').resolve()}:0.1:10\n")

    beta = np.zeros((n, n))
    beta[:, : n // 2] = 1.0
    save_image(out / "mixed_beta.png", beta)
    scenes["mixed"] = (img, mask, base + f"graph.1.filters = identity\ngraph.1.beta = file:{(out / 'mixed_beta.png').resolve()}\n"
                       "graph.2.patch.size = 5x5\ngraph.2.filters = identity,laplacian\ngraph.2.beta = 0.5\n")

    print(f"{'scene':<10} {'outer':>5} {'psnr':>8} {'harmonic':>9} {'seconds':>8}")
    for name, (u, m, text) in scenes.items():
        save_image(out / f"{name}_input.png", np.where(m, 0.5, u))
        t = time.perf_counter()
        res = run(u, m, InpaintConfig.from_flat(parse_text(text)), threads=args.threads)
        dt = time.perf_counter() - t
        save_image(out / f"{name}_result.png", res.image)
        harm = run_baseline(u, m, "harmonic", threads=args.threads)
        print(f"{name:<10} {res.iterations:>5} {psnr(res.image, u[..., None]):>8.2f} "
              f"{psnr(harm, u[..., None]):>9.2f} {dt:>8.1f}")


if __name__ == "__main__":
    main()
