"""Alternating minimization: initialization, weight/image updates, multiscale."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, InpaintConfig
from .filters import GRAD_X, GRAD_Y, LAPLACIAN, KernelBank
from .image import (DimensionError, as_image, derive_regions, downscale, load_image, load_mask,
                    save_image, upscale)
from .metric import FeatureGraph, aniso_lambda, compute_features, normalize_partitions, patch_measure
from .nnf import compute_nnf_accelerated, compute_nnf_exact
from .solver import (LinearSystem, compute_aux_fields, energy, explicit_update_g1, solve_bvp)

log = logging.getLogger(__name__)


class EnergyIncreaseError(RuntimeError):
    pass


class PyramidError(ValueError):
    pass


@dataclass
class TraceRow:
    level: int
    iter: int
    energy: float             # after the image step
    energy_weights: float     # after the weight step
    residual: float           # largest relative linear residual over channels
    image_delta: float        # max |change| on O
    cg_iterations: int

    def csv(self) -> str:
        return f"{self.iter},{self.energy:.17g},{self.residual:.6g},{self.image_delta:.17g}"


@dataclass
class RunResult:
    image: np.ndarray
    trace: list = field(default_factory=list)
    iterations: int = 0       # outer iterations at the finest level
    converged: bool = True

    def finest(self) -> list:
        return [r for r in self.trace if r.level == 0]


def write_trace(path, rows) -> None:
    with open(path, "w") as fh:
        fh.write("iter,energy,residual,image_delta\n")
        for r in rows:
            fh.write(r.csv() + "\n")


# -- problem assembly ----------------------------------------------------------


def build_bank(config: InpaintConfig) -> KernelBank:
    names = []
    for g in config.graphs:
        names.extend(n for n in g.filters if n not in names)
    try:
        return KernelBank.from_names(names, config.kernels)
    except KeyError as e:
        raise ConfigError(str(e.args[0])) from None


def _gray_field(path, shape) -> np.ndarray:
    img = load_image(path)
    if img.shape[:2] != tuple(shape):
        raise DimensionError(f"{path}: field {img.shape[:2]} does not match image {tuple(shape)}")
    return img.mean(axis=2)


def _field(spec, shape):
    if isinstance(spec, str) and spec.startswith("file:"):
        return _gray_field(spec[5:], shape)
    if isinstance(spec, str) and spec.startswith("aniso:"):
        parts = spec.split(":")
        edges = load_mask(parts[1])
        if edges.shape != tuple(shape):
            raise DimensionError(f"{parts[1]}: edge map {edges.shape} does not match image {tuple(shape)}")
        if len(parts) == 4:
            return aniso_lambda(edges, float(parts[2]), float(parts[3]))
        return aniso_lambda(edges)
    return float(spec)


@dataclass
class Level:
    image: np.ndarray
    mask: np.ndarray
    lams: list      # per graph: filter name -> const or (H, W)
    betas: list     # per graph: const or (H, W)

    @property
    def shape(self):
        return self.mask.shape

    def coarser(self, factor: int) -> "Level":
        ds = lambda v: v if np.ndim(v) == 0 else downscale(v, factor)
        return Level(downscale(self.image, factor),
                     downscale(self.mask.astype(float), factor) > 0,
                     [{k: ds(v) for k, v in lam.items()} for lam in self.lams],
                     [ds(b) for b in self.betas])


def full_level(u_hat, mask, config: InpaintConfig) -> Level:
    shape = mask.shape
    lams = [{n: _field(g.lambda_spec(n), shape) for n in g.filters} for g in config.graphs]
    betas = [_field(g.beta, shape) for g in config.graphs]
    return Level(u_hat, mask, lams, betas)


def max_patch(config: InpaintConfig) -> tuple:
    return (max(g.patch_size[0] for g in config.graphs), max(g.patch_size[1] for g in config.graphs))


def level_graphs(level: Level, config: InpaintConfig, bank: KernelBank):
    """Regions and FeatureGraphs for one pyramid level."""
    supports = []
    for lam in level.lams:
        for name, v in lam.items():
            if np.any(np.asarray(v) != 0):
                supports.extend(bank.kernels[i].footprint for i in bank.groups[name])
    regions = derive_regions(level.mask, supports, max_patch(config))
    betas = normalize_partitions(level.betas, level.shape, region=regions.patch_extended)
    graphs = []
    for g, lam, beta in zip(config.graphs, level.lams, betas):
        dominance = {}
        for name in g.filters:
            for i in bank.groups[name]:
                dominance[i] = lam[name]
        patch = patch_measure(g.patch_size, g.patch_kind, g.patch_sigma)
        try:
            graphs.append(FeatureGraph(patch, dominance, beta, g.selectivity))
        except ValueError as e:
            raise ConfigError(str(e)) from None
    return regions, graphs


# -- initialization ------------------------------------------------------------


def random_fill(u_hat, mask, seed: int) -> np.ndarray:
    u = as_image(u_hat).copy()
    rng = np.random.default_rng(seed)
    u[mask] = rng.uniform(size=(int(mask.sum()), u.shape[2]))
    return u


def default_levels(shape, patch, factor: int) -> int:
    """Deepest pyramid whose coarsest edge stays >= 4x the patch width."""
    need = 4 * max(patch)
    levels, edge = 1, min(shape)
    while -(-edge // factor) >= need:
        edge = -(-edge // factor)
        levels += 1
    return levels


def build_pyramid(level: Level, levels: int, factor: int, patch) -> list:
    pyr = [level]
    for _ in range(levels - 1):
        nxt = pyr[-1].coarser(factor)
        if min(nxt.shape) < max(patch):
            raise PyramidError(
                f"pyramid too deep: level {len(pyr)} is {nxt.shape[0]}x{nxt.shape[1]}, "
                f"smaller than the {patch[0]}x{patch[1]} patch")
        pyr.append(nxt)
    return pyr


def initialize(u_hat, mask, config: InpaintConfig, *, threads: int = 1, dump_dir=None,
               trace: list | None = None, bank: KernelBank | None = None) -> np.ndarray:
    """Starting image for the finest level.

    ``random`` fills O with uniform noise, ``provided`` loads an image and
    re-stamps the known pixels, ``multiscale`` solves coarser levels first and
    upscales the result.
    """
    u_hat = as_image(u_hat)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != u_hat.shape[:2]:
        raise DimensionError(f"mask {mask.shape} does not match image {u_hat.shape[:2]}")
    if not mask.any():
        return u_hat.copy()
    spec = config.init
    if spec.mode == "provided":
        u = load_image(spec.path)
        if u.shape[:2] != u_hat.shape[:2]:
            raise DimensionError(f"{spec.path}: initial image {u.shape[:2]} does not match {u_hat.shape[:2]}")
        if u.shape[2] != u_hat.shape[2]:
            u = np.repeat(u.mean(axis=2, keepdims=True), u_hat.shape[2], axis=2)
        u = u.copy()
        u[~mask] = u_hat[~mask]
        return u
    if spec.mode == "random":
        return random_fill(u_hat, mask, config.seed)
    bank = bank or build_bank(config)
    levels = spec.levels or default_levels(mask.shape, max_patch(config), spec.factor)
    pyr = build_pyramid(full_level(u_hat, mask, config), levels, spec.factor, max_patch(config))
    u = random_fill(pyr[-1].image, pyr[-1].mask, config.seed)
    for lv in range(len(pyr) - 1, 0, -1):
        res = solve_level(pyr[lv], u, config, bank, level_index=lv, threads=threads, dump_dir=dump_dir)
        if trace is not None:
            trace.extend(res.trace)
        finer = pyr[lv - 1]
        u = upscale(res.image, finer.shape)
        u[~finer.mask] = finer.image[~finer.mask]
    return u


# -- outer loop ----------------------------------------------------------------


def _seed(base: int, *parts) -> int:
    return int(np.random.SeedSequence([base, *parts]).generate_state(1)[0])


def solve_level(level: Level, u0, config: InpaintConfig, bank: KernelBank, *, level_index: int = 0,
                threads: int = 1, dump_dir=None) -> RunResult:
    """Alternate exact weight updates and image updates on one grid."""
    regions, graphs = level_graphs(level, config, bank)
    u_hat, mask = level.image, level.mask
    u = np.array(u0, dtype=float)
    u[~mask] = u_hat[~mask]
    if not mask.any():
        return RunResult(u, [], 0, True)
    kernels = bank.kernels
    identity = [i for i, k in enumerate(kernels) if k.is_identity()]
    identity_only = all(set(g.active) <= set(identity) for g in graphs)
    gamma_groups = {tuple(bank.groups[n]): g2 for n, g2 in bank.gamma2.items()}
    mode = config.nnf_mode
    accelerated = mode.kind == "accelerated" and mask.size > mode.threshold
    tol = config.solver_tol
    rows, prev_nnfs, prev_e, e0 = [], [None] * len(graphs), None, None
    converged = False
    for it in range(1, config.outer_max_iter + 1):
        feats = compute_features(u, kernels, config.boundary)
        nnfs = []
        for j, g in enumerate(graphs):
            if accelerated:
                nnfs.append(compute_nnf_accelerated(
                    feats, g, regions, mode.iterations, _seed(mode.seed, config.seed, level_index, it, j),
                    graph_index=j, previous=prev_nnfs[j]))
            else:
                nnfs.append(compute_nnf_exact(feats, g, regions, graph_index=j))
        e_w = 0.0
        for nnf, g in zip(nnfs, graphs):
            xs, _ = nnf.pairs()
            e_w += float(np.sum(g.beta(mask.shape).ravel()[xs] * nnf.distance.ravel()[xs]))
        if e0 is None:
            e0 = e_w
        slack = 10 * tol * e0 + 1e-12 * max(abs(e_w), abs(prev_e or 0.0), 1e-300)
        if prev_e is not None and e_w > prev_e + slack:
            raise EnergyIncreaseError(
                f"energy increased in the weight step at iteration {it}: {prev_e:.6e} -> {e_w:.6e}")
        aux = compute_aux_fields(nnfs, graphs, feats, regions)
        if identity_only:
            u_new = explicit_update_g1(aux, graphs, regions, u, identity[0])
            residual, cg_its = 0.0, 0
        else:
            system = LinearSystem.build(aux, graphs, kernels, regions, config.boundary, gamma_groups)
            sr = solve_bvp(system, u, tol, config.solver_max_iter, threads=threads)
            u_new, residual, cg_its = sr.u, max(sr.residuals), int(sum(sr.iterations))
        e_i = energy(u_new, nnfs, graphs, kernels, config.boundary)
        if e_i > e_w + slack:
            raise EnergyIncreaseError(
                f"energy increased in the image step at iteration {it}: {e_w:.6e} -> {e_i:.6e}")
        delta = float(np.max(np.abs(u_new - u)[mask]))
        rows.append(TraceRow(level_index, it, e_i, e_w, residual, delta, cg_its))
        log.info("level %d iter %d energy %.6e delta %.3e", level_index, it, e_i, delta)
        u, prev_e, prev_nnfs = u_new, e_i, nnfs
        if dump_dir is not None:
            Path(dump_dir).mkdir(parents=True, exist_ok=True)
            save_image(Path(dump_dir) / f"level{level_index}_iter{it:04d}.png", u)
        if delta < config.outer_tol:
            converged = True
            break
    return RunResult(u, rows, len(rows), converged)


def run(u_hat, mask, config: InpaintConfig, *, threads: int = 1, dump_dir=None) -> RunResult:
    """Full inpainting run; the output equals ``u_hat`` exactly off O."""
    u_hat = as_image(u_hat)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != u_hat.shape[:2]:
        raise DimensionError(f"mask {mask.shape} does not match image {u_hat.shape[:2]}")
    if not mask.any():
        return RunResult(u_hat.copy(), [], 0, True)
    bank = build_bank(config)
    trace: list = []
    u0 = initialize(u_hat, mask, config, threads=threads, dump_dir=dump_dir, trace=trace, bank=bank)
    res = solve_level(full_level(u_hat, mask, config), u0, config, bank, threads=threads, dump_dir=dump_dir)
    res.trace = trace + res.trace
    res.image[~mask] = u_hat[~mask]
    return res


def run_baseline(u_hat, mask, kind: str = "harmonic", boundary: str = "replicate", tol: float = 1e-10,
                 max_iter: int | None = None, threads: int = 1) -> np.ndarray:
    """Zero-forcing Dirichlet extension with the gradient or Laplacian filters."""
    u_hat = as_image(u_hat)
    mask = np.asarray(mask, dtype=bool)
    if kind == "harmonic":
        kernels = [GRAD_X, GRAD_Y]
    elif kind == "biharmonic":
        kernels = [LAPLACIAN]
    else:
        raise ValueError(f"unknown baseline {kind!r}; use harmonic or biharmonic")
    ones = np.ones(mask.shape)
    D = {i: ones for i in range(len(kernels))}
    F = {i: np.zeros(mask.shape + (u_hat.shape[2],)) for i in range(len(kernels))}
    system = LinearSystem(kernels, D, F, mask, boundary)
    u0 = u_hat.copy()
    u0[mask] = 0.0
    return solve_bvp(system, u0, tol, max_iter, threads=threads).u
