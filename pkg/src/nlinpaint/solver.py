"""Image update: auxiliary fields, the Euler-Lagrange system and its solvers.

With delta weights the image-step objective is

    J(u) = sum_z sum_i lam_i(z) [k(z) (g_i*u)(z)^2 - 2 (g_i*u)(z) f_i(z)] + const

summed over graphs and channels, where ``k`` and ``f_i`` are accumulated by
scattering every (x, h) term of the energy onto ``z = x + h``.  Terms with
``z`` outside O* do not depend on the unknowns, so J differs from the energy
by a constant and the normal equations are

    P_O sum_i G_i^T D_i G_i P_O^T u_O = P_O [sum_i G_i^T F_i - A u_known]

with ``D_i = 1_{O*} sum_j lam_ij k_j`` and ``F_i = 1_{O*} sum_j lam_ij f_ij``.
``G_i`` is convolution with the boundary policy and ``G_i^T`` its exact
transpose, so the operator is symmetric on the unknowns.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve
from scipy.sparse.linalg import LinearOperator, cg

from .filters import Kernel, apply_padded, convolve, fold, pad, scatter_padded
from .image import union_footprint
from .metric import FeatureView, compute_features


class IllPosedError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


class UncoveredPixelError(RuntimeError):
    pass


@dataclass
class AuxFields:
    k: list        # per graph, (H, W)
    f: list        # per graph, (H, W, n_active, C) in the order of ``active``
    active: list   # per graph, kernel indices

    def forcing(self, j: int, i: int) -> np.ndarray:
        return self.f[j][:, :, self.active[j].index(i), :]


def compute_aux_fields(nnfs, graphs, features, regions) -> AuxFields:
    """Scatter the delta-weight energy terms onto the pixels they touch.

    For each x with target y and patch offset h the weight
    ``beta(x) dP(h) / S(x, y)`` is added to ``k`` at ``x + h`` and, times
    ``(g_i*u)(y + h)``, to ``f_i`` (``S`` renormalizes the measure over the
    offsets that stay inside the grid at both ends).
    """
    H, W, _, C = features.shape
    ks, fs, actives = [], [], []
    for nnf, graph in zip(nnfs, graphs):
        active = graph.active
        src = features[:, :, active, :].reshape(H * W, -1)
        xs, ys = nnf.pairs()
        beta = graph.beta((H, W)).ravel()[xs]
        dr, dc, dp = graph.patch.offsets
        xr, xc = np.divmod(xs, W)
        yr, yc = np.divmod(ys, W)
        valid = []
        S = np.zeros(len(xs))
        for a, b, p in zip(dr, dc, dp):
            ok = ((xr + a >= 0) & (xr + a < H) & (xc + b >= 0) & (xc + b < W)
                  & (yr + a >= 0) & (yr + a < H) & (yc + b >= 0) & (yc + b < W))
            valid.append(ok)
            S += p * ok
        k = np.zeros(H * W)
        f = np.zeros((H * W, src.shape[1]))
        for a, b, p, ok in zip(dr, dc, dp, valid):
            idx = np.flatnonzero(ok)
            w = beta[idx] * p / S[idx]
            z = (xr[idx] + a) * W + xc[idx] + b
            t = (yr[idx] + a) * W + yc[idx] + b
            # x -> x + h is injective for fixed h, so no duplicate targets
            k[z] += w
            f[z] += w[:, None] * src[t]
        ks.append(k.reshape(H, W))
        fs.append(f.reshape(H, W, len(active), C))
        actives.append(active)
    return AuxFields(ks, fs, actives)


def energy(u, nnfs, graphs, kernels, boundary: str = "replicate") -> float:
    """``sum_j sum_x beta_j(x) d_j(x, NNF_j(x))``."""
    feats = compute_features(u, kernels, boundary)
    total = 0.0
    for nnf, graph in zip(nnfs, graphs):
        xs, ys = nnf.pairs()
        if xs.size == 0:
            continue
        view = FeatureView(feats, graph)
        beta = graph.beta(view.shape).ravel()[xs]
        d = np.empty(len(xs))
        step = 4096
        for s in range(0, len(xs), step):
            d[s:s + step] = view.pair_distances(xs[s:s + step], ys[s:s + step])
        total += float(np.sum(beta * d))
    return total


def _coefficients(aux: AuxFields, graphs, n_kernels: int, region: np.ndarray):
    """Per-kernel D_i (H, W) and F_i (H, W, C), masked to ``region`` (O*)."""
    D, F = {}, {}
    for j, graph in enumerate(graphs):
        for i in aux.active[j]:
            lam = np.asarray(graph.dominance[i], dtype=float)
            d = lam * aux.k[j] * region
            f = (lam * region)[..., None] * aux.forcing(j, i)
            D[i] = D[i] + d if i in D else d
            F[i] = F[i] + f if i in F else f
    return {i: D[i] for i in sorted(D)}, {i: F[i] for i in sorted(F)}


def image_objective(u, aux: AuxFields, graphs, kernels, regions, boundary: str = "replicate") -> float:
    """Image-step objective, equal to the energy up to a u-independent constant."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 2:
        u = u[:, :, None]
    D, F = _coefficients(aux, graphs, len(kernels), regions.filter_extended)
    total = 0.0
    for i in D:
        g = convolve(u, kernels[i], boundary)
        total += float(np.sum(D[i][..., None] * g * g - 2.0 * g * F[i]))
    return total


class LinearSystem:
    """Matrix-free normal equations of the image step on the pixels of O.

    ``gamma_groups`` maps kernel-index lists of nonlocal gamma filters to their
    gamma^2 stencils; a group whose members share one coefficient field is
    applied through three whole-kernel convolutions instead of one pass per
    direction.
    """

    def __init__(self, kernels, D: dict, F: dict, inpaint: np.ndarray,
                 boundary: str = "replicate", gamma_groups=None):
        self.kernels = kernels
        self.D, self.F = D, F
        self.inpaint = np.asarray(inpaint, dtype=bool)
        self.shape = self.inpaint.shape
        self.boundary = boundary
        self.unknowns = np.flatnonzero(self.inpaint.ravel())
        self.fast = []
        grouped = set()
        for idx, g2 in (gamma_groups or {}).items():
            members = [i for i in idx if i in D]
            if len(members) < 2 or len(members) != len(idx):
                continue
            d0 = D[members[0]]
            if all(np.array_equal(D[i], d0) for i in members[1:]):
                self.fast.append((list(members), np.asarray(g2, dtype=float), d0))
                grouped.update(members)
        self.generic = [i for i in D if i not in grouped and np.any(D[i] != 0)]
        hr = max([kernels[i].half_height for i in D] + [0])
        hc = max([kernels[i].half_width for i in D] + [0])
        self.rr, self.rc = hr, hc

    @classmethod
    def build(cls, aux, graphs, kernels, regions, boundary="replicate", gamma_groups=None):
        D, F = _coefficients(aux, graphs, len(kernels), regions.filter_extended)
        return cls(kernels, D, F, regions.inpaint, boundary, gamma_groups)

    def _padded_zero(self, a):
        return np.pad(a, ((self.rr, self.rr), (self.rc, self.rc)))

    def apply_full(self, v: np.ndarray) -> np.ndarray:
        """``sum_i G_i^T D_i G_i v`` for a single-channel field on the full grid."""
        rr, rc = self.rr, self.rc
        P = pad(v, rr, rc, self.boundary)
        acc = np.zeros_like(P)
        out = np.zeros(self.shape)
        for i in self.generic:
            k = self.kernels[i]
            g = apply_padded(P, k, rr, rc, self.shape)
            scatter_padded(acc, self.D[i] * g, k, rr, rc)
        for _, g2, d in self.fast:
            dv = d * v
            acc += P * fftconvolve(self._padded_zero(d), g2, mode="same")
            acc -= fftconvolve(self._padded_zero(dv), g2, mode="same")
            corr = fftconvolve(P, g2[::-1, ::-1], mode="same")[rr:rr + self.shape[0], rc:rc + self.shape[1]]
            out += dv * g2.sum() - d * corr
        return out + fold(acc, self.shape, rr, rc, self.boundary)

    def forcing_full(self, c: int) -> np.ndarray:
        """``sum_i G_i^T F_i`` for channel ``c``."""
        rr, rc = self.rr, self.rc
        acc = np.zeros((self.shape[0] + 2 * rr, self.shape[1] + 2 * rc))
        for i, f in self.F.items():
            scatter_padded(acc, f[:, :, c], self.kernels[i], rr, rc)
        return fold(acc, self.shape, rr, rc, self.boundary)

    def diagonal(self) -> np.ndarray:
        """Jacobi diagonal on O (exact away from the frame)."""
        rr, rc = self.rr, self.rc
        acc = np.zeros((self.shape[0] + 2 * rr, self.shape[1] + 2 * rc))
        out = np.zeros(self.shape)
        for i in self.generic:
            k = self.kernels[i]
            scatter_padded(acc, self.D[i], Kernel(k.coeffs ** 2), rr, rc)
        for _, g2, d in self.fast:
            acc += fftconvolve(self._padded_zero(d), g2, mode="same")
            out += d * g2.sum()
        diag = out + fold(acc, self.shape, rr, rc, self.boundary)
        return np.maximum(diag.ravel()[self.unknowns], 0.0)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        v = np.zeros(self.shape[0] * self.shape[1])
        v[self.unknowns] = x
        return self.apply_full(v.reshape(self.shape)).ravel()[self.unknowns]

    def rhs(self, u_channel: np.ndarray, c: int) -> np.ndarray:
        known = np.where(self.inpaint, 0.0, u_channel)
        return (self.forcing_full(c) - self.apply_full(known)).ravel()[self.unknowns]


def check_well_posed(kernels, D: dict, inpaint: np.ndarray) -> None:
    """Reject systems that leave a component of O without data.

    Without an identity term, every connected component of O must reach a
    known pixel through the kernel supports.
    """
    if any(kernels[i].is_identity() and np.all(D[i][inpaint] > 0) for i in D):
        return
    active = [kernels[i] for i in D if np.any(D[i] != 0)]
    if not active:
        raise IllPosedError("ill-posed configuration: no filter acts on the inpainting region")
    fp = union_footprint([k.footprint for k in active])
    labels, n = ndimage.label(inpaint, structure=np.ones((3, 3)))
    for lab in range(1, n + 1):
        comp = labels == lab
        reach = ndimage.binary_dilation(comp, structure=fp)
        if not np.any(reach & ~inpaint):
            raise IllPosedError(
                "ill-posed configuration: a component of the inpainting region has no Dirichlet data; "
                "add the identity filter (it acts as a Tikhonov regularizer)")


@dataclass
class SolveResult:
    u: np.ndarray
    iterations: list     # CG iterations per channel
    residuals: list      # relative residual per channel


def solve_bvp(system: LinearSystem, u: np.ndarray, tol: float = 1e-6, max_iter: int | None = None,
              threads: int = 1) -> SolveResult:
    """Preconditioned CG per channel, warm-started from ``u`` on O."""
    if not tol > 0:
        raise ValueError("solver tolerance must be positive")
    u = np.array(u, dtype=float)
    if u.ndim == 2:
        u = u[:, :, None]
    n = system.unknowns.size
    if n == 0:
        return SolveResult(u, [0] * u.shape[2], [0.0] * u.shape[2])
    check_well_posed(system.kernels, system.D, system.inpaint)
    diag = system.diagonal()
    if np.any(diag <= 0):
        r, c = np.divmod(system.unknowns[np.argmax(diag <= 0)], system.shape[1])
        raise IllPosedError(
            f"ill-posed configuration: zero diagonal at pixel ({r}, {c}); "
            "add the identity filter (it acts as a Tikhonov regularizer)")
    max_iter = 10 * n if max_iter is None else max_iter
    A = LinearOperator((n, n), matvec=system.matvec, dtype=float)
    M = LinearOperator((n, n), matvec=lambda x: x / diag, dtype=float)

    def one(c):
        b = system.rhs(u[:, :, c], c)
        bn = np.linalg.norm(b)
        if bn == 0.0:
            return np.zeros(n), 0, 0.0
        count = [0]

        def cb(_):
            count[0] += 1

        x0 = u[:, :, c].ravel()[system.unknowns]
        x, info = cg(A, b, x0=x0, rtol=tol, atol=0.0, maxiter=max_iter, M=M, callback=cb)
        res = float(np.linalg.norm(b - system.matvec(x)) / bn)
        if info != 0 or res > 10 * tol:
            raise ConvergenceError(
                f"linear solver did not converge in {max_iter} iterations (relative residual {res:.3e})", res)
        return x, count[0], res

    channels = range(u.shape[2])
    if threads > 1 and u.shape[2] > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, channels))
    else:
        results = [one(c) for c in channels]
    its, ress = [], []
    for c, (x, it, res) in enumerate(results):
        flat = u[:, :, c].ravel()
        flat[system.unknowns] = x
        u[:, :, c] = flat.reshape(system.shape)
        its.append(it)
        ress.append(res)
    return SolveResult(u, its, ress)


def explicit_update_g1(aux: AuxFields, graphs, regions, u: np.ndarray, identity_index: int) -> np.ndarray:
    """Closed-form image step when the identity is the only filter.

    ``u(x) = sum_j lam_j(x) f_j(x) / sum_j lam_j(x) k_j(x)`` on O.
    """
    u = np.array(u, dtype=float)
    if u.ndim == 2:
        u = u[:, :, None]
    num = np.zeros(u.shape)
    den = np.zeros(u.shape[:2])
    for j, graph in enumerate(graphs):
        if set(aux.active[j]) - {identity_index}:
            raise ValueError("explicit update requires the identity filter only")
        if identity_index not in aux.active[j]:
            continue
        lam = np.asarray(graph.dominance[identity_index], dtype=float)
        num += (lam * np.ones(den.shape))[..., None] * aux.forcing(j, identity_index)
        den += lam * aux.k[j]
    O = regions.inpaint
    bad = O & ~(den > 0)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise UncoveredPixelError(f"uncovered pixel ({r}, {c}): no patch weight reaches it")
    safe = np.where(den > 0, den, 1.0)
    u[O] = (num / safe[..., None])[O]
    return u
