"""Weight update: nearest-neighbor fields and (diagnostic) soft weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metric import FeatureView

# relative tolerance under which two patch distances count as tied
TIE_RTOL = 1e-10
# budget (float64 elements) for one block of pairwise work
_BLOCK = 1 << 22
# random-search samples per radius per pixel
SEARCH_SAMPLES = 4


class NoExemplarsError(RuntimeError):
    pass


@dataclass
class NNField:
    target: np.ndarray    # (H, W) flat index of the exemplar pixel, -1 if unset
    distance: np.ndarray  # (H, W) achieved patch distance, nan if unset
    graph: int = 0

    @property
    def shape(self):
        return self.target.shape

    def pairs(self):
        xs = np.flatnonzero(self.target.ravel() >= 0)
        return xs, self.target.ravel()[xs]

    def write_dump(self, fh) -> None:
        """Lines ``x y -> tx ty dist`` (x = column, y = row), row-major."""
        W = self.shape[1]
        xs, ys = self.pairs()
        d = self.distance.ravel()[xs]
        for xi, yi, di in zip(xs, ys, d):
            fh.write(f"{xi % W} {xi // W} -> {yi % W} {yi // W} {di:.17g}\n")


def read_nnf_dump(fh, shape, graph: int = 0) -> NNField:
    H, W = shape
    target = np.full(H * W, -1, dtype=np.int64)
    dist = np.full(H * W, np.nan)
    for line in fh:
        if not line.strip():
            continue
        lhs, rhs = line.split("->")
        x, y = (int(v) for v in lhs.split())
        tx, ty, d = rhs.split()
        target[y * W + x] = int(ty) * W + int(tx)
        dist[y * W + x] = float(d)
    return NNField(target.reshape(H, W), dist.reshape(H, W), graph)


def _view(features, graph) -> FeatureView:
    return features if isinstance(features, FeatureView) else FeatureView(features, graph)


def _domain(view: FeatureView, regions):
    beta = view.graph.beta(view.shape)
    xs = np.flatnonzero((regions.patch_extended & (beta > 0)).ravel())
    ys = np.flatnonzero(regions.exemplars.ravel())
    if ys.size == 0:
        raise NoExemplarsError("no exemplars available: the extended inpainting region covers the image")
    return xs, ys


def _chunked_pair_distances(view: FeatureView, xs, ys) -> np.ndarray:
    step = max(1, _BLOCK // max(1, view.graph.patch.weights.size * view.n_columns))
    out = np.empty(len(xs))
    for s in range(0, len(xs), step):
        out[s:s + step] = view.pair_distances(xs[s:s + step], ys[s:s + step])
    return out


def _select(cx, cy, cd, n):
    """Per x: smallest index among candidates tied (TIE_RTOL) with the minimum."""
    order = np.lexsort((cy, cx))
    cx, cy, cd = cx[order], cy[order], cd[order]
    starts = np.flatnonzero(np.r_[True, cx[1:] != cx[:-1]])
    dmin = np.minimum.reduceat(cd, starts)
    group = np.repeat(np.arange(len(starts)), np.diff(np.r_[starts, len(cx)]))
    ok = cd <= dmin[group] * (1 + TIE_RTOL)
    big = np.iinfo(np.int64).max
    ybest = np.minimum.reduceat(np.where(ok, cy, big), starts)
    hit = ok & (cy == ybest[group])
    dbest = np.full(len(starts), np.nan)
    dbest[group[hit]] = cd[hit]
    assert len(starts) == n
    return cx[starts], ybest, dbest


def compute_nnf_exact(features, graph, regions, graph_index: int = 0) -> NNField:
    """Exact nearest-neighbor field of O~* into its complement.

    Distances to all exemplars are screened with blocked matrix products
    (identical exemplar patches are scanned once, represented by their
    smallest pixel index); every candidate that could be the minimum within
    the screening error is then re-evaluated directly.  Ties are broken by
    the smallest row-major exemplar index.
    """
    view = _view(features, graph)
    H, W = view.shape
    xs, ys = _domain(view, regions)
    target = np.full(H * W, -1, dtype=np.int64)
    dist = np.full(H * W, np.nan)
    if xs.size == 0:
        return NNField(target.reshape(H, W), dist.reshape(H, W), graph_index)

    P, F = view.graph.patch.weights.size, view.n_columns
    b, my = view.gather(ys)
    key = np.ascontiguousarray(np.concatenate([my.astype(float), b.reshape(len(ys), -1)], axis=1))
    rows = key.view(np.dtype((np.void, key.dtype.itemsize * key.shape[1]))).ravel()
    _, first = np.unique(rows, return_index=True)
    first.sort()
    reps = ys[first]
    b, my = b[first], my[first].astype(float)
    B2 = b.reshape(len(reps), P * F)
    if view.lam_const is not None:
        B3 = np.sum(view.lam_const * (b * b), axis=2)
    else:
        B3 = (b * b).reshape(len(reps), P * F)
    del key, rows, b

    err_scale = 4.0 * (P * F + 4) * np.finfo(float).eps
    ny_blk = max(1, min(len(reps), _BLOCK // max(1, 2 * P * F)))
    nx_blk = max(1, min(len(xs), _BLOCK // max(1, 2 * P * F), _BLOCK // ny_blk))
    cand_x, cand_y = [], []
    for xs0 in range(0, len(xs), nx_blk):
        xc = xs[xs0:xs0 + nx_blk]
        a, mx, lam = view.gather(xc, with_lambda=True)
        w = view.dp[None, :] * mx
        om = w[:, :, None] * lam
        A1 = np.sum(om * a * a, axis=2)
        A2 = (om * a).reshape(len(xc), P * F)
        A3 = w if view.lam_const is not None else om.reshape(len(xc), P * F)
        best_upper = np.full(len(xc), np.inf)
        blocks = []
        for ys0 in range(0, len(reps), ny_blk):
            sl = slice(ys0, ys0 + ny_blk)
            T = A1 @ my[sl].T + A3 @ B3[sl].T
            S = w @ my[sl].T
            d = (T - 2.0 * (A2 @ B2[sl].T)) / S
            # dot-product rounding bound (4x margin); all-zero patches give an exact 0
            err = err_scale * T / S
            best_upper = np.minimum(best_upper, np.min(d + err, axis=1))
            keep = d - err <= best_upper[:, None] * (1 + TIE_RTOL)
            ii, jj = np.nonzero(keep)
            blocks.append((ii, jj + ys0, (d - err)[ii, jj], (d + err)[ii, jj]))
        ii, jj, lo, up = (np.concatenate(t) for t in zip(*blocks))
        sel = lo <= best_upper[ii] * (1 + TIE_RTOL)
        ii, jj, lo, up = ii[sel], jj[sel], lo[sel], up[sel]
        order = np.argsort(ii, kind="stable")      # keeps jj ascending per x
        ii, jj, lo, up = ii[order], jj[order], lo[order], up[order]
        starts = np.flatnonzero(np.r_[True, ii[1:] != ii[:-1]])
        min_lo = np.minimum.reduceat(lo, starts)
        # the smallest-index candidate is certified when it cannot lose the tie
        sure = up[starts] <= np.maximum(min_lo, 0.0) * (1 + TIE_RTOL)
        # an exact direct zero is a global minimum (distances are nonnegative)
        check = np.flatnonzero(~sure)
        if check.size:
            d0 = _chunked_pair_distances(view, xc[ii[starts[check]]], reps[jj[starts[check]]])
            sure[check[d0 == 0.0]] = True
        drop = np.repeat(sure, np.diff(np.r_[starts, len(ii)]))
        drop[starts] = False
        cand_x.append(xc[ii[~drop]])
        cand_y.append(reps[jj[~drop]])
    cx = np.concatenate(cand_x)
    cy = np.concatenate(cand_y)
    cd = _chunked_pair_distances(view, cx, cy)
    bx, by, bd = _select(cx, cy, cd, len(xs))
    target[bx] = by
    dist[bx] = bd
    return NNField(target.reshape(H, W), dist.reshape(H, W), graph_index)


def compute_nnf_accelerated(features, graph, regions, iterations: int = 8, seed: int = 0,
                            graph_index: int = 0, previous: NNField | None = None) -> NNField:
    """Randomized approximate field: random init, propagation, random search.

    Propagation passes offsets between pixels at distances halving from the
    image size down to one (jump flooding); every accepted candidate is a
    real distance evaluation, so each achieved distance bounds the exact one
    from above.  Deterministic for a given seed.  Targets of ``previous``
    that are still valid exemplars compete with the random start, so a
    warm-started search never ends above the previous field.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    view = _view(features, graph)
    H, W = view.shape
    xs, ys = _domain(view, regions)
    target = np.full(H * W, -1, dtype=np.int64)
    dist = np.full(H * W, np.nan)
    if xs.size == 0:
        return NNField(target.reshape(H, W), dist.reshape(H, W), graph_index)
    rng = np.random.default_rng(seed)
    is_ex = regions.exemplars.ravel()
    xr, xc = np.divmod(xs, W)
    cur = ys[rng.integers(len(ys), size=len(xs))]
    curd = _chunked_pair_distances(view, xs, cur)
    if previous is not None and previous.shape == (H, W):
        prev = previous.target.ravel()[xs]
        ok = prev >= 0
        ok[ok] = is_ex[prev[ok]]
        cand = np.where(ok, prev, 0)
        idx = np.flatnonzero(ok)
        if idx.size:
            d = _chunked_pair_distances(view, xs[idx], cand[idx])
            better = (d < curd[idx]) | ((d == curd[idx]) & (cand[idx] < cur[idx]))
            cur[idx[better]] = cand[idx][better]
            curd[idx[better]] = d[better]
    slot = np.full(H * W, -1, dtype=np.int64)
    slot[xs] = np.arange(len(xs))

    def consider(valid, cand):
        idx = np.flatnonzero(valid)
        if idx.size == 0:
            return
        d = _chunked_pair_distances(view, xs[idx], cand[idx])
        better = (d < curd[idx]) | ((d == curd[idx]) & (cand[idx] < cur[idx]))
        take = idx[better]
        cur[take] = cand[idx][better]
        curd[take] = d[better]

    steps = []
    l = 1
    while l < max(H, W):
        steps.append(l)
        l *= 2
    steps = steps[::-1] or [1]
    for _ in range(iterations):
        for l in steps:
            for dr, dc in ((0, l), (l, 0), (0, -l), (-l, 0)):
                nr, nc = xr + dr, xc + dc
                ok = (nr >= 0) & (nr < H) & (nc >= 0) & (nc < W)
                nslot = np.where(ok, slot[np.clip(nr, 0, H - 1) * W + np.clip(nc, 0, W - 1)], -1)
                ok &= nslot >= 0
                tr, tc = np.divmod(cur[np.maximum(nslot, 0)], W)
                tr, tc = tr - dr, tc - dc
                ok &= (tr >= 0) & (tr < H) & (tc >= 0) & (tc < W)
                cand = np.clip(tr, 0, H - 1) * W + np.clip(tc, 0, W - 1)
                ok &= is_ex[cand] & (cand != cur)
                consider(ok, cand)
        r = max(H, W)
        while r >= 1:
            for _ in range(SEARCH_SAMPLES):
                tr, tc = np.divmod(cur, W)
                tr = tr + rng.integers(-r, r + 1, size=len(xs))
                tc = tc + rng.integers(-r, r + 1, size=len(xs))
                ok = (tr >= 0) & (tr < H) & (tc >= 0) & (tc < W)
                cand = np.clip(tr, 0, H - 1) * W + np.clip(tc, 0, W - 1)
                ok &= is_ex[cand] & (cand != cur)
                consider(ok, cand)
            r //= 2
    target[xs] = cur
    dist[xs] = curd
    return NNField(target.reshape(H, W), dist.reshape(H, W), graph_index)


@dataclass
class SoftWeightField:
    x: tuple
    candidates: np.ndarray  # flat exemplar indices
    weights: np.ndarray
    distances: np.ndarray


def compute_soft_weights(features, graph, regions, x, sigma: float | None = None) -> SoftWeightField:
    """Normalized ``exp(-d(x, y) / sigma)`` over all exemplars ``y``."""
    view = _view(features, graph)
    sigma = view.graph.selectivity if sigma is None else sigma
    if sigma is None or not sigma > 0:
        raise ValueError("soft weights need a positive selectivity sigma")
    H, W = view.shape
    _, ys = _domain(view, regions)
    xi = np.full(len(ys), x[0] * W + x[1])
    d = _chunked_pair_distances(view, xi, ys)
    z = -(d - d.min()) / sigma
    w = np.exp(z)
    return SoftWeightField(tuple(x), ys, w / w.sum(), d)
