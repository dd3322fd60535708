"""Pixel grids, masks, region algebra and resampling.

Images are float arrays of shape (H, W, C) with C in {1, 3}; masks are bool
arrays of shape (H, W).  Pixel coordinates are (row, col) throughout the
package; row-major flat index is ``row * W + col``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage


class DimensionError(ValueError):
    pass


def as_image(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3):
        raise DimensionError(f"expected (H, W) or (H, W, C) with C in 1,3; got {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError("image must be at least 1x1")
    return a


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I", "F"):
            raise ValueError(f"{path}: unsupported pixel mode {im.mode} (8-bit only)")
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.uint8)[:, :, None]
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return arr.astype(float) / 255.0


def to_bytes(img: np.ndarray) -> np.ndarray:
    img = as_image(img)
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(path, img: np.ndarray) -> None:
    b = to_bytes(img)
    if b.shape[2] == 1:
        Image.fromarray(b[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(b, mode="RGB").save(path)


def load_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.uint8)
    return arr > 127


def save_mask(path, mask: np.ndarray) -> None:
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


def _check_same(mask: np.ndarray, shape) -> None:
    if mask.shape != tuple(shape[:2]):
        raise DimensionError(f"mask {mask.shape} does not match grid {tuple(shape[:2])}")


def _dilate(mask: np.ndarray, footprint: np.ndarray) -> np.ndarray:
    # {x : (x + F) meets mask} is the dilation of mask by -F
    if not mask.any():
        return np.zeros_like(mask)
    structure = np.asarray(footprint, dtype=bool)[::-1, ::-1]
    return ndimage.binary_dilation(mask, structure=structure)


def union_footprint(footprints) -> np.ndarray:
    """Pointwise union of centered odd footprints in a common box."""
    footprints = [np.asarray(f, dtype=bool) for f in footprints]
    if not footprints:
        return np.ones((1, 1), dtype=bool)
    hr = max(f.shape[0] // 2 for f in footprints)
    hc = max(f.shape[1] // 2 for f in footprints)
    out = np.zeros((2 * hr + 1, 2 * hc + 1), dtype=bool)
    for f in footprints:
        if f.shape[0] % 2 == 0 or f.shape[1] % 2 == 0:
            raise ValueError("footprints must have odd dimensions")
        r, c = f.shape[0] // 2, f.shape[1] // 2
        out[hr - r:hr + r + 1, hc - c:hc + c + 1] |= f
    return out


def derive_filter_extended(inpaint: np.ndarray, supports, shape=None) -> np.ndarray:
    """O* = {x : (x + union of supports) intersects O}."""
    inpaint = np.asarray(inpaint, dtype=bool)
    if shape is not None:
        _check_same(inpaint, shape)
    return _dilate(inpaint, union_footprint(supports))


def derive_patch_extended(filter_extended: np.ndarray, patch_shape, shape=None) -> np.ndarray:
    """O~* = {x : (x + P) intersects O*} for a centered odd rectangle P."""
    filter_extended = np.asarray(filter_extended, dtype=bool)
    if shape is not None:
        _check_same(filter_extended, shape)
    rows, cols = patch_shape
    if rows % 2 == 0 or cols % 2 == 0:
        raise ValueError(f"patch must have odd side lengths, got {rows}x{cols}")
    return _dilate(filter_extended, np.ones((rows, cols), dtype=bool))


@dataclass(frozen=True)
class RegionSet:
    inpaint: np.ndarray          # O
    filter_extended: np.ndarray  # O*
    patch_extended: np.ndarray   # O~*

    @property
    def exemplars(self) -> np.ndarray:
        return ~self.patch_extended

    @property
    def shape(self):
        return self.inpaint.shape


def derive_regions(inpaint: np.ndarray, supports, patch_shape) -> RegionSet:
    inpaint = np.asarray(inpaint, dtype=bool)
    o_star = derive_filter_extended(inpaint, supports)
    return RegionSet(inpaint, o_star, derive_patch_extended(o_star, patch_shape))


def downscale(img: np.ndarray, factor: int) -> np.ndarray:
    """Box average over factor x factor blocks.

    Dimensions not divisible by ``factor`` are padded by edge replication
    first.  Accepts (H, W) or (H, W, C).
    """
    factor = int(factor)
    if factor < 2:
        raise ValueError("downscale factor must be >= 2")
    a = np.asarray(img, dtype=float)
    squeeze = a.ndim == 2
    if squeeze:
        a = a[:, :, None]
    h, w = a.shape[:2]
    ph, pw = -h % factor, -w % factor
    if ph or pw:
        a = np.pad(a, ((0, ph), (0, pw), (0, 0)), mode="edge")
    H, W = a.shape[0] // factor, a.shape[1] // factor
    out = a.reshape(H, factor, W, factor, -1).mean(axis=(1, 3))
    return out[:, :, 0] if squeeze else out


def _bilinear_axis(n_src: int, n_dst: int):
    # pixel-center aligned source coordinates, clamped to the grid
    pos = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
    pos = np.clip(pos, 0.0, n_src - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_src - 1)
    return lo, hi, pos - lo


def upscale(img: np.ndarray, target_dims) -> np.ndarray:
    """Bilinear interpolation to ``target_dims`` = (H, W)."""
    a = np.asarray(img, dtype=float)
    squeeze = a.ndim == 2
    if squeeze:
        a = a[:, :, None]
    H, W = (int(d) for d in target_dims)
    h, w = a.shape[:2]
    if H < h or W < w:
        raise ValueError(f"target {H}x{W} smaller than source {h}x{w}")
    r0, r1, tr = _bilinear_axis(h, H)
    c0, c1, tc = _bilinear_axis(w, W)
    rows = a[r0] * (1 - tr)[:, None, None] + a[r1] * tr[:, None, None]
    out = rows[:, c0] * (1 - tc)[None, :, None] + rows[:, c1] * tc[None, :, None]
    return out[:, :, 0] if squeeze else out


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio for unit peak; ``inf`` for identical inputs."""
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)
