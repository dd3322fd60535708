"""Convolution kernels, adjoints, stencil composition and boundary handling.

Orientation
-----------
``convolve`` is a true convolution, ``out(x) = sum_h k(h) * img(x - h)``,
not the correlation most image libraries implement.  ``Kernel.coeffs`` is
indexed by the offset ``h`` (row-major, anchor at the center).

Stencils as usually written down and as typed into kernel files are laid out the
other way round: entry (r, c) is the weight the output at ``x`` puts on the
image pixel ``x + (r, c) - center``.  ``Kernel.from_stencil`` and
``Kernel.stencil`` convert between the two layouts (a point reflection).
So ``grad_x`` has stencil ``[0 -1 1]`` and computes the forward difference
``u(x + 1) - u(x)``.

The adjoint is the point reflection ``adjoint(g)(t) = g(-t)``.  For the
first-order difference kernels this is the negative of the "divergence"
stencils sometimes printed alongside them; the composed Gram operator
``adjoint(g_x) * g_x + adjoint(g_y) * g_y`` is the positive semidefinite
``-Laplacian``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.signal import convolve2d

BOUNDARY_MODES = {"replicate": "edge", "reflect": "symmetric"}


@dataclass(frozen=True, eq=False)
class Kernel:
    coeffs: np.ndarray
    label: str = ""

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c[None, :]
        if c.ndim != 2 or c.shape[0] % 2 == 0 or c.shape[1] % 2 == 0:
            raise ValueError(f"kernel must be a 2D array with odd sides, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_stencil(cls, rows, label: str = "") -> "Kernel":
        s = np.array(rows, dtype=float)
        if s.ndim == 1:
            s = s[None, :]
        return cls(s[::-1, ::-1], label)

    @property
    def stencil(self) -> np.ndarray:
        return self.coeffs[::-1, ::-1]

    @property
    def half_height(self) -> int:
        return self.coeffs.shape[0] // 2

    @property
    def half_width(self) -> int:
        return self.coeffs.shape[1] // 2

    @cached_property
    def taps(self):
        """Nonzero coefficients as a list of (dr, dc, value) offsets."""
        hr, hc = self.half_height, self.half_width
        rr, cc = np.nonzero(self.coeffs)
        return [(int(r - hr), int(c - hc), float(self.coeffs[r, c])) for r, c in zip(rr, cc)]

    @property
    def footprint(self) -> np.ndarray:
        """Support used for region derivation.

        The nonzero pattern is symmetrized and closed under shrinking each
        offset toward the origin, so that boundary reads (replicate or
        reflect) of a pixel never leave its footprint.
        """
        hr, hc = self.half_height, self.half_width
        fp = np.zeros_like(self.coeffs, dtype=bool)
        for dr, dc, _ in self.taps:
            ar, ac = abs(dr), abs(dc)
            fp[hr - ar:hr + ar + 1, hc - ac:hc + ac + 1] = True
        if not fp.any():
            fp[hr, hc] = True
        return fp

    def trimmed(self) -> "Kernel":
        """Smallest centered odd box holding every nonzero coefficient."""
        taps = self.taps
        if not taps:
            return Kernel(np.zeros((1, 1)), self.label)
        r = max(abs(t[0]) for t in taps)
        c = max(abs(t[1]) for t in taps)
        hr, hc = self.half_height, self.half_width
        return Kernel(self.coeffs[hr - r:hr + r + 1, hc - c:hc + c + 1], self.label)

    def is_identity(self) -> bool:
        return self.taps == [(0, 0, 1.0)]

    def __eq__(self, other):
        if not isinstance(other, Kernel):
            return NotImplemented
        a, b = self.trimmed().coeffs, other.trimmed().coeffs
        return a.shape == b.shape and bool(np.array_equal(a, b))

    def __hash__(self):
        t = self.trimmed().coeffs
        return hash((t.shape, t.tobytes()))

    def __repr__(self):
        return f"Kernel({self.label or 'anon'}, stencil={self.stencil.tolist()})"


def adjoint(k: Kernel) -> Kernel:
    return Kernel(k.coeffs[::-1, ::-1], k.label + "'" if k.label else "")


def compose(a: Kernel, b: Kernel) -> Kernel:
    """Kernel of the operator ``a * (b * .)``; supports add."""
    return Kernel(convolve2d(a.coeffs, b.coeffs, mode="full"),
                  f"{a.label}*{b.label}" if a.label and b.label else "")


def kernel_sum(kernels, weights=None) -> Kernel:
    kernels = list(kernels)
    weights = [1.0] * len(kernels) if weights is None else list(weights)
    hr = max(k.half_height for k in kernels)
    hc = max(k.half_width for k in kernels)
    out = np.zeros((2 * hr + 1, 2 * hc + 1))
    for k, w in zip(kernels, weights):
        r, c = k.half_height, k.half_width
        out[hr - r:hr + r + 1, hc - c:hc + c + 1] += w * k.coeffs
    return Kernel(out)


IDENTITY = Kernel.from_stencil([[1.0]], "identity")
GRAD_X = Kernel.from_stencil([[0.0, -1.0, 1.0]], "grad_x")
GRAD_Y = Kernel.from_stencil([[0.0], [-1.0], [1.0]], "grad_y")
LAPLACIAN = Kernel.from_stencil([[0, 1, 0], [1, -4, 1], [0, 1, 0]], "laplacian")


# ---------------------------------------------------------------------------
# boundary-aware application


def _check_boundary(boundary: str) -> str:
    try:
        return BOUNDARY_MODES[boundary]
    except KeyError:
        raise ValueError(f"unknown boundary policy {boundary!r}; use one of {sorted(BOUNDARY_MODES)}") from None


@lru_cache(maxsize=32)
def _pad_index(shape, rr: int, rc: int, boundary: str) -> np.ndarray:
    h, w = shape
    idx = np.arange(h * w).reshape(h, w)
    return np.pad(idx, ((rr, rr), (rc, rc)), mode=_check_boundary(boundary))


def pad(img: np.ndarray, rr: int, rc: int, boundary: str = "replicate") -> np.ndarray:
    widths = ((rr, rr), (rc, rc)) + ((0, 0),) * (img.ndim - 2)
    return np.pad(img, widths, mode=_check_boundary(boundary))


def fold(padded: np.ndarray, shape, rr: int, rc: int, boundary: str = "replicate") -> np.ndarray:
    """Transpose of ``pad``: ghost values are summed onto their source pixels."""
    h, w = shape
    idx = _pad_index((h, w), rr, rc, boundary).ravel()
    if padded.ndim == 2:
        return np.bincount(idx, weights=padded.ravel(), minlength=h * w).reshape(h, w)
    flat = padded.reshape(idx.size, -1)
    out = np.empty((h * w, flat.shape[1]))
    for c in range(flat.shape[1]):
        out[:, c] = np.bincount(idx, weights=flat[:, c], minlength=h * w)
    return out.reshape((h, w) + padded.shape[2:])


def apply_padded(P: np.ndarray, k: Kernel, rr: int, rc: int, shape) -> np.ndarray:
    """Valid convolution of a pre-padded array back onto the ``shape`` grid."""
    h, w = shape
    out = np.zeros((h, w) + P.shape[2:])
    for dr, dc, v in k.taps:
        out += v * P[rr - dr:rr - dr + h, rc - dc:rc - dc + w]
    return out


def scatter_padded(acc: np.ndarray, r: np.ndarray, k: Kernel, rr: int, rc: int) -> None:
    """Accumulate the transpose of ``apply_padded`` into the padded array ``acc``."""
    h, w = r.shape[:2]
    for dr, dc, v in k.taps:
        acc[rr - dr:rr - dr + h, rc - dc:rc - dc + w] += v * r


def convolve(img: np.ndarray, k: Kernel, boundary: str = "replicate") -> np.ndarray:
    """``out(x) = sum_h k(h) img(x - h)``; out-of-grid reads follow ``boundary``."""
    img = np.asarray(img, dtype=float)
    rr, rc = k.half_height, k.half_width
    return apply_padded(pad(img, rr, rc, boundary), k, rr, rc, img.shape[:2])


def convolve_adjoint(img: np.ndarray, k: Kernel, boundary: str = "replicate") -> np.ndarray:
    """Exact transpose of ``convolve(., k, boundary)`` as a linear map.

    Away from the frame this is ``convolve(img, adjoint(k))``.
    """
    img = np.asarray(img, dtype=float)
    rr, rc = k.half_height, k.half_width
    h, w = img.shape[:2]
    acc = np.zeros((h + 2 * rr, w + 2 * rc) + img.shape[2:])
    scatter_padded(acc, img, k, rr, rc)
    return fold(acc, (h, w), rr, rc, boundary)


# ---------------------------------------------------------------------------
# nonlocal gamma kernels


def gauss_gamma(sigma: float):
    if not sigma > 0:
        raise ValueError("gaussian gamma needs sigma > 0")
    return lambda dist: np.exp(-(dist ** 2) / sigma ** 2)


def frac_gamma(s: float):
    return lambda dist: dist ** (-1.0 - s)


def gamma_kernels(shape, gamma, normalize: bool = True):
    """Directional nonlocal-gradient kernels and the nonlocal Laplacian kernel.

    For every nonzero offset ``h_i`` of the centered ``shape`` box, in row-major
    order, the directional kernel has stencil ``+gamma(h_i)`` at ``h_i`` and
    ``-gamma(h_i)`` at the center.  The Laplacian kernel has stencil entries
    ``gamma(h)**2`` off center and ``-sum gamma**2`` at the center.  With
    ``normalize`` the weights are scaled so that ``sum gamma**2 = 1``.
    """
    rows, cols = shape
    if rows % 2 == 0 or cols % 2 == 0:
        raise ValueError("gamma footprint must have odd sides")
    hr, hc = rows // 2, cols // 2
    offsets = [(r, c) for r in range(-hr, hr + 1) for c in range(-hc, hc + 1) if (r, c) != (0, 0)]
    if not offsets:
        raise ValueError("gamma footprint has no nonzero offsets")
    dist = np.array([math.hypot(r, c) for r, c in offsets])
    g = np.asarray(gamma(dist), dtype=float)
    if np.any(~np.isfinite(g)) or np.any(g < 0):
        raise ValueError("gamma must be finite and nonnegative on the footprint")
    if normalize:
        total = float(np.sum(g ** 2))
        if total <= 0:
            raise ValueError("gamma vanishes on the footprint")
        g = g / math.sqrt(total)
    directional = []
    lap = np.zeros((rows, cols))
    for (r, c), gi in zip(offsets, g):
        st = np.zeros((rows, cols))
        st[hr + r, hc + c] += gi
        st[hr, hc] -= gi
        directional.append(Kernel.from_stencil(st, f"g_gamma[{r},{c}]").trimmed())
        lap[hr + r, hc + c] = gi ** 2
    lap[hr, hc] = -float(np.sum(g ** 2))
    return directional, Kernel.from_stencil(lap, "g_gamma2")


# ---------------------------------------------------------------------------
# names and files


def load_kernel_text(path, label: str = "") -> Kernel:
    """Read a stencil from whitespace-separated rows (stencil layout)."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append([float(v) for v in line.split()])
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: kernel rows must be non-empty and of equal length")
    return Kernel.from_stencil(rows, label or str(path))


_BUILTIN = {"identity": IDENTITY, "grad_x": GRAD_X, "grad_y": GRAD_Y, "laplacian": LAPLACIAN}
_NL_RE = re.compile(r"^nl_gamma:(gauss|frac):([^:]+):(\d+)x(\d+)$")


def resolve_filter(name: str, custom=None) -> list:
    """Kernels behind a filter name.

    ``identity``, ``grad_x``, ``grad_y``, ``laplacian``, ``grad`` (both
    differences), ``nl_gamma:gauss:<sigma>:<R>x<C>``,
    ``nl_gamma:frac:<s>:<R>x<C>``, or a key of ``custom``.
    """
    custom = custom or {}
    if name in custom:
        k = custom[name]
        return [k if isinstance(k, Kernel) else load_kernel_text(k, name)]
    if name in _BUILTIN:
        return [_BUILTIN[name]]
    if name == "grad":
        return [GRAD_X, GRAD_Y]
    m = _NL_RE.match(name)
    if m:
        return gamma_kernels(*_gamma_from_match(m))[0]
    raise KeyError(f"unknown filter {name!r}")


def _gamma_from_match(m):
    kind, param, r, c = m.group(1), float(m.group(2)), int(m.group(3)), int(m.group(4))
    return (r, c), (gauss_gamma(param) if kind == "gauss" else frac_gamma(param))


def resolve_gamma_laplacian(name: str) -> Kernel:
    """The nonlocal Laplacian kernel paired with an ``nl_gamma`` filter name."""
    m = _NL_RE.match(name)
    if not m:
        raise KeyError(f"not a nonlocal gamma filter: {name!r}")
    return gamma_kernels(*_gamma_from_match(m))[1]


@dataclass
class KernelBank:
    """Ordered kernels grouped by the filter name that produced them."""
    kernels: list = field(default_factory=list)
    groups: dict = field(default_factory=dict)  # name -> list of kernel indices
    gamma2: dict = field(default_factory=dict)  # nl_gamma name -> gamma^2 stencil (center 0)

    @classmethod
    def from_names(cls, names, custom=None) -> "KernelBank":
        bank = cls()
        for name in names:
            if name in bank.groups:
                continue
            start = len(bank.kernels)
            bank.kernels.extend(resolve_filter(name, custom))
            bank.groups[name] = list(range(start, len(bank.kernels)))
            m = _NL_RE.match(name)
            if m and name not in (custom or {}):
                st = resolve_gamma_laplacian(name).stencil.copy()
                st[st.shape[0] // 2, st.shape[1] // 2] = 0.0
                bank.gamma2[name] = st
        return bank

    @property
    def union_support(self) -> np.ndarray:
        from .image import union_footprint
        return union_footprint([k.footprint for k in self.kernels])

    @property
    def max_half(self):
        return (max((k.half_height for k in self.kernels), default=0),
                max((k.half_width for k in self.kernels), default=0))

    def __len__(self):
        return len(self.kernels)
