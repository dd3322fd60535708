"""Deterministic synthetic test images and masks."""
from __future__ import annotations

import numpy as np

FIXTURES = ("step", "two-tone", "ramp")


def fixture(kind: str, size: int):
    """Image (size, size, 1) and inpainting mask for a named fixture.

    step: left half 0, right half 1; the mask is the middle half of the
    columns over the full height, so the known strips (and the exemplars in
    them) sit in the two constant regions.
    two-tone: top half 0.2, bottom half 0.8; centered square hole.
    ramp: u = col / (size - 1); centered square hole.
    """
    n = int(size)
    if n < 8:
        raise ValueError("fixture size must be >= 8")
    img = np.zeros((n, n, 1))
    mask = np.zeros((n, n), dtype=bool)
    if kind == "step":
        img[:, n // 2:] = 1.0
        mask[:, n // 4: 3 * n // 4] = True
    elif kind == "two-tone":
        img[: n // 2] = 0.2
        img[n // 2:] = 0.8
        mask[n // 4: 3 * n // 4, n // 4: 3 * n // 4] = True
    elif kind == "ramp":
        img[:, :, 0] = np.arange(n)[None, :] / (n - 1)
        mask[n // 4: 3 * n // 4, n // 4: 3 * n // 4] = True
    else:
        raise ValueError(f"unknown fixture {kind!r}; use one of {', '.join(FIXTURES)}")
    return img, mask
