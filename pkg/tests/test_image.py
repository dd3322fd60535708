import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from nlinpaint.image import (DimensionError, as_image, derive_filter_extended, derive_patch_extended,
                             derive_regions, downscale, load_image, load_mask, psnr, save_image, save_mask,
                             union_footprint, upscale)


def block(shape, center, half):
    m = np.zeros(shape, dtype=bool)
    r, c = center
    m[r - half:r + half + 1, c - half:c + half + 1] = True
    return m


def brute_dilation(mask, footprint):
    """{x : (x + F) meets mask} checked pixel by pixel."""
    H, W = mask.shape
    fr, fc = footprint.shape
    out = np.zeros_like(mask)
    for r in range(H):
        for c in range(W):
            for a in range(fr):
                for b in range(fc):
                    rr, cc = r + a - fr // 2, c + b - fc // 2
                    if footprint[a, b] and 0 <= rr < H and 0 <= cc < W and mask[rr, cc]:
                        out[r, c] = True
    return out


masks = arrays(bool, st.tuples(st.integers(1, 14), st.integers(1, 14)))
odd = st.integers(0, 3).map(lambda k: 2 * k + 1)


class TestRegions:
    def test_empty(self):
        assert not derive_filter_extended(np.zeros((8, 8), bool), [np.ones((3, 3), bool)]).any()
        assert not derive_patch_extended(np.zeros((8, 8), bool), (5, 5)).any()

    def test_single_pixel(self):
        O = block((21, 21), (10, 10), 0)
        assert np.array_equal(derive_filter_extended(O, [np.ones((3, 3), bool)]), block((21, 21), (10, 10), 1))
        both = derive_filter_extended(O, [np.ones((3, 3), bool), np.ones((5, 5), bool)])
        assert np.array_equal(both, block((21, 21), (10, 10), 2))

    def test_patch_dilation_of_block(self):
        Ostar = block((15, 15), (7, 7), 1)
        assert np.array_equal(derive_patch_extended(Ostar, (5, 5)), block((15, 15), (7, 7), 3))

    def test_full_image(self):
        full = np.ones((6, 7), bool)
        assert derive_patch_extended(full, (3, 5)).all()

    def test_asymmetric_support_uses_reflection(self):
        O = np.zeros((7, 7), bool)
        O[3, 3] = True
        fp = np.array([[False, False, True]])  # offset (0, +1)
        # x + (0, 1) hits O only for x = (3, 2)
        out = derive_filter_extended(O, [fp])
        assert np.argwhere(out).tolist() == [[3, 2]]

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            derive_filter_extended(np.zeros((4, 4), bool), [np.ones((1, 1), bool)], shape=(4, 5))
        with pytest.raises(ValueError):
            derive_patch_extended(np.zeros((4, 4), bool), (2, 3))

    @settings(max_examples=40, deadline=None)
    @given(mask=masks, fp=arrays(bool, st.tuples(odd, odd)), pr=odd, pc=odd)
    def test_matches_set_definition(self, mask, fp, pr, pc):
        ostar = derive_filter_extended(mask, [fp])
        assert np.array_equal(ostar, brute_dilation(mask, fp))
        assert np.array_equal(derive_patch_extended(ostar, (pr, pc)),
                              brute_dilation(ostar, np.ones((pr, pc), bool)))

    @settings(max_examples=40, deadline=None)
    @given(mask=masks, extra=st.data(), pr=odd, pc=odd)
    def test_nesting_and_monotonicity(self, mask, extra, pr, pc):
        supports = [np.ones((3, 3), bool), np.array([[1, 1, 1]], bool)]
        R = derive_regions(mask, supports, (pr, pc))
        assert np.all(R.inpaint <= R.filter_extended) and np.all(R.filter_extended <= R.patch_extended)
        grow = mask | extra.draw(arrays(bool, mask.shape))
        R2 = derive_regions(grow, supports, (pr, pc))
        assert np.all(R.filter_extended <= R2.filter_extended)
        assert np.all(R.patch_extended <= R2.patch_extended)

    @settings(max_examples=25, deadline=None)
    @given(mask=masks)
    def test_exemplar_patches_avoid_filter_region(self, mask):
        R = derive_regions(mask, [np.ones((3, 3), bool)], (3, 5))
        H, W = mask.shape
        for r, c in np.argwhere(R.exemplars):
            win = R.filter_extended[max(r - 1, 0):r + 2, max(c - 2, 0):c + 3]
            assert not win.any()

    def test_union_footprint(self):
        u = union_footprint([np.array([[1, 1, 1]], bool), np.ones((3, 1), bool)])
        assert u.astype(int).tolist() == [[0, 1, 0], [1, 1, 1], [0, 1, 0]]


class TestResample:
    def test_constants_preserved(self):
        c = np.full((12, 10, 3), 0.37)
        assert np.allclose(downscale(c, 4), 0.37, atol=1e-15)
        assert np.allclose(upscale(c, (20, 17)), 0.37, atol=1e-15)
        assert np.allclose(upscale(downscale(c, 2), c.shape[:2]), 0.37, atol=1e-15)

    def test_quadrant_means(self):
        img = np.zeros((4, 4))
        img[:, 2:] = 1.0
        assert downscale(img, 2).tolist() == [[0, 1], [0, 1]]

    def test_nondivisible_pads_by_replication(self):
        img = np.arange(5.0)[None, :].repeat(2, axis=0)
        out = downscale(img, 2)
        assert out.shape == (1, 3)
        assert out[0].tolist() == [0.5, 2.5, 4.0]

    def test_ramp_roundtrip(self):
        n = 64
        ramp = np.tile(np.arange(n) / (n - 1), (n, 1))
        back = upscale(downscale(ramp, 4), (n, n))
        assert np.max(np.abs(back - ramp)[:, 4:-4]) <= 1 / 255

    def test_upscale_rejects_shrink(self):
        with pytest.raises(ValueError):
            upscale(np.zeros((4, 4)), (3, 4))
        with pytest.raises(ValueError):
            downscale(np.zeros((4, 4)), 1)


class TestIO:
    def test_psnr(self):
        a = np.zeros((4, 4))
        assert psnr(a, a) == float("inf")
        assert psnr(a, np.ones((4, 4))) == pytest.approx(0.0)
        assert psnr(a, np.full((4, 4), 0.5)) == pytest.approx(10 * np.log10(4))
        with pytest.raises(DimensionError):
            psnr(a, np.zeros((4, 5)))

    def test_roundtrip_and_clamp(self, tmp_path, rng):
        img = rng.integers(0, 256, size=(5, 6, 3)) / 255.0
        save_image(tmp_path / "a.png", img)
        assert np.array_equal(load_image(tmp_path / "a.png"), img)
        save_image(tmp_path / "b.png", np.array([[-0.5, 1.7]]))
        assert load_image(tmp_path / "b.png")[..., 0].tolist() == [[0.0, 1.0]]

    def test_mask_threshold(self, tmp_path):
        from PIL import Image
        Image.fromarray(np.array([[127, 128, 0, 255]], np.uint8)).save(tmp_path / "m.png")
        assert load_mask(tmp_path / "m.png").tolist() == [[False, True, False, True]]
        save_mask(tmp_path / "n.png", np.array([[True, False]]))
        assert load_mask(tmp_path / "n.png").tolist() == [[True, False]]

    def test_as_image_shapes(self):
        assert as_image(np.zeros((2, 3))).shape == (2, 3, 1)
        with pytest.raises(DimensionError):
            as_image(np.zeros((2, 3, 2)))
