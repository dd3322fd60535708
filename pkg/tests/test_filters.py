import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import clamp_conv, stencil_matrix
from nlinpaint.filters import (GRAD_X, GRAD_Y, IDENTITY, LAPLACIAN, Kernel, KernelBank, adjoint, compose,
                               convolve, convolve_adjoint, frac_gamma, gamma_kernels, gauss_gamma,
                               kernel_sum, load_kernel_text, resolve_filter, resolve_gamma_laplacian)

FIVE_POINT = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=float)
BIHARMONIC = np.array([[0, 0, 1, 0, 0],
                       [0, 2, -8, 2, 0],
                       [1, -8, 20, -8, 1],
                       [0, 2, -8, 2, 0],
                       [0, 0, 1, 0, 0]], dtype=float)

# divergence-style stencils as printed next to the forward differences
PRINTED_DIV_X = Kernel.from_stencil([[-1, 1, 0]])
PRINTED_DIV_Y = Kernel.from_stencil([[-1], [1], [0]])

finite = st.floats(-2, 2, allow_nan=False, allow_infinity=False)


def padded_stencil(k, size):
    out = np.zeros((size, size))
    s = k.trimmed().stencil
    r0, c0 = (size - s.shape[0]) // 2, (size - s.shape[1]) // 2
    out[r0:r0 + s.shape[0], c0:c0 + s.shape[1]] = s
    return out


class TestStencilIdentities:
    def test_printed_divergence_composes_to_five_point(self):
        lap = kernel_sum([compose(PRINTED_DIV_X, GRAD_X), compose(PRINTED_DIV_Y, GRAD_Y)])
        assert np.array_equal(padded_stencil(lap, 3), FIVE_POINT)

    def test_adjoint_gram_is_negative_laplacian(self):
        gram = kernel_sum([compose(adjoint(GRAD_X), GRAD_X), compose(adjoint(GRAD_Y), GRAD_Y)])
        assert np.array_equal(padded_stencil(gram, 3), -FIVE_POINT)

    def test_adjoint_is_negated_printed_divergence(self):
        assert adjoint(GRAD_X) == Kernel(-PRINTED_DIV_X.coeffs)
        assert np.array_equal(adjoint(GRAD_X).stencil, [[1, -1, 0]])

    def test_biharmonic_composition(self):
        bi = compose(LAPLACIAN, adjoint(LAPLACIAN))
        assert bi.coeffs.shape == (5, 5)
        assert np.array_equal(bi.stencil, BIHARMONIC)

    def test_biharmonic_annihilates_quadratics(self):
        r, c = np.mgrid[-2:3, -2:3].astype(float)
        for q in (c ** 2, r ** 2, r * c, r + 3 * c, np.ones_like(r)):
            assert np.sum(BIHARMONIC * q) == 0.0

    @given(arrays(float, (3, 3), elements=finite))
    def test_identity_is_neutral(self, a):
        k = Kernel(a)
        assert compose(IDENTITY, k) == k
        assert compose(k, IDENTITY) == k


class TestConvolve:
    def test_identity_leaves_image(self, rng):
        img = rng.random((7, 9))
        assert np.array_equal(convolve(img, IDENTITY), img)

    @pytest.mark.parametrize("k", [GRAD_X, GRAD_Y, LAPLACIAN])
    @pytest.mark.parametrize("boundary", ["replicate", "reflect"])
    def test_constants_are_annihilated(self, k, boundary):
        assert np.all(convolve(np.full((6, 5), 0.3), k, boundary) == 0.0)

    def test_ramp_forward_difference(self):
        W = 16
        img = np.tile(np.arange(W) / W, (5, 1))
        out = convolve(img, GRAD_X)
        assert np.allclose(out[:, :-1], 1 / W, atol=1e-15)

    def test_orientation_is_convolution(self):
        img = np.zeros((5, 5))
        img[2, 2] = 1.0
        k = Kernel(np.arange(9.0).reshape(3, 3))
        # an impulse reproduces coeffs (convolution), not their reflection
        assert np.array_equal(convolve(img, k)[1:4, 1:4], k.coeffs)

    @pytest.mark.parametrize("stencil", [[[0, -1, 1]], FIVE_POINT, [[1, 2, 0], [0, -3, 0], [0, 0, 5]]])
    def test_matches_clamped_loop(self, rng, stencil):
        img = rng.random((6, 7))
        assert np.allclose(convolve(img, Kernel.from_stencil(stencil)), clamp_conv(img, stencil), atol=1e-14)

    @pytest.mark.parametrize("boundary", ["replicate", "reflect"])
    def test_adjoint_is_exact_transpose(self, rng, boundary):
        shape = (5, 6)
        k = Kernel(rng.normal(size=(3, 5)))
        M = np.zeros((30, 30))
        for j in range(30):
            e = np.zeros(30)
            e[j] = 1.0
            M[:, j] = convolve(e.reshape(shape), k, boundary).ravel()
        for j in range(30):
            e = np.zeros(30)
            e[j] = 1.0
            assert np.allclose(convolve_adjoint(e.reshape(shape), k, boundary).ravel(), M[j], atol=1e-13)

    @settings(max_examples=30, deadline=None)
    @given(a=arrays(float, (6, 6), elements=finite), b=arrays(float, (6, 6), elements=finite),
           k=arrays(float, (3, 3), elements=finite))
    def test_zero_padded_adjoint_identity(self, a, b, k):
        # <g * a, b> = <a, gbar * b> for full linear convolution
        from scipy.signal import convolve2d
        g = Kernel(k)
        lhs = np.sum(convolve2d(a, g.coeffs, mode="full") * np.pad(b, 1))
        rhs = np.sum(a * convolve2d(np.pad(b, 1), adjoint(g).coeffs, mode="valid"))
        assert lhs == pytest.approx(rhs, abs=1e-12 * (1 + np.abs(a).sum() * np.abs(b).sum() * 9))

    def test_compose_equals_sequential_in_interior(self, rng):
        a, b = Kernel(rng.normal(size=(3, 3))), Kernel(rng.normal(size=(3, 5)))
        img = rng.random((12, 14))
        one = convolve(img, compose(a, b))
        two = convolve(convolve(img, b), a)
        assert np.allclose(one[2:-2, 3:-3], two[2:-2, 3:-3], atol=1e-13)

    def test_dense_operator_of_replicate_matches_loop(self):
        M = stencil_matrix((4, 4), [[0, -1, 1]])
        e = np.arange(16.0)
        assert np.array_equal(M @ e, convolve(e.reshape(4, 4), GRAD_X).ravel())


class TestKernel:
    def test_rejects_even_sides(self):
        with pytest.raises(ValueError):
            Kernel(np.ones((2, 3)))

    def test_stencil_roundtrip(self):
        s = [[1, 2, 3]]
        assert np.array_equal(Kernel.from_stencil(s).stencil, s)
        assert np.array_equal(Kernel.from_stencil(s).coeffs, [[3, 2, 1]])

    def test_footprint_is_symmetric_box_closure(self):
        fp = GRAD_X.footprint
        assert fp.tolist() == [[True, True, True]]
        # a lone corner tap closes to the whole box
        k = Kernel.from_stencil(np.pad([[1.0]], ((0, 2), (0, 2))))
        assert k.footprint.all()
        assert IDENTITY.footprint.tolist() == [[True]]

    def test_trimmed_and_eq(self):
        big = Kernel(np.pad(GRAD_X.coeffs, 2))
        assert big == GRAD_X and hash(big) == hash(GRAD_X)
        assert big.trimmed().coeffs.shape == (1, 3)

    def test_identity_detection(self):
        assert IDENTITY.is_identity() and Kernel(np.pad([[1.0]], 1)).is_identity()
        assert not GRAD_X.is_identity()


class TestGamma:
    def test_unit_gamma_gives_eight_neighbor_laplacian(self):
        _, lap = gamma_kernels((3, 3), lambda d: np.ones_like(d), normalize=False)
        expect = np.ones((3, 3))
        expect[1, 1] = -8
        assert np.array_equal(lap.stencil, expect)

    def test_half_sum_of_compositions(self):
        dirs, lap = gamma_kernels((3, 3), lambda d: np.ones_like(d), normalize=False)
        half = kernel_sum([compose(g, adjoint(g)) for g in dirs], [0.5] * len(dirs))
        # the point-reflection adjoint yields the negated Laplacian
        assert np.array_equal(padded_stencil(half, 3), -lap.stencil)

    @pytest.mark.parametrize("shape,gamma", [((3, 3), frac_gamma(-1.0)), ((5, 7), frac_gamma(0.5)),
                                             ((9, 9), gauss_gamma(2.0))])
    def test_zero_sum_nonnegative_offcenter(self, shape, gamma):
        dirs, lap = gamma_kernels(shape, gamma)
        s = lap.stencil
        assert abs(s.sum()) < 1e-14
        off = s.copy()
        off[shape[0] // 2, shape[1] // 2] = 0
        assert off.min() >= 0
        assert off.sum() == pytest.approx(1.0)
        assert len(dirs) == shape[0] * shape[1] - 1

    def test_directional_kernel_values(self):
        dirs, _ = gamma_kernels((3, 3), frac_gamma(0.0), normalize=False)
        # first row-major offset is (-1, -1), distance sqrt(2), gamma = 1/sqrt(2)
        s = dirs[0].stencil
        assert s[0, 0] == pytest.approx(2 ** -0.5) and s[1, 1] == pytest.approx(-(2 ** -0.5))

    def test_empty_footprint_rejected(self):
        with pytest.raises(ValueError):
            gamma_kernels((1, 1), frac_gamma(0.0))


class TestNames:
    def test_builtins(self):
        assert resolve_filter("grad") == [GRAD_X, GRAD_Y]
        assert resolve_filter("laplacian") == [LAPLACIAN]
        with pytest.raises(KeyError):
            resolve_filter("sobel")

    def test_nonlocal_names(self):
        ks = resolve_filter("nl_gamma:frac:-1:5x5")
        assert len(ks) == 24
        lap = resolve_gamma_laplacian("nl_gamma:gauss:3:5x5")
        assert lap.coeffs.shape == (5, 5)

    def test_kernel_file(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("# forward difference\n0 -1 1\n")
        assert load_kernel_text(p) == GRAD_X
        p.write_text("1 2\n3\n")
        with pytest.raises(ValueError):
            load_kernel_text(p)

    def test_bank_groups(self):
        bank = KernelBank.from_names(["identity", "grad", "nl_gamma:frac:0:3x3", "identity"])
        assert bank.groups["identity"] == [0]
        assert bank.groups["grad"] == [1, 2]
        assert len(bank.groups["nl_gamma:frac:0:3x3"]) == 8
        assert bank.max_half == (1, 1)
        assert set(bank.gamma2) == {"nl_gamma:frac:0:3x3"}
