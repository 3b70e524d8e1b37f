import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from core.exceptions import InvalidFieldError
from .grid import ParamGrid
from .operators import (
    cordoba_defect, fourier_interpolate, inv_lap_grad, lambda_op, operators_for,
    riesz, spectral_derivative,
)
from .testing import band_limited_field, gaussian_bump


def fd4(F, axis, h):
    return (
        -np.roll(F, -2, axis) + 8 * np.roll(F, -1, axis)
        - 8 * np.roll(F, 1, axis) + np.roll(F, 2, axis)
    ) / (12 * h)


class ParamGridTests(SimpleTestCase):

    def test_spacing_and_wavenumbers(self):
        grid = ParamGrid(16, 2.0)
        self.assertAlmostEqual(grid.h * grid.n, 2 * grid.L)
        self.assertEqual(int(np.sum(grid.wavenumbers == 0)), 1)
        self.assertAlmostEqual(grid.nodes[0], -2.0)

    def test_rejects_bad_sizes(self):
        for n in (4, 12, 30):
            with self.assertRaises(InvalidFieldError):
                ParamGrid(n, 1.0)
        with self.assertRaises(InvalidFieldError):
            ParamGrid(16, -1.0)

    def test_frame_mask_covers_outer_eighth(self):
        grid = ParamGrid(32, np.pi)
        a1, a2 = grid.mesh
        self.assertFalse(grid.frame_mask[np.abs(a1).argmin(), np.abs(a2).argmin()])
        self.assertTrue(grid.frame_mask[0, 16])


class DerivativeTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(32, np.pi)
        self.a1, self.a2 = self.grid.mesh

    def test_single_mode(self):
        k = np.pi / self.grid.L
        result = spectral_derivative(np.sin(k * self.a1), 1, self.grid)
        np.testing.assert_allclose(result, k * np.cos(k * self.a1), atol=1e-12)

    def test_constant_is_annihilated(self):
        result = spectral_derivative(np.full(self.grid.shape, 3.5), 2, self.grid)
        self.assertLess(np.max(np.abs(result)), 1e-12)

    def test_matches_fourth_order_differences(self):
        errors = []
        for n in (64, 128):
            grid = ParamGrid(n, np.pi)
            F = band_limited_field(grid, np.random.default_rng(7), modes=3)
            errors.append(np.max(np.abs(spectral_derivative(F, 1, grid) - fd4(F, 0, grid.h))))
        order = np.log2(errors[0] / errors[1])
        self.assertGreater(order, 3.7)

    def test_rejects_non_finite_input(self):
        F = np.zeros(self.grid.shape)
        F[3, 4] = np.nan
        with self.assertRaises(InvalidFieldError) as ctx:
            spectral_derivative(F, 1, self.grid)
        self.assertIn('(3, 4)', str(ctx.exception))


class RieszLambdaTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(32, np.pi)
        self.a1, self.a2 = self.grid.mesh
        self.rng = np.random.default_rng(11)

    def test_riesz_of_cosine_is_sine(self):
        for k in (1.0, 2.0, 5.0):
            result = riesz(np.cos(k * self.a1), 1, self.grid)
            np.testing.assert_allclose(result, np.sin(k * self.a1), atol=1e-12)

    def test_riesz_across_axis_vanishes(self):
        F = np.cos(2 * self.a1) + 0.3 * np.sin(3 * self.a1)
        self.assertLess(np.max(np.abs(riesz(F, 2, self.grid))), 1e-12)

    def test_lambda_equals_riesz_of_gradient(self):
        F = band_limited_field(self.grid, self.rng)
        composed = (
            riesz(spectral_derivative(F, 1, self.grid), 1, self.grid)
            + riesz(spectral_derivative(F, 2, self.grid), 2, self.grid)
        )
        np.testing.assert_allclose(composed, lambda_op(F, self.grid), atol=1e-10)

    def test_lambda_of_cosine_and_constant(self):
        np.testing.assert_allclose(
            lambda_op(np.cos(3 * self.a1), self.grid), 3 * np.cos(3 * self.a1), atol=1e-12,
        )
        self.assertLess(np.max(np.abs(lambda_op(np.ones(self.grid.shape), self.grid))), 1e-12)

    def test_lambda_squared_is_minus_laplacian(self):
        F = band_limited_field(self.grid, self.rng)
        laplacian = (
            spectral_derivative(F, 1, self.grid, order=2)
            + spectral_derivative(F, 2, self.grid, order=2)
        )
        np.testing.assert_allclose(
            lambda_op(lambda_op(F, self.grid), self.grid), -laplacian, atol=1e-10,
        )

    def test_riesz_is_skew_adjoint(self):
        F = band_limited_field(self.grid, self.rng)
        G = band_limited_field(self.grid, self.rng)
        for j in (1, 2):
            pairing = self.grid.integrate(riesz(F, j, self.grid) * G + F * riesz(G, j, self.grid))
            self.assertLess(abs(pairing), 1e-10)

    def test_multipliers_are_real_to_real(self):
        ops = operators_for(self.grid)
        F = self.rng.standard_normal(self.grid.shape)
        multipliers = [
            ops.lambda_multiplier, *ops.riesz_multiplier, *ops.inv_lap_grad_multiplier,
            ops.derivative_multiplier(1), ops.derivative_multiplier(2, order=3),
        ]
        for multiplier in multipliers:
            _, residue = ops.apply(F, multiplier, with_residue=True)
            self.assertLess(residue, 1e-12)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_cordoba_pointwise_inequality(self, seed):
        grid = ParamGrid(64, np.pi)
        theta = band_limited_field(grid, np.random.default_rng(seed), modes=6, mean_zero=False)
        self.assertGreaterEqual(float(np.min(cordoba_defect(theta, grid))), -1e-8)


class InverseLaplacianGradientTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(16, np.pi)
        self.a1, self.a2 = self.grid.mesh

    def test_cosine_mode(self):
        for k in (1.0, 3.0):
            result = inv_lap_grad(np.cos(k * self.a1), 1, self.grid)
            np.testing.assert_allclose(result, np.sin(k * self.a1) / k, atol=1e-12)

    def test_divergence_recovers_mean_zero_field(self):
        F = band_limited_field(self.grid, np.random.default_rng(3), modes=3)
        recovered = sum(
            spectral_derivative(inv_lap_grad(F, j, self.grid), j, self.grid) for j in (1, 2)
        )
        np.testing.assert_allclose(recovered, F, atol=1e-11)

    def test_matches_discrete_periodic_convolution(self):
        grid = self.grid
        n = grid.n
        F = band_limited_field(grid, np.random.default_rng(5), modes=5)
        for j in (1, 2):
            kernel = np.fft.ifft2(operators_for(grid).inv_lap_grad_multiplier[j - 1]).real
            expected = np.zeros(grid.shape)
            for i1 in range(n):
                for i2 in range(n):
                    acc = 0.0
                    for b1 in range(n):
                        for b2 in range(n):
                            acc += kernel[(i1 - b1) % n, (i2 - b2) % n] * F[b1, b2]
                    expected[i1, i2] = acc
            np.testing.assert_allclose(inv_lap_grad(F, j, grid), expected, atol=1e-12)

    def test_matches_newtonian_kernel_within_quadrature_error(self):
        grid = ParamGrid(32, np.pi)
        a1, a2 = grid.mesh
        F = spectral_derivative(gaussian_bump(grid, amplitude=1.0, width=0.6), 1, grid)
        result = inv_lap_grad(F, 1, grid)
        interior = (np.abs(a1) < grid.L / 2) & (np.abs(a2) < grid.L / 2)
        worst = 0.0
        for i1, i2 in np.argwhere(interior):
            d1 = a1[i1, i2] - a1
            d2 = a2[i1, i2] - a2
            r2 = d1 ** 2 + d2 ** 2
            r2[i1, i2] = np.inf
            direct = grid.cell_area * np.sum(d1 / (2 * np.pi * r2) * F)
            worst = max(worst, abs(direct - result[i1, i2]))
        self.assertLess(worst, 0.1 * np.max(np.abs(result)))


class FourierInterpolationTests(SimpleTestCase):

    def test_exact_at_nodes_and_for_band_limited_shifts(self):
        grid = ParamGrid(16, np.pi)
        a1, a2 = grid.mesh
        F = np.cos(a1 + 2 * a2) + 0.5 * np.sin(3 * a1)
        np.testing.assert_allclose(fourier_interpolate(F, grid, a1, a2), F, atol=1e-12)
        shifted = fourier_interpolate(F, grid, a1 + 0.3, a2 - 0.1)
        expected = np.cos(a1 + 0.3 + 2 * (a2 - 0.1)) + 0.5 * np.sin(3 * (a1 + 0.3))
        np.testing.assert_allclose(shifted, expected, atol=1e-12)

    def test_stacked_fields_keep_leading_axis(self):
        grid = ParamGrid(8, 1.0)
        stack = np.zeros((3, 8, 8))
        a1, a2 = grid.mesh
        self.assertEqual(fourier_interpolate(stack, grid, a1, a2).shape, (3, 8, 8))
