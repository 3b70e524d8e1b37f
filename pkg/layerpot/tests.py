import math

import numpy as np
from django.test import SimpleTestCase

from birkhoff_rott.quadrature import QuadratureConfig
from birkhoff_rott.velocity import br_velocity
from core.exceptions import SolverDivergenceError
from spectral.grid import ParamGrid
from spectral.operators import spectral_derivative
from spectral.testing import band_limited_field, gaussian_bump
from surface.geometry import dot, geometry
from surface.state import SurfaceState
from .darcy import darcy_residual, vorticity_density
from .operators import DoubleLayerOperator, double_layer_apply, spectral_radius_estimate
from .params import FluidParams
from .solver import omega_residual, omega_rhs, solve_omega


def bump_state(grid, amplitude=0.2, width=0.8, horizontal=(0.05, -0.03), periodic=False):
    U = np.stack([
        gaussian_bump(grid, horizontal[0], width),
        gaussian_bump(grid, horizontal[1], width, center=(0.3, 0.0)),
        gaussian_bump(grid, amplitude, width),
    ])
    return SurfaceState(grid, U, periodic=periodic)


def direct_double_layer(state, cache, omega, ring=3):
    """Independent double loop for the same quadrature rule."""
    grid = state.grid
    n, h = grid.n, grid.h
    X = state.X.tolist()
    N = cache.N.tolist()
    X1 = cache.X1.tolist()
    X2 = cache.X2.tolist()
    W = omega.tolist()
    out = np.zeros((n, n))
    for i1 in range(n):
        for i2 in range(n):
            acc = 0.0
            for s1 in range(n):
                for s2 in range(n):
                    m1, m2 = i1 - s1, i2 - s2
                    if m1 == 0 and m2 == 0:
                        continue
                    weight = h * h * (-2.0 if m1 % 2 == 0 and m2 % 2 == 0 else 2.0)
                    d = [X[c][i1][i2] - X[c][s1][s2] for c in range(3)]
                    r3 = math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2) ** 3
                    numerator = sum(d[c] * N[c][s1][s2] for c in range(3))
                    acc += weight * numerator * W[s1][s2] / r3
            for m1 in range(-ring, ring + 1):
                for m2 in range(-ring, ring + 1):
                    if not 0 < m1 * m1 + m2 * m2 <= ring * ring:
                        continue
                    if not (0 <= i1 - m1 < n and 0 <= i2 - m2 < n):
                        continue
                    weight = h * h * (-2.0 if m1 % 2 == 0 and m2 % 2 == 0 else 2.0)
                    d = [h * (m1 * X1[c][i1][i2] + m2 * X2[c][i1][i2]) for c in range(3)]
                    r3 = math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2) ** 3
                    numerator = sum(d[c] * N[c][i1][i2] for c in range(3))
                    acc -= weight * numerator * W[i1][i2] / r3
            out[i1, i2] = acc / (2 * math.pi)
    return out


class FluidParamsTests(SimpleTestCase):

    def test_atwood_numbers(self):
        params = FluidParams(mu1=1.0, mu2=3.0, rho1=0.5, rho2=2.5)
        self.assertEqual(params.a_mu, 0.5)
        self.assertEqual(params.a_rho, 0.5)

    def test_rejects_non_positive_viscosity(self):
        with self.assertRaises(ValueError):
            FluidParams(mu1=0.0)
        with self.assertRaises(ValueError):
            FluidParams(rho2=float('nan'))


class DoubleLayerTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(16, np.pi)
        self.state = bump_state(self.grid)
        self.cache = geometry(self.state)
        self.omega = gaussian_bump(self.grid, 1.0, 0.9, center=(-0.2, 0.4))

    def test_flat_surface_annihilates_every_density(self):
        state = SurfaceState(self.grid, np.zeros((3, 16, 16)))
        cache = geometry(state)
        omega = band_limited_field(self.grid, np.random.default_rng(0))
        np.testing.assert_array_equal(double_layer_apply(state, cache, omega), 0.0)

    def test_matches_direct_summation(self):
        expected = direct_double_layer(self.state, self.cache, self.omega)
        result = double_layer_apply(self.state, self.cache, self.omega)
        np.testing.assert_allclose(result, expected, rtol=0, atol=1e-12)

    def test_matrix_free_agrees_with_dense(self):
        dense = DoubleLayerOperator(self.state, self.cache)
        free = DoubleLayerOperator(self.state, self.cache, QuadratureConfig(dense_limit=0, chunk_pairs=5000))
        self.assertTrue(dense.dense)
        self.assertFalse(free.dense)
        np.testing.assert_allclose(free(self.omega), dense(self.omega), rtol=0, atol=1e-14)

    def test_linear_operator_shape(self):
        operator = DoubleLayerOperator(self.state, self.cache).as_linear_operator(shift=1.0, scale=-0.5)
        self.assertEqual(operator.shape, (256, 256))
        result = operator.matvec(self.omega.ravel())
        expected = self.omega.ravel() - 0.5 * double_layer_apply(self.state, self.cache, self.omega).ravel()
        np.testing.assert_allclose(result, expected, atol=1e-14)

    def test_self_convergence_with_height_density(self):
        values = []
        for n in (16, 32, 64):
            state = bump_state(ParamGrid(n, np.pi))
            values.append(double_layer_apply(
                state, geometry(state), state.X[2], QuadratureConfig(dense_limit=0),
            ))
        gaps = [
            float(np.max(np.abs(coarse - fine[::2, ::2])))
            for coarse, fine in zip(values, values[1:])
        ]
        self.assertGreater(gaps[1], 0.0)
        self.assertGreaterEqual(math.log2(gaps[0] / gaps[1]), 2.0)


class SpectralRadiusTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(16, np.pi)

    def test_flat_surface_is_zero(self):
        state = SurfaceState(self.grid, np.zeros((3, 16, 16)))
        estimate = spectral_radius_estimate(state, geometry(state), iters=10)
        self.assertEqual(float(estimate), 0.0)
        self.assertTrue(estimate.converged)

    def test_moderate_bump_is_contractive(self):
        state = bump_state(self.grid, amplitude=0.3)
        estimate = spectral_radius_estimate(state, geometry(state), iters=60)
        self.assertGreater(estimate.value, 0.0)
        self.assertLess(estimate.value, 1.0)

    def test_invariant_under_vertical_translation(self):
        state = bump_state(self.grid, amplitude=0.3)
        lifted = state.translated((0.0, 0.0, 0.75))
        first = spectral_radius_estimate(state, geometry(state), iters=30, rtol=0.0)
        second = spectral_radius_estimate(lifted, geometry(lifted), iters=30, rtol=0.0)
        self.assertLess(abs(first.value - second.value), 1e-8)


class SolveOmegaTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(16, np.pi)
        self.params = FluidParams(mu1=1.0, mu2=3.0, rho1=0.0, rho2=1.0)

    def test_flat_surface_is_trivial(self):
        state = SurfaceState(self.grid, np.zeros((3, 16, 16)))
        report = solve_omega(state, geometry(state), self.params)
        self.assertEqual(report.method, 'trivial')
        np.testing.assert_array_equal(report.omega, 0.0)

    def test_equal_viscosities_solve_directly(self):
        state = bump_state(self.grid)
        params = FluidParams(mu1=2.0, mu2=2.0, rho1=0.0, rho2=1.0)
        report = solve_omega(state, geometry(state), params)
        self.assertEqual(report.method, 'direct')
        self.assertEqual(report.iterations, 1)
        np.testing.assert_array_equal(report.omega, -2 * params.a_rho * state.U[2])

    def test_residual_contract(self):
        state = bump_state(self.grid)
        cache = geometry(state)
        operator = DoubleLayerOperator(state, cache)
        report = solve_omega(state, cache, self.params, tol=1e-10, operator=operator)
        self.assertEqual(report.method, 'gmres')
        self.assertLessEqual(report.residual, 1e-10)
        recomputed = omega_residual(operator, self.params, report.omega, omega_rhs(state, self.params))
        self.assertLess(abs(recomputed - report.residual), 1e-14)

    def test_krylov_and_picard_agree(self):
        state = bump_state(self.grid, amplitude=0.4)
        cache = geometry(state)
        operator = DoubleLayerOperator(state, cache)
        tol = 1e-10
        krylov = solve_omega(state, cache, self.params, tol=tol, operator=operator)
        picard = solve_omega(state, cache, self.params, tol=tol, method='picard', operator=operator)
        self.assertEqual(picard.method, 'picard')
        scale = np.max(np.abs(omega_rhs(state, self.params)))
        self.assertLess(np.max(np.abs(krylov.omega - picard.omega)), 10 * tol * scale)

    def test_neumann_iteration_count_follows_contraction(self):
        state = bump_state(self.grid, amplitude=0.3)
        cache = geometry(state)
        operator = DoubleLayerOperator(state, cache)
        radius = spectral_radius_estimate(state, cache, iters=60, operator=operator).value
        self.assertLess(radius * abs(self.params.a_mu), 0.9)
        tol = 1e-10
        budget = math.ceil(math.log(tol) / math.log(0.9))
        report = solve_omega(
            state, cache, self.params, tol=tol, max_iter=budget, method='picard', operator=operator,
        )
        self.assertEqual(report.method, 'picard')
        self.assertLessEqual(report.iterations, budget)

    def test_unreachable_tolerance_raises_with_best_residual(self):
        state = bump_state(self.grid)
        with self.assertRaises(SolverDivergenceError) as ctx:
            solve_omega(state, geometry(state), self.params, tol=1e-30, max_iter=5)
        self.assertEqual(ctx.exception.stop_reason, 'omega-solve')
        self.assertIsNotNone(ctx.exception.best_residual)

    def test_deviation_from_leading_order_is_quadratic(self):
        errors = []
        epsilons = (1e-2, 1e-3, 1e-4)
        for eps in epsilons:
            state = bump_state(self.grid, amplitude=eps, horizontal=(0.0, 0.0))
            report = solve_omega(state, geometry(state), self.params, tol=1e-13)
            errors.append(np.max(np.abs(report.omega + 2 * self.params.a_rho * state.U[2])))
        slope = np.polyfit(np.log(epsilons), np.log(errors), 1)[0]
        self.assertGreaterEqual(slope, 1.9)


class VorticityAndDarcyTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(16, np.pi)

    def test_constant_potential_has_no_vorticity(self):
        state = bump_state(self.grid)
        omega = vorticity_density(state, geometry(state), np.full(self.grid.shape, 2.5))
        self.assertLess(np.max(np.abs(omega)), 1e-13)

    def test_flat_vorticity(self):
        state = SurfaceState(self.grid, np.zeros((3, 16, 16)))
        Omega = gaussian_bump(self.grid, 0.5, 0.7)
        omega = vorticity_density(state, geometry(state), Omega)
        np.testing.assert_allclose(omega[0], spectral_derivative(Omega, 2, self.grid), atol=1e-15)
        np.testing.assert_allclose(omega[1], -spectral_derivative(Omega, 1, self.grid), atol=1e-15)
        np.testing.assert_array_equal(omega[2], 0.0)

    def test_vorticity_is_tangent(self):
        state = bump_state(self.grid, amplitude=0.4)
        cache = geometry(state)
        omega = vorticity_density(state, cache, band_limited_field(self.grid, np.random.default_rng(8)))
        self.assertLess(np.max(np.abs(dot(omega, cache.N))), 1e-12)

    def test_flat_surface_has_zero_residual(self):
        state = SurfaceState(self.grid, np.zeros((3, 16, 16)))
        cache = geometry(state)
        params = FluidParams(mu1=1.0, mu2=3.0)
        report = solve_omega(state, cache, params)
        br = br_velocity(state, cache, vorticity_density(state, cache, report.omega))
        r1, r2 = darcy_residual(state, cache, params, report.omega, br)
        self.assertLess(max(r1, r2), 1e-12)

    def test_unrelated_potential_breaks_the_identity(self):
        grid = ParamGrid(32, np.pi)
        state = bump_state(grid, amplitude=0.05, horizontal=(0.0, 0.0), width=0.7)
        cache = geometry(state)
        params = FluidParams(mu1=1.0, mu2=3.0)
        report = solve_omega(state, cache, params)
        br = br_velocity(state, cache, vorticity_density(state, cache, report.omega))
        true_residual = max(darcy_residual(state, cache, params, report.omega, br))

        fake = band_limited_field(grid, np.random.default_rng(17), modes=3)
        fake_br = br_velocity(state, cache, vorticity_density(state, cache, fake))
        fake_residual = max(darcy_residual(state, cache, params, fake, fake_br))
        self.assertGreater(fake_residual, 100 * true_residual)
