import math

import numpy as np
from django.test import SimpleTestCase
from scipy.special import i0e, i1e

from core.exceptions import InvalidFieldError, PointTooCloseError
from layerpot.darcy import vorticity_density
from spectral.grid import ParamGrid
from spectral.operators import riesz
from spectral.testing import band_limited_field, gaussian_bump
from surface.geometry import geometry
from surface.state import SurfaceState
from .quadrature import PairQuadrature, QuadratureConfig, richardson_weights
from .velocity import br_velocity, velocity_at_point


def bump_state(grid, amplitudes=(0.05, -0.03, 0.2), width=0.8, periodic=False):
    U = np.stack([gaussian_bump(grid, a, width) for a in amplitudes])
    return SurfaceState(grid, U, periodic=periodic)


def gaussian_riesz(grid, j, width, center=(0.0, 0.0)):
    """Free-space R_j of exp(−|α − c|²/w²) through the modified Bessel functions."""
    a1, a2 = grid.mesh
    x = (a1 - center[0], a2 - center[1])
    z = (x[0] ** 2 + x[1] ** 2) / (2.0 * width ** 2)
    return math.sqrt(math.pi) / (2.0 * width) * (i0e(z) - i1e(z)) * x[j - 1]


def direct_br(state, cache, omega, ring=3):
    """Plain double loop over targets and sources with the same rule."""
    grid = state.grid
    n, h = grid.n, grid.h
    X = state.X.tolist()
    X1 = cache.X1.tolist()
    X2 = cache.X2.tolist()
    w = omega.tolist()
    out = np.zeros((3, n, n))
    ring_offsets = [
        (a, b) for a in range(-ring, ring + 1) for b in range(-ring, ring + 1)
        if 0 < a * a + b * b <= ring * ring
    ]
    for i1 in range(n):
        for i2 in range(n):
            acc = [0.0, 0.0, 0.0]
            for s1 in range(n):
                for s2 in range(n):
                    m1, m2 = i1 - s1, i2 - s2
                    if state.periodic:
                        m1 = (m1 + n // 2) % n - n // 2
                        m2 = (m2 + n // 2) % n - n // 2
                    if m1 == 0 and m2 == 0:
                        continue
                    weight = h * h * (-2.0 if m1 % 2 == 0 and m2 % 2 == 0 else 2.0)
                    d = [
                        h * m1 + (X[0][i1][i2] - grid.nodes[i1]) - (X[0][s1][s2] - grid.nodes[s1]),
                        h * m2 + (X[1][i1][i2] - grid.nodes[i2]) - (X[1][s1][s2] - grid.nodes[s2]),
                        X[2][i1][i2] - X[2][s1][s2],
                    ]
                    r3 = math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2) ** 3
                    k = [weight * c / r3 for c in d]
                    if state.periodic:
                        rho3 = math.sqrt((h * m1) ** 2 + (h * m2) ** 2) ** 3
                        k[0] -= weight * h * m1 / rho3
                        k[1] -= weight * h * m2 / rho3
                    ws = [w[c][s1][s2] for c in range(3)]
                    acc[0] += k[1] * ws[2] - k[2] * ws[1]
                    acc[1] += k[2] * ws[0] - k[0] * ws[2]
                    acc[2] += k[0] * ws[1] - k[1] * ws[0]
            for m1, m2 in ring_offsets:
                if not state.periodic and not (0 <= i1 - m1 < n and 0 <= i2 - m2 < n):
                    continue
                weight = h * h * (-2.0 if m1 % 2 == 0 and m2 % 2 == 0 else 2.0)
                d = [h * (m1 * X1[c][i1][i2] + m2 * X2[c][i1][i2]) for c in range(3)]
                r3 = math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2) ** 3
                k = [weight * c / r3 for c in d]
                if state.periodic:
                    rho3 = math.sqrt((h * m1) ** 2 + (h * m2) ** 2) ** 3
                    k[0] -= weight * h * m1 / rho3
                    k[1] -= weight * h * m2 / rho3
                wt = [w[c][i1][i2] for c in range(3)]
                acc[0] -= k[1] * wt[2] - k[2] * wt[1]
                acc[1] -= k[2] * wt[0] - k[0] * wt[2]
                acc[2] -= k[0] * wt[1] - k[1] * wt[0]
            for c in range(3):
                out[c, i1, i2] = -acc[c] / (4 * math.pi)
    if state.periodic:
        out += -0.5 * np.stack([
            riesz(omega[2], 2, grid), -riesz(omega[2], 1, grid),
            riesz(omega[1], 1, grid) - riesz(omega[0], 2, grid),
        ])
    return out


class QuadratureConfigTests(SimpleTestCase):

    def test_defaults_come_from_settings(self):
        cfg = QuadratureConfig()
        self.assertEqual(cfg.ring, 3)
        self.assertTrue(cfg.deterministic)
        self.assertGreater(cfg.chunk_pairs, 0)

    def test_invalid_values(self):
        with self.assertRaises(ValueError):
            QuadratureConfig(ring=0)
        with self.assertRaises(ValueError):
            QuadratureConfig(cutoff=10.0).effective_cutoff(ParamGrid(16, 1.0))

    def test_richardson_weights(self):
        m1 = np.array([0, 1, 2, 2, -1])
        m2 = np.array([0, 0, 0, 2, -3])
        np.testing.assert_array_equal(
            richardson_weights(m1, m2, 0.5), [0.0, 0.5, -0.5, -0.5, 0.5],
        )


class BirkhoffRottTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(16, np.pi)
        self.state = bump_state(self.grid)
        self.cache = geometry(self.state)
        self.omega = vorticity_density(
            self.state, self.cache, gaussian_bump(self.grid, 0.3, 0.9, center=(0.2, -0.1)),
        )

    def test_zero_vorticity(self):
        result = br_velocity(self.state, self.cache, np.zeros((3, 16, 16)))
        np.testing.assert_array_equal(result, 0.0)

    def test_matches_direct_summation(self):
        expected = direct_br(self.state, self.cache, self.omega)
        result = br_velocity(self.state, self.cache, self.omega)
        np.testing.assert_allclose(result, expected, rtol=0, atol=1e-12)

    def test_periodic_state_matches_direct_summation(self):
        a1, a2 = self.grid.mesh
        U = np.zeros((3, 16, 16))
        U[2] = 0.1 * np.cos(a1) + 0.05 * np.sin(a1 + a2)
        state = SurfaceState(self.grid, U, periodic=True)
        cache = geometry(state)
        omega = vorticity_density(state, cache, 0.2 * np.cos(a1) * np.cos(a2))
        expected = direct_br(state, cache, omega)
        np.testing.assert_allclose(br_velocity(state, cache, omega), expected, rtol=0, atol=1e-12)

    def test_flat_sheet_has_no_horizontal_velocity(self):
        state = SurfaceState(self.grid, np.zeros((3, 16, 16)))
        cache = geometry(state)
        omega = vorticity_density(state, cache, gaussian_bump(self.grid, 0.4, 0.7))
        result = br_velocity(state, cache, omega)
        np.testing.assert_array_equal(result[:2], 0.0)
        self.assertGreater(np.max(np.abs(result[2])), 0.0)

    def test_flat_periodic_sheet_matches_riesz_oracle(self):
        state = SurfaceState(self.grid, np.zeros((3, 16, 16)), periodic=True)
        cache = geometry(state)
        rng = np.random.default_rng(12)
        omega = np.stack([
            band_limited_field(self.grid, rng, modes=3),
            band_limited_field(self.grid, rng, modes=3),
            np.zeros(self.grid.shape),
        ])
        expected = -0.5 * (riesz(omega[1], 1, self.grid) - riesz(omega[0], 2, self.grid))
        result = br_velocity(state, cache, omega)
        np.testing.assert_array_equal(result[:2], 0.0)
        np.testing.assert_allclose(result[2], expected, atol=1e-12)
        self.assertLess(abs(float(result[2].mean())), 1e-12)

    def test_translation_equivariance(self):
        shifted = self.state.translated((0.3, -0.7, 1.5))
        base = br_velocity(self.state, self.cache, self.omega)
        moved = br_velocity(shifted, geometry(shifted), self.omega)
        np.testing.assert_allclose(moved, base, rtol=0, atol=1e-12)

    def test_linear_in_vorticity(self):
        base = br_velocity(self.state, self.cache, self.omega)
        scaled = br_velocity(self.state, self.cache, 3.0 * self.omega)
        np.testing.assert_allclose(scaled, 3.0 * base, rtol=1e-13, atol=1e-15)

    def test_result_does_not_depend_on_chunking(self):
        whole = br_velocity(self.state, self.cache, self.omega, QuadratureConfig(chunk_pairs=2 ** 20))
        pieces = br_velocity(self.state, self.cache, self.omega, QuadratureConfig(chunk_pairs=1000))
        threaded = br_velocity(
            self.state, self.cache, self.omega,
            QuadratureConfig(chunk_pairs=1000, deterministic=False, workers=3),
        )
        np.testing.assert_allclose(pieces, whole, rtol=0, atol=1e-15)
        np.testing.assert_allclose(threaded, whole, rtol=0, atol=1e-15)

    def test_rejects_normal_vorticity(self):
        with self.assertRaises(InvalidFieldError):
            br_velocity(self.state, self.cache, self.cache.N)


class RingMomentTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(16, np.pi)

    def test_complete_rings_cancel(self):
        state = bump_state(self.grid, periodic=True)
        moment = PairQuadrature(state, QuadratureConfig()).ring_moment(geometry(state), subtract_flat=True)
        np.testing.assert_allclose(moment, 0.0, atol=1e-12)

    def test_only_clipped_rings_contribute(self):
        state = bump_state(self.grid)
        ring = 3
        moment = PairQuadrature(state, QuadratureConfig(ring=ring)).ring_moment(geometry(state))
        moment = moment.reshape(3, 16, 16)
        inner = (slice(None), slice(ring, 16 - ring), slice(ring, 16 - ring))
        np.testing.assert_allclose(moment[inner], 0.0, atol=1e-12)
        self.assertGreater(float(np.max(np.abs(moment[:, 0, :]))), 1e-3)


class ConvergenceTests(SimpleTestCase):
    sizes = (16, 32, 64)

    def test_truncated_flat_sheet_converges_to_the_riesz_oracle(self):
        width, first, second = 0.6, (0.2, -0.1), (-0.3, 0.2)
        errors = []
        for n in self.sizes:
            grid = ParamGrid(n, np.pi)
            state = SurfaceState(grid, np.zeros((3, n, n)))
            omega = np.stack([
                gaussian_bump(grid, 1.0, width, center=first),
                gaussian_bump(grid, 0.5, width, center=second),
                np.zeros(grid.shape),
            ])
            expected = -0.5 * (
                0.5 * gaussian_riesz(grid, 1, width, second) - gaussian_riesz(grid, 2, width, first)
            )
            result = br_velocity(state, geometry(state), omega)
            np.testing.assert_array_equal(result[:2], 0.0)
            errors.append(float(np.max(np.abs(result[2] - expected))))
        self.assertLess(errors[1], errors[0])
        self.assertGreaterEqual(math.log2(errors[1] / errors[2]), 2.0)

    def test_self_convergence_on_a_bump(self):
        values = []
        for n in self.sizes:
            grid = ParamGrid(n, np.pi)
            state = bump_state(grid)
            cache = geometry(state)
            omega = vorticity_density(state, cache, gaussian_bump(grid, 0.5, 0.8, center=(-0.2, 0.1)))
            values.append(br_velocity(state, cache, omega))
        gaps = [
            float(np.max(np.abs(coarse - fine[:, ::2, ::2])))
            for coarse, fine in zip(values, values[1:])
        ]
        self.assertGreaterEqual(math.log2(gaps[0] / gaps[1]), 2.0)


class VelocityAtPointTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(16, np.pi)
        self.state = SurfaceState(self.grid, np.zeros((3, 16, 16)))
        self.cache = geometry(self.state)
        bump = gaussian_bump(self.grid, 1.0, 0.8)
        self.omega = np.stack([bump, 0.5 * bump, np.zeros_like(bump)])

    def test_zero_vorticity(self):
        v = velocity_at_point(self.state, self.cache, np.zeros((3, 16, 16)), (0.0, 0.0, 2.0))
        np.testing.assert_array_equal(v, 0.0)

    def test_rejects_points_near_the_surface(self):
        with self.assertRaises(PointTooCloseError):
            velocity_at_point(self.state, self.cache, self.omega, (0.1, 0.1, 0.5 * self.grid.h))

    def test_far_field_decays_like_inverse_square(self):
        speeds = [
            np.linalg.norm(velocity_at_point(self.state, self.cache, self.omega, (0.0, 0.0, z)))
            for z in (20.0, 40.0, 80.0)
        ]
        for near, far in zip(speeds, speeds[1:]):
            self.assertAlmostEqual(near / far / 4.0, 1.0, delta=0.2)

    def test_sampled_velocity_is_divergence_free(self):
        x = np.array([0.3, -0.2, 1.0])
        step = 1e-4
        divergence = 0.0
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = step
            ahead = velocity_at_point(self.state, self.cache, self.omega, x + e)
            behind = velocity_at_point(self.state, self.cache, self.omega, x - e)
            divergence += (ahead[axis] - behind[axis]) / (2 * step)
        self.assertLess(abs(divergence), 1e-5)
