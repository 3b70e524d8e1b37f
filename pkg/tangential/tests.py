import numpy as np
from django.test import SimpleTestCase

from core.exceptions import DegenerateSurfaceError
from spectral.grid import ParamGrid
from spectral.operators import spectral_derivative
from spectral.testing import band_limited_field, gaussian_bump
from surface.geometry import GeometryCache, dot, geometry, geometry_from_tangents
from surface.state import SurfaceState
from .coefficients import (
    surface_velocity, tangential_coeffs, tangential_densities,
)


def synthetic_br(grid, seed=5, modes=3):
    rng = np.random.default_rng(seed)
    return np.stack([band_limited_field(grid, rng, modes=modes, amplitude=0.2) for _ in range(3)])


def newtonian_gradient(F, grid, j, targets):
    """h² Σ_{β≠α} (α_j − β_j)F(β) / (2π|α − β|²) at the masked targets."""
    a1, a2 = grid.mesh
    out = np.zeros(grid.shape)
    for i1, i2 in np.argwhere(targets):
        d = (a1[i1, i2] - a1, a2[i1, i2] - a2)
        r2 = d[0] ** 2 + d[1] ** 2
        r2[i1, i2] = np.inf
        out[i1, i2] = grid.cell_area * np.sum(d[j - 1] * F / (2 * np.pi * r2))
    return out


def mean_free(F):
    return F - F.mean()


class TangentialCoefficientTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(32, np.pi)
        self.flat = SurfaceState(self.grid, np.zeros((3, 32, 32)))
        self.flat_cache = geometry(self.flat)
        U = np.stack([gaussian_bump(self.grid, a, 0.8) for a in (0.04, -0.03, 0.2)])
        self.bump = SurfaceState(self.grid, U)
        self.bump_cache = geometry(self.bump)

    def test_zero_velocity_gives_zero_coefficients(self):
        tang = tangential_coeffs(self.bump, self.bump_cache, np.zeros((3, 32, 32)))
        np.testing.assert_array_equal(tang.C1, 0.0)
        np.testing.assert_array_equal(tang.C2, 0.0)

    def test_matches_the_newtonian_kernel_within_quadrature_error(self):
        grid = self.grid
        br = np.stack([
            gaussian_bump(grid, 1.0, 0.6, center=(0.3, 0.0)),
            gaussian_bump(grid, 0.5, 0.5, center=(-0.2, 0.3)),
            gaussian_bump(grid, 0.3, 0.7),
        ])
        a, b = tangential_densities(self.flat, self.flat_cache, br)
        a1, a2 = grid.mesh
        interior = (np.abs(a1) < grid.L / 2) & (np.abs(a2) < grid.L / 2)
        expected_C1 = newtonian_gradient(a, grid, 1, interior) - newtonian_gradient(b, grid, 2, interior)
        expected_C2 = -newtonian_gradient(a, grid, 2, interior) - newtonian_gradient(b, grid, 1, interior)
        tang = tangential_coeffs(self.flat, self.flat_cache, br)
        scale = max(np.max(np.abs(tang.C1[interior])), np.max(np.abs(tang.C2[interior])))
        self.assertGreater(scale, 0.3)
        for result, expected in ((tang.C1, expected_C1), (tang.C2, expected_C2)):
            # the torus solution is mean-free, the free-space sum is not
            gap = (result - expected)[interior]
            self.assertLess(np.max(np.abs(gap - gap.mean())), 0.1 * scale)

    def test_cauchy_riemann_identities(self):
        br = synthetic_br(self.grid)
        a, b = tangential_densities(self.flat, self.flat_cache, br)
        tang = tangential_coeffs(self.flat, self.flat_cache, br)
        d = lambda F, j: spectral_derivative(F, j, self.grid)
        np.testing.assert_allclose(d(tang.C1, 1) - d(tang.C2, 2), mean_free(a), atol=1e-10)
        np.testing.assert_allclose(d(tang.C2, 1) + d(tang.C1, 2), -mean_free(b), atol=1e-10)

    def test_tangential_cancellation(self):
        br = synthetic_br(self.grid, seed=8)
        cache = self.flat_cache
        tang = tangential_coeffs(self.flat, cache, br)
        d1 = spectral_derivative(br, 1, self.grid)
        d2 = spectral_derivative(br, 2, self.grid)
        C1_1 = spectral_derivative(tang.C1, 1, self.grid)
        C2_2 = spectral_derivative(tang.C2, 2, self.grid)
        residual = (dot(d1, cache.X1) - dot(d2, cache.X2)) + (C1_1 - C2_2) * dot(cache.X2, cache.X2)
        self.assertLess(float(np.max(np.abs(residual))), 1e-8)

    def test_coefficients_have_zero_mean(self):
        tang = tangential_coeffs(self.bump, self.bump_cache, synthetic_br(self.grid, seed=2))
        self.assertLess(abs(float(tang.C1.mean())), 1e-15)
        self.assertLess(abs(float(tang.C2.mean())), 1e-15)

    def test_degenerate_tangent_is_rejected(self):
        X1 = np.zeros((3, 32, 32))
        X2 = np.zeros((3, 32, 32))
        X1[0] = 1.0
        X2[1] = 1.0
        cache = geometry_from_tangents(X1, X2)
        X1[0, 4, 4] = 0.0
        X1[2, 4, 4] = 0.0
        broken = GeometryCache(X1, X2, cache.N, cache.N_norm, cache.min_normal)
        with self.assertRaises(DegenerateSurfaceError):
            tangential_coeffs(self.flat, broken, synthetic_br(self.grid))


class SurfaceVelocityTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(32, np.pi)
        U = np.stack([gaussian_bump(self.grid, a, 0.8) for a in (0.04, -0.03, 0.2)])
        self.state = SurfaceState(self.grid, U)
        self.cache = geometry(self.state)

    def test_normal_component_is_preserved(self):
        br = synthetic_br(self.grid, seed=3)
        tang = tangential_coeffs(self.state, self.cache, br)
        xt = surface_velocity(self.state, self.cache, br, tang)
        diff = dot(xt - br, self.cache.N)
        self.assertLess(float(np.max(np.abs(diff))), 1e-12)

    def test_flat_sheet_moves_vertically(self):
        state = SurfaceState(self.grid, np.zeros((3, 32, 32)))
        cache = geometry(state)
        br = np.zeros((3, 32, 32))
        br[2] = gaussian_bump(self.grid, 0.3, 0.6)
        tang = tangential_coeffs(state, cache, br)
        xt = surface_velocity(state, cache, br, tang)
        np.testing.assert_allclose(xt, br, rtol=0, atol=1e-15)

    def test_velocity_is_linear_in_br(self):
        br = synthetic_br(self.grid, seed=4)
        base = surface_velocity(self.state, self.cache, br, tangential_coeffs(self.state, self.cache, br))
        doubled = surface_velocity(
            self.state, self.cache, 2.0 * br, tangential_coeffs(self.state, self.cache, 2.0 * br),
        )
        np.testing.assert_allclose(doubled, 2.0 * base, rtol=1e-12, atol=1e-14)

