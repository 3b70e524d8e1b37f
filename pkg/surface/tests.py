import numpy as np
from django.test import SimpleTestCase

from core.exceptions import (
    BoundaryMarginError, DegenerateSurfaceError, ResolutionError, SnapshotFormatError,
)
from spectral.grid import ParamGrid
from spectral.operators import spectral_derivative
from spectral.testing import gaussian_bump
from .geometry import (
    chord_arc_gauge, chord_arc_rate, dot, geometry, geometry_from_tangents, isothermal_defect,
    isothermal_residual, sobolev_norm,
)
from .isothermal import Isothermalizer, isothermalize
from .snapshot import decode_snapshot, encode_snapshot, read_snapshot, write_snapshot
from .state import SurfaceState


def graph_state(grid, phi, **kwargs):
    U = np.zeros((3, *grid.shape))
    U[2] = phi
    return SurfaceState(grid, U, **kwargs)


class SurfaceStateTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(32, np.pi)

    def test_flat_state_has_zero_margin_ratio(self):
        state = SurfaceState(self.grid, np.zeros((3, 32, 32)))
        self.assertEqual(state.margin_ratio, 0.0)
        np.testing.assert_array_equal(state.X, self.grid.flat_embedding())

    def test_samples_are_read_only(self):
        state = SurfaceState(self.grid, np.zeros((3, 32, 32)))
        with self.assertRaises(ValueError):
            state.U[0, 0, 0] = 1.0

    def test_margin_policies(self):
        U = np.zeros((3, 32, 32))
        U[2] = 1.0
        state = SurfaceState(self.grid, U)
        with self.assertRaises(BoundaryMarginError) as ctx:
            state.check_margin('error')
        self.assertEqual(ctx.exception.stop_reason, 'boundary-margin')
        with self.assertLogs('surface.state', level='WARNING'):
            self.assertEqual(state.check_margin('warn'), 1.0)
        self.assertEqual(state.check_margin('off'), 0.0)

    def test_periodic_states_skip_margin_check(self):
        a1, _ = self.grid.mesh
        state = graph_state(self.grid, 1e-4 * np.cos(a1), periodic=True)
        self.assertEqual(state.check_margin('error'), 0.0)

    def test_compact_bump_passes_margin_check(self):
        state = graph_state(self.grid, gaussian_bump(self.grid, 0.1, 0.5))
        self.assertLess(state.check_margin('error'), 1e-6)


class GeometryTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(32, np.pi)

    def test_flat_normal(self):
        cache = geometry(SurfaceState(self.grid, np.zeros((3, 32, 32))))
        np.testing.assert_array_equal(cache.N[2], np.ones(self.grid.shape))
        self.assertEqual(cache.min_normal, 1.0)

    def test_graph_normal(self):
        phi = gaussian_bump(self.grid, 0.2, 0.7)
        cache = geometry(graph_state(self.grid, phi))
        np.testing.assert_allclose(cache.N[0], -spectral_derivative(phi, 1, self.grid), atol=1e-14)
        np.testing.assert_allclose(cache.N[1], -spectral_derivative(phi, 2, self.grid), atol=1e-14)
        np.testing.assert_allclose(cache.N[2], 1.0, atol=1e-14)

    def test_stretched_plane(self):
        ones = np.ones(self.grid.shape)
        zeros = np.zeros(self.grid.shape)
        cache = geometry_from_tangents(
            np.stack([2 * ones, zeros, zeros]), np.stack([zeros, ones, zeros]),
        )
        np.testing.assert_array_equal(cache.N[2], 2 * ones)
        f, g = isothermal_residual(None, cache)
        np.testing.assert_array_equal(f, 1.5 * ones)
        np.testing.assert_array_equal(g, zeros)

    def test_degenerate_tangents_are_rejected(self):
        ones = np.ones(self.grid.shape)
        zeros = np.zeros(self.grid.shape)
        with self.assertRaises(DegenerateSurfaceError) as ctx:
            geometry_from_tangents(np.stack([ones, zeros, zeros]), np.stack([ones, zeros, zeros]))
        self.assertEqual(ctx.exception.min_normal, 0.0)

    def test_grid_shift_equivariance(self):
        rng = np.random.default_rng(2)
        U = np.stack([gaussian_bump(self.grid, 0.2 * c, 0.6) for c in rng.standard_normal(3)])
        shifted = np.roll(U, (3, -5), axis=(1, 2))
        base = geometry(SurfaceState(self.grid, U))
        moved = geometry(SurfaceState(self.grid, shifted))
        np.testing.assert_allclose(moved.N, np.roll(base.N, (3, -5), axis=(1, 2)), atol=1e-13)
        np.testing.assert_allclose(moved.X1, np.roll(base.X1, (3, -5), axis=(1, 2)), atol=1e-13)

    def test_isothermal_residual_of_graph(self):
        phi = gaussian_bump(self.grid, 0.2, 0.7)
        f, g = isothermal_residual(graph_state(self.grid, phi))
        p1 = spectral_derivative(phi, 1, self.grid)
        p2 = spectral_derivative(phi, 2, self.grid)
        np.testing.assert_allclose(f, 0.5 * (p1 ** 2 - p2 ** 2), atol=1e-14)
        np.testing.assert_allclose(g, p1 * p2, atol=1e-14)

    def test_isothermal_residual_reconstructs_tangent_identities(self):
        rng = np.random.default_rng(4)
        U = np.stack([gaussian_bump(self.grid, 0.2 * c, 0.6) for c in rng.standard_normal(3)])
        state = SurfaceState(self.grid, U)
        cache = geometry(state)
        f, g = isothermal_residual(state, cache)
        np.testing.assert_allclose(
            dot(cache.X1, cache.X1) - dot(cache.X2, cache.X2), 2 * f, atol=1e-13,
        )
        np.testing.assert_allclose(dot(cache.X1, cache.X2), g, atol=1e-13)


class ChordArcGaugeTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(16, np.pi)

    def test_flat_state_is_exactly_one(self):
        state = SurfaceState(self.grid, np.zeros((3, 16, 16)))
        self.assertEqual(chord_arc_gauge(state, stride=1), 1.0)
        self.assertEqual(chord_arc_gauge(state, stride=4), 1.0)

    def test_graph_state_is_one(self):
        state = graph_state(self.grid, gaussian_bump(self.grid, 0.4, 0.6))
        self.assertAlmostEqual(chord_arc_gauge(state, stride=1), 1.0, places=14)

    def test_invariant_under_constant_shift(self):
        rng = np.random.default_rng(9)
        U = np.stack([gaussian_bump(self.grid, 0.3 * c, 0.8) for c in rng.standard_normal(3)])
        state = SurfaceState(self.grid, U)
        shifted = state.translated((0.5, -0.25, 2.0))
        self.assertAlmostEqual(chord_arc_gauge(state), chord_arc_gauge(shifted), places=12)

    def test_strided_estimate_tracks_exact_value(self):
        grid = ParamGrid(32, np.pi)
        direction = np.random.default_rng(21).standard_normal(3)
        direction /= np.linalg.norm(direction)
        bump = gaussian_bump(grid, 0.3, 1.0)
        state = SurfaceState(grid, direction[:, None, None] * bump)
        exact = chord_arc_gauge(state, stride=1)
        strided = chord_arc_gauge(state, stride=4)
        self.assertLessEqual(strided, exact + 1e-15)
        self.assertLess(abs(exact - strided) / exact, 0.05)

    def test_rate_vanishes_for_rigid_motion(self):
        state = graph_state(self.grid, gaussian_bump(self.grid, 0.4, 0.6))
        self.assertEqual(chord_arc_rate(state, np.zeros((3, 16, 16))), 0.0)
        drift = np.broadcast_to(np.array([0.3, -1.0, 2.0])[:, None, None], (3, 16, 16))
        self.assertEqual(chord_arc_rate(state, drift, stride=2), 0.0)

    def test_rising_graph_does_not_increase_the_gauge(self):
        bump = gaussian_bump(self.grid, 0.4, 0.6)
        state = graph_state(self.grid, bump)
        xt = np.stack([np.zeros_like(bump), np.zeros_like(bump), bump])
        self.assertLessEqual(chord_arc_rate(state, xt), 0.0)


class SobolevNormTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(32, np.pi)

    def test_flat_is_zero(self):
        self.assertEqual(sobolev_norm(SurfaceState(self.grid, np.zeros((3, 32, 32))), 4), 0.0)

    def test_single_mode_closed_form(self):
        L = self.grid.L
        k = np.pi / L
        a1, _ = self.grid.mesh
        state = graph_state(self.grid, np.cos(k * a1))
        mode_square = 2 * L * L
        expected = np.sqrt(mode_square) + k ** 2 * mode_square + k ** 8 * mode_square
        self.assertAlmostEqual(sobolev_norm(state, 4), expected, places=9)

    def test_vertical_homogeneity(self):
        phi = gaussian_bump(self.grid, 0.1, 0.6)
        single = graph_state(self.grid, phi)
        double = graph_state(self.grid, 2 * phi)
        l2 = np.sqrt(self.grid.integrate(phi * phi))
        rest = sobolev_norm(single, 3) - l2
        self.assertAlmostEqual(sobolev_norm(double, 3), 2 * l2 + 4 * rest, places=10)

    def test_nonzero_deviation_is_positive(self):
        U = np.zeros((3, 32, 32))
        U[0, 5, 7] = 1e-3
        self.assertGreater(sobolev_norm(SurfaceState(self.grid, U), 1), 0.0)

    def test_order_beyond_resolution(self):
        state = SurfaceState(ParamGrid(16, 1.0), np.zeros((3, 16, 16)))
        with self.assertRaises(ResolutionError):
            sobolev_norm(state, 5)
        with self.assertRaises(ResolutionError):
            sobolev_norm(state, 0)


class IsothermalizeTests(SimpleTestCase):

    def test_flat_input_is_returned_unchanged(self):
        state = SurfaceState(ParamGrid(16, np.pi), np.zeros((3, 16, 16)))
        report = Isothermalizer().run(state)
        self.assertIs(report.state, state)
        self.assertEqual(report.j_initial, 0.0)
        self.assertEqual(report.iterations, 0)

    def test_isothermal_input_is_a_fixed_point(self):
        grid = ParamGrid(16, np.pi)
        state = SurfaceState(grid, np.zeros((3, 16, 16))).translated((0.1, 0.2, 0.3))
        result = isothermalize(state, tol=1e-2, max_iter=10)
        np.testing.assert_array_equal(result.U, state.U)

    def test_gaussian_bump_defect_drops_a_hundredfold(self):
        grid = ParamGrid(64, np.pi)
        state = graph_state(grid, gaussian_bump(grid, 0.1, 0.5))
        report = Isothermalizer(tol=1e-2, max_iter=200).run(state)
        self.assertGreater(report.j_initial, 0.0)
        self.assertLessEqual(report.j_final, 1e-2 * report.j_initial)
        self.assertLessEqual(report.iterations, 200)
        self.assertAlmostEqual(isothermal_defect(report.state), report.j_final, places=15)

    def test_image_surface_is_preserved(self):
        grid = ParamGrid(64, np.pi)
        phi = gaussian_bump(grid, 0.1, 0.5)
        result = isothermalize(graph_state(grid, phi), tol=1e-2, max_iter=50)
        X = result.X
        height_on_graph = np.exp(-(X[0] ** 2 + X[1] ** 2) / 0.25) * 0.1
        interior = ~grid.frame_mask
        self.assertLess(np.max(np.abs(X[2] - height_on_graph)[interior]), 1e-6)


class SnapshotTests(SimpleTestCase):

    def setUp(self):
        self.grid = ParamGrid(8, np.pi)
        rng = np.random.default_rng(1)
        self.state = SurfaceState(self.grid, 1e-3 * rng.standard_normal((3, 8, 8)), t=0.125)

    def test_header_and_payload_layout(self):
        data = encode_snapshot(self.state)
        header, _, payload = data.partition(b'\n')
        self.assertEqual(header, b'MUSKAT3D v1 n=8 L=3.141592653589793 t=0.125')
        self.assertEqual(len(payload), 8 * 8 * 3 * 8)
        first = np.frombuffer(payload[:24], dtype='<f8')
        np.testing.assert_array_equal(first, self.state.U[:, 0, 0])

    def test_save_load_save_is_byte_identical(self):
        data = encode_snapshot(self.state)
        loaded = decode_snapshot(data)
        self.assertEqual(encode_snapshot(loaded), data)
        self.assertEqual(loaded.t, 0.125)

    def test_file_round_trip(self):
        import tempfile
        from pathlib import Path
        with tempfile.TemporaryDirectory() as tmp:
            path = write_snapshot(Path(tmp) / 'snap' / 'state.bin', self.state)
            loaded = read_snapshot(path, periodic=True)
        self.assertTrue(loaded.periodic)
        np.testing.assert_array_equal(loaded.U, self.state.U)

    def test_truncated_payload_reports_offset(self):
        data = encode_snapshot(self.state)[:-10]
        with self.assertRaises(SnapshotFormatError) as ctx:
            decode_snapshot(data)
        self.assertEqual(ctx.exception.offset, len(data))
        self.assertIn(f'(byte offset {len(data)})', str(ctx.exception))

    def test_trailing_bytes_and_bad_magic(self):
        data = encode_snapshot(self.state)
        with self.assertRaises(SnapshotFormatError):
            decode_snapshot(data + b'\x00')
        with self.assertRaises(SnapshotFormatError) as ctx:
            decode_snapshot(b'NOTASNAP' + data[8:])
        self.assertEqual(ctx.exception.offset, 0)

    def test_non_finite_payload_value(self):
        data = bytearray(encode_snapshot(self.state))
        start = data.index(b'\n') + 1
        data[start + 48:start + 56] = np.array([np.nan], dtype='<f8').tobytes()
        with self.assertRaises(SnapshotFormatError) as ctx:
            decode_snapshot(bytes(data))
        self.assertEqual(ctx.exception.offset, start + 48)
