"""
Numerical isothermalization of initial data.
曲面模組 - 等溫參數化

Reparameterizes X by Φ = id + ψ with ψ periodic, descending on
J = ∫ f² + g² along tangential variations η. The step is the L² gradient
preconditioned by the multiplier 1/|ξ|²; with step 0.5 this is the
Gauss-Newton step of the linearized (f, g) map about the flat sheet.
The deformed surface is always rebuilt from the original samples,
Y = (ψ, 0) + U∘(id + ψ), so interpolation error does not accumulate.
"""

import logging
from dataclasses import dataclass

import numpy as np

from core.exceptions import IsothermalizationError
from spectral.operators import fourier_interpolate, operators_for, spectral_derivative
from .geometry import dot, isothermal_residual, tangents
from .state import SurfaceState

logger = logging.getLogger(__name__)

# J₀ below this is treated as already isothermal
NEGLIGIBLE_DEFECT = 1e-24


@dataclass(frozen=True)
class IsothermalizationReport:
    """等溫化結果報告"""

    state: SurfaceState
    j_initial: float
    j_final: float
    iterations: int
    step: float

    @property
    def reduction(self):
        if self.j_final == 0.0:
            return np.inf
        return self.j_initial / self.j_final


class Isothermalizer:
    """等溫化疊代器"""

    def __init__(self, tol=1e-2, max_iter=200, step=0.5, log_every=20):
        if tol <= 0 or max_iter < 0 or step <= 0:
            raise ValueError('tol and step must be positive and max_iter non-negative')
        self.tol = tol
        self.max_iter = max_iter
        self.step = step
        self.log_every = log_every

    def reparameterized(self, state, psi):
        grid = state.grid
        a1, a2 = grid.mesh
        moved = fourier_interpolate(state.U, grid, a1 + psi[0], a2 + psi[1])
        moved[0] += psi[0]
        moved[1] += psi[1]
        return state.replace(U=moved)

    def defect(self, state):
        f, g = isothermal_residual(state)
        return state.grid.integrate(f * f + g * g)

    def descent_direction(self, state):
        grid = state.grid
        Y1, Y2 = tangents(state)
        f, g = isothermal_residual(state)
        flux1 = f * Y1 + g * Y2
        flux2 = g * Y1 - f * Y2
        Gv = -2.0 * (spectral_derivative(flux1, 1, grid) + spectral_derivative(flux2, 2, grid))
        grad = np.stack([dot(Gv, Y1), dot(Gv, Y2)])
        ops = operators_for(grid)
        return -ops.apply(grad, ops.inv_lap_multiplier)

    @staticmethod
    def compose(psi, eta, grid):
        """ψ ← ψ∘(id + η) + η to first order: ψ + η + (∇ψ)η."""
        d1 = spectral_derivative(psi, 1, grid)
        d2 = spectral_derivative(psi, 2, grid)
        return psi + eta + d1 * eta[0] + d2 * eta[1]

    @staticmethod
    def min_jacobian(psi, grid):
        d1 = spectral_derivative(psi, 1, grid)
        d2 = spectral_derivative(psi, 2, grid)
        return float(np.min((1.0 + d1[0]) * (1.0 + d2[1]) - d2[0] * d1[1]))

    def run(self, state):
        grid = state.grid
        j_initial = self.defect(state)
        if j_initial <= NEGLIGIBLE_DEFECT:
            return IsothermalizationReport(state, j_initial, j_initial, 0, self.step)

        target = self.tol * j_initial
        tau = self.step
        psi = np.zeros((2, *grid.shape))
        best_psi, best_state, best_j = psi, state, j_initial
        current_state, current_j = state, j_initial
        increases = 0
        iterations = 0

        while iterations < self.max_iter and best_j > target:
            iterations += 1
            eta = tau * self.descent_direction(current_state)
            trial = self.compose(psi, eta, grid)
            jacobian = self.min_jacobian(trial, grid)
            if jacobian <= 0.0:
                raise IsothermalizationError(
                    f'reparameterization lost injectivity at iteration {iterations} '
                    f'(min Jacobian {jacobian:.3e})'
                )
            psi = trial
            current_state = self.reparameterized(state, psi)
            current_j = self.defect(current_state)

            if current_j < best_j:
                best_psi, best_state, best_j = psi, current_state, current_j
                increases = 0
            else:
                increases += 1
                if increases >= 2:
                    tau *= 0.5
                    psi, current_state, current_j = best_psi, best_state, best_j
                    increases = 0
                    logger.debug('isothermalize: J increased twice, step halved to %.3g', tau)

            if self.log_every and iterations % self.log_every == 0:
                logger.info(
                    'isothermalize: iteration %d, J = %.3e (J0 = %.3e)', iterations, best_j, j_initial,
                )

        logger.info(
            'isothermalize: J reduced from %.3e to %.3e in %d iterations', j_initial, best_j, iterations,
        )
        return IsothermalizationReport(best_state, j_initial, best_j, iterations, tau)


def isothermalize(state, tol=1e-2, max_iter=200):
    return Isothermalizer(tol=tol, max_iter=max_iter).run(state).state
