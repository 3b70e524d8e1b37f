"""
Fredholm solve for the potential jump
層勢模組 - Ω 方程求解

  Ω − A_μ𝒟(Ω) = −2A_ρX₃
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import gmres

from core.exceptions import SolverDivergenceError
from .operators import DoubleLayerOperator

logger = logging.getLogger(__name__)

METHODS = ('gmres', 'picard')
# extra GMRES passes with a tightened tolerance when the max-norm check fails
REFINEMENTS = 3


@dataclass(frozen=True)
class OmegaSolveReport:
    """Ω 求解報告"""

    omega: np.ndarray
    iterations: int
    residual: float
    method: str


def omega_rhs(state, params):
    return -2.0 * params.a_rho * state.U[2]


def omega_residual(operator, params, omega, rhs):
    """‖Ω − A_μ𝒟Ω − rhs‖∞ / ‖rhs‖∞ (absolute when rhs = 0)."""
    omega = np.asarray(omega, dtype=np.float64).ravel()
    rhs = np.asarray(rhs, dtype=np.float64).ravel()
    applied = operator.matvec(omega) if params.a_mu else 0.0
    defect = omega - params.a_mu * applied - rhs
    scale = float(np.max(np.abs(rhs)))
    value = float(np.max(np.abs(defect)))
    return value / scale if scale > 0.0 else value


class OmegaSolver:
    """Ω 求解器"""

    def __init__(self, operator, params, tol=1e-10, max_iter=200, method='gmres', restart=30):
        if method not in METHODS:
            raise ValueError(f'unknown solver.method {method!r}; expected one of {METHODS}')
        self.operator = operator
        self.params = params
        self.tol = tol
        self.max_iter = max_iter
        self.method = method
        self.restart = restart

    def residual(self, omega, rhs):
        return omega_residual(self.operator, self.params, omega, rhs)

    def gmres(self, rhs, x0):
        a_mu = self.params.a_mu
        system = self.operator.as_linear_operator(shift=1.0, scale=-a_mu)
        counter = {'inner': 0}

        def count(_):
            counter['inner'] += 1

        cycles = max(1, math.ceil(self.max_iter / self.restart))
        rtol = self.tol
        x = x0
        best = (np.inf, None)
        for _ in range(REFINEMENTS + 1):
            x, info = gmres(
                system, rhs, x0=x, rtol=rtol, atol=0.0, restart=self.restart,
                maxiter=cycles, callback=count, callback_type='pr_norm',
            )
            residual = self.residual(x, rhs)
            if residual < best[0]:
                best = (residual, x)
            if residual <= self.tol or counter['inner'] >= self.max_iter:
                break
            rtol *= 0.1
            logger.debug('gmres: max-norm residual %.3e above tol, tightening rtol to %.1e', residual, rtol)
        return best[1], counter['inner'], best[0]

    def picard(self, rhs, x0):
        a_mu = self.params.a_mu
        omega = rhs.copy() if x0 is None else np.array(x0, dtype=np.float64)
        best = (np.inf, omega)
        for iteration in range(1, self.max_iter + 1):
            residual = self.residual(omega, rhs)
            if residual < best[0]:
                best = (residual, omega)
            if residual <= self.tol:
                return omega, iteration, residual
            omega = a_mu * self.operator.matvec(omega) + rhs
        return best[1], self.max_iter, best[0]

    def solve(self, rhs, x0=None):
        shape = rhs.shape
        rhs = rhs.ravel()
        if x0 is not None:
            x0 = np.asarray(x0, dtype=np.float64).ravel()

        if not rhs.any():
            return OmegaSolveReport(np.zeros(shape), 0, 0.0, 'trivial')
        if self.params.a_mu == 0.0 or self.operator.is_null:
            omega = rhs.copy()
            return OmegaSolveReport(omega.reshape(shape), 1, self.residual(omega, rhs), 'direct')

        attempts = [self.method] + [m for m in METHODS if m != self.method]
        best = (np.inf, 0)
        for method in attempts:
            omega, iterations, residual = getattr(self, method)(rhs, x0)
            logger.debug(
                'omega solve: method=%s iterations=%d residual=%.3e', method, iterations, residual,
            )
            if residual <= self.tol:
                return OmegaSolveReport(omega.reshape(shape), iterations, residual, method)
            best = min(best, (residual, iterations))
            logger.warning('omega solve: %s stalled at residual %.3e, trying fallback', method, residual)
        raise SolverDivergenceError(
            f'omega solve did not reach tol={self.tol:.1e} in {self.max_iter} iterations '
            f'(best residual {best[0]:.3e})',
            best_residual=best[0],
            iterations=best[1],
        )


def solve_omega(state, cache, params, tol=1e-10, max_iter=200, method='gmres', restart=30,
                cfg=None, x0=None, operator=None):
    if operator is None and params.a_mu != 0.0:
        operator = DoubleLayerOperator(state, cache, cfg)
    solver = OmegaSolver(operator, params, tol=tol, max_iter=max_iter, method=method, restart=restart)
    return solver.solve(omega_rhs(state, params), x0=x0)
