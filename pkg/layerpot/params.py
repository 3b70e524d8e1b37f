"""
Fluid parameters.
層勢模組 - 流體參數
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FluidParams:
    """流體參數（黏度與密度，κ = g = 1）"""

    mu1: float = 1.0
    mu2: float = 1.0
    rho1: float = 0.0
    rho2: float = 1.0

    def __post_init__(self):
        for name in ('mu1', 'mu2', 'rho1', 'rho2'):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f'fluid.{name} must be finite')
        if self.mu1 <= 0 or self.mu2 <= 0:
            raise ValueError(f'viscosities must be positive, got mu1={self.mu1}, mu2={self.mu2}')

    @property
    def a_mu(self):
        """A_μ = (μ² − μ¹)/(μ² + μ¹); |A_μ| < 1."""
        return (self.mu2 - self.mu1) / (self.mu2 + self.mu1)

    @property
    def a_rho(self):
        """A_ρ = (ρ² − ρ¹)/(μ² + μ¹); positive is the stable orientation."""
        return (self.rho2 - self.rho1) / (self.mu2 + self.mu1)

    @property
    def density_jump(self):
        return self.rho2 - self.rho1

    @property
    def viscosity_jump(self):
        return self.mu2 - self.mu1
