"""
Synthetic fields shared by the test suites and the validation command.
頻譜模組 - 測試用合成欄位
"""

import numpy as np


def band_limited_field(grid, rng, modes=4, amplitude=1.0, mean_zero=True):
    """Random real trigonometric polynomial with |m_j| ≤ modes on each axis."""
    a1, a2 = grid.mesh
    base = np.pi / grid.L
    F = np.zeros(grid.shape)
    for m1 in range(0, modes + 1):
        for m2 in range(-modes, modes + 1):
            if m1 == 0 and m2 <= 0:
                continue
            phase = base * (m1 * a1 + m2 * a2)
            c, s = rng.standard_normal(2)
            F += c * np.cos(phase) + s * np.sin(phase)
    if not mean_zero:
        F += rng.standard_normal()
    return amplitude * F / max(np.max(np.abs(F)), 1e-300)


def gaussian_bump(grid, amplitude=0.1, width=0.5, center=(0.0, 0.0)):
    a1, a2 = grid.mesh
    r2 = (a1 - center[0]) ** 2 + (a2 - center[1]) ** 2
    return amplitude * np.exp(-r2 / width ** 2)
