"""Fifth-order finite-difference WENO reconstruction on periodic grids.

Classic smoothness indicators and linear weights (1/10, 6/10, 3/10) with
epsilon = 1e-6. `nonlinear=False` freezes the linear weights, which makes the
operator exactly linear (and degree-4 exact) - used by linearity tests and
available for diagnostics.
"""

from __future__ import annotations

import numpy as np

WENO_EPS = 1e-6
LINEAR_WEIGHTS = (0.1, 0.6, 0.3)


def _weighted_flux(q0, q1, q2, b0, b1, b2, nonlinear):
    d0, d1, d2 = LINEAR_WEIGHTS
    if not nonlinear:
        return d0 * q0 + d1 * q1 + d2 * q2
    a0 = d0 / (WENO_EPS + b0) ** 2
    a1 = d1 / (WENO_EPS + b1) ** 2
    a2 = d2 / (WENO_EPS + b2) ** 2
    s = a0 + a1 + a2
    return (a0 * q0 + a1 * q1 + a2 * q2) / s


def weno5_interface_flux(g: np.ndarray, wind: int, nonlinear: bool = True) -> np.ndarray:
    """Numerical flux at interfaces j+1/2 from point values g_j (axis 0, periodic).

    wind=+1 biases the stencil left (information moving right), wind=-1 right.
    """
    gm2 = np.roll(g, 2, axis=0)
    gm1 = np.roll(g, 1, axis=0)
    gp1 = np.roll(g, -1, axis=0)
    gp2 = np.roll(g, -2, axis=0)
    if wind > 0:
        q0 = (2 * gm2 - 7 * gm1 + 11 * g) / 6
        q1 = (-gm1 + 5 * g + 2 * gp1) / 6
        q2 = (2 * g + 5 * gp1 - gp2) / 6
        b0 = 13 / 12 * (gm2 - 2 * gm1 + g) ** 2 + 0.25 * (gm2 - 4 * gm1 + 3 * g) ** 2
        b1 = 13 / 12 * (gm1 - 2 * g + gp1) ** 2 + 0.25 * (gm1 - gp1) ** 2
        b2 = 13 / 12 * (g - 2 * gp1 + gp2) ** 2 + 0.25 * (3 * g - 4 * gp1 + gp2) ** 2
    else:
        gp3 = np.roll(g, -3, axis=0)
        q0 = (2 * gp3 - 7 * gp2 + 11 * gp1) / 6
        q1 = (-gp2 + 5 * gp1 + 2 * g) / 6
        q2 = (2 * gp1 + 5 * g - gm1) / 6
        b0 = 13 / 12 * (gp3 - 2 * gp2 + gp1) ** 2 + 0.25 * (gp3 - 4 * gp2 + 3 * gp1) ** 2
        b1 = 13 / 12 * (gp2 - 2 * gp1 + g) ** 2 + 0.25 * (gp2 - g) ** 2
        b2 = 13 / 12 * (gp1 - 2 * g + gm1) ** 2 + 0.25 * (3 * gp1 - 4 * g + gm1) ** 2
    return _weighted_flux(q0, q1, q2, b0, b1, b2, nonlinear)


def weno5_derivative(
    values: np.ndarray, dx: float, wind: int, nonlinear: bool = True
) -> np.ndarray:
    """Upwind-biased d/dx of a flux sampled at grid points (axis 0, periodic)."""
    v = np.asarray(values, dtype=float)
    if v.shape[0] < 7:
        raise ValueError(f"WENO5 needs at least 7 points, got {v.shape[0]}")
    flux = weno5_interface_flux(v, wind, nonlinear)
    return (flux - np.roll(flux, 1, axis=0)) / dx


def weno5_central_derivative(values: np.ndarray, dx: float, nonlinear: bool = True) -> np.ndarray:
    """Average of the two one-sided WENO derivatives (for nonconservative products)."""
    return 0.5 * (
        weno5_derivative(values, dx, +1, nonlinear)
        + weno5_derivative(values, dx, -1, nonlinear)
    )
