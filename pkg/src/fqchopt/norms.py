"""Discrete space-time norms on the solver grid.

Time integrals use the trapezoid rule on the uniform time grid; spatial
integrals use the midpoint rule of the basis grid (so they coincide with
coefficient sums).  Arrays of trajectories have shape ``(times, grid)``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "trapezoid_weights",
    "l2_space",
    "h1_space_sq",
    "c0_l2",
    "l2_h1",
    "c0l2_cap_l2h1",
    "l2_q",
    "l2_q_inner",
    "h1_time_l2",
    "linf_vb_sigma",
    "h1_time_va_neg",
    "antiderivative_gap",
]


def trapezoid_weights(num_times: int) -> np.ndarray:
    w = np.ones(num_times)
    w[0] = w[-1] = 0.5
    return w


def l2_space(e: np.ndarray, cell: float) -> np.ndarray:
    """``||e(t)||_{L^2}`` per time slice."""
    e = np.atleast_2d(e)
    return np.sqrt(cell * np.sum(e * e, axis=-1))


def h1_space_sq(e: np.ndarray, h1_basis) -> np.ndarray:
    """``||e||^2 + ||grad e||^2`` per time slice, via Neumann-Laplacian coefficients."""
    c = h1_basis.to_spectral(np.atleast_2d(e))
    return np.sum((1.0 + h1_basis.eigenvalues) * c * c, axis=-1)


def c0_l2(e: np.ndarray, cell: float) -> float:
    return float(np.max(l2_space(e, cell)))


def l2_h1(e: np.ndarray, h1_basis, dt: float) -> float:
    vals = h1_space_sq(e, h1_basis)
    return float(np.sqrt(dt * np.sum(trapezoid_weights(len(vals)) * vals)))


def c0l2_cap_l2h1(e: np.ndarray, h1_basis, dt: float) -> float:
    """Norm of ``C^0([0,T];L^2) cap L^2(0,T;H^1)`` taken as the sum of both parts."""
    return c0_l2(e, h1_basis.cell_volume) + l2_h1(e, h1_basis, dt)


def l2_q_inner(a: np.ndarray, b: np.ndarray, cell: float, dt: float) -> float:
    """Trapezoid-in-time, midpoint-in-space inner product on ``Q``."""
    w = trapezoid_weights(a.shape[0])
    return float(dt * cell * np.sum(w[:, None] * a * b))


def l2_q(a: np.ndarray, cell: float, dt: float) -> float:
    return float(np.sqrt(max(l2_q_inner(a, a, cell, dt), 0.0)))


def h1_time_l2(a: np.ndarray, cell: float, dt: float) -> float:
    """``H^1(0,T;L^2)`` norm: ``L^2(Q)`` part plus difference quotients in time."""
    d = np.diff(a, axis=0) / dt
    return float(np.sqrt(l2_q(a, cell, dt) ** 2 + dt * cell * np.sum(d * d)))


def linf_vb_sigma(e: np.ndarray, basis_b, sigma: float) -> float:
    """``L^inf(0,T;V_B^sigma)`` with the graph norm of ``V_B^sigma``."""
    c = basis_b.to_spectral(np.atleast_2d(e))
    d = 1.0 + basis_b.powers(sigma) ** 2
    return float(np.sqrt(np.max(np.sum(d * c * c, axis=-1))))


def h1_time_va_neg(e: np.ndarray, basis_a, r: float, dt: float) -> float:
    """``H^1(0,T;V_A^{-r})`` norm, using the dual of the Hilbert norm of ``V_A^r``."""
    c = basis_a.to_spectral(np.atleast_2d(e))
    d = basis_a.powers(r) ** 2
    if basis_a.first_eigenvalue_zero:
        d = d.copy()
        d[0] = 1.0
    dual = 1.0 / d
    vals = np.sum(dual * c * c, axis=-1)
    dc = np.diff(c, axis=0) / dt
    dvals = np.sum(dual * dc * dc, axis=-1)
    return float(np.sqrt(dt * np.sum(trapezoid_weights(len(vals)) * vals) + dt * np.sum(dvals)))


def antiderivative_gap(dmu: np.ndarray, basis_a, r: float, dt: float) -> float:
    """``max_t ||int_0^t A^r dmu||`` for ``dmu`` given at ``t_1..t_M`` (right-point rule)."""
    c = basis_a.to_spectral(np.atleast_2d(dmu))
    acc = dt * np.cumsum(c, axis=0) * basis_a.powers(r)
    return float(np.sqrt(np.max(np.sum(acc * acc, axis=-1), initial=0.0)))
