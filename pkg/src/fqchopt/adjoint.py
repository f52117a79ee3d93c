"""Adjoint states and reduced-cost gradients.

Two routes are provided:

* :func:`solve_adjoint` discretizes the continuous adjoint system directly:
  backward implicit Euler for ``q`` in

      -d/dt((G + tau) q) + B^{2 sigma} q + (psi1 + psi2) q = g2,
      (G + tau) q(T) = g1   (zero-mean part when lambda_1(A) = 0),

  with ``G = A_0^{-2r}`` and ``p = G q`` (+ its mean, recovered from the
  mean-value representation formula when lambda_1(A) = 0).
* :func:`discrete_adjoint` is the exact transpose of the state scheme in
  :mod:`fqchopt.state`, which gives the gradient of the discrete reduced cost
  to round-off.

Both return an :class:`AdjointState` whose nodal field ``q`` makes the
``L^2(Q)`` gradient equal to ``q + beta3 u``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .potentials import safe_h_second
from .spectral import ConfigurationError
from .state import ModelConfig, StateTrajectory

__all__ = [
    "AdjointData",
    "AdjointState",
    "assemble_adjoint_data",
    "solve_adjoint",
    "discrete_adjoint",
    "discrete_gradient",
    "lambda_dual_norm",
    "integration_by_parts_residual",
]

# psi2 is capped where |y| reaches this value
PSI_CAP_LEVEL = 1.0 - 1e-10


@dataclass
class AdjointData:
    g1: np.ndarray  # beta1 (y(T) - y_Omega)
    g2: np.ndarray  # beta2 (y - y_Q), per time
    psi1: np.ndarray  # f2''(y)
    psi2: np.ndarray  # phi(alpha) h''(y)
    capped: int = 0


@dataclass
class AdjointState:
    q: np.ndarray
    p: np.ndarray
    lambda_mult: np.ndarray
    p_plus_tau_q: np.ndarray
    mean_p: np.ndarray | None
    kind: str
    q_steps: np.ndarray | None = None


def _targets(cost, cfg: ModelConfig):
    shape = (cfg.num_steps + 1, cfg.n)
    y_omega = np.broadcast_to(np.asarray(cost.y_Omega, dtype=float), (cfg.n,))
    y_q = np.broadcast_to(np.asarray(cost.y_Q, dtype=float), shape)
    return y_omega, y_q


def assemble_adjoint_data(state: StateTrajectory, cost, cfg: ModelConfig | None = None) -> AdjointData:
    """Source terms and coefficients of the adjoint system along ``state``."""
    cfg = cfg or state.cfg
    if state.y.shape != (cfg.num_steps + 1, cfg.n):
        raise ConfigurationError("state does not match the configuration grid")
    y_omega, y_q = _targets(cost, cfg)
    y = state.y
    g1 = cost.beta1 * (y[-1] - y_omega)
    g2 = cost.beta2 * (y - y_q)
    psi1 = cfg.smooth.second(y)
    capped = 0
    if cfg.obstacle:
        psi2 = cfg.convex_second(y)
    else:
        capped = int(np.count_nonzero(np.abs(y) >= PSI_CAP_LEVEL))
        psi2 = cfg.quench_scale * safe_h_second(y, margin=1.0 - PSI_CAP_LEVEL)
    return AdjointData(g1, g2, psi1, psi2, capped)


def _bordered_solve(mat: np.ndarray, rhs: np.ndarray, zero_mean: bool) -> np.ndarray:
    """Solve ``mat x + c 1 = rhs`` with ``mean(x) = 0`` (or plain ``mat x = rhs``)."""
    if not zero_mean:
        return np.linalg.solve(mat, rhs)
    n = mat.shape[0]
    big = np.zeros((n + 1, n + 1))
    big[:n, :n] = mat
    big[:n, n] = 1.0
    big[n, :n] = 1.0
    x = np.linalg.solve(big, np.concatenate([rhs, [0.0]]))[:n]
    return x - x.mean()


def _finish(q: np.ndarray, data: AdjointData, cfg: ModelConfig, kind: str, q_steps=None) -> AdjointState:
    ops = cfg.operators
    p = q @ ops.G.T
    mean_p = None
    if ops.zero_mean:
        # mean(p + tau q)(t) = mean(g1) + |Omega|^{-1} int_t^T int_Omega (g2 - (psi1 + psi2) q)
        vol = cfg.domain.volume
        integrand = cfg.cell * np.sum(data.g2 - (data.psi1 + data.psi2) * q, axis=1)
        tail = 0.5 * cfg.dt * (integrand[1:] + integrand[:-1])
        acc = np.concatenate([np.cumsum(tail[::-1])[::-1], [0.0]])
        mean_p = cfg.cell * data.g1.sum() / vol + acc / vol
        p = p + mean_p[:, None]
    return AdjointState(
        q=q,
        p=p,
        lambda_mult=data.psi2 * q,
        p_plus_tau_q=p + cfg.tau * q,
        mean_p=mean_p,
        kind=kind,
        q_steps=q_steps,
    )


def terminal_q(g1: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """``(A_0^{-2r} + tau I)^{-1}`` applied to the admissible part of ``g1``."""
    A = cfg.basis_A
    c = A.to_spectral(g1)
    pos = A.eigenvalues > 0
    out = np.zeros_like(c)
    out[pos] = c[pos] / (A.eigenvalues[pos] ** (-2 * cfg.r) + cfg.tau)
    return A.to_grid(out)


def solve_adjoint(data: AdjointData, cfg: ModelConfig) -> AdjointState:
    """Backward implicit Euler for the continuous adjoint system."""
    if not cfg.tau > 0:
        raise ConfigurationError("the adjoint solver needs tau > 0")
    ops = cfg.operators
    M, dt = cfg.num_steps, cfg.dt
    q = np.empty((M + 1, cfg.n))
    q[-1] = terminal_q(data.g1, cfg)
    base = ops.resolvent / dt + ops.L
    for m in range(M - 1, -1, -1):
        mat = base + np.diag(data.psi1[m] + data.psi2[m])
        rhs = ops.resolvent @ q[m + 1] / dt + data.g2[m]
        q[m] = _bordered_solve(mat, rhs, ops.zero_mean)
    return _finish(q, data, cfg, "continuous")


def discrete_adjoint(state: StateTrajectory, data: AdjointData, cfg: ModelConfig | None = None) -> AdjointState:
    """Transpose of the linearized state scheme at the converged Newton iterates."""
    cfg = cfg or state.cfg
    ops = cfg.operators
    M, dt = cfg.num_steps, cfg.dt
    w = cfg.time_weights
    y = state.y
    z = np.zeros((M + 2, cfg.n))
    base = ops.resolvent / dt + ops.L
    for k in range(M, 0, -1):
        mat = base + np.diag(cfg.convex_second(y[k]))
        rhs = w[k] * data.g2[k] + ops.resolvent @ z[k + 1] / dt - data.psi1[k] * z[k + 1]
        if k == M:
            rhs = rhs + data.g1 / dt
        z[k] = _bordered_solve(mat, rhs, ops.zero_mean)
    steps = z[1 : M + 1]
    # control enters step k -> k+1 through (u_k + u_{k+1})/2
    q = np.empty((M + 1, cfg.n))
    q[0] = steps[0]
    q[M] = steps[M - 1]
    if M > 1:
        q[1:M] = 0.5 * (steps[:-1] + steps[1:])
    return _finish(q, data, cfg, "discrete", q_steps=steps)


def discrete_gradient(state: StateTrajectory, adjoint: AdjointState, u, cost, u_ref=None) -> np.ndarray:
    """``L^2(Q)`` gradient ``q + beta3 u`` (plus ``u - u_ref`` for the adapted cost)."""
    u = np.asarray(getattr(u, "values", u), dtype=float)
    g = adjoint.q + cost.beta3 * u
    if u_ref is not None:
        g = g + (u - np.asarray(getattr(u_ref, "values", u_ref), dtype=float))
    return g


def lambda_dual_norm(lam: np.ndarray, cfg: ModelConfig) -> float:
    """Discrete dual norm of ``lam`` over ``Z = {v in H^1(0,T;G) cap L^2(0,T;H^1), v(0) = 0}``.

    The pairing is the ``L^2(Q)`` trapezoid pairing and the norm of ``Z`` is
    ``int ||v||^2 + ||dv/dt||^2 + ||grad v||^2``; the computation decouples
    into one tridiagonal system per Neumann-Laplacian mode.
    """
    h1 = cfg.operators.h1_basis
    M, dt = cfg.num_steps, cfg.dt
    w = cfg.time_weights[1:]
    coeff = h1.to_spectral(lam)[1:]  # v(0) = 0 removes the first node
    modes = range(1, h1.size) if cfg.operators.zero_mean else range(h1.size)
    # Gram of the difference quotient part (v_0 = 0)
    D = np.zeros((M, M))
    idx = np.arange(M)
    D[idx, idx] = 2.0 / dt
    D[-1, -1] = 1.0 / dt
    D[idx[1:], idx[:-1]] = D[idx[:-1], idx[1:]] = -1.0 / dt
    total = 0.0
    for j in modes:
        gram = D + np.diag(dt * w * (2.0 + h1.eigenvalues[j]))
        ell = dt * w * coeff[:, j]
        total += float(ell @ np.linalg.solve(gram, ell))
    return float(np.sqrt(total))


def integration_by_parts_residual(w_traj: np.ndarray, z_traj: np.ndarray, cell: float, dt: float) -> float:
    """Residual of the discrete product rule with both difference quotients paired at ``t_{m+1}``.

    ``sum_m [(dw_m, z_{m+1}) + (dz_m, w_{m+1})] - [(w, z)]_0^T`` equals
    ``sum_m (dw_m, dz_m)`` and is therefore ``O(dt)`` for time-Lipschitz pairs.
    """
    dw = np.diff(w_traj, axis=0)
    dz = np.diff(z_traj, axis=0)
    lhs = cell * (np.sum(dw * z_traj[1:]) + np.sum(dz * w_traj[1:]))
    rhs = cell * (np.sum(w_traj[-1] * z_traj[-1]) - np.sum(w_traj[0] * z_traj[0]))
    return float(lhs - rhs)
