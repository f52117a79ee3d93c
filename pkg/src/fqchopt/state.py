"""Implicit-Euler spectral-Galerkin solver for the fractional Cahn-Hilliard state.

One step solves, for ``y+`` and ``mu+``::

    (y+ - y)/dt + A^{2r} mu+ = 0
    tau (y+ - y)/dt + B^{2 sigma} y+ + N(y+) + f2'(y) = mu+ + u

with the convex part ``N`` implicit (deep-quench ``phi(alpha) h'`` or the
Yosida ramp of the obstacle) and the concave ``f2'`` explicit.  The first
equation is used to eliminate ``mu+``: with ``w = y+ - y`` and ``G = A_0^{-2r}``,
``mu+ = m - G w / dt`` where the scalar ``m`` (the mean of ``mu+``) is only
present when ``lambda_1(A) = 0``; in that case ``mean(w) = 0`` is imposed as
a constraint, so mass is conserved exactly.  The unknowns ``(w, m)`` are found
by a damped Newton iteration.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import norms
from .potentials import (
    QuenchSchedule,
    Safeguard,
    SmoothPart,
    h,
    safe_h_prime,
    safe_h_second,
    yosida_envelope,
    yosida_indicator,
    yosida_indicator_slope,
)
from .spectral import ConfigurationError, EigenBasis, SpectralField, build_basis

__all__ = [
    "StepFailure",
    "ModelConfig",
    "InitialState",
    "StateTrajectory",
    "EnergyReport",
    "PerturbationReport",
    "step",
    "solve",
    "energy_report",
    "compare_two_runs",
]

# iterates of the quench solver are kept inside |y| <= 1 - BARRIER_GAP
BARRIER_GAP = 1e-10


class StepFailure(RuntimeError):
    """Newton did not converge within one time step."""

    def __init__(self, message: str, residual: float, time_index: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.time_index = time_index


@dataclass(frozen=True)
class _Operators:
    zero_mean: bool
    G: np.ndarray  # A_0^{-2r}
    K: np.ndarray  # A^{2r}
    L: np.ndarray  # B^{2 sigma}
    linear: np.ndarray  # (tau I + G)/dt + L
    resolvent: np.ndarray  # tau I + G
    h1_basis: EigenBasis


@dataclass(frozen=True, eq=False)
class ModelConfig:
    """All parameters of the state system; ``alpha=None`` selects obstacle mode."""

    basis_A: EigenBasis
    basis_B: EigenBasis
    r: float = 0.5
    sigma: float = 0.5
    tau: float = 0.1
    alpha: float | None = 0.1
    dt: float = 1e-3
    T: float = 0.25
    schedule: QuenchSchedule = field(default_factory=QuenchSchedule)
    smooth: SmoothPart = field(default_factory=SmoothPart)
    yosida_lambda: float = 1e-6
    tol_newton: float = 1e-10
    max_newton: int = 50

    def __post_init__(self):
        if not (self.r > 0 and self.sigma > 0 and self.tau >= 0):
            raise ConfigurationError("need r > 0, sigma > 0, tau >= 0")
        if self.basis_A.domain != self.basis_B.domain:
            raise ConfigurationError("A and B must live on the same domain")
        if not (self.dt > 0 and self.T > 0):
            raise ConfigurationError("dt and T must be positive")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-12 * max(1.0, steps) or round(steps) < 1:
            raise ConfigurationError(f"dt={self.dt} does not divide T={self.T}")
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigurationError("alpha must be positive (or None for obstacle mode)")
        if not self.yosida_lambda > 0:
            raise ConfigurationError("yosida_lambda must be positive")

    @property
    def obstacle(self) -> bool:
        return self.alpha is None

    @property
    def domain(self):
        return self.basis_A.domain

    @property
    def n(self) -> int:
        return self.basis_A.size

    @property
    def cell(self) -> float:
        return self.basis_A.cell_volume

    @property
    def num_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.num_steps + 1)

    @property
    def time_weights(self) -> np.ndarray:
        return norms.trapezoid_weights(self.num_steps + 1)

    @property
    def quench_scale(self) -> float:
        return 0.0 if self.obstacle else float(self.schedule.phi(self.alpha))

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def with_alpha(self, alpha: float) -> "ModelConfig":
        return self.replace(alpha=float(alpha))

    def as_obstacle(self, lam: float | None = None) -> "ModelConfig":
        return self.replace(alpha=None, yosida_lambda=lam or self.yosida_lambda)

    @cached_property
    def operators(self) -> _Operators:
        A, B = self.basis_A, self.basis_B
        G = A.inverse_power_matrix(2 * self.r)
        K = A.power_matrix(2 * self.r)
        L = B.power_matrix(2 * self.sigma)
        res = G + self.tau * np.eye(self.n)
        h1 = B if B.operator_kind == "laplacian_neumann" else build_basis(A.domain, "laplacian_neumann")
        return _Operators(A.first_eigenvalue_zero, G, K, L, res / self.dt + L, res, h1)

    # nonlinearity on grid values -------------------------------------------------
    def convex_prime(self, v: np.ndarray, guard: Safeguard | None = None) -> np.ndarray:
        if self.obstacle:
            return yosida_indicator(v, self.yosida_lambda)
        return self.quench_scale * safe_h_prime(v, guard)

    def convex_second(self, v: np.ndarray, guard: Safeguard | None = None) -> np.ndarray:
        if self.obstacle:
            return yosida_indicator_slope(v, self.yosida_lambda)
        return self.quench_scale * safe_h_second(v, guard)

    def convex_value(self, v: np.ndarray) -> np.ndarray:
        if self.obstacle:
            return yosida_envelope(v, self.yosida_lambda)
        return self.quench_scale * h(np.clip(v, -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class InitialState:
    """Initial order parameter with its essential bounds ``m_minus <= y0 <= m_plus``."""

    y0: np.ndarray
    m_minus: float
    m_plus: float

    @classmethod
    def from_grid(cls, values) -> "InitialState":
        y0 = np.array(values, dtype=float).reshape(-1)
        lo, hi = float(y0.min()), float(y0.max())
        if not (-1 < lo and hi < 1):
            raise ConfigurationError(f"initial state must lie in (-1, 1), got [{lo}, {hi}]")
        y0.setflags(write=False)
        return cls(y0, lo, hi)

    @classmethod
    def from_field(cls, f: SpectralField) -> "InitialState":
        return cls.from_grid(f.grid())

    def field(self, basis: EigenBasis) -> SpectralField:
        return SpectralField.from_grid(basis, self.y0)


@dataclass(eq=False)
class StateTrajectory:
    """Grid values of ``y`` at ``t_0..t_M`` and ``mu`` at ``t_1..t_M``."""

    cfg: ModelConfig
    y: np.ndarray
    mu: np.ndarray
    u: np.ndarray
    newton_iterations: np.ndarray
    newton_residuals: np.ndarray
    safeguard: Safeguard

    @property
    def times(self) -> np.ndarray:
        return self.cfg.times

    @property
    def alpha(self) -> float | None:
        return self.cfg.alpha

    @property
    def separation(self) -> tuple[float, float]:
        return float(self.y.min()), float(self.y.max())

    def means(self) -> np.ndarray:
        return self.y.sum(axis=1) * self.cfg.cell / self.cfg.domain.volume

    def y_field(self, m: int, basis: EigenBasis | None = None) -> SpectralField:
        return SpectralField.from_grid(basis or self.cfg.basis_B, self.y[m])

    def mu_field(self, m: int, basis: EigenBasis | None = None) -> SpectralField:
        """Chemical potential at ``t_m`` (``m >= 1``)."""
        if m < 1:
            raise IndexError("mu is defined from the first step on")
        return SpectralField.from_grid(basis or self.cfg.basis_A, self.mu[m - 1])


@dataclass
class EnergyReport:
    times: np.ndarray
    energy: np.ndarray
    diss_A: np.ndarray  # int_0^t ||A^r mu||^2
    diss_tau: np.ndarray  # tau int_0^t ||dy/dt||^2
    work: np.ndarray  # int_0^t (u, dy/dt)

    @property
    def identity_residual(self) -> float:
        """``E(T) - E(0) + dissipation - work``; nonpositive for this scheme."""
        return float(self.energy[-1] - self.energy[0] + self.diss_A[-1]
                     + self.diss_tau[-1] - self.work[-1])

    def max_increase(self) -> float:
        return float(np.max(np.diff(self.energy), initial=-np.inf))


def _solve_newton_system(J: np.ndarray, R: np.ndarray, zero_mean: bool, w_mean: float):
    n = J.shape[0]
    if not zero_mean:
        return np.linalg.solve(J, -R), 0.0
    big = np.empty((n + 1, n + 1))
    big[:n, :n] = J
    big[:n, n] = -1.0
    big[n, :n] = 1.0 / n
    big[n, n] = 0.0
    rhs = np.concatenate([-R, [-w_mean]])
    sol = np.linalg.solve(big, rhs)
    dw = sol[:n]
    return dw - dw.mean(), float(sol[n])


def _step_grid(y: np.ndarray, u_bar: np.ndarray, cfg: ModelConfig,
               guard: Safeguard | None = None, tol: float | None = None):
    """One implicit step on grid values. Returns ``(y+, mu+, iterations, residual)``."""
    ops = cfg.operators
    tol = cfg.tol_newton if tol is None else tol
    base = ops.L @ y + cfg.smooth.prime(y) - u_bar
    w = np.zeros_like(y)
    m = float(np.mean(base + cfg.convex_prime(y, guard))) if ops.zero_mean else 0.0

    def residual(w_, m_):
        return ops.linear @ w_ + base + cfg.convex_prime(y + w_, guard) - m_

    R = residual(w, m)
    res = float(np.max(np.abs(R)))
    limit = 1.0 - BARRIER_GAP
    it = 0
    while res > tol:
        if it >= cfg.max_newton:
            raise StepFailure(f"Newton did not converge in {it} iterations", res)
        J = ops.linear + np.diag(cfg.convex_second(y + w, guard))
        dw, dm = _solve_newton_system(J, R, ops.zero_mean, float(w.mean()))
        merit = float(R @ R)
        s = 1.0
        while True:
            w_t = w + s * dw
            if cfg.obstacle or np.max(np.abs(y + w_t)) <= limit:
                R_t = residual(w_t, m + s * dm)
                if float(R_t @ R_t) < (1.0 - 1e-4 * s) * merit:
                    break
            s *= 0.5
            if s < 1e-12:
                # a full Newton step can stall only at the round-off floor
                floor = 1e3 * np.finfo(float).eps * (
                    np.abs(ops.linear).sum(axis=1).max() * (1.0 + np.max(np.abs(w)))
                    + np.max(np.abs(base)) + abs(m))
                if res <= max(1e3 * tol, floor):
                    return y + w, m - ops.G @ w / cfg.dt, it, res
                raise StepFailure("line search failed", res)
        w, m, R = w_t, m + s * dm, R_t
        res = float(np.max(np.abs(R)))
        it += 1
    if ops.zero_mean:
        w = w - w.mean()
    return y + w, m - ops.G @ w / cfg.dt, it, res


def step(y_prev: SpectralField, u_now: SpectralField, cfg: ModelConfig):
    """Advance one time step; returns ``(y_next, mu_next)`` as fields in the bases of B and A."""
    y = y_prev.grid()
    if not cfg.obstacle and np.max(np.abs(y)) >= 1:
        raise ConfigurationError("quench mode needs |y_prev| < 1 on the grid")
    y1, mu1, _, _ = _step_grid(y, u_now.grid(), cfg)
    return SpectralField.from_grid(cfg.basis_B, y1), SpectralField.from_grid(cfg.basis_A, mu1)


def control_array(u, cfg: ModelConfig) -> np.ndarray:
    """Normalize a control (None, array, or object with ``values``) to shape ``(M+1, n)``."""
    shape = (cfg.num_steps + 1, cfg.n)
    if u is None:
        return np.zeros(shape)
    u = np.asarray(getattr(u, "values", u), dtype=float)
    if u.shape != shape:
        raise ConfigurationError(f"control has shape {u.shape}, expected {shape}")
    return u


def solve(cfg: ModelConfig, init: InitialState, u=None, *, tol: float | None = None,
          with_energy: bool = True):
    """March the scheme over ``[0, T]``.

    The control is sampled at the time nodes; step ``m -> m+1`` uses its
    average ``(u_m + u_{m+1})/2`` over the step.  Returns the trajectory and,
    if requested, its :class:`EnergyReport` (else ``None``).
    """
    u = control_array(u, cfg)
    if init.y0.shape != (cfg.n,):
        raise ConfigurationError("initial state does not match the grid")
    M = cfg.num_steps
    y = np.empty((M + 1, cfg.n))
    mu = np.empty((M, cfg.n))
    iters = np.zeros(M, dtype=int)
    resid = np.zeros(M)
    guard = Safeguard()
    y[0] = init.y0
    u_bar = 0.5 * (u[:-1] + u[1:])
    for k in range(M):
        try:
            y[k + 1], mu[k], iters[k], resid[k] = _step_grid(y[k], u_bar[k], cfg, guard, tol)
        except StepFailure as exc:
            exc.time_index = k + 1
            raise
    traj = StateTrajectory(cfg, y, mu, u, iters, resid, guard)
    return traj, (energy_report(traj) if with_energy else None)


def free_energy(y: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """``1/2 ||B^sigma y||^2 + int (h^alpha(y) + f2(y))`` per time slice."""
    y = np.atleast_2d(y)
    L = cfg.operators.L
    quad = 0.5 * cfg.cell * np.einsum("ti,ij,tj->t", y, L, y)
    pot = cfg.cell * np.sum(cfg.convex_value(y) + cfg.smooth.value(y), axis=1)
    return quad + pot


def energy_report(traj: StateTrajectory) -> EnergyReport:
    cfg = traj.cfg
    ops = cfg.operators
    dy = np.diff(traj.y, axis=0)
    u_bar = 0.5 * (traj.u[:-1] + traj.u[1:])
    dA = cfg.dt * cfg.cell * np.einsum("ti,ij,tj->t", traj.mu, ops.K, traj.mu)
    dtau = cfg.tau * cfg.cell * np.sum(dy * dy, axis=1) / cfg.dt
    work = cfg.cell * np.sum(u_bar * dy, axis=1)
    cum = lambda a: np.concatenate([[0.0], np.cumsum(a)])  # noqa: E731
    return EnergyReport(cfg.times, free_energy(traj.y, cfg), cum(dA), cum(dtau), cum(work))


@dataclass
class PerturbationReport:
    state_c0l2: float
    state_l2h1: float
    antiderivative: float
    alpha_term: float
    control_term: float

    @property
    def state_gap(self) -> float:
        return self.state_c0l2 + self.state_l2h1

    @property
    def left(self) -> float:
        return self.state_gap + self.antiderivative

    @property
    def right(self) -> float:
        return self.alpha_term + self.control_term

    @property
    def ratio(self) -> float:
        return self.left / self.right if self.right > 0 else (0.0 if self.left == 0 else np.inf)


def compare_two_runs(run1: StateTrajectory, run2: StateTrajectory) -> PerturbationReport:
    """Both sides of the two-parameter stability estimate for a pair of runs."""
    c1, c2 = run1.cfg, run2.cfg
    if run1.y.shape != run2.y.shape or c1.dt != c2.dt or c1.domain != c2.domain:
        raise ConfigurationError("runs are on different grids")
    h1 = c1.operators.h1_basis
    e = run1.y - run2.y
    a1 = 0.0 if run1.alpha is None else run1.alpha
    a2 = 0.0 if run2.alpha is None else run2.alpha
    return PerturbationReport(
        state_c0l2=norms.c0_l2(e, c1.cell),
        state_l2h1=norms.l2_h1(e, h1, c1.dt),
        antiderivative=norms.antiderivative_gap(run1.mu - run2.mu, c1.basis_A, c1.r, c1.dt),
        alpha_term=abs(a1 - a2) ** 0.5,
        control_term=norms.l2_q(run1.u - run2.u, c1.cell, c1.dt),
    )
