"""Reduced optimal control: cost, admissible set, projected gradient, continuation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import norms
from .adjoint import assemble_adjoint_data, discrete_adjoint, discrete_gradient, solve_adjoint
from .spectral import ConfigurationError
from .state import InitialState, ModelConfig, StateTrajectory, StepFailure, compare_two_runs, solve

__all__ = [
    "CostConfig",
    "ControlConstraints",
    "ControlTrajectory",
    "ReducedProblem",
    "OptimizationReport",
    "ContinuationReport",
    "LineSearchFailure",
    "evaluate_cost",
    "evaluate_adapted_cost",
    "project_admissible",
    "projected_gradient",
    "deep_quench_continuation",
    "vi_probe_residual",
]

log = logging.getLogger(__name__)


class LineSearchFailure(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CostConfig:
    """Weights and targets of the tracking cost; targets may be scalars or grid arrays."""

    beta1: float = 1.0
    beta2: float = 1.0
    beta3: float = 0.01
    y_Omega: np.ndarray | float = 0.1
    y_Q: np.ndarray | float = 0.0

    def __post_init__(self):
        b = (self.beta1, self.beta2, self.beta3)
        if min(b) < 0 or sum(b) <= 0:
            raise ConfigurationError("betas must be nonnegative and not all zero")


@dataclass(frozen=True)
class ControlConstraints:
    rho1: float = 2.0
    rho2: float = 1e6

    def __post_init__(self):
        if not (self.rho1 > 0 and self.rho2 > 0):
            raise ConfigurationError("rho1 and rho2 must be positive")


@dataclass
class ControlTrajectory:
    """Control samples ``u(t_m, x_i)`` with the constraint data they were projected on."""

    values: np.ndarray
    times: np.ndarray
    rho1: float | None = None
    rho2: float | None = None
    rho2_active: bool = False


def evaluate_cost(state: StateTrajectory, u, cost: CostConfig) -> float:
    cfg = state.cfg
    u = np.asarray(getattr(u, "values", u), dtype=float)
    if u.shape != state.y.shape:
        raise ConfigurationError("control and state grids differ")
    y_omega = np.broadcast_to(np.asarray(cost.y_Omega, dtype=float), (cfg.n,))
    y_q = np.broadcast_to(np.asarray(cost.y_Q, dtype=float), state.y.shape)
    dT = state.y[-1] - y_omega
    val = 0.5 * cost.beta1 * cfg.cell * float(dT @ dT)
    if cost.beta2:
        val += 0.5 * cost.beta2 * norms.l2_q(state.y - y_q, cfg.cell, cfg.dt) ** 2
    if cost.beta3:
        val += 0.5 * cost.beta3 * norms.l2_q(u, cfg.cell, cfg.dt) ** 2
    return val


def evaluate_adapted_cost(state: StateTrajectory, u, cost: CostConfig, u_ref) -> float:
    cfg = state.cfg
    u = np.asarray(getattr(u, "values", u), dtype=float)
    d = u - np.asarray(getattr(u_ref, "values", u_ref), dtype=float)
    return evaluate_cost(state, u, cost) + 0.5 * norms.l2_q(d, cfg.cell, cfg.dt) ** 2


def project_admissible(u, constraints: ControlConstraints, cfg: ModelConfig) -> ControlTrajectory:
    """Clamp to ``[-rho1, rho1]``, then scale back into the ``H^1(0,T;L^2)`` ball if needed.

    The scale-back is a feasibility heuristic, not the metric projection onto
    the intersection; it only triggers when the ``rho2`` ball is active.
    """
    u = np.clip(np.asarray(getattr(u, "values", u), dtype=float), -constraints.rho1, constraints.rho1)
    nrm = norms.h1_time_l2(u, cfg.cell, cfg.dt)
    active = nrm > constraints.rho2
    if active:
        u = np.clip(u * (constraints.rho2 / nrm), -constraints.rho1, constraints.rho1)
    return ControlTrajectory(u, cfg.times, constraints.rho1, constraints.rho2, bool(active))


class ReducedProblem:
    """The map ``u -> J(S(u), u)`` together with its gradient.

    ``u_ref`` switches on the adapted cost ``J + 1/2 ||u - u_ref||^2``.
    ``gradient_path`` selects the exact discrete adjoint (``"discrete"``) or the
    direct discretization of the continuous adjoint (``"continuous"``).
    """

    def __init__(self, cfg: ModelConfig, init: InitialState, cost: CostConfig,
                 constraints: ControlConstraints | None = None, u_ref=None,
                 gradient_path: str = "discrete", tol: float | None = None):
        if gradient_path not in ("discrete", "continuous"):
            raise ConfigurationError(f"unknown gradient path {gradient_path!r}")
        self.cfg = cfg
        self.init = init
        self.cost = cost
        self.constraints = constraints or ControlConstraints()
        self.u_ref = None if u_ref is None else np.asarray(getattr(u_ref, "values", u_ref), dtype=float)
        self.gradient_path = gradient_path
        self.tol = tol
        self.state_solves = 0

    @property
    def shape(self) -> tuple[int, int]:
        return (self.cfg.num_steps + 1, self.cfg.n)

    def zero_control(self) -> np.ndarray:
        return np.zeros(self.shape)

    def state(self, u) -> StateTrajectory:
        self.state_solves += 1
        traj, _ = solve(self.cfg, self.init, u, tol=self.tol, with_energy=False)
        return traj

    def objective(self, state: StateTrajectory, u) -> float:
        if self.u_ref is None:
            return evaluate_cost(state, u, self.cost)
        return evaluate_adapted_cost(state, u, self.cost, self.u_ref)

    def cost_of(self, u) -> float:
        return self.objective(self.state(u), u)

    def adjoint(self, state: StateTrajectory):
        data = assemble_adjoint_data(state, self.cost, self.cfg)
        if self.gradient_path == "discrete":
            return discrete_adjoint(state, data, self.cfg)
        return solve_adjoint(data, self.cfg)

    def gradient(self, u, state: StateTrajectory | None = None):
        """Return ``(gradient, state, adjoint)`` at ``u``."""
        state = state or self.state(u)
        adj = self.adjoint(state)
        return discrete_gradient(state, adj, u, self.cost, self.u_ref), state, adj

    def inner(self, a, b) -> float:
        return norms.l2_q_inner(a, b, self.cfg.cell, self.cfg.dt)

    def norm(self, a) -> float:
        return norms.l2_q(a, self.cfg.cell, self.cfg.dt)

    def project(self, u) -> np.ndarray:
        return project_admissible(u, self.constraints, self.cfg).values


@dataclass
class OptimizationReport:
    u: np.ndarray
    state: StateTrajectory
    gradient: np.ndarray
    adjoint: object
    cost: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    step_size: list[float] = field(default_factory=list)
    stationarity: list[float] = field(default_factory=list)
    converged: bool = False
    message: str = ""
    iterations: int = 0
    vi_residual: float = float("nan")

    @property
    def final_cost(self) -> float:
        return self.cost[-1]


def _stationarity(problem: ReducedProblem, u, g, s0: float) -> float:
    return problem.norm(u - problem.project(u - s0 * g))


def projected_gradient(problem: ReducedProblem, u_start=None, *, max_iter: int = 500,
                       tol_stat: float | None = None, s_init: float = 1.0, shrink: float = 0.5,
                       armijo: float = 1e-4, s_min: float = 1e-12, s_max: float = 1e6,
                       bb: bool = True, probe_seed: int = 0, n_probes: int = 50) -> OptimizationReport:
    """Projected gradient descent with Armijo backtracking.

    The first trial step is ``s_init``; later trial steps are Barzilai-Borwein
    estimates (clipped to ``[s_min, s_max]``) when ``bb`` is set.  Every
    accepted step satisfies the sufficient-decrease condition, so the cost is
    monotone.  Stops when ``||u - P(u - s_init g)|| <= tol_stat``.
    """
    u = problem.project(problem.zero_control() if u_start is None else u_start)
    g, state, adj = problem.gradient(u)
    J = problem.objective(state, u)
    if tol_stat is None:
        tol_stat = 1e-6 * (1.0 + problem.norm(g))
    rep = OptimizationReport(u, state, g, adj)
    rep.cost.append(J)
    rep.grad_norm.append(problem.norm(g))
    rep.stationarity.append(_stationarity(problem, u, g, s_init))
    rep.step_size.append(0.0)
    s_trial = s_init
    for it in range(max_iter):
        if rep.stationarity[-1] <= tol_stat:
            rep.converged = True
            rep.message = "stationary"
            break
        s = s_trial
        while True:
            u_new = problem.project(u - s * g)
            try:
                st_new = problem.state(u_new)
                J_new = problem.objective(st_new, u_new)
            except StepFailure:
                J_new = np.inf
            if J_new <= J + armijo * problem.inner(g, u_new - u):
                break
            s *= shrink
            if s < s_min:
                rep.message = f"line search failed at iteration {it} (step < {s_min:g})"
                log.warning(rep.message)
                rep.u, rep.state, rep.gradient, rep.adjoint = u, state, g, adj
                rep.iterations = len(rep.cost) - 1
                rep.vi_residual = vi_probe_residual(problem, u, g, seed=probe_seed, n_probes=n_probes)
                return rep
        g_new, _, adj = problem.gradient(u_new, st_new)
        if bb:
            du, dg = u_new - u, g_new - g
            curv = problem.inner(du, dg)
            s_trial = float(np.clip(problem.inner(du, du) / curv, s_min, s_max)) if curv > 0 else s_init
        u, g, J, state = u_new, g_new, J_new, st_new
        rep.cost.append(J)
        rep.grad_norm.append(problem.norm(g))
        rep.step_size.append(s)
        rep.stationarity.append(_stationarity(problem, u, g, s_init))
    else:
        rep.converged = rep.stationarity[-1] <= tol_stat
        rep.message = "stationary" if rep.converged else "max_iter reached"
    rep.u, rep.state, rep.gradient, rep.adjoint = u, state, g, adj
    rep.iterations = len(rep.cost) - 1
    rep.vi_residual = vi_probe_residual(problem, u, g, seed=probe_seed, n_probes=n_probes)
    return rep


def feasible_probes(problem: ReducedProblem, u, n_probes: int = 50, seed: int = 0):
    """Feasible directions for the variational inequality: shifts, sign flips, random points."""
    rng = np.random.default_rng(seed)
    rho1 = problem.constraints.rho1
    out = []
    for c in np.linspace(-rho1, rho1, 5):
        out.append(problem.project(u + c))
    out.append(problem.project(-u))
    out.append(problem.project(np.zeros_like(u)))
    while len(out) < n_probes:
        kind = len(out) % 3
        if kind == 0:
            v = rng.uniform(-rho1, rho1, size=u.shape)
        elif kind == 1:
            v = u + 0.1 * rho1 * rng.standard_normal(u.shape)
        else:
            v = np.sign(rng.standard_normal(u.shape)) * rho1
        out.append(problem.project(v))
    return out[:n_probes]


def vi_probe_residual(problem: ReducedProblem, u, g, n_probes: int = 50, seed: int = 0) -> float:
    """``min_v <g, v - u> / (1 + ||v - u||)`` over feasible probes ``v``."""
    vals = []
    for v in feasible_probes(problem, u, n_probes, seed):
        d = v - u
        vals.append(problem.inner(g, d) / (1.0 + problem.norm(d)))
    return float(min(vals))


@dataclass
class ContinuationReport:
    alphas: list[float] = field(default_factory=list)
    cost: list[float] = field(default_factory=list)
    adapted_cost: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    vi_residual: list[float] = field(default_factory=list)
    state_gap: list[float] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    converged: list[bool] = field(default_factory=list)
    controls: list[np.ndarray] = field(default_factory=list)
    final_obstacle_cost: float = float("nan")
    failures: list[str] = field(default_factory=list)

    def cost_gaps(self) -> np.ndarray:
        """``|J~_alpha - J(S_0(u_final), u_final)|`` along the sequence."""
        return np.abs(np.asarray(self.adapted_cost) - self.final_obstacle_cost)

    def rows(self) -> list[dict]:
        return [
            dict(alpha=a, cost=c, adapted_cost=ac, grad_norm=gn, vi_residual=vi, state_gap=sg, iters=it)
            for a, c, ac, gn, vi, sg, it in zip(self.alphas, self.cost, self.adapted_cost,
                                                self.grad_norm, self.vi_residual, self.state_gap,
                                                self.iterations)
        ]


def deep_quench_continuation(cfg: ModelConfig, init: InitialState, cost: CostConfig,
                             constraints: ControlConstraints, alphas, u_start=None, *,
                             adapted: bool = True, obstacle_lambda: float | None = None,
                             gradient_path: str = "discrete", **pg_options) -> ContinuationReport:
    """Solve the (adapted) control problem for decreasing alpha with warm starts.

    With ``adapted`` the reference control of each stage is the previous
    stage's solution (``u_start`` for the first stage).  After the last stage
    the obstacle-limit cost of the final control is evaluated with the
    Moreau-Yosida solver.
    """
    alphas = [float(a) for a in alphas]
    if any(b >= a for a, b in zip(alphas, alphas[1:])):
        raise ConfigurationError("alpha sequence must be strictly decreasing")
    obstacle_cfg = cfg.as_obstacle(obstacle_lambda)
    rep = ContinuationReport()
    u = np.zeros((cfg.num_steps + 1, cfg.n)) if u_start is None else np.asarray(u_start, dtype=float)
    for a in alphas:
        cfg_a = cfg.with_alpha(a)
        problem = ReducedProblem(cfg_a, init, cost, constraints, u_ref=u if adapted else None,
                                 gradient_path=gradient_path)
        try:
            res = projected_gradient(problem, u, **pg_options)
        except StepFailure as exc:
            rep.failures.append(f"alpha={a}: {exc}")
            break
        u_new = res.u
        obst_state, _ = solve(obstacle_cfg, init, u_new, with_energy=False)
        rep.alphas.append(a)
        rep.cost.append(evaluate_cost(res.state, u_new, cost))
        rep.adapted_cost.append(res.final_cost)
        rep.grad_norm.append(res.grad_norm[-1])
        rep.vi_residual.append(res.vi_residual)
        rep.state_gap.append(compare_two_runs(res.state, obst_state).state_gap)
        rep.iterations.append(res.iterations)
        rep.converged.append(res.converged)
        rep.controls.append(u_new)
        if not res.converged:
            rep.failures.append(f"alpha={a}: {res.message}")
        u = u_new
    if rep.controls:
        final_state, _ = solve(obstacle_cfg, init, rep.controls[-1], with_energy=False)
        rep.final_obstacle_cost = evaluate_cost(final_state, rep.controls[-1], cost)
    return rep
