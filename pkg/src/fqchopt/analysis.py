"""Study harness: alpha-rate fits, dt self-convergence, gradient and control oracles."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import norms
from .adjoint import lambda_dual_norm
from .optimize import ControlConstraints, CostConfig, ReducedProblem
from .spectral import ConfigurationError
from .state import InitialState, ModelConfig, PerturbationReport, compare_two_runs, solve

__all__ = [
    "RateFit",
    "fit_rate",
    "NormSuite",
    "alpha_rate_study",
    "oracle_sensitivity",
    "TwoParameterTable",
    "two_parameter_study",
    "study_pairs",
    "FDReport",
    "fd_gradient_oracle",
    "random_directions",
    "smooth_control",
    "OracleReport",
    "piecewise_control",
    "brute_force_control_oracle",
    "ConvergenceStudy",
    "dt_convergence_study",
]

log = logging.getLogger(__name__)

DEFAULT_ALPHAS = (0.2, 0.1, 0.05, 0.025, 0.0125)


@dataclass
class RateFit:
    """Least-squares fit of ``log e = slope log p + intercept``.

    ``constant`` is ``e / p**exponent`` at the coarsest (largest) sample, i.e.
    the constant of the reference bound ``e <= K p**exponent`` calibrated once.
    """

    params: np.ndarray
    errors: np.ndarray
    slope: float
    intercept: float
    residual: float
    constant: float
    exponent: float = 0.5
    excluded: int = 1

    def bound(self, safety: float = 1.1) -> np.ndarray:
        return safety * self.constant * self.params ** self.exponent

    def bound_holds(self, safety: float = 1.1) -> bool:
        return bool(np.all(self.errors <= self.bound(safety)))

    def monotone(self) -> bool:
        """Errors nonincreasing as the parameter decreases."""
        return bool(np.all(np.diff(self.errors) <= 0))

    def rows(self) -> list[dict]:
        return [dict(param=float(p), error=float(e), ratio=float(e / (self.constant * p ** self.exponent)))
                for p, e in zip(self.params, self.errors)]


def fit_rate(params, errors, *, exclude_coarsest: int = 1, exponent: float = 0.5) -> RateFit:
    p = np.asarray(params, dtype=float)
    e = np.asarray(errors, dtype=float)
    if p.size < 4 or p.shape != e.shape:
        raise ConfigurationError("a rate fit needs at least 4 matching samples")
    if np.any(np.diff(p) >= 0):
        raise ConfigurationError("parameters must be strictly decreasing")
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise ConfigurationError("errors must be finite and nonnegative")
    lp, le = np.log(p[exclude_coarsest:]), np.log(np.maximum(e[exclude_coarsest:], np.finfo(float).tiny))
    (slope, intercept), res, *_ = np.polyfit(lp, le, 1, full=True)
    return RateFit(p, e, float(slope), float(intercept), float(res[0]) if res.size else 0.0,
                   float(e[0] / p[0] ** exponent), exponent, exclude_coarsest)


class NormSuite:
    """The discrete norms of the state, chemical-potential and multiplier spaces for one config."""

    names = ("c0_l2", "l2_h1", "c0l2_cap_l2h1", "linf_vb_sigma", "h1_va_neg", "z_dual")

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg

    def __call__(self, name: str, e: np.ndarray) -> float:
        cfg = self.cfg
        e = np.asarray(e, dtype=float)
        if name == "c0_l2":
            return norms.c0_l2(e, cfg.cell)
        if name == "l2_h1":
            return norms.l2_h1(e, cfg.operators.h1_basis, cfg.dt)
        if name == "c0l2_cap_l2h1":
            return norms.c0l2_cap_l2h1(e, cfg.operators.h1_basis, cfg.dt)
        if name == "linf_vb_sigma":
            return norms.linf_vb_sigma(e, cfg.basis_B, cfg.sigma)
        if name == "h1_va_neg":
            return norms.h1_time_va_neg(e, cfg.basis_A, cfg.r, cfg.dt)
        if name == "z_dual":
            return lambda_dual_norm(e, cfg)
        raise KeyError(name)

    def all(self, e: np.ndarray) -> dict[str, float]:
        return {k: self(k, e) for k in self.names}


def _run(cfg: ModelConfig, init: InitialState, u):
    return solve(cfg, init, u, with_energy=False)[0]


def _map(fn, args, jobs: int):
    if jobs <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*args)))


def alpha_rate_study(cfg: ModelConfig, init: InitialState, u=None, alphas=DEFAULT_ALPHAS, *,
                     oracle_lambda: float = 1e-6, jobs: int = 1):
    """Errors ``||S_alpha(u) - S_0(u)||`` in ``C^0 L^2 cap L^2 H^1`` and their rate fit.

    Returns ``(fit, reference, runs)`` where ``reference`` is the obstacle run.
    """
    alphas = [float(a) for a in alphas]
    cfgs = [cfg.as_obstacle(oracle_lambda)] + [cfg.with_alpha(a) for a in alphas]
    runs = _map(_run, [(c, init, u) for c in cfgs], jobs)
    ref, runs = runs[0], runs[1:]
    h1 = cfg.operators.h1_basis
    errors = [norms.c0l2_cap_l2h1(r.y - ref.y, h1, cfg.dt) for r in runs]
    return fit_rate(alphas, errors), ref, runs


def oracle_sensitivity(cfg: ModelConfig, init: InitialState, u=None, lambdas=(1e-6, 1e-7)) -> float:
    """Gap between obstacle solves at two Yosida parameters (size of the oracle error)."""
    a, b = (_run(cfg.as_obstacle(lam), init, u) for lam in lambdas)
    return norms.c0l2_cap_l2h1(a.y - b.y, cfg.operators.h1_basis, cfg.dt)


@dataclass
class TwoParameterTable:
    calibration: list[PerturbationReport]
    reports: list[PerturbationReport]
    pairs: list[tuple[float, float]]
    K2: float
    safety: float

    def holds(self) -> np.ndarray:
        return np.array([r.left <= self.K2 * r.right for r in self.reports])

    def rows(self) -> list[dict]:
        return [dict(alpha1=a1, alpha2=a2, left=r.left, right=r.right, ratio=r.ratio,
                     bound=self.K2 * r.right)
                for (a1, a2), r in zip(self.pairs, self.reports)]


def _pair_report(cfg, init, a1, u1, a2, u2):
    return compare_two_runs(_run(cfg.with_alpha(a1), init, u1), _run(cfg.with_alpha(a2), init, u2))


def two_parameter_study(cfg: ModelConfig, init: InitialState, pairs, *, calibration=None,
                        safety: float = 2.0, jobs: int = 1) -> TwoParameterTable:
    """Both sides of the two-parameter stability estimate over pairs ``((a1, u1), (a2, u2))``.

    ``K2`` is fitted once on the ``calibration`` pairs (largest ratio times
    ``safety``) and then applied unchanged to every pair of the table.
    """
    pairs = list(pairs)
    calibration = list(calibration) if calibration is not None else pairs[:2]
    flat = lambda ps: [(cfg, init, a1, u1, a2, u2) for (a1, u1), (a2, u2) in ps]  # noqa: E731
    cal = _map(_pair_report, flat(calibration), jobs)
    reps = _map(_pair_report, flat(pairs), jobs)
    ratios = [r.ratio for r in cal if np.isfinite(r.ratio)]
    if not ratios:
        raise ConfigurationError("calibration pairs give no finite ratio")
    K2 = safety * max(ratios)
    return TwoParameterTable(cal, reps, [(p[0][0], p[1][0]) for p in pairs], K2, safety)


def study_pairs(cfg: ModelConfig, u, alphas, rng: np.random.Generator, n_pairs: int = 10):
    """Calibration and test pairs ``((a1, u1), (a2, u2))`` for :func:`two_parameter_study`.

    Calibration uses one pure-alpha pair and two pure-control pairs at the
    largest alpha; test pairs draw both alphas uniformly from the sequence
    range and add independent smooth perturbations to ``u``.
    """
    u = np.zeros((cfg.num_steps + 1, cfg.n)) if u is None else np.asarray(u, dtype=float)
    a_max, a_min = max(alphas), min(alphas)
    cal = [((a_max, u), (0.5 * a_max, u))]
    for _ in range(2):
        cal.append(((a_max, u), (a_max, u + smooth_control(cfg, rng, 0.5))))
    pairs = []
    for _ in range(n_pairs):
        a1, a2 = rng.uniform(a_min, a_max, 2)
        pairs.append(((a1, u + smooth_control(cfg, rng, rng.uniform(0, 1))),
                      (a2, u + smooth_control(cfg, rng, rng.uniform(0, 1)))))
    return cal, pairs


@dataclass
class FDReport:
    fd: np.ndarray
    analytic: np.ndarray
    eps: float

    @property
    def rel_error(self) -> np.ndarray:
        scale = np.maximum(np.abs(self.fd), np.finfo(float).tiny)
        return np.abs(self.fd - self.analytic) / scale

    @property
    def sign_agreement(self) -> float:
        return float(np.mean(np.sign(self.fd) == np.sign(self.analytic)))

    def passes(self, tol: float) -> bool:
        return bool(np.all(self.rel_error <= tol))


def random_directions(shape, n: int, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [rng.standard_normal(shape) for _ in range(n)]


def smooth_control(cfg: ModelConfig, rng: np.random.Generator, amplitude: float = 1.0,
                   space_modes: int = 5, time_modes: int = 3) -> np.ndarray:
    """Random control built from a few low modes of B in space and cosines in time."""
    t = cfg.times / cfg.T
    B = cfg.basis_B
    j = np.argsort(B.eigenvalues, kind="stable")[:space_modes]
    coeff = rng.standard_normal((time_modes, j.size)) / (1.0 + np.arange(time_modes)[:, None]
                                                         + np.sqrt(B.eigenvalues[j])[None, :])
    space = coeff @ B.phi[:, j].T  # (time_modes, n)
    u = np.cos(np.pi * np.outer(t, np.arange(time_modes))) @ space
    return amplitude * u / max(np.max(np.abs(u)), np.finfo(float).tiny)


def fd_gradient_oracle(problem: ReducedProblem, u, directions, eps: float = 1e-5) -> FDReport:
    """Central differences of the reduced cost against ``<grad, delta>``."""
    u = np.asarray(u, dtype=float)
    g, _, _ = problem.gradient(u)
    fd, an = [], []
    for d in directions:
        d = np.asarray(d, dtype=float)
        if not np.any(d):
            fd.append(0.0)
        else:
            fd.append((problem.cost_of(u + eps * d) - problem.cost_of(u - eps * d)) / (2 * eps))
        an.append(problem.inner(g, d))
    return FDReport(np.array(fd), np.array(an), eps)


@dataclass
class OracleReport:
    grid_params: np.ndarray
    grid_cost: float
    grid_points: int
    pg_params: np.ndarray
    pg_cost: float
    zero_cost: float
    history: list[float] = field(default_factory=list)

    @property
    def rel_gap(self) -> float:
        return abs(self.pg_cost - self.grid_cost) / max(abs(self.grid_cost), np.finfo(float).tiny)


def piecewise_control(params, cfg: ModelConfig, profile=None) -> np.ndarray:
    """Control ``profile(x) * a_k`` on consecutive blocks of time nodes."""
    params = np.asarray(params, dtype=float)
    blocks = np.array_split(np.arange(cfg.num_steps + 1), params.size)
    prof = np.ones(cfg.n) if profile is None else np.asarray(profile, dtype=float)
    u = np.empty((cfg.num_steps + 1, cfg.n))
    for a, idx in zip(params, blocks):
        u[idx] = a * prof
    return u


def brute_force_control_oracle(cfg: ModelConfig, init: InitialState, cost: CostConfig,
                               constraints: ControlConstraints, *, n_params: int = 3,
                               points: int = 21, zoom_points: int = 11, zoom_levels: int = 3, profile=None,
                               pg_iter: int = 200, pg_tol: float = 1e-10) -> OracleReport:
    """Grid search over a piecewise-constant-in-time control versus projected gradient.

    The first pass evaluates ``points**n_params`` parameters on the feasible box;
    each of ``zoom_levels`` further passes refines a box of two grid cells
    around the best point so far.  The
    gradient method works on the same parameters with the chain-rule gradient
    ``dJ/da_k = <g, du/da_k>``.
    """
    rho1 = constraints.rho1
    prof = np.ones(cfg.n) if profile is None else np.asarray(profile, dtype=float)
    amax = rho1 / np.max(np.abs(prof))
    problem = ReducedProblem(cfg, init, cost, constraints)

    def J(a):
        u = piecewise_control(a, cfg, prof)
        if norms.h1_time_l2(u, cfg.cell, cfg.dt) > constraints.rho2:
            return np.inf
        return problem.cost_of(u)

    best, best_a, count = np.inf, None, 0
    lo, hi, npts = np.full(n_params, -amax), np.full(n_params, amax), points
    for _ in range(1 + zoom_levels):
        axes = [np.linspace(l, h, npts) for l, h in zip(lo, hi)]
        for a in itertools.product(*axes):
            val = J(np.array(a))
            count += 1
            if val < best:
                best, best_a = val, np.array(a)
        width = (hi - lo) / (npts - 1)
        lo, hi, npts = np.maximum(best_a - 2 * width, -amax), np.minimum(best_a + 2 * width, amax), zoom_points

    basis_u = [piecewise_control(np.eye(n_params)[k], cfg, prof) for k in range(n_params)]

    def grad(a):
        g, st, _ = problem.gradient(piecewise_control(a, cfg, prof))
        return np.array([problem.inner(g, b) for b in basis_u]), problem.objective(st, piecewise_control(a, cfg, prof))

    a = np.zeros(n_params)
    ga, Ja = grad(a)
    history = [Ja]
    s = 1.0
    for _ in range(pg_iter):
        trial = s
        while True:
            a_new = np.clip(a - trial * ga, -amax, amax)
            J_new = J(a_new)
            if J_new <= Ja - 1e-4 * (ga @ (a - a_new)):
                break
            trial *= 0.5
            if trial < 1e-14:
                break
        if trial < 1e-14:
            break
        da = a_new - a
        g_new, J_new = grad(a_new)
        dg = g_new - ga
        # Barzilai-Borwein trial step for the next iteration
        s = float(np.clip((da @ da) / (da @ dg), 1e-8, 1e8)) if da @ dg > 0 else 1.0
        a, ga, Ja = a_new, g_new, J_new
        history.append(Ja)
        if np.max(np.abs(da)) <= pg_tol * (1.0 + np.max(np.abs(a))):
            break
    return OracleReport(best_a, float(best), count, a, float(Ja), J(np.zeros(n_params)), history)


@dataclass
class ConvergenceStudy:
    dts: np.ndarray
    differences: np.ndarray  # ||y_dt - y_{dt/2}|| in C^0 L^2 on the coarse nodes
    orders: np.ndarray
    slope: float

    def rows(self) -> list[dict]:
        return [dict(dt=float(d), difference=float(e)) for d, e in zip(self.dts, self.differences)]


def dt_convergence_study(cfg: ModelConfig, init: InitialState, dts=(4e-3, 2e-3, 1e-3, 5e-4), *,
                         jobs: int = 1) -> ConvergenceStudy:
    """Self-convergence of the state in ``C^0(L^2)`` over successively halved steps.

    Consecutive solutions are compared on the coarser time nodes; ``u = 0``.
    """
    dts = [float(d) for d in dts]
    if any(abs(b - a / 2) > 1e-14 for a, b in zip(dts, dts[1:])):
        raise ConfigurationError("time steps must halve successively")
    runs = _map(_run, [(cfg.replace(dt=d), init, None) for d in dts], jobs)
    diffs = []
    for coarse, fine in zip(runs, runs[1:]):
        diffs.append(norms.c0_l2(coarse.y - fine.y[::2], cfg.cell))
    diffs = np.array(diffs)
    orders = np.log2(diffs[:-1] / diffs[1:])
    slope = float(np.polyfit(np.log(dts[:-1]), np.log(diffs), 1)[0])
    return ConvergenceStudy(np.array(dts[:-1]), diffs, orders, slope)
