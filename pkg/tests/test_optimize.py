import numpy as np
import pytest

from fqchopt import norms
from fqchopt.optimize import (ControlConstraints, CostConfig, ReducedProblem, deep_quench_continuation,
                              evaluate_adapted_cost, evaluate_cost, feasible_probes, project_admissible,
                              projected_gradient, vi_probe_residual)
from fqchopt.spectral import ConfigurationError
from fqchopt.state import solve


@pytest.fixture(scope="module")
def base():
    from fqchopt.config import parse_scenario

    scen = parse_scenario({}, env={})
    cfg = scen.model()
    init = scen.initial(cfg)
    traj, _ = solve(cfg, init, with_energy=False)
    return scen, cfg, init, traj


@pytest.fixture(scope="module")
def optimum(base):
    scen, cfg, init, _ = base
    problem = ReducedProblem(cfg, init, scen.cost(), scen.constraints())
    return problem, projected_gradient(problem)


def test_cost_zero_on_targets(base):
    _, cfg, _, traj = base
    cost = CostConfig(1.0, 1.0, 0.01, y_Omega=traj.y[-1].copy(), y_Q=traj.y.copy())
    assert evaluate_cost(traj, np.zeros_like(traj.y), cost) == 0.0


def test_cost_terminal_term(base):
    _, cfg, _, traj = base
    cost = CostConfig(1.0, 0.0, 0.0, y_Omega=traj.y[-1] - 2.0)
    assert evaluate_cost(traj, np.zeros_like(traj.y), cost) == pytest.approx(2.0, rel=1e-13)


def test_adapted_cost_examples(base):
    _, cfg, _, traj = base
    cost = CostConfig()
    u = np.full(traj.y.shape, 0.3)
    assert evaluate_adapted_cost(traj, u, cost, u) == evaluate_cost(traj, u, cost)
    extra = evaluate_adapted_cost(traj, u, cost, np.zeros_like(u)) - evaluate_cost(traj, u, cost)
    assert extra == pytest.approx(0.5 * 0.09 * cfg.T * cfg.domain.volume, rel=1e-12)
    v = np.random.default_rng(0).standard_normal(u.shape)
    assert evaluate_adapted_cost(traj, v, cost, u) >= evaluate_cost(traj, v, cost)


def test_cost_rejects_bad_weights():
    with pytest.raises(ConfigurationError):
        CostConfig(-1.0, 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        CostConfig(0.0, 0.0, 0.0)
    with pytest.raises(ConfigurationError):
        ControlConstraints(0.0, 1.0)


def test_projection_examples(base):
    _, cfg, _, _ = base
    c = ControlConstraints(2.0, 1e6)
    shape = (cfg.num_steps + 1, cfg.n)
    assert np.all(project_admissible(np.full(shape, 4.0), c, cfg).values == 2.0)
    assert np.all(project_admissible(np.full(shape, -4.0), c, cfg).values == -2.0)
    u = np.random.default_rng(1).uniform(-2, 2, shape)
    out = project_admissible(u, c, cfg)
    assert np.array_equal(out.values, u) and not out.rho2_active
    again = project_admissible(out.values, c, cfg).values
    assert np.array_equal(again, out.values)


def test_projection_small_h1_ball(base):
    _, cfg, _, _ = base
    rng = np.random.default_rng(2)
    u = rng.uniform(-2, 2, (cfg.num_steps + 1, cfg.n))
    for rho2 in (1e-3, 0.1, 1.0):
        out = project_admissible(u, ControlConstraints(2.0, rho2), cfg)
        assert out.rho2_active
        assert norms.h1_time_l2(out.values, cfg.cell, cfg.dt) <= rho2 * (1 + 1e-10)
        assert np.max(np.abs(out.values)) <= 2.0


def test_zero_tracking_gives_zero_control(base):
    _, cfg, init, _ = base
    problem = ReducedProblem(cfg, init, CostConfig(0.0, 0.0, 0.5))
    start = np.full(problem.shape, 1.5)
    rep = projected_gradient(problem, start)
    assert rep.converged
    assert np.max(np.abs(rep.u)) <= 1e-6


def test_descent_and_feasibility(optimum):
    problem, rep = optimum
    assert rep.converged
    J = np.array(rep.cost)
    assert np.all(np.diff(J) < 0)
    assert np.max(np.abs(rep.u)) <= problem.constraints.rho1


def test_fixed_point_and_vi(optimum):
    problem, rep = optimum
    fp = problem.norm(rep.u - problem.project(rep.u - 1.0 * rep.gradient))
    assert fp <= 1e-6
    Q = problem.cfg.T * problem.cfg.domain.volume
    assert rep.vi_residual >= -1e-6 * Q
    assert vi_probe_residual(problem, rep.u, rep.gradient, seed=5) >= -1e-6 * Q


def test_interior_projection_characterization(optimum):
    problem, rep = optimum
    inactive = np.abs(rep.u) < problem.constraints.rho1
    assert inactive.all()
    beta3 = problem.cost.beta3
    tol = 1e-6 * (1 + rep.grad_norm[0])
    # pointwise, up to the nodal scaling of the stopping norm
    scale = np.sqrt(problem.cfg.cell * problem.cfg.dt)
    assert np.max(np.abs(rep.adjoint.q + beta3 * rep.u)) * scale <= tol * (1 + problem.constraints.rho1)


def test_gradient_matches_difference_quotient(optimum):
    problem, rep = optimum
    d = np.random.default_rng(3).standard_normal(problem.shape)
    g, _, _ = problem.gradient(rep.u + 0.1)
    eps = 1e-5
    fd = (problem.cost_of(rep.u + 0.1 + eps * d) - problem.cost_of(rep.u + 0.1 - eps * d)) / (2 * eps)
    assert problem.inner(g, d) == pytest.approx(fd, rel=1e-6)


def test_feasible_probes_are_feasible(optimum):
    problem, rep = optimum
    probes = feasible_probes(problem, rep.u, 50, seed=0)
    assert len(probes) == 50
    for v in probes:
        assert np.max(np.abs(v)) <= problem.constraints.rho1


def test_single_stage_continuation_equals_projected_gradient(base):
    scen, cfg, init, _ = base
    cost, cons = scen.cost(), scen.constraints()
    rep = deep_quench_continuation(cfg, init, cost, cons, [0.1], adapted=False)
    ref = projected_gradient(ReducedProblem(cfg.with_alpha(0.1), init, cost, cons))
    assert np.array_equal(rep.controls[0], ref.u)
    assert rep.cost[0] == ref.final_cost


def test_continuation_report(base):
    scen, cfg, init, _ = base
    rep = deep_quench_continuation(cfg, init, scen.cost(), scen.constraints(), scen.alphas)
    assert rep.alphas == scen.alphas and all(rep.converged) and not rep.failures
    assert np.all(np.isfinite(rep.cost_gaps()))
    assert len(rep.rows()) == len(scen.alphas)
    # adapted cost dominates the plain cost
    assert np.all(np.asarray(rep.adapted_cost) >= np.asarray(rep.cost))


def test_state_gap_decreases_at_fixed_control(base):
    from fqchopt.state import compare_two_runs

    scen, cfg, init, _ = base
    ref, _ = solve(cfg.as_obstacle(1e-6), init, with_energy=False)
    gaps = [compare_two_runs(solve(cfg.with_alpha(a), init, with_energy=False)[0], ref).state_gap
            for a in scen.alphas]
    assert np.all(np.diff(gaps) < 0)


def test_continuation_rejects_increasing_sequence(base):
    scen, cfg, init, _ = base
    with pytest.raises(ConfigurationError):
        deep_quench_continuation(cfg, init, scen.cost(), scen.constraints(), [0.1, 0.2])


def test_unknown_gradient_path(base):
    scen, cfg, init, _ = base
    with pytest.raises(ConfigurationError):
        ReducedProblem(cfg, init, scen.cost(), gradient_path="magic")
