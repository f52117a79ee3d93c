import numpy as np
import pytest

from fqchopt.potentials import QuenchSchedule
from fqchopt.spectral import ConfigurationError, Domain, SpectralField, build_basis, random_field
from fqchopt.state import (InitialState, ModelConfig, StepFailure, compare_two_runs, energy_report,
                           solve, step)


def _cfg(kind_a="laplacian_neumann", n=32, **kw):
    dom = Domain.interval(1.0, n)
    return ModelConfig(build_basis(dom, kind_a), build_basis(dom, "laplacian_neumann"), **kw)


def _linear_oracle(cfg, y0, u, steps):
    """Monolithic implicit Euler for (y, mu) with h' replaced by its linearization 2 y at 0."""
    n = cfg.n
    K = cfg.basis_A.power_matrix(2 * cfg.r)
    L = cfg.basis_B.power_matrix(2 * cfg.sigma)
    I = np.eye(n)
    a = cfg.quench_scale
    big = np.block([[I / cfg.dt, K], [cfg.tau * I / cfg.dt + L + 2 * a * I, -I]])
    ys, mus = [y0], []
    for k in range(steps):
        y = ys[-1]
        ub = 0.5 * (u[k] + u[k + 1])
        rhs = np.concatenate([y / cfg.dt, cfg.tau * y / cfg.dt + 2 * cfg.smooth.c1 * y + ub])
        sol = np.linalg.solve(big, rhs)
        ys.append(sol[:n])
        mus.append(sol[n:])
    return np.array(ys), np.array(mus)


@pytest.mark.parametrize("kind_a", ["laplacian_neumann", "laplacian_dirichlet"])
@pytest.mark.parametrize("r", [0.5, 0.3])
def test_linearized_regime_matches_monolithic_oracle(kind_a, r):
    cfg = _cfg(kind_a, n=16, r=r, sigma=0.7, T=0.02, dt=1e-3, tol_newton=1e-16)
    rng = np.random.default_rng(3)
    y0 = 1e-5 * random_field(cfg.basis_B, rng, decay=1.0).grid()
    u = 1e-5 * rng.standard_normal((cfg.num_steps + 1, cfg.n))
    traj, _ = solve(cfg, InitialState.from_grid(y0), u, with_energy=False)
    ys, mus = _linear_oracle(cfg, y0, u, cfg.num_steps)
    scale = np.max(np.abs(ys))
    assert np.max(np.abs(traj.y - ys)) <= 1e-8 * scale
    assert np.max(np.abs(traj.mu - mus)) <= 1e-6 * np.max(np.abs(mus))


def test_zero_state_is_fixed_point():
    cfg = _cfg()
    init = InitialState.from_grid(np.zeros(cfg.n))
    traj, _ = solve(cfg, init)
    assert np.all(traj.y == 0) and np.allclose(traj.mu, 0)
    y1, mu1 = step(SpectralField.from_grid(cfg.basis_B, np.zeros(cfg.n)),
                   SpectralField.from_grid(cfg.basis_B, np.zeros(cfg.n)), cfg)
    assert np.allclose(y1.coeffs, 0) and np.allclose(mu1.coeffs, 0)


def test_one_step_conserves_mean():
    cfg = _cfg()
    rng = np.random.default_rng(0)
    g = random_field(cfg.basis_B, rng, decay=2.0, zero_mean=True).grid()
    y0 = 0.1 + 0.3 * g / np.abs(g).max()
    y1, _ = step(SpectralField.from_grid(cfg.basis_B, y0), SpectralField.from_grid(cfg.basis_B, 0 * y0), cfg)
    assert abs(np.mean(y1.grid()) - 0.1) <= 1e-12


def test_newton_iterations_random_smooth():
    cfg = _cfg(alpha=0.1, dt=1e-3, tol_newton=1e-10)
    rng = np.random.default_rng(7)
    g = random_field(cfg.basis_B, rng, decay=2.0).grid()
    y0 = 0.5 * g / np.abs(g).max()
    traj, _ = solve(cfg, InitialState.from_grid(y0))
    assert traj.newton_iterations.max() <= 8
    assert traj.newton_residuals.max() <= 1e-10
    assert np.array_equal(traj.y[0], y0)


def test_energy_decreases_and_identity(a9):
    _, cfg, init = a9
    traj, rep = solve(cfg, init)
    assert rep.max_increase() <= 0
    E0 = rep.energy[0]
    assert abs(rep.identity_residual) <= 10 * cfg.dt * (1 + abs(E0))
    # the scheme dissipates numerically, never creates energy
    assert rep.identity_residual <= 0
    assert np.all(np.isfinite(rep.energy))


def test_energy_report_with_control_work(a9):
    _, cfg, init = a9
    u = 0.3 * np.ones((cfg.num_steps + 1, cfg.n)) * np.cos(np.pi * cfg.domain.coordinates()[:, 0])
    traj, rep = solve(cfg, init, u)
    assert abs(rep.identity_residual) <= 10 * cfg.dt * (1 + abs(rep.energy[0]))
    assert rep.work[-1] != 0


def test_separation_and_confinement(a9):
    _, cfg, init = a9
    traj, _ = solve(cfg, init)
    lo, hi = traj.separation
    assert -1 < lo <= hi < 1
    assert np.max(np.abs(traj.y)) <= 1 - 1e-10


def test_mass_conservation_a9(a9):
    _, cfg, init = a9
    traj, _ = solve(cfg, init)
    assert np.max(np.abs(traj.means() - np.mean(init.y0))) <= 1e-10


def test_obstacle_overshoot_scales_with_lambda():
    # c1 = 10 makes the lowest modes unstable, so y reaches the obstacle
    from fqchopt.potentials import SmoothPart

    dom = Domain.interval(1.0, 32)
    b = build_basis(dom, "laplacian_neumann")
    x = dom.coordinates()[:, 0]
    init = InitialState.from_grid(0.2 * np.cos(np.pi * x))
    over = []
    for lam in (1e-5, 1e-6):
        cfg = ModelConfig(b, b, alpha=None, yosida_lambda=lam, smooth=SmoothPart(10.0))
        traj, _ = solve(cfg, init, with_energy=False)
        over.append(np.max(np.abs(traj.y)) - 1)
    assert over[0] > 0 and over[1] > 0
    assert over[0] / over[1] == pytest.approx(10, rel=0.05)


def test_obstacle_oracle_on_a9(a9):
    _, cfg, init = a9
    traj, _ = solve(cfg.as_obstacle(1e-6), init, with_energy=False)
    assert np.max(np.abs(traj.y)) - 1 <= 5e-6


def test_quench_gap_decreases_with_alpha(a9):
    _, cfg, init = a9
    ref, _ = solve(cfg.as_obstacle(1e-6), init, with_energy=False)
    gaps = [compare_two_runs(solve(cfg.with_alpha(a), init, with_energy=False)[0], ref).state_gap
            for a in (0.2, 0.1, 0.05)]
    assert gaps[0] > gaps[1] > gaps[2] > 0


def test_compare_two_runs_properties(a9):
    _, cfg, init = a9
    t1, _ = solve(cfg, init, with_energy=False)
    rep = compare_two_runs(t1, t1)
    assert rep.left == 0 and rep.right == 0 and rep.ratio == 0
    t2, _ = solve(cfg.with_alpha(0.05), init, with_energy=False)
    a, b = compare_two_runs(t1, t2), compare_two_runs(t2, t1)
    assert a.left == pytest.approx(b.left, rel=1e-14) and a.right == pytest.approx(b.right)


def test_control_perturbation_ratio_bounded(a9):
    _, cfg, init = a9
    x = cfg.domain.coordinates()[:, 0]
    d = np.outer(np.ones(cfg.num_steps + 1), np.cos(2 * np.pi * x))
    t0, _ = solve(cfg, init, with_energy=False)
    lefts, ratios = [], []
    for eps in (1e-1, 1e-2, 1e-3):
        t1, _ = solve(cfg, init, eps * d, with_energy=False)
        rep = compare_two_runs(t0, t1)
        lefts.append(rep.left)
        ratios.append(rep.ratio)
    assert lefts[0] > lefts[1] > lefts[2]
    assert max(ratios) / min(ratios) < 1.5


def test_config_validation():
    with pytest.raises(ConfigurationError):
        _cfg(dt=0.003, T=0.25)
    with pytest.raises(ConfigurationError):
        _cfg(r=0)
    with pytest.raises(ConfigurationError):
        _cfg(alpha=-1)
    with pytest.raises(ConfigurationError):
        InitialState.from_grid(np.array([0.5, 1.0]))
    cfg = _cfg()
    with pytest.raises(ConfigurationError):
        solve(cfg, InitialState.from_grid(np.zeros(5)))
    with pytest.raises(ConfigurationError):
        solve(cfg, InitialState.from_grid(np.zeros(cfg.n)), np.zeros((3, cfg.n)))


def test_power_schedule_runs():
    cfg = _cfg(schedule=QuenchSchedule("power", 2.0), alpha=0.3)
    assert cfg.quench_scale == pytest.approx(0.09)
    x = cfg.domain.coordinates()[:, 0]
    traj, _ = solve(cfg, InitialState.from_grid(0.2 * np.cos(np.pi * x)), with_energy=False)
    assert np.all(np.isfinite(traj.y))


def test_newton_failure_is_reported():
    cfg = _cfg(max_newton=1, tol_newton=1e-15)
    x = cfg.domain.coordinates()[:, 0]
    with pytest.raises(StepFailure) as exc:
        solve(cfg, InitialState.from_grid(0.9 * np.cos(np.pi * x)))
    assert exc.value.time_index == 1


def test_energy_report_recomputed(a9):
    _, cfg, init = a9
    traj, rep = solve(cfg, init)
    again = energy_report(traj)
    assert np.array_equal(again.energy, rep.energy)
