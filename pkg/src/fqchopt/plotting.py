"""Report figures, rendered off-screen with the Agg canvas.

Figures are built on :class:`matplotlib.figure.Figure` directly (no pyplot
state), so that worker processes can draw concurrently.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .io import header_line

__all__ = [
    "plot_rate_fit",
    "plot_energy",
    "plot_continuation",
    "plot_snapshots",
    "plot_convergence",
    "plot_gradient_check",
]

STYLE = {
    "figsize": (5.0, 3.6),
    "dpi": 120,
}


def _figure(ncols: int = 1):
    w, h = STYLE["figsize"]
    fig = Figure(figsize=(w * ncols, h), dpi=STYLE["dpi"], layout="constrained")
    FigureCanvasAgg(fig)
    axes = [fig.add_subplot(1, ncols, i + 1) for i in range(ncols)]
    for ax in axes:
        ax.grid(True, which="both", lw=0.4, alpha=0.5)
    return fig, axes


def _save(fig, path, config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Description": header_line(config_hash).lstrip("# ")})
    return path


def plot_rate_fit(fit, path, config_hash: str, label: str = r"$\alpha$") -> Path:
    fig, (ax,) = _figure()
    p, e = fit.params, fit.errors
    ax.loglog(p, e, "o-", label="error")
    ax.loglog(p, np.exp(fit.intercept) * p ** fit.slope, "--", label=f"fit, slope {fit.slope:.3f}")
    ax.loglog(p, fit.bound(), ":", label=r"$1.1\,K_2\,\alpha^{1/2}$")
    ax.set_xlabel(label)
    ax.set_ylabel(r"$\|y^\alpha - y\|$")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path, config_hash)


def plot_energy(report, path, config_hash: str) -> Path:
    fig, (ax1, ax2) = _figure(2)
    ax1.plot(report.times, report.energy)
    ax1.set_xlabel("t")
    ax1.set_ylabel("E(y(t))")
    ax2.plot(report.times, report.diss_A, label=r"$\int\|A^r\mu\|^2$")
    ax2.plot(report.times, report.diss_tau, label=r"$\tau\int\|\partial_t y\|^2$")
    ax2.set_xlabel("t")
    ax2.legend(frameon=False, fontsize=8)
    return _save(fig, path, config_hash)


def plot_continuation(report, path, config_hash: str) -> Path:
    fig, (ax1, ax2) = _figure(2)
    a = np.asarray(report.alphas)
    ax1.loglog(a, np.maximum(report.cost_gaps(), 1e-300), "o-", label=r"$|\tilde J_\alpha - J_0|$")
    ax1.loglog(a, np.maximum(report.state_gap, 1e-300), "s--", label="state gap")
    ax1.invert_xaxis()
    ax1.set_xlabel(r"$\alpha$")
    ax1.legend(frameon=False, fontsize=8)
    ax2.semilogx(a, report.adapted_cost, "o-", label="adapted cost")
    ax2.semilogx(a, report.cost, "s--", label="cost")
    ax2.invert_xaxis()
    ax2.set_xlabel(r"$\alpha$")
    ax2.legend(frameon=False, fontsize=8)
    return _save(fig, path, config_hash)


def plot_snapshots(traj, path, config_hash: str, count: int = 5) -> Path:
    """Line plots in 1D, images of the initial and final state in 2D."""
    cfg = traj.cfg
    if cfg.domain.dimension == 1:
        fig, (ax,) = _figure()
        x = cfg.domain.coordinates()[:, 0]
        for m in np.linspace(0, cfg.num_steps, count).round().astype(int):
            ax.plot(x, traj.y[m], label=f"t={cfg.times[m]:.3g}")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.legend(frameon=False, fontsize=8)
    else:
        fig, axes = _figure(2)
        shape = cfg.domain.grid_points
        for ax, m in zip(axes, (0, cfg.num_steps)):
            im = ax.imshow(traj.y[m].reshape(shape).T, origin="lower", vmin=-1, vmax=1, cmap="RdBu_r")
            ax.set_title(f"t={cfg.times[m]:.3g}")
        fig.colorbar(im, ax=axes)
    return _save(fig, path, config_hash)


def plot_convergence(study, path, config_hash: str) -> Path:
    fig, (ax,) = _figure()
    ax.loglog(study.dts, study.differences, "o-", label=f"slope {study.slope:.3f}")
    ax.set_xlabel("dt")
    ax.set_ylabel(r"$\|y_{dt} - y_{dt/2}\|_{C^0L^2}$")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path, config_hash)


def plot_gradient_check(reports: dict, path, config_hash: str) -> Path:
    fig, (ax,) = _figure()
    for name, rep in reports.items():
        ax.semilogy(np.arange(1, rep.fd.size + 1), np.maximum(rep.rel_error, 1e-17), "o-", label=name)
    ax.set_xlabel("direction")
    ax.set_ylabel("relative error")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path, config_hash)
