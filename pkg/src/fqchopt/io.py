"""Output files: hash-stamped CSV tables, trajectory dumps and JSON summaries.

Every text file starts with one comment line ``# fqchopt <version> config=<hash>``;
JSON files carry the same data as their first two keys.  Floats are written
with ``repr`` so that identical runs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from . import __version__

__all__ = [
    "header_line",
    "write_csv",
    "write_json",
    "write_energy",
    "write_spectral",
    "write_continuation",
    "write_rate_table",
    "write_trajectory",
    "write_adjoint",
    "read_csv",
]


def header_line(config_hash: str) -> str:
    return f"# fqchopt {__version__} config={config_hash}"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows, config_hash: str) -> Path:
    """Write ``rows`` (dicts or sequences) under a header comment and a column line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(header_line(config_hash) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            vals = [row[c] for c in columns] if isinstance(row, dict) else list(row)
            w.writerow([_fmt(v) for v in vals])
    return path


def read_csv(path) -> tuple[str, list[str], np.ndarray]:
    """Inverse of :func:`write_csv` for numeric tables: ``(header, columns, data)``."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        reader = csv.reader(fh)
        columns = next(reader)
        data = np.array([[float(v) for v in row] for row in reader], dtype=float)
    return header, columns, data.reshape(-1, len(columns))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    return obj


def write_json(path, payload: dict, config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"fqchopt_version": __version__, "config_hash": config_hash}
    body.update(_clean(payload))
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=2, sort_keys=False, allow_nan=False)
        fh.write("\n")
    return path


def write_energy(path, report, config_hash: str) -> Path:
    rows = zip(report.times, report.energy, report.diss_A, report.diss_tau)
    return write_csv(path, ["t", "E", "dissA", "dissTau"], rows, config_hash)


def write_spectral(path, field, config_hash: str) -> Path:
    b = field.basis
    rows = zip(range(b.size), b.eigenvalues, field.coeffs)
    return write_csv(path, ["j", "lambda_j", "coeff"], rows, config_hash)


def write_continuation(path, report, config_hash: str) -> Path:
    cols = ["alpha", "cost", "adapted_cost", "grad_norm", "vi_residual", "state_gap", "iters"]
    return write_csv(path, cols, report.rows(), config_hash)


def write_rate_table(path, fit, config_hash: str) -> Path:
    return write_csv(path, ["param", "error", "ratio"], fit.rows(), config_hash)


def _coord_columns(coords: np.ndarray) -> list[str]:
    return ["x", "y"][: coords.shape[1]]


def write_trajectory(directory, traj, config_hash: str, stride: int = 1) -> Path:
    """One CSV per stored time node (grid coordinates, ``y``, ``mu``, ``u``) plus ``manifest.json``.

    ``mu`` is defined from the first step on; the initial snapshot leaves it blank.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cfg = traj.cfg
    coords = cfg.domain.coordinates()
    cols = _coord_columns(coords) + ["y", "mu", "u"]
    files = []
    for m in range(0, cfg.num_steps + 1, max(1, stride)):
        mu = traj.mu[m - 1] if m >= 1 else np.full(cfg.n, np.nan)
        rows = ([*c, y, ("" if np.isnan(v) else v), u] for c, y, v, u in zip(coords, traj.y[m], mu, traj.u[m]))
        name = f"snapshot_{m:05d}.csv"
        write_csv(directory / name, cols, rows, config_hash)
        files.append({"index": m, "t": float(cfg.times[m]), "file": name})
    write_json(directory / "manifest.json", {
        "kind": "state",
        "alpha": traj.alpha,
        "dt": cfg.dt,
        "T": cfg.T,
        "grid_points": list(cfg.domain.grid_points),
        "lengths": list(cfg.domain.lengths),
        "snapshots": files,
    }, config_hash)
    return directory


def write_adjoint(directory, adjoint, cfg, config_hash: str, stride: int = 1) -> Path:
    """Adjoint dump in the state-dump layout with the multiplier ``Lambda = psi2 q`` added."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    coords = cfg.domain.coordinates()
    cols = _coord_columns(coords) + ["q", "p", "Lambda"]
    files = []
    for m in range(0, cfg.num_steps + 1, max(1, stride)):
        rows = ([*c, q, p, lam] for c, q, p, lam in
                zip(coords, adjoint.q[m], adjoint.p[m], adjoint.lambda_mult[m]))
        name = f"adjoint_{m:05d}.csv"
        write_csv(directory / name, cols, rows, config_hash)
        files.append({"index": m, "t": float(cfg.times[m]), "file": name})
    write_json(directory / "manifest.json", {"kind": f"adjoint-{adjoint.kind}", "snapshots": files},
               config_hash)
    return directory


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
