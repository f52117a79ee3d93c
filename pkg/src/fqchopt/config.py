"""Scenario configuration: JSON parsing, presets, seeding and the config hash."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .analysis import smooth_control
from .optimize import ControlConstraints, CostConfig
from .potentials import QuenchSchedule, SmoothPart
from .spectral import ConfigurationError, Domain, build_basis, random_field
from .state import InitialState, ModelConfig

__all__ = ["PRESETS", "Scenario", "load_scenario", "parse_scenario", "config_hash", "SEED_ENV"]

SEED_ENV = "FQCHOPT_SEED"

_A9 = {
    "domain": {"lengths": [1.0], "grid_points": [32]},
    "operators": {"A": "laplacian_neumann", "B": "laplacian_neumann"},
    "model": {"r": 0.5, "sigma": 0.5, "tau": 0.1, "alpha": 0.1, "dt": 1e-3, "T": 0.25,
              "c1": 1.0, "yosida_lambda": 1e-6, "tol_newton": 1e-10, "max_newton": 50},
    "schedule": {"phi": "linear", "power": 1.0, "alphas": [0.2, 0.1, 0.05, 0.025, 0.0125]},
    "initial": {"kind": "cosine", "amplitude": 0.2, "mean": 0.0, "modes": [1]},
    "control": {"kind": "zero", "amplitude": 0.0},
    "cost": {"beta1": 1.0, "beta2": 1.0, "beta3": 0.01, "y_Omega": 0.1, "y_Q": 0.0},
    "constraints": {"rho1": 2.0, "rho2": 1e6},
    "optimize": {"max_iter": 500, "tol_stat": None, "adapted": True, "gradient_path": "discrete",
                 "n_probes": 50},
    "study": {"oracle_lambda": 1e-6, "directions": 5, "eps": 1e-5, "grad_tol": 1e-4,
              "continuous_grad_tol": 1e-3, "rate_min_slope": 0.45, "bound_safety": 1.1,
              "oracle_grid_points": 8, "oracle_steps": 4, "oracle_params": 3, "oracle_points": 21,
              "oracle_tol": 0.01, "oracle_alpha": 1.0, "oracle_profile": "auto",
              "check_continuous": False, "pairs": 10, "pair_safety": 2.0,
              "dt_study": [4e-3, 2e-3, 1e-3, 5e-4], "dt_study_T": 0.5, "snapshot_stride": 10,
              "energy_factor": 10.0},
    "seed": 0,
}

PRESETS = {
    "a9-1d": _A9,
    "dirichlet-1d": {"operators": {"A": "laplacian_dirichlet", "B": "laplacian_neumann"}},
}

# preset each named preset builds on
_BASE = {"a9-1d": None, "dirichlet-1d": "a9-1d"}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in out:
            raise ConfigurationError(f"unknown key '{path}{k}'")
        if isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise ConfigurationError(f"'{path}{k}' must be an object")
            out[k] = _merge(out[k], v, f"{path}{k}.")
        else:
            out[k] = v
    return out


def _preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset '{name}' (have {sorted(PRESETS)})")
    parent = _BASE[name]
    return copy.deepcopy(PRESETS[name]) if parent is None else _merge(_preset(parent), PRESETS[name])


def config_hash(resolved: dict) -> str:
    """64-bit hex digest of the stable JSON serialization (output location excluded)."""
    body = {k: v for k, v in resolved.items() if k != "output"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class Scenario:
    """A fully resolved scenario with builders for the solver objects."""

    data: dict
    preset: str
    output: str | None = None

    @property
    def hash(self) -> str:
        return config_hash(self.data)

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])

    def section(self, name: str) -> dict:
        return self.data[name]

    def model(self, **overrides) -> ModelConfig:
        d, ops, m, s = self.data["domain"], self.data["operators"], self.data["model"], self.data["schedule"]
        grid = overrides.pop("grid_points", d["grid_points"])
        dom = Domain(tuple(float(x) for x in d["lengths"]), tuple(int(n) for n in grid))
        sched = QuenchSchedule(phi_kind=s["phi"], power=float(s["power"]),
                               alpha_sequence=tuple(float(a) for a in s["alphas"]))
        kw = dict(r=m["r"], sigma=m["sigma"], tau=m["tau"], alpha=m["alpha"], dt=m["dt"], T=m["T"],
                  yosida_lambda=m["yosida_lambda"], tol_newton=m["tol_newton"], max_newton=m["max_newton"])
        kw.update(overrides)
        return ModelConfig(build_basis(dom, ops["A"]), build_basis(dom, ops["B"]),
                           schedule=sched, smooth=SmoothPart(float(m["c1"])), **kw)

    def initial(self, cfg: ModelConfig) -> InitialState:
        sec = self.data["initial"]
        kind = sec.get("kind")
        x = cfg.domain.coordinates()
        mean = float(sec.get("mean", 0.0))
        amp = float(sec.get("amplitude", 0.0))
        if kind == "constant":
            y0 = np.full(cfg.n, mean)
        elif kind == "cosine":
            modes = list(sec.get("modes", [1]))
            modes += [0] * (cfg.domain.dimension - len(modes))
            bump = np.ones(cfg.n)
            for ax, (k, L) in enumerate(zip(modes, cfg.domain.lengths)):
                bump = bump * np.cos(np.pi * k * x[:, ax] / L)
            y0 = mean + amp * bump
        elif kind == "random_smooth":
            seed = sec.get("seed", self.seed)
            f = random_field(cfg.basis_B, np.random.default_rng(seed), decay=2.0, zero_mean=True)
            g = f.grid()
            y0 = mean + amp * g / max(np.max(np.abs(g)), np.finfo(float).tiny)
        else:
            raise ConfigurationError(f"unknown initial kind '{kind}'")
        try:
            return InitialState.from_grid(y0)
        except ConfigurationError as exc:
            raise ConfigurationError(f"initial state: {exc}") from None

    def control(self, cfg: ModelConfig) -> np.ndarray:
        sec = self.data["control"]
        kind = sec.get("kind")
        shape = (cfg.num_steps + 1, cfg.n)
        amp = float(sec.get("amplitude", 0.0))
        if kind == "zero":
            return np.zeros(shape)
        if kind == "constant":
            return np.full(shape, amp)
        if kind == "random_smooth":
            return smooth_control(cfg, self.rng(1), amp)
        raise ConfigurationError(f"unknown control kind '{kind}'")

    def oracle_instance(self):
        """``(cfg, init, profile)`` of the tiny instance for the brute-force control oracle."""
        study = self.data["study"]
        base = self.model()
        dim = base.domain.dimension
        cfg = self.model(grid_points=[int(study["oracle_grid_points"])] * dim,
                         dt=base.T / int(study["oracle_steps"]), alpha=float(study["oracle_alpha"]))
        kind = study["oracle_profile"]
        if kind == "auto":
            # a spatially constant control cannot move the state when A has a zero eigenvalue
            kind = "cosine" if cfg.operators.zero_mean else "constant"
        if kind == "constant":
            profile = None
        elif kind == "cosine":
            x = cfg.domain.coordinates()
            profile = np.prod(np.cos(np.pi * x / np.asarray(cfg.domain.lengths)), axis=1)
        else:
            raise ConfigurationError(f"unknown oracle profile '{kind}'")
        return cfg, self.initial(cfg), profile

    def cost(self) -> CostConfig:
        c = self.data["cost"]
        return CostConfig(c["beta1"], c["beta2"], c["beta3"], c["y_Omega"], c["y_Q"])

    def constraints(self) -> ControlConstraints:
        c = self.data["constraints"]
        return ControlConstraints(c["rho1"], c["rho2"])

    @property
    def alphas(self) -> list[float]:
        return [float(a) for a in self.data["schedule"]["alphas"]]


def parse_scenario(raw: dict, env: dict | None = None) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigurationError("configuration must be a JSON object")
    raw = dict(raw)
    preset = raw.pop("preset", "a9-1d")
    output = raw.pop("output", None)
    data = _merge(_preset(preset), raw)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            data["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigurationError(f"{SEED_ENV} must be an integer") from None
    scen = Scenario(data, preset, output)
    try:  # validate eagerly so that bad values surface as configuration errors
        cfg = scen.model()
        scen.initial(cfg)
        scen.control(cfg)
        scen.cost()
        scen.constraints()
        scen.oracle_instance()
    except ConfigurationError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigurationError(f"invalid configuration: {exc}") from None
    return scen


def load_scenario(path, env: dict | None = None) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON ({exc.msg})") from None
    return parse_scenario(raw, env)
