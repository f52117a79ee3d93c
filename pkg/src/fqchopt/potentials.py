"""Double-well nonlinearities and the deep-quench family.

The logarithmic part ``h`` and the indicator of ``[-1, 1]`` are the convex
parts; the concave part ``f2(v) = -c1 v^2`` is shared by the logarithmic and
double obstacle potentials.  All functions are vectorized over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PotentialDomainError",
    "Safeguard",
    "QuenchSchedule",
    "SmoothPart",
    "h",
    "h_prime",
    "h_second",
    "safe_h_prime",
    "safe_h_second",
    "quench_potential",
    "yosida_indicator",
    "yosida_envelope",
    "f_reg",
    "f_reg_prime",
    "f_log",
    "f_log_prime",
    "f_obs",
    "LN2",
]

LN2 = float(np.log(2.0))
BARRIER_MARGIN = 1e-12


class PotentialDomainError(ValueError):
    """Argument outside the effective domain of a potential (value would be +inf)."""

    def __init__(self, message: str, value):
        super().__init__(f"{message}: {value!r}")
        self.value = value


@dataclass
class Safeguard:
    """Counts arguments that had to be pulled back inside ``(-1, 1)``."""

    clamped: int = 0

    def record(self, n: int) -> None:
        self.clamped += int(n)


def _offender(v: np.ndarray, mask: np.ndarray):
    bad = np.asarray(v)[mask]
    return float(bad.flat[0])


def _xlog1p(v: np.ndarray) -> np.ndarray:
    # (1 + v) log(1 + v) with 0 log 0 = 0; log1p keeps h ~ v^2 accurate near 0
    out = np.zeros_like(v)
    pos = v > -1
    out[pos] = (1.0 + v[pos]) * np.log1p(v[pos])
    return out


def h(v):
    """``(1+v)ln(1+v) + (1-v)ln(1-v)`` on ``[-1, 1]``; equals ``2 ln 2`` at the endpoints."""
    v = np.asarray(v, dtype=float)
    bad = np.abs(v) > 1
    if np.any(bad):
        raise PotentialDomainError("h is +inf outside [-1, 1]", _offender(v, bad))
    out = _xlog1p(v) + _xlog1p(-v)
    return out if out.ndim else float(out)


def _check_open(v: np.ndarray, name: str) -> None:
    bad = np.abs(v) >= 1
    if np.any(bad):
        raise PotentialDomainError(f"{name} blows up at |v| >= 1", _offender(v, bad))


def h_prime(v):
    v = np.asarray(v, dtype=float)
    _check_open(v, "h'")
    out = np.log1p(v) - np.log1p(-v)
    return out if out.ndim else float(out)


def h_second(v):
    v = np.asarray(v, dtype=float)
    _check_open(v, "h''")
    out = 2.0 / (1.0 - v * v)
    return out if out.ndim else float(out)


def _pull_inside(v, margin: float, guard: Safeguard | None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    lim = 1.0 - margin
    mask = np.abs(v) > lim
    if np.any(mask):
        if guard is not None:
            guard.record(np.count_nonzero(mask))
        v = np.clip(v, -lim, lim)
    return v


def safe_h_prime(v, guard: Safeguard | None = None, margin: float = BARRIER_MARGIN):
    """``h'`` with arguments clamped to ``|v| <= 1 - margin``."""
    v = _pull_inside(v, margin, guard)
    return np.log1p(v) - np.log1p(-v)


def safe_h_second(v, guard: Safeguard | None = None, margin: float = BARRIER_MARGIN):
    v = _pull_inside(v, margin, guard)
    return 2.0 / ((1.0 - v) * (1.0 + v))


@dataclass(frozen=True)
class QuenchSchedule:
    """Scaling ``phi(alpha)`` of the deep-quench family and the alpha sequence."""

    phi_kind: str = "linear"
    power: float = 1.0
    alpha_sequence: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025, 0.0125)

    def __post_init__(self):
        if self.phi_kind not in ("linear", "power"):
            raise ValueError(f"unknown phi kind {self.phi_kind!r}")
        if self.phi_kind == "power" and self.power < 1:
            raise ValueError("phi(alpha) = alpha^p needs p >= 1")
        seq = tuple(float(a) for a in self.alpha_sequence)
        object.__setattr__(self, "alpha_sequence", seq)
        if any(a <= 0 for a in seq):
            raise ValueError("alpha values must be positive")
        if any(b >= a for a, b in zip(seq, seq[1:])):
            raise ValueError("alpha_sequence must be strictly decreasing")

    def phi(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        out = alpha if self.phi_kind == "linear" else alpha**self.power
        return out if out.ndim else float(out)

    def phi_prime(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        if self.phi_kind == "linear":
            out = np.ones_like(alpha)
        else:
            out = self.power * alpha ** (self.power - 1)
        return out if out.ndim else float(out)


def quench_potential(v, alpha: float, schedule: QuenchSchedule | None = None):
    """Value, first and second derivative of ``h^alpha = phi(alpha) h``."""
    schedule = schedule or QuenchSchedule()
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    s = schedule.phi(alpha)
    return s * h(v), s * h_prime(v), s * h_second(v)


def yosida_indicator(v, lam: float):
    """Yosida approximation of the subdifferential of the indicator of ``[-1, 1]``."""
    if not lam > 0:
        raise ValueError("Yosida parameter must be positive")
    v = np.asarray(v, dtype=float)
    out = (v - np.clip(v, -1.0, 1.0)) / lam
    return out if out.ndim else float(out)


def yosida_indicator_slope(v, lam: float) -> np.ndarray:
    """Derivative of :func:`yosida_indicator` (a.e.): ``1/lam`` outside ``[-1, 1]``."""
    v = np.asarray(v, dtype=float)
    return np.where(np.abs(v) > 1.0, 1.0 / lam, 0.0)


def yosida_envelope(v, lam: float):
    """Moreau envelope of the indicator: ``dist(v, [-1, 1])^2 / (2 lam)``."""
    v = np.asarray(v, dtype=float)
    d = v - np.clip(v, -1.0, 1.0)
    out = d * d / (2.0 * lam)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SmoothPart:
    """Concave smooth part ``f2(v) = -c1 v^2``."""

    c1: float = 1.0

    def __post_init__(self):
        if not self.c1 > 0:
            raise ValueError("c1 must be positive")

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant of ``f2'``."""
        return 2.0 * self.c1

    def value(self, v):
        return -self.c1 * np.asarray(v, dtype=float) ** 2

    def prime(self, v):
        return -2.0 * self.c1 * np.asarray(v, dtype=float)

    def second(self, v):
        return np.full_like(np.asarray(v, dtype=float), -2.0 * self.c1)


def f_reg(v):
    v = np.asarray(v, dtype=float)
    return 0.25 * (v * v - 1.0) ** 2


def f_reg_prime(v):
    v = np.asarray(v, dtype=float)
    return v**3 - v


def f_log(v, c1: float = 1.0):
    return h(v) - c1 * np.asarray(v, dtype=float) ** 2


def f_log_prime(v, c1: float = 1.0):
    return h_prime(v) - 2.0 * c1 * np.asarray(v, dtype=float)


def f_obs(v, c1: float = 1.0):
    v = np.asarray(v, dtype=float)
    bad = np.abs(v) > 1
    if np.any(bad):
        raise PotentialDomainError("f_obs is +inf outside [-1, 1]", _offender(v, bad))
    out = -c1 * v * v
    return out if out.ndim else float(out)
