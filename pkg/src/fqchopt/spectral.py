"""Eigenbases of Laplacian-type operators on boxes and their fractional calculus.

Every basis lives on the cell-centred ("midpoint") grid of its domain, so an
operator A and an operator B built on the same :class:`Domain` share grid
points.  The synthesis matrix ``phi`` maps coefficients to grid values and is
orthonormal with respect to the midpoint quadrature::

    cell * phi.T @ phi == I

which makes grid <-> spectral transforms exact inverses and gives a discrete
Parseval identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "ConfigurationError",
    "SpectralDomainError",
    "Domain",
    "EigenBasis",
    "SpectralField",
    "ZeroMeanField",
    "OPERATOR_KINDS",
    "build_basis",
    "apply_power",
    "frac_norm",
    "frac_inner",
    "graph_norm",
    "mean",
    "inverse_power_zero_mean",
    "shifted_resolvent",
    "random_field",
]

OPERATOR_KINDS = (
    "laplacian_neumann",
    "laplacian_dirichlet",
    "bilaplacian_neumann",
    "bilaplacian_dirichlet",
)

# coefficients of the constant mode below this are treated as zero
_ZERO_MEAN_TOL = 1e-10


class ConfigurationError(ValueError):
    """Invalid domain, operator kind or solver parameter."""


class SpectralDomainError(ValueError):
    """Field outside the subspace an operator is defined on."""


@dataclass(frozen=True)
class Domain:
    """Box ``(0, L_1) x ... x (0, L_d)`` with ``N`` grid points (= modes) per axis."""

    lengths: tuple[float, ...]
    grid_points: tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        points = tuple(int(v) for v in np.atleast_1d(self.grid_points))
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "grid_points", points)
        if len(lengths) not in (1, 2):
            raise ConfigurationError(f"dimension must be 1 or 2, got {len(lengths)}")
        if len(points) != len(lengths):
            raise ConfigurationError("lengths and grid_points must have equal length")
        if any(not np.isfinite(v) or v <= 0 for v in lengths):
            raise ConfigurationError(f"lengths must be positive, got {lengths}")
        if any(n < 4 for n in points):
            raise ConfigurationError(f"need at least 4 grid points per axis, got {points}")

    @classmethod
    def interval(cls, length: float = 1.0, n: int = 32) -> "Domain":
        return cls((length,), (n,))

    @property
    def dimension(self) -> int:
        return len(self.lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def size(self) -> int:
        return int(np.prod(self.grid_points))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.grid_points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        """Cell-centre coordinates per axis."""
        return [(np.arange(n) + 0.5) * h for n, h in zip(self.grid_points, self.spacing)]

    def coordinates(self) -> np.ndarray:
        """Grid coordinates, shape ``(size, dimension)``, C order (last axis fastest)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def _axis_basis(kind: str, length: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """1D eigenvalues (Laplacian) and grid synthesis matrix for one axis."""
    x = (np.arange(n) + 0.5) * length / n
    h = length / n
    if kind == "neumann":
        k = np.arange(n)
        phi = np.sqrt(2.0 / length) * np.cos(np.pi * np.outer(x, k) / length)
        phi[:, 0] = 1.0 / np.sqrt(length)
    else:
        k = np.arange(1, n + 1)
        phi = np.sqrt(2.0 / length) * np.sin(np.pi * np.outer(x, k) / length)
        # the highest sine mode aliases to (-1)^i on the midpoint grid
        phi[:, -1] /= np.sqrt(2.0)
    lam = (np.pi * k / length) ** 2
    # tidy up round-off so that cell * phi.T phi is the identity to machine precision
    q, _ = np.linalg.qr(phi * np.sqrt(h))
    signs = np.sign(np.sum(q * phi, axis=0))
    phi = q * signs / np.sqrt(h)
    return lam, phi


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Eigenpairs of a diagonalizable operator on a box, sorted by eigenvalue.

    ``phi[:, j]`` holds the grid values of the j-th eigenfunction (0-based
    here, so ``eigenvalues[0]`` is the paper-style ``lambda_1``).
    """

    domain: Domain
    operator_kind: str
    eigenvalues: np.ndarray
    mode_index: np.ndarray
    phi: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.eigenvalues.size

    @property
    def first_eigenvalue_zero(self) -> bool:
        return self.operator_kind.endswith("neumann")

    @property
    def cell_volume(self) -> float:
        return self.domain.cell_volume

    def to_spectral(self, grid_values: np.ndarray) -> np.ndarray:
        """Coefficients ``(v, e_j)`` of grid values (last axis = grid)."""
        return self.cell_volume * (np.asarray(grid_values, dtype=float) @ self.phi)

    def to_grid(self, coeffs: np.ndarray) -> np.ndarray:
        return np.asarray(coeffs, dtype=float) @ self.phi.T

    def powers(self, exponent: float) -> np.ndarray:
        """``lambda_j ** exponent`` with ``0 ** e = 0`` for ``e > 0`` and ``0 ** 0 = 1``."""
        if exponent == 0:
            return np.ones_like(self.eigenvalues)
        out = np.zeros_like(self.eigenvalues)
        pos = self.eigenvalues > 0
        out[pos] = self.eigenvalues[pos] ** exponent
        if exponent < 0 and not np.all(pos):
            raise SpectralDomainError("negative power of a basis with a zero eigenvalue")
        return out

    def grid_operator(self, diagonal: np.ndarray) -> np.ndarray:
        """Dense grid matrix of the operator acting as ``diagonal`` on coefficients."""
        return (self.phi * diagonal) @ self.phi.T * self.cell_volume

    def power_matrix(self, exponent: float) -> np.ndarray:
        return self.grid_operator(self.powers(exponent))

    def inverse_power_matrix(self, exponent: float) -> np.ndarray:
        """Grid matrix of ``A_0^{-exponent}`` (zero on the constant mode if lambda_1 = 0)."""
        d = np.zeros_like(self.eigenvalues)
        pos = self.eigenvalues > 0
        d[pos] = self.eigenvalues[pos] ** (-exponent)
        return self.grid_operator(d)

    @cached_property
    def constant_mode(self) -> np.ndarray:
        """Grid values of ``e_1`` for Neumann kinds."""
        return self.phi[:, 0].copy()


def build_basis(domain: Domain, kind: str) -> EigenBasis:
    """Closed-form eigenbasis of ``kind`` on ``domain``.

    Laplacian eigenvalues are tensor sums of the 1D values ``(pi k / L)^2``
    (k >= 0 for Neumann, k >= 1 for Dirichlet); bilaplacian kinds square them.
    Ties in 2D are broken by lexicographic order of the tensor mode.
    """
    if kind not in OPERATOR_KINDS:
        raise ConfigurationError(f"unsupported operator kind {kind!r}")
    if not isinstance(domain, Domain):
        raise ConfigurationError("build_basis expects a Domain")
    bc = "neumann" if kind.endswith("neumann") else "dirichlet"
    per_axis = [_axis_basis(bc, L, n) for L, n in zip(domain.lengths, domain.grid_points)]

    if domain.dimension == 1:
        lam, phi = per_axis[0]
        modes = np.arange(domain.grid_points[0])[:, None]
    else:
        (lx, px), (ly, py) = per_axis
        lam = (lx[:, None] + ly[None, :]).ravel()
        phi = np.kron(px, py)
        nx, ny = domain.grid_points
        modes = np.stack(np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij"), -1)
        modes = modes.reshape(-1, 2)
    if bc == "dirichlet":
        modes = modes + 1

    if kind.startswith("bilaplacian"):
        lam = lam**2

    # modes are already in lexicographic order, so a stable sort gives the tie-break
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    phi = np.ascontiguousarray(phi[:, order])
    modes = modes[order]
    if bc == "neumann":
        lam[0] = 0.0
    lam.setflags(write=False)
    phi.setflags(write=False)
    modes.setflags(write=False)
    return EigenBasis(domain, kind, lam, modes, phi)


class SpectralField:
    """Coefficient vector of a function in an :class:`EigenBasis`."""

    __slots__ = ("basis", "coeffs")

    def __init__(self, basis: EigenBasis, coeffs):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.shape != (basis.size,):
            raise ConfigurationError(
                f"expected {basis.size} coefficients, got shape {coeffs.shape}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("field coefficients must be finite")
        coeffs.setflags(write=False)
        self.basis = basis
        self.coeffs = coeffs

    @classmethod
    def from_grid(cls, basis: EigenBasis, values) -> "SpectralField":
        values = np.asarray(values, dtype=float).reshape(-1)
        return cls(basis, basis.to_spectral(values))

    @classmethod
    def from_function(cls, basis: EigenBasis, func) -> "SpectralField":
        """Sample ``func(x)`` (or ``func(x, y)``) at the grid points."""
        xs = basis.domain.coordinates()
        return cls.from_grid(basis, func(*xs.T))

    @classmethod
    def mode(cls, basis: EigenBasis, j: int) -> "SpectralField":
        """The eigenfunction with 0-based sorted index ``j``."""
        c = np.zeros(basis.size)
        c[j] = 1.0
        return cls(basis, c)

    def grid(self) -> np.ndarray:
        return self.basis.to_grid(self.coeffs)

    def inner(self, other: "SpectralField") -> float:
        return float(self.coeffs @ other.coeffs)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def with_coeffs(self, coeffs) -> "SpectralField":
        return type(self)(self.basis, coeffs)

    def __add__(self, other):
        return SpectralField(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return SpectralField(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float):
        return SpectralField(self.basis, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.basis, -self.coeffs)

    def __repr__(self):
        return f"SpectralField({self.basis.operator_kind}, n={self.basis.size})"


class ZeroMeanField(SpectralField):
    """Field whose constant-mode coefficient vanishes (for lambda_1 = 0 bases)."""

    __slots__ = ()

    def __init__(self, basis: EigenBasis, coeffs, *, force: bool = False):
        coeffs = np.array(coeffs, dtype=float)
        if basis.first_eigenvalue_zero:
            if force:
                coeffs[0] = 0.0
            elif abs(coeffs[0]) > _ZERO_MEAN_TOL * max(1.0, float(np.abs(coeffs).max())):
                raise SpectralDomainError(
                    f"field has nonzero mean (constant-mode coefficient {coeffs[0]:.3e})"
                )
            else:
                coeffs[0] = 0.0
        super().__init__(basis, coeffs)

    @classmethod
    def project(cls, field_: SpectralField) -> "ZeroMeanField":
        return cls(field_.basis, field_.coeffs, force=True)


def apply_power(field_: SpectralField, exponent: float) -> SpectralField:
    """``A^exponent`` applied to ``field_``; exponent 0 is the identity."""
    if exponent < 0:
        raise ConfigurationError("apply_power needs a nonnegative exponent")
    return field_.with_coeffs(field_.basis.powers(exponent) * field_.coeffs)


def frac_norm(field_: SpectralField, exponent: float) -> float:
    """Hilbert norm of ``V_A^r`` with the constant mode counted once when lambda_1 = 0."""
    return float(np.sqrt(frac_inner(field_, field_, exponent)))


def frac_inner(v: SpectralField, w: SpectralField, exponent: float) -> float:
    basis = v.basis
    d = basis.powers(exponent) ** 2
    if basis.first_eigenvalue_zero:
        d = d.copy()
        d[0] = 1.0
    return float(np.sum(d * v.coeffs * w.coeffs))


def graph_norm(field_: SpectralField, exponent: float) -> float:
    """``(||v||^2 + ||A^r v||^2)^{1/2}``."""
    d = 1.0 + field_.basis.powers(exponent) ** 2
    return float(np.sqrt(np.sum(d * field_.coeffs**2)))


def mean(field_: SpectralField) -> float:
    basis = field_.basis
    if basis.first_eigenvalue_zero:
        return float(field_.coeffs[0] / np.sqrt(basis.domain.volume))
    return float(np.sum(field_.grid()) * basis.cell_volume / basis.domain.volume)


def _admissible(field_: SpectralField) -> np.ndarray:
    basis = field_.basis
    if basis.first_eigenvalue_zero:
        scale = max(1.0, float(np.abs(field_.coeffs).max()))
        if abs(field_.coeffs[0]) > _ZERO_MEAN_TOL * scale:
            raise SpectralDomainError(
                f"operator acts on zero-mean fields only (mean coefficient {field_.coeffs[0]:.3e})"
            )
    return basis.eigenvalues > 0


def inverse_power_zero_mean(field_: SpectralField, exponent: float) -> ZeroMeanField:
    """``A_0^{-exponent}``: inverse of ``A^exponent`` on the zero-mean subspace."""
    if exponent <= 0:
        raise ConfigurationError("inverse power needs a positive exponent")
    pos = _admissible(field_)
    c = np.zeros_like(field_.coeffs)
    c[pos] = field_.basis.eigenvalues[pos] ** (-exponent) * field_.coeffs[pos]
    return ZeroMeanField(field_.basis, c)


def shifted_resolvent(field_: SpectralField, r: float, tau: float) -> SpectralField:
    """``(A_0^{-2r} + tau I)^{-1}`` on the admissible modes; norm at most 1/tau."""
    if not tau > 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    if r <= 0:
        raise ConfigurationError("shifted resolvent needs r > 0")
    pos = _admissible(field_)
    c = np.zeros_like(field_.coeffs)
    lam = field_.basis.eigenvalues[pos]
    c[pos] = field_.coeffs[pos] / (lam ** (-2.0 * r) + tau)
    cls = ZeroMeanField if field_.basis.first_eigenvalue_zero else SpectralField
    return cls(field_.basis, c)


def random_field(basis: EigenBasis, rng: np.random.Generator, decay: float = 1.0,
                 zero_mean: bool = False) -> SpectralField:
    """Random field with coefficients damped like ``(1 + lambda_j)^{-decay/2}``."""
    c = rng.standard_normal(basis.size) / (1.0 + basis.eigenvalues) ** (decay / 2)
    if zero_mean and basis.first_eigenvalue_zero:
        c[0] = 0.0
    return SpectralField(basis, c)


def stack_grid(fields: Sequence[SpectralField]) -> np.ndarray:
    return np.stack([f.grid() for f in fields])
