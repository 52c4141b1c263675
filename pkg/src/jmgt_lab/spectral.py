"""Dirichlet-Laplacian eigenbasis on 1D/2D rectangles.

The basis functions are the L2-orthonormal sines

    e_m(x) = prod_i sqrt(2/L_i) sin(m_i pi x_i / L_i),    m_i = 1..N,

with eigenvalues lambda_m = sum_i (pi m_i / L_i)^2.  Modes are ordered
row-major over (m_1, m_2).  Because the basis is orthonormal, L2 inner
products are plain dot products of coefficient vectors.

Nonlinear terms are evaluated pseudo-spectrally on the interior grid
x_j = j L / (M + 1), j = 1..M, with M = round(padding * N) per axis.  The
analysis transform uses the discrete sine orthogonality

    sum_{j=1}^{M} sin(a pi j/(M+1)) sin(b pi j/(M+1)) = (M+1)/2 delta_ab,

so synthesis followed by analysis is the identity for any M >= N.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ConfigurationError",
    "NumericalFailure",
    "SpectralBasis",
    "SpectralField",
    "PhysicalField",
    "Transform",
    "build_basis",
    "apply_power_A",
    "to_physical",
    "to_spectral",
    "pointwise_multiply",
    "l2_inner",
    "l2_norm",
]

DEFAULT_PADDING = 1.5


class ConfigurationError(ValueError):
    """Invalid model, basis or run configuration."""


class NumericalFailure(ArithmeticError):
    """Non-finite values or blow-up during a computation."""


def grid_size(n_modes: int, padding: float) -> int:
    if padding < 1:
        raise ConfigurationError(f"padding must be >= 1, got {padding}")
    return max(n_modes, int(round(padding * n_modes)))


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Sine eigenbasis of the Dirichlet Laplacian on a rectangle.

    Attributes
    ----------
    dim : int
        Spatial dimension (1 or 2).
    N : int
        Modes per axis.
    lengths : tuple of float
        Domain length per axis.
    eigenvalues : ndarray, shape (N**dim,)
        lambda_m in row-major mode order.
    mode_indices : ndarray, shape (N**dim, dim)
        Integer wavenumbers (m_1, ..., m_dim) of each mode.
    """

    dim: int
    N: int
    lengths: tuple[float, ...]
    eigenvalues: np.ndarray = field(repr=False)
    mode_indices: np.ndarray = field(repr=False)
    _transforms: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_modes(self) -> int:
        return self.N**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.dim

    def same_as(self, other: "SpectralBasis") -> bool:
        return self is other or (
            self.dim == other.dim and self.N == other.N and self.lengths == other.lengths
        )

    def transform(self, padding: float = DEFAULT_PADDING) -> "Transform":
        """Cached synthesis/analysis operators for a given padding."""
        return self.transform_for_grid(grid_size(self.N, padding))

    def transform_for_grid(self, M: int) -> "Transform":
        tr = self._transforms.get(M)
        if tr is None:
            tr = Transform(self, M)
            self._transforms[M] = tr
        return tr

    def field(self, coeffs) -> "SpectralField":
        return SpectralField(self, np.asarray(coeffs, dtype=float))

    def zeros(self) -> "SpectralField":
        return SpectralField(self, np.zeros(self.n_modes))

    def unit(self, index: int) -> "SpectralField":
        """Field with a unit coefficient on mode ``index`` (0-based, row-major)."""
        c = np.zeros(self.n_modes)
        c[index] = 1.0
        return SpectralField(self, c)

    def project(self, func, padding: float = 4.0) -> "SpectralField":
        """Spectral coefficients of ``func`` sampled on a padded grid.

        ``func`` receives one coordinate array per axis (meshgrid, 'ij').
        """
        tr = self.transform(padding)
        samples = np.asarray(func(*tr.mesh()), dtype=float)
        return to_spectral(PhysicalField(self, tr.M, samples.reshape(-1)), self)


def build_basis(dim: int, N: int, L: float | Sequence[float]) -> SpectralBasis:
    """Build the sine basis on ``[0, L_1] x ... x [0, L_dim]``."""
    if dim not in (1, 2):
        raise ConfigurationError(f"dim must be 1 or 2, got {dim}")
    if int(N) != N or N < 1:
        raise ConfigurationError(f"N must be a positive integer, got {N}")
    N = int(N)
    try:
        lengths = tuple(float(x) for x in np.broadcast_to(np.asarray(L, dtype=float), (dim,)))
    except ValueError:
        raise ConfigurationError(f"expected {dim} domain length(s), got {L!r}") from None
    if not all(np.isfinite(x) and x > 0 for x in lengths):
        raise ConfigurationError(f"domain lengths must be positive, got {lengths}")
    m = np.arange(1, N + 1)
    grids = np.meshgrid(*([m] * dim), indexing="ij")
    idx = np.stack([g.reshape(-1) for g in grids], axis=1)
    lam = np.zeros(idx.shape[0])
    for i, Li in enumerate(lengths):
        lam += (np.pi * idx[:, i] / Li) ** 2
    idx.setflags(write=False)
    lam.setflags(write=False)
    return SpectralBasis(dim, N, lengths, lam, idx)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real coefficient vector in a :class:`SpectralBasis`."""

    basis: SpectralBasis
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (self.basis.n_modes,):
            raise ValueError(
                f"expected {self.basis.n_modes} coefficients, got shape {self.coeffs.shape}"
            )

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_basis(self, other)
        return SpectralField(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_basis(self, other)
        return SpectralField(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, s: float) -> "SpectralField":
        return SpectralField(self.basis, self.coeffs * s)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Samples on the interior collocation grid, flattened row-major."""

    basis: SpectralBasis
    M: int
    samples: np.ndarray

    def __post_init__(self):
        if self.samples.shape != (self.M**self.basis.dim,):
            raise ValueError(
                f"expected {self.M**self.basis.dim} samples, got shape {self.samples.shape}"
            )


class Transform:
    """Dense sine synthesis/analysis between N modes and M grid points per axis."""

    def __init__(self, basis: SpectralBasis, M: int):
        if M < basis.N:
            raise ConfigurationError(f"grid size {M} below mode count {basis.N}")
        self.basis = basis
        self.M = M
        self.points = []
        self.synthesis = []
        self.analysis = []
        m = np.arange(1, basis.N + 1)
        j = np.arange(1, M + 1)
        for L in basis.lengths:
            x = j * L / (M + 1)
            S = np.sqrt(2.0 / L) * np.sin(np.pi * np.outer(j, m) / (M + 1))
            self.points.append(x)
            self.synthesis.append(S)  # (M, N)
            self.analysis.append((L / (M + 1)) * S.T)  # (N, M)

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.points, indexing="ij")

    @property
    def cell_volume(self) -> float:
        return float(np.prod([L / (self.M + 1) for L in self.basis.lengths]))

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Coefficients (..., n_modes) -> samples (..., M**dim)."""
        b = self.basis
        if b.dim == 1:
            return coeffs @ self.synthesis[0].T
        lead = coeffs.shape[:-1]
        C = coeffs.reshape(lead + (b.N, b.N))
        G = self.synthesis[0] @ C @ self.synthesis[1].T
        return G.reshape(lead + (self.M * self.M,))

    def analyze(self, samples: np.ndarray) -> np.ndarray:
        """Samples (..., M**dim) -> coefficients (..., n_modes), truncated to N."""
        b = self.basis
        if b.dim == 1:
            return samples @ self.analysis[0].T
        lead = samples.shape[:-1]
        G = samples.reshape(lead + (self.M, self.M))
        C = self.analysis[0] @ G @ self.analysis[1].T
        return C.reshape(lead + (b.n_modes,))


def _check_basis(f, g) -> None:
    if not f.basis.same_as(g.basis):
        raise ValueError("fields live in different bases")


def apply_power_A(f: SpectralField, p: float) -> SpectralField:
    """Apply A**p (p = 1/2 or 1) diagonally in the eigenbasis."""
    if p == 1:
        scale = f.basis.eigenvalues
    elif p == 0.5:
        scale = np.sqrt(f.basis.eigenvalues)
    else:
        scale = f.basis.eigenvalues**p
    return SpectralField(f.basis, scale * f.coeffs)


def to_physical(f: SpectralField, padding: float = DEFAULT_PADDING) -> PhysicalField:
    tr = f.basis.transform(padding)
    return PhysicalField(f.basis, tr.M, tr.synthesize(f.coeffs))


def to_spectral(g: PhysicalField, target_basis: SpectralBasis | None = None) -> SpectralField:
    """Discrete sine analysis of ``g``; modes above ``target_basis.N`` are dropped."""
    basis = g.basis if target_basis is None else target_basis
    if basis.dim != g.basis.dim or basis.lengths != g.basis.lengths:
        raise ValueError("target basis lives on a different domain")
    if basis.N > g.M:
        raise ConfigurationError(f"target N={basis.N} exceeds grid resolution M={g.M}")
    tr = basis.transform_for_grid(g.M)
    return SpectralField(basis, tr.analyze(g.samples))


def pointwise_multiply(a: PhysicalField, b: PhysicalField) -> PhysicalField:
    if a.M != b.M or not a.basis.same_as(b.basis):
        raise ValueError("grid mismatch in pointwise_multiply")
    return PhysicalField(a.basis, a.M, a.samples * b.samples)


def l2_inner(f: SpectralField, g: SpectralField) -> float:
    _check_basis(f, g)
    return float(f.coeffs @ g.coeffs)


def l2_norm(f: SpectralField) -> float:
    return float(np.sqrt(f.coeffs @ f.coeffs))
