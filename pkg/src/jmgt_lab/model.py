"""Model parameters, the quadratic nonlinearity and the energy functionals.

The JMGT equation is integrated in the form

    tau u_ttt + u_tt + c^2 A u + b A u_t = G(u),    G(u) = 2k (u u_tt + u_t^2),

with b = delta + tau c^2, and the Westervelt limit (tau = 0) as

    u_tt + c^2 A u + delta A u_t = G(u).

All energies are evaluated from spectral coefficients (Parseval), so no
quadrature error enters the diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (
    DEFAULT_PADDING,
    ConfigurationError,
    NumericalFailure,
    SpectralBasis,
    SpectralField,
)

__all__ = [
    "ModelParams",
    "JmgtState",
    "WestState",
    "EnergySample",
    "compute_G",
    "nonlinearity",
    "westervelt_acceleration",
    "well_prepared_acceleration",
    "energy_E0",
    "energy_E1",
    "energy_E1_expanded",
    "energy_E",
    "energy_calE",
    "energy_frakE",
    "weighted_norm_sq",
    "energy_sample",
    "energy_table",
]


@dataclass(frozen=True)
class ModelParams:
    """Physical constants; ``b_tau`` and ``gamma_tau`` are derived."""

    tau: float
    c: float = 1.0
    delta: float = 1.0
    k: float = 0.0

    def __post_init__(self):
        if not self.tau >= 0:
            raise ConfigurationError(f"tau must be >= 0, got {self.tau}")
        if not self.c > 0:
            raise ConfigurationError(f"c must be > 0, got {self.c}")
        if not self.delta > 0:
            raise ConfigurationError(f"delta must be > 0, got {self.delta}")
        if not np.isfinite(self.k):
            raise ConfigurationError(f"k must be finite, got {self.k}")

    @property
    def b_tau(self) -> float:
        return self.delta + self.tau * self.c**2

    @property
    def gamma_tau(self) -> float:
        return 1.0 - self.tau * self.c**2 / self.b_tau

    def with_tau(self, tau: float) -> "ModelParams":
        return ModelParams(tau, self.c, self.delta, self.k)


@dataclass(frozen=True, eq=False)
class JmgtState:
    """Snapshot (u, u_t, u_tt) at time t."""

    t: float
    u: SpectralField
    v: SpectralField
    w: SpectralField

    def __post_init__(self):
        b = self.u.basis
        if not (b.same_as(self.v.basis) and b.same_as(self.w.basis)):
            raise ValueError("state components live in different bases")

    @property
    def basis(self) -> SpectralBasis:
        return self.u.basis

    def as_array(self) -> np.ndarray:
        return np.stack([self.u.coeffs, self.v.coeffs, self.w.coeffs])

    @classmethod
    def from_array(cls, basis: SpectralBasis, t: float, U: np.ndarray) -> "JmgtState":
        return cls(t, basis.field(U[0]), basis.field(U[1]), basis.field(U[2]))

    def scaled(self, s: float) -> "JmgtState":
        return JmgtState(self.t, self.u * s, self.v * s, self.w * s)


@dataclass(frozen=True, eq=False)
class WestState:
    """Snapshot (u, u_t) of the Westervelt equation at time t."""

    t: float
    u: SpectralField
    v: SpectralField

    def __post_init__(self):
        if not self.u.basis.same_as(self.v.basis):
            raise ValueError("state components live in different bases")

    @property
    def basis(self) -> SpectralBasis:
        return self.u.basis

    def as_array(self) -> np.ndarray:
        return np.stack([self.u.coeffs, self.v.coeffs])

    @classmethod
    def from_array(cls, basis: SpectralBasis, t: float, U: np.ndarray) -> "WestState":
        return cls(t, basis.field(U[0]), basis.field(U[1]))


@dataclass(frozen=True)
class EnergySample:
    t: float
    E0: float
    E1: float
    E: float
    calE: float
    frakE: float
    h0tau: float
    h1tau: float
    h2tau: float

    FIELDS = ("t", "E0", "E1", "E", "calE", "frakE", "h0tau", "h1tau", "h2tau")

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, f) for f in self.FIELDS)


# ---------------------------------------------------------------- nonlinearity


def nonlinearity(basis: SpectralBasis, k: float, u, v, w, padding: float = DEFAULT_PADDING):
    """Coefficients of 2k (u w + v^2), computed pseudo-spectrally.

    ``u, v, w`` are coefficient arrays with trailing axis n_modes.
    """
    if k == 0:
        return np.zeros(np.broadcast_shapes(np.shape(u), np.shape(v), np.shape(w)))
    tr = basis.transform(padding)
    phys = tr.synthesize(np.stack(np.broadcast_arrays(u, v, w)))
    out = tr.analyze(2.0 * k * (phys[0] * phys[2] + phys[1] ** 2))
    if not np.all(np.isfinite(out)):
        raise NumericalFailure("non-finite value in nonlinearity")
    return out


def compute_G(s: JmgtState, params: ModelParams, padding: float = DEFAULT_PADDING) -> SpectralField:
    """Spectral projection of G(u) = 2k (u u_tt + u_t^2)."""
    g = nonlinearity(s.basis, params.k, s.u.coeffs, s.v.coeffs, s.w.coeffs, padding)
    return SpectralField(s.basis, g)


def westervelt_acceleration(
    basis: SpectralBasis,
    params: ModelParams,
    u: np.ndarray,
    v: np.ndarray,
    forcing: np.ndarray | None = None,
    padding: float = DEFAULT_PADDING,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve the Westervelt equation for u_tt at fixed (u, u_t).

    The quasilinear term makes the acceleration implicit:

        w = -c^2 A u - delta A v + f + P[2k (v^2 + u w)].

    This is a linear system in ``w``; it is solved as a dense Galerkin system
    on the padded grid.  Returns ``(w, G)`` with G = 2k P[u w + v^2].
    """
    lam = basis.eigenvalues
    rhs = -params.c**2 * lam * u - params.delta * lam * v
    if forcing is not None:
        rhs = rhs + forcing
    if params.k == 0:
        return rhs, np.zeros_like(rhs)
    tr = basis.transform(padding)
    S, P = _dense_operators(tr)
    uphys = S @ u
    vphys = S @ v
    rhs = rhs + P @ (2.0 * params.k * vphys**2)
    K = np.eye(basis.n_modes) - P @ ((2.0 * params.k * uphys)[:, None] * S)
    try:
        w = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("degenerate quasilinear factor 1 - 2ku") from exc
    if not np.all(np.isfinite(w)):
        raise NumericalFailure("non-finite Westervelt acceleration")
    G = P @ (2.0 * params.k * (uphys * (S @ w) + vphys**2))
    return w, G


def _dense_operators(tr) -> tuple[np.ndarray, np.ndarray]:
    ops = getattr(tr, "_dense", None)
    if ops is None:
        if tr.basis.dim == 1:
            ops = (tr.synthesis[0], tr.analysis[0])
        else:
            ops = (
                np.kron(tr.synthesis[0], tr.synthesis[1]),
                np.kron(tr.analysis[0], tr.analysis[1]),
            )
        tr._dense = ops
    return ops


def well_prepared_acceleration(
    u0: SpectralField, u1: SpectralField, params: ModelParams, padding: float = DEFAULT_PADDING
) -> SpectralField:
    """u_tt(0) compatible with the Westervelt equation at t = 0."""
    w, _ = westervelt_acceleration(
        u0.basis, params.with_tau(0.0), u0.coeffs, u1.coeffs, padding=padding
    )
    return SpectralField(u0.basis, w)


# -------------------------------------------------------------------- energies


def _components(s):
    u = s.u.coeffs
    v = s.v.coeffs
    w = s.w.coeffs if isinstance(s, JmgtState) else np.zeros_like(u)
    return s.basis.eigenvalues, u, v, w


def _E0(lam, u, v, p: ModelParams):
    return 0.5 * np.sum(v * v, -1) + 0.5 * p.c**2 * np.sum(lam * u * u, -1)


def _E1(lam, u, v, w, p: ModelParams):
    b = p.b_tau
    r = p.c**2 / b
    z = v + r * u
    zt = w + r * v
    return (
        0.5 * b * np.sum(lam * z * z, -1)
        + 0.5 * p.tau * np.sum(zt * zt, -1)
        + 0.5 * p.c**2 * p.gamma_tau / b * np.sum(v * v, -1)
    )


def _E1_expanded(lam, u, v, w, p: ModelParams):
    b, c2, tau = p.b_tau, p.c**2, p.tau
    return (
        0.5 * tau * np.sum(w * w, -1)
        + 0.5 * b * np.sum(lam * v * v, -1)
        + c2**2 / (2 * b) * np.sum(lam * u * u, -1)
        + c2 * np.sum(lam * v * u, -1)
        + tau * c2 / b * np.sum(w * v, -1)
        + c2 / (2 * b) * np.sum(v * v, -1)
    )


def energy_E0(s, params: ModelParams) -> float:
    """0.5 ||u_t||^2 + 0.5 c^2 ||A^{1/2} u||^2."""
    lam, u, v, _ = _components(s)
    return float(_E0(lam, u, v, params))


def energy_E1(s, params: ModelParams) -> float:
    """E_1 built from z = u_t + (c^2/b) u and z_t = u_tt + (c^2/b) u_t."""
    lam, u, v, w = _components(s)
    return float(_E1(lam, u, v, w, params))


def energy_E1_expanded(s, params: ModelParams) -> float:
    """E_1 in expanded form; algebraically equal to :func:`energy_E1`."""
    lam, u, v, w = _components(s)
    return float(_E1_expanded(lam, u, v, w, params))


def energy_E(s, params: ModelParams) -> float:
    return energy_E0(s, params) + energy_E1(s, params)


def energy_calE(s, params: ModelParams) -> float:
    lam, u, _, _ = _components(s)
    return energy_E(s, params) + float(np.sum((lam * u) ** 2))


def energy_frakE(s, params: ModelParams) -> float:
    lam, _, v, w = _components(s)
    return (
        energy_calE(s, params)
        + float(np.sum((lam * v) ** 2))
        + params.tau * float(np.sum(lam * w * w))
    )


def _weighted(lam, u, v, w, tau, level):
    uu = np.sum(u * u, -1)
    vv = np.sum(v * v, -1)
    ww = np.sum(w * w, -1)
    if level == 0:
        return np.sum(lam * u * u, -1) + uu + np.sum(lam * v * v, -1) + vv + tau * ww
    if level == 1:
        return np.sum((lam * u) ** 2, -1) + uu + np.sum(lam * v * v, -1) + vv + tau * ww
    if level == 2:
        return (
            np.sum((lam * u) ** 2, -1)
            + uu
            + np.sum((lam * v) ** 2, -1)
            + vv
            + tau * (np.sum(lam * w * w, -1) + ww)
        )
    raise ValueError(f"level must be 0, 1 or 2, got {level}")


def weighted_norm_sq(s, level: int, params: ModelParams) -> float:
    """Squared tau-weighted phase-space norm ||M_tau^{1/2} U||^2 at level 0, 1 or 2.

    Graph norms are ||f||^2_{D(A^p)} = ||A^p f||^2 + ||f||^2.
    """
    lam, u, v, w = _components(s)
    return float(_weighted(lam, u, v, w, params.tau, level))


def energy_table(lam: np.ndarray, times, U: np.ndarray, params: ModelParams) -> np.ndarray:
    """All energies for a stack of states ``U`` of shape (n, 3, n_modes).

    Returns an (n, 9) array with columns ordered as ``EnergySample.FIELDS``.
    """
    u, v, w = U[:, 0], U[:, 1], U[:, 2]
    E0 = _E0(lam, u, v, params)
    E1 = _E1(lam, u, v, w, params)
    E = E0 + E1
    calE = E + np.sum((lam * u) ** 2, -1)
    frakE = calE + np.sum((lam * v) ** 2, -1) + params.tau * np.sum(lam * w * w, -1)
    cols = [np.asarray(times, dtype=float), E0, E1, E, calE, frakE]
    cols += [_weighted(lam, u, v, w, params.tau, i) for i in range(3)]
    return np.stack(cols, axis=1)


def energy_sample(s, params: ModelParams) -> EnergySample:
    lam, u, v, w = _components(s)
    row = energy_table(lam, [s.t], np.stack([u, v, w])[None], params)[0]
    return EnergySample(*map(float, row))
