"""Quantities extracted from trajectories: energy-identity residuals, decay
rates, distance to the Westervelt limit and log-log slopes.

All time integrals use the composite trapezoid rule on the snapshot grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .model import EnergySample, ModelParams, nonlinearity
from .propagator import JMGT, Trajectory

__all__ = [
    "DecayFit",
    "SweepRecord",
    "IdentityResidual",
    "StabilizabilityReport",
    "DiagnosticError",
    "energy_identity_residual",
    "fit_decay_rate",
    "error_vs_limit",
    "uttt_integral",
    "uttt_norms",
    "loglog_slope",
    "stabilizability_report",
    "dissipation_integral",
]

ENERGY_COLUMNS = {"E": 3, "calE": 4, "frakE": 5}


class DiagnosticError(ValueError):
    """Input unsuitable for the requested diagnostic."""


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit ln(energy) ~ log_amplitude - omega t."""

    omega: float
    log_amplitude: float
    r_squared: float
    window: tuple[float, float]
    floor_used: float
    n_points: int = 0


@dataclass
class SweepRecord:
    tau: float
    sup_err_sq: float
    uttt_integral: float
    decay_fit: DecayFit | None
    flag: str = "ok"
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class IdentityResidual:
    """Residuals of the E_1 energy identity.

    ``interval`` holds the per-interval residuals R_j; ``cumulative`` their
    running sum, i.e. the residual of the identity integrated from 0 to t_j.
    """

    interval: np.ndarray
    cumulative: np.ndarray

    @property
    def max_interval(self) -> float:
        return float(np.max(np.abs(self.interval))) if self.interval.size else 0.0

    @property
    def max_cumulative(self) -> float:
        return float(np.max(np.abs(self.cumulative))) if self.cumulative.size else 0.0


def energy_identity_residual(traj: Trajectory, params: ModelParams | None = None) -> IdentityResidual:
    """Discrete check of d/dt E_1 + gamma ||u_tt||^2 = (G, u_tt + (c^2/b) u_t).

    On each snapshot interval

        R_j = E_1(t_{j+1}) - E_1(t_j) + int gamma ||u_tt||^2 - int (G, z_t)

    with trapezoid integrals.
    """
    p = params or traj.params
    if traj.solver != JMGT:
        raise DiagnosticError("the E_1 identity applies to JMGT trajectories")
    if len(traj) < 2:
        return IdentityResidual(np.zeros(0), np.zeros(0))
    U = traj.states
    u, v, w = U[:, 0], U[:, 1], U[:, 2]
    E1 = traj.energies[:, 2]
    padding = traj.meta.get("padding", 1.5)
    G = nonlinearity(traj.basis, p.k, u, v, w, padding)
    zt = w + (p.c**2 / p.b_tau) * v
    integrand = p.gamma_tau * np.sum(w * w, -1) - np.sum(G * zt, -1)
    dt = np.diff(traj.times)
    quad = 0.5 * dt * (integrand[1:] + integrand[:-1])
    R = np.diff(E1) + quad
    return IdentityResidual(R, np.cumsum(R))


def fit_decay_rate(
    samples: Sequence[EnergySample] | np.ndarray,
    field: str = "calE",
    floor: float | None = None,
    trim: float = 0.1,
    times: np.ndarray | None = None,
) -> DecayFit:
    """Fit an exponential decay rate to one energy column.

    ``samples`` is a sequence of :class:`EnergySample` or an energy table
    (n, 9).  Samples at or below ``floor`` (default 1e-12 * energy(0)) are
    discarded, as is the leading ``trim`` fraction of the time window.
    """
    if field not in ENERGY_COLUMNS:
        raise DiagnosticError(f"unknown energy field {field!r}")
    if isinstance(samples, np.ndarray) and samples.ndim == 2:
        t = samples[:, 0]
        e = samples[:, ENERGY_COLUMNS[field]]
    elif times is not None:
        t = np.asarray(times, dtype=float)
        e = np.asarray(samples, dtype=float)
    else:
        t = np.array([s.t for s in samples])
        e = np.array([getattr(s, field) for s in samples])
    if e.size == 0:
        raise DiagnosticError("no samples")
    if floor is None:
        floor = 1e-12 * e[0]
    t_cut = t[0] + trim * (t[-1] - t[0])
    keep = (t >= t_cut) & (e > floor) & np.isfinite(e)
    if np.count_nonzero(keep) < 5:
        raise DiagnosticError(
            f"only {np.count_nonzero(keep)} samples above floor {floor:.3e}; need at least 5"
        )
    tk = t[keep]
    y = np.log(e[keep])
    slope, intercept, r2 = _linear_fit(tk, y)
    return DecayFit(
        omega=-slope,
        log_amplitude=intercept,
        r_squared=r2,
        window=(float(tk[0]), float(tk[-1])),
        floor_used=float(floor),
        n_points=int(tk.size),
    )


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    xm = x.mean()
    ym = y.mean()
    dx = x - xm
    dy = y - ym
    sxx = dx @ dx
    if sxx == 0:
        raise DiagnosticError("degenerate abscissae")
    slope = (dx @ dy) / sxx
    intercept = ym - slope * xm
    ss_tot = dy @ dy
    resid = dy - slope * dx
    ss_res = resid @ resid
    # flat data up to rounding: the line fits exactly
    flat = ss_tot <= (1e-13 * max(1.0, abs(ym))) ** 2 * y.size
    r2 = 1.0 if flat else max(0.0, 1.0 - ss_res / ss_tot)
    return float(slope), float(intercept), float(min(r2, 1.0))


def error_vs_limit(jmgt: Trajectory, west: Trajectory) -> tuple[np.ndarray, float]:
    """e(t) = ||A (u^tau - u^0)||^2 + ||A^{1/2} (u^tau_t - u^0_t)||^2 per snapshot.

    Returns ``(e, sup e)``; only the (u, u_t) components are compared.
    """
    if not jmgt.basis.same_as(west.basis):
        raise DiagnosticError("trajectories live in different bases")
    if jmgt.times.shape != west.times.shape or not np.allclose(
        jmgt.times, west.times, rtol=1e-12, atol=1e-12
    ):
        raise DiagnosticError("snapshot times do not match")
    lam = jmgt.basis.eigenvalues
    du = jmgt.states[:, 0] - west.states[:, 0]
    dv = jmgt.states[:, 1] - west.states[:, 1]
    e = np.sum((lam * du) ** 2, -1) + np.sum(lam * dv * dv, -1)
    return e, float(np.max(e))


def uttt_norms(traj: Trajectory, params: ModelParams | None = None) -> np.ndarray:
    """||u_ttt(t_j)||^2 per snapshot, with u_ttt taken from the equation."""
    p = params or traj.params
    if traj.solver != JMGT or not p.tau > 0:
        raise DiagnosticError("u_ttt is defined for JMGT trajectories with tau > 0")
    lam = traj.basis.eigenvalues
    U = traj.states
    u, v, w = U[:, 0], U[:, 1], U[:, 2]
    G = nonlinearity(traj.basis, p.k, u, v, w, traj.meta.get("padding", 1.5))
    r = (G - w - p.c**2 * lam * u - p.b_tau * lam * v) / p.tau
    return np.sum(r * r, -1)


def uttt_integral(traj: Trajectory, params: ModelParams | None = None) -> float:
    """Trapezoid approximation of int_0^T ||u_ttt||^2 dt."""
    if len(traj) < 2:
        return 0.0
    return float(trapezoid(uttt_norms(traj, params), traj.times))


def dissipation_integral(traj: Trajectory) -> float:
    """int_0^T ||u_tt||^2 + ||A u||^2 + ||A^{1/2} u_t||^2 dt."""
    if len(traj) < 2:
        return 0.0
    lam = traj.basis.eigenvalues
    U = traj.states
    f = (
        np.sum(U[:, 2] ** 2, -1)
        + np.sum((lam * U[:, 0]) ** 2, -1)
        + np.sum(lam * U[:, 1] ** 2, -1)
    )
    return float(trapezoid(f, traj.times))


def loglog_slope(x, y) -> tuple[float, float, float]:
    """Least-squares line through (ln x, ln y); returns (slope, intercept, R^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DiagnosticError("x and y must be 1-D arrays of equal length")
    if x.size < 3:
        raise DiagnosticError("need at least 3 points")
    if not (np.all(x > 0) and np.all(y > 0)):
        raise DiagnosticError("log-log fit needs positive data")
    return _linear_fit(np.log(x), np.log(y))


@dataclass(frozen=True)
class StabilizabilityReport:
    """For each candidate C1, the smallest C2 with
    calE(t) + C1 int_0^t calE <= C2 calE(0) over the trajectory."""

    c1: np.ndarray
    c2: np.ndarray
    integral: float
    growing: bool

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.integral) and np.all(np.isfinite(self.c2)))

    def c2_at(self, c1: float) -> float:
        i = int(np.argmin(np.abs(self.c1 - c1)))
        return float(self.c2[i])


def stabilizability_report(
    samples: Trajectory | Sequence[EnergySample] | np.ndarray,
    c1_grid: Sequence[float] | None = None,
    times: np.ndarray | None = None,
) -> StabilizabilityReport:
    """Smallest C2 for a grid of C1 values in the integrated inequality for calE.

    ``growing`` flags a trajectory whose final energy is not below the
    initial one; its C2 then grows without bound as T increases.
    """
    if isinstance(samples, Trajectory):
        t, e = samples.times, samples.energies[:, 4]
    elif isinstance(samples, np.ndarray) and samples.ndim == 2:
        t, e = samples[:, 0], samples[:, 4]
    elif times is not None:
        t, e = np.asarray(times, dtype=float), np.asarray(samples, dtype=float)
    else:
        t = np.array([s.t for s in samples])
        e = np.array([s.calE for s in samples])
    if not e[0] > 0:
        raise DiagnosticError("calE(0) must be positive")
    c1 = np.asarray(c1_grid if c1_grid is not None else np.geomspace(1e-3, 10, 41), dtype=float)
    integ = cumulative_trapezoid(e, t, initial=0.0)
    c2 = np.max((e[None, :] + c1[:, None] * integ[None, :]) / e[0], axis=1)
    return StabilizabilityReport(c1, c2, float(integ[-1]), bool(e[-1] >= e[0]))
