"""Time integration in the sine eigenbasis.

Each eigenmode evolves under a small companion matrix,

    JMGT:        [0, 1, 0; 0, 0, 1; -c^2 lam/tau, -b lam/tau, -1/tau]
    Westervelt:  [0, 1; -c^2 lam, -delta lam]

whose exponential is computed once per step size.  The nonlinearity enters
only the last row (G/tau for JMGT, G for Westervelt) and is integrated with
the second-order exponential Runge-Kutta scheme of Cox and Matthews:

    a       = e^{hM} U_n + h phi_1(hM) N(U_n, t_n)
    U_{n+1} = a + h phi_2(hM) [N(a, t_n + h) - N(U_n, t_n)]

With k = 0 and no forcing this reduces to the exact flow U -> e^{hM} U.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .model import (
    EnergySample,
    JmgtState,
    ModelParams,
    WestState,
    energy_table,
    nonlinearity,
    westervelt_acceleration,
)
from .spectral import (
    DEFAULT_PADDING,
    ConfigurationError,
    NumericalFailure,
    SpectralBasis,
    SpectralField,
)

log = logging.getLogger(__name__)

__all__ = [
    "ModePropagator",
    "Trajectory",
    "PicardResult",
    "build_mode_propagators",
    "companion_matrices",
    "characteristic_roots",
    "linear_mode_solution",
    "step_jmgt",
    "step_westervelt",
    "simulate",
    "picard_solve",
    "estimate_uttt",
]

JMGT = "jmgt"
WESTERVELT = "westervelt"
DEFAULT_CEILING = 1e6

Forcing = Callable[[float], np.ndarray]


def _solver_for(params: ModelParams, solver: str | None) -> str:
    if solver is None:
        solver = JMGT if params.tau > 0 else WESTERVELT
    if solver not in (JMGT, WESTERVELT):
        raise ConfigurationError(f"unknown solver {solver!r}")
    if solver == JMGT and params.tau <= 0:
        raise ConfigurationError("the JMGT path needs tau > 0 (companion is singular at tau = 0)")
    return solver


def companion_matrices(lam: np.ndarray, params: ModelParams, solver: str | None = None) -> np.ndarray:
    """Per-mode companion matrices, shape (n_modes, d, d)."""
    solver = _solver_for(params, solver)
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    if solver == JMGT:
        tau = params.tau
        M = np.zeros((n, 3, 3))
        M[:, 0, 1] = 1.0
        M[:, 1, 2] = 1.0
        M[:, 2, 0] = -params.c**2 * lam / tau
        M[:, 2, 1] = -params.b_tau * lam / tau
        M[:, 2, 2] = -1.0 / tau
    else:
        M = np.zeros((n, 2, 2))
        M[:, 0, 1] = 1.0
        M[:, 1, 0] = -params.c**2 * lam
        M[:, 1, 1] = -params.delta * lam
    return M


def characteristic_roots(lam: float, params: ModelParams, solver: str | None = None) -> np.ndarray:
    """Roots of tau s^3 + s^2 + b lam s + c^2 lam (JMGT) or s^2 + delta lam s + c^2 lam."""
    solver = _solver_for(params, solver)
    if solver == JMGT:
        coeffs = [params.tau, 1.0, params.b_tau * lam, params.c**2 * lam]
    else:
        coeffs = [1.0, params.delta * lam, params.c**2 * lam]
    return np.roots(coeffs)


def linear_mode_solution(
    lam: float, params: ModelParams, initial, times, solver: str | None = None
) -> np.ndarray:
    """Closed-form solution of the linear single-mode problem from its characteristic roots.

    ``initial`` holds (u, u_t, u_tt) for JMGT or (u, u_t) for Westervelt.
    Returns shape (len(times), d + 1) where column j is the j-th time
    derivative of u; the last column is u_ttt (JMGT) or u_tt (Westervelt).
    """
    s = characteristic_roots(lam, params, solver)
    d = s.size
    V = np.vander(s, d, increasing=True).T  # V[j, i] = s_i^j
    a = np.linalg.solve(V.astype(complex), np.asarray(initial, dtype=complex)[:d])
    t = np.asarray(times, dtype=float)
    e = np.exp(np.outer(t, s)) * a  # (nt, d)
    powers = s[None, :] ** np.arange(d + 1)[:, None]  # (d+1, d)
    return np.real(e @ powers.T)


@dataclass(frozen=True, eq=False)
class ModePropagator:
    """Per-mode exponential and phi-weights for one step size.

    ``expm`` is e^{dt M_m}; ``phi1`` and ``phi2`` hold dt*phi_1(dt M_m) and
    dt*phi_2(dt M_m) (both (n, d, d)).  ``forcing_scale`` multiplies the
    nonlinearity before it enters the last row.
    """

    solver: str
    dt: float
    companion: np.ndarray = field(repr=False)
    expm: np.ndarray = field(repr=False)
    phi1: np.ndarray = field(repr=False)
    phi2: np.ndarray = field(repr=False)
    forcing_scale: float
    spectral_abscissa: float

    @property
    def dim(self) -> int:
        return self.companion.shape[-1]

    def apply(self, U: np.ndarray) -> np.ndarray:
        """e^{dt M} U for U of shape (d, n_modes)."""
        return np.einsum("nij,jn->in", self.expm, U)


def build_mode_propagators(
    basis: SpectralBasis, params: ModelParams, dt: float, solver: str | None = None
) -> ModePropagator:
    """Matrix exponential and phi-functions of every mode's companion matrix.

    The phi-functions come from one exponential of the augmented block matrix

        [[dt M, dt I, 0], [0, 0, I], [0, 0, 0]]

    whose first block row is [e^{dt M}, dt phi_1(dt M), dt phi_2(dt M)].
    """
    solver = _solver_for(params, solver)
    if not dt > 0:
        raise ConfigurationError(f"dt must be > 0, got {dt}")
    M = companion_matrices(basis.eigenvalues, params, solver)
    n, d, _ = M.shape
    eig = np.linalg.eigvals(M)
    abscissa = float(np.max(eig.real))
    if params.gamma_tau > 0 and abscissa >= 0:
        raise ConfigurationError(
            f"companion spectrum not in the left half plane (abscissa {abscissa:.3e})"
        )
    W = np.zeros((n, 3 * d, 3 * d))
    eye = np.eye(d)
    W[:, :d, :d] = dt * M
    W[:, :d, d : 2 * d] = dt * eye
    W[:, d : 2 * d, 2 * d :] = eye
    X = scipy.linalg.expm(W)
    expm = X[:, :d, :d].copy()
    phi1 = X[:, :d, d : 2 * d].copy()
    phi2 = X[:, :d, 2 * d :].copy()
    scale = 1.0 / params.tau if solver == JMGT else 1.0
    return ModePropagator(solver, float(dt), M, expm, phi1, phi2, scale, abscissa)


# ----------------------------------------------------------------- steppers


class _Rhs:
    """Nonlinear right-hand side N(U, t) entering the last row, per mode."""

    def __init__(self, basis, params, solver, padding, forcing):
        self.basis = basis
        self.params = params
        self.solver = solver
        self.padding = padding
        self.forcing = forcing

    def __call__(self, U: np.ndarray, t: float) -> np.ndarray:
        p = self.params
        f = None if self.forcing is None else np.asarray(self.forcing(t), dtype=float)
        if self.solver == JMGT:
            g = nonlinearity(self.basis, p.k, U[0], U[1], U[2], self.padding)
            return g if f is None else g + f
        _, g = westervelt_acceleration(self.basis, p, U[0], U[1], f, self.padding)
        return g if f is None else g + f

    def acceleration(self, U: np.ndarray, t: float) -> np.ndarray:
        """u_tt for a Westervelt state (u, u_t)."""
        f = None if self.forcing is None else np.asarray(self.forcing(t), dtype=float)
        w, _ = westervelt_acceleration(self.basis, self.params, U[0], U[1], f, self.padding)
        return w


def _etd2(prop: ModePropagator, rhs: _Rhs, U: np.ndarray, t: float) -> np.ndarray:
    d = prop.dim
    h = prop.dt
    n0 = prop.forcing_scale * rhs(U, t)
    a = prop.apply(U) + prop.phi1[:, :, d - 1].T * n0
    if rhs.params.k == 0 and rhs.forcing is None:
        return a
    na = prop.forcing_scale * rhs(a, t + h)
    return a + prop.phi2[:, :, d - 1].T * (na - n0)


def step_jmgt(
    state: JmgtState,
    params: ModelParams,
    dt: float,
    padding: float = DEFAULT_PADDING,
    forcing: Forcing | None = None,
    propagator: ModePropagator | None = None,
) -> JmgtState:
    """Advance a JMGT state by one ETD2 step."""
    prop = propagator or build_mode_propagators(state.basis, params, dt, JMGT)
    rhs = _Rhs(state.basis, params, JMGT, padding, forcing)
    U = _etd2(prop, rhs, state.as_array(), state.t)
    _check_finite(U, 1)
    return JmgtState.from_array(state.basis, state.t + dt, U)


def step_westervelt(
    state: WestState,
    params: ModelParams,
    dt: float,
    padding: float = DEFAULT_PADDING,
    forcing: Forcing | None = None,
    propagator: ModePropagator | None = None,
) -> WestState:
    """Advance a Westervelt state by one ETD2 step."""
    prop = propagator or build_mode_propagators(state.basis, params, dt, WESTERVELT)
    rhs = _Rhs(state.basis, params, WESTERVELT, padding, forcing)
    U = _etd2(prop, rhs, state.as_array(), state.t)
    _check_finite(U, 1)
    return WestState.from_array(state.basis, state.t + dt, U)


def _check_finite(U: np.ndarray, step: int) -> None:
    bad = ~np.isfinite(U)
    if bad.any():
        comp, mode = np.argwhere(bad)[0]
        raise NumericalFailure(f"non-finite value at step {step}, component {comp}, mode {mode}")


# -------------------------------------------------------------- trajectories


@dataclass(eq=False)
class Trajectory:
    """Sampled solution with energies.

    ``states`` has shape (n_snap, 3, n_modes) holding (u, u_t, u_tt) per
    snapshot; for Westervelt runs u_tt is recovered from the equation.
    ``energies`` has shape (n_snap, 9) with columns ``EnergySample.FIELDS``;
    Westervelt energies are evaluated at tau = 0.
    """

    basis: SpectralBasis
    params: ModelParams
    solver: str
    times: np.ndarray
    states: np.ndarray
    energies: np.ndarray
    final: np.ndarray
    final_time: float
    meta: dict = field(default_factory=dict)
    status: str = "ok"
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def __len__(self) -> int:
        return len(self.times)

    @property
    def energy_samples(self) -> list[EnergySample]:
        return [EnergySample(*map(float, row)) for row in self.energies]

    @property
    def energy_params(self) -> ModelParams:
        return self.params if self.solver == JMGT else self.params.with_tau(0.0)

    def state(self, i: int) -> JmgtState:
        return JmgtState.from_array(self.basis, float(self.times[i]), self.states[i])

    def final_state(self):
        if self.solver == JMGT:
            return JmgtState.from_array(self.basis, self.final_time, self.final)
        return WestState.from_array(self.basis, self.final_time, self.final[:2])


def _initial_array(initial, solver: str) -> tuple[np.ndarray, float]:
    if solver == JMGT:
        if not isinstance(initial, JmgtState):
            raise TypeError("the JMGT solver needs a JmgtState")
        return initial.as_array(), initial.t
    return np.stack([initial.u.coeffs, initial.v.coeffs]), initial.t


def _h1(lam, U, tau):
    u, v = U[0], U[1]
    s = np.sum((lam * u) ** 2) + np.sum(u * u) + np.sum(lam * v * v) + np.sum(v * v)
    if U.shape[0] == 3:
        s += tau * np.sum(U[2] ** 2)
    return np.sqrt(s)


def simulate(
    initial,
    params: ModelParams,
    T: float,
    dt: float,
    stride: int = 1,
    solver: str | None = None,
    forcing: Forcing | None = None,
    padding: float = DEFAULT_PADDING,
    ceiling: float = DEFAULT_CEILING,
) -> Trajectory:
    """Integrate from ``initial`` to time ``T`` with step ``dt``.

    Snapshots are taken every ``stride`` steps.  Numerical failure does not
    raise: the partial trajectory is returned with ``status`` set to
    ``"nan"`` or ``"blowup"`` (H1-tau norm above ``ceiling``).
    """
    solver = _solver_for(params, solver)
    if T < 0 or not np.isfinite(T):
        raise ConfigurationError(f"T must be >= 0, got {T}")
    if not dt > 0:
        raise ConfigurationError(f"dt must be > 0, got {dt}")
    if int(stride) != stride or stride < 1:
        raise ConfigurationError(f"stride must be a positive integer, got {stride}")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(T, dt):
        raise ConfigurationError(f"T={T} is not a multiple of dt={dt}")
    basis = initial.basis
    lam = basis.eigenvalues
    U, t0 = _initial_array(initial, solver)
    if not np.all(np.isfinite(U)):
        raise NumericalFailure("non-finite initial data")
    rhs = _Rhs(basis, params, solver, padding, forcing)
    prop = build_mode_propagators(basis, params, dt, solver) if n_steps else None

    def full(U, t):
        if solver == JMGT:
            return U
        return np.stack([U[0], U[1], rhs.acceleration(U, t)])

    times = [t0]
    snaps = [full(U, t0)]
    status, message = "ok", ""
    t = t0
    for step in range(1, n_steps + 1):
        try:
            U = _etd2(prop, rhs, U, t)
            _check_finite(U, step)
        except NumericalFailure as exc:
            status, message = "nan", str(exc)
            break
        t = t0 + step * dt
        norm = _h1(lam, U, params.tau)
        if norm > ceiling:
            status = "blowup"
            message = f"H1-tau norm {norm:.3e} exceeded ceiling {ceiling:.3e} at step {step}"
            break
        if step % stride == 0:
            try:
                snaps.append(full(U, t))
            except NumericalFailure as exc:
                status, message = "nan", str(exc)
                break
            times.append(t)
    if status != "ok":
        log.info("%s run stopped: %s", solver, message)
    times = np.asarray(times)
    states = np.stack(snaps)
    ep = params if solver == JMGT else params.with_tau(0.0)
    return Trajectory(
        basis=basis,
        params=params,
        solver=solver,
        times=times,
        states=states,
        energies=energy_table(lam, times, states, ep),
        final=np.asarray(U) if status == "ok" else states[-1][: U.shape[0]],
        final_time=t if status == "ok" else float(times[-1]),
        meta={"solver": solver, "dt": dt, "stride": stride, "padding": padding, "T": T},
        status=status,
        message=message,
    )


# -------------------------------------------------------------------- Picard


@dataclass(eq=False)
class PicardResult:
    trajectory: Trajectory
    ratios: list[float]
    differences: list[float]
    converged: bool
    iterations: int


def h2tau_norms(lam, D: np.ndarray, tau: float) -> np.ndarray:
    """H2-tau norm of differences D with shape (n_t, 3, n_modes)."""
    u, v, w = D[:, 0], D[:, 1], D[:, 2]
    s = (
        np.sum((lam * u) ** 2, -1)
        + np.sum(u * u, -1)
        + np.sum((lam * v) ** 2, -1)
        + np.sum(v * v, -1)
        + tau * (np.sum(lam * w * w, -1) + np.sum(w * w, -1))
    )
    return np.sqrt(s)


def _quiet_energy_table(lam, times, states, params):
    # a diverging Picard iterate may be huge but finite
    with np.errstate(over="ignore", invalid="ignore"):
        return energy_table(lam, times, states, params)


def picard_solve(
    U0: JmgtState,
    params: ModelParams,
    T: float,
    dt: float,
    max_iter: int = 50,
    tol: float = 1e-10,
    stride: int = 1,
    padding: float = DEFAULT_PADDING,
) -> PicardResult:
    """Fixed-point iteration on the variation-of-parameters formula.

    W^0(t) = S(t) U0 and W^{n+1} = S(t) U0 + int_0^t S(t - s) F(W^n(s)) ds,
    with F = (0, 0, G/tau) and the integral evaluated by the composite
    trapezoid rule on the grid t_j = j dt, using the recursion

        I_{j+1} = S(dt) I_j + dt/2 [S(dt) F_j + F_{j+1}].

    Iteration stops once sup_t ||W^{n+1} - W^n||_{H2-tau} < tol.  Ratios of
    successive differences are returned as a contraction diagnostic.
    """
    _solver_for(params, JMGT)
    n_steps = int(round(T / dt))
    if n_steps < 0 or abs(n_steps * dt - T) > 1e-9 * max(T, dt):
        raise ConfigurationError(f"T={T} is not a nonnegative multiple of dt={dt}")
    basis = U0.basis
    lam = basis.eigenvalues
    prop = build_mode_propagators(basis, params, dt, JMGT)

    free = np.empty((n_steps + 1, 3, basis.n_modes))
    free[0] = U0.as_array()
    for j in range(n_steps):
        free[j + 1] = prop.apply(free[j])

    W = free.copy()
    ratios: list[float] = []
    diffs: list[float] = []
    converged = False
    failed = False
    it = 0
    for it in range(1, max_iter + 1):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                G = nonlinearity(basis, params.k, W[:, 0], W[:, 1], W[:, 2], padding) / params.tau
                F = np.zeros_like(W)
                F[:, 2] = G
                new = np.empty_like(W)
                new[0] = free[0]
                I = np.zeros((3, basis.n_modes))
                for j in range(n_steps):
                    I = prop.apply(I) + 0.5 * dt * (prop.apply(F[j]) + F[j + 1])
                    new[j + 1] = free[j + 1] + I
        except NumericalFailure:
            new = np.full_like(W, np.nan)
        if not np.all(np.isfinite(new)):
            log.warning("Picard iterate %d is non-finite", it)
            failed = True
            break
        with np.errstate(over="ignore", invalid="ignore"):
            diff = float(np.max(h2tau_norms(lam, new - W, params.tau)))
        if diffs and diffs[-1] > 0:
            ratios.append(diff / diffs[-1])
        diffs.append(diff)
        W = new
        if diff < tol:
            converged = True
            break

    idx = np.arange(0, n_steps + 1, stride)
    times = U0.t + idx * dt
    states = W[idx]
    traj = Trajectory(
        basis=basis,
        params=params,
        solver=JMGT,
        times=times,
        states=states,
        energies=_quiet_energy_table(lam, times, states, params),
        final=W[-1],
        final_time=U0.t + n_steps * dt,
        meta={"solver": "picard", "dt": dt, "stride": stride, "padding": padding, "T": T},
        status="ok" if converged else ("nan" if failed else "not_converged"),
        message="" if converged else (
            f"iterate {it} is non-finite" if failed else f"no convergence after {it} iterations"
        ),
    )
    return PicardResult(traj, ratios, diffs, converged, it)


def estimate_uttt(
    state: JmgtState, params: ModelParams, padding: float = DEFAULT_PADDING
) -> SpectralField:
    """u_ttt = (G - u_tt - c^2 A u - b A u_t) / tau from the equation itself."""
    if not params.tau > 0:
        raise ConfigurationError("estimate_uttt needs tau > 0")
    lam = state.basis.eigenvalues
    u, v, w = state.u.coeffs, state.v.coeffs, state.w.coeffs
    g = nonlinearity(state.basis, params.k, u, v, w, padding)
    r = (g - w - params.c**2 * lam * u - params.b_tau * lam * v) / params.tau
    return SpectralField(state.basis, r)
