"""Acceptance criteria, runnable without pytest (``jmgt-lab selftest``).

Each check returns a :class:`CriterionResult`; wall-clock limits are part of
the pass condition.
"""

from __future__ import annotations

import filecmp
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diagnostics import energy_identity_residual
from .experiments import (
    ExperimentConfig,
    initial_data,
    jmgt_initial_state,
    run_decay_sweep,
    run_mms_order,
    run_picard_vs_etd,
    run_tau_sweep,
    run_westervelt_decay,
)
from .model import JmgtState, ModelParams, WestState, weighted_norm_sq
from .propagator import JMGT, WESTERVELT, linear_mode_solution, simulate
from .spectral import apply_power_A, build_basis, to_physical, to_spectral


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    elapsed: float
    limit: float

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.number:2d} {self.name}: {self.detail} ({self.elapsed:.2f}s / {self.limit:.0f}s)"


def _timed(number, name, limit, fn) -> CriterionResult:
    t0 = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - t0
    if elapsed > limit:
        ok = False
        detail += f"; exceeded time limit {limit}s"
    return CriterionResult(number, name, bool(ok), detail, elapsed, limit)


# The decay/rate sweeps share one configuration: k = 1, N = 16, 1D,
# tau = 0.1 * 2^-j for j = 0..7, H0-tau size of the data below 1e-2.
SWEEP_CONFIG = dict(k=1.0, N=16, dim=1, profile="mode1", amplitude=0.005,
                    tau_grid_max=0.1, tau_grid_factor=0.5, tau_grid_count=8,
                    dt=0.01, T=5.0, decay_T=20.0, decay_r2_min=0.95)


def check_spectral():
    rng = np.random.default_rng(1)
    worst_rt = worst_pars = worst_pow = 0.0
    for dim, N, L in ((1, 64, math.pi), (1, 33, 2.0), (2, 16, (math.pi, 1.5))):
        b = build_basis(dim, N, L)
        f = b.field(rng.standard_normal(b.n_modes))
        for pad in (1.0, 1.5, 2.0):
            back = to_spectral(to_physical(f, pad), b)
            worst_rt = max(worst_rt, float(np.max(np.abs(back.coeffs - f.coeffs))))
        tr = b.transform(2.0)
        quad = tr.cell_volume * float(np.sum(tr.synthesize(f.coeffs) ** 2))
        worst_pars = max(worst_pars, abs(quad - f.coeffs @ f.coeffs) / (f.coeffs @ f.coeffs))
        twice = apply_power_A(apply_power_A(f, 0.5), 0.5).coeffs
        once = apply_power_A(f, 1).coeffs
        worst_pow = max(worst_pow, float(np.max(np.abs(twice - once) / np.abs(once))))
    ok = worst_rt <= 1e-12 and worst_pars <= 1e-10 and worst_pow <= 1e-15
    return ok, f"round-trip {worst_rt:.1e}, Parseval {worst_pars:.1e}, A^1/2 A^1/2 vs A {worst_pow:.1e}"


def check_linear_exactness():
    b = build_basis(1, 1, math.pi)
    times = None
    p = ModelParams(0.1, 1.0, 1.0, 0.0)
    U0 = np.array([1.0, 0.5, -0.3])
    traj = simulate(JmgtState.from_array(b, 0.0, U0[:, None]), p, 10.0, 0.01)
    times = traj.times
    exact = linear_mode_solution(1.0, p, U0, times, JMGT)[:, :3]
    err_j = float(np.max(np.abs(traj.states[:, :, 0] - exact)))
    pw = ModelParams(0.0, 1.0, 1.0, 0.0)
    tw = simulate(WestState.from_array(b, 0.0, U0[:2, None]), pw, 10.0, 0.01)
    exact_w = linear_mode_solution(1.0, pw, U0[:2], tw.times, WESTERVELT)
    err_w = float(np.max(np.abs(tw.states[:, :, 0] - exact_w)))
    return max(err_j, err_w) <= 1e-8, f"JMGT sup error {err_j:.1e}, Westervelt {err_w:.1e}"


def check_energy_identity():
    b = build_basis(1, 16, math.pi)
    p = ModelParams(0.1, 1.0, 1.0, 0.0)
    u0 = b.project(lambda x: np.sin(x) + 0.5 * np.sin(2 * x))
    s0 = jmgt_initial_state(u0, b.zeros(), p)
    res = [energy_identity_residual(simulate(s0, p, 5.0, dt)).max_cumulative for dt in (0.01, 0.005)]
    factor = res[0] / res[1]
    return 3.5 <= factor <= 4.5, f"residual {res[0]:.2e} -> {res[1]:.2e}, factor {factor:.3f}"


def check_uniform_decay():
    cfg = ExperimentConfig(**SWEEP_CONFIG)
    basis = cfg.basis()
    u0, u1 = initial_data(cfg, basis)
    h0 = max(
        math.sqrt(weighted_norm_sq(jmgt_initial_state(u0, u1, cfg.params(t)), 0, cfg.params(t)))
        for t in cfg.tau_grid()
    )
    res = run_decay_sweep(cfg)
    omegas = [f.omega if f else math.nan for f in res.fits]
    r2 = [f.r_squared if f else math.nan for f in res.fits]
    ok = (
        h0 <= 1e-2
        and all(s == "ok" for s in res.statuses)
        and all(o > 0 for o in omegas)
        and all(r >= 0.95 for r in r2)
        and min(omegas) >= 0.5 * omegas[0]
    )
    return ok, (
        f"|U0|_H0 {h0:.2e}, omega in [{min(omegas):.4f}, {max(omegas):.4f}], "
        f"min R^2 {min(r2):.4f}, omega(tau_max) {omegas[0]:.4f}"
    )


_sweep_cache: dict = {}


def _tau_sweep():
    if "res" not in _sweep_cache:
        _sweep_cache["res"] = run_tau_sweep(ExperimentConfig(**SWEEP_CONFIG))
    return _sweep_cache["res"]


def check_tau_rate():
    res = _tau_sweep()
    if res.slope is None:
        return False, f"no slope: {res.note}"
    slope, _, r2 = res.slope
    return slope >= 0.9 and r2 >= 0.98, f"slope {slope:.4f}, R^2 {r2:.5f}"


def check_uttt_scaling():
    res = _tau_sweep()
    if res.uttt_slope is None:
        return False, f"no slope: {res.note}"
    return res.uttt_slope[0] >= -1.1, f"slope {res.uttt_slope[0]:.4f}"


def check_picard():
    cfg = ExperimentConfig(k=1.0, tau=0.1, amplitude=5e-4, picard_T=2.0, dt=0.01, picard_tol=1e-10)
    small = run_picard_vs_etd(cfg)
    lin = run_picard_vs_etd(ExperimentConfig(k=0.0, tau=0.1, amplitude=5e-4, picard_T=2.0, dt=0.01))
    ok = small.converged and small.discrepancy <= small.tolerance and lin.discrepancy <= 1e-10
    return ok, (
        f"small-data discrepancy {small.discrepancy:.2e} (tol {small.tolerance:.1e}), "
        f"k=0 discrepancy {lin.discrepancy:.1e}"
    )


def check_mms():
    res = run_mms_order(ExperimentConfig(tau=0.1, k=1.0))
    ok = all(r.slope is not None and 1.9 <= r.slope <= 2.3 and not r.roundoff for r in res.values())
    return ok, ", ".join(f"{name} slope {r.slope:.4f}" for name, r in res.items())


def check_westervelt_decay():
    res = run_westervelt_decay(ExperimentConfig(**SWEEP_CONFIG))
    if res.fit is None:
        return False, f"no decay fit (status {res.status})"
    ok = res.fit.omega > 0 and res.fit.r_squared >= 0.95 and res.integral_change <= 0.1
    return ok, (
        f"omega {res.fit.omega:.4f}, R^2 {res.fit.r_squared:.4f}, "
        f"integral change under T doubling {res.integral_change:.1e}"
    )


def check_determinism():
    from .cli import cmd_sweep_tau

    cfg = ExperimentConfig(**SWEEP_CONFIG)
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp, "a"), Path(tmp, "b")
        cmd_sweep_tau(cfg, a)
        cmd_sweep_tau(cfg, b)
        names = sorted(p.name for p in a.glob("*.csv"))
        same = bool(names) and all(filecmp.cmp(a / n, b / n, shallow=False) for n in names)
    return same, f"{len(names)} CSV file(s) {'identical' if same else 'differ'}"


CRITERIA = [
    (1, "spectral correctness", 1.0, check_spectral),
    (2, "linear exactness", 1.0, check_linear_exactness),
    (3, "energy identity second order", 5.0, check_energy_identity),
    (4, "uniform decay in tau", 120.0, check_uniform_decay),
    (5, "vanishing-relaxation rate", 120.0, check_tau_rate),
    (6, "u_ttt scaling", 120.0, check_uttt_scaling),
    (7, "Picard vs ETD2", 30.0, check_picard),
    (8, "manufactured-solution order", 30.0, check_mms),
    (9, "Westervelt decay", 30.0, check_westervelt_decay),
    (10, "determinism", 120.0, check_determinism),
]


def run_criterion(number: int) -> CriterionResult:
    for num, name, limit, fn in CRITERIA:
        if num == number:
            return _timed(num, name, limit, fn)
    raise KeyError(number)


def run_all() -> list[CriterionResult]:
    _sweep_cache.clear()
    return [_timed(num, name, limit, fn) for num, name, limit, fn in CRITERIA]
