import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from jmgt_lab.diagnostics import (
    DiagnosticError,
    energy_identity_residual,
    error_vs_limit,
    fit_decay_rate,
    loglog_slope,
    stabilizability_report,
    uttt_integral,
)
from jmgt_lab.model import JmgtState, ModelParams, WestState, energy_table
from jmgt_lab.propagator import (
    JMGT,
    WESTERVELT,
    Trajectory,
    characteristic_roots,
    linear_mode_solution,
    simulate,
)
from jmgt_lab.spectral import build_basis

ONE = build_basis(1, 1, math.pi)
B8 = build_basis(1, 8, math.pi)


def table_from(times, values, column=4):
    t = np.asarray(times, dtype=float)
    table = np.zeros((t.size, 9))
    table[:, 0] = t
    table[:, column] = values
    return table


@settings(max_examples=50)
@given(st.floats(0.01, 5.0), st.floats(-5, 5))
def test_fit_exact_exponential(omega, log_a):
    t = np.linspace(0, 10, 201)
    e = np.exp(log_a - omega * t)
    fit = fit_decay_rate(table_from(t, e), floor=0.0)
    assert fit.omega == pytest.approx(omega, rel=1e-9, abs=1e-9)
    assert fit.log_amplitude == pytest.approx(log_a, rel=1e-9, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_constant_energy_has_zero_rate():
    t = np.linspace(0, 10, 101)
    fit = fit_decay_rate(table_from(t, np.full(101, 3.0)))
    assert fit.omega == pytest.approx(0.0, abs=1e-15)
    assert fit.r_squared == 1.0


def test_fit_trims_and_floors():
    t = np.linspace(0, 10, 101)
    e = np.exp(-t)
    e[60:] = 0.0
    fit = fit_decay_rate(table_from(t, e))
    assert fit.window[0] == pytest.approx(1.0)
    assert fit.window[1] < 6.0
    assert fit.n_points == 50


def test_fit_from_plain_arrays_and_errors():
    t = np.linspace(0, 1, 11)
    fit = fit_decay_rate(np.exp(-2 * t), field="E", times=t)
    assert fit.omega == pytest.approx(2.0)
    with pytest.raises(DiagnosticError):
        fit_decay_rate(table_from(t, np.exp(-t)), field="nope")
    with pytest.raises(DiagnosticError):
        fit_decay_rate(table_from(t[:3], np.ones(3)))


def test_linear_decay_rate_matches_spectral_abscissa():
    p = ModelParams(0.1)
    s = JmgtState.from_array(ONE, 0.0, np.array([[1.0], [0.0], [-1.0]]))
    fit = fit_decay_rate(simulate(s, p, 40.0, 0.01).energies)
    want = -2 * np.max(characteristic_roots(1.0, p).real)
    assert fit.omega == pytest.approx(want, rel=0.05)
    assert fit.r_squared >= 0.95


@pytest.mark.parametrize(
    "x, y, slope",
    [([1, 2, 4, 8], [1, 4, 16, 64], 2.0), ([1, 10, 100], [5, 5, 5], 0.0), ([1, 2, 3], [3, 1.5, 1], -1.0)],
)
def test_loglog_examples(x, y, slope):
    s, _, r2 = loglog_slope(x, y)
    assert s == pytest.approx(slope, abs=1e-12)
    assert r2 == pytest.approx(1.0)


@settings(max_examples=50)
@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.lists(st.floats(0.1, 10), min_size=3, max_size=8))
def test_loglog_scale_invariant(a, c, ys):
    x = np.arange(1.0, len(ys) + 1)
    if np.ptp(np.log(ys)) == 0:
        return
    s0 = loglog_slope(x, ys)[0]
    assert loglog_slope(a * x, c * np.asarray(ys))[0] == pytest.approx(s0, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("x, y", [([1, 2], [1, 2]), ([1, 2, 3], [1, 0, 2]), ([1, 2, 3], [1, 2])])
def test_loglog_rejects(x, y):
    with pytest.raises(DiagnosticError):
        loglog_slope(x, y)


def _pair(u0, v0, tau=0.1, k=0.0, T=2.0, dt=0.01, basis=ONE):
    p = ModelParams(tau, k=k)
    js = JmgtState(0.0, u0, v0, basis.zeros())
    ws = WestState(0.0, u0, v0)
    return simulate(js, p, T, dt), simulate(ws, p.with_tau(0.0), T, dt)


def test_error_vs_limit_of_identical_runs_is_zero():
    _, w = _pair(ONE.unit(0), ONE.zeros())
    e, sup = error_vs_limit(w, w)
    assert sup == 0.0 and np.all(e == 0)


def test_error_vs_limit_symmetric_in_arguments():
    j, w = _pair(B8.unit(0) * 0.01, B8.zeros(), k=1.0, basis=B8)
    e1, s1 = error_vs_limit(j, w)
    e2, s2 = error_vs_limit(w, j)
    np.testing.assert_array_equal(e1, e2)
    assert s1 == s2 > 0


def test_error_vs_limit_linear_closed_form():
    p = ModelParams(0.1)
    j, w = _pair(ONE.unit(0), ONE.zeros())
    U0 = [1.0, 0.0, -1.0]  # well-prepared: u_tt(0) = -c^2 lambda u0
    js = JmgtState.from_array(ONE, 0.0, np.array(U0)[:, None])
    j = simulate(js, p, 2.0, 0.01)
    e, _ = error_vs_limit(j, w)
    uj = linear_mode_solution(1.0, p, U0, j.times, JMGT)
    uw = linear_mode_solution(1.0, p.with_tau(0.0), U0[:2], j.times, WESTERVELT)
    want = (uj[:, 0] - uw[:, 0]) ** 2 + (uj[:, 1] - uw[:, 1]) ** 2
    np.testing.assert_allclose(e, want, atol=1e-8)


def test_error_vs_limit_rejects_mismatch():
    j, w = _pair(ONE.unit(0), ONE.zeros())
    j2, _ = _pair(ONE.unit(0), ONE.zeros(), T=1.0)
    with pytest.raises(DiagnosticError):
        error_vs_limit(j2, w)


def test_uttt_integral_closed_form():
    p = ModelParams(0.1)
    U0 = np.array([1.0, 0.0, -1.0])
    traj = simulate(JmgtState.from_array(ONE, 0.0, U0[:, None]), p, 5.0, 0.001)
    exact = quad(lambda t: linear_mode_solution(1.0, p, U0, [t], JMGT)[0, 3] ** 2, 0, 5, limit=200)[0]
    assert uttt_integral(traj) == pytest.approx(exact, rel=0.01)


def test_uttt_integral_of_zero_run():
    traj = simulate(JmgtState(0.0, B8.zeros(), B8.zeros(), B8.zeros()), ModelParams(0.1, k=1.0), 1.0, 0.01)
    assert uttt_integral(traj) == 0.0


def _fixed_trajectory(U, params, times):
    U = np.asarray(U, dtype=float)
    return Trajectory(
        basis=ONE, params=params, solver=JMGT, times=np.asarray(times, dtype=float),
        states=U, energies=energy_table(ONE.eigenvalues, times, U, params),
        final=U[-1], final_time=float(times[-1]),
    )


def test_identity_residual_zero_and_stationary():
    p = ModelParams(0.1)
    times = np.linspace(0, 1, 11)
    zero = _fixed_trajectory(np.zeros((11, 3, 1)), p, times)
    assert energy_identity_residual(zero).max_cumulative == 0.0
    # frozen (u, 0, 0): E_1 is constant and the integrand vanishes
    frozen = np.zeros((11, 3, 1))
    frozen[:, 0] = 0.7
    assert energy_identity_residual(_fixed_trajectory(frozen, p, times)).max_cumulative == 0.0


def test_identity_residual_second_order():
    p = ModelParams(0.1)
    u0 = B8.project(lambda x: np.sin(x) + 0.5 * np.sin(2 * x))
    s = JmgtState(0.0, u0, B8.zeros(), u0 * 0.0 - B8.field(B8.eigenvalues * u0.coeffs))
    r = [energy_identity_residual(simulate(s, p, 2.0, dt)).max_cumulative for dt in (0.02, 0.01)]
    assert 3.5 <= r[0] / r[1] <= 4.5


def test_identity_residual_rejects_westervelt():
    _, w = _pair(ONE.unit(0), ONE.zeros())
    with pytest.raises(DiagnosticError):
        energy_identity_residual(w)


def test_stabilizability_pure_exponential():
    t = np.linspace(0, 20, 4001)
    rep = stabilizability_report(np.exp(-t), c1_grid=[0.5, 1.0, 2.0], times=t)
    # e^{-t} + C1 (1 - e^{-t}) peaks at max(1, C1)
    np.testing.assert_allclose(rep.c2, [1.0, 1.0, 2.0 * (1 - math.exp(-20)) + math.exp(-20)], rtol=1e-4)
    assert rep.finite and not rep.growing
    # trapezoid error h^2/12 with h = 0.005
    assert rep.c2_at(1.0) == pytest.approx(1.0, abs=5e-6)


def test_stabilizability_flags_growth():
    t = np.linspace(0, 5, 101)
    rep = stabilizability_report(np.exp(0.2 * t), times=t)
    assert rep.growing


def test_stabilizability_small_data_stable_in_horizon():
    p = ModelParams(0.1, k=1.0)
    s = JmgtState(0.0, B8.unit(0) * 0.005, B8.zeros(), B8.unit(0) * -0.005)
    a = stabilizability_report(simulate(s, p, 10.0, 0.01))
    b = stabilizability_report(simulate(s, p, 20.0, 0.01))
    assert abs(b.integral - a.integral) <= 0.1 * a.integral
    assert b.c2_at(1.0) == pytest.approx(a.c2_at(1.0), rel=0.1)
