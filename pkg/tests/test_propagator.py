import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jmgt_lab.model import JmgtState, ModelParams, WestState
from jmgt_lab.propagator import (
    JMGT,
    WESTERVELT,
    build_mode_propagators,
    characteristic_roots,
    companion_matrices,
    estimate_uttt,
    linear_mode_solution,
    picard_solve,
    simulate,
    step_jmgt,
    step_westervelt,
)
from jmgt_lab.spectral import ConfigurationError, build_basis

B8 = build_basis(1, 8, math.pi)
ONE = build_basis(1, 1, math.pi)


def mode_state(basis, u, v, w=None, t=0.0):
    w = basis.zeros() if w is None else w
    return JmgtState(t, u, v, w)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 0.5), st.floats(0.5, 400.0), st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_companion_eigenvalues_are_characteristic_roots(tau, lam, c, delta):
    p = ModelParams(tau, c, delta)
    M = companion_matrices(np.array([lam]), p, JMGT)[0]
    ev = np.sort_complex(np.linalg.eigvals(M))
    roots = np.sort_complex(characteristic_roots(lam, p, JMGT))
    np.testing.assert_allclose(ev, roots, rtol=1e-8, atol=1e-10 * max(1.0, np.max(np.abs(roots))))
    # strictly stable while gamma_tau > 0
    assert np.max(roots.real) < 0


def test_westervelt_roots_example():
    roots = np.sort_complex(characteristic_roots(1.0, ModelParams(0.0), WESTERVELT))
    np.testing.assert_allclose(roots, [complex(-0.5, -math.sqrt(3) / 2), complex(-0.5, math.sqrt(3) / 2)])


def test_jmgt_needs_positive_tau():
    with pytest.raises(ConfigurationError):
        companion_matrices(np.ones(2), ModelParams(0.0), JMGT)
    with pytest.raises(ConfigurationError):
        simulate(mode_state(ONE, ONE.unit(0), ONE.zeros()), ModelParams(0.0), 1.0, 0.1, solver=JMGT)


def test_exponential_near_zero_step_is_identity():
    prop = build_mode_propagators(B8, ModelParams(0.1), 1e-14, JMGT)
    np.testing.assert_allclose(prop.expm, np.broadcast_to(np.eye(3), prop.expm.shape), atol=1e-11)


@pytest.mark.parametrize("solver, tau", [(JMGT, 0.1), (JMGT, 0.01), (WESTERVELT, 0.0)])
def test_exponential_matches_high_precision(solver, tau):
    p = ModelParams(tau)
    dt = 0.05
    b = build_basis(1, 4, math.pi)
    prop = build_mode_propagators(b, p, dt, solver)
    M = companion_matrices(b.eigenvalues, p, solver)
    mpmath.mp.dps = 40
    for m in range(b.n_modes):
        ref = np.array(mpmath.expm(mpmath.matrix((dt * M[m]).tolist())).tolist(), dtype=float)
        np.testing.assert_allclose(prop.expm[m], ref, rtol=1e-10, atol=1e-13)


def test_phi_functions_match_resolvent_formulas():
    p = ModelParams(0.1)
    dt = 0.02
    prop = build_mode_propagators(B8, p, dt, JMGT)
    eye = np.eye(3)
    for m in range(B8.n_modes):
        M = prop.companion[m]
        Minv = np.linalg.inv(M)
        phi1 = Minv @ (prop.expm[m] - eye)
        phi2 = Minv @ (prop.phi1[m] / dt - eye)
        np.testing.assert_allclose(prop.phi1[m], phi1, rtol=1e-8, atol=1e-12)
        np.testing.assert_allclose(prop.phi2[m], phi2, rtol=1e-7, atol=1e-12)


def test_build_rejects_bad_step():
    with pytest.raises(ConfigurationError):
        build_mode_propagators(B8, ModelParams(0.1), 0.0)


@pytest.mark.parametrize("solver, tau", [(JMGT, 0.1), (WESTERVELT, 0.0)])
def test_linear_run_matches_closed_form(solver, tau):
    p = ModelParams(tau)
    U0 = np.array([1.0, 0.5, -0.3])
    if solver == JMGT:
        s0 = JmgtState.from_array(ONE, 0.0, U0[:, None])
        d = 3
    else:
        s0 = WestState.from_array(ONE, 0.0, U0[:2, None])
        d = 2
    traj = simulate(s0, p, 10.0, 0.01, solver=solver)
    exact = linear_mode_solution(1.0, p, U0[:d], traj.times, solver)
    assert np.max(np.abs(traj.states[:, :d, 0] - exact[:, :d])) <= 1e-8


def test_zero_state_stays_zero():
    p = ModelParams(0.1, k=1.0)
    traj = simulate(mode_state(B8, B8.zeros(), B8.zeros()), p, 1.0, 0.01)
    assert traj.ok
    assert np.all(traj.states == 0)


def test_single_steps_agree_with_simulate():
    p = ModelParams(0.1, k=1.0)
    s = mode_state(B8, B8.unit(0) * 0.01, B8.unit(2) * 0.01)
    a = step_jmgt(step_jmgt(s, p, 0.01), p, 0.01)
    traj = simulate(s, p, 0.02, 0.01)
    np.testing.assert_allclose(a.as_array(), traj.final, rtol=1e-14, atol=1e-18)
    assert a.t == pytest.approx(0.02)
    ws = WestState(0.0, B8.unit(0) * 0.01, B8.zeros())
    b = step_westervelt(ws, p.with_tau(0.0), 0.01)
    wt = simulate(ws, p.with_tau(0.0), 0.01, 0.01)
    np.testing.assert_allclose(b.as_array(), wt.final, rtol=1e-14, atol=1e-18)


def test_stride_subsamples_identically():
    p = ModelParams(0.1, k=1.0)
    s = mode_state(B8, B8.unit(0) * 0.01, B8.zeros())
    t1 = simulate(s, p, 1.0, 0.01, stride=1)
    t2 = simulate(s, p, 1.0, 0.01, stride=2)
    assert len(t2) == 51
    np.testing.assert_array_equal(t2.states, t1.states[::2])
    np.testing.assert_array_equal(t2.final, t1.final)


def test_zero_horizon_gives_single_snapshot():
    p = ModelParams(0.1)
    s = mode_state(B8, B8.unit(0), B8.zeros())
    traj = simulate(s, p, 0.0, 0.01)
    assert len(traj) == 1
    np.testing.assert_array_equal(traj.states[0], s.as_array())


@pytest.mark.parametrize("T, dt, stride", [(1.0, 0.3, 1), (-1.0, 0.1, 1), (1.0, 0.0, 1), (1.0, 0.1, 0)])
def test_simulate_rejects_bad_grid(T, dt, stride):
    s = mode_state(B8, B8.unit(0), B8.zeros())
    with pytest.raises(ConfigurationError):
        simulate(s, ModelParams(0.1), T, dt, stride)


def test_blowup_is_flagged():
    s = mode_state(B8, B8.unit(0) * 2.0, B8.zeros())
    traj = simulate(s, ModelParams(0.1, k=1.0), 5.0, 0.01)
    assert traj.status == "blowup"
    assert not traj.ok
    assert np.all(np.isfinite(traj.energies))


def test_nan_is_flagged_distinctly():
    s = mode_state(B8, B8.unit(0) * 0.01, B8.zeros())
    traj = simulate(s, ModelParams(0.1), 1.0, 0.01, forcing=lambda t: np.full(8, np.nan if t > 0.5 else 0.0))
    assert traj.status == "nan"
    assert traj.times[-1] <= 0.5 + 1e-12


def test_westervelt_snapshots_carry_acceleration():
    p = ModelParams(0.0, c=1.5, delta=0.4)
    ws = WestState(0.0, B8.unit(1), B8.unit(0))
    traj = simulate(ws, p, 0.0, 0.01)
    lam = B8.eigenvalues
    want = -2.25 * lam * ws.u.coeffs - 0.4 * lam * ws.v.coeffs
    np.testing.assert_allclose(traj.states[0, 2], want)


def test_picard_linear_is_one_iteration():
    p = ModelParams(0.1)
    s = mode_state(B8, B8.unit(0), B8.unit(1))
    res = picard_solve(s, p, 1.0, 0.01)
    assert res.converged and res.iterations == 1
    assert res.ratios == []
    etd = simulate(s, p, 1.0, 0.01)
    np.testing.assert_allclose(res.trajectory.states, etd.states, atol=1e-12)


def test_picard_small_data_contracts():
    p = ModelParams(0.1, k=1.0)
    s = mode_state(B8, B8.unit(0) * 1e-3, B8.zeros())
    res = picard_solve(s, p, 1.0, 0.01, tol=1e-13)
    assert res.converged
    assert max(res.ratios) < 0.5


def test_picard_divergence_is_reported():
    p = ModelParams(0.1, k=1.0)
    s = mode_state(B8, B8.unit(0) * 2.0, B8.zeros())
    res = picard_solve(s, p, 2.0, 0.01, max_iter=30)
    assert not res.converged
    assert res.trajectory.status in ("nan", "not_converged")


@pytest.mark.parametrize("U0", [(1.0, 0.0, 0.0), (0.3, -1.0, 2.0)])
def test_uttt_estimate_matches_closed_form(U0):
    p = ModelParams(0.2, c=1.2)
    s = JmgtState.from_array(ONE, 0.0, np.array(U0)[:, None])
    exact = linear_mode_solution(1.0, p, U0, [0.0], JMGT)[0, 3]
    assert estimate_uttt(s, p).coeffs[0] == pytest.approx(exact, rel=1e-10, abs=1e-12)
    with pytest.raises(ConfigurationError):
        estimate_uttt(s, p.with_tau(0.0))
