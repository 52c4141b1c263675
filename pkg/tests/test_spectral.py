import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from jmgt_lab.spectral import (
    ConfigurationError,
    apply_power_A,
    build_basis,
    grid_size,
    l2_inner,
    l2_norm,
    pointwise_multiply,
    to_physical,
    to_spectral,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
paddings = st.sampled_from([1.0, 1.5, 2.0, 3.0])


def basis_1d(N=8, L=math.pi):
    return build_basis(1, N, L)


def test_eigenvalues_1d():
    b = build_basis(1, 4, 2.0)
    np.testing.assert_allclose(b.eigenvalues, (np.pi * np.arange(1, 5) / 2.0) ** 2)


def test_eigenvalues_2d_row_major():
    b = build_basis(2, 3, (math.pi, 2 * math.pi))
    assert b.n_modes == 9
    assert b.shape == (3, 3)
    # mode (i, j) sits at index 3 i + j
    assert b.eigenvalues[0] == pytest.approx(1.0 + 0.25)
    assert b.eigenvalues[1] == pytest.approx(1.0 + 1.0)
    assert b.eigenvalues[3] == pytest.approx(4.0 + 0.25)


@pytest.mark.parametrize(
    "dim, N, L",
    [(0, 4, 1.0), (3, 4, 1.0), (1, 0, 1.0), (1, 4, -1.0), (2, 4, (1.0, 2.0, 3.0)), (1, 4, float("nan"))],
)
def test_build_basis_rejects(dim, N, L):
    with pytest.raises(ConfigurationError):
        build_basis(dim, N, L)


@pytest.mark.parametrize("N, pad, M", [(16, 1.5, 24), (8, 1.0, 8), (5, 1.5, 8), (4, 2.0, 8)])
def test_grid_size(N, pad, M):
    assert grid_size(N, pad) == M


def test_unit_mode_samples():
    b = basis_1d(4)
    g = to_physical(b.unit(1), 1.5)
    x = np.arange(1, g.M + 1) * math.pi / (g.M + 1)
    np.testing.assert_allclose(g.samples, math.sqrt(2 / math.pi) * np.sin(2 * x), atol=1e-14)


def test_project_recovers_sine_sum():
    b = basis_1d(8)
    f = b.project(lambda x: np.sin(x) - 0.5 * np.sin(3 * x))
    want = np.zeros(8)
    want[0] = math.sqrt(math.pi / 2)
    want[2] = -0.5 * math.sqrt(math.pi / 2)
    np.testing.assert_allclose(f.coeffs, want, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(arrays(float, 12, elements=finite), paddings)
def test_round_trip_1d(c, pad):
    b = build_basis(1, 12, 1.7)
    back = to_spectral(to_physical(b.field(c), pad), b)
    np.testing.assert_allclose(back.coeffs, c, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(arrays(float, 25, elements=finite), paddings)
def test_round_trip_2d(c, pad):
    b = build_basis(2, 5, (1.0, 2.5))
    back = to_spectral(to_physical(b.field(c), pad), b)
    np.testing.assert_allclose(back.coeffs, c, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(float, 10, elements=finite), paddings)
def test_parseval(c, pad):
    b = build_basis(1, 10, 3.0)
    g = to_physical(b.field(c), pad)
    tr = b.transform(pad)
    quad_norm = tr.cell_volume * float(np.sum(g.samples**2))
    assert quad_norm == pytest.approx(float(c @ c), rel=1e-10, abs=1e-12)
    assert l2_norm(b.field(c)) ** 2 == pytest.approx(float(c @ c), rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(float, 8, elements=finite), arrays(float, 8, elements=finite), finite)
def test_transforms_linear(a, c, s):
    b = basis_1d(8)
    lhs = to_physical(b.field(a) + b.field(c) * s).samples
    rhs = to_physical(b.field(a)).samples + s * to_physical(b.field(c)).samples
    np.testing.assert_allclose(lhs, rhs, atol=1e-11)


@settings(max_examples=40, deadline=None)
@given(arrays(float, 9, elements=finite), st.floats(-2, 2), st.floats(-2, 2))
def test_power_composition(c, p, q):
    b = build_basis(2, 3, (1.0, 1.3))
    f = b.field(c)
    two = apply_power_A(apply_power_A(f, p), q).coeffs
    one = apply_power_A(f, p + q).coeffs
    np.testing.assert_allclose(two, one, rtol=1e-12, atol=1e-300)


def test_power_zero_is_identity():
    b = basis_1d(6)
    f = b.field(np.arange(6.0))
    np.testing.assert_array_equal(apply_power_A(f, 0).coeffs, f.coeffs)


def test_inner_product_of_units():
    b = basis_1d(5)
    assert l2_inner(b.unit(1), b.unit(1)) == 1.0
    assert l2_inner(b.unit(1), b.unit(3)) == 0.0


def test_single_length_broadcasts_to_square():
    assert build_basis(2, 3, 2.0).lengths == (2.0, 2.0)


def test_mixed_bases_rejected():
    with pytest.raises(ValueError):
        l2_inner(basis_1d(4).unit(0), basis_1d(5).unit(0))


def _loop_product_projection(N, M, L):
    # trapezoid sum written out directly on the interior grid
    x = np.arange(1, M + 1) * L / (M + 1)
    e = [math.sqrt(2 / L) * np.sin((m + 1) * math.pi * x / L) for m in range(N)]
    return np.array([L / (M + 1) * np.sum(e[0] ** 2 * e[m]) for m in range(N)])


@pytest.mark.parametrize("pad", [1.5, 2.0, 4.0])
def test_product_matches_quadrature_oracle(pad):
    b = basis_1d(8)
    f = to_physical(b.unit(0), pad)
    c = to_spectral(pointwise_multiply(f, f), b).coeffs
    np.testing.assert_allclose(c, _loop_product_projection(8, grid_size(8, pad), math.pi), atol=1e-14)


def test_product_converges_to_integral():
    b = basis_1d(8)
    exact = np.array([
        (2 / math.pi) ** 1.5 * quad(lambda x: np.sin(x) ** 2 * np.sin(m * x), 0, math.pi)[0]
        for m in range(1, 9)
    ])
    errs = []
    for pad in (1.5, 2.0, 4.0, 8.0):
        f = to_physical(b.unit(0), pad)
        errs.append(np.max(np.abs(to_spectral(pointwise_multiply(f, f), b).coeffs - exact)))
    assert errs[0] < 1e-3
    assert all(e1 < e0 for e0, e1 in zip(errs, errs[1:]))
    # even modes vanish by symmetry about the midpoint
    f = to_physical(b.unit(0), 1.5)
    assert np.max(np.abs(to_spectral(pointwise_multiply(f, f), b).coeffs[1::2])) < 1e-15


def test_pointwise_multiply_needs_same_grid():
    b = basis_1d(4)
    with pytest.raises(ValueError):
        pointwise_multiply(to_physical(b.unit(0), 1.5), to_physical(b.unit(0), 2.0))
