import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from ubmlab import biane_limit as bl
from ubmlab.errors import SolverError


# -- edges and gap ----------------------------------------------------------

def test_theta_edge_values():
    assert bl.theta_edge(4.0) == pytest.approx(math.pi, abs=1e-15)
    assert bl.theta_edge(2.0) == pytest.approx(1.0 + math.pi / 2, abs=1e-15)
    assert bl.theta_edge(1e-4) == pytest.approx(0.02, rel=1e-2)
    assert bl.theta_edge(0.0) == 0.0


def test_gap_values():
    assert bl.gap(4.0) == 0.0
    assert bl.gap(0.0) == pytest.approx(2 * math.pi)
    assert bl.gap(3.99) == pytest.approx(0.01 ** 1.5 / 3, rel=0.05)


def test_gap_series_matches_closed_form():
    # both branches of the half-gap evaluation near the switch
    for t in (3.99, 3.995, 3.999, 3.9999):
        direct = 2 * (math.pi - 0.5 * math.sqrt((4 - t) * t) - 2 * math.asin(math.sqrt(t / 4)))
        assert bl.gap(t) == pytest.approx(direct, rel=1e-6, abs=1e-15)


@pytest.mark.parametrize("t", [-0.1, 4.01, float("nan")])
def test_edge_domain(t):
    with pytest.raises(ValueError):
        bl.theta_edge(t)


@given(st.floats(0.0, 3.99), st.floats(1e-3, 0.01))
def test_edge_monotone(t, h):
    assert bl.theta_edge(t + h) > bl.theta_edge(t)
    assert bl.gap(t + h) < bl.gap(t)


# -- boundary ---------------------------------------------------------------

def test_boundary_k_extended_precision():
    mpmath.mp.dps = 40
    x, t = mpmath.mpf("0.5"), mpmath.mpf(2)
    e = mpmath.exp(t * x)
    ref = mpmath.sqrt(((x + 1) ** 2 - (x - 1) ** 2 * e) / (e - 1))
    assert bl.boundary_k(0.5, 2.0) == pytest.approx(float(ref), rel=1e-14)


def test_boundary_k_limits():
    assert bl.boundary_k(1e-12, 2.0) == pytest.approx(1.0, abs=1e-9)
    assert bl.boundary_k(0.0, 2.0) == pytest.approx(1.0, abs=1e-12)
    xp = bl.x_plus(2.0)
    assert bl.boundary_k(xp, 2.0) <= 1e-7
    with pytest.raises(ValueError):
        bl.boundary_k(xp + 0.1, 2.0)


def test_x_minus():
    assert bl.x_minus(1.0) == 0.0
    assert bl.x_minus(4.0) == 0.0
    assert bl.x_minus(4.01) == pytest.approx(math.sqrt(3) / 2 * 0.1, rel=0.1)


@given(st.floats(0.05, 12.0))
def test_x_pm_are_zeros(t):
    xp = bl.x_plus(t)
    assert xp > 1
    assert abs(bl.boundary_h(xp, t)) < 1e-10
    if t > 4:
        xm = bl.x_minus(t)
        assert 0 < xm < 1
        assert abs(bl.boundary_h(xm, t)) < 1e-10


@given(st.floats(0.05, 10.0))
def test_boundary_theta_monotone(t):
    xm, xp = bl.x_minus(t), bl.x_plus(t)
    x = np.linspace(xm, xp, 401)[1:-1]
    th = bl.boundary_theta(x, t)
    assert np.all(np.diff(th) < 0)


# -- transform --------------------------------------------------------------

def test_transform_trivial():
    for t in (0.5, 2.0, 4.5):
        assert bl.limiting_transform(0.0, t) == pytest.approx(1.0, abs=1e-13)
    z = np.complex128(0.3 + 0.2j)
    assert bl.limiting_transform(z, 0.0) == (1 + z) / (1 - z)


def test_transform_boundary_value_at_edge():
    w = bl.limiting_transform(np.exp(1j * bl.theta_edge(2.0)), 2.0)
    assert w == pytest.approx(1j, abs=1e-12)


def test_transform_quadrature_oracle():
    # Poisson integral of the density at z = 0.5, t = 1 (10^6-point trapezoid)
    t, z = 1.0, 0.5
    w = bl.limiting_transform(z, t)
    lt = bl.LimitTransform(t)
    assert abs(bl.self_consistent_map(w, t) - z) < 1e-13
    th = np.linspace(-math.pi, math.pi, 1_000_001)
    rho = bl.density(th, t)
    lam = np.exp(1j * th)
    ref = np.trapezoid(rho * (lam + z) / (lam - z), th)
    assert w == pytest.approx(ref, abs=1e-9)
    assert lt.residual(z, w) < 1e-13


@given(st.floats(0.02, 10.0), st.floats(-5.0, 5.0).filter(lambda v: abs(v) > 1e-3),
       st.floats(-math.pi, math.pi))
def test_transform_residual_and_branch(t, logr, theta):
    z = math.exp(logr) * complex(math.cos(theta), math.sin(theta))
    lt = bl.LimitTransform(t)
    w = lt(z)
    assert lt.last_residual <= 1e-13 * (1 + abs(z))
    if logr < 0:
        assert w.real >= 0
        assert abs(w) <= 3 * (1 + t ** -0.5)
    else:
        assert w.real <= 0


@given(st.floats(0.05, 8.0), st.floats(0.05, 2.0), st.floats(-math.pi, math.pi))
def test_transform_reflection(t, logr, theta):
    z = math.exp(logr) * complex(math.cos(theta), math.sin(theta))
    lt = bl.LimitTransform(t)
    a, b = lt(z), lt(1 / np.conj(z))
    assert a == pytest.approx(-np.conj(b), abs=1e-12 * (1 + abs(a)))


def test_transform_vectorized_and_polar():
    from ubmlab.spectral_core import PolarPoint
    lt = bl.LimitTransform(1.5)
    zs = np.array([0.2, 0.5j, 1.7 * np.exp(0.4j)])
    w = lt(zs)
    assert w.shape == (3,)
    assert lt(PolarPoint(1.7, 0.4)) == pytest.approx(w[2], abs=1e-14)


def test_transform_rejects_support_point():
    with pytest.raises(ValueError):
        bl.limiting_transform(1.0 + 0j, 1.0)
    with pytest.raises(ValueError):
        bl.limiting_transform(-1.0 + 0j, 4.5)


def test_gap_boundary_value_is_imaginary():
    t = 1.0
    th = np.linspace(bl.theta_edge(t) + 1e-3, math.pi, 9)
    w = bl.LimitTransform(t)(np.exp(1j * th))
    assert np.all(w.real == 0)
    assert np.all(w.imag[:-1] > 0)
    assert w[-1] == 0


# -- density ----------------------------------------------------------------

@pytest.mark.parametrize("t", [0.25, 1.0, 2.0, 3.9, 4.0, 4.5])
def test_density_curve_mass(t):
    c = bl.density_curve(t)
    assert abs(c.trapezoid_mass() - 1.0) <= 1e-6
    assert np.all(c.rho >= 0)
    np.testing.assert_allclose(c.rho, c.rho[::-1], atol=0)
    np.testing.assert_allclose(c.theta, -c.theta[::-1], atol=1e-15)
    if t < 4:
        assert np.all(c.rho[np.abs(c.theta) > c.edge] == 0)
    assert c.metadata()["gap"] == pytest.approx(bl.gap(min(t, 4.0)))


def test_density_examples():
    e2 = bl.theta_edge(2.0)
    assert bl.density(e2 + 0.1, 2.0) == 0.0
    assert bl.density(-e2 - 0.1, 2.0) == 0.0
    assert bl.density(math.pi, 4.0) == pytest.approx(0.0, abs=1e-12)
    s = 0.01
    assert bl.density(math.pi, 4 + s) == pytest.approx(math.sqrt(3 * s) / (4 * math.pi), rel=0.15)


def test_density_matches_boundary_limit():
    t = 2.0
    th = 0.9
    w = bl.limiting_transform(0.999999 * np.exp(1j * th), t)
    assert bl.density(th, t) == pytest.approx(w.real / (2 * math.pi), rel=1e-3)


def test_edge_square_root_constant():
    E = 1e-6
    val = bl.density(bl.theta_edge(2.0) - E, 2.0) / math.sqrt(E)
    assert val == pytest.approx(0.22508, rel=0.02)
    assert bl.sqrt_edge_constant(2.0) == pytest.approx(0.2250790790392765, rel=1e-12)


def test_exact_cusp():
    E = 1e-6
    val = bl.density(math.pi - E, 4.0) / E ** (1 / 3)
    assert val == pytest.approx(0.15776, rel=0.03)


@pytest.mark.parametrize("E", [1e-7, 1e-6, 1e-5])
def test_short_time_shape(E):
    t = 0.01
    ratio = bl.density(bl.theta_edge(t) - E, t) / (bl.sqrt_edge_constant(t) * math.sqrt(E))
    assert abs(ratio - 1) <= 5 * E / math.sqrt(t) + 1e-4


@pytest.mark.parametrize("t", [4.5, 6.0, 10.0])
def test_interior_lower_bound(t):
    th = np.linspace(-math.pi, math.pi, 2001)
    assert bl.density(th, t).min() > 0.01


# -- quantiles --------------------------------------------------------------

def test_quantiles_cdf_oracle():
    t, N = 1.0, 100
    q = bl.quantiles(t, N)
    assert np.all(np.diff(q.gamma) >= 0)
    assert q[50] == 0.0
    assert q[N] == bl.theta_edge(t)
    f = lambda th: bl.density(th, t)
    edge = bl.theta_edge(t)
    for i in range(1, N + 1):
        g = q[i]
        if g >= 0:
            m = integrate.quad(f, g, edge, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
            cdf = 1.0 - m
        else:
            cdf = integrate.quad(f, -edge, g, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
        assert abs(cdf - i / N) <= 1e-8, i


def test_quantiles_extended_and_t_ge_4():
    q = bl.quantiles(4.5, 10)
    assert q[10] == math.pi
    assert q[13] == pytest.approx(2 * math.pi + q[3])
    assert q[-2] == pytest.approx(q[8] - 2 * math.pi)
    assert q[5] == 0.0


@given(st.floats(0.1, 6.0), st.integers(1, 300))
def test_quantiles_monotone_and_cdf(t, N):
    q = bl.quantiles(t, N)
    assert np.all(np.diff(q.gamma) >= 0)
    i = np.arange(1, N + 1)
    np.testing.assert_allclose(bl.cdf(q.gamma, t), i / N, atol=1e-8)


# -- shape functions --------------------------------------------------------

def test_shape_psi_e_limits():
    assert bl.shape_psi_e(0.0) == 0.0
    assert bl.shape_psi_m(0.0) == 0.0
    assert bl.shape_psi_e(1e-8) / 1e-4 == pytest.approx(1 / 3, rel=1e-3)
    assert bl.shape_psi_e(1e8) / 1e8 ** (1 / 3) == pytest.approx(4 ** (-2 / 3), rel=1e-3)


@given(st.floats(1e-3, 1e3))
def test_shape_psi_e_closed_form(lam):
    # Cardano form (A^{1/3} - A^{-1/3})/4 in extended precision
    mpmath.mp.dps = 30
    L = mpmath.mpf(lam)
    s = mpmath.sqrt(L * (1 + L))
    A = 1 + 2 * L + 2 * s
    ref = (mpmath.cbrt(A) - 1 / mpmath.cbrt(A)) / 4
    assert bl.shape_psi_e(lam) == pytest.approx(float(ref), rel=1e-12)


@given(st.floats(-100, 100))
def test_shape_psi_m_even_nonnegative(lam):
    a, b = bl.shape_psi_m(lam), bl.shape_psi_m(-lam)
    assert a == b
    assert a >= 0


def test_edge_shape_check_examples():
    t = 3.9
    d = bl.gap(t)
    num, pred = bl.edge_shape_check(t, d / 2)
    assert num / pred == pytest.approx(1.0, rel=0.10)
    num, pred = bl.edge_shape_check(t, d * 1e-3)
    assert num / pred == pytest.approx(1.0, rel=0.05)
    # cube-root window, measured in units of the exact t = 4 cusp law
    c4 = bl.cusp_constant()
    for E in (0.03, 0.04, 0.05):
        num, _ = bl.edge_shape_check(t, E)
        assert c4 * E ** (1 / 3) / 3 <= num <= 3 * c4 * E ** (1 / 3)
    with pytest.raises(ValueError):
        bl.edge_shape_check(3.0, 0.01)


def test_solver_error_carries_residual():
    err = SolverError("x", 1.5)
    assert err.residual == 1.5
