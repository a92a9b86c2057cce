import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ubmlab import biane_limit as bl
from ubmlab.characteristics import (
    CharacteristicPath, characteristic_map, characteristic_path, cusp_angular_decay_check,
    edge_angular_decay_check, integrate_characteristic)
from ubmlab.spectral_core import PolarPoint


def test_map_identity_at_s_equals_t():
    p = PolarPoint(1.3, 0.7)
    assert characteristic_map(p, 2.0, 2.0) is p


def test_map_radius_grows_backward():
    z = PolarPoint(1.2, 0.3)
    assert characteristic_map(z, 0.5, 1.0).log_r > z.log_r


def test_map_conjugate_symmetry():
    a = characteristic_map(1.5 * np.exp(0.8j), 0.3, 2.0)
    b = characteristic_map(1.5 * np.exp(-0.8j), 0.3, 2.0)
    assert a.z == pytest.approx(np.conj(b.z), abs=1e-14)


def test_map_rejects_bad_times():
    with pytest.raises(ValueError):
        characteristic_map(2.0, 1.5, 1.0)


def test_rk4_cross_check():
    z = 1.2 * np.exp(0.3j)
    q = integrate_characteristic(z, 1.0, 0.5, h=1e-3)
    c = characteristic_map(z, 0.5, 1.0)
    assert abs(q.z - c.z) < 1e-10


@settings(max_examples=40)
@given(st.floats(1.01, 3.0), st.floats(-math.pi, math.pi), st.floats(0.1, 4.5))
def test_path_constancy_and_monotone_radius(r, theta, t):
    p = characteristic_path(PolarPoint(r, theta), t, 16)
    assert p.drift() <= 1e-9
    assert p.max_radial_residual() <= 1e-6
    assert p.radius_monotone()
    if abs(math.sin(theta)) > 1e-12:
        assert not p.crosses_real_axis()
    # growth bound C e^{C T} with C = 4
    assert np.max(np.exp(p.log_r)) <= 4 * math.exp(4 * t)


def test_interior_path_constancy():
    p = characteristic_path(PolarPoint(0.6, 1.0), 2.0, 10)
    assert p.drift() <= 1e-9
    assert p.max_radial_residual() <= 1e-6


def test_path_csv_roundtrip():
    p = characteristic_path(PolarPoint(1.5, 0.4), 1.0, 8)
    text = p.to_csv()
    assert text.isascii()
    cols = CharacteristicPath.read_csv(text)
    np.testing.assert_array_equal(cols["s"], p.s)
    np.testing.assert_array_equal(cols["log_r"], p.log_r)
    np.testing.assert_array_equal(cols["f_re"], p.f.real)
    assert math.isnan(cols["kappa"][0])  # s = 0 has no edge


def test_path_requires_two_intervals():
    with pytest.raises(ValueError):
        characteristic_path(2.0, 1.0, 1)


def test_cusp_decay_example():
    t = 3.9
    d = bl.gap(t)
    z = PolarPoint(1 + d / 100, bl.theta_edge(t) + d / 4)
    rep = cusp_angular_decay_check(z, 4 - t)
    assert rep.status == "ok"
    assert rep.passed and rep.slope > 0
    assert rep.kappa_monotone
    assert np.all(np.diff(rep.times) < 0) and rep.times[0] == pytest.approx(t)


def test_cusp_decay_kappa_zero_boundary():
    t = 3.9
    d = bl.gap(t)
    rep = cusp_angular_decay_check(PolarPoint(1 + d / 100, bl.theta_edge(t)), 4 - t)
    assert rep.kappa_monotone
    assert rep.slope > 0


def test_cusp_decay_skipped_far_from_cusp():
    rep = cusp_angular_decay_check(PolarPoint(1.01, 2.0), 4 - 2.0)
    assert rep.status.startswith("skipped")
    assert not rep.passed


def test_cusp_decay_reports_window_exit():
    t = 3.9
    d = bl.gap(t)
    z = PolarPoint(1 + 1.5 * d, bl.theta_edge(t) + d / 4)
    rep = cusp_angular_decay_check(z, 4 - t, window=1.0)
    assert rep.left_window_at is not None


@pytest.mark.parametrize("t", [0.6, 1.5, 2.5, 3.4])
def test_edge_decay(t):
    slopes = []
    for k in (1e-4, 1e-3, 1e-2):
        rep = edge_angular_decay_check(PolarPoint(1.001, bl.theta_edge(t) + k), t)
        assert rep.passed
        slopes.append(rep.slope_lower)
    assert min(slopes) > 0
