import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.linalg import expm

from ubmlab import ubm_sim
from ubmlab.errors import CollisionError
from ubmlab.spectral_core import EigenAngleConfig, PolarPoint
from ubmlab.ubm_sim import (SimConfig, expm_i, hermitian_bm_increment, martingale_qv_density,
                            scheme_trace_mean, simulate, simulate_ensemble, step_unitary,
                            trial_rng, unitarity_defect, unitary_angles)


# -- increments ---------------------------------------------------------------

@pytest.mark.parametrize("method", ["symmetrize", "triangle"])
def test_increment_hermitian(method):
    H = hermitian_bm_increment(7, 0.3, trial_rng(1, 0), method=method)
    assert np.array_equal(H, H.conj().T)


def test_increment_n1_is_real_gaussian():
    rng = trial_rng(2, 0)
    x = np.array([hermitian_bm_increment(1, 0.25, rng)[0, 0] for _ in range(20000)])
    assert np.all(x.imag == 0)
    assert stats.kstest(x.real / 0.5, "norm").pvalue > 0.01


@pytest.mark.parametrize("method", ["symmetrize", "triangle"])
def test_increment_second_moments(method):
    N, dt, n = 3, 0.2, 100_000
    rng = trial_rng(3, 0)
    H = np.array([hermitian_bm_increment(N, dt, rng, method=method) for _ in range(n)])
    off = np.abs(H[:, 0, 1]) ** 2
    diag = H[:, 1, 1].real ** 2
    for sample in (off, diag):
        se = sample.std() / math.sqrt(n)
        assert abs(sample.mean() - dt / N) < 3 * se
    # real and imaginary parts of an off-diagonal entry are uncorrelated
    assert abs(np.mean(H[:, 0, 1].real * H[:, 0, 1].imag)) < 3 * dt / N / math.sqrt(n)


def test_increment_rejects_bad_dt():
    with pytest.raises(ValueError):
        hermitian_bm_increment(3, 0.0, trial_rng(0, 0))


# -- stepping -----------------------------------------------------------------

@given(st.integers(1, 12), st.floats(1e-4, 3.0), st.integers(0, 2 ** 32))
@settings(max_examples=30)
def test_expm_i_matches_scipy(N, scale, seed):
    H = hermitian_bm_increment(N, scale, trial_rng(seed, 0))
    P = expm_i(H)
    assert np.max(np.abs(P - expm(1j * H))) < 1e-12 * max(1.0, scale)
    assert unitarity_defect(P) < 1e-13


def test_step_zero_increment_keeps_u():
    U = expm_i(hermitian_bm_increment(5, 1.0, trial_rng(5, 0)))
    assert np.array_equal(step_unitary(U, np.zeros((5, 5))), U)


def test_step_reorthonormalizes_defective_input():
    U = expm_i(hermitian_bm_increment(6, 1.0, trial_rng(6, 0))) * (1 + 1e-6)
    assert unitarity_defect(U) > 1e-8
    V = step_unitary(U, np.zeros((6, 6)))
    assert unitarity_defect(V) < 1e-10


def test_unitary_angles_cayley_matches_eigvals():
    rng = trial_rng(7, 0)
    U = expm_i(hermitian_bm_increment(20, 2.0, rng))
    ref = np.sort(np.angle(np.linalg.eigvals(U)))
    got = unitary_angles(U, hint=ref + 0.01 * rng.standard_normal(20))
    assert np.max(np.abs(got - ref)) < 1e-12


def test_n1_phase_is_brownian():
    cfg = SimConfig(N=1, t_final=1.0, dt=0.01, seed=11)
    tr = simulate_ensemble(cfg, 600)
    phase = np.array([t.final.angles[0] for t in tr])
    tw = np.array([t.trace_w[-1] for t in tr])
    assert np.max(np.abs(phase - tw)) < 1e-12  # e^{i sum dW}
    assert stats.kstest(phase, "norm").pvalue > 0.01


def test_weak_order_exact_scheme_mean():
    errs = [scheme_trace_mean(64, 2.0 ** -k, 1.0) - math.exp(-0.5) for k in (8, 9, 10)]
    r1, r2 = errs[0] / errs[1], errs[1] / errs[2]
    assert 1.9 < r1 < 2.1 and 1.9 < r2 < 2.1


def test_scheme_mean_formula_against_implementation():
    # one big step at N = 4: E (1/N) tr exp(i dW) from the library's own increments
    N, dt, n = 4, 0.5, 40000
    rng = trial_rng(12, 0)
    vals = np.array([np.trace(expm_i(hermitian_bm_increment(N, dt, rng, "triangle"))).real / N
                     for _ in range(n)])
    se = vals.std() / math.sqrt(n)
    assert abs(vals.mean() - scheme_trace_mean(N, dt, dt)) < 3 * se


def test_matrix_unitarity_and_com():
    tr = simulate(SimConfig(N=16, t_final=1.0, dt=1e-3, seed=3, snapshots=(0.25, 0.5)))
    assert tr.max_defect() <= 1e-10
    assert tr.com_discrepancy() < 1e-10
    assert tr.times.tolist() == [0.25, 0.5, 1.0]


def test_t_final_zero_gives_identity():
    for mode in ("matrix", "particles"):
        tr = simulate(SimConfig(N=5, t_final=0.0, mode=mode))
        assert tr.times.tolist() == [0.0]
        assert np.all(tr.final.angles == 0)


def test_determinism_bit_identical():
    for mode in ("matrix", "particles"):
        cfg = SimConfig(N=12, t_final=0.2, dt=1e-3, seed=99, mode=mode, snapshots=(0.1,))
        a, b = simulate(cfg), simulate(cfg)
        assert a.to_csv() == b.to_csv()
        for x, y in zip(a.snapshots, b.snapshots):
            assert np.array_equal(x.angles, y.angles)
        assert np.array_equal(a.trace_w, b.trace_w, equal_nan=True)


def test_ensemble_order_independent():
    cfg = SimConfig(N=6, t_final=0.05, dt=1e-3, seed=5)
    serial = simulate_ensemble(cfg, 4)
    parallel = simulate_ensemble(cfg, 4, jobs=2)
    shifted = simulate_ensemble(cfg, 2, first_trial=2)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.final.angles, b.final.angles)
    for a, b in zip(serial[2:], shifted):
        assert np.array_equal(a.final.angles, b.final.angles)
    assert serial[0].stream == (5, 0) and serial[3].stream == (5, 3)


# -- configuration ------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(N=4, t_final=1.0, mode="particles", beta=0.5)
    with pytest.raises(ValueError):
        SimConfig(N=4, t_final=1.0, beta=1.0)  # matrix mode fixes beta = 2
    with pytest.raises(ValueError):
        SimConfig(N=0, t_final=1.0)
    with pytest.raises(ValueError):
        SimConfig(N=4, t_final=1e-4, dt=1e-3)
    with pytest.raises(ValueError):
        SimConfig(N=4, t_final=1.0, snapshots=(2.0,))
    cfg = SimConfig(N=4, t_final=1.0, snapshots=(0.5, 0.5))
    assert cfg.snapshots == (0.5, 1.0)
    assert SimConfig.from_dict(cfg.to_dict()) == cfg


# -- particle mode ------------------------------------------------------------

def test_cyclic_solve_matches_dense():
    rng = np.random.default_rng(0)
    for n, cyc in [(1, False), (2, False), (3, True), (9, True), (9, False)]:
        o = -rng.uniform(0.1, 1.0, n)
        d = 2.5 + rng.uniform(0, 1, n)
        A = np.diag(d)
        for i in range(n - 1):
            A[i, i + 1] = A[i + 1, i] = o[i]
        if cyc and n > 2:
            A[0, n - 1] = A[n - 1, 0] = o[n - 1]
        r = rng.standard_normal(n)
        out = np.empty(n)
        ubm_sim._cyclic_solve(d, o, r, out, cyc)
        assert np.allclose(A @ out, r, atol=1e-13)


def test_far_drift_matches_brute_force():
    x = np.sort(np.random.default_rng(1).uniform(-3, 3, 40))
    out = np.empty(40)
    ubm_sim._far_drift(x, out)
    n = x.size
    ref = np.zeros(n)
    for i in range(n):
        for j in range(n):
            if j != i and (j - i) % n not in (1, n - 1):
                ref[i] += 1 / math.tan((x[i] - x[j]) / 2)
    assert np.allclose(out, ref / (2 * n), atol=1e-12)


def test_implicit_near_stationarity():
    rng = np.random.default_rng(2)
    n, h = 20, 1e-3
    a = np.sort(rng.uniform(-3, 3, n))
    x = a.copy()
    it = ubm_sim._implicit_near(a, x, h, 1.0 / n, 1e-14, 60)
    assert it >= 0
    g = np.diff(np.concatenate([x, [x[0] + 2 * math.pi]]))
    assert np.all(g > 0)
    cot = 1 / np.tan(g / 2)
    grad = (x - a) / h + 0.5 / n * cot - 0.5 / n * np.roll(cot, 1)
    assert np.max(np.abs(grad)) < 1e-8


@pytest.mark.parametrize("beta", [1.0, 2.0, 4.0])
def test_particles_keep_ordering(beta):
    tr = simulate(SimConfig(N=32, t_final=1.0, mode="particles", beta=beta, seed=1,
                            snapshots=(0.1, 0.5)))
    for s in tr.snapshots:
        a = s.angles
        assert np.all(np.diff(a) > 0) and a[-1] - a[0] < 2 * math.pi


def test_particles_n2():
    tr = simulate(SimConfig(N=2, t_final=0.5, mode="particles", seed=4))
    a = tr.final.angles
    assert a[0] < a[1] < a[0] + 2 * math.pi


def test_collision_error_after_max_halvings():
    stp = ubm_sim._ParticleStepper(np.array([0.0, 1e-12, 2.0]), 3, 2.0, trial_rng(0, 0),
                                   gap_floor=1.0, max_depth=2)
    with pytest.raises(CollisionError):
        stp.advance(1e-3, np.zeros(3))


def test_matrix_and_particle_laws_agree_small():
    N = 8
    m = simulate_ensemble(SimConfig(N=N, t_final=1.0, dt=1e-2, seed=21, unwrap=False), 300)
    p = simulate_ensemble(SimConfig(N=N, t_final=1.0, dt=1e-2, seed=22, mode="particles"), 300)
    top_m = [t.final.principal()[-1] for t in m]
    top_p = [t.final.principal()[-1] for t in p]
    assert stats.ks_2samp(top_m, top_p).pvalue > 0.01


# -- covariation densities ----------------------------------------------------

def test_qv_density_example():
    first, second = martingale_qv_density(np.eye(1), 2.0)
    assert first == pytest.approx(-16.0) and second == pytest.approx(16.0)
    first, second = martingale_qv_density(EigenAngleConfig(0.0, np.zeros(1)), PolarPoint(2.0, 0.0))
    assert first == pytest.approx(-16.0) and second == pytest.approx(16.0)


@given(st.lists(st.floats(-3.1, 3.1), min_size=1, max_size=20),
       st.floats(0.1, 3.0), st.floats(-math.pi, math.pi))
def test_qv_second_dominates_first(ang, r, th):
    if abs(r - 1) < 1e-3:
        r += 0.01
    cfg = EigenAngleConfig.from_unsorted(0.0, ang)
    first, second = martingale_qv_density(cfg, PolarPoint(r, th))
    assert second >= abs(first) * (1 - 1e-12)


def test_qv_density_rejects_circle():
    with pytest.raises(ValueError):
        martingale_qv_density(np.eye(2), 1.0 + 1e-14)


def _transform_and_drift(lam, z):
    # f = (1/N) tr (U + z)(U - z)^{-1} and its Ito drift from dU = iU dW - U dt/2
    N = lam.size
    f = np.mean((lam + z) / (lam - z))
    b = 2 * z / N * (0.5 - np.sum(lam / (lam - z)) / N) * np.sum(lam / (lam - z) ** 2)
    return f, b


def test_drift_formula_one_step():
    N, z, dt, n = 8, 1.5, 1e-4, 20000
    rng = trial_rng(41, 0)
    U = expm_i(hermitian_bm_increment(N, 0.3, rng))
    lam = np.linalg.eigvals(U)
    f0, b = _transform_and_drift(lam, z)
    d = np.array([_transform_and_drift(np.linalg.eigvals(
        U @ expm_i(hermitian_bm_increment(N, dt, rng, "triangle"))), z)[0] - f0
        for _ in range(n)])
    assert abs(d.mean() / dt - b) < 4 * d.std() / dt / math.sqrt(n)


def test_realized_qv_matches_density_integral():
    # pathwise limit, so a few realizations suffice; increments are compensated
    # by the drift, whose square-sum bias is comparable to the O(1/N^2) signal
    N, dt, T, z = 64, 1e-4, 0.5, 1.5
    n = int(round(T / dt))
    ratios = []
    for trial in range(3):
        stp = ubm_sim.MatrixStepper(N, trial_rng(31, trial))
        ang = np.zeros(N)
        f_prev, b_prev = _transform_and_drift(np.exp(1j * ang), z)
        q_prev = martingale_qv_density(EigenAngleConfig(0.0, ang), z)[1]
        rv = integ = 0.0
        for k in range(n):
            ang = unitary_angles(stp.step(dt), hint=ang)
            f, b = _transform_and_drift(np.exp(1j * ang), z)
            q = martingale_qv_density(EigenAngleConfig(k * dt, ang), z)[1]
            rv += abs(f - f_prev - b_prev * dt) ** 2
            integ += 0.5 * (q + q_prev) * dt
            f_prev, b_prev, q_prev = f, b, q
        ratios.append(rv / integ)
    assert abs(np.mean(ratios) - 1) < 0.1
