"""Monte Carlo engines for unitary Brownian motion and circular Dyson dynamics.

Matrix mode integrates ``dU = i U dW - U dt / 2`` by ``U <- U exp(i dW)``.
Particle mode integrates the circular log-gas

    d theta_i = sqrt(2/(N beta)) dB_i + (1/2N) sum_{j != i} cot((theta_i - theta_j)/2) dt

with a semi-implicit Euler step: the nearest-neighbour repulsion is solved
implicitly (a convex problem with a log barrier, so the cyclic ordering can
never break) and the remaining pairs are explicit.

Every trial draws from its own counter-based stream keyed on
``(seed, trial)``, so ensembles do not depend on execution order.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
from scipy.linalg import eigvalsh_tridiagonal
from scipy.special import eval_genlaguerre

from . import biane_limit
from .errors import CollisionError
from .spectral_core import RADIUS_FLOOR, EigenAngleConfig, PolarPoint

__all__ = [
    "SimConfig",
    "Trajectory",
    "hermitian_bm_increment",
    "step_unitary",
    "expm_i",
    "unitary_angles",
    "unitarity_defect",
    "MatrixStepper",
    "simulate",
    "simulate_ensemble",
    "trial_rng",
    "martingale_qv_density",
    "scheme_trace_mean",
]

_TWO_PI = 2.0 * math.pi
MODES = ("matrix", "particles")


def trial_rng(seed, trial):
    """Philox stream for one trial, keyed on (seed, trial)."""
    ss = np.random.SeedSequence([int(seed) & (2 ** 64 - 1), int(trial)])
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# configuration and results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters.

    ``snapshots`` are the recording times; ``t_final`` is always recorded.
    Matrix mode fixes ``beta = 2``; particle mode needs ``beta >= 1``.
    ``track_spacing`` bounds the spacing of the eigenvalue-tracking times
    used to unwrap angles continuously in matrix mode.
    """

    N: int
    t_final: float
    dt: float = 1e-3
    beta: float = 2.0
    seed: int = 0
    mode: str = "matrix"
    snapshots: tuple = ()
    trial: int = 0
    unwrap: bool = True
    track_spacing: float = 1e-2
    reorth_every: int = 256
    cfl: float = 0.5

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.t_final == 0 or self.t_final >= self.dt):
            raise ValueError("t_final must be 0 or at least dt")
        if self.mode == "matrix" and self.beta != 2:
            raise ValueError("matrix mode fixes beta = 2")
        if self.beta < 1:
            raise ValueError("beta >= 1 is required (collisions are not handled below 1)")
        if not 0 < self.track_spacing <= 1e-2:
            raise ValueError("track_spacing must lie in (0, 1e-2]")
        snaps = sorted({float(s) for s in self.snapshots} | {float(self.t_final)})
        if snaps[0] < 0 or snaps[-1] > self.t_final:
            raise ValueError("snapshot times must lie in [0, t_final]")
        object.__setattr__(self, "snapshots", tuple(snaps))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "seed", int(self.seed))

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return SimConfig(**d)

    def to_dict(self):
        d = asdict(self)
        d["snapshots"] = list(self.snapshots)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["snapshots"] = tuple(d.get("snapshots", ()))
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots of one run.

    ``trace_w`` is ``(1/N) tr W_t`` and ``trace_u`` is ``(1/N) tr U_t`` at the
    snapshot times (NaN in particle mode).  ``com_times``, ``com`` and
    ``com_w`` hold the centre of mass of the unwrapped angles and
    ``(1/N) tr W_t`` at every tracking time (matrix mode with unwrapping).
    """

    config: SimConfig
    times: np.ndarray
    snapshots: tuple
    trace_w: np.ndarray
    trace_u: np.ndarray
    defects: np.ndarray
    com_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    com: np.ndarray = field(default_factory=lambda: np.empty(0))
    com_w: np.ndarray = field(default_factory=lambda: np.empty(0))
    substeps: int = 0
    steps: int = 0
    wall_time: float = 0.0

    @property
    def stream(self):
        return (self.config.seed, self.config.trial)

    def at(self, t):
        """Snapshot at time t (exact match)."""
        i = int(np.flatnonzero(self.times == float(t))[0])
        return self.snapshots[i]

    @property
    def final(self):
        return self.snapshots[-1]

    def max_defect(self):
        return float(np.max(self.defects)) if self.defects.size else 0.0

    def com_discrepancy(self):
        """``max_t |theta_bar(t) - (1/N) tr W_t|`` over the tracking times."""
        if self.com.size == 0:
            return math.nan
        return float(np.max(np.abs(self.com - self.com_w)))

    def to_csv(self):
        parts = [s.to_csv() for s in self.snapshots]
        return parts[0] + "".join(p.split("\n", 1)[1] for p in parts[1:])

    def manifest(self):
        return {
            "config": self.config.to_dict(),
            "stream": list(self.stream),
            "unitarity_defects": self.defects.tolist(),
            "steps": self.steps,
            "substeps": self.substeps,
            "wall_time": self.wall_time,
        }

    def manifest_json(self):
        return json.dumps(self.manifest(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# matrix mode
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _fill_hermitian(g, H, s_off, s_diag):
    n = H.shape[0]
    k = 0
    for i in range(n):
        H[i, i] = g[k] * s_diag
        k += 1
        for j in range(i + 1, n):
            v = complex(g[k] * s_off, g[k + 1] * s_off)
            H[i, j] = v
            H[j, i] = v.conjugate()
            k += 2


def hermitian_bm_increment(N, dt, rng, method="symmetrize"):
    """Increment of a Hermitian Brownian motion with ``E|dW_ij|^2 = dt/N``.

    ``method="symmetrize"`` forms ``(X + X^T + i(X' - X'^T))/sqrt(4N)`` from two
    matrices of i.i.d. N(0, dt) entries.  ``method="triangle"`` draws the same
    law from N^2 normals (upper triangle and diagonal only), half the cost.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if method == "symmetrize":
        X = rng.standard_normal((2, N, N))
        X *= math.sqrt(dt)
        return (X[0] + X[0].T + 1j * (X[1] - X[1].T)) / math.sqrt(4.0 * N)
    if method == "triangle":
        H = np.empty((N, N), complex)
        _fill_hermitian(rng.standard_normal(N * N), H, math.sqrt(dt / (2.0 * N)), math.sqrt(dt / N))
        return H
    raise ValueError(f"unknown method {method!r}")


@numba.njit(cache=True)
def _taylor8_blocks(A, A2, A3, A4, B0, B1):
    # B0 = I + A + A^2/2 + A^3/6,  B1 = I/24 + A/120 + A^2/720 + A^3/5040 + A^4/40320
    n = A.shape[0]
    for i in range(n):
        for j in range(n):
            a, a2, a3, a4 = A[i, j], A2[i, j], A3[i, j], A4[i, j]
            B0[i, j] = a + a2 / 2.0 + a3 / 6.0
            B1[i, j] = a / 120.0 + a2 / 720.0 + a3 / 5040.0 + a4 / 40320.0
        B0[i, i] += 1.0
        B1[i, i] += 1.0 / 24.0


_TRUNCATION_TOL = 1e-15


def expm_i(H):
    """``exp(i H)`` for Hermitian H by a degree-8 Taylor polynomial.

    With ``A = iH`` anti-Hermitian and an even truncation degree the terms of
    ``P* P - I`` cancel through the truncation degree plus one, so the
    polynomial is unitary to rounding at small norms.  Evaluated as
    ``B0 + A^4 B1`` in four products.  The tail is bounded by
    ``||A^3||_1^3 / 9!``; H is scaled by ``2^-s`` until that is below 1e-15
    and the result squared back.
    """
    A = 1j * np.asarray(H, dtype=complex)
    A2 = A @ A
    A3 = A2 @ A
    tail = np.abs(A3).sum(axis=0).max() ** 3 / 362880.0
    s = 0
    if tail > _TRUNCATION_TOL:
        s = int(math.ceil(math.log2(tail / _TRUNCATION_TOL) / 9.0))
        A = A / 2.0 ** s
        A2 = A2 / 4.0 ** s
        A3 = A3 / 8.0 ** s
    A4 = A2 @ A2
    B0 = np.empty_like(A)
    B1 = np.empty_like(A)
    _taylor8_blocks(A, A2, A3, A4, B0, B1)
    P = B0 + A4 @ B1
    for _ in range(s):
        P = P @ P
    if not np.all(np.isfinite(P)):
        raise FloatingPointError("matrix exponential did not converge")
    return P


def unitarity_defect(U):
    """``max_ij |U U* - I|``."""
    return float(np.max(np.abs(U @ U.conj().T - np.eye(U.shape[0]))))


def _reorthonormalize(U):
    # one Newton-Schulz step toward the polar factor: defect d -> O(d^2)
    return 0.5 * U @ (3.0 * np.eye(U.shape[0]) - U.conj().T @ U)


def step_unitary(U, dW):
    """``U exp(i dW)``; U is re-orthonormalized first if its defect exceeds 1e-8."""
    if unitarity_defect(U) > 1e-8:
        U = _reorthonormalize(U)
        if unitarity_defect(U) > 1e-8:
            u, _, vh = np.linalg.svd(U)
            U = u @ vh
    return U @ expm_i(dW)


def unitary_angles(U, hint=None):
    """Principal eigenangles of a unitary matrix, sorted.

    With a ``hint`` (angles close to the current ones) the spectrum is rotated
    so that -1 falls in the widest gap and read off the Hermitian Cayley
    transform ``C = i (I - V)(I + V)^{-1}``, whose eigenvalues are
    ``tan(alpha/2)``.  Without a hint ``numpy.linalg.eigvals`` is used.
    """
    n = U.shape[0]
    if hint is None or n == 1:
        return np.sort(np.angle(np.linalg.eigvals(U)))
    h = np.sort(np.mod(np.asarray(hint, float), _TWO_PI))
    gaps = np.diff(np.concatenate([h, [h[0] + _TWO_PI]]))
    k = int(np.argmax(gaps))
    phi = h[k] + 0.5 * gaps[k] - math.pi  # eigenvalue -1 of V sits mid-gap
    V = U * np.exp(-1j * phi)
    I = np.eye(n)
    C = 1j * np.linalg.solve((I + V).T, (I - V).T).T
    C = 0.5 * (C + C.conj().T)
    mu = np.linalg.eigvalsh(C)
    if not np.all(np.isfinite(mu)) or np.max(np.abs(mu)) > 1e8:
        return np.sort(np.angle(np.linalg.eigvals(U)))
    ang = phi + 2.0 * np.arctan(mu)
    return np.sort(ang - _TWO_PI * np.ceil((ang - math.pi) / _TWO_PI))


def _unwrap_to(prev, phi):
    """Unwrapped angles matching ``prev`` by the best cyclic shift of ``phi``.

    Ordered configurations can only move by a cyclic relabelling plus 2 pi
    windings; the shift with least squared displacement is chosen.
    """
    n = prev.size
    phi = np.sort(phi)
    k0 = int(round((prev.mean() - phi.mean()) * n / _TWO_PI))
    best, out = math.inf, None
    for k in range(k0 - 2, k0 + 3):
        idx = np.arange(k, k + n)
        cand = phi[idx % n] + _TWO_PI * (idx // n)
        c = float(np.sum((cand - prev) ** 2))
        if c < best:
            best, out = c, cand
    return out


class MatrixStepper:
    """Stateful matrix-mode integrator (one trial)."""

    def __init__(self, N, rng, reorth_every=256):
        self.N = int(N)
        self.rng = rng
        self.reorth_every = int(reorth_every)
        self.U = np.eye(self.N, dtype=complex)
        self.trace_w = 0.0
        self.t = 0.0
        self.steps = 0

    def step(self, dt):
        dW = hermitian_bm_increment(self.N, dt, self.rng, method="triangle")
        self.trace_w += float(np.trace(dW).real)
        self.U = self.U @ expm_i(dW)
        self.steps += 1
        self.t += dt
        if self.steps % self.reorth_every == 0:
            self.U = _reorthonormalize(self.U)
        return self.U


def _time_grid(t_final, dt):
    n = int(round(t_final / dt))
    if abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        n = int(math.ceil(t_final / dt))
    return n


def _simulate_matrix(cfg, rng):
    N = cfg.N
    n = _time_grid(cfg.t_final, cfg.dt)
    h = cfg.t_final / n if n else 0.0
    step_of = lambda s: int(round(s / h)) if h else 0
    snap_steps = {step_of(s): s for s in cfg.snapshots}
    track_every = max(1, int(math.floor(cfg.track_spacing / h + 1e-9))) if h else 1
    st = MatrixStepper(N, rng, cfg.reorth_every)
    unwrapped = np.zeros(N)
    principal = np.zeros(N)
    snaps, tw, tu, defects = [], [], [], []
    ct, cm, cw = [], [], []

    def record(k):
        t = snap_steps[k]
        ang = unwrapped if cfg.unwrap else principal
        snaps.append(EigenAngleConfig(t, ang.copy()))
        tw.append(st.trace_w / N)
        tu.append(complex(np.trace(st.U)) / N)
        defects.append(unitarity_defect(st.U))

    if 0 in snap_steps:
        record(0)
    for k in range(1, n + 1):
        st.step(h)
        need_snap = k in snap_steps
        if (cfg.unwrap and k % track_every == 0) or need_snap:
            principal = unitary_angles(st.U, hint=principal)
            if cfg.unwrap:
                unwrapped = _unwrap_to(unwrapped, principal)
                ct.append(k * h)
                cm.append(unwrapped.mean())
                cw.append(st.trace_w / N)
        if need_snap:
            record(k)
    return dict(
        snapshots=tuple(snaps), trace_w=np.array(tw), trace_u=np.array(tu),
        defects=np.array(defects), com_times=np.array(ct), com=np.array(cm),
        com_w=np.array(cw), steps=st.steps, substeps=0)


def scheme_trace_mean(N, dt, t):
    """Exact ``E[(1/N) tr U_t]`` for the ``U exp(i dW)`` scheme with step dt.

    By unitary invariance ``E exp(i dW) = c I`` with
    ``c = exp(-dt/(2N)) L^{(1)}_{N-1}(dt/N) / N`` (Laguerre polynomial), so the
    mean after ``t/dt`` steps is ``c^{t/dt}``; the continuum value is ``e^{-t/2}``.
    """
    c = math.exp(-dt / (2.0 * N)) * eval_genlaguerre(N - 1, 1, dt / N) / N
    return c ** (t / dt)


# ---------------------------------------------------------------------------
# particle mode
# ---------------------------------------------------------------------------

@numba.njit(cache=True, fastmath=True)
def _far_drift(theta, out):
    """(1/2N) sum over non-neighbour pairs of cot((theta_i - theta_j)/2)."""
    n = theta.size
    c = np.cos(0.5 * theta)
    s = np.sin(0.5 * theta)
    for i in range(n):
        out[i] = 0.0
    for i in range(n):
        ci = c[i]
        si = s[i]
        acc = 0.0
        jmax = n - 1 if i == 0 else n
        for j in range(i + 2, jmax):
            v = (ci * c[j] + si * s[j]) / (si * c[j] - ci * s[j])
            acc += v
            out[j] -= v
        out[i] += acc
    inv = 0.5 / n
    for i in range(n):
        out[i] *= inv


@numba.njit(cache=True)
def _gaps(x, g):
    n = x.size
    for i in range(n - 1):
        g[i] = x[i + 1] - x[i]
    g[n - 1] = x[0] + 2.0 * np.pi - x[n - 1]


@numba.njit(cache=True)
def _near_objective(x, a, h, invn, g, npair):
    n = x.size
    _gaps(x, g)
    val = 0.0
    for i in range(n):
        d = x[i] - a[i]
        val += d * d
    val /= 2.0 * h
    for i in range(npair):
        if g[i] <= 0.0 or g[i] >= 2.0 * np.pi:
            return np.inf
        val -= invn * np.log(np.sin(0.5 * g[i]))
    return val


@numba.njit(cache=True)
def _cyclic_solve(d, o, r, out, cyclic):
    """Solve a symmetric tridiagonal (optionally cyclic) system.

    d: diagonal, o[i]: coupling of i and i+1, o[n-1]: coupling of n-1 and 0.
    """
    n = d.size
    if n == 1:
        out[0] = r[0] / d[0]
        return
    bb = d.copy()
    if cyclic and n > 2:
        gam = -bb[0]
        alpha = o[n - 1]
        bb[0] -= gam
        bb[n - 1] -= alpha * alpha / gam
    # Thomas on the modified tridiagonal system for rhs r and u
    cp = np.empty(n)
    y = np.empty(n)
    z = np.empty(n)
    u = np.zeros(n)
    if cyclic and n > 2:
        u[0] = gam
        u[n - 1] = alpha
    cp[0] = o[0] / bb[0]
    y[0] = r[0] / bb[0]
    z[0] = u[0] / bb[0]
    for i in range(1, n):
        den = bb[i] - o[i - 1] * cp[i - 1]
        cp[i] = o[i] / den if i < n - 1 else 0.0
        y[i] = (r[i] - o[i - 1] * y[i - 1]) / den
        z[i] = (u[i] - o[i - 1] * z[i - 1]) / den
    for i in range(n - 2, -1, -1):
        y[i] -= cp[i] * y[i + 1]
        z[i] -= cp[i] * z[i + 1]
    if cyclic and n > 2:
        fac = (y[0] + alpha * y[n - 1] / gam) / (1.0 + z[0] + alpha * z[n - 1] / gam)
        for i in range(n):
            out[i] = y[i] - fac * z[i]
    else:
        for i in range(n):
            out[i] = y[i]


@numba.njit(cache=True)
def _implicit_near(a, x, h, invn, tol, maxit):
    """Minimize |x - a|^2/(2h) - invn sum log sin(g/2) over neighbour gaps g.

    Damped Newton from the feasible point x (modified in place).  Returns the
    iteration count, or -1 on failure.
    """
    n = x.size
    npair = n if n > 2 else n - 1
    g = np.empty(n)
    grad = np.empty(n)
    dg = np.empty(n)
    off = np.empty(n)
    step = np.empty(n)
    trial = np.empty(n)
    phi = _near_objective(x, a, h, invn, g, npair)
    for it in range(maxit):
        _gaps(x, g)
        for i in range(n):
            grad[i] = (x[i] - a[i]) / h
            dg[i] = 1.0 / h
            off[i] = 0.0
        for p in range(npair):
            sp = np.sin(0.5 * g[p])
            cot = np.cos(0.5 * g[p]) / sp
            csc2 = 1.0 / (sp * sp)
            i = p
            j = p + 1 if p < n - 1 else 0
            grad[i] += 0.5 * invn * cot
            grad[j] -= 0.5 * invn * cot
            dg[i] += 0.25 * invn * csc2
            dg[j] += 0.25 * invn * csc2
            off[p] = -0.25 * invn * csc2
        for i in range(n):
            grad[i] = -grad[i]
        _cyclic_solve(dg, off, grad, step, npair == n)
        slope = 0.0
        smax = 0.0
        for i in range(n):
            slope -= grad[i] * step[i]
            smax = max(smax, abs(step[i]))
        if smax <= tol:
            return it
        alpha = 1.0
        while True:
            for i in range(n):
                trial[i] = x[i] + alpha * step[i]
            pt = _near_objective(trial, a, h, invn, g, npair)
            if pt <= phi + 1e-4 * alpha * slope or (alpha * smax <= tol and pt < np.inf):
                break
            alpha *= 0.5
            if alpha < 1e-12:
                # no further decrease representable: accept if already converged
                return it if smax <= 1e3 * tol else -1
        for i in range(n):
            x[i] = trial[i]
        phi = pt
        if alpha * smax <= tol:
            return it + 1
    return -1


class _ParticleStepper:
    def __init__(self, theta, N, beta, rng, gap_floor, max_depth=20):
        self.theta = np.array(theta, float)
        self.N = N
        self.sigma = math.sqrt(2.0 / (N * beta))
        self.rng = rng
        self.gap_floor = gap_floor
        self.max_depth = max_depth
        self.far = np.empty(N)
        self.g = np.empty(N)
        self.substeps = 0

    def _try(self, h, dB):
        th = self.theta
        _far_drift(th, self.far)
        a = th + h * self.far + self.sigma * dB
        x = a.copy()
        _gaps(x, self.g)
        npair = self.N if self.N > 2 else self.N - 1
        if npair and (np.min(self.g[:npair]) <= 0 or np.max(self.g[:npair]) >= _TWO_PI):
            x = th.copy()
        it = _implicit_near(a, x, h, 1.0 / self.N, 1e-14 * (1.0 + np.max(np.abs(x))), 60) \
            if npair else 0
        if it < 0 or not np.all(np.isfinite(x)):
            return None
        if npair:
            _gaps(x, self.g)
            if np.min(self.g[:npair]) < self.gap_floor:
                return None
        return x

    def advance(self, h, dB, depth=0):
        x = self._try(h, dB)
        if x is not None:
            self.theta = x
            return
        if depth >= self.max_depth:
            raise CollisionError(f"gap below floor after {depth} step halvings")
        self.substeps += 1
        # Brownian bridge midpoint
        b1 = 0.5 * dB + 0.5 * math.sqrt(h) * self.rng.standard_normal(self.N)
        self.advance(0.5 * h, b1, depth + 1)
        self.advance(0.5 * h, dB - b1, depth + 1)


def _hermite_beta_sample(N, beta, t, rng):
    """Eigenvalues of the beta-Hermite ensemble at time t (real-line Dyson from 0)."""
    if N == 1:
        return np.array([rng.standard_normal() * math.sqrt(2.0 * t / beta)])
    d = rng.standard_normal(N) * math.sqrt(2.0)
    e = np.sqrt(rng.chisquare(beta * np.arange(N - 1, 0, -1)))
    lam = eigvalsh_tridiagonal(d, e)
    return np.sort(lam) * math.sqrt(t / (beta * N))


def _simulate_particles(cfg, rng):
    N, beta = cfg.N, cfg.beta
    floor = 1e-8 * _TWO_PI / N
    snaps = []
    snap_times = list(cfg.snapshots)
    if snap_times and snap_times[0] == 0.0:
        snaps.append(EigenAngleConfig(0.0, np.zeros(N)))
        snap_times.pop(0)
    steps = 0
    st = None
    if snap_times:
        t0 = min(cfg.dt, snap_times[0])
        theta0 = _hermite_beta_sample(N, beta, t0, rng)
        st = _ParticleStepper(theta0, N, beta, rng, floor)
        t = t0
        for ts in snap_times:
            while t < ts * (1 - 1e-14):
                edge = biane_limit.theta_edge(min(t, 4.0))
                spacing = 2.0 * edge / N
                h = min(cfg.dt, cfg.cfl * N * spacing ** 2, ts - t)
                dB = rng.standard_normal(N) * math.sqrt(h)
                st.advance(h, dB)
                t += h
                steps += 1
            t = ts
            snaps.append(EigenAngleConfig(ts, st.theta.copy()))
    nan = np.full(len(snaps), np.nan)
    return dict(snapshots=tuple(snaps), trace_w=nan, trace_u=nan.astype(complex),
                defects=np.zeros(0), steps=steps, substeps=st.substeps if st else 0)


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

def simulate(config):
    """Run one trial; see SimConfig for the parameters."""
    cfg = config
    rng = trial_rng(cfg.seed, cfg.trial)
    t0 = time.perf_counter()
    out = _simulate_matrix(cfg, rng) if cfg.mode == "matrix" else _simulate_particles(cfg, rng)
    times = np.array([s.t for s in out["snapshots"]])
    return Trajectory(config=cfg, times=times, wall_time=time.perf_counter() - t0, **out)


def _run_trial(args):
    cfg, trial = args
    return simulate(cfg.replace(trial=trial))


def simulate_ensemble(config, trials, jobs=1, first_trial=0):
    """Run trials ``first_trial .. first_trial + trials - 1``.

    Results are ordered by trial index regardless of ``jobs``.
    """
    work = [(config, first_trial + k) for k in range(trials)]
    if jobs <= 1 or trials <= 1:
        return [_run_trial(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_run_trial, work, chunksize=max(1, trials // (4 * jobs))))


# ---------------------------------------------------------------------------
# martingale covariation
# ---------------------------------------------------------------------------

def martingale_qv_density(U, z, floor=RADIUS_FLOOR):
    """Instantaneous covariation densities of the transform's martingale part.

    Returns ``(d<M,M>/dt, d<M,conj M>/dt)`` =
    ``(-4 z^2/N^3 tr(U^2 (U - z)^{-4}), 4|z|^2/N^3 tr((U U*)(U - z)^{-2}(U - z)^{-2*}))``
    computed from the eigenvalues of U.  U may also be an EigenAngleConfig.
    """
    if isinstance(z, PolarPoint):
        z = z.z
    z = complex(z)
    if abs(abs(z) - 1.0) < floor:
        raise ValueError("z is within the radius floor of the unit circle")
    if isinstance(U, EigenAngleConfig):
        lam = U.eigenvalues()
    else:
        U = np.atleast_2d(np.asarray(U, complex))
        lam = np.linalg.eigvals(U)
    N = lam.size
    d = lam - z
    first = -4.0 * z * z / N ** 3 * np.sum(lam ** 2 / d ** 4)
    second = 4.0 * abs(z) ** 2 / N ** 3 * float(np.sum(np.abs(lam) ** 2 / np.abs(d) ** 4))
    return complex(first), second
