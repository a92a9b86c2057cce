"""Limiting spectral measure of unitary Brownian motion.

The limiting Cauchy transform ``w = f~(z, t)`` on the unit disc is the root of

    F(w) = (w - 1)/(w + 1) * exp(t w / 2) = z,    Re w > 0,

and the density is read off the boundary of the image region
``Gamma_t = {Re w > 0, |F(w)| < 1}``.  The boundary is parametrized by its real
part ``x``: ``w = x + i k_t(x)`` for ``x_-(t) <= x <= x_+(t)``, with
``rho_t(theta(x)) = x / (2 pi)``.

Everything in this module is deterministic and vectorized over numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError

__all__ = [
    "theta_edge",
    "gap",
    "x_plus",
    "x_minus",
    "boundary_h",
    "boundary_k",
    "boundary_theta",
    "self_consistent_map",
    "LimitTransform",
    "limiting_transform",
    "density",
    "cdf",
    "integrate_density",
    "DensityCurve",
    "density_curve",
    "QuantileTable",
    "quantiles",
    "shape_psi_e",
    "shape_psi_m",
    "edge_shape_check",
    "sqrt_edge_constant",
    "cusp_constant",
]

_TWO_PI = 2.0 * math.pi
# Past this time |F'(w)| ~ exp(t/2) makes the 1e-13 residual unreachable in doubles.
T_MAX = 16.0
# Gauss-Legendre rule used by the boundary quadratures
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _check_time(t, lo=0.0, hi=4.0):
    t = float(t)
    if not (lo <= t <= hi) or not math.isfinite(t):
        raise ValueError(f"t = {t!r} outside [{lo}, {hi}]")
    return t


# ---------------------------------------------------------------------------
# edges and gap
# ---------------------------------------------------------------------------

def _half_gap_series(u):
    # arcsin(u) - u sqrt(1 - u^2) = sum_k 2 C(2k,k) 4^-k u^(2k+3) / (2k+3)
    total, c = 0.0, 1.0
    for k in range(12):
        total += 2.0 * c * u ** (2 * k + 3) / (2 * k + 3)
        c *= (2 * k + 1) / (2 * k + 2)
    return total


def gap(t):
    """Angular gap ``Delta_t = 2 (pi - Theta_t)`` between the two edges.

    Evaluated as ``4 (arcsin u - u sqrt(1 - u^2))`` with ``u = sqrt(4 - t)/2``,
    which avoids the cancellation of the naive form as ``t -> 4``.
    """
    t = _check_time(t)
    u = math.sqrt(4.0 - t) / 2.0
    if u < 0.05:
        return 4.0 * _half_gap_series(u)
    return 4.0 * (math.asin(u) - u * math.sqrt(1.0 - u * u))


def theta_edge(t):
    """Edge ``Theta_t = sqrt((4 - t) t)/2 + 2 arcsin(sqrt(t/4))`` for 0 <= t <= 4."""
    t = _check_time(t)
    if t >= 3.0:
        return math.pi - 0.5 * gap(t)
    return 0.5 * math.sqrt((4.0 - t) * t) + 2.0 * math.asin(math.sqrt(t / 4.0))


# ---------------------------------------------------------------------------
# boundary of Gamma_t
# ---------------------------------------------------------------------------

def _x_over_expm1(x, t):
    """``4 x / expm1(t x)`` with its x -> 0 limit ``4/t``."""
    x = np.asarray(x, dtype=float)
    y = t * x
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 4.0 * x / np.expm1(y)
    small = np.abs(y) < 1e-8
    if np.any(small):
        ys = y[small] if out.ndim else y
        val = (4.0 / t) * (1.0 - ys / 2.0 + ys * ys / 12.0)
        if out.ndim:
            out[small] = val
        else:
            out = np.asarray(val)
    return out


def _x_over_expm1_dx(x, t):
    """Derivative of ``4 x / expm1(t x)`` in x."""
    x = np.asarray(x, dtype=float)
    y = t * x
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        em = np.expm1(y)
        out = 4.0 / em - 4.0 * y * (em + 1.0) / (em * em)
    small = np.abs(y) < 0.1
    if np.any(small):
        ys = y[small] if out.ndim else y
        y2 = ys * ys
        ser = -0.5 + ys / 6.0 - ys * y2 / 180.0 + ys * y2 * y2 / 5040.0 - ys * y2 ** 3 / 151200.0
        if out.ndim:
            out[small] = 4.0 * ser
        else:
            out = np.asarray(4.0 * ser)
    return out


def boundary_h(x, t):
    """``h_t(x) = k_t(x)^2 = 4x/expm1(tx) - (x - 1)^2`` (cancellation-safe form)."""
    x = np.asarray(x, dtype=float)
    return _x_over_expm1(x, t) - (x - 1.0) ** 2


def _bisect(fun, lo, hi, xtol=1e-15, maxiter=200):
    """Scalar bisection on a sign change; returns the midpoint of the last bracket."""
    flo = fun(lo)
    fhi = fun(hi)
    if not (np.sign(flo) * np.sign(fhi) <= 0):
        raise SolverError(f"bracket [{lo}, {hi}] has no sign change", abs(min(flo, fhi)))
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= xtol * max(1.0, abs(mid)) or mid in (lo, hi):
            break
        fm = fun(mid)
        if fm == 0.0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


_XPLUS_CACHE: dict = {}
_XMINUS_CACHE: dict = {}


def x_plus(t):
    """Largest zero ``x_+(t) > 1`` of ``h_t``; found by bisection to ~1e-15."""
    t = float(t)
    if not t > 0:
        raise ValueError("x_plus needs t > 0")
    if t in _XPLUS_CACHE:
        return _XPLUS_CACHE[t]
    fun = lambda x: float(boundary_h(x, t))
    hi = 2.0
    while fun(hi) > 0:
        hi *= 2.0
        if hi > 1e8:
            raise SolverError("x_plus bracket search failed", fun(hi))
    val = _bisect(fun, 1.0, hi)
    _XPLUS_CACHE[t] = val
    return val


def x_minus(t):
    """Lower end ``x_-(t)`` of the boundary parameter range.

    Zero for ``t <= 4``; for ``t > 4`` the unique zero of ``h_t`` in (0, 1).
    """
    t = float(t)
    if not t > 0:
        raise ValueError("x_minus needs t > 0")
    if t <= 4.0:
        return 0.0
    if t in _XMINUS_CACHE:
        return _XMINUS_CACHE[t]
    fun = lambda x: float(boundary_h(x, t))
    lo = 1e-300
    if fun(lo) >= 0:
        raise SolverError("x_minus bracket failed", fun(lo))
    val = _bisect(fun, 0.0, 1.0)
    _XMINUS_CACHE[t] = val
    return val


def boundary_k(x, t):
    """Imaginary part ``k_t(x) >= 0`` of the boundary point with real part x.

    Accepts the closed range ``[x_-, x_+]``.  At ``x = 0`` with ``t < 4`` the
    value is the limit ``sqrt(4/t - 1)``.
    """
    t = float(t)
    x = np.asarray(x, dtype=float)
    xm, xp = x_minus(t), x_plus(t)
    span = 1e-12 * (1.0 + xp)
    if np.any((x < xm - span) | (x > xp + span)):
        raise ValueError(f"x outside [x_-, x_+] = [{xm}, {xp}] at t = {t}")
    h = boundary_h(x, t)
    return np.sqrt(np.maximum(h, 0.0))


def boundary_theta(x, t):
    """Angle ``theta(x) = arg F(x + i k_t(x))`` of the boundary point, in [0, pi]."""
    t = float(t)
    x = np.asarray(x, dtype=float)
    k = np.sqrt(np.maximum(boundary_h(x, t), 0.0))
    return np.arctan2(2.0 * k, x * x + k * k - 1.0) + 0.5 * t * k


def _boundary_dtheta_dx(x, k, t):
    """d theta / dx along the boundary, with k' = h'/(2k)."""
    w = x + 1j * k
    hp = _x_over_expm1_dx(x, t) - 2.0 * (x - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        kp = hp / (2.0 * k)
    g = 2.0 / (w * w - 1.0) + 0.5 * t
    return (g * (1.0 + 1j * kp)).imag


def self_consistent_map(w, t):
    """``F(w) = (w - 1)/(w + 1) exp(t w / 2)``."""
    w = np.asarray(w, dtype=complex)
    return (w - 1.0) / (w + 1.0) * np.exp(0.5 * t * w)


def _F_dF(w, t):
    e = np.exp(0.5 * t * w)
    q = (w - 1.0) / (w + 1.0)
    dF = (2.0 / (w + 1.0) ** 2 + 0.5 * t * q) * e
    return q * e, dF


# ---------------------------------------------------------------------------
# limiting Cauchy transform
# ---------------------------------------------------------------------------

def _ode_rhs(w, tau):
    # d w / d tau along F_tau(w) = z held fixed
    w2 = w * w - 1.0
    return -w * w2 / (4.0 + tau * w2)


def _rk4(w, tau, h):
    k1 = _ode_rhs(w, tau)
    k2 = _ode_rhs(w + 0.5 * h * k1, tau + 0.5 * h)
    k3 = _ode_rhs(w + 0.5 * h * k2, tau + 0.5 * h)
    k4 = _ode_rhs(w + h * k3, tau + h)
    return w + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _newton(w, z, t, iters, sign=1.0):
    """Damped Newton on F(w) = z keeping sign * Re w > 0 (step clipping)."""
    for _ in range(iters):
        Fw, dF = _F_dF(w, t)
        step = (Fw - z) / dF
        wn = w - step
        bad = sign * wn.real <= 0.0
        if np.any(bad):
            # shrink the step so that Re w only drops to a tenth of its value
            rw = w.real[bad]
            lam = 0.9 * rw / (rw - wn.real[bad])
            lam = np.where(np.isfinite(lam), lam, 0.0)
            wn[bad] = w[bad] - lam * step[bad]
        w = wn
    return w


def _in_gamma(w, t):
    """Branch certificate for a root of F(w) = z with |z| < 1.

    Re w > 0 is sufficient in exact arithmetic.  When Re w is at rounding level
    the root may instead sit just across the imaginary axis at |Im w| > y_max,
    where |F| = 1 as well, so such points are rejected.
    """
    ymax = np.sqrt(np.maximum(4.0 / np.asarray(t, float) - 1.0, 0.0))
    return (w.real > 0) & ((w.real >= 1e-6) | (np.abs(w.imag) <= ymax + 1e-6))


def _certified(w, t):
    # for t > 4, Gamma_t lies in the strip x_- < Re w < x_+
    ok = _in_gamma(w, t)
    if t > 4.0:
        ok &= w.real >= x_minus(t) * (1.0 - 1e-9)
    return ok


def _residual(w, z, t):
    """Root residual; for |z| > 1 it is taken on F(-w) = 1/z (same root, since F(-w) = 1/F(w)).

    Near the pole w = -1 the direct form loses ~log10(1/|w + 1|) digits to the
    representation of w itself, while the reflected form stays well conditioned.
    """
    w = np.asarray(w, complex)
    z = np.asarray(z, complex)
    ext = np.abs(z) > 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        zz = np.where(ext, 1.0 / np.where(ext, z, 1.0), z)
    ww = np.where(ext, -w, w)
    return np.abs(self_consistent_map(ww, t) - zz)


@dataclass
class LimitTransform:
    """Evaluator of the limiting Cauchy transform ``f~(z, t)``.

    Parameters
    ----------
    t : float
        Diffusion time, ``t >= 0``.
    tol : float
        Residual tolerance: every returned root satisfies
        ``|F(w) - z| <= tol * (1 + |z|)``; for ``|z| > 1`` this is checked in the
        reflected form ``|F(-w) - 1/z| <= tol * (1 + 1/|z|)``.
    max_steps : int
        Continuation step budget per attempt.

    Notes
    -----
    The root on the disc is tracked from ``tau = 0`` (where
    ``w = (1 + z)/(1 - z)``) to ``tau = t`` along the ODE
    ``dw/dtau = -w (w^2 - 1)/(4 + tau (w^2 - 1))`` with an RK4 predictor and a
    damped Newton corrector.  Since ``F`` is a bijection from ``Gamma_t`` onto
    the disc, any root with ``Re w > 0`` is the correct branch; the homotopy
    only supplies starting points.  ``|z| > 1`` uses the reflection
    ``f~(z) = -conj f~(1/conj z)``.  Small queries are cached as
    ``z -> (tau, w)`` so that the same point at a later time continues from
    the stored state.
    """

    t: float
    tol: float = 1e-13
    max_steps: int = 400
    cache: dict = field(default_factory=dict, repr=False)
    cache_limit: int = 4096

    def __post_init__(self):
        self.t = float(self.t)
        if not 0.0 <= self.t <= T_MAX:
            raise ValueError(f"t must lie in [0, {T_MAX}]")
        self.last_residual = 0.0

    def at(self, t):
        """A fresh evaluator at time t seeded with a copy of this cache."""
        return LimitTransform(t, self.tol, self.max_steps, dict(self.cache), self.cache_limit)

    def __call__(self, z):
        return self.evaluate(z)

    # -- public --------------------------------------------------------------
    def evaluate(self, z):
        """Return ``f~(z, t)`` for scalar or array z (PolarPoint accepted)."""
        z = _as_complex(z)
        scalar = z.ndim == 0
        z = np.atleast_1d(z).astype(complex)
        out = np.empty_like(z)
        if self.t == 0.0:
            if np.any(z == 1.0):
                raise ValueError("z = 1 is on the support at t = 0")
            out[:] = (1.0 + z) / (1.0 - z)
            self.last_residual = 0.0
            return out[0] if scalar else out
        r = np.abs(z)
        on = np.abs(r - 1.0) <= 4e-16
        inside = (r < 1.0) & ~on
        outside = (r > 1.0) & ~on
        resid = np.zeros(z.shape)
        if np.any(inside):
            w = self._disk(z[inside])
            out[inside] = w
            resid[inside] = _residual(w, z[inside], self.t)
        if np.any(outside):
            zo = z[outside]
            w = -np.conj(self._disk(1.0 / np.conj(zo)))
            out[outside] = w
            resid[outside] = _residual(w, zo, self.t)
        if np.any(on):
            out[on] = self._gap(np.angle(z[on]))
            resid[on] = _residual(out[on], z[on], self.t)
        self.last_residual = float(resid.max()) if resid.size else 0.0
        return out[0] if scalar else out

    def residual(self, z, w):
        """Root residual for externally supplied pairs (reflected form when |z| > 1)."""
        return _residual(np.asarray(w, complex), _as_complex(z), self.t)

    # -- internals -----------------------------------------------------------
    def _gap(self, theta):
        t = self.t
        if t >= 4.0:
            raise ValueError("no gap at t >= 4: |z| = 1 lies on the support")
        edge = theta_edge(t)
        a = np.abs(theta)
        if np.any(a < edge - 1e-12):
            raise ValueError("|z| = 1 inside the support has no boundary value off the real axis")
        a = np.minimum(np.maximum(a, edge), math.pi)
        ymax = math.sqrt(4.0 / t - 1.0)
        lo = np.zeros_like(a)
        hi = np.full_like(a, ymax)
        # pi - 2 arctan(y) + t y / 2 decreases from pi to Theta_t on [0, ymax]
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            g = math.pi - 2.0 * np.arctan(mid) + 0.5 * t * mid - a
            lo = np.where(g > 0, mid, lo)
            hi = np.where(g > 0, hi, mid)
        y = 0.5 * (lo + hi)
        # the edge is a critical point of the map, so pin it exactly
        y = np.where(a <= edge + 4e-16, ymax, y)
        return 1j * np.sign(theta + 0.0) * y * (a < math.pi) + 0j

    def _disk(self, z):
        t = self.t
        n = z.size
        use_cache = n <= self.cache_limit
        tau0 = np.zeros(n)
        w0 = (1.0 + z) / (1.0 - z)
        if use_cache and self.cache:
            for i, zi in enumerate(z.tolist()):
                hit = self.cache.get(zi)
                if hit is not None and hit[0] <= t:
                    tau0[i], w0[i] = hit
        w = np.empty(n, dtype=complex)
        todo = np.arange(n)
        last = np.inf
        for attempt in range(3):
            scale = 16.0 ** (-attempt)
            wt, ok = self._continue(z[todo], tau0[todo], w0[todo], scale)
            w[todo] = wt
            res = _residual(wt, z[todo], t)
            good = ok & (res <= self.tol * (1.0 + np.abs(z[todo]))) & _certified(wt, t)
            if np.any(~good):
                last = float(np.nanmax(np.where(good, 0.0, res)))
            todo = todo[~good]
            if todo.size == 0:
                break
            tau0[todo] = 0.0
            w0[todo] = (1.0 + z[todo]) / (1.0 - z[todo])
        if todo.size:
            # near-support points whose path grazes an edge: start Newton from
            # the boundary root at the same angle instead
            zt = z[todo]
            with np.errstate(all="ignore"):
                wb = _boundary_root(np.angle(zt), t)
                wb = wb + (1.0 - np.abs(zt)) * (1.0 + 0.0j)
                wb = _newton(wb, zt, t, 100)
            res = _residual(wb, zt, t)
            good = (res <= self.tol * (1.0 + np.abs(zt))) & _certified(wb, t)
            w[todo[good]] = wb[good]
            todo = todo[~good]
            if todo.size:
                raise SolverError(f"continuation failed for {todo.size} of {n} points",
                                  float(np.nanmax(res[~good])))
        if use_cache:
            if len(self.cache) > 16 * self.cache_limit:
                self.cache.clear()
            for zi, wi in zip(z.tolist(), w.tolist()):
                self.cache[zi] = (t, wi)
        return w

    def _continue(self, z, tau, w, scale):
        t = self.t
        tau = tau.copy()
        w = w.copy()
        n = z.size
        h = np.minimum(t - tau, scale * 0.04 / (1.0 + np.abs(w) ** 2))
        h = np.maximum(h, 1e-300)
        done = tau >= t
        failed = np.zeros(n, dtype=bool)
        step_tol = 1e-9 * (1.0 + np.abs(z))
        with np.errstate(all="ignore"):
            for _ in range(self.max_steps):
                act = np.flatnonzero(~done & ~failed)
                if act.size == 0:
                    break
                ta, wa, za = tau[act], w[act], z[act]
                last = h[act] >= t - ta
                hh = np.where(last, t - ta, h[act])
                tn = np.where(last, t, ta + hh)
                wp = _rk4(wa, ta, hh)
                wc = _newton(wp, za, tn, 5)
                res = _residual(wc, za, tn)
                ok = np.isfinite(wc) & _in_gamma(wc, tn) & (res <= step_tol[act])
                acc = act[ok]
                tau[acc] = tn[ok]
                w[acc] = wc[ok]
                h[acc] = 2.0 * hh[ok]
                rej = act[~ok]
                h[rej] = 0.25 * hh[~ok]
                done[acc] = tau[acc] >= t
                failed[rej] = h[rej] < 1e-15 * (1.0 + t)
            # final polish at tau = t
            fin = np.flatnonzero(done)
            if fin.size:
                wf = w[fin]
                zf = z[fin]
                for _ in range(30):
                    res = _residual(wf, zf, t)
                    need = res > 0.25 * self.tol * (1.0 + np.abs(zf))
                    if not np.any(need):
                        break
                    wf[need] = _newton(wf[need], zf[need], t, 1)
                w[fin] = wf
        return w, done & ~failed


def _boundary_root(theta, t):
    """Point of the closure of Gamma_t with F(w) = e^{i theta}."""
    theta = np.asarray(theta, float)
    c = _curve(t)
    a = np.abs(theta)
    sgn = np.where(theta < 0, -1.0, 1.0)
    out = np.empty(theta.shape, complex)
    sup = a < c.theta_max if t < 4.0 else np.ones(a.shape, bool)
    if np.any(sup):
        x = c.x_of_theta(a[sup])
        out[sup] = x + 1j * sgn[sup] * np.sqrt(np.maximum(boundary_h(x, t), 0.0))
    if np.any(~sup):
        out[~sup] = LimitTransform(t)._gap(theta[~sup])
    return out


def _as_complex(z):
    if hasattr(z, "z"):
        return np.asarray(z.z, dtype=complex)
    return np.asarray(z, dtype=complex)


def limiting_transform(z, t, tol=1e-13):
    """``f~(z, t)`` for scalar or array z; see :class:`LimitTransform`."""
    return LimitTransform(t, tol=tol).evaluate(z)


# ---------------------------------------------------------------------------
# parametrized half curve: density, cdf, quantiles
# ---------------------------------------------------------------------------

class _HalfCurve:
    """Boundary parametrization on theta in [0, theta_max] by u in [0, 1].

    ``x(u) = x_- + (x_+ - x_-)(1 + cos(pi u))/2`` so that ``u = 0`` is ``x_+``
    (``theta = 0``) and ``u = 1`` is ``x_-`` (the edge, or ``pi`` for t >= 4).
    Both ends are smooth in u, which makes Gauss-Legendre panels converge fast.
    """

    def __init__(self, t, panels=64):
        self.t = t = float(t)
        self.xm = x_minus(t)
        self.xp = x_plus(t)
        self.span = self.xp - self.xm
        self.theta_max = theta_edge(t) if t < 4.0 else math.pi
        self.panels = panels
        self.edges = np.linspace(0.0, 1.0, panels + 1)
        # cumulative integral of theta dx at panel edges
        a, b = self.edges[:-1], self.edges[1:]
        part = self._gl_theta_dx(a, b)
        self.cum = np.concatenate([[0.0], np.cumsum(part)])

    def x_of_u(self, u):
        return self.xm + 0.5 * self.span * (1.0 + np.cos(math.pi * u))

    def u_of_x(self, x):
        c = np.clip(2.0 * (x - self.xm) / self.span - 1.0, -1.0, 1.0)
        return np.arccos(c) / math.pi

    def theta_of_u(self, u):
        return boundary_theta(self.x_of_u(u), self.t)

    def _gl_theta_dx(self, a, b):
        a = np.asarray(a, float)[..., None]
        b = np.asarray(b, float)[..., None]
        u = 0.5 * (a + b) + 0.5 * (b - a) * _GL_X
        g = self.theta_of_u(u) * (0.5 * math.pi * self.span) * np.sin(math.pi * u)
        return (0.5 * (b - a) * _GL_W * g).sum(axis=-1)

    def J(self, u):
        """Integral of theta dx from x(u) to x_+ (u-integral from 0 to u)."""
        u = np.asarray(u, float)
        k = np.clip(np.floor(u * self.panels).astype(int), 0, self.panels - 1)
        a = self.edges[k]
        return self.cum[k] + self._gl_theta_dx(a, u)

    def mass(self, u):
        """Mass of rho_t on [0, theta(u)]."""
        u = np.asarray(u, float)
        x = self.x_of_u(u)
        return (x * boundary_theta(x, self.t) + self.J(u)) / _TWO_PI

    def half_mass(self):
        return float(self.mass(1.0))

    def u_of_theta(self, theta):
        """Invert theta(u) by vectorized bisection (theta in [0, theta_max])."""
        theta = np.asarray(theta, float)
        lo = np.zeros_like(theta)
        hi = np.ones_like(theta)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            up = self.theta_of_u(mid) < theta
            lo = np.where(up, mid, lo)
            hi = np.where(up, hi, mid)
        return 0.5 * (lo + hi)

    def x_of_theta(self, theta):
        """Boundary real part for angle theta, by bisection directly in x."""
        theta = np.asarray(theta, float)
        lo = np.full_like(theta, self.xm)
        hi = np.full_like(theta, self.xp)
        # theta(x) decreases from theta_max at x_- to 0 at x_+
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            above = boundary_theta(mid, self.t) > theta
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        # near t = 4 theta(x) is flat to rounding at x_-, so pin the end exactly
        return np.where(theta >= self.theta_max, self.xm, 0.5 * (lo + hi))

    def u_of_mass(self, m):
        m = np.asarray(m, float)
        lo = np.zeros_like(m)
        hi = np.ones_like(m)
        for _ in range(56):
            mid = 0.5 * (lo + hi)
            up = self.mass(mid) < m
            lo = np.where(up, mid, lo)
            hi = np.where(up, hi, mid)
        return 0.5 * (lo + hi)

    def integrate(self, g, panels=None):
        """Integral of g(theta) rho_t(theta) over the full circle."""
        panels = panels or self.panels
        e = np.linspace(0.0, 1.0, panels + 1)
        a, b = e[:-1, None], e[1:, None]
        u = (0.5 * (a + b) + 0.5 * (b - a) * _GL_X).ravel()
        wq = (0.5 * (b - a) * _GL_W).ravel()
        x = self.x_of_u(u)
        k = np.sqrt(np.maximum(boundary_h(x, self.t), 0.0))
        th = boundary_theta(x, self.t)
        dth = _boundary_dtheta_dx(x, k, self.t) * (-0.5 * math.pi * self.span * np.sin(math.pi * u))
        vals = (np.asarray(g(th)) + np.asarray(g(-th))) * x / _TWO_PI * dth
        total = np.sum(wq * vals)
        return complex(total) if np.iscomplexobj(total) else float(total)


_CURVES: dict = {}


def _curve(t):
    t = float(t)
    c = _CURVES.get(t)
    if c is None:
        if len(_CURVES) > 64:
            _CURVES.clear()
        c = _CURVES[t] = _HalfCurve(t)
    return c


def density(theta, t):
    """Limiting density ``rho_t(theta)`` per radian.

    Solves ``F(w) = e^{i theta}`` on the boundary of ``Gamma_t`` (bisection in
    the boundary parameter) and returns ``Re w / (2 pi)``.
    """
    t = float(t)
    if not t > 0:
        raise ValueError("density needs t > 0")
    theta = np.asarray(theta, dtype=float)
    a = np.abs(np.angle(np.exp(1j * theta)))
    c = _curve(t)
    out = np.zeros_like(a)
    inside = a < c.theta_max if t < 4.0 else np.ones_like(a, dtype=bool)
    if np.any(inside):
        out[inside] = c.x_of_theta(a[inside]) / _TWO_PI
    return out if out.ndim else float(out)


def cdf(theta, t):
    """``rho_t((-pi, theta])`` for theta in [-pi, pi]."""
    t = float(t)
    c = _curve(t)
    theta = np.asarray(theta, float)
    a = np.minimum(np.abs(theta), c.theta_max)
    m = c.mass(c.u_of_x(c.x_of_theta(a)))
    out = 0.5 + np.sign(theta) * m
    return out if out.ndim else float(out)


def integrate_density(g, t, panels=64):
    """``int g(theta) rho_t(theta) d theta`` by boundary-parametrized quadrature."""
    return _curve(t).integrate(g, panels)


@dataclass(frozen=True)
class DensityCurve:
    """Samples of ``rho_t`` sorted by angle, with edge metadata."""

    t: float
    theta: np.ndarray
    rho: np.ndarray
    x: np.ndarray
    edge: float
    gap: float

    def trapezoid_mass(self):
        return _trap(self.rho, self.theta)

    def metadata(self):
        return {"t": self.t, "theta_edge": self.edge, "gap": self.gap, "n": int(self.theta.size)}

    def to_csv(self):
        rows = "".join(f"{a:.17g},{b:.17g}\n" for a, b in zip(self.theta, self.rho))
        return "theta,rho\n" + rows


def _trap(y, x):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def density_curve(t, n=2048, mass_tol=1e-6, max_refine=6):
    """Parametric samples of ``rho_t`` over (-pi, pi].

    Parameters
    ----------
    t : float
        Time, ``t > 0``.
    n : int
        Samples per half curve (``n >= 16``), cosine-clustered at both ends of
        the boundary parameter.
    mass_tol : float
        The sample count is doubled until the trapezoid mass is within
        ``mass_tol`` of 1.

    Returns
    -------
    DensityCurve
    """
    t = float(t)
    if not t > 0:
        raise ValueError("density_curve needs t > 0")
    if n < 16:
        raise ValueError("n must be >= 16")
    c = _curve(t)
    edge = theta_edge(t) if t <= 4.0 else math.pi
    gp = gap(t) if t <= 4.0 else 0.0
    for _ in range(max_refine + 1):
        u = np.linspace(0.0, 1.0, n + 1)
        x = c.x_of_u(u)
        x[0], x[-1] = c.xp, c.xm
        th = boundary_theta(x, t)
        th[0] = 0.0
        th[-1] = c.theta_max
        rho = x / _TWO_PI
        # mirror to negative angles; theta(u) increases in u
        theta = np.concatenate([-th[:0:-1], th])
        rr = np.concatenate([rho[:0:-1], rho])
        xx = np.concatenate([x[:0:-1], x])
        if t < 4.0:
            # pad the gap with zeros so the curve covers (-pi, pi]
            theta = np.concatenate([[-math.pi], theta, [math.pi]])
            rr = np.concatenate([[0.0], rr, [0.0]])
            xx = np.concatenate([[0.0], xx, [0.0]])
        curve = DensityCurve(t, theta, rr, xx, edge, gp)
        if abs(_trap(rr, theta) - 1.0) <= mass_tol:
            return curve
        n *= 2
    return curve


@dataclass(frozen=True)
class QuantileTable:
    """Quantiles ``gamma_i`` with ``rho_t((-pi, gamma_i]) = i/N``."""

    t: float
    N: int
    gamma: np.ndarray  # gamma[i - 1] = gamma_i for i = 1..N

    def __getitem__(self, i):
        return self.extended(i)

    def extended(self, i):
        """Extended quantile: ``gamma_{i+N} = 2 pi + gamma_i`` for any integer i."""
        i = np.asarray(i, dtype=np.int64)
        wind = np.floor_divide(i - 1, self.N)
        base = i - wind * self.N
        out = self.gamma[base - 1] + _TWO_PI * wind
        return out if out.ndim else float(out)

    def to_csv(self):
        rows = "".join(f"{i},{g:.17g}\n" for i, g in enumerate(self.gamma, start=1))
        return "i,gamma\n" + rows


def quantiles(t, N):
    """Quantile table for ``rho_t`` with N points.

    ``gamma_N`` is ``Theta_t`` for t < 4 and ``pi`` for t >= 4; the table is
    exactly antisymmetric, ``gamma_{N-i} = -gamma_i``.
    """
    t = float(t)
    N = int(N)
    if not t > 0 or N < 1:
        raise ValueError("quantiles need t > 0 and N >= 1")
    c = _curve(t)
    half = c.half_mass()
    if abs(half - 0.5) > 1e-8:
        raise SolverError("half-curve mass deviates from 1/2", abs(half - 0.5))
    i = np.arange(1, N + 1)
    gam = np.empty(N)
    upper = i >= N / 2.0
    iu = i[upper]
    m = iu / N - 0.5
    # masses are relative to the computed half mass so that gamma_N is the edge
    u = c.u_of_mass(np.minimum(m, half))
    g = c.theta_of_u(u)
    g[iu == N] = c.theta_max
    if N % 2 == 0:
        g[iu == N // 2] = 0.0
    gam[upper] = g
    lower = ~upper
    # gamma_{N-i} = -gamma_i
    gam[lower] = -gam[N - i[lower] - 1]
    if np.any(np.diff(gam) < 0):
        raise SolverError("quantile table not monotone", float(-np.diff(gam).min()))
    return QuantileTable(t, N, gam)


# ---------------------------------------------------------------------------
# shape functions and edge laws
# ---------------------------------------------------------------------------

def shape_psi_e(lam):
    """Edge shape function ``Psi_e``, written with ``A = 1 + 2 lam + 2 sqrt(lam (1 + lam))``.

    Uses ``1 + 2 lam - 2 sqrt(lam (1 + lam)) = 1/A`` so no cancellation occurs.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("Psi_e needs lambda >= 0")
    s = np.sqrt(lam * (1.0 + lam))
    A = 1.0 + 2.0 * lam + 2.0 * s
    A23 = A ** (2.0 / 3.0)
    out = s / (A23 + 1.0 / A23 + 1.0)
    return out if out.ndim else float(out)


def shape_psi_m(lam):
    """Minimum shape function ``Psi_m`` (any real lambda).

    Written as ``lam^2 (1/(S + 1) - 4/(p^2 + p q + q^2)^2) / D`` with
    ``S = sqrt(1 + lam^2)``, ``p, q = (S +- |lam|)^{1/3}`` and ``D = p^2 + q^2 - 1``,
    which is exact at ``lam = 0``.
    """
    lam = np.asarray(lam, dtype=float)
    a = np.abs(lam)
    S = np.sqrt(1.0 + a * a)
    p = np.cbrt(S + a)
    q = 1.0 / p
    D = p * p + q * q - 1.0
    out = a * a * (1.0 / (S + 1.0) - 4.0 / (p * p + p * q + q * q) ** 2) / D
    return out if out.ndim else float(out)


def sqrt_edge_constant(t):
    """Coefficient c_t in ``rho_t(Theta_t - E) ~ c_t sqrt(E)`` for 0 < t < 4."""
    t = float(t)
    return math.sqrt(2.0 / (t ** 1.5 * math.sqrt(4.0 - t))) / math.pi


def cusp_constant():
    """Coefficient in ``rho_4(pi - E) ~ c E^{1/3}``."""
    return 1.5 ** (1.0 / 3.0) * math.sqrt(3.0) / (4.0 * math.pi)


def _near_cusp_prefactor(t):
    # edge cubic a q^3 - b q^2 - E = 0 with rho = Im q / (2 pi); in the normal form
    # 3 a q = b (Q + 1) one gets rho = b Im Q / (6 pi a) = b Psi_e / (sqrt(3) pi a).
    s = 4.0 - t
    a = (t - 3.0) * t * t / 24.0
    b = t ** 1.5 * math.sqrt(s) / 8.0
    d_hat = 4.0 * b ** 3 / (27.0 * a * a)
    return b / (math.sqrt(3.0) * math.pi * a) * math.sqrt(gap(t) / d_hat)


def edge_shape_check(t, E):
    """Numeric density at ``Theta_t - E`` and the near-cusp shape-law prediction.

    The prediction is ``P_t Psi_e(E / Delta_t)`` with
    ``P_t = 3 sqrt(2) Delta_t^{1/2} / (pi t^{3/4} s^{1/4})`` to leading order
    (s = 4 - t), evaluated exactly as ``b/(sqrt(3) pi a) (Delta_t/Delta^_t)^{1/2}``.
    It reduces to the square-root law for ``E << Delta_t`` and to the cusp law
    for ``E >> Delta_t``.

    Returns
    -------
    (numeric, predicted) : tuple of float
    """
    t = float(t)
    E = float(E)
    if not (3.5 < t < 4.0):
        raise ValueError("edge_shape_check needs 3.5 < t < 4")
    if not (0.0 < E <= 0.1):
        raise ValueError("edge_shape_check needs 0 < E <= 0.1")
    numeric = float(density(theta_edge(t) - E, t))
    predicted = _near_cusp_prefactor(t) * float(shape_psi_e(E / gap(t)))
    return numeric, predicted
