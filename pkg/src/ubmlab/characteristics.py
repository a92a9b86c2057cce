"""Characteristics of the complex Burgers equation for the limiting transform.

Along ``s -> z_s = C_{s,t}(z) = z exp(-(t - s) f~(z, t)/2)`` the limiting
transform is constant, ``f~(z_s, s) = f~(z, t)``, and ``dz_s/ds = z_s f~/2``.
Everything here evaluates paths through the closed form; the ODE integrator
is kept only as an independent cross-check.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import biane_limit
from .biane_limit import LimitTransform
from .spectral_core import PolarPoint, normalize_angle

__all__ = [
    "characteristic_map",
    "characteristic_path",
    "integrate_characteristic",
    "CharacteristicPath",
    "DecayReport",
    "cusp_angular_decay_check",
    "edge_angular_decay_check",
]

PATH_COLUMNS = ("s", "re", "im", "log_r", "kappa", "eta", "f_re", "f_im")


def _point(z):
    return z if isinstance(z, PolarPoint) else PolarPoint.from_complex(z)


def _check_times(s, t):
    if not (0.0 <= s <= t):
        raise ValueError("characteristics need 0 <= s <= t")


def characteristic_map(z, s, t, transform=None):
    """``C_{s,t}(z) = z exp(-(t - s) f~(z, t)/2)`` as a PolarPoint.

    ``transform`` may be a LimitTransform at time t to reuse its cache.
    """
    p = _point(z)
    s, t = float(s), float(t)
    _check_times(s, t)
    if s == t:
        return p
    lt = transform if transform is not None else LimitTransform(t)
    if lt.t != t:
        raise ValueError("transform time does not match t")
    f = complex(lt(p.z))
    # work in (log r, theta) so large excursions stay representable
    d = -(t - s) * f / 2.0
    return PolarPoint.from_log(p.log_r + d.real, p.theta + d.imag)


def _kappa(theta, s):
    if 0.0 < s < 4.0:
        return abs(theta) - biane_limit.theta_edge(s)
    return math.nan


@dataclass(frozen=True, eq=False)
class CharacteristicPath:
    """Samples of ``z_s = C_{s,t}(z)`` on a uniform s-grid ending at ``s = t``.

    ``f`` holds fresh evaluations ``f~(z_s, s)``; ``radial_residual`` is the
    central-difference value of ``d/ds log|z_s| - Re f~(z_s, s)/2`` at interior
    samples (NaN at both ends).  For ``|z| > 1`` the identity reads
    ``d/ds log|z_s| = -|Re f~|/2``.
    """

    z: PolarPoint
    t: float
    s: np.ndarray
    log_r: np.ndarray
    theta: np.ndarray
    f: np.ndarray
    f_end: complex
    radial_residual: np.ndarray = field(repr=False)

    @property
    def points(self):
        return np.exp(self.log_r + 1j * self.theta)

    @property
    def eta(self):
        return np.expm1(self.log_r)

    @property
    def kappa(self):
        return np.array([_kappa(th, s) for th, s in zip(self.theta, self.s)])

    def drift(self):
        """``max_k |f~(z_k, s_k) - f~(z, t)| / (1 + |f~(z, t)|)``."""
        return float(np.max(np.abs(self.f - self.f_end)) / (1.0 + abs(self.f_end)))

    def max_radial_residual(self):
        r = self.radial_residual[1:-1]
        return float(np.max(np.abs(r))) if r.size else 0.0

    def radius_monotone(self):
        """log|z_s| nonincreasing in s (the exterior case)."""
        return bool(np.all(np.diff(self.log_r) <= 1e-13 * (1.0 + np.abs(self.log_r[1:]))))

    def crosses_real_axis(self):
        sg = np.sign(np.sin(self.theta))
        return bool(np.any(sg != sg[-1]))

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(PATH_COLUMNS) + "\n")
        pts = self.points
        for row in zip(self.s, pts.real, pts.imag, self.log_r, self.kappa, self.eta,
                       self.f.real, self.f.imag):
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    @staticmethod
    def read_csv(text):
        """Parse a path CSV into a dict of column arrays."""
        lines = text.strip().splitlines()
        if tuple(lines[0].split(",")) != PATH_COLUMNS:
            raise ValueError("unexpected path CSV header")
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        return {c: data[:, j] for j, c in enumerate(PATH_COLUMNS)}


def characteristic_path(z, t, m, s_min=0.0, transform=None):
    """Sample the characteristic ending at (z, t) at ``m + 1`` uniform times.

    Parameters
    ----------
    z : PolarPoint or complex
        Terminal point, off the unit circle.
    t : float
        Terminal time.
    m : int
        Number of intervals, ``m >= 2``.
    s_min : float
        First sample time, ``0 <= s_min < t``.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    p = _point(z)
    t = float(t)
    _check_times(s_min, t)
    if s_min == t:
        raise ValueError("s_min must be below t")
    lt = transform if transform is not None else LimitTransform(t)
    f_end = complex(lt(p.z))
    s = np.linspace(s_min, t, m + 1)
    d = -(t - s) * f_end / 2.0
    log_r = p.log_r + d.real
    log_r[-1] = p.log_r
    theta = p.theta + d.imag
    theta[-1] = p.theta
    f = np.empty(s.size, complex)
    for k, sk in enumerate(s):
        zk = np.exp(log_r[k] + 1j * theta[k])
        f[k] = lt(zk) if sk == t else LimitTransform(sk)(zk)
    res = np.full(s.size, np.nan)
    h = s[1] - s[0]
    res[1:-1] = (log_r[2:] - log_r[:-2]) / (2.0 * h) - f[1:-1].real / 2.0
    return CharacteristicPath(p, t, s, log_r, normalize_angle(theta), f, f_end, res)


def integrate_characteristic(z, t, s, h=1e-3):
    """RK4 integration of ``dz/du = z f~(z, u)/2`` from u = t back to u = s.

    Independent of the closed form: every stage re-solves for ``f~`` at the
    current point and time.  Works in ``log z`` so the right side is ``f~/2``.
    """
    p = _point(z)
    s, t = float(s), float(t)
    _check_times(s, t)
    n = max(1, int(math.ceil((t - s) / h)))
    step = -(t - s) / n
    y = complex(p.log_r, p.theta)
    u = t

    def rhs(y, u):
        return complex(LimitTransform(max(u, 0.0))(np.exp(y))) / 2.0

    for _ in range(n):
        k1 = rhs(y, u)
        k2 = rhs(y + 0.5 * step * k1, u + 0.5 * step)
        k3 = rhs(y + 0.5 * step * k2, u + 0.5 * step)
        k4 = rhs(y + step * k3, u + step)
        y += step * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        u += step
    return PolarPoint.from_log(y.real, y.imag)


# ---------------------------------------------------------------------------
# angular decay diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayReport:
    """Growth of an angular statistic ``g`` backward along a characteristic.

    ``times`` are forward times (descending from the endpoint); ``g`` the
    statistic; ``slope`` the least-squares slope of ``g - g_end`` against
    ``t_end - s`` through the origin; ``slope_lower`` the smallest chord slope.
    """

    status: str
    t: float
    times: np.ndarray
    g: np.ndarray
    kappa: np.ndarray
    eta: np.ndarray
    slope: float
    slope_lower: float
    kappa_monotone: bool
    left_window_at: float | None = None

    @property
    def passed(self):
        return self.status == "ok" and self.slope > 0 and self.slope_lower > 0

    def as_dict(self):
        return {
            "status": self.status, "t": self.t, "slope": self.slope,
            "slope_lower": self.slope_lower, "kappa_monotone": self.kappa_monotone,
            "left_window_at": self.left_window_at, "passed": self.passed,
            "times": self.times.tolist(), "g": self.g.tolist(),
        }


def _decay(z, t, times, stat, in_window):
    p = _point(z)
    lt = LimitTransform(t)
    f = complex(lt(p.z))
    kap, eta, g, ts = [], [], [], []
    left = None
    for s in times:
        d = -(t - s) * f / 2.0
        th = float(normalize_angle(p.theta + d.imag))
        e = math.expm1(p.log_r + d.real)
        k = abs(th) - biane_limit.theta_edge(s)
        if s < t and not in_window(s, k, e):
            left = float(s)
            break
        kap.append(k)
        eta.append(e)
        g.append(stat(s, k))
        ts.append(s)
    ts, g, kap, eta = map(np.asarray, (ts, g, kap, eta))
    dt = t - ts[1:]
    dg = g[1:] - g[0]
    if dt.size == 0:
        return DecayReport("too-short", t, ts, g, kap, eta, math.nan, math.nan, True, left)
    slope = float(np.dot(dt, dg) / np.dot(dt, dt))
    lower = float(np.min(dg / dt))
    mono = bool(np.all(np.diff(kap) >= -1e-14))  # kappa grows as s decreases
    return DecayReport("ok", t, ts, g, kap, eta, slope, lower, mono, left)


def cusp_angular_decay_check(z, t_rev, s_grid=None, window=1.0, span=0.3):
    """Check that ``Delta_S^{1/6} sqrt(kappa_S)`` grows linearly backward in time.

    Parameters
    ----------
    z : PolarPoint
        Endpoint ``(1 + eta) e^{i (Theta + kappa)}`` with ``kappa >= 0``.
    t_rev : float
        Reversed endpoint time ``4 - t``; the check runs for ``0 < t_rev <= 0.5``.
    s_grid : array_like, optional
        Reversed sample times ``>= t_rev`` (default: 41 points spanning ``span``).
    window : float
        Samples are used while ``eta_S < window * Delta_S`` and ``kappa_S >= 0``.

    Returns
    -------
    DecayReport
        Times are forward times.  A status other than ``"ok"`` explains a skip.
    """
    t_rev = float(t_rev)
    if not 0.0 < t_rev <= 0.5:
        return DecayReport("skipped: endpoint outside the near-cusp regime 3.5 <= t < 4",
                           4.0 - t_rev, np.array([]), np.array([]), np.array([]),
                           np.array([]), math.nan, math.nan, True)
    if s_grid is None:
        s_grid = np.linspace(t_rev, min(0.5, t_rev + span), 41)
    s_grid = np.sort(np.asarray(s_grid, float))
    if s_grid[0] < t_rev or s_grid[-1] > 0.5:
        raise ValueError("reversed sample times must lie in [t_rev, 0.5]")
    if s_grid[0] != t_rev:
        s_grid = np.concatenate([[t_rev], s_grid])
    t = 4.0 - t_rev
    kap0 = abs(_point(z).theta) - biane_limit.theta_edge(t)
    if kap0 < 0:
        raise ValueError("endpoint must satisfy kappa >= 0")

    def stat(s, k):
        return biane_limit.gap(s) ** (1 / 6) * math.sqrt(max(k, 0.0))

    def ok(s, k, e):
        return k >= 0 and e < window * biane_limit.gap(s)

    return _decay(z, t, 4.0 - s_grid, stat, ok)


def edge_angular_decay_check(z, t, s_grid=None, window=0.1, span=0.3):
    """Check ``sqrt(kappa_s) >= sqrt(kappa_t) + b (t - s)`` backward from (z, t).

    Samples are used while ``r_s - 1 < window``; returns a DecayReport.
    """
    t = float(t)
    if not 0.0 < t < 4.0:
        raise ValueError("edge decay check needs 0 < t < 4")
    if s_grid is None:
        s_grid = np.linspace(t, max(t - span, 1e-3), 31)
    s_grid = np.sort(np.asarray(s_grid, float))[::-1]
    if s_grid[0] != t:
        s_grid = np.concatenate([[t], s_grid])

    def stat(s, k):
        return math.sqrt(max(k, 0.0))

    def ok(s, k, e):
        return k >= 0 and 0 < e < window

    return _decay(z, t, s_grid, stat, ok)
