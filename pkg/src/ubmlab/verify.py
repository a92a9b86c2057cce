"""Finite-N consistency checks of local laws and rigidity for unitary Brownian motion.

Every check takes stored eigenangle configurations (EigenAngleConfig,
Trajectory, or plain arrays at the stated time), computes per-trial
statistics, and compares pass fractions with configured thresholds.  The
asymptotic "overwhelming probability" statements become pass-fraction
policies; reports publish the per-trial statistics so thresholds can be
re-derived.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats

from . import biane_limit
from ._fmt import dumps_json, fmt17
from .biane_limit import LimitTransform
from .errors import QuadratureError
from .spectral_core import EigenAngleConfig, empirical_cauchy_transform

__all__ = [
    "SCHEMA",
    "LocalLawGrid",
    "RigidityReport",
    "local_law_domain",
    "local_law_check",
    "local_law_report",
    "transform_error",
    "edge_rigidity_check",
    "cusp_rigidity_check",
    "cusp_scaling_fit",
    "quantile_rigidity_check",
    "interval_count_check",
    "interval_count_report",
    "bump",
    "hs_functional",
    "hs_quadrature",
    "detection_margin",
    "transform_bound_ratio",
]

SCHEMA = "ubm-report/1"
DEFAULT_EPS = 0.3
DEFAULT_DELTA = 0.1
DEFAULT_C = 0.05
_TWO_PI = 2.0 * math.pi


def _configs(items, t):
    """Normalize trajectories / configs / arrays to EigenAngleConfigs at time t."""
    out = []
    for it in items:
        if isinstance(it, EigenAngleConfig):
            if abs(it.t - t) > 1e-12 * max(1.0, t):
                raise ValueError(f"config at t={it.t} does not match t={t}")
            out.append(it)
        elif hasattr(it, "snapshots") and hasattr(it, "at"):
            out.append(it.at(t))
        else:
            out.append(EigenAngleConfig.from_unsorted(t, np.asarray(it, float)))
    if not out:
        raise ValueError("no configurations supplied")
    n = {c.N for c in out}
    if len(n) != 1:
        raise ValueError("configurations have different N")
    return out


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RigidityReport:
    """Per-trial statistics and pass fractions of one rigidity check.

    ``stats`` maps a statistic name to a per-trial array; ``passes`` maps an
    event name to a per-trial boolean array.  ``primary`` names the event
    that ``passed`` refers to; ``threshold`` is its required pass fraction.
    """

    kind: str
    N: int
    t: float
    eps: float
    stats: dict
    passes: dict
    primary: str
    threshold: float = 0.95
    params: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def trials(self):
        return int(len(self.passes[self.primary]))

    @property
    def pass_fractions(self):
        return {k: float(np.mean(v)) for k, v in self.passes.items()}

    @property
    def pass_fraction(self):
        return self.pass_fractions[self.primary]

    @property
    def passed(self):
        return self.pass_fraction >= self.threshold

    def median(self, stat):
        return float(np.median(self.stats[stat]))

    def as_dict(self):
        return {
            "schema": SCHEMA, "kind": self.kind, "N": self.N, "t": self.t, "eps": self.eps,
            "trials": self.trials, "primary": self.primary, "threshold": self.threshold,
            "pass_fraction": self.pass_fraction, "pass_fractions": self.pass_fractions,
            "passed": self.passed, "params": self.params, "extras": self.extras,
            "stats": {k: np.asarray(v, float).tolist() for k, v in self.stats.items()},
            "passes": {k: np.asarray(v, bool).tolist() for k, v in self.passes.items()},
        }

    def to_json(self):
        return dumps_json(self.as_dict())

    def to_csv(self):
        buf = io.StringIO()
        buf.write("trial,stat,value\n")
        cols = {**self.stats, **{"pass_" + k: np.asarray(v, float) for k, v in self.passes.items()}}
        for k in range(self.trials):
            for name in sorted(cols):
                buf.write(f"{k},{name},{fmt17(cols[name][k])}\n")
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class LocalLawGrid:
    """Local-law comparison on grid points of the domain B_t (exterior, |z| > 1).

    Point arrays are flat over the retained points: ``log_r``, ``theta``,
    ``f_limit`` (limiting transform) and ``error = |f - f~|``.
    """

    t: float
    N: int
    eps: float
    delta: float
    c: float
    log_r: np.ndarray
    theta: np.ndarray
    f_limit: np.ndarray
    error: np.ndarray
    status: str = "ok"

    @property
    def size(self):
        return int(self.log_r.size)

    @property
    def bound(self):
        return self.N ** self.eps / (self.N * self.log_r)

    @property
    def scaled(self):
        """``|f - f~| N log|z|``, to be compared with ``N^eps``."""
        return self.error * self.N * self.log_r

    @property
    def fraction(self):
        return float(np.mean(self.scaled <= self.N ** self.eps)) if self.size else math.nan

    @property
    def max_scaled(self):
        return float(np.max(self.scaled)) if self.size else math.nan

    def passed(self, min_fraction=0.99):
        return self.status == "ok" and self.fraction >= min_fraction

    def membership(self):
        """Re-evaluate the B_t membership test at every retained point."""
        return _in_domain(self.log_r, self.f_limit, self.N, self.delta, self.c)

    def as_dict(self):
        return {
            "schema": SCHEMA, "kind": "local-law", "t": self.t, "N": self.N, "eps": self.eps,
            "delta": self.delta, "c": self.c, "status": self.status, "points": self.size,
            "fraction": self.fraction, "max_scaled": self.max_scaled,
        }

    def to_json(self):
        return dumps_json(self.as_dict())

    def to_csv(self):
        buf = io.StringIO()
        buf.write("log_r,theta,error,bound\n")
        for row in zip(self.log_r, self.theta, self.error, self.bound):
            buf.write(",".join(fmt17(v) for v in row) + "\n")
        return buf.getvalue()


# ---------------------------------------------------------------------------
# local law
# ---------------------------------------------------------------------------

def _in_domain(log_r, f_limit, N, delta, c):
    lower = np.maximum(N ** delta / (N * np.abs(f_limit.real)), N ** (-c))
    return (log_r < 5.0) & (log_r > lower)


@lru_cache(maxsize=32)
def _domain_cached(t, N, delta, c, n_r, n_theta):
    lo = N ** (-c)
    ell = np.geomspace(lo, 5.0, n_r + 2)[1:-1]
    th = -math.pi + _TWO_PI * (np.arange(n_theta) + 0.5) / n_theta
    L, T = np.meshgrid(ell, th, indexing="ij")
    L, T = L.ravel(), T.ravel()
    f = LimitTransform(t)(np.exp(L + 1j * T))
    keep = _in_domain(L, f, N, delta, c)
    for a in (L, T, f, keep):
        a.setflags(write=False)
    return L[keep], T[keep], f[keep]


def local_law_domain(t, N, delta=DEFAULT_DELTA, c=DEFAULT_C, n_r=40, n_theta=80):
    """Grid points of B_t: log-radii geometric on ``(N^-c, 5)``, uniform angles.

    Points failing ``log|z| > N^delta/(N |Re f~|)`` are dropped.  Returns
    ``(log_r, theta, f_limit)``; results are cached.
    """
    if not t > 0:
        raise ValueError("local law needs t > 0")
    return _domain_cached(float(t), int(N), float(delta), float(c), int(n_r), int(n_theta))


def local_law_check(angles, t, delta=DEFAULT_DELTA, c=DEFAULT_C, eps=DEFAULT_EPS,
                    n_r=40, n_theta=80):
    """Compare the empirical and limiting transforms on the B_t grid.

    Returns a LocalLawGrid; an empty grid after filtering has status
    ``"empty"``.
    """
    cfg = angles if isinstance(angles, EigenAngleConfig) else _configs([angles], t)[0]
    N = cfg.N
    L, T, f = local_law_domain(t, N, delta, c, n_r, n_theta)
    if L.size == 0:
        e = np.empty(0)
        return LocalLawGrid(float(t), N, eps, delta, c, e, e, e.astype(complex), e, "empty")
    emp = empirical_cauchy_transform(cfg.angles, np.exp(L + 1j * T))
    return LocalLawGrid(float(t), N, eps, delta, c, L, T, f, np.abs(emp - f))


def local_law_report(trajectories, t, eps=DEFAULT_EPS, delta=DEFAULT_DELTA, c=DEFAULT_C,
                     min_fraction=0.99, threshold=0.95, n_r=40, n_theta=80):
    """Local-law grids over an ensemble; a trial passes if its in-bound fraction
    is at least ``min_fraction``."""
    t = float(t)
    configs = _configs(trajectories, t)
    grids = [local_law_check(cfg, t, delta, c, eps, n_r, n_theta) for cfg in configs]
    frac = np.array([g.fraction for g in grids])
    mx = np.array([g.max_scaled for g in grids])
    ok = np.array([g.passed(min_fraction) for g in grids])
    return RigidityReport(
        "local-law", configs[0].N, t, eps, stats={"fraction": frac, "max_scaled": mx},
        passes={"grid": ok}, primary="grid", threshold=threshold,
        params={"delta": delta, "c": c, "min_fraction": min_fraction,
                "points": grids[0].size, "bound": configs[0].N ** eps})


def transform_error(angles, t, z):
    """``f(z) - f~(z, t)`` at explicit points (no domain filter; t >= 0)."""
    a = angles.angles if isinstance(angles, EigenAngleConfig) else np.asarray(angles, float)
    return empirical_cauchy_transform(a, z) - LimitTransform(t)(z)


# ---------------------------------------------------------------------------
# edge and cusp rigidity
# ---------------------------------------------------------------------------

def _edge_stats(configs, t, window):
    edge = biane_limit.theta_edge(t)
    right, left, outside = [], [], []
    for cfg in configs:
        p = cfg.principal()
        right.append(p[-1] - edge)
        left.append(-edge - p[0])
        outside.append(int(np.sum(np.abs(p) > edge + window)))
    return np.array(right), np.array(left), np.array(outside)


def edge_rigidity_check(trajectories, t, eps=DEFAULT_EPS, delta=DEFAULT_DELTA, threshold=0.95):
    """Count eigenangles beyond ``Theta_t + N^{-2/3+eps}``.

    For ``t <= delta`` the short-time window ``N^{-eps/6}`` is used instead.
    Statistics: ``excess`` = theta_N - Theta_t, ``excess_left`` =
    -Theta_t - theta_1, ``scaled`` = excess N^{2/3}, and ``abs_scaled``.
    """
    t = float(t)
    if not 0.0 < t < 4.0 - delta:
        raise ValueError(f"edge rigidity needs 0 < t < {4.0 - delta}")
    configs = _configs(trajectories, t)
    N = configs[0].N
    short = t <= delta
    window = N ** (-eps / 6.0) if short else N ** (-2.0 / 3.0 + eps)
    right, left, outside = _edge_stats(configs, t, window)
    sc = right * N ** (2.0 / 3.0)
    return RigidityReport(
        "edge-short" if short else "edge", N, t, eps,
        stats={"excess": right, "excess_left": left, "scaled": sc, "abs_scaled": np.abs(sc),
               "outside": outside.astype(float)},
        passes={"window": outside == 0}, primary="window", threshold=threshold,
        params={"window": window, "theta_edge": biane_limit.theta_edge(t), "delta": delta})


def _quantile_errors(configs, gamma):
    # sorted principal angles against gamma_1..gamma_N
    return np.array([np.abs(c.principal() - gamma) for c in configs])


def cusp_rigidity_check(trajectories, t, eps=DEFAULT_EPS, threshold=0.9):
    """Near-cusp window ``Delta_t^{1/9} N^{-2/3+eps}`` and the two-regime quantile bounds.

    Regime bounds (without the ``N^eps`` factor): ``(4-t)^{1/6}/(N^{2/3} i^{1/3})``
    for ``i <= i_s = ceil(N (4-t)^2)`` and ``1/(N^{3/4} i^{1/4})`` for
    ``i_s <= i <= N/2``, mirrored for indices near N.  The boundary index is
    evaluated in both regimes.  A regime passes if its maximal scaled error is
    at most ``N^eps``.
    """
    t = float(t)
    configs = _configs(trajectories, t)
    N = configs[0].N
    s = 4.0 - t
    if not 2.0 < t < 4.0:
        raise ValueError("cusp rigidity needs 2 < t < 4")
    if s < N ** -0.5:
        raise ValueError("4 - t below N^{-1/2}: edge fluctuations exceed the gap")
    D = biane_limit.gap(t)
    window = D ** (1.0 / 9.0) * N ** (-2.0 / 3.0 + eps)
    right, left, outside = _edge_stats(configs, t, window)
    gam = biane_limit.quantiles(t, N).gamma
    err = _quantile_errors(configs, gam)
    i = np.arange(1, N + 1)
    j = np.minimum(i, N + 1 - i)
    i_s = int(math.ceil(N * s * s))
    b1 = s ** (1.0 / 6.0) / (N ** (2.0 / 3.0) * j ** (1.0 / 3.0))
    b2 = 1.0 / (N ** 0.75 * j ** 0.25)
    m1 = j <= i_s
    m2 = (j >= i_s) & (j <= N // 2)
    r1 = np.max(err[:, m1] / b1[m1], axis=1) if m1.any() else np.full(len(configs), np.nan)
    r2 = np.max(err[:, m2] / b2[m2], axis=1) if m2.any() else np.full(len(configs), np.nan)
    ne = N ** eps
    sc = right * N ** (2.0 / 3.0)
    return RigidityReport(
        "cusp", N, t, eps,
        stats={"excess": right, "excess_left": left, "scaled": sc,
               "cusp_scaled": sc * D ** (-1.0 / 9.0), "abs_excess": np.abs(right),
               "outside": outside.astype(float), "regime_small_max": r1,
               "regime_large_max": r2},
        passes={"window": outside == 0, "regime_small": ~(r1 > ne), "regime_large": ~(r2 > ne)},
        primary="window", threshold=threshold,
        params={"window": window, "gap": D, "theta_edge": biane_limit.theta_edge(t),
                "index_split": i_s})


def cusp_scaling_fit(reports, N=None):
    """Regress median |theta_N - Theta_t| on ``Delta_t^{1/9} N^{-2/3}`` across reports.

    Returns ordinary least squares (with intercept) slope, intercept and R^2,
    plus the through-origin slope.
    """
    x = np.array([biane_limit.gap(r.t) ** (1.0 / 9.0) * (N or r.N) ** (-2.0 / 3.0)
                  for r in reports])
    y = np.array([r.median("abs_excess") for r in reports])
    res = stats.linregress(x, y)
    return {"x": x.tolist(), "y": y.tolist(), "t": [r.t for r in reports],
            "slope": float(res.slope), "intercept": float(res.intercept),
            "r2": float(res.rvalue ** 2), "slope_origin": float(x @ y / (x @ x))}


# ---------------------------------------------------------------------------
# quantile rigidity
# ---------------------------------------------------------------------------

def _extended_real(table, x):
    # gamma~ at real index x by linear interpolation between integer indices
    lo = np.floor(x).astype(np.int64)
    fr = x - lo
    return (1 - fr) * table.extended(lo) + fr * table.extended(lo + 1)


def quantile_rigidity_check(trajectories, t, eps=DEFAULT_EPS, mode="auto", threshold=0.95,
                            midpoint=False):
    """Quantile rigidity.

    ``mode="edge"`` (default for 0.1 < t < 3.9): per trial
    ``max_i |theta_i - gamma_i| N^{2/3} min(i, N+1-i)^{1/3}`` against
    ``N^eps``, plus a sign test of the profile's symmetry under
    ``i <-> N+1-i``.  ``mode="bulk"`` (default otherwise, 0.1 < t < 10):
    the sandwich ``gamma~_{i-N^eps} <= theta_i <= gamma~_{i+N^eps}`` on
    winding-aware angles, with extended quantiles ``gamma~_{i+N} = gamma_i + 2 pi``
    interpolated linearly at non-integer indices.

    ``midpoint=True`` (edge mode only) compares with the quantiles at mass
    ``(i - 1/2)/N`` instead of ``i/N``; this is a diagnostic, since the
    ``i/N`` quantiles sit half a spacing above the mean particle positions.
    """
    t = float(t)
    if mode == "auto":
        mode = "edge" if 0.1 < t < 3.9 else "bulk"
    if mode == "edge" and not 0.1 < t < 3.9:
        raise ValueError("edge-mode quantile rigidity needs 0.1 < t < 3.9")
    if mode == "bulk" and not 0.1 < t < 10.0:
        raise ValueError("bulk-mode quantile rigidity needs 0.1 < t < 10")
    if mode not in ("edge", "bulk"):
        raise ValueError(f"unknown mode {mode!r}")
    configs = _configs(trajectories, t)
    N = configs[0].N
    table = biane_limit.quantiles(t, N)
    i = np.arange(1, N + 1)
    ne = N ** eps
    if midpoint and mode != "edge":
        raise ValueError("midpoint quantiles are only offered in edge mode")
    if mode == "edge":
        # gamma at mass (2i - 1)/(2N) is the odd entry of the 2N table
        gam = biane_limit.quantiles(t, 2 * N).gamma[0::2] if midpoint else table.gamma
        err = _quantile_errors(configs, gam)
        prof = err * N ** (2.0 / 3.0) * np.minimum(i, N + 1 - i) ** (1.0 / 3.0)
        mx = prof.max(axis=1)
        half = N // 2
        d = np.sum(prof[:, :half] - prof[:, ::-1][:, :half], axis=1)
        pos, nz = int(np.sum(d > 0)), int(np.sum(d != 0))
        p = float(stats.binomtest(pos, nz).pvalue) if nz else 1.0
        return RigidityReport(
            "quantile", N, t, eps, stats={"max_scaled": mx, "asymmetry": d},
            passes={"bound": mx <= ne}, primary="bound", threshold=threshold,
            params={"mode": mode, "midpoint": midpoint}, extras={"symmetry_pvalue": p, "symmetry_positive": pos,
                                           "symmetry_nonzero": nz})
    lo = _extended_real(table, i - ne)
    hi = _extended_real(table, i + ne)
    below, above, worst = [], [], []
    for cfg in configs:
        a = cfg.angles
        below.append(int(np.sum(a < lo)))
        above.append(int(np.sum(a > hi)))
        # distance outside the sandwich in units of the mean spacing
        worst.append(float(np.max(np.maximum(lo - a, a - hi))) * N / _TWO_PI)
    below, above = np.array(below), np.array(above)
    return RigidityReport(
        "quantile-bulk", N, t, eps,
        stats={"below": below.astype(float), "above": above.astype(float),
               "worst_spacings": np.array(worst)},
        passes={"sandwich": (below == 0) & (above == 0)}, primary="sandwich",
        threshold=threshold, params={"mode": mode, "shift": ne})


# ---------------------------------------------------------------------------
# interval counts
# ---------------------------------------------------------------------------

def interval_count_check(angles, t, interval):
    """Eigenangles in the half-open arc ``(a, b]`` against ``N rho_t((a, b])``.

    ``-pi <= a < b <= pi``.  Returns ``(count, predicted)``.
    """
    a, b = map(float, interval)
    if not -math.pi <= a < b <= math.pi:
        raise ValueError("interval must satisfy -pi <= a < b <= pi")
    if not t > 0:
        raise ValueError("interval counts need t > 0")
    cfg = angles if isinstance(angles, EigenAngleConfig) else _configs([angles], t)[0]
    p = cfg.principal()
    count = int(np.searchsorted(p, b, "right") - np.searchsorted(p, a, "right"))
    lo, hi = biane_limit.cdf(np.array([-math.pi, math.pi]), t)
    ca, cb = biane_limit.cdf(np.array([a, b]), t)
    return count, cfg.N * float((cb - ca) / (hi - lo))


def interval_count_report(trajectories, t, interval, eps=DEFAULT_EPS, threshold=0.95):
    """Ensemble of interval-count discrepancies; a trial passes if ``|count - pred| <= N^eps``."""
    t = float(t)
    configs = _configs(trajectories, t)
    N = configs[0].N
    res = [interval_count_check(c, t, interval) for c in configs]
    cnt = np.array([r[0] for r in res], float)
    pred = np.array([r[1] for r in res])
    disc = cnt - pred
    return RigidityReport(
        "count", N, t, eps, stats={"count": cnt, "predicted": pred, "discrepancy": disc},
        passes={"bound": np.abs(disc) <= N ** eps}, primary="bound", threshold=threshold,
        params={"interval": list(map(float, interval))},
        extras={"max_abs_discrepancy": float(np.max(np.abs(disc)))})


# ---------------------------------------------------------------------------
# Helffer-Sjostrand functional
# ---------------------------------------------------------------------------

_R_KNOTS = (0.5, 0.75, 4.0 / 3.0, 2.0)
_L_IN = math.log(4.0 / 3.0)
_L_OUT = math.log(2.0)


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10.0 - 15.0 * u + 6.0 * u * u)


def _dsmoothstep(u):
    inside = (u > 0) & (u < 1)
    u = np.clip(u, 0.0, 1.0)
    return np.where(inside, 30.0 * u * u * (1.0 - u) ** 2, 0.0)


def _chi0(r):
    a, b, c, d = _R_KNOTS
    return np.where(r < 1.0, _smoothstep((r - a) / (b - a)), 1.0 - _smoothstep((r - c) / (d - c)))


def _dchi0(r):
    a, b, c, d = _R_KNOTS
    return np.where(r < 1.0, _dsmoothstep((r - a) / (b - a)) / (b - a),
                    -_dsmoothstep((r - c) / (d - c)) / (d - c))


def bump(r, derivative=False):
    """The cutoff chi: 1 on [3/4, 4/3], 0 outside [1/2, 2], C^2, chi(r) = chi(1/r).

    The quintic smoothstep ramp on each side, averaged with its image under
    ``r -> 1/r``.  With ``derivative=True`` returns ``chi'(r)``.
    """
    r = np.asarray(r, float)
    if derivative:
        return 0.5 * (_dchi0(r) - _dchi0(1.0 / r) / r ** 2)
    return 0.5 * (_chi0(r) + _chi0(1.0 / r))


def _unpack(phi):
    if callable(phi):
        raise TypeError("phi must be a triple (phi, phi', phi'')")
    f0, f1, f2 = phi
    return f0, f1, f2


def _row_sizes(ell, n_min, n_max, resolve):
    # enough angular nodes to resolve kernels of width |ell| near the circle
    need = np.maximum(n_min, resolve / np.abs(ell))
    n = 2 ** np.ceil(np.log2(need)).astype(int)
    return np.minimum(n, n_max)


def hs_quadrature(phi, transform, level=0, h0=0.08, n_min=256, n_max=2 ** 17, resolve=40.0):
    """One mesh level of the two-term Helffer-Sjostrand integral.

    In ``ell = log r`` the identity reads

        int phi d mu = (1/4 pi) int (phi - i ell phi') X'(ell) f dell dtheta
                     + (1/4 pi) int phi'' ell X(ell) f dell dtheta,   X(ell) = chi(e^ell).

    The ell-integral uses the midpoint rule on the pieces split at 0 and at
    the knots ``+-log(4/3)``, ``+-log 2``, with ``ceil(width/h0) 2^level``
    cells per piece, so the error expands in even powers of the spacing and
    levels nest exactly; each row uses a periodic trapezoid
    rule in theta with ``max(n_min, resolve/|ell|)`` nodes rounded up to a
    power of two.
    """
    f0, f1, f2 = _unpack(phi)
    pieces = [(-_L_OUT, -_L_IN, True), (-_L_IN, 0.0, False), (0.0, _L_IN, False),
              (_L_IN, _L_OUT, True)]
    ell, wts, band = [], [], []
    for a, b, is_band in pieces:
        m = int(math.ceil((b - a) / h0)) * 2 ** int(level)
        hh = (b - a) / m
        ell.append(a + hh * (np.arange(m) + 0.5))
        wts.append(np.full(m, hh))
        band.append(np.full(m, is_band))
    ell, wts, band = map(np.concatenate, (ell, wts, band))
    sizes = _row_sizes(ell, n_min, n_max, resolve)
    r = np.exp(ell)
    X = bump(r)
    dX = r * bump(r, derivative=True)
    total = 0.0 + 0.0j
    for n in np.unique(sizes):
        rows = sizes == n
        th = _TWO_PI * np.arange(n) / n
        p0, p1, p2 = f0(th), f1(th), f2(th)
        L = ell[rows]
        z = np.exp(L[:, None] + 1j * th[None, :])
        f = np.asarray(transform(z), complex).reshape(z.shape)
        g = (p2[None, :] * (L * X[rows])[:, None]
             + np.where(band[rows], 1.0, 0.0)[:, None]
             * (p0[None, :] - 1j * L[:, None] * p1[None, :]) * dX[rows][:, None])
        total += np.sum(wts[rows] * np.sum(g * f, axis=1)) * (_TWO_PI / n)
    int_ = total / (4.0 * math.pi)
    return float(int_.real)


def hs_functional(phi, transform, tol=1e-8, h0=0.08, max_level=7, n_min=256,
                  resolve=40.0, return_levels=False):
    """``int phi d mu`` from the Cauchy transform of mu by the Helffer-Sjostrand formula.

    Parameters
    ----------
    phi : (callable, callable, callable)
        The test function and its first two derivatives, 2 pi periodic.
    transform : callable
        Cauchy transform evaluator accepting complex arrays on both sides of
        the circle (empirical or limiting).
    tol : float
        Target for the difference of successive Richardson-extrapolated values.

    Mesh levels halve the ell spacing (starting near h0); level values ``I_k`` are combined as
    ``(4 I_k - I_{k-1})/3``.  Raises QuadratureError with the last
    difference when ``max_level`` is reached.
    """
    levels, rich = [], []
    for k in range(max_level + 1):
        levels.append(hs_quadrature(phi, transform, k, h0, n_min=n_min, resolve=resolve))
        if k >= 1:
            rich.append((4.0 * levels[-1] - levels[-2]) / 3.0)
        if len(rich) >= 2 and abs(rich[-1] - rich[-2]) <= tol:
            return (rich[-1], levels) if return_levels else rich[-1]
    est = abs(rich[-1] - rich[-2]) if len(rich) >= 2 else math.inf
    raise QuadratureError("Helffer-Sjostrand quadrature did not converge", est)


# ---------------------------------------------------------------------------
# deterministic transform bounds
# ---------------------------------------------------------------------------

def detection_margin(angles, z):
    """``|Re f(z)| N (|z| - 1)``: at least 1 whenever an eigenangle is within |z| - 1 of arg z."""
    a = angles.angles if isinstance(angles, EigenAngleConfig) else np.asarray(angles, float)
    zz = np.asarray(z, complex)
    f = empirical_cauchy_transform(a, zz)
    return np.abs(np.real(f)) * a.size * (np.abs(zz) - 1.0)


def transform_bound_ratio(t, eta, kappa, cusp=False):
    """``|Re f~(z)| sqrt(kappa + eta)/eta`` at ``z = (1 + eta) e^{i (Theta_t + kappa)}``.

    With ``cusp=True`` the ratio is multiplied by ``Delta_t^{1/6}``.
    """
    eta = np.asarray(eta, float)
    kappa = np.asarray(kappa, float)
    z = (1.0 + eta) * np.exp(1j * (biane_limit.theta_edge(t) + kappa))
    f = LimitTransform(t)(z)
    out = np.abs(np.real(f)) * np.sqrt(kappa + eta) / eta
    if cusp:
        out = out * biane_limit.gap(t) ** (1.0 / 6.0)
    return out
