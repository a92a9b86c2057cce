"""Shared domain types and the empirical Cauchy transform.

Conventions
-----------
Eigenvalues are ``lambda_i = exp(i theta_i)``.  The Cauchy transform of a
probability measure on the circle is

    f(z) = int (e^{i theta} + z)/(e^{i theta} - z) d mu(theta),

so ``f(0) = 1``, ``Re f > 0`` inside the disc and ``Re f < 0`` outside.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from . import biane_limit

__all__ = [
    "normalize_angle",
    "PolarPoint",
    "EdgeCoordinates",
    "EigenAngleConfig",
    "ControlParameter",
    "empirical_cauchy_transform",
    "empirical_cauchy_derivative",
    "real_part_identity",
    "edge_coordinates",
    "control_parameter",
    "RADIUS_FLOOR",
]

RADIUS_FLOOR = 1e-12
_TWO_PI = 2.0 * math.pi


def normalize_angle(theta):
    """Project angles to the principal range (-pi, pi]; idempotent."""
    theta = np.asarray(theta, dtype=float)
    out = theta - _TWO_PI * np.ceil((theta - math.pi) / _TWO_PI)
    # guard the upper end against rounding in the subtraction
    out = np.where(out <= -math.pi, out + _TWO_PI, out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PolarPoint:
    """A point ``z = r e^{i theta}`` off the unit circle."""

    r: float
    theta: float

    def __post_init__(self):
        r = float(self.r)
        if not (r > 0 and math.isfinite(r)):
            raise ValueError("PolarPoint needs a finite r > 0")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @classmethod
    def from_complex(cls, z):
        z = complex(z)
        return cls(abs(z), math.atan2(z.imag, z.real))

    @classmethod
    def from_log(cls, log_r, theta):
        return cls(math.exp(log_r), theta)

    @property
    def eta(self):
        return self.r - 1.0

    @property
    def log_r(self):
        return math.log(self.r)

    @property
    def z(self):
        return self.r * complex(math.cos(self.theta), math.sin(self.theta))


@dataclass(frozen=True)
class EdgeCoordinates:
    """Radial excess ``eta = r - 1`` and angular excess ``kappa = |theta| - Theta_t``."""

    eta: float
    kappa: float


@dataclass(frozen=True)
class ControlParameter:
    """Value of ``B(z)`` and which branch produced it (``"exterior"`` for kappa > 0)."""

    value: float
    branch: str


@dataclass(frozen=True, eq=False)
class EigenAngleConfig:
    """Sorted, winding-aware eigenangles at one time.

    ``angles`` are real numbers (not reduced mod 2 pi) with
    ``theta_1 <= ... <= theta_N <= theta_1 + 2 pi``; strict for ``t > 0``.
    """

    t: float
    angles: np.ndarray

    def __post_init__(self):
        a = np.array(self.angles, dtype=float).ravel()
        if a.size < 1:
            raise ValueError("EigenAngleConfig needs N >= 1")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite eigenangle")
        d = np.diff(a)
        span = a[-1] - a[0]
        if self.t > 0:
            if np.any(d <= 0) or (a.size > 1 and span >= _TWO_PI):
                raise ValueError("angles must satisfy theta_1 < ... < theta_N < theta_1 + 2 pi")
        elif np.any(d < 0) or span > _TWO_PI:
            raise ValueError("angles must be nondecreasing within one turn")
        a.setflags(write=False)
        object.__setattr__(self, "angles", a)
        object.__setattr__(self, "t", float(self.t))

    def __eq__(self, other):
        return (isinstance(other, EigenAngleConfig) and self.t == other.t
                and np.array_equal(self.angles, other.angles))

    @property
    def N(self):
        return int(self.angles.size)

    @classmethod
    def from_unsorted(cls, t, angles):
        return cls(t, np.sort(np.asarray(angles, float)))

    def principal(self):
        """Angles reduced to (-pi, pi] and sorted."""
        return np.sort(normalize_angle(self.angles))

    def eigenvalues(self):
        return np.exp(1j * self.angles)

    def center_of_mass(self):
        return float(np.mean(self.angles))

    def to_csv(self):
        buf = io.StringIO()
        buf.write("t,index,angle\n")
        for i, a in enumerate(self.angles, start=1):
            buf.write(f"{self.t:.17g},{i},{a:.17g}\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text):
        """Parse one or more configs from ``t,index,angle`` CSV text."""
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if not lines or lines[0].replace(" ", "") != "t,index,angle":
            raise ValueError("expected header t,index,angle")
        groups = {}
        for ln in lines[1:]:
            t, i, a = ln.split(",")
            groups.setdefault(float(t), []).append((int(i), float(a)))
        out = []
        for t, rows in groups.items():
            rows.sort()
            out.append(EigenAngleConfig(t, np.array([a for _, a in rows])))
        return out


def _angles_of(angles):
    if isinstance(angles, EigenAngleConfig):
        return angles.angles
    return np.asarray(angles, dtype=float).ravel()


def _points_of(z):
    if isinstance(z, PolarPoint):
        return np.asarray(z.z, complex)
    if isinstance(z, (list, tuple)) and z and isinstance(z[0], PolarPoint):
        return np.array([p.z for p in z])
    return np.asarray(z, dtype=complex)


def _check_radius(z, floor):
    r = np.abs(z)
    if np.any(np.abs(r - 1.0) < floor):
        raise ValueError(f"|r - 1| below the radius floor {floor:g}: evaluation is ill-conditioned")


def _chunked(lam, z, fn, chunk=1 << 21):
    """Evaluate ``mean_i fn(lam_i, z)`` over a flat z array in memory-bounded chunks."""
    zf = z.ravel()
    out = np.empty(zf.shape, dtype=complex)
    step = max(1, chunk // max(lam.size, 1))
    for s in range(0, zf.size, step):
        zz = zf[s:s + step, None]
        # np.sum reduces the contiguous last axis pairwise
        out[s:s + step] = np.sum(fn(lam[None, :], zz), axis=1) / lam.size
    return out.reshape(z.shape)


def empirical_cauchy_transform(angles, z, floor=RADIUS_FLOOR):
    """``f(z) = (1/N) sum_i (lambda_i + z)/(lambda_i - z)``.

    Parameters
    ----------
    angles : EigenAngleConfig or array_like
        Eigenangles.
    z : PolarPoint, complex or array_like of complex
        Evaluation points with ``| |z| - 1 | >= floor``.
    """
    lam = np.exp(1j * _angles_of(angles))
    zz = _points_of(z)
    _check_radius(zz, floor)
    out = _chunked(lam, zz, lambda l, w: (l + w) / (l - w))
    return complex(out) if out.ndim == 0 else out


def empirical_cauchy_derivative(angles, z, floor=RADIUS_FLOOR):
    """``d f / dz = (2/N) sum_i lambda_i/(lambda_i - z)^2``."""
    lam = np.exp(1j * _angles_of(angles))
    zz = _points_of(z)
    _check_radius(zz, floor)
    out = _chunked(lam, zz, lambda l, w: 2.0 * l / (l - w) ** 2)
    return complex(out) if out.ndim == 0 else out


def real_part_identity(angles, z, floor=RADIUS_FLOOR):
    """Both sides of ``Re f(z) = (1/N) sum_i (1 - |z|^2)/|lambda_i - z|^2``.

    Returns
    -------
    (lhs, rhs) : floats (or arrays for array z)
    """
    a = _angles_of(angles)
    zz = _points_of(z)
    lhs = np.real(empirical_cauchy_transform(a, zz, floor))
    lam = np.exp(1j * a)
    rhs = np.real(_chunked(lam, zz, lambda l, w: (1.0 - np.abs(w) ** 2) / np.abs(l - w) ** 2 + 0j))
    if np.ndim(zz) == 0:
        return float(lhs), float(rhs)
    return lhs, rhs


def edge_coordinates(z, t):
    """``(eta, kappa) = (r - 1, |theta| - Theta_t)`` for 0 < t < 4."""
    t = float(t)
    if not 0.0 < t < 4.0:
        raise ValueError("edge coordinates need 0 < t < 4")
    p = z if isinstance(z, PolarPoint) else PolarPoint.from_complex(z)
    return EdgeCoordinates(p.eta, abs(p.theta) - biane_limit.theta_edge(t))


def control_parameter(coords, N):
    """``B = 1/(N sqrt((kappa + eta) eta))`` for kappa > 0, else ``1/(N eta)``.

    At kappa = 0 both branches give ``1/(N eta)``; that value is reported on
    the interior branch.
    """
    eta, kappa = float(coords.eta), float(coords.kappa)
    if not eta > 0:
        raise ValueError("control parameter needs eta > 0")
    if kappa > 0:
        return ControlParameter(1.0 / (N * math.sqrt((kappa + eta) * eta)), "exterior")
    return ControlParameter(1.0 / (N * eta), "interior")
