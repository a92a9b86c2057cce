"""The limiting Cauchy transform is constant along characteristics.

Run: python3 demos/02_transform_and_characteristics.py
"""
import numpy as np

from ubmlab.biane_limit import LimitTransform
from ubmlab.characteristics import characteristic_path, edge_angular_decay_check
from ubmlab.spectral_core import PolarPoint

t = 1.5
lt = LimitTransform(t)
z = PolarPoint(1.3, 0.8)
f = complex(lt(z.z))
print(f"f~({z.r} e^(i {z.theta}), t={t}) = {f:.12f}")
# symmetry across the circle: f~(z) = -conj f~(1/conj z)
print("reflection residual:", abs(f + np.conj(lt(1 / np.conj(z.z)))))

path = characteristic_path(z, t, 10)
print("\n  s      |z_s|        arg z_s      f~(z_s, s)")
for s, p, fs in zip(path.s, path.points, path.f):
    print(f"{s:5.2f}  {abs(p):.8f}  {np.angle(p):+.8f}  {fs:.10f}")
print(f"relative drift {path.drift():.1e}, radial identity residual {path.max_radial_residual():.1e}")

# backward in time outside the support, sqrt(kappa) grows at least linearly
rep = edge_angular_decay_check(PolarPoint(1.01, 2.6), 1.0)
print(f"\nedge decay: slope {rep.slope:.4f}, smallest chord slope {rep.slope_lower:.4f},"
      f" passed = {rep.passed}")
