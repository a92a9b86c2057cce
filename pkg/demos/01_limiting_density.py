"""The limiting eigenvalue density rho_t: support, gap closing, and the cusp.

Run: python3 demos/01_limiting_density.py
"""
import math

import numpy as np

from ubmlab import biane_limit

print(" t      Theta_t     Delta_t    rho(0)     rho(pi)    mass-1")
for t in (0.25, 1.0, 2.0, 3.5, 3.9, 4.0, 4.5, 6.0):
    edge = biane_limit.theta_edge(t) if t < 4 else math.pi
    gap = biane_limit.gap(t) if t <= 4 else 0.0
    mass = biane_limit.integrate_density(np.ones_like, t)
    print(f"{t:4.2f}  {edge:10.6f}  {gap:10.6f}  {biane_limit.density(0.0, t):9.5f}"
          f"  {biane_limit.density(math.pi, t):9.5f}  {mass - 1:+.1e}")

# square-root edge for t < 4, cube-root cusp at t = 4
E = np.geomspace(1e-8, 1e-2, 4)
c2 = biane_limit.sqrt_edge_constant(2.0)
print("\nt = 2 edge:  rho(Theta - E)/(c sqrt E) =",
      np.round(biane_limit.density(biane_limit.theta_edge(2.0) - E, 2.0) / (c2 * np.sqrt(E)), 5))
c4 = biane_limit.cusp_constant()
print("t = 4 cusp:  rho(pi - E)/(c E^(1/3))    =",
      np.round(biane_limit.density(math.pi - E, 4.0) / (c4 * np.cbrt(E)), 5))

# once the edges merge the minimum grows like sqrt(3 s)/(4 pi)
for s in (1e-3, 1e-2, 1e-1):
    r = biane_limit.density(math.pi, 4 + s) * 4 * math.pi / math.sqrt(3 * s)
    print(f"t = 4 + {s:g}: rho(pi) 4 pi / sqrt(3 s) = {r:.4f}")

q = biane_limit.quantiles(1.0, 8)
print("\nquantiles of rho_1 for N = 8:", np.round(q.gamma, 4))
