"""Simulate unitary Brownian motion two ways and compare with the limit.

Run: python3 demos/03_simulate_unitary_bm.py
"""
import math

import numpy as np
from scipy import stats

from ubmlab import biane_limit
from ubmlab.ubm_sim import SimConfig, scheme_trace_mean, simulate, simulate_ensemble

cfg = SimConfig(N=64, t_final=1.0, dt=1e-3, seed=3, snapshots=(0.25, 0.5))
tr = simulate(cfg)
print(f"matrix run: {tr.steps} steps, unitarity defect {tr.max_defect():.1e},"
      f" |com - tr W/N| = {tr.com_discrepancy():.1e}")
for t, u in zip(tr.times, tr.trace_u):
    print(f"  t = {t:.2f}: (1/N) tr U = {u.real:+.4f}{u.imag:+.4f}i  (limit e^(-t/2) = {math.exp(-t / 2):.4f})")
print(f"scheme mean at t=1: {scheme_trace_mean(64, 1e-3, 1.0):.8f} vs {math.exp(-0.5):.8f}")

# the particle system has the same law and is far cheaper at large N
par = simulate_ensemble(SimConfig(N=32, t_final=1.0, mode="particles", seed=4), 100)
mat = simulate_ensemble(SimConfig(N=32, t_final=1.0, seed=5, unwrap=False), 100)
a = [p.final.principal()[-1] for p in par]
b = [m.final.principal()[-1] for m in mat]
print(f"\nlargest angle, particles vs matrix: KS p = {stats.ks_2samp(a, b).pvalue:.3f}")

big = simulate(SimConfig(N=512, t_final=1.0, mode="particles", seed=6)).final
hist, edges = np.histogram(big.principal(), bins=12, range=(-math.pi, math.pi), density=True)
mid = 0.5 * (edges[1:] + edges[:-1])
print("\n theta    empirical  rho_1")
for m, h in zip(mid, hist):
    print(f"{m:+.3f}   {h:.4f}    {biane_limit.density(m, 1.0):.4f}")
