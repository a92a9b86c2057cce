"""Finite-N local law and rigidity checks on a particle ensemble.

Run: python3 demos/04_rigidity_checks.py   (about a minute on one core)
"""
import math

import numpy as np

from ubmlab import verify
from ubmlab.biane_limit import LimitTransform
from ubmlab.spectral_core import empirical_cauchy_transform
from ubmlab.ubm_sim import SimConfig, simulate_ensemble

N, t = 256, 1.0
ens = simulate_ensemble(SimConfig(N=N, t_final=t, mode="particles", seed=11), 60)

for rep in (verify.local_law_report(ens, t), verify.edge_rigidity_check(ens, t),
            verify.quantile_rigidity_check(ens, t),
            verify.interval_count_report(ens, t, (0.0, 1.0))):
    print(f"{rep.kind:10s} pass {rep.pass_fraction:.3f} (threshold {rep.threshold})")

edge = verify.edge_rigidity_check(ens, t)
print(f"\nedge excess (theta_N - Theta) N^(2/3): median {edge.median('scaled'):+.2f},"
      f" IQR {np.percentile(edge.stats['scaled'], [25, 75]).round(2)}")

# Helffer-Sjostrand reconstructs a smooth linear statistic from the transform alone
phi = (np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x))
angles = ens[0].final.angles
hs = verify.hs_functional(phi, lambda z: empirical_cauchy_transform(angles, z), tol=1e-7)
print(f"\nsum cos(theta)/N = {np.mean(np.cos(angles)):.8f}, HS = {hs:.8f}")
print(f"limit: HS on f~ = {verify.hs_functional(phi, LimitTransform(t), tol=1e-7):.8f},"
      f" e^(-1/2) = {math.exp(-0.5):.8f}")
