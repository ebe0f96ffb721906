"""Littlewood-Paley probes: partition of unity, Bernstein ratios, square function and Besov norms.

Run with ``python demos/littlewood_paley.py``; takes about twenty seconds.
"""
import math

import numpy as np

from conelab.cross_section import ConeModel, CrossSectionSpec
from conelab.lp_theory import (
    BesovParams,
    active_scales,
    bernstein_ratio,
    besov_norm,
    bump,
    partition_sum,
    random_band_limited,
    square_function_ratio,
    square_sum_bounds,
)

model = ConeModel(3, CrossSectionSpec.torus(1.0, 1.0))
lam = np.geomspace(1e-3, 1e3, 20001)
print(f"partition of unity error on [1e-3, 1e3]: {np.max(np.abs(partition_sum(lam) - 1)):.1e}")
print(f"bump at 0.7, 1.0, 1.5: {bump(np.array([0.7, 1.0, 1.5]))}")
lo, hi = square_sum_bounds()
print(f"sum_j phi_j^2 ranges over [{lo:.4f}, {hi:.4f}]")

rng = np.random.default_rng(0)
fs = [random_band_limited(model, rng) for _ in range(6)]
print(f"test functions live on scales {list(active_scales(fs[0]))}")
for i, f in enumerate(fs):
    ratios = [bernstein_ratio(model, f, j) for j in active_scales(f)]
    sq = square_function_ratio(model, f, 4.0)
    b = besov_norm(model, f, BesovParams(0.0, 2.0, 2.0)) / math.sqrt(f.sobolev_sq(0.0))
    print(f"  f{i}: Bernstein max/min {max(ratios) / min(ratios):.2f}   square ratio (p=4) {sq:.3f}"
          f"   B^0_22 / L2 {b:.4f}")
