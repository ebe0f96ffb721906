"""Decay of the Schroedinger, half-wave and Poisson-wave kernels on the cone over the flat torus.

Run with ``python demos/dispersive_decay.py``; takes about half a minute.
"""
import math

import numpy as np

from conelab.cross_section import ConeModel, CrossSectionSpec
from conelab.harness import fit_loglog, halfwave_samples
from conelab.propagators import (
    dispersive_bound,
    halfwave_localized_kernel,
    mode_sum,
    poisson_wave_kernel,
    schrodinger_kernel,
)
from conelab.spectral_calculus import KernelQuery

torus = CrossSectionSpec.torus(1.0, 1.0)
model = ConeModel(3, torus)
print(f"cone of dimension {model.n}: nu0 = {model.nu0}, alpha = {model.alpha}, q(alpha) = {model.q_alpha}")

# Schroedinger: sup over a few points, against |t|^{-n/2}
ts = np.geomspace(0.25, 16.0, 7)
points = [(r1, r2, y) for r1 in (0.5, 1.0, 2.0) for r2 in (0.5, 2.0) for y in ((0.0, 0.0), (1.0, 2.0))]
sup = []
for t in ts:
    vals = [abs(schrodinger_kernel(model, KernelQuery(t, r1, (0.0, 0.0), r2, y))) for r1, r2, y in points]
    sup.append(max(vals))
    worst = max(abs(schrodinger_kernel(model, q)) / dispersive_bound(model, q)
                for q in (KernelQuery(t, r1, (0.0, 0.0), r2, y) for r1, r2, y in points))
    print(f"  t = {t:7.3f}   sup |K| = {sup[-1]:.4e}   sup |K| / |t|^(-3/2) = {worst:.3f}")
print(f"Schroedinger slope {fit_loglog(zip(ts, sup)).slope:.3f} (the sampled sup need only decay at least this fast: -1.5)")

# small z: the mode sum vanishes like z^{nu0}
for nu0 in (0.5, 0.75):
    m = ConeModel.with_nu0(3, torus, nu0)
    z = np.geomspace(1e-3, 0.5, 12)
    s = [abs(mode_sum(m, float(x), (0.0, 0.0), (math.pi / 2, math.pi / 2))) for x in z]
    print(f"small-z slope for nu0 = {nu0}: {fit_loglog(zip(z, s)).slope:.4f}")

# frequency-localised half-wave kernels
for j in (1, 2):
    ts = 2.0 ** -j * np.geomspace(1.0, 64.0, 7)
    sup = [max(abs(halfwave_localized_kernel(model, j, t, q)[0]) for q in halfwave_samples(model, j, t)) for t in ts]
    print(f"half-wave j = {j}: slope {fit_loglog(zip(ts, sup)).slope:.3f} (expected about -1)")

# Poisson-wave operator past time pi
for lo, hi, target in ((0.1, 2 * math.pi, -0.5), (2 * math.pi, 30.0, -2.0)):
    s = np.geomspace(lo, hi, 10)
    v = [abs(poisson_wave_kernel(model, float(x), 1, (0.0, 0.0), (1.0, 2.0))[0]) for x in s]
    print(f"Poisson-wave on [{lo:.2f}, {hi:.2f}]: slope {fit_loglog(zip(s, v)).slope:.3f} (at most {target})")
