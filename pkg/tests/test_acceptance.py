"""The eleven acceptance criteria, each at its stated tolerance and time budget."""
import itertools
import math
import time

import numpy as np
import pytest

from conelab import specfun
from conelab.cross_section import ConeModel, CrossSectionSpec, build_spectrum, weyl_slope
from conelab.errors import DomainError
from conelab.harness import fit_loglog, halfwave_samples
from conelab.lp_theory import (
    active_scales,
    bernstein_ratio,
    partition_sum,
    random_band_limited,
    square_function_ratio,
)
from conelab.propagators import (
    halfwave_localized_kernel,
    mode_sum,
    poisson_wave_kernel,
    schrodinger_evolve,
    schrodinger_kernel,
    schrodinger_kernel_integral_form,
    weber_identity_residual,
)
from conelab.spectral_calculus import (
    KernelQuery,
    RadialGrid,
    RadialProfile,
    band_limited_coefficients,
    hankel_transform,
)

T11 = CrossSectionSpec.torus(1.0, 1.0)
TORUS = ConeModel(3, T11)


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def test_c01_weber_identity(verdict):
    with Clock() as clk:
        worst, done, skipped = 0.0, 0, 0
        rs = (0.3, 1.0, 3.0)
        for nu, eps, t, r1, r2 in itertools.product((0.0, 0.5, 1.3, 2.7), (1.0, 0.1, 0.05), (0.0, 0.5, 2.0), rs, rs):
            try:
                worst = max(worst, weber_identity_residual(nu, eps, t, r1, r2))
                done += 1
            except DomainError:
                skipped += 1
    ok = worst <= 1e-7 and clk.elapsed < 30
    verdict(1, "Weber identity", ok,
            f"max residual {worst:.2e} over {done} cases ({skipped} outside envelope), {clk.elapsed:.1f}s")


def test_c02_representation_equivalence(verdict):
    rng = np.random.default_rng(1)
    with Clock() as clk:
        worst = 0.0
        for _ in range(20):
            t = rng.choice([-1.0, 1.0]) * 10.0 ** rng.uniform(-1.0, 1.0)
            r1, r2 = rng.uniform(0.2, 3.0, 2)
            q = KernelQuery(t, r1, tuple(rng.uniform(0, 2 * math.pi, 2)), r2, tuple(rng.uniform(0, 2 * math.pi, 2)))
            diff = abs(schrodinger_kernel(TORUS, q) - schrodinger_kernel_integral_form(TORUS, q))
            worst = max(worst, diff * abs(t) ** 1.5)
    ok = worst <= 1e-6 and clk.elapsed < 120
    verdict(2, "representation equivalence", ok, f"max |series - integral| |t|^(n/2) = {worst:.2e}, {clk.elapsed:.1f}s")


def test_c03_small_z(verdict):
    z = np.geomspace(1e-3, 0.5, 25)
    y1, y2 = (0.0, 0.0), (math.pi / 2, math.pi / 2)
    with Clock() as clk:
        slopes = {}
        for nu0 in (0.5, 0.75):
            model = ConeModel.with_nu0(3, T11, nu0)
            vals = [abs(mode_sum(model, float(x), y1, y2)) for x in z]
            slopes[nu0] = fit_loglog(zip(z, vals)).slope
    ok = all(abs(s - nu0) <= 0.05 for nu0, s in slopes.items()) and clk.elapsed < 60
    detail = ", ".join(f"nu0={k}: slope {v:.4f}" for k, v in slopes.items())
    verdict(3, "small-z slope", ok, f"{detail}, {clk.elapsed:.1f}s")


def test_c04_large_z(verdict):
    z = np.geomspace(5.0, 100.0, 30)
    s2 = 1 / math.sqrt(2)
    cases = [
        ("torus", TORUS, (0.0, 0.0), (0.0, 0.0)),
        ("torus", TORUS, (0.0, 0.0), (1.0, 0.5)),
        ("sphere", ConeModel(3, CrossSectionSpec.sphere(2, 1.5)), (0.0, 0.0, 1.0), (0.0, 0.0, 1.0)),
        ("sphere", ConeModel(3, CrossSectionSpec.sphere(2, 1.5)), (0.0, 0.0, 1.0), (0.0, 1.0, 0.0)),
        ("sphere", ConeModel(3, CrossSectionSpec.sphere(2, 1.5)), (0.0, 0.0, 1.0), (s2, 0.0, s2)),
    ]
    with Clock() as clk:
        spreads, slopes = [], []
        for _, model, y1, y2 in cases:
            # t = 1 and r1 = r2 = sqrt(2 z): |t|^{n/2} |K| = |K|
            vals = [abs(schrodinger_kernel(model, KernelQuery(1.0, math.sqrt(2 * x), y1, math.sqrt(2 * x), y2),
                                           nu_budget=250.0)) for x in z]
            spreads.append(max(vals) / min(vals))
            slopes.append(fit_loglog(zip(z, vals)).slope)
    ok = max(spreads) <= 3 and all(abs(s) <= 0.15 for s in slopes) and clk.elapsed < 600
    verdict(4, "large-z boundedness", ok,
            f"max/min {max(spreads):.3f}, slopes in [{min(slopes):.3f}, {max(slopes):.3f}], {clk.elapsed:.1f}s")


def test_c05_halfwave_decay(verdict):
    steps = np.geomspace(1.0, 64.0, 7)
    with Clock() as clk:
        slopes = {}
        for j in (1, 2, 3):
            ts = 2.0 ** -j * steps
            sup = [max(abs(halfwave_localized_kernel(TORUS, j, t, q)[0]) for q in halfwave_samples(TORUS, j, t))
                   for t in ts]
            slopes[j] = fit_loglog(zip(ts, sup)).slope
    ok = all(abs(s + 1.0) <= 0.15 for s in slopes.values()) and clk.elapsed < 600
    detail = ", ".join(f"j={j}: {s:.3f}" for j, s in slopes.items())
    verdict(5, "half-wave localized decay", ok, f"slopes {detail} (target -1), {clk.elapsed:.1f}s")


def test_c06_poisson_decay(verdict):
    near = np.geomspace(0.1, 2 * math.pi, 12)
    far = np.geomspace(2 * math.pi, 30.0, 12)
    pairs = [((0.0, 0.0), (0.0, 0.0)), ((0.0, 0.0), (math.pi - 0.05, math.pi - 0.05)), ((0.0, 0.0), (1.0, 2.0))]
    with Clock() as clk:
        s_near, s_far = [], []
        for y1, y2 in pairs:
            v = lambda s: abs(poisson_wave_kernel(TORUS, float(s), 1, y1, y2)[0])  # noqa: E731
            s_near.append(fit_loglog([(s, v(s)) for s in near]).slope)
            s_far.append(fit_loglog([(s, v(s)) for s in far]).slope)
    ok = max(s_near) <= -0.5 + 0.2 and max(s_far) <= -2.0 + 0.2 and clk.elapsed < 60
    verdict(6, "Poisson-wave decay", ok,
            f"worst slope {max(s_near):.3f} on [0.1, 2pi], {max(s_far):.3f} on [2pi, 30], {clk.elapsed:.1f}s")


def test_c07_hankel(verdict):
    grid = RadialGrid(3)
    assert grid.nodes.size == 4096
    r = grid.nodes
    with Clock() as clk:
        norm_dev, inv_dev, closed_dev = 0.0, 0.0, 0.0
        for nu in (0.5, 1.0, 2.3):
            for w in (1.0, 0.7):
                # order-adapted Gaussian r^{nu-(n-2)/2} e^{-r^2/(2 w^2)}
                f = RadialProfile(grid, r ** (nu - 0.5) * np.exp(-r * r / (2 * w * w)))
                h = hankel_transform(nu, f)
                back = hankel_transform(nu, h)
                exact = r ** (nu - 0.5) * w ** (2 * nu + 2) * np.exp(-r * r * w * w / 2)
                norm_dev = max(norm_dev, abs(h.norm() / f.norm() - 1))
                inv_dev = max(inv_dev, float(np.max(np.abs(back.values - f.values))))
                closed_dev = max(closed_dev, float(np.max(np.abs(h.values - exact))))
    ok = norm_dev <= 1e-6 and inv_dev <= 1e-6 and clk.elapsed < 30
    verdict(7, "Hankel unitarity and self-inversion", ok,
            f"|norm ratio - 1| {norm_dev:.1e}, double-transform {inv_dev:.1e}, "
            f"closed form {closed_dev:.1e}, {clk.elapsed:.1f}s")


def test_c08_weyl(verdict):
    with Clock() as clk:
        sphere = weyl_slope(build_spectrum(ConeModel(3, CrossSectionSpec.sphere(2, 1.0)), 25.0).modes, 500)
        torus = weyl_slope(build_spectrum(TORUS, 15.0).modes, 500)
    ok = abs(sphere - 1) <= 0.08 and abs(torus - 1) <= 0.08 and clk.elapsed < 10
    verdict(8, "Weyl law", ok, f"sphere {sphere:.4f}, torus {torus:.4f} (target 1), {clk.elapsed:.1f}s")


def test_c09_bessel_envelopes(verdict):
    nus = np.round(np.arange(0.0, 30.0 + 1e-9, 0.1), 10)
    x = np.round(np.arange(0.0, 100.0 + 1e-9, 0.1), 10)
    N, X = np.meshgrid(nus, x, indexing="ij")
    with Clock() as clk:
        bad_j = int(np.sum(np.abs(specfun.jv(N, X)) > specfun.bessel_envelope(N, X)))
        Np, Xp = N[:, 1:], X[:, 1:]
        bad_d = int(np.sum(np.abs(specfun.jvp(Np, Xp)) > specfun.bessel_derivative_envelope(Np, Xp)))
    ok = bad_j == 0 and bad_d == 0 and clk.elapsed < 60
    verdict(9, "Bessel envelopes", ok,
            f"{bad_j} value and {bad_d} derivative violations on {N.size} nodes, {clk.elapsed:.1f}s")


def _square_window(fs):
    r = [square_function_ratio(TORUS, f, 4.0) for f in fs]
    return min(r), max(r)


def test_c10_littlewood_paley(verdict):
    with Clock() as clk:
        lam = np.geomspace(1e-3, 1e3, 100001)
        part = float(np.max(np.abs(partition_sum(lam) - 1.0)))
        rng = np.random.default_rng(10)
        fs = [random_band_limited(TORUS, rng) for _ in range(40)]
        assert list(active_scales(fs[0])) == list(range(-2, 5))
        spread = max(
            max(r) / min(r) for r in ([bernstein_ratio(TORUS, f, j) for j in range(-2, 5)] for f in fs[:20])
        )
        lo20, hi20 = _square_window(fs[:20])
        lo40, hi40 = _square_window(fs)
        drift = max(abs(lo40 - lo20) / lo20, abs(hi40 - hi20) / hi20)
    ok = part <= 1e-10 and spread <= 10 and drift < 0.10 and clk.elapsed < 300
    verdict(10, "Littlewood-Paley suite", ok,
            f"partition {part:.1e}, Bernstein max/min {spread:.2f}, square window "
            f"[{lo20:.3f}, {hi20:.3f}] -> [{lo40:.3f}, {hi40:.3f}] (drift {100 * drift:.1f}%), {clk.elapsed:.1f}s")


def test_c11_l2_unitarity(verdict):
    rng = np.random.default_rng(11)
    with Clock() as clk:
        worst = 0.0
        for _ in range(5):
            f = band_limited_coefficients(TORUS, rng)
            for t in (0.5, 2.0):
                worst = max(worst, abs(schrodinger_evolve(f, t).l2_norm() / f.l2_norm() - 1))
    ok = worst <= 1e-5 and clk.elapsed < 120
    verdict(11, "L2 unitarity of e^{itH}", ok, f"max |ratio - 1| {worst:.1e}, {clk.elapsed:.1f}s")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
