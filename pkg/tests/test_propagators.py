import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conelab import specfun
from conelab.cross_section import ConeModel, CrossSectionSpec, build_spectrum
from conelab.errors import BudgetExceeded, DomainError
from conelab.propagators import (
    BoundReport,
    cone_distance,
    dispersive_bound,
    halfwave_bound,
    halfwave_localized_kernel,
    heat_bound,
    heat_kernel,
    heat_kernel_field,
    mode_sum,
    poisson_bound,
    poisson_wave_kernel,
    schrodinger_evolve,
    schrodinger_kernel,
    schrodinger_kernel_integral_form,
    split_projection,
    weber_identity_residual,
)
from conelab.spectral_calculus import (
    ConeGrid,
    KernelQuery,
    ModeCoefficients,
    Multiplier,
    RadialGrid,
    band_limited_coefficients,
    cached_spectrum,
    cone_lq_norm,
    kernel_of_function,
)

T11 = CrossSectionSpec.torus(1.0, 1.0)
TORUS = ConeModel(3, T11)
Y1, Y2 = (0.3, 0.2), (1.0, 2.5)


def query(t, r1, r2, y1=Y1, y2=Y2):
    return KernelQuery(t, r1, y1, r2, y2)


class TestSchrodinger:
    def test_symmetry(self):
        q = query(0.7, 0.8, 1.9)
        assert schrodinger_kernel(TORUS, q) == pytest.approx(schrodinger_kernel(TORUS, q.swapped()), abs=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.1, 5.0), st.floats(0.2, 3.0), st.floats(0.2, 3.0))
    def test_time_reversal_conjugates(self, t, r1, r2):
        q = query(t, r1, r2)
        a = schrodinger_kernel(TORUS, q)
        b = schrodinger_kernel(TORUS, q.with_t(-t))
        assert abs(b - np.conj(a)) <= 1e-9 * abs(t) ** -1.5

    def test_epsilon_extrapolation_oracle(self):
        q = query(1.0, 1.0, 1.0, Y1, Y1)
        ref = schrodinger_kernel(TORUS, q, 1e-10)
        v = [kernel_of_function(TORUS, Multiplier.gaussian(e, 1.0), q, 1e-10) for e in (0.1, 0.05, 0.025)]
        # Richardson in eps with orders 1 and 2
        r_a, r_b = 2 * v[1] - v[0], 2 * v[2] - v[1]
        extrap = (4 * r_b - r_a) / 3
        assert abs(extrap - ref) <= 1e-4

    @pytest.mark.parametrize("t, r1, r2", [(0.5, 0.4, 1.1), (-2.0, 1.5, 2.5), (3.0, 0.9, 0.3)])
    def test_integral_form_agrees(self, t, r1, r2):
        q = query(t, r1, r2)
        a = schrodinger_kernel(TORUS, q)
        b = schrodinger_kernel_integral_form(TORUS, q)
        assert abs(a - b) <= 1e-6 * abs(t) ** -1.5

    def test_integral_form_single_mode(self):
        # one mode with nu = 1.3
        model = ConeModel(3, CrossSectionSpec.custom([(1.44, 1, "constant")], 2.0))
        q = query(0.8, 1.1, 1.7, (0.0, 0.0), (0.0, 0.0))
        z = q.z
        pref = (q.r1 * q.r2) ** -0.5 * np.exp(-(q.r1 ** 2 + q.r2 ** 2) / (4j * q.t)) / (2j * q.t) / 2.0
        expected = pref * np.exp(-0.65j * math.pi) * float(specfun.jv(1.3, z))
        assert schrodinger_kernel_integral_form(model, q) == pytest.approx(expected, abs=1e-10)
        assert schrodinger_kernel(model, q) == pytest.approx(expected, abs=1e-10)

    def test_t_zero(self):
        with pytest.raises(DomainError):
            schrodinger_kernel(TORUS, query(0.0, 1.0, 1.0))

    def test_budget(self):
        with pytest.raises(BudgetExceeded):
            mode_sum(TORUS, 400.0, Y1, Y2, nu_budget=50.0)

    def test_mode_sum_principal_branch(self):
        sp = cached_spectrum(TORUS, 40.0)
        z = 0.7
        proj = sp.projector(np.array(Y1), np.array(Y2))
        direct = np.sum(proj * np.exp(-0.5j * math.pi * sp.nu) * specfun.jv(sp.nu, z))
        assert mode_sum(TORUS, z, Y1, Y2) == pytest.approx(direct, abs=1e-12)


class TestWeber:
    def test_trivial(self):
        assert weber_identity_residual(0.0, 1.0, 0.0, 0.0, 0.0) <= 1e-12

    def test_examples(self):
        assert weber_identity_residual(0.5, 0.5, 0.7, 1.0, 2.0) <= 1e-8
        assert weber_identity_residual(1.3, 0.1, 2.0, 1.5, 1.5) <= 1e-7

    def test_envelope(self):
        with pytest.raises(DomainError):
            weber_identity_residual(1.0, 0.01, 0.0, 1.0, 1.0)
        with pytest.raises(DomainError):
            weber_identity_residual(1.0, 0.02, 0.0, 3.0, 3.0)


class TestEvolve:
    def test_unitary(self):
        grid = RadialGrid(3, 1024, r_max=40.0, n_graded=8)
        rho = RadialGrid(3, 512, r_max=10.0, n_graded=8)
        f = band_limited_coefficients(TORUS, np.random.default_rng(3), grid, rho_grid=rho)
        for t in (0.5, 2.0):
            g = schrodinger_evolve(f, t, rho_grid=rho)
            assert g.l2_norm() == pytest.approx(f.l2_norm(), rel=1e-8)

    def test_matches_kernel(self):
        # e^{itH} f on the constant mode against direct integration of the kernel
        grid = RadialGrid(3, 1024, r_max=20.0, n_graded=8)
        sp = cached_spectrum(TORUS, 2.0)
        c = np.exp(-grid.nodes ** 2 / 2)[None, :].astype(complex)
        f = ModeCoefficients(sp, grid, ((0, 0),), c)
        t = 0.6
        g = schrodinger_evolve(f, t)
        r1 = 1.3
        r = grid.nodes
        z = r1 * r / (2 * t)
        kern = (r1 * r) ** -0.5 * np.exp(-(r1 ** 2 + r ** 2) / (4j * t)) / (2j * t)
        kern = kern * np.exp(-0.25j * math.pi) * specfun.jv(0.5, z)
        direct = np.sum(grid.weights * kern * c[0])
        assert np.interp(r1, r, g.coeffs[0].real) == pytest.approx(direct.real, abs=1e-4)
        assert np.interp(r1, r, g.coeffs[0].imag) == pytest.approx(direct.imag, abs=1e-4)

    def test_lq_probe_bounded(self):
        grid = RadialGrid(3, 2048, r_max=80.0, n_graded=8)
        rho = RadialGrid(3, 512, r_max=7.0, n_graded=8)
        f = band_limited_coefficients(TORUS, np.random.default_rng(8), grid, n_terms=2, nu_cap=1.5,
                                      rho_cut=(5.0, 6.0), rho_grid=rho)
        cg = ConeGrid.build(TORUS, grid, 12)
        q = 4.0
        base = cone_lq_norm(TORUS, f, q / (q - 1), cg)
        ratios = []
        for t in (0.5, 1.0, 2.0, 5.0):
            g = schrodinger_evolve(f, t, rho_grid=rho)
            ratios.append(cone_lq_norm(TORUS, g, q, cg) * t ** (1.5 * (1 - 2 / q)) / base)
        # the scaled ratio saturates instead of growing with t
        assert max(ratios) / min(ratios) <= 1.5


class TestHeat:
    @pytest.mark.parametrize("sigma, r1, r2", [(0.01, 1.0, 1.2), (0.5, 0.3, 2.0), (4.0, 5.0, 0.1), (50.0, 2.0, 2.0)])
    def test_positive(self, sigma, r1, r2):
        val, rep = heat_kernel(TORUS, sigma, query(sigma, r1, r2))
        assert val > 0
        assert rep.ratio == pytest.approx(val / rep.bound_value, rel=1e-12)

    def test_semigroup(self):
        grid = RadialGrid(3, 1024, r_max=20.0, n_graded=8)
        cg = ConeGrid.build(TORUS, grid, 16)
        s = 0.5
        a = heat_kernel_field(TORUS, s, 1.0, np.array(Y1), grid.nodes, cg.y_points)
        b = heat_kernel_field(TORUS, s, 1.5, np.array(Y2), grid.nodes, cg.y_points)
        lhs = np.sum(cg.weights * a * b)
        rhs, _ = heat_kernel(TORUS, 2 * s, query(1.0, 1.0, 1.5))
        assert lhs == pytest.approx(rhs, abs=1e-4)

    @pytest.mark.parametrize("nu0", [0.5, 0.75])
    def test_large_sigma_slope(self, nu0):
        model = ConeModel.with_nu0(3, T11, nu0)
        v = [heat_kernel(model, s, query(1.0, 1.0, 1.0))[0] for s in (1e3, 1e4)]
        assert math.log10(v[1] / v[0]) == pytest.approx(-(1 + nu0), abs=5e-3)

    def test_field_matches_pointwise(self):
        r = np.array([0.5, 1.7])
        y = np.array([Y2, (0.0, 0.0)])
        field = heat_kernel_field(TORUS, 0.3, 1.1, np.array(Y1), r, y)
        point = heat_kernel(TORUS, 0.3, KernelQuery(1, 1.1, Y1, 1.7, (0.0, 0.0)))[0]
        assert field[1, 1] == pytest.approx(point, rel=1e-9)

    def test_bound_and_distance(self):
        q = query(1.0, 1.0, 1.0, (0.0, 0.0), (math.pi, 0.0))
        assert cone_distance(TORUS, q) == pytest.approx(2.0)
        assert heat_bound(TORUS, 1.0, q) == pytest.approx(0.5 ** 0 * math.exp(-1.0))
        with pytest.raises(DomainError):
            heat_kernel(TORUS, 0.0, q)


class TestPoisson:
    def test_conjugation(self):
        a = poisson_wave_kernel(TORUS, 1.0, 1, Y1, Y2)[0]
        b = poisson_wave_kernel(TORUS, 1.0, -1, Y1, Y2)[0]
        assert a == pytest.approx(np.conj(b), abs=1e-14)

    def test_single_mode_tail(self):
        v = [abs(poisson_wave_kernel(TORUS, s, 1, Y1, Y2)[0]) for s in (20.0, 25.0)]
        assert math.log(v[1] / v[0]) / 5.0 == pytest.approx(-TORUS.nu0, abs=1e-3)

    def test_far_slope(self):
        s = np.geomspace(4.0, 20.0, 12)
        v = [abs(poisson_wave_kernel(TORUS, x, 1, Y1, Y2)[0]) for x in s]
        assert np.polyfit(np.log(s), np.log(v), 1)[0] <= -1.8

    def test_floor_and_sign(self):
        with pytest.raises(DomainError):
            poisson_wave_kernel(TORUS, 0.05, 1, Y1, Y2)
        with pytest.raises(DomainError):
            poisson_wave_kernel(TORUS, 1.0, 0, Y1, Y2)

    def test_bound_continuous(self):
        c = 2 * math.pi
        assert poisson_bound(TORUS, c) == pytest.approx(poisson_bound(TORUS, c * (1 + 1e-12)), rel=1e-9)

    def test_exhaustive_spectrum(self):
        model = ConeModel(3, CrossSectionSpec.custom([(0.0, 1, "constant")], 3.0))
        val, _ = poisson_wave_kernel(model, 2.0, 1, (0.0, 0.0), (0.0, 0.0))
        assert val == pytest.approx(np.exp(-(2.0 + 1j * math.pi) * 0.5) / 3.0, abs=1e-15)


class TestHalfWave:
    def test_t_zero_self_adjoint(self):
        a = halfwave_localized_kernel(TORUS, 1, 0.0, query(0.0, 0.7, 1.2))[0]
        b = halfwave_localized_kernel(TORUS, 1, 0.0, query(0.0, 1.2, 0.7, Y2, Y1))[0]
        assert a == pytest.approx(np.conj(b), abs=1e-12)
        assert abs(a.imag) <= 1e-14

    def test_scale_invariance(self):
        # on the cone K_j(r1, r2) = 2^{jn} K_0(2^j r1, 2^j r2)
        consts = []
        for j in (0, 1, 2):
            s = 2.0 ** -j
            vals = [abs(halfwave_localized_kernel(TORUS, j, 0.5 * s, query(0.0, r * s, 1.3 * r * s))[0])
                    for r in (0.5, 1.0, 2.0)]
            consts.append(max(vals) / 2.0 ** (3 * j))
        assert max(consts) / min(consts) == pytest.approx(1.0, abs=1e-6)

    def test_small_t_bounded(self):
        consts = []
        for j in (0, 1, 2):
            t = 0.5 * 2.0 ** -j
            vals = [halfwave_localized_kernel(TORUS, j, t, query(0.0, r, 1.3 * r))[1].ratio for r in (0.5, 1.0, 2.0)]
            consts.append(max(vals))
        assert max(consts) <= 1.0

    def test_domain(self):
        with pytest.raises(DomainError):
            halfwave_localized_kernel(TORUS, 3, 200.0, query(0.0, 1.0, 1.0))

    def test_bound(self):
        assert halfwave_bound(TORUS, 2, 0.0) == 64.0
        assert halfwave_bound(TORUS, 0, 3.0) == pytest.approx(0.25)


class TestSplitProjection:
    def test_a_zero(self):
        sp = build_spectrum(TORUS, 5.0)
        low, high = split_projection(sp.modes, 3)
        assert low == [] and len(high) == len(sp)

    def test_one_low_mode(self):
        sp = build_spectrum(ConeModel(3, T11, a=-0.1), 5.0)
        low, high = split_projection(sp.modes, 3)
        assert [m.index for m in low] == [0]
        assert len(low) + len(high) == len(sp)
        assert not set(id(m) for m in low) & set(id(m) for m in high)


class TestDispersiveBound:
    def test_switch_continuous(self):
        model = ConeModel.with_nu0(3, T11, 0.25)
        q = query(2.0, 2.0, 2.0)  # z = 1
        assert dispersive_bound(model, q) == pytest.approx(2.0 ** -1.5)

    def test_alpha_zero(self):
        for r in (0.01, 1.0, 30.0):
            assert dispersive_bound(TORUS, query(0.5, r, r)) == pytest.approx(0.5 ** -1.5)

    def test_example(self):
        model = ConeModel.with_nu0(3, T11, 0.25)
        q = query(1.0, 0.02, 1.0)  # z = 0.01
        assert dispersive_bound(model, q) == pytest.approx(3.1623, abs=1e-4)


def test_bound_report():
    rep = BoundReport.make(2.0, 4.0)
    assert rep.ratio == 0.5
    with pytest.raises(DomainError):
        BoundReport.make(1.0, 0.0)
