import math

import numpy as np
import pytest

from conelab import calibration, specfun


def test_packaged_table_matches_scan_grid():
    tab = calibration.envelope_constants()
    assert tab.grid_hash == calibration.scan_grid_hash()
    assert tab.nu[0] == 0.0 and tab.nu[-1] == pytest.approx(calibration.NU_MAX)
    assert tab.nu.size == tab.c_nu.size == tab.cp_nu.size == 301


def test_c_abs_at_least_analytic_value():
    assert calibration.envelope_constants().c_abs >= math.pi / 3.0


def test_roundtrip(tmp_path):
    tab = calibration.envelope_constants()
    path = tmp_path / "t.tsv"
    calibration.write_table(tab, path)
    back = calibration.read_table(path.read_text())
    assert back.c_abs == tab.c_abs
    assert np.array_equal(back.c_nu, tab.c_nu)
    assert np.array_equal(back.cp_nu, tab.cp_nu)
    assert back.grid_hash == tab.grid_hash


def test_hash_depends_on_grid():
    assert calibration.scan_grid_hash() != calibration.scan_grid_hash(r_max=100.0)


@pytest.mark.parametrize("text", ["", "C_nu\t0.0\t1.0\tabc\n", "C_abs\t*\t1.0\ta\nC_nu\t0.0\t1.0\tb\n"])
def test_malformed_rejected(text):
    with pytest.raises(ValueError):
        calibration.read_table(text)


def test_lookup_between_nodes_uses_margin():
    tab = calibration.envelope_constants()
    on = tab.c_order(np.array([1.0, 1.1]))
    between = float(tab.c_order(1.05))
    assert between == pytest.approx(max(on) * calibration.MARGIN, rel=1e-15)
    assert float(tab.c_order(-0.1)) == math.inf
    assert float(tab.c_order(30.5)) == math.inf


def test_small_calibration_agrees_with_table():
    # A recalibration on a sub-grid never exceeds the packaged constants.
    small = calibration.calibrate(nu_step=0.1, nu_max=2.0, r_step=0.1, r_max=20.0)
    tab = calibration.envelope_constants()
    assert np.all(small.c_nu <= tab.c_nu[: small.c_nu.size] * (1 + 1e-9))
    assert np.all(small.cp_nu <= tab.cp_nu[: small.cp_nu.size] * (1 + 1e-9))


def test_envelope_shapes_positive():
    r = np.linspace(0.01, 50.0, 200)
    for nu in (0.0, 0.7, 5.0):
        assert np.all(specfun._order_shape(nu, r) > 0)
        assert np.all(specfun._derivative_shape(nu, r) > 0)
