import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from triline.errors import NonPositiveDensity, TensionDepleted
from triline.thermo import BulkEos, SurfaceEos, bulk_eval, eos_scan, gibbs_duhem_residual, surface_eval

BULK = BulkEos(rho_ref=1.0, p_ref=2.0, c2=100.0)
SURF = SurfaceEos(gamma0=1.0, rho_star=1.0)


def test_reference_state_pressure():
    assert bulk_eval(BULK, 1.0).p == 2.0


def test_mu_is_psi_plus_p_over_rho():
    for rho in (0.3, 1.0, 4.0):
        s = bulk_eval(BULK, rho)
        assert s.mu == s.psi + s.p / rho
        assert math.isclose(s.mu, float(BULK.mu(rho)), rel_tol=1e-13)


def test_bulk_maxwell_relation_by_fd():
    for rho in (0.2, 1.0, 3.0, 7.5):
        d = 1e-5 * rho
        fd = rho ** 2 * (BULK.psi(rho + d) - BULK.psi(rho - d)) / (2 * d)
        assert abs(fd - BULK.pressure(rho)) <= 1e-8 * abs(BULK.pressure(rho))


def test_bulk_mu_increasing_on_grid():
    rho = np.linspace(0.05, 20, 400)
    assert np.all(np.diff(BULK.mu(rho)) > 0)


def test_clean_interface_limit():
    s = surface_eval(SURF, 0.0)
    assert s.gamma == 1.0 and s.energy_density == 1.0
    assert s.mu_s == -math.inf


def test_linear_tension():
    assert surface_eval(SURF, 0.5).gamma == 0.5


def test_surface_gibbs_duhem_at_03():
    assert gibbs_duhem_residual(SURF, 0.3, 1e-5 * 0.3) <= 1e-8


def test_surface_outputs_consistent():
    e = SurfaceEos(0.7, 0.02, psi_offset=1.5)
    for r in (1e-4, 5e-3, 0.015):
        s = surface_eval(e, r)
        assert math.isclose(s.energy_density, r * s.psi_s, rel_tol=1e-14)
        assert math.isclose(s.mu_s, s.psi_s + s.p_s / r, rel_tol=1e-12)
        assert math.isclose(s.mu_s, float(e.mu(r)), rel_tol=1e-12, abs_tol=1e-13)
        assert s.p_s == -s.gamma < 0


@pytest.mark.parametrize("frac", [1e-3, 1e-6, 1e-9])
def test_zero_mass_energy_limit(frac):
    e = SurfaceEos(2.0, 0.5)
    # rho ln rho -> 0, so the gap shrinks like frac * |ln frac|
    gap = abs(e.energy_density(frac * e.rho_star) - e.gamma0)
    assert gap <= 2.0 * 2 * frac * abs(math.log(frac)) + 1e-15


def test_range_guards():
    with pytest.raises(NonPositiveDensity):
        bulk_eval(BULK, 0.0)
    with pytest.raises(TensionDepleted):
        surface_eval(SURF, 1.0)
    with pytest.raises(NonPositiveDensity):
        surface_eval(SURF, -1e-3)
    with pytest.raises(NonPositiveDensity):
        gibbs_duhem_residual(SURF, 1e-6, 2e-6)
    with pytest.raises(TensionDepleted):
        gibbs_duhem_residual(SURF, 0.9999995, 1e-6)


def test_fd_step_sweep_is_second_order():
    # truncation-dominated regime: shrink the step by 2, residual drops by ~4
    e = SurfaceEos(1.0, 1.0)
    steps = [4e-2, 2e-2, 1e-2]
    res = [gibbs_duhem_residual(e, 0.2, h) for h in steps]
    for a, b in zip(res, res[1:]):
        assert 3.6 < a / b < 4.4


@settings(max_examples=200, deadline=None)
@given(
    gamma0=st.floats(0.01, 10), rho_star=st.floats(1e-4, 10), frac=st.floats(1e-3, 0.99),
    offset=st.floats(-5, 5),
)
def test_surface_gibbs_duhem_property(gamma0, rho_star, frac, offset):
    e = SurfaceEos(gamma0, rho_star, offset)
    rho = frac * rho_star
    assert gibbs_duhem_residual(e, rho, 1e-5 * rho) <= 1e-8 * max(1.0, gamma0)


@settings(max_examples=200, deadline=None)
@given(rho_ref=st.floats(0.1, 10), c2=st.floats(0.1, 100), p_ref=st.floats(-10, 10), frac=st.floats(0.1, 10))
def test_bulk_gibbs_duhem_property(rho_ref, c2, p_ref, frac):
    e = BulkEos(rho_ref, p_ref, c2)
    rho = frac * rho_ref
    assert gibbs_duhem_residual(e, rho, 1e-5 * rho) <= 1e-8 * max(1.0, abs(float(e.pressure(rho))))


def test_surface_mu_strictly_increasing_scan():
    scan = eos_scan(SurfaceEos(0.6, 1e-3, 3.6), n=100)
    assert scan.monotone_mu and scan.worst_residual <= 1e-8


def test_invalid_parameters():
    with pytest.raises(ValueError):
        BulkEos(1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        SurfaceEos(0.0, 1.0)
