import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poissonwf import (
    ExcludedDirectionError,
    InvalidParameterError,
    OutOfTheoryRangeError,
    RngStream,
    curvature_constants,
    empirical_concentration,
    empirical_gradient_lipschitz,
    empirical_smoothness,
    generate_measurements,
    smoothness_constant,
)
from poissonwf.experiments import _noiseless
from poissonwf.solvers import random_unit_vector
from poissonwf.theory import RHO1, RHO2, T2, in_region, probe_neighborhood, region_upper_bound


def test_smoothness_constant_values():
    assert smoothness_constant(1, 0) == 1.5
    assert smoothness_constant(0.25, 0) == 2.0
    assert smoothness_constant(0.8, 0.01) == pytest.approx(1.5746, abs=5e-5)
    with pytest.raises(InvalidParameterError):
        smoothness_constant(0, 0)


def test_boundary_constants():
    assert round(RHO1, 5) == 0.11119
    assert round(T2, 5) == 1.32968
    assert round(RHO2, 5) == 0.16333


def test_reference_constants():
    # reference values evaluated independently in high precision
    c = curvature_constants(0.8, 1.2, 1 / 15)
    assert c.phi1 == pytest.approx(0.0639973, abs=1e-7)
    assert c.phi2 == pytest.approx(0.0040696, abs=1e-7)
    assert c.psi == pytest.approx(0.1226459, abs=1e-7)
    assert c.varphi == pytest.approx(0.0132895, abs=1e-7)
    assert c.lcur_hat == pytest.approx(0.013694, abs=1e-6)
    assert c.in_region


def test_reference_constants_mpmath():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    a1, a2, r, d = mpmath.mpf("0.8"), mpmath.mpf("1.2"), mpmath.mpf(1) / 15, mpmath.mpf("0.001")
    U, L1, L2 = (1 + r) ** 2 + a2, (1 - r) ** 2 + a1, a1
    p1 = (1 - 6 * r) / (4 * U) - r**2 / (16 * L1) - d / 4
    p2 = (9 + 16 * r**2) / (32 * U) - 3 / (32 * L2) - d / 4
    psi = mpmath.mpf(63) / (128 * U) - mpmath.mpf(9) / (128 * L2)
    vp = 81 * U * r**2 / (U**2 * (7 + 16 * U * psi))
    lhat = min((p1 + p2 - vp) / 4, (2 - 3 * r + r**2) / ((1 + r) ** 2 + a2) * (1 - d))
    c = curvature_constants(0.8, 1.2, 1 / 15, 0.001)
    for got, ref in ((c.U, U), (c.L1, L1), (c.L2, L2), (c.phi1, p1), (c.phi2, p2), (c.psi, psi), (c.varphi, vp),
                     (c.lcur_hat, lhat)):
        assert abs(got - float(ref)) <= 1e-12 * abs(float(ref))
    assert c.l_cur == pytest.approx(float(lhat - d), rel=1e-12)


def test_curvature_reconciles_with_slack():
    deltas = np.linspace(1e-6, 2e-3, 2000)
    gaps = [abs(curvature_constants(0.8, 1.2, 1 / 15, d).l_cur - 0.0126) for d in deltas]
    assert min(gaps) <= 5e-4


@given(a1=st.floats(0.01, 50), a2f=st.floats(1.0, 10.0), rho=st.floats(1e-4, RHO2))
@settings(max_examples=300, deadline=None)
def test_fields_recompute(a1, a2f, rho):
    a2 = a1 * a2f
    c = curvature_constants(a1, a2, rho)
    assert c.U == pytest.approx((1 + rho) ** 2 + a2, rel=1e-12)
    assert c.L1 == pytest.approx((1 - rho) ** 2 + a1, rel=1e-12)
    assert c.L2 == a1
    if c.in_region:
        assert c.phi1 > 0 and c.phi2 > 0 and c.psi > 0 and c.phi1 + c.phi2 - c.varphi > 0


def test_region_edges():
    rho = 0.05
    edge = 3 * 1.0 - (1 + rho) ** 2
    assert region_upper_bound(1.0, rho) == pytest.approx(edge)
    assert curvature_constants(1.0, edge - 0.01, rho).in_region
    assert not curvature_constants(1.0, edge + 0.01, rho).in_region
    assert in_region(1.0, 1.0, 1e-9)
    # second branch slope interpolates from 3 at rho1 to t2 at 1/6
    assert region_upper_bound(1.0, RHO1 + 1e-12) == pytest.approx(region_upper_bound(1.0, RHO1), abs=1e-9)


def test_out_of_range_rho():
    with pytest.raises(OutOfTheoryRangeError):
        curvature_constants(0.8, 1.2, 0.17)
    with pytest.raises(InvalidParameterError):
        curvature_constants(1.2, 0.8, 0.05)


def test_curvature_weakens_with_radius():
    vals = [curvature_constants(1.0, 1.0, r).lcur_hat for r in np.linspace(0.01, 1 / 15, 50)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_step_bound():
    c = curvature_constants(0.8, 1.2, 1 / 15, 0.01)
    assert c.max_step == pytest.approx(2 * c.l_cur / c.u_smo**2)
    assert 0 < c.contraction(0.5 * c.max_step) < 1


def test_probes_respect_bounds():
    x, A, obs = _noiseless(64, 20 * 64, 1.0, 1.0, RngStream(1))
    rep = empirical_smoothness(x, A, obs, 1 / 15, 1000, RngStream(1, 0, (9,)))
    assert rep.max_smoothness_ratio <= smoothness_constant(1, 0.05)
    assert np.all(rep.curvature_ratios <= rep.smoothness_ratios)
    assert np.all(np.isfinite(rep.smoothness_ratios)) and rep.probes == 1000
    assert rep.min_curvature_ratio > 0
    assert 0 < rep.min_normalized_intensity < 1


def test_probe_report_is_seeded():
    x, A, obs = _noiseless(16, 320, 0.8, 1.2, RngStream(2))
    a = probe_neighborhood(x, A, obs, 0.05, 50, RngStream(3))
    b = probe_neighborhood(x, A, obs, 0.05, 50, RngStream(3))
    assert np.array_equal(a.smoothness_ratios, b.smoothness_ratios)


def test_concentration_large_m():
    n = 32
    gen = np.random.default_rng(4)
    x = random_unit_vector(n, gen)
    h = random_unit_vector(n, gen)
    A = generate_measurements(x, 200 * n, 2.0, RngStream(4))
    checks = empirical_concentration(x, h, A, 0.05)
    assert [c.name for c in checks] == ["isometry_x", "isometry_h", "con1", "con2", "con2p", "con3", "con4"]
    assert all(c.passed for c in checks)


def test_concentration_orthogonal_and_excluded():
    n = 8
    x = np.zeros(n, complex)
    x[0] = 1
    h = np.zeros(n, complex)
    h[1] = 1j
    A = generate_measurements(x, 200 * n, 2.0, RngStream(5))
    con1 = empirical_concentration(x, h, A, 0.05)[2]
    assert con1.lower == -0.05 and con1.upper == 0.05
    for bad in (x, -x, 1j * x):
        with pytest.raises(ExcludedDirectionError):
            empirical_concentration(x, bad, A, 0.05)


def test_lipschitz_ratio_is_scale_free():
    x, A, obs = _noiseless(32, 640, 1.0, 1.0, RngStream(6))
    r1 = empirical_gradient_lipschitz(x, A, obs, 0.05, 200, RngStream(7))
    r2 = empirical_gradient_lipschitz(x, A, obs, 0.1, 200, RngStream(8))
    assert 0 < r1 and math.isfinite(r1)
    assert max(r1, r2) / min(r1, r2) <= 2
