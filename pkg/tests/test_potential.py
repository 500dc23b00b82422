import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ionsplit.potential import (EIGENVECTORS, PotentialParams, equilibrium_distance, equilibrium_positions,
                                external_minima, frame_from_frequencies, normal_modes, potential_energy,
                                potential_gradient, potential_hessian, quintic_residual,
                                well_energy_difference)

C = 1.0


def _v_by_hand(a, b, lam, q1, q2, cc):
    return a * q1 * q1 + a * q2 * q2 + b * q1**4 + b * q2**4 + cc / (q1 - q2) + lam * (q1 + q2)


def test_pure_coulomb():
    assert potential_energy(PotentialParams(0.0, 0.0), 1.0, -1.0, C) == 0.5


def test_harmonic_equilibrium_value():
    d = 2 ** (1 / 3)
    v = potential_energy(PotentialParams(0.5, 0.0), d / 2, -d / 2, C)
    assert v == pytest.approx(_v_by_hand(0.5, 0.0, 0.0, d / 2, -d / 2, C), rel=1e-15)
    assert v == pytest.approx(0.25 * d * d + 1 / d, rel=1e-15)


def test_tilt_vanishes_at_symmetric_points():
    p0, p1 = PotentialParams(0.3, 0.01), PotentialParams(0.3, 0.01, 0.1)
    assert potential_energy(p1, 1.3, -1.3, C) == potential_energy(p0, 1.3, -1.3, C)


def test_ordering_enforced():
    with pytest.raises(ValueError):
        potential_energy(PotentialParams(0.5, 0.0), -1.0, 1.0, C)
    with pytest.raises(ValueError):
        PotentialParams(-0.5, 0.0)


def test_equilibrium_distance_be(trap):
    d = equilibrium_distance(0.5, 0.0, trap.coulomb_internal)
    assert trap.to_si(d, "length") == pytest.approx(5.80e-6, abs=0.01e-6)


def test_equilibrium_distance_roundtrip_from_beta(trap):
    cc = trap.coulomb_internal
    d_target = 10 * trap.d0_internal
    alpha = -0.25
    beta = 2 * cc / d_target**5 - 2 * alpha / d_target**2
    assert equilibrium_distance(alpha, beta, cc) == pytest.approx(d_target, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(1e-6, 10.0), st.floats(1e-3, 1e7))
def test_quintic_residual_small(alpha, beta, cc):
    d = equilibrium_distance(alpha, beta, cc)
    # relative to the largest term: beta d^5 and 2 alpha d^3 can cancel far above C
    scale = max(cc, abs(beta) * d**5, abs(alpha) * d**3)
    assert abs(quintic_residual(d, alpha, beta, cc)) < 1e-12 * scale


def test_quintic_residual_along_design(wf_52, trap):
    cc = trap.coulomb_internal
    for a, b in zip(wf_52.alpha[::50], wf_52.beta[::50]):
        d = equilibrium_distance(a, max(b, 0.0), cc)
        assert abs(quintic_residual(d, a, max(b, 0.0), cc)) < 1e-12 * cc


def test_no_positive_root():
    with pytest.raises(ValueError):
        equilibrium_distance(-1.0, 0.0, 1.0)


def test_initial_and_final_modes(trap):
    cc = trap.coulomb_internal
    nm = normal_modes(0.5, 0.0, trap.d0_internal, cc)
    assert nm.omega_minus == pytest.approx(1.0, rel=1e-12)
    assert nm.omega_plus == pytest.approx(math.sqrt(3.0), rel=1e-12)
    a, b, d = frame_from_frequencies(1.0, math.sqrt(1.002), cc)
    assert d == pytest.approx(10 * trap.d0_internal, rel=1e-12)
    assert a == pytest.approx((3 * 1.002 - 5) / 8, rel=1e-14)
    assert normal_modes(a, b, d, cc).omega_plus == pytest.approx(math.sqrt(1.002), rel=1e-12)


def test_frame_at_start(trap):
    a, b, d = frame_from_frequencies(1.0, math.sqrt(3.0), trap.coulomb_internal)
    assert a == pytest.approx(0.5, rel=1e-14)
    assert abs(b) < 1e-12 * 2 * trap.coulomb_internal / d**5 * 1e3
    assert d == pytest.approx(trap.d0_internal, rel=1e-13)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(1.0001, 3.0))
def test_frequency_roundtrip(om, ratio):
    op = om * ratio
    a, b, d = frame_from_frequencies(om, op, C)
    nm = normal_modes(a, b, d, C)
    assert nm.omega_minus == pytest.approx(om, rel=1e-10)
    assert nm.omega_plus == pytest.approx(op, rel=1e-10)
    assert nm.omega_plus**2 - nm.omega_minus**2 == pytest.approx(4 * C / d**3, rel=1e-12)


def test_frequency_errors():
    with pytest.raises(ValueError):
        frame_from_frequencies(2.0, 1.0, C)
    with pytest.raises(ValueError):
        normal_modes(-1.0, 0.0, 1.0, C)


def test_gradient_vanishes_and_hessian_structure(trap):
    cc = trap.coulomb_internal
    p = PotentialParams(-0.1, 1e-6)
    d = equilibrium_distance(p.alpha, p.beta, cc)
    h = 1e-3
    for i in range(2):
        x = np.array([d / 2, -d / 2])
        e = np.zeros(2)
        e[i] = h
        fd = (potential_energy(p, *(x + e), cc) - potential_energy(p, *(x - e), cc)) / (2 * h)
        assert abs(fd) < 1e-8 * max(1.0, cc / d**2) * 10
    hess = potential_hessian(p, d / 2, -d / 2, cc)
    assert hess[0, 0] == pytest.approx(hess[1, 1], rel=1e-14)
    vals, vecs = np.linalg.eigh(hess)
    assert np.allclose(np.abs(vecs.T @ EIGENVECTORS), np.eye(2), atol=1e-12)
    nm = normal_modes(p.alpha, p.beta, d, cc)
    assert vals == pytest.approx([nm.omega_minus**2, nm.omega_plus**2], rel=1e-10)
    assert np.allclose(potential_gradient(p, d / 2, -d / 2, cc), 0.0, atol=1e-9 * cc / d**2)


def test_tilted_equilibrium(trap):
    cc = trap.coulomb_internal
    p = PotentialParams(0.5, 0.0, 0.3)
    q = equilibrium_positions(p, cc)
    # harmonic trap: pure centre-of-mass shift of -lambda / (2 alpha)
    assert 0.5 * (q[0] + q[1]) == pytest.approx(-0.3, rel=1e-10)
    assert q[0] - q[1] == pytest.approx(trap.d0_internal, rel=1e-10)


def test_double_well_minima():
    m = external_minima(-0.25, 1e-3)
    assert m == pytest.approx([-math.sqrt(0.25 / 2e-3), math.sqrt(0.25 / 2e-3)])
    assert well_energy_difference(-0.25, 1e-3, 0.0) == pytest.approx(0.0, abs=1e-12)
    de = well_energy_difference(-0.25, 1e-3, 0.01)
    assert de == pytest.approx(0.01 * 2 * m[1], rel=1e-3)
    assert well_energy_difference(-0.25, 1e-3, -0.01) == pytest.approx(-de, rel=1e-12)
    with pytest.raises(ValueError):
        well_energy_difference(-0.25, 1e-3, 10.0)
