import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import eval_hermite, factorial

from ionsplit.perturbation import delta_energy, delta_v_coefficient, gaussian_moment, hermite_moment, mode_variance
from ionsplit.shooting import _Objective


def quad_moment(n, j, center, sigma2):
    """Independent oracle: adaptive quadrature of |Phi_n|^2 q^j."""
    s = math.sqrt(2 * sigma2)
    norm = 1.0 / (2**n * factorial(n) * math.sqrt(math.pi) * s)
    f = lambda q: norm * eval_hermite(n, (q - center) / s) ** 2 * math.exp(-((q - center) / s) ** 2) * q**j
    width = 12 * s * math.sqrt(n + 1)
    val, _ = quad(f, center - width, center + width, epsabs=1e-15, epsrel=1e-12, limit=400)
    return val


def test_coefficient_examples():
    assert delta_v_coefficient(3, 2.0, 1.0) == pytest.approx(2**1.5 / 16, rel=1e-15)
    assert delta_v_coefficient(4, 2.0, 1.0) < 0
    assert delta_v_coefficient(5, 1e6, 1.0) < 1e-29
    with pytest.raises(ValueError):
        delta_v_coefficient(2, 1.0, 1.0)


def test_moment_examples():
    assert gaussian_moment(3, 1.0, 1.0) == 4.0
    assert delta_energy(3, 3, 0.0, 1.3, 2.0, 5.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    s = mode_variance(1.2, 1.5)
    shift = delta_energy(0, 4, 0.0, 1.2, 1.5, 3.0, 1.0)
    assert shift == pytest.approx(-(1.0 / 3.0**5) * 4.0 * 3 * s**2, rel=1e-14)


@pytest.mark.parametrize("n", range(4))
@pytest.mark.parametrize("j", range(3, 6))
def test_closed_form_vs_quadrature(n, j):
    for center, sigma2 in ((0.0, 0.7), (0.4, 1.3), (-1.1, 0.25)):
        ref = quad_moment(n, j, center, sigma2)
        got = hermite_moment(n, j, center, sigma2)
        assert got == pytest.approx(ref, rel=1e-10, abs=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 6), st.floats(-3, 3), st.floats(0.05, 4))
def test_gaussian_moment_matches_hermite_quadrature(j, center, sigma2):
    assert gaussian_moment(j, center, sigma2) == pytest.approx(hermite_moment(0, j, center, sigma2), rel=1e-12, abs=1e-12)


def test_perturbative_objective_is_smooth(trap):
    obj = _Objective(trap, 3.2e-6, 12, "perturbative", 10.0, 20000, None)
    x0 = np.array([-700.0, 110.0, 5.0])
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        h = 1e-2
        f = [obj(x0 + m * h * e) for m in (-2, -1, 0, 1, 2)]
        # second differences stay consistent under halving the stencil: no kinks
        d2_wide = (f[4] - 2 * f[2] + f[0]) / (2 * h) ** 2
        d2_narrow = (f[3] - 2 * f[2] + f[1]) / h**2
        assert all(np.isfinite(f))
        assert d2_narrow == pytest.approx(d2_wide, rel=1e-3, abs=1e-9)
