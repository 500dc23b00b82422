"""First-order anharmonic (Coulomb Taylor) corrections in the stretch mode.

The j-th order Coulomb term acts on the mass-weighted stretch coordinate
q_+ only, as coefficient(j) * q_+^j.  Its first-order energy shift in an
expanding Hermite-Gauss mode is coefficient * <q_+^j>.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import comb, eval_hermite, gammaln


def delta_v_coefficient(j: int, d: float, coulomb_const: float, mass: float = 1.0) -> float:
    """(-1)^(j+1) C / d^(j+1) * (2/m)^(j/2), the factor multiplying q_+^j."""
    if j < 3:
        raise ValueError("anharmonic terms start at j = 3")
    if not d > 0:
        raise ValueError("d must be positive")
    return (-1) ** (j + 1) * coulomb_const / d ** (j + 1) * (2.0 / mass) ** (j / 2.0)


def mode_variance(rho: float, omega0_mode: float, hbar: float = 1.0) -> float:
    """Variance of |Phi_0|^2 scaled by rho, in the mass-weighted coordinate."""
    return rho * rho * hbar / (2.0 * omega0_mode)


def gaussian_moment(j: int, center: float, sigma2: float) -> float:
    """E[(center + sigma Z)^j] for standard normal Z, closed form."""
    total = 0.0
    for k in range(0, j + 1, 2):
        double_fact = math.prod(range(k - 1, 0, -2)) if k > 0 else 1
        total += comb(j, k, exact=True) * center ** (j - k) * sigma2 ** (k / 2) * double_fact
    return total


def hermite_moment(n: int, j: int, center: float, sigma2: float) -> float:
    """<q^j> in the n-th oscillator eigenstate with ground variance sigma2, centred at ``center``.

    Gauss-Hermite quadrature is exact here: the integrand is a polynomial
    of degree 2n + j times the Gaussian weight.
    """
    if n == 0:
        return gaussian_moment(j, center, sigma2)
    nodes, weights = hermgauss(n + j // 2 + 2)
    # |Phi_n(u)|^2 with u = (q - center)/sqrt(2 sigma2) -> H_n(u)^2 e^{-u^2} / (2^n n! sqrt(pi))
    log_norm = n * math.log(2.0) + gammaln(n + 1) + 0.5 * math.log(math.pi)
    q = center + math.sqrt(2.0 * sigma2) * nodes
    return float(np.sum(weights * eval_hermite(n, nodes) ** 2 * q**j) / math.exp(log_norm))


def delta_energy(n: int, j: int, x_plus: float, rho_plus: float, omega0_plus: float,
                 d: float, coulomb_const: float, mass: float = 1.0, hbar: float = 1.0) -> float:
    """First-order shift <psi_n+|dV^(j)|psi_n+> at the given auxiliary values."""
    sigma2 = mode_variance(rho_plus, omega0_plus, hbar)
    return delta_v_coefficient(j, d, coulomb_const, mass) * hermite_moment(n, j, x_plus, sigma2)
