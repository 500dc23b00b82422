"""Two-ion potential, equilibrium separation and dynamical normal modes.

Everything here is unit-agnostic: pass values in any consistent system
(the rest of the package uses the internal hbar = m = omega0 = 1 units).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

SQRT_HALF = math.sqrt(0.5)


@dataclass(frozen=True)
class PotentialParams:
    alpha: float
    beta: float
    lambda_bias: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 and not self.beta > 0:
            raise ValueError("alpha < 0 requires beta > 0 for a potential bounded below")


@dataclass(frozen=True)
class NormalModeFrame:
    d: float
    omega_minus: float
    omega_plus: float

    @property
    def eq_positions(self) -> tuple[float, float]:
        return (0.5 * self.d, -0.5 * self.d)


# fixed for equal masses; rows are the (-) and (+) eigenvectors
EIGENVECTORS = np.array([[1.0, 1.0], [1.0, -1.0]]) * SQRT_HALF


def potential_energy(params: PotentialParams, q1, q2, coulomb_const: float):
    """Lab-frame potential alpha(q1^2+q2^2) + beta(q1^4+q2^4) + C/(q1-q2) + lambda(q1+q2)."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    if np.any(q1 <= q2):
        raise ValueError("ion ordering q1 > q2 violated")
    v = (params.alpha * (q1 * q1 + q2 * q2) + params.beta * (q1**4 + q2**4)
         + coulomb_const / (q1 - q2) + params.lambda_bias * (q1 + q2))
    return v[()] if v.ndim == 0 else v


def potential_gradient(params: PotentialParams, q1: float, q2: float, coulomb_const: float) -> np.ndarray:
    fc = coulomb_const / (q1 - q2) ** 2
    a, b, lam = params.alpha, params.beta, params.lambda_bias
    return np.array([2 * a * q1 + 4 * b * q1**3 - fc + lam,
                     2 * a * q2 + 4 * b * q2**3 + fc + lam])


def potential_hessian(params: PotentialParams, q1: float, q2: float, coulomb_const: float) -> np.ndarray:
    k = 2.0 * coulomb_const / (q1 - q2) ** 3
    a, b = params.alpha, params.beta
    return np.array([[2 * a + 12 * b * q1 * q1 + k, -k],
                     [-k, 2 * a + 12 * b * q2 * q2 + k]])


def quintic_residual(d, alpha, beta, coulomb_const):
    return beta * d**5 + 2.0 * alpha * d**3 - 2.0 * coulomb_const


def equilibrium_distance(alpha: float, beta: float, coulomb_const: float) -> float:
    """Unique positive root of beta d^5 + 2 alpha d^3 - 2 C = 0.

    Bracketed by doubling from the harmonic/quartic single-term estimates,
    solved with Brent's method and polished with Newton steps.
    """
    if coulomb_const <= 0:
        raise ValueError("coulomb_const must be positive")
    if beta < 0 or (alpha <= 0 and beta <= 0):
        raise ValueError("no positive equilibrium for alpha=%g, beta=%g" % (alpha, beta))
    guesses = []
    if alpha > 0:
        guesses.append((coulomb_const / alpha) ** (1.0 / 3.0))
    if beta > 0:
        guesses.append((2.0 * coulomb_const / beta) ** 0.2)
    # with both terms positive each single-term root bounds the true root from above
    hi = min(guesses)
    while quintic_residual(hi, alpha, beta, coulomb_const) <= 0:
        hi *= 2.0
    lo = hi
    while quintic_residual(lo, alpha, beta, coulomb_const) >= 0:
        lo *= 0.5
    d = brentq(quintic_residual, lo, hi, args=(alpha, beta, coulomb_const),
               xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(3):
        f = quintic_residual(d, alpha, beta, coulomb_const)
        fp = 5.0 * beta * d**4 + 6.0 * alpha * d**2
        if fp <= 0:
            break
        step = f / fp
        if abs(step) > 1e-6 * d:
            break
        d -= step
    return d


def mode_eigenvalues(alpha, beta, d, coulomb_const, mass=1.0):
    """(lambda_-, lambda_+) = squared normal-mode frequencies; arrays allowed."""
    lam_minus = (2.0 * alpha + 3.0 * beta * d * d) / mass
    return lam_minus, lam_minus + 4.0 * coulomb_const / (mass * d**3)


def normal_modes(alpha: float, beta: float, d: float, coulomb_const: float,
                 mass: float = 1.0) -> NormalModeFrame:
    lam_minus, lam_plus = mode_eigenvalues(alpha, beta, d, coulomb_const, mass)
    if not lam_minus > 0:
        raise ValueError(f"unstable configuration: lambda_- = {lam_minus:g} <= 0")
    return NormalModeFrame(d, math.sqrt(lam_minus), math.sqrt(lam_plus))


def controls_from_squared(omega2_minus, omega2_plus, coulomb_const, mass=1.0):
    """(alpha, beta, d) from squared mode frequencies.

    Works on arrays and tolerates transiently negative omega^2; only the
    difference omega2_plus - omega2_minus has to stay positive.
    """
    gap = np.asarray(omega2_plus) - np.asarray(omega2_minus)
    if np.any(gap <= 0):
        raise ValueError("omega_plus^2 must exceed omega_minus^2 (separation undefined)")
    alpha = mass * (3.0 * omega2_plus - 5.0 * omega2_minus) / 8.0
    d = np.cbrt(4.0 * coulomb_const / (mass * gap))
    beta = 2.0 * coulomb_const / d**5 - 2.0 * alpha / d**2
    return alpha, beta, d


def frame_from_frequencies(omega_minus: float, omega_plus: float, coulomb_const: float,
                           mass: float = 1.0) -> tuple[float, float, float]:
    if not (omega_plus > omega_minus > 0):
        raise ValueError("need omega_plus > omega_minus > 0")
    a, b, d = controls_from_squared(omega_minus**2, omega_plus**2, coulomb_const, mass)
    return float(a), float(b), float(d)


def equilibrium_positions(params: PotentialParams, coulomb_const: float,
                          guess: tuple[float, float] | None = None,
                          tol: float = 1e-13, max_iter: int = 200) -> np.ndarray:
    """Local two-ion minimum of the (possibly tilted) potential.

    Damped Newton iteration on the gradient, started from the untilted
    symmetric equilibrium unless a guess is given.
    """
    if guess is None:
        d = equilibrium_distance(params.alpha, params.beta, coulomb_const)
        guess = (0.5 * d, -0.5 * d)
    x = np.array(guess, dtype=float)
    scale = max(abs(x[0] - x[1]), 1.0)
    for _ in range(max_iter):
        g = potential_gradient(params, x[0], x[1], coulomb_const)
        h = potential_hessian(params, x[0], x[1], coulomb_const)
        step = np.linalg.solve(h, g)
        if np.any(np.linalg.eigvalsh(h) <= 0):
            step = g / np.max(np.abs(np.diag(h)))
        damp = 1.0
        v0 = potential_energy(params, x[0], x[1], coulomb_const)
        while damp > 1e-8:
            trial = x - damp * step
            if trial[0] > trial[1] and potential_energy(params, trial[0], trial[1], coulomb_const) <= v0 + 1e-12 * abs(v0):
                break
            damp *= 0.5
        x = x - damp * step
        if np.max(np.abs(damp * step)) < tol * scale:
            return x
    raise RuntimeError("equilibrium search did not converge")


def external_minima(alpha: float, beta: float, lambda_bias: float = 0.0) -> np.ndarray:
    """Positions of the local minima of the single-ion potential alpha q^2 + beta q^4 + lambda q."""
    roots = np.roots([4.0 * beta, 0.0, 2.0 * alpha, lambda_bias]) if beta != 0 else np.array([-lambda_bias / (2 * alpha)])
    roots = np.sort(roots.real[np.abs(roots.imag) < 1e-9 * max(1.0, np.max(np.abs(roots)))])
    curv = 2.0 * alpha + 12.0 * beta * roots**2
    return roots[curv > 0]


def external_barrier(alpha: float, beta: float, lambda_bias: float = 0.0) -> float | None:
    """Position of the local maximum between the two wells, or None for a single well."""
    if beta == 0:
        return None
    roots = np.roots([4.0 * beta, 0.0, 2.0 * alpha, lambda_bias])
    roots = roots.real[np.abs(roots.imag) < 1e-9 * max(1.0, np.max(np.abs(roots)))]
    tops = roots[2.0 * alpha + 12.0 * beta * roots**2 < 0]
    return float(tops[0]) if tops.size == 1 else None


def well_energy_difference(alpha: float, beta: float, lambda_bias: float) -> float:
    """Energy of the right external minimum minus the left one; positive for lambda > 0."""
    mins = external_minima(alpha, beta, lambda_bias)
    if mins.size != 2:
        raise ValueError("tilted external potential no longer has two minima")
    v = alpha * mins**2 + beta * mins**4 + lambda_bias * mins
    return float(v[1] - v[0])


def global_minimum(params: PotentialParams, coulomb_const: float) -> np.ndarray:
    """Lowest two-ion minimum, trying the separated and both-in-one-well arrangements."""
    guesses = [None]
    wells = external_minima(params.alpha, params.beta, params.lambda_bias)
    for w in wells:
        curv = 2.0 * params.alpha + 12.0 * params.beta * w * w
        half = 0.5 * (2.0 * coulomb_const / curv) ** (1.0 / 3.0)
        guesses.append((w + half, w - half))
    if wells.size == 2:
        guesses.append((wells[1], wells[0]))
    best, v_best = None, np.inf
    for g in guesses:
        try:
            x = equilibrium_positions(params, coulomb_const, g)
        except (RuntimeError, ValueError, np.linalg.LinAlgError):
            continue
        v = potential_energy(params, x[0], x[1], coulomb_const)
        if v < v_best:
            best, v_best = x, v
    if best is None:
        raise RuntimeError("no two-ion minimum found")
    return best
