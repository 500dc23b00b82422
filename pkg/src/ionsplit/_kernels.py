"""Compiled fixed-step integrators.

Time-dependent coefficients are passed sampled on the half-step grid:
index 2n is t_n, 2n+1 is t_n + h/2, 2n+2 is t_{n+1}.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def rk4_driven_oscillator(omega2, force, h, x0, v0, record):
    """x'' + omega2(t) x = force(t); returns (x, v) at every step (length N+1)."""
    n_steps = (omega2.size - 1) // 2
    xs = np.empty(n_steps + 1)
    vs = np.empty(n_steps + 1)
    x = x0
    v = v0
    xs[0] = x
    vs[0] = v
    for n in range(n_steps):
        i = 2 * n
        k1x = v
        k1v = force[i] - omega2[i] * x
        k2x = v + 0.5 * h * k1v
        k2v = force[i + 1] - omega2[i + 1] * (x + 0.5 * h * k1x)
        k3x = v + 0.5 * h * k2v
        k3v = force[i + 1] - omega2[i + 1] * (x + 0.5 * h * k2x)
        k4x = v + h * k3v
        k4v = force[i + 2] - omega2[i + 2] * (x + h * k3x)
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if record:
            xs[n + 1] = x
            vs[n + 1] = v
    xs[n_steps] = x
    vs[n_steps] = v
    return xs, vs


@njit(cache=True, inline="always")
def _forces(a, b, cc, lam, q1, q2):
    r = q1 - q2
    fc = cc / (r * r)
    return -2.0 * a * q1 - 4.0 * b * q1 * q1 * q1 + fc - lam, -2.0 * a * q2 - 4.0 * b * q2 * q2 * q2 - fc - lam


@njit(cache=True)
def rk4_two_ions(alpha, beta, cc, lam, h, state, stride):
    """RK4 for Hamilton's equations of two unit-mass ions.

    state = (q1, q2, p1, p2); returns the states every ``stride`` steps
    (always including the first and last) and a failure flag.
    """
    n_steps = (alpha.size - 1) // 2
    n_rec = n_steps // stride + 1
    if n_steps % stride != 0:
        n_rec += 1
    out = np.empty((n_rec, 4))
    q1, q2, p1, p2 = state[0], state[1], state[2], state[3]
    out[0, 0] = q1
    out[0, 1] = q2
    out[0, 2] = p1
    out[0, 3] = p2
    k = 1
    failed = False
    for n in range(n_steps):
        i = 2 * n
        f1, f2 = _forces(alpha[i], beta[i], cc, lam, q1, q2)
        a1q1, a1q2, a1p1, a1p2 = p1, p2, f1, f2
        f1, f2 = _forces(alpha[i + 1], beta[i + 1], cc, lam, q1 + 0.5 * h * a1q1, q2 + 0.5 * h * a1q2)
        a2q1, a2q2, a2p1, a2p2 = p1 + 0.5 * h * a1p1, p2 + 0.5 * h * a1p2, f1, f2
        f1, f2 = _forces(alpha[i + 1], beta[i + 1], cc, lam, q1 + 0.5 * h * a2q1, q2 + 0.5 * h * a2q2)
        a3q1, a3q2, a3p1, a3p2 = p1 + 0.5 * h * a2p1, p2 + 0.5 * h * a2p2, f1, f2
        f1, f2 = _forces(alpha[i + 2], beta[i + 2], cc, lam, q1 + h * a3q1, q2 + h * a3q2)
        a4q1, a4q2, a4p1, a4p2 = p1 + h * a3p1, p2 + h * a3p2, f1, f2
        q1 += h / 6.0 * (a1q1 + 2.0 * a2q1 + 2.0 * a3q1 + a4q1)
        q2 += h / 6.0 * (a1q2 + 2.0 * a2q2 + 2.0 * a3q2 + a4q2)
        p1 += h / 6.0 * (a1p1 + 2.0 * a2p1 + 2.0 * a3p1 + a4p1)
        p2 += h / 6.0 * (a1p2 + 2.0 * a2p2 + 2.0 * a3p2 + a4p2)
        if not (q1 > q2) or not np.isfinite(q1 + q2 + p1 + p2):
            failed = True
            break
        if (n + 1) % stride == 0 or n + 1 == n_steps:
            out[k, 0] = q1
            out[k, 1] = q2
            out[k, 2] = p1
            out[k, 3] = p2
            k += 1
    return out[:k], failed


@njit(cache=True)
def leapfrog_two_ions(alpha, beta, cc, lam, h, state, stride):
    """Kick-drift-kick (velocity Verlet) with controls at the step ends."""
    n_steps = (alpha.size - 1) // 2
    n_rec = n_steps // stride + 1
    if n_steps % stride != 0:
        n_rec += 1
    out = np.empty((n_rec, 4))
    q1, q2, p1, p2 = state[0], state[1], state[2], state[3]
    out[0, 0] = q1
    out[0, 1] = q2
    out[0, 2] = p1
    out[0, 3] = p2
    k = 1
    failed = False
    for n in range(n_steps):
        i = 2 * n
        f1, f2 = _forces(alpha[i], beta[i], cc, lam, q1, q2)
        p1 += 0.5 * h * f1
        p2 += 0.5 * h * f2
        q1 += h * p1
        q2 += h * p2
        f1, f2 = _forces(alpha[i + 2], beta[i + 2], cc, lam, q1, q2)
        p1 += 0.5 * h * f1
        p2 += 0.5 * h * f2
        if not (q1 > q2) or not np.isfinite(q1 + q2 + p1 + p2):
            failed = True
            break
        if (n + 1) % stride == 0 or n + 1 == n_steps:
            out[k, 0] = q1
            out[k, 1] = q2
            out[k, 2] = p1
            out[k, 3] = p2
            k += 1
    return out[:k], failed
