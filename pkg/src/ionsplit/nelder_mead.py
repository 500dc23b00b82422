"""Deterministic Nelder-Mead simplex minimizer (classic coefficients)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool
    diameter: float
    spread: float


def initial_steps(x0: np.ndarray) -> np.ndarray:
    """MATLAB fminsearch rule: vertex i moves x0[i] to 1.05 x0[i], or to 0.00025 if zero."""
    return np.where(x0 != 0.0, 0.05 * x0, 0.00025)


def nelder_mead(func: Callable[[np.ndarray], float], x0: Sequence[float],
                step: float | Sequence[float] | None = None,
                xatol: float = 1e-10, fatol: float = 1e-12, max_iter: int = 2000,
                reflect: float = 1.0, expand: float = 2.0, contract: float = 0.5,
                shrink: float = 0.5) -> SimplexResult:
    """Minimize ``func`` starting from an axis-aligned simplex around ``x0``.

    ``step=None`` builds the initial simplex with :func:`initial_steps`.
    Converged when the simplex diameter (max vertex distance from the best
    vertex) is below ``xatol`` and the spread of function values is below
    ``fatol``.  Non-finite function values are treated as +inf.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    steps = initial_steps(x0) if step is None else np.broadcast_to(np.asarray(step, dtype=float), (n,))
    evals = 0

    def f(x):
        nonlocal evals
        evals += 1
        v = float(func(x))
        return v if np.isfinite(v) else np.inf

    simplex = np.empty((n + 1, n))
    simplex[0] = x0
    for i in range(n):
        simplex[i + 1] = x0
        simplex[i + 1, i] += steps[i]
    values = np.array([f(v) for v in simplex])

    it = 0
    converged = False
    while True:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        diameter = float(np.max(np.abs(simplex[1:] - simplex[0])))
        spread = float(values[-1] - values[0]) if np.isfinite(values[-1]) else np.inf
        if diameter < xatol and spread < fatol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + reflect * (centroid - worst)
        fr = f(xr)
        if fr < values[0]:
            xe = centroid + expand * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = centroid + contract * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + contract * (worst - centroid)
            fc = f(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        simplex[1:] = simplex[0] + shrink * (simplex[1:] - simplex[0])
        values[1:] = [f(v) for v in simplex[1:]]

    return SimplexResult(simplex[0].copy(), float(values[0]), it, evals, converged, diameter, spread)
