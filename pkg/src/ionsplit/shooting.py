"""Stretch-mode centre equation, normal-mode energies and the shooting search.

The free ansatz parameters of rho_+ are chosen so the driven stretch centre
x_+ (x'' + Omega_+^2 x = -sqrt(m/2) d'') returns to rest at t_f.  As a
convenient scalar objective the final stretch-mode energy is minimized with
a Nelder-Mead simplex.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._kernels import rk4_driven_oscillator
from .ansatz import N_FREE, ProtocolDesign, Waveform, design_fields, design_protocol, synthesize_waveform
from .nelder_mead import nelder_mead
from .perturbation import delta_energy
from .units import TrapSpec

SQRT_HALF = math.sqrt(0.5)
OBJECTIVES = ("plain", "perturbative", "residual")


@dataclass
class XPlusTrajectory:
    t: np.ndarray
    x: np.ndarray
    x_dot: np.ndarray
    error_estimate: float

    @property
    def terminal(self) -> tuple[float, float]:
        return float(self.x[-1]), float(self.x_dot[-1])


def _half_step_fields(waveform_or_design, n_steps: int):
    if isinstance(waveform_or_design, ProtocolDesign):
        t_f = waveform_or_design.t_f_internal
        t = np.linspace(0.0, t_f, 2 * n_steps + 1)
        return t, design_fields(waveform_or_design, t)
    t_f = waveform_or_design.t_f
    t = np.linspace(0.0, t_f, 2 * n_steps + 1)
    return t, waveform_or_design.evaluate(t)


def integrate_x_plus(waveform: Waveform | ProtocolDesign, n_steps: int = 20000,
                     mass: float = 1.0, check: bool = True) -> XPlusTrajectory:
    """Fixed-step RK4 for the stretch centre from x_+(0) = x_+'(0) = 0."""
    if n_steps < 2 or n_steps % 2:
        raise ValueError("n_steps must be even and >= 2")
    t, f = _half_step_fields(waveform, n_steps)
    h = t[-1] / n_steps
    omega2 = np.ascontiguousarray(f["omega2_plus"])
    force = np.ascontiguousarray(-math.sqrt(mass / 2.0) * f["d_ddot"])
    x, v = rk4_driven_oscillator(omega2, force, h, 0.0, 0.0, True)
    err = 0.0
    if check:
        xc, vc = rk4_driven_oscillator(omega2[::2].copy(), force[::2].copy(), 2 * h, 0.0, 0.0, False)
        err = max(abs(xc[-1] - x[-1]), abs(vc[-1] - v[-1])) / 15.0
    return XPlusTrajectory(t[::2], x, v, err)


def driven_energy(x, x_dot, omega2, d_ddot, mass: float = 1.0):
    """1/2 x'^2 + 1/2 Omega^2 (x - sqrt(m) d'' / (sqrt(2) Omega^2))^2."""
    return 0.5 * x_dot**2 + 0.5 * (omega2 * x - math.sqrt(mass / 2.0) * d_ddot) ** 2 / omega2


def nm_energy(n: int, rho: float, rho_dot: float, omega2: float, omega0_mode: float,
              x: float = 0.0, x_dot: float = 0.0, d_ddot: float = 0.0, mode: str = "plus",
              hbar: float = 1.0, mass: float = 1.0) -> float:
    """Mean energy of the n-th expanding mode; the '+' mode adds the driven-centre term."""
    e = (2 * n + 1) * hbar / (4.0 * omega0_mode) * (rho_dot**2 + omega2 * rho**2 + omega0_mode**2 / rho**2)
    if mode == "plus":
        e += driven_energy(x, x_dot, omega2, d_ddot, mass)
    elif mode != "minus":
        raise ValueError("mode must be 'plus' or 'minus'")
    return float(e)


@dataclass
class ShootingResult:
    design: ProtocolDesign
    objective: str
    free_params: tuple[float, ...]
    t: np.ndarray = field(repr=False)
    x_plus: np.ndarray = field(repr=False)
    x_plus_dot: np.ndarray = field(repr=False)
    terminal_residuals: tuple[float, float]
    objective_value: float  # E''_0+(t_f) [+ dE^(3)] in hbar omega0
    excess: float  # objective_value - hbar Omega_+(t_f) / 2
    iterations: int
    evaluations: int
    converged: bool
    integration_error: float

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "order": self.design.order,
            "free_params": list(self.free_params),
            "terminal_residuals": list(self.terminal_residuals),
            "objective_value": self.objective_value,
            "excess": self.excess,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "integration_error": self.integration_error,
            "design": self.design.to_dict(),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


class _Objective:
    def __init__(self, trap, t_f, order, kind, expansion_factor, n_steps, fixed):
        self.trap, self.t_f, self.order, self.kind = trap, t_f, order, kind
        self.expansion_factor, self.n_steps = expansion_factor, n_steps
        self.fixed = dict(fixed or {})
        self.n_total = N_FREE[order]
        self.free_idx = [i for i in range(self.n_total) if i not in self.fixed]
        probe = design_protocol(trap, t_f, [0.0] * self.n_total, order, expansion_factor)
        self.t = np.linspace(0.0, probe.t_f_internal, 2 * n_steps + 1)
        self.s_check = np.linspace(0.0, 1.0, 2001)

    def full_params(self, x) -> list[float]:
        p = [0.0] * self.n_total
        for i, v in self.fixed.items():
            p[i] = float(v)
        for i, v in zip(self.free_idx, x):
            p[i] = float(v)
        return p

    def design(self, x) -> ProtocolDesign:
        return design_protocol(self.trap, self.t_f, self.full_params(x), self.order, self.expansion_factor)

    def terminal(self, design: ProtocolDesign):
        if np.any(design.rho_plus(self.s_check) <= 0):
            return None
        with np.errstate(all="ignore"):
            try:
                f = design_fields(design, self.t)
            except ValueError:
                return None
        if not np.all(np.isfinite(f["d_ddot"])):
            return None
        h = self.t[-1] / self.n_steps
        x, v = rk4_driven_oscillator(f["omega2_plus"], -SQRT_HALF * f["d_ddot"], h, 0.0, 0.0, False)
        return x[-1], v[-1], f["omega2_plus"][-1], f["d_ddot"][-1], f["d"][-1]

    def excess(self, design: ProtocolDesign, term) -> float:
        x, v, w2, dd, d = term
        if self.kind == "residual":
            return x * x + v * v
        e = driven_energy(x, v, w2, dd)
        if self.kind == "perturbative":
            e += delta_energy(0, 3, x, design.rho_plus(1.0), design.omega0_plus, d,
                              self.trap.coulomb_internal)
        return e

    def __call__(self, x) -> float:
        design = self.design(x)
        term = self.terminal(design)
        if term is None:
            return np.inf
        return self.excess(design, term)


def shoot(trap: TrapSpec, t_f: float, order: int = 11, objective: str = "plain",
          expansion_factor: float = 10.0, initial: Sequence[float] | None = None,
          step: float | Sequence[float] | None = None, fixed: dict[int, float] | None = None, xatol: float = 1e-10,
          fatol: float = 1e-12, max_iter: int = 2000, n_steps: int = 20000) -> ShootingResult:
    """Find the free rho_+ parameters that bring the stretch centre to rest at t_f.

    ``t_f`` in seconds.  ``initial`` seeds the simplex (origin by default,
    or a warm start); ``step=None`` sizes the initial simplex like MATLAB's
    fminsearch.  ``fixed`` pins parameters by index.  The simplex works
    on the excess energy above hbar Omega_+(t_f)/2, which is the only part
    of the final stretch energy that depends on the free parameters once the
    rho boundary conditions hold.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    if order not in (11, 12):
        raise ValueError("shooting needs order 11 or 12")
    if objective == "perturbative" and order != 12:
        raise ValueError("the perturbative objective uses the order-12 ansatz")
    obj = _Objective(trap, t_f, order, objective, expansion_factor, n_steps, fixed)
    if initial is None:
        x0 = np.zeros(len(obj.free_idx))
    else:
        initial = list(initial)
        if len(initial) == obj.n_total and len(obj.free_idx) != obj.n_total:
            initial = [initial[i] for i in obj.free_idx]
        x0 = np.asarray(initial, dtype=float)
        if x0.size != len(obj.free_idx):
            raise ValueError("initial guess has the wrong number of parameters")
    res = nelder_mead(obj, x0, step=step, xatol=xatol, fatol=fatol, max_iter=max_iter)

    design = obj.design(res.x)
    traj = integrate_x_plus(design, n_steps)
    f_end = design_fields(design, np.array([design.t_f_internal]))
    w2, dd = float(f_end["omega2_plus"][0]), float(f_end["d_ddot"][0])
    rho_end = design.rho_plus.derivatives(1.0, 1, design.t_f_internal)
    x_end, v_end = traj.terminal
    value = nm_energy(0, float(rho_end[0]), float(rho_end[1]), w2, design.omega0_plus, x_end, v_end, dd)
    if objective == "perturbative":
        value += delta_energy(0, 3, x_end, float(rho_end[0]), design.omega0_plus,
                              float(f_end["d"][0]), trap.coulomb_internal)
    ground = 0.5 * design.omega_plus_final
    return ShootingResult(design, objective, tuple(design.free_params), traj.t, traj.x, traj.x_dot,
                          (x_end, v_end), value, value - ground, res.iterations, res.evaluations,
                          res.converged, traj.error_estimate)


def sweep_shoot(trap: TrapSpec, t_f_values: Sequence[float], order: int = 11, objective: str = "plain",
                expansion_factor: float = 10.0, initial: Sequence[float] | None = None,
                **kwargs) -> list[ShootingResult]:
    """Shoot along a list of final times, warm-starting each from the previous solution."""
    out = []
    guess = initial
    for t_f in t_f_values:
        res = shoot(trap, t_f, order, objective, expansion_factor, initial=guess, **kwargs)
        out.append(res)
        guess = res.free_params
    return out


def optimized_waveform(result: ShootingResult, n_samples: int = 2001) -> Waveform:
    wf = synthesize_waveform(result.design, n_samples)
    wf.metadata["shooting"] = {k: v for k, v in result.to_dict().items() if k != "design"}
    return wf
