"""Hamilton's equations for the two-ion lab-frame Hamiltonian under a waveform."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ._kernels import leapfrog_two_ions, rk4_two_ions
from .ansatz import Waveform
from .potential import PotentialParams, equilibrium_positions, external_barrier, global_minimum, potential_energy, potential_hessian
from .units import TrapSpec


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClassicalState:
    q1: float
    q2: float
    p1: float = 0.0
    p2: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        if not self.q1 > self.q2:
            raise ValueError("ion ordering q1 > q2 violated")

    def as_array(self) -> np.ndarray:
        return np.array([self.q1, self.q2, self.p1, self.p2])


@dataclass
class ExcitationReport:
    energy_final: float  # J
    energy_reference: float  # J
    excitation_quanta: float
    method: str
    per_mode: dict | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


@dataclass
class ClassicalTrajectory:
    trap: TrapSpec
    t: np.ndarray
    states: np.ndarray  # columns q1, q2, p1, p2
    energy: np.ndarray
    report: ExcitationReport

    @property
    def final_state(self) -> ClassicalState:
        q1, q2, p1, p2 = self.states[-1]
        return ClassicalState(q1, q2, p1, p2, float(self.t[-1]))

    def to_csv(self, path) -> None:
        tr = self.trap
        cols = np.column_stack([
            tr.to_si(self.t, "time"), tr.to_si(self.states[:, 0], "length"),
            tr.to_si(self.states[:, 1], "length"), tr.to_si(self.states[:, 2], "momentum"),
            tr.to_si(self.states[:, 3], "momentum"), tr.to_si(self.energy, "energy"),
        ])
        np.savetxt(path, cols, delimiter=",", header="t,q1,q2,p1,p2,E", comments="", fmt="%.17g")


def energy_classical(state: ClassicalState, params: PotentialParams, coulomb_const: float) -> float:
    kinetic = 0.5 * (state.p1**2 + state.p2**2)
    return float(kinetic + potential_energy(params, state.q1, state.q2, coulomb_const))


def integrate_hamilton(alpha: np.ndarray, beta: np.ndarray, h: float, state, coulomb_const: float,
                       bias: float = 0.0, method: str = "rk4", stride: int = 1):
    """Low-level fixed-step propagation; controls sampled on the half-step grid.

    A negative ``h`` with reversed control arrays integrates backwards.
    Returns the recorded states (every ``stride`` steps, plus the last).
    """
    kernel = {"rk4": rk4_two_ions, "leapfrog": leapfrog_two_ions}.get(method)
    if kernel is None:
        raise ValueError("method must be 'rk4' or 'leapfrog'")
    alpha = np.ascontiguousarray(alpha, dtype=float)
    beta = np.ascontiguousarray(beta, dtype=float)
    if alpha.size != beta.size or alpha.size % 2 == 0:
        raise ValueError("controls must be sampled on 2N+1 half-step points")
    if isinstance(state, ClassicalState):
        state = state.as_array()
    states, failed = kernel(alpha, beta, float(coulomb_const), float(bias), float(h),
                            np.asarray(state, dtype=float), int(stride))
    if failed:
        raise IntegrationError("ion ordering lost or non-finite state; reduce the step size")
    return states


def mode_energies(state: np.ndarray, reference: np.ndarray, params: PotentialParams,
                  coulomb_const: float) -> dict:
    """Harmonic energies of the (-) and (+) modes about the reference minimum."""
    hess = potential_hessian(params, reference[0], reference[1], coulomb_const)
    lam, vec = np.linalg.eigh(hess)
    dq = state[:2] - reference
    u = vec.T @ dq
    pu = vec.T @ state[2:]
    e = 0.5 * pu**2 + 0.5 * lam * u**2
    # eigh sorts ascending: index 0 is the centre-of-mass (-) mode
    return {"minus": float(e[0]), "plus": float(e[1])}


def propagate_classical(waveform: Waveform, initial: ClassicalState | None = None, bias: float = 0.0,
                        n_steps: int = 200_000, method: str = "rk4",
                        record_every: int | None = None) -> ClassicalTrajectory:
    """Propagate from rest at the (tilted) initial equilibrium and report the final excitation.

    The reference energy is the final potential's two-ion minimum, so the
    excitation is (E(t_f) - V_min) / (hbar omega0).  Internal units throughout.
    """
    trap = waveform.trap
    cc = trap.coulomb_internal
    t = np.linspace(0.0, waveform.t_f, 2 * n_steps + 1)
    alpha, beta = waveform.controls(t)
    h = waveform.t_f / n_steps
    p_initial = PotentialParams(float(alpha[0]), float(beta[0]), bias)
    if initial is None:
        q = equilibrium_positions(p_initial, cc)
        initial = ClassicalState(q[0], q[1])
    stride = record_every or max(1, n_steps // 2000)
    states = integrate_hamilton(alpha, beta, h, initial, cc, bias, method, stride)
    steps = np.arange(states.shape[0]) * stride
    steps[-1] = n_steps
    t_rec = steps * h
    a_rec, b_rec = alpha[2 * steps], beta[2 * steps]
    energy = (0.5 * (states[:, 2] ** 2 + states[:, 3] ** 2) + a_rec * (states[:, 0] ** 2 + states[:, 1] ** 2)
              + b_rec * (states[:, 0] ** 4 + states[:, 1] ** 4) + cc / (states[:, 0] - states[:, 1])
              + bias * (states[:, 0] + states[:, 1]))

    p_final = PotentialParams(float(alpha[-1]), float(beta[-1]), bias)
    # separated minimum (one ion per well): the protocol's target state
    ref = equilibrium_positions(p_final, cc)
    v_global = float(potential_energy(p_final, *global_minimum(p_final, cc), cc))
    v_ref = float(potential_energy(p_final, ref[0], ref[1], cc))
    final = states[-1]
    barrier = external_barrier(p_final.alpha, p_final.beta, bias)
    e_final = energy_classical(ClassicalState(*final), p_final, cc)
    quanta = e_final - v_ref
    report = ExcitationReport(
        energy_final=trap.to_si(e_final, "energy"),
        energy_reference=trap.to_si(v_ref, "energy"),
        excitation_quanta=float(quanta),
        method="classical",
        per_mode=mode_energies(final, ref, p_final, cc),
        diagnostics={"n_steps": n_steps, "integrator": method, "bias": bias,
                     "initial_positions": [initial.q1, initial.q2], "final_reference": ref.tolist(),
                     "global_minimum_gap": v_ref - v_global,
                     "separated": bool(barrier is None or final[0] > barrier > final[1])},
    )
    return ClassicalTrajectory(trap, t_rec, states, energy, report)
