"""Split-operator propagation of the two-ion wavefunction.

Coordinates are the centre of mass Q = (q1+q2)/2 (mass 2m) and the
separation r = q1 - q2 (reduced mass m/2).  The r axis is a window
y = r - r_c(t) that rides on the designed separation r_c(t) = d(t); the
gauge factor exp(i p_c y / hbar) with p_c = (m/2) d' makes this exact, at
the price of an extra linear potential (m/2) d'' y in the window frame.
With q1 = Q + r/2, q2 = Q - r/2 the potential reads

    alpha (2 Q^2 + r^2/2) + beta (2 Q^4 + 3 Q^2 r^2 + r^4/8) + C/r + 2 lambda Q.

Internal units (hbar = m = omega0 = 1).
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from .ansatz import Waveform
from .classical import ExcitationReport
from .potential import PotentialParams, equilibrium_positions, normal_modes

MASS_Q = 2.0
MASS_R = 0.5
_MAGIC = b"IONSPSI1"


class GridError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSpec:
    n_q: int = 64
    n_y: int = 512
    q_half_width: float = 8.0
    y_half_width: float = 32.0

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        q = np.linspace(-self.q_half_width, self.q_half_width, self.n_q, endpoint=False)
        y = np.linspace(-self.y_half_width, self.y_half_width, self.n_y, endpoint=False)
        return q, y

    def refined(self, factor: int = 2) -> "GridSpec":
        return replace(self, n_q=self.n_q * factor, n_y=self.n_y * factor)


@dataclass
class GridWavefunction:
    q: np.ndarray  # offsets from q_center
    y: np.ndarray  # offsets from r_center
    psi: np.ndarray
    q_center: float
    r_center: float
    r_center_velocity: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        if self.r_center + self.y[0] <= 0:
            raise GridError("relative-coordinate window reaches r <= 0")

    @property
    def dq(self) -> float:
        return float(self.q[1] - self.q[0])

    @property
    def dy(self) -> float:
        return float(self.y[1] - self.y[0])

    @property
    def r(self) -> np.ndarray:
        return self.r_center + self.y

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.dq * self.dy)

    def edge_ratio(self) -> float:
        a = np.abs(self.psi)
        edge = max(a[0].max(), a[-1].max(), a[:, 0].max(), a[:, -1].max())
        return float(edge / a.max())

    def marginals(self) -> tuple[np.ndarray, np.ndarray]:
        p = np.abs(self.psi) ** 2
        return p.sum(axis=1) * self.dy, p.sum(axis=0) * self.dq

    def mean_q(self) -> float:
        pq, _ = self.marginals()
        return float(np.sum(pq * (self.q_center + self.q)) * self.dq / self.norm)

    def mean_r(self) -> float:
        _, pr = self.marginals()
        return float(np.sum(pr * self.r) * self.dy / self.norm)

    def write_snapshot(self, path) -> None:
        """Binary: magic, two little-endian uint32 sizes, eight float64 axis/frame
        values, then the amplitudes as interleaved little-endian float64 pairs."""
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<II", self.psi.shape[0], self.psi.shape[1]))
            fh.write(struct.pack("<8d", self.q[0], self.dq, self.y[0], self.dy, self.q_center,
                                 self.r_center, self.r_center_velocity, self.t))
            fh.write(np.ascontiguousarray(self.psi, dtype="<c16").tobytes())

    @classmethod
    def read_snapshot(cls, path) -> "GridWavefunction":
        with open(path, "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise ValueError("not a wavefunction snapshot")
            nq, ny = struct.unpack("<II", fh.read(8))
            q0, dq, y0, dy, qc, rc, rv, t = struct.unpack("<8d", fh.read(64))
            psi = np.frombuffer(fh.read(), dtype="<c16").reshape(nq, ny).astype(complex)
        q = q0 + dq * np.arange(nq)
        y = y0 + dy * np.arange(ny)
        return cls(q, y, psi, qc, rc, rv, t)

    def write_marginals_csv(self, path_q, path_r) -> None:
        pq, pr = self.marginals()
        np.savetxt(path_q, np.column_stack([self.q_center + self.q, pq]), delimiter=",",
                   header="Q,density", comments="", fmt="%.17g")
        np.savetxt(path_r, np.column_stack([self.r, pr]), delimiter=",",
                   header="r,density", comments="", fmt="%.17g")


class _Operators:
    """Grid-dependent pieces shared by the real- and imaginary-time steppers."""

    def __init__(self, q, y, coulomb_const):
        self.q, self.y, self.cc = q, y, coulomb_const
        self.dq, self.dy = q[1] - q[0], y[1] - y[0]
        self.kq = 2 * np.pi * np.fft.fftfreq(q.size, self.dq)
        self.ky = 2 * np.pi * np.fft.fftfreq(y.size, self.dy)
        self.kinetic = (self.kq[:, None] ** 2 / (2 * MASS_Q) + self.ky[None, :] ** 2 / (2 * MASS_R))

    def potential(self, alpha, beta, bias, q_center, r_center, frame_accel=0.0):
        """(V - V_ref) on the grid plus V_ref, the value at the frame origin."""
        Q = q_center + self.q
        r = r_center + self.y
        Q2 = Q * Q
        r2 = r * r
        v_ref = (alpha * (2 * q_center**2 + r_center**2 / 2) + beta * (2 * q_center**4 + 3 * q_center**2 * r_center**2
                 + r_center**4 / 8) + self.cc / r_center + 2 * bias * q_center)
        fq = 2 * alpha * Q2 + 2 * beta * Q2 * Q2 + 2 * bias * Q
        gy = alpha * r2 / 2 + beta * r2 * r2 / 8 + self.cc / r + MASS_R * frame_accel * self.y - v_ref
        return fq[:, None] + gy[None, :] + 3 * beta * Q2[:, None] * r2[None, :], v_ref

    def energy_parts(self, psi, alpha, beta, bias, q_center, r_center, r_velocity):
        """(V_ref, <H> - V_ref) for the lab-frame Hamiltonian."""
        w = np.abs(psi) ** 2
        norm = w.sum()
        pk = np.abs(np.fft.fft2(psi)) ** 2
        pk_norm = pk.sum()
        kin = np.sum(pk * self.kinetic) / pk_norm
        py = np.sum(pk * self.ky[None, :]) / pk_norm
        kin += r_velocity * py + 0.5 * MASS_R * r_velocity**2
        v, v_ref = self.potential(alpha, beta, bias, q_center, r_center)
        return v_ref, float(kin + np.sum(w * v) / norm)


def _seed(q, y, omega_minus, omega_plus):
    g = np.exp(-0.5 * MASS_Q * omega_minus * q[:, None] ** 2 - 0.5 * MASS_R * omega_plus * y[None, :] ** 2)
    return g.astype(complex)


def _check_resolution(psi, edge_tol=1e-6, spectral_tol=1e-6):
    a = np.abs(psi)
    edge = max(a[0].max(), a[-1].max(), a[:, 0].max(), a[:, -1].max()) / a.max()
    if edge > edge_tol:
        raise GridError(f"wavefunction reaches the grid edge (ratio {edge:.2e}); enlarge the window")
    spec = np.abs(np.fft.fftshift(np.fft.fft2(psi)))
    nq, ny = spec.shape
    tail = max(spec[: max(1, nq // 32)].max(), spec[-max(1, nq // 32):].max(),
               spec[:, : max(1, ny // 32)].max(), spec[:, -max(1, ny // 32):].max()) / spec.max()
    if tail > spectral_tol:
        raise GridError(f"momentum tail {tail:.2e} at the grid cutoff; refine the grid")


def ground_state_imaginary_time(params: PotentialParams, coulomb_const: float, grid: GridSpec = GridSpec(),
                                center: tuple[float, float] | None = None, dtau: float = 0.01,
                                tol: float = 1e-10, max_steps: int = 50_000,
                                check_every: int = 20) -> tuple[GridWavefunction, float]:
    """Imaginary-time split-operator relaxation from a normal-mode Gaussian.

    ``center`` = (Q, r) of the window; defaults to the (tilted) equilibrium.
    Converged when the energy changes by less than ``tol`` per step.
    Returns the normalized state and its energy (internal units).
    """
    q, y = grid.axes()
    eq = equilibrium_positions(params, coulomb_const)
    if center is None:
        center = (0.5 * (eq[0] + eq[1]), eq[0] - eq[1])
    q_c, r_c = float(center[0]), float(center[1])
    ops = _Operators(q, y, coulomb_const)
    modes = normal_modes(params.alpha, params.beta, eq[0] - eq[1], coulomb_const)
    psi = _seed(q - (0.5 * (eq[0] + eq[1]) - q_c), y - (eq[0] - eq[1] - r_c), modes.omega_minus, modes.omega_plus)
    v, _ = ops.potential(params.alpha, params.beta, params.lambda_bias, q_c, r_c)
    half_v = np.exp(-0.5 * dtau * v)
    kin = np.exp(-dtau * ops.kinetic)
    cell = ops.dq * ops.dy
    e_prev = None
    for step in range(1, max_steps + 1):
        psi = half_v * np.fft.ifft2(kin * np.fft.fft2(half_v * psi))
        psi /= math.sqrt(np.sum(np.abs(psi) ** 2) * cell)
        if step % check_every == 0:
            v_ref, e = ops.energy_parts(psi, params.alpha, params.beta, params.lambda_bias, q_c, r_c, 0.0)
            if e_prev is not None and abs(e - e_prev) < tol * check_every:
                _check_resolution(psi)
                return GridWavefunction(q, y, psi, q_c, r_c), v_ref + e
            e_prev = e
    raise ConvergenceError("imaginary-time evolution did not converge")


def energy_expectation(state: GridWavefunction, params: PotentialParams, coulomb_const: float) -> float:
    ops = _Operators(state.q, state.y, coulomb_const)
    v_ref, e = ops.energy_parts(state.psi, params.alpha, params.beta, params.lambda_bias,
                                state.q_center, state.r_center, state.r_center_velocity)
    return v_ref + e


def default_time_steps(waveform: Waveform, max_dt: float = 0.01) -> int:
    """Smallest even step count with dt <= max_dt and dt * Omega_max < 0.05."""
    omega_max = math.sqrt(max(np.max(waveform.omega2_plus), np.max(waveform.omega2_minus), 1.0))
    dt = min(max_dt, 0.05 / omega_max)
    n = int(math.ceil(waveform.t_f / dt))
    return n + (n % 2)


def propagate_split_operator(waveform: Waveform, initial: GridWavefunction, bias: float = 0.0,
                             n_steps: int | None = None, check_every: int = 200,
                             edge_tol: float = 1e-6) -> GridWavefunction:
    """Strang splitting with the potential at each interval midpoint."""
    n_steps = default_time_steps(waveform) if n_steps is None else int(n_steps)
    start = waveform.evaluate(np.array([0.0]))
    d0 = float(start["d"][0])
    if abs(initial.r_center - d0) > 1e-9 * d0 or abs(initial.r_center_velocity - float(start["d_dot"][0])) > 1e-9:
        raise ValueError("initial state window must sit on the waveform's d(0)")
    dt = waveform.t_f / n_steps
    t_mid = (np.arange(n_steps) + 0.5) * dt
    f = waveform.evaluate(t_mid)
    ops = _Operators(initial.q, initial.y, waveform.trap.coulomb_internal)
    kin = np.exp(-1j * dt * ops.kinetic)
    psi = initial.psi.copy()
    q_c = initial.q_center
    for n in range(n_steps):
        v, _ = ops.potential(f["alpha"][n], f["beta"][n], bias, q_c, f["d"][n], f["d_ddot"][n])
        half_v = np.exp(-0.5j * dt * v)
        psi = half_v * np.fft.ifft2(kin * np.fft.fft2(half_v * psi))
        if (n + 1) % check_every == 0 or n + 1 == n_steps:
            a = np.abs(psi)
            edge = max(a[0].max(), a[-1].max(), a[:, 0].max(), a[:, -1].max()) / a.max()
            if edge > edge_tol:
                raise GridError(f"boundary leakage {edge:.2e} at t = {(n + 1) * dt:.3f}")
    end = waveform.evaluate(np.array([waveform.t_f]))
    return GridWavefunction(initial.q, initial.y, psi, q_c, float(end["d"][0]), float(end["d_dot"][0]),
                            waveform.t_f)


def excitation_energy_quantum(final: GridWavefunction, params: PotentialParams, coulomb_const: float,
                              ground: GridWavefunction | None = None, grid: GridSpec | None = None,
                              energy_quantum: float = 1.0) -> ExcitationReport:
    """E(t_f) - E_0(t_f) with the ground state relaxed on the same window."""
    if grid is None:
        grid = GridSpec(final.q.size, final.y.size, -float(final.q[0]), -float(final.y[0]))
    if ground is None:
        ground, _ = ground_state_imaginary_time(params, coulomb_const, grid, center=(final.q_center, final.r_center))
    ops = _Operators(final.q, final.y, coulomb_const)
    v_ref, e = ops.energy_parts(final.psi / math.sqrt(final.norm), params.alpha, params.beta, params.lambda_bias,
                                final.q_center, final.r_center, final.r_center_velocity)
    v_ref0, e0 = ops.energy_parts(ground.psi, params.alpha, params.beta, params.lambda_bias,
                                  ground.q_center, ground.r_center, ground.r_center_velocity)
    if (ground.q_center, ground.r_center) != (final.q_center, final.r_center):
        quanta = (v_ref + e) - (v_ref0 + e0)
    else:
        quanta = e - e0
    return ExcitationReport(
        energy_final=(v_ref + e) * energy_quantum,
        energy_reference=(v_ref0 + e0) * energy_quantum,
        excitation_quanta=float(quanta),
        method="quantum",
        diagnostics={"norm": final.norm, "edge_ratio": final.edge_ratio(), "grid": [final.q.size, final.y.size]},
    )


def apply_stretch_raising(state: GridWavefunction, omega: float) -> GridWavefunction:
    """Normalized a_dagger of the stretch oscillator (frequency ``omega``) about <r>."""
    y0 = state.mean_r() - state.r_center
    ky = 2 * np.pi * np.fft.fftfreq(state.y.size, state.dy)
    dpsi = np.fft.ifft(1j * ky[None, :] * np.fft.fft(state.psi, axis=1), axis=1)
    s = math.sqrt(MASS_R * omega / 2.0)
    out = s * (state.y[None, :] - y0) * state.psi - dpsi / (2.0 * s)
    out /= math.sqrt(np.sum(np.abs(out) ** 2) * state.dq * state.dy)
    return replace(state, psi=out)


def run_quantum(waveform: Waveform, bias: float = 0.0, grid: GridSpec = GridSpec(),
                n_steps: int | None = None) -> tuple[GridWavefunction, ExcitationReport]:
    """Ground state of the initial trap -> split-operator run -> excitation report."""
    cc = waveform.trap.coulomb_internal
    f0 = waveform.evaluate(np.array([0.0]))
    p0 = PotentialParams(float(f0["alpha"][0]), float(f0["beta"][0]), bias)
    eq0 = equilibrium_positions(p0, cc)
    initial, _ = ground_state_imaginary_time(p0, cc, grid, center=(0.5 * (eq0[0] + eq0[1]), float(f0["d"][0])))
    final = propagate_split_operator(waveform, initial, bias, n_steps)
    f1 = waveform.evaluate(np.array([waveform.t_f]))
    p1 = PotentialParams(float(f1["alpha"][0]), float(f1["beta"][0]), bias)
    report = excitation_energy_quantum(final, p1, cc, grid=grid)
    report.energy_final = waveform.trap.to_si(report.energy_final, "energy")
    report.energy_reference = waveform.trap.to_si(report.energy_reference, "energy")
    report.diagnostics["n_steps"] = n_steps or default_time_steps(waveform)
    report.diagnostics["bias"] = bias
    return final, report
