"""Polynomial scaling functions and inverse-engineered trap waveforms.

The scaling functions rho_-(s), rho_+(s) with s = t / t_f obey ten boundary
conditions (rho(0)=1, rho(1)=gamma, first four derivatives zero at both
ends).  From them the normal-mode frequencies follow from the Ermakov
equation and the controls alpha, beta and the separation d follow from
the normal-mode relations.  All times here are internal (units of 1/omega0).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .potential import controls_from_squared
from .units import TrapSpec, trap_from_dict

# coefficients of s^5..s^9 for the 9th-order smoothstep from 1 to gamma,
# multiplied by (gamma - 1)
_SMOOTHSTEP9 = np.array([126.0, -420.0, 540.0, -315.0, 70.0])
# contribution of each free parameter to s^5..s^9 (s^10, s^11, s^12 terms)
_FREE_COLUMNS = {
    10: np.array([-1.0, 5.0, -10.0, 10.0, -5.0]),
    11: np.array([-5.0, 24.0, -45.0, 40.0, -15.0]),
    12: np.array([-15.0, 70.0, -126.0, 105.0, -35.0]),
}
N_FREE = {9: 0, 11: 2, 12: 3}


@dataclass(frozen=True)
class RhoPolynomial:
    """rho(s) stored in powers of s and, for s > 1/2, in powers of u = 1 - s.

    In the u form the u^1..u^4 coefficients are exactly zero, so the
    boundary values at s = 1 carry no cancellation error.
    """

    coefficients: np.ndarray  # ascending powers of s
    order: int
    gamma: float
    free_params: tuple[float, ...] = ()
    tail: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.tail is None:
            b = np.polynomial.Polynomial(self.coefficients)(np.polynomial.Polynomial([1.0, -1.0])).coef
            b = np.pad(b, (0, max(0, self.order + 1 - b.size)))
            b[0] = self.gamma
            b[1:5] = 0.0
            object.__setattr__(self, "tail", b)

    def _coeffs(self, k: int):
        cache = self.__dict__.setdefault("_deriv_cache", {})
        if k not in cache:
            c = self.coefficients if k == 0 else npoly.polyder(self.coefficients, k)
            b = self.tail if k == 0 else npoly.polyder(self.tail, k) * (-1) ** k
            cache[k] = (c, b, c[::-1].tolist(), b[::-1].tolist())
        return cache[k]

    def _eval(self, s, k: int):
        c, b, c_desc, b_desc = self._coeffs(k)
        if isinstance(s, (float, int)):
            # scalar fast path for ODE right-hand sides
            x, coef = (float(s), c_desc) if s <= 0.5 else (1.0 - s, b_desc)
            acc = 0.0
            for a in coef:
                acc = acc * x + a
            return acc
        s = np.asarray(s, dtype=float)
        out = np.where(s <= 0.5, npoly.polyval(s, c), npoly.polyval(1.0 - s, b))
        return out if out.ndim else float(out)

    def __call__(self, s, deriv: int = 0):
        return self._eval(s, deriv)

    def derivatives(self, s, n: int = 4, t_f: float = 1.0) -> list:
        """[rho, rho', ..., rho^(n)] with derivatives taken in t = s t_f."""
        return [self._eval(s, k) / t_f**k for k in range(n + 1)]

    def boundary_residuals(self) -> np.ndarray:
        """The ten boundary-condition residuals, evaluated exactly at s = 0, 1."""
        res = [self(0.0) - 1.0, self(1.0) - self.gamma]
        for k in range(1, 5):
            res.extend([self(0.0, k), self(1.0, k)])
        return np.array(res)


def build_rho_minus(gamma_minus: float) -> RhoPolynomial:
    if not gamma_minus > 0:
        raise ValueError("gamma_minus must be positive")
    c = np.zeros(10)
    c[0] = 1.0
    c[5:10] = (gamma_minus - 1.0) * _SMOOTHSTEP9
    return RhoPolynomial(c, 9, float(gamma_minus))


def build_rho_plus(gamma_plus: float, free_params: Sequence[float], order: int = 11) -> RhoPolynomial:
    """Order 11 takes (a10, a11); order 12 takes (c10, c11, c12)."""
    if not gamma_plus > 0:
        raise ValueError("gamma_plus must be positive")
    if order not in (9, 11, 12):
        raise ValueError("order must be 9, 11 or 12")
    free = tuple(float(x) for x in free_params)
    if len(free) != N_FREE[order]:
        raise ValueError(f"order {order} needs {N_FREE[order]} free parameters, got {len(free)}")
    c = np.zeros(order + 1)
    c[0] = 1.0
    c[5:10] = (gamma_plus - 1.0) * _SMOOTHSTEP9
    for power, value in zip(range(10, order + 1), free):
        c[5:10] += value * _FREE_COLUMNS[power]
        c[power] = value
    return RhoPolynomial(c, order, float(gamma_plus), free)


def omega_squared_from_rho(rho: RhoPolynomial, omega0_mode: float, s, t_f: float):
    """Omega^2 = Omega0^2 / rho^4 - rho_tt / rho; may be negative."""
    r = rho(s)
    if (r <= 0) if isinstance(r, float) else np.any(r <= 0):
        raise ValueError("scaling function must stay positive")
    return omega0_mode**2 / r**4 - rho(s, 2) / (t_f**2 * r)


def omega_squared_with_derivatives(rho: RhoPolynomial, omega0_mode: float, s, t_f: float):
    """Omega^2 and its first two time derivatives, analytic in rho up to 4th order."""
    r, r1, r2, r3, r4 = rho.derivatives(s, 4, t_f)
    if np.any(r <= 0):
        raise ValueError("scaling function must stay positive")
    w0sq = omega0_mode**2
    inv = 1.0 / r
    a = r1 * inv
    b = r2 * inv
    q = w0sq * inv**4
    w = q - b
    w1 = -4.0 * q * a - r3 * inv + b * a
    w2 = 20.0 * q * a * a - 4.0 * q * b - r4 * inv + 2.0 * r3 * inv * a + b * b - 2.0 * b * a * a
    return w, w1, w2


def endpoint_frequencies(expansion_factor: float = 10.0) -> dict:
    """Mode frequencies (units of omega0) at t=0 and t_f.

    The centre-of-mass mode returns to omega0; the stretch mode follows from
    Omega_+^2 - Omega_-^2 = 2 (d0/d)^3.
    """
    if not expansion_factor > 0:
        raise ValueError("expansion_factor must be positive")
    return {
        "minus_initial": 1.0,
        "minus_final": 1.0,
        "plus_initial": math.sqrt(3.0),
        "plus_final": math.sqrt(1.0 + 2.0 / expansion_factor**3),
    }


@dataclass
class ProtocolDesign:
    trap: TrapSpec
    t_f: float  # seconds
    expansion_factor: float
    rho_minus: RhoPolynomial
    rho_plus: RhoPolynomial

    @property
    def free_params(self) -> tuple[float, ...]:
        return self.rho_plus.free_params

    @property
    def order(self) -> int:
        return self.rho_plus.order

    @property
    def t_f_internal(self) -> float:
        return self.t_f * self.trap.omega0

    @property
    def omega0_minus(self) -> float:
        return 1.0

    @property
    def omega0_plus(self) -> float:
        return math.sqrt(3.0)

    @property
    def omega_plus_final(self) -> float:
        return endpoint_frequencies(self.expansion_factor)["plus_final"]

    def to_dict(self) -> dict:
        return {
            "trap": self.trap.to_dict(),
            "t_f_s": self.t_f,
            "expansion_factor": self.expansion_factor,
            "order": self.order,
            "free_params": list(self.free_params),
            "gamma_minus": self.rho_minus.gamma,
            "gamma_plus": self.rho_plus.gamma,
            "rho_minus_coefficients": self.rho_minus.coefficients.tolist(),
            "rho_plus_coefficients": self.rho_plus.coefficients.tolist(),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ProtocolDesign":
        return design_protocol(trap_from_dict(data["trap"]), float(data["t_f_s"]),
                               data.get("free_params", ()), int(data.get("order", 11)),
                               float(data.get("expansion_factor", 10.0)))

    @classmethod
    def from_json(cls, path) -> "ProtocolDesign":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def gammas(expansion_factor: float = 10.0) -> tuple[float, float]:
    w = endpoint_frequencies(expansion_factor)
    return (math.sqrt(w["minus_initial"] / w["minus_final"]),
            math.sqrt(w["plus_initial"] / w["plus_final"]))


def design_protocol(trap: TrapSpec, t_f: float, free_params: Sequence[float] = (0.0, 0.0),
                    order: int = 11, expansion_factor: float = 10.0) -> ProtocolDesign:
    """Assemble a design; ``t_f`` in seconds."""
    if not t_f > 0:
        raise ValueError("t_f must be positive")
    g_minus, g_plus = gammas(expansion_factor)
    return ProtocolDesign(trap, float(t_f), float(expansion_factor),
                          build_rho_minus(g_minus), build_rho_plus(g_plus, free_params, order))


def design_fields(design: ProtocolDesign, t) -> dict:
    """Exact waveform fields at internal times ``t`` (array)."""
    t = np.asarray(t, dtype=float)
    tf = design.t_f_internal
    s = t / tf
    C = design.trap.coulomb_internal
    wm, wm1, wm2 = omega_squared_with_derivatives(design.rho_minus, design.omega0_minus, s, tf)
    wp, wp1, wp2 = omega_squared_with_derivatives(design.rho_plus, design.omega0_plus, s, tf)
    alpha, beta, d = controls_from_squared(wm, wp, C)
    gap, gap1, gap2 = wp - wm, wp1 - wm1, wp2 - wm2
    # d = K gap^(-1/3)
    d_dot = -d * gap1 / (3.0 * gap)
    d_ddot = d * (4.0 * gap1**2 / (9.0 * gap**2) - gap2 / (3.0 * gap))
    alpha_dot = (3.0 * wp1 - 5.0 * wm1) / 8.0
    beta_dot = -10.0 * C * d_dot / d**6 - 2.0 * alpha_dot / d**2 + 4.0 * alpha * d_dot / d**3
    return {
        "t": t, "alpha": alpha, "beta": beta, "d": d, "d_dot": d_dot, "d_ddot": d_ddot,
        "omega2_minus": wm, "omega2_plus": wp, "alpha_dot": alpha_dot, "beta_dot": beta_dot,
    }


WAVEFORM_FIELDS = ("t", "alpha", "beta", "d", "d_dot", "d_ddot", "omega2_minus",
                   "omega2_plus", "alpha_dot", "beta_dot")


@dataclass
class Waveform:
    """Sampled control waveform in internal units.

    ``source`` (when present) evaluates the exact fields at arbitrary times,
    which the simulators prefer over interpolating the samples.
    """

    trap: TrapSpec
    t: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    d: np.ndarray
    d_dot: np.ndarray
    d_ddot: np.ndarray
    omega2_minus: np.ndarray
    omega2_plus: np.ndarray
    alpha_dot: np.ndarray
    beta_dot: np.ndarray
    metadata: dict = field(default_factory=dict)
    source: Callable | None = field(default=None, repr=False)

    @property
    def t_f(self) -> float:
        return float(self.t[-1])

    def evaluate(self, t) -> dict:
        t = np.asarray(t, dtype=float)
        if self.source is not None:
            return self.source(t)
        return self._interpolated(t)

    def controls(self, t) -> tuple[np.ndarray, np.ndarray]:
        f = self.evaluate(t)
        return f["alpha"], f["beta"]

    def _interpolated(self, t: np.ndarray) -> dict:
        out = {"t": t}
        for name, deriv in (("alpha", "alpha_dot"), ("beta", "beta_dot"), ("d", "d_dot"),
                            ("d_dot", "d_ddot")):
            out[name] = CubicHermiteSpline(self.t, getattr(self, name), getattr(self, deriv))(t)
        for name in ("d_ddot", "omega2_minus", "omega2_plus", "alpha_dot", "beta_dot"):
            out[name] = CubicSpline(self.t, getattr(self, name))(t)
        return out

    def frozen(self, t_index: int, duration: float | None = None, n_samples: int = 2001) -> "Waveform":
        """Constant waveform holding the sample at ``t_index`` (for conservation checks)."""
        duration = self.t_f if duration is None else duration
        t = np.linspace(0.0, duration, n_samples)
        vals = {k: np.full_like(t, getattr(self, k)[t_index]) for k in WAVEFORM_FIELDS[1:]}
        for k in ("d_dot", "d_ddot", "alpha_dot", "beta_dot"):
            vals[k][:] = 0.0
        return Waveform(self.trap, t, metadata={"frozen_from": float(self.t[t_index])}, **vals)

    def diagnostics(self) -> dict:
        i_beta = int(np.argmax(self.beta))
        return {
            "beta_max": float(self.beta[i_beta]),
            "beta_max_si": float(self.trap.to_si(self.beta[i_beta], "beta")),
            "t_beta_max": float(self.t[i_beta]),
            "t_alpha_zero": alpha_zero_crossing(self.t, self.alpha),
            "beta_min": float(np.min(self.beta)),
            "omega2_minus_min": float(np.min(self.omega2_minus)),
            "omega2_plus_min": float(np.min(self.omega2_plus)),
        }

    def to_csv(self, path) -> None:
        """SI export: t_s,alpha_si,beta_si,d_si,omega_minus,omega_plus (rad/s, NaN where omega^2 < 0)."""
        tr = self.trap
        with np.errstate(invalid="ignore"):
            cols = np.column_stack([
                tr.to_si(self.t, "time"), tr.to_si(self.alpha, "alpha"), tr.to_si(self.beta, "beta"),
                tr.to_si(self.d, "length"),
                tr.to_si(np.where(self.omega2_minus >= 0, np.sqrt(self.omega2_minus), np.nan), "angular_frequency"),
                tr.to_si(np.where(self.omega2_plus >= 0, np.sqrt(self.omega2_plus), np.nan), "angular_frequency"),
            ])
        np.savetxt(path, cols, delimiter=",", header="t_s,alpha_si,beta_si,d_si,omega_minus,omega_plus",
                   comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, trap: TrapSpec) -> "Waveform":
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = trap.from_si(raw[:, 0], "time")
        alpha = trap.from_si(raw[:, 1], "alpha")
        beta = trap.from_si(raw[:, 2], "beta")
        d = trap.from_si(raw[:, 3], "length")
        wm = trap.from_si(raw[:, 4], "angular_frequency") ** 2
        wp = trap.from_si(raw[:, 5], "angular_frequency") ** 2
        d_spline = CubicSpline(t, d)
        return cls(trap, t, alpha, beta, d, d_spline(t, 1), d_spline(t, 2), wm, wp,
                   CubicSpline(t, alpha)(t, 1), CubicSpline(t, beta)(t, 1),
                   metadata={"loaded_from": str(path)})


def alpha_zero_crossing(t: np.ndarray, alpha: np.ndarray) -> float | None:
    idx = np.nonzero(np.sign(alpha[:-1]) * np.sign(alpha[1:]) < 0)[0]
    if idx.size == 0:
        return None
    i = idx[0]
    return float(t[i] - alpha[i] * (t[i + 1] - t[i]) / (alpha[i + 1] - alpha[i]))


def waveform_from_source(trap: TrapSpec, source: Callable, t_f: float, n_samples: int,
                         metadata: dict | None = None) -> Waveform:
    t = np.linspace(0.0, t_f, n_samples)
    t[-1] = t_f
    f = source(t)
    return Waveform(trap, **{k: f[k] for k in WAVEFORM_FIELDS}, metadata=metadata or {}, source=source)


def synthesize_waveform(design: ProtocolDesign, n_samples: int = 2001) -> Waveform:
    if n_samples < 1001:
        raise ValueError("n_samples must be at least 1001")
    s = np.linspace(0.0, 1.0, 4001)
    if np.any(design.rho_minus(s) <= 0) or np.any(design.rho_plus(s) <= 0):
        raise ValueError("scaling function is not positive on [0, 1]")

    def source(t, _design=design):
        return design_fields(_design, t)

    meta = {"kind": "sta", "design": design.to_dict()}
    return waveform_from_source(design.trap, source, design.t_f_internal, n_samples, meta)


def integrate_ermakov(omega2: Callable, omega0_mode: float, t_f: float, s_eval,
                      rtol: float = 1e-12, atol: float = 1e-13) -> np.ndarray:
    """Forward-integrate rho'' + Omega^2 rho = Omega0^2 / rho^3 from rho=1, rho'=0.

    ``omega2`` maps internal time to Omega^2(t); returns rho at s_eval.
    """
    def rhs(t, y):
        return [y[1], -omega2(t) * y[0] + omega0_mode**2 / y[0] ** 3]

    sol = solve_ivp(rhs, (0.0, t_f), [1.0, 0.0], method="DOP853", t_eval=np.asarray(s_eval) * t_f,
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y[0]
