"""End-to-end studies: designs, excitation curves, critical times, tilt sweeps
and the comparison against a non-optimized reference ramp.

Configs carry SI values; everything is converted to internal units on entry.
Every emitted table gets a JSON sidecar with the config and its content hash.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from . import __version__
from .ansatz import ProtocolDesign, Waveform, synthesize_waveform, waveform_from_source
from .classical import propagate_classical
from .potential import external_minima, well_energy_difference
from .quantum import GridSpec, run_quantum
from .shooting import ShootingResult, optimized_waveform, shoot
from .units import TrapSpec, trap_from_dict

log = logging.getLogger(__name__)

KINDS = ("design", "simulate", "excitation-curve", "tcrit-table", "bias-sweep", "reference-compare")
EXCITATION_THRESHOLD = 0.1


class ConfigError(ValueError):
    """Raised for malformed or inconsistent experiment configs."""


class NonConvergenceError(RuntimeError):
    """Shooting or a bracket search failed to converge."""


@dataclass
class ExperimentConfig:
    kind: str
    trap: dict = field(default_factory=lambda: {"species": "Be9+", "omega0_hz": 2.0e6})
    protocol: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    bias: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    frequencies_hz: list = field(default_factory=lambda: [3.0e6, 2.0e6, 1.2e6, 0.8e6])
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        try:
            self.trap_spec()
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad trap block: {exc}") from exc
        p = self.protocol
        if p.get("order", 11) not in (9, 11, 12):
            raise ConfigError("protocol.order must be 9, 11 or 12")
        if p.get("objective", "plain") not in ("plain", "perturbative", "residual"):
            raise ConfigError("protocol.objective must be plain, perturbative or residual")
        if p.get("objective") == "perturbative" and p.get("order", 11) != 12:
            raise ConfigError("the perturbative objective needs order 12")
        if p.get("expansion_factor", 10.0) <= 1.0:
            raise ConfigError("protocol.expansion_factor must exceed 1")
        for key in ("t_f", ):
            if key in p and not p[key] > 0:
                raise ConfigError(f"protocol.{key} must be positive")
        if self.kind in ("design", "simulate", "bias-sweep") and "t_f" not in p:
            raise ConfigError(f"{self.kind} needs protocol.t_f")
        if self.kind in ("excitation-curve", "reference-compare") and not self.t_f_values():
            raise ConfigError(f"{self.kind} needs protocol.t_f_values or protocol.t_f_range")
        if self.simulation.get("engine", "classical") not in ("classical", "quantum", "both"):
            raise ConfigError("simulation.engine must be classical, quantum or both")
        if self.kind == "bias-sweep" and not (self.bias.get("lambda_N") or self.bias.get("delta_e_quanta")):
            raise ConfigError("bias-sweep needs bias.lambda_N or bias.delta_e_quanta")
        if any(f <= 0 for f in self.frequencies_hz):
            raise ConfigError("frequencies must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "kind" not in data:
            raise ConfigError("config needs a 'kind'")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def trap_spec(self, omega0_hz: float | None = None) -> TrapSpec:
        block = dict(self.trap)
        if omega0_hz is not None:
            block["omega0_hz"] = omega0_hz
        return trap_from_dict(block)

    def t_f_values(self) -> list[float]:
        p = self.protocol
        if "t_f_values" in p:
            return [float(v) for v in p["t_f_values"]]
        if "t_f_range" in p:
            start, stop, num = p["t_f_range"]
            return [float(v) for v in np.linspace(start, stop, int(num))]
        return []

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def output_dir(self) -> Path:
        out = Path(self.output.get("dir", "results"))
        out.mkdir(parents=True, exist_ok=True)
        return out


def provenance(config: ExperimentConfig, **extra) -> dict:
    return {"config": config.to_dict(), "config_hash": config.content_hash(),
            "package_version": __version__, **extra}


def write_table(path: Path, rows: list[dict], meta: dict) -> None:
    """CSV plus a ``.json`` sidecar holding provenance metadata."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else [])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                             for k, v in row.items()})
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(meta, fh, indent=2)


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- design

def _shoot_from_config(config: ExperimentConfig, trap: TrapSpec, t_f: float,
                       initial=None) -> ShootingResult:
    p = config.protocol
    order = p.get("order", 11)
    objective = p.get("objective", "plain")
    if order == 9:
        raise ConfigError("order 9 has no free parameters to shoot; use 11 or 12")
    return shoot(trap, t_f, order=order, objective=objective, expansion_factor=p.get("expansion_factor", 10.0),
                 initial=initial if initial is not None else p.get("initial"),
                 max_iter=p.get("max_iter", 2000))


def run_design(config: ExperimentConfig, write: bool = True) -> tuple[ShootingResult, Waveform, dict]:
    """Shoot, synthesize the waveform and report the control diagnostics."""
    trap = config.trap_spec()
    t_f = float(config.protocol["t_f"])
    result = _shoot_from_config(config, trap, t_f)
    wf = optimized_waveform(result, config.simulation.get("n_samples", 2001))
    diag = wf.diagnostics()
    diag["t_alpha_zero_s"] = None if diag["t_alpha_zero"] is None else trap.to_si(diag["t_alpha_zero"], "time")
    diag["t_beta_max_s"] = trap.to_si(diag["t_beta_max"], "time")
    diag["converged"] = result.converged
    if write:
        out = config.output_dir()
        wf.to_csv(out / "waveform.csv")
        result.to_json(out / "shooting.json")
        with open(out / "design.json", "w") as fh:
            json.dump({**result.design.to_dict(), "provenance": provenance(config),
                       "diagnostics": diag}, fh, indent=2)
    return result, wf, diag


def simulate_waveform(wf: Waveform, engine: str = "classical", bias: float = 0.0,
                      n_steps: int | None = None, grid: GridSpec | None = None) -> dict:
    """Excitation quanta from one or both engines, keyed by engine name."""
    out = {}
    if engine in ("classical", "both"):
        out["classical"] = propagate_classical(wf, bias=bias, n_steps=n_steps or 200_000).report
    if engine in ("quantum", "both"):
        _, out["quantum"] = run_quantum(wf, bias, grid or GridSpec())
    return out


def _grid_from_config(config: ExperimentConfig) -> GridSpec:
    g = config.simulation.get("grid", {})
    return GridSpec(**g)


def run_simulate(config: ExperimentConfig) -> dict:
    result, wf, diag = run_design(config)
    sim = config.simulation
    reports = simulate_waveform(wf, sim.get("engine", "classical"), _bias_internal(config, wf.trap),
                                sim.get("n_steps"), _grid_from_config(config))
    summary = {name: rep.to_dict() for name, rep in reports.items()}
    with open(config.output_dir() / "report.json", "w") as fh:
        json.dump({"reports": summary, "diagnostics": diag, "provenance": provenance(config)}, fh, indent=2)
    return summary


def _bias_internal(config: ExperimentConfig, trap: TrapSpec) -> float:
    lam = config.bias.get("lambda_N", 0.0)
    if isinstance(lam, (list, tuple)):
        lam = lam[0] if lam else 0.0
    return float(trap.from_si(lam, "force"))


# ---------------------------------------------------------------- excitation curve

def run_excitation_curve(config: ExperimentConfig) -> list[dict]:
    """Order-11 plain and order-12 perturbative designs along t_f, classical excitation of each.

    Both sequences warm-start from the previous t_f unless
    ``protocol.warm_start`` is false.
    """
    trap = config.trap_spec()
    p = config.protocol
    warm = p.get("warm_start", True)
    n_steps = config.simulation.get("n_steps", 200_000)
    ef = p.get("expansion_factor", 10.0)
    rows = []
    g11 = g12 = None
    for t_f in config.t_f_values():
        r11 = shoot(trap, t_f, 11, "plain", ef, initial=g11)
        r12 = shoot(trap, t_f, 12, "perturbative", ef, initial=g12)
        if warm:
            g11, g12 = r11.free_params, r12.free_params
        e11 = propagate_classical(optimized_waveform(r11), n_steps=n_steps).report.excitation_quanta
        e12 = propagate_classical(optimized_waveform(r12), n_steps=n_steps).report.excitation_quanta
        log.info("t_f=%.3g s: order11 %.4g, order12 %.4g", t_f, e11, e12)
        rows.append({"t_f": t_f, "E_ex_order11": e11, "E_ex_order12": e12,
                     "a10": r11.free_params[0], "a11": r11.free_params[1],
                     "c10": r12.free_params[0], "c11": r12.free_params[1], "c12": r12.free_params[2],
                     "t_f_internal": trap.from_si(t_f, "time")})
    write_table(config.output_dir() / "excitation_curve.csv", rows, provenance(config))
    return rows


# ---------------------------------------------------------------- critical times

def sta_excitation(trap: TrapSpec, t_f: float, order: int = 11, objective: str = "plain",
                   expansion_factor: float = 10.0, n_steps: int = 200_000) -> tuple[float, ShootingResult]:
    """Classical excitation of a freshly shot design (simplex seeded at the origin)."""
    res = shoot(trap, t_f, order, objective, expansion_factor)
    return propagate_classical(optimized_waveform(res), n_steps=n_steps).report.excitation_quanta, res


def find_tcrit(trap: TrapSpec, bracket_us_mhz: tuple[float, float] = (6.0, 14.0), tol_s: float = 0.1e-6,
               threshold: float = EXCITATION_THRESHOLD, n_steps: int = 200_000) -> dict:
    """Bisect on t_f for the excitation crossing ``threshold``.

    The bracket is given as t_f * (omega0 / 2 pi) in us * MHz, so it scales
    with the trap period; (6, 14) means [6, 14] us at 1 MHz.
    """
    f_mhz = trap.omega0 / (2 * math.pi) / 1e6
    lo, hi = bracket_us_mhz[0] * 1e-6 / f_mhz, bracket_us_mhz[1] * 1e-6 / f_mhz
    e_lo, _ = sta_excitation(trap, lo, n_steps=n_steps)
    e_hi, r_hi = sta_excitation(trap, hi, n_steps=n_steps)
    if not (e_lo >= threshold > e_hi):
        raise NonConvergenceError(f"bracket [{lo:.3g}, {hi:.3g}] s does not straddle the threshold "
                                  f"(excitations {e_lo:.3g}, {e_hi:.3g})")
    while hi - lo > tol_s:
        mid = 0.5 * (lo + hi)
        e_mid, r_mid = sta_excitation(trap, mid, n_steps=n_steps)
        if e_mid < threshold:
            hi, e_hi, r_hi = mid, e_mid, r_mid
        else:
            lo, e_lo = mid, e_mid
    diag = optimized_waveform(r_hi).diagnostics()
    return {"omega0_hz": trap.omega0 / (2 * math.pi), "t_crit_s": hi, "t_crit_us": hi * 1e6,
            "excitation_at_t_crit": e_hi, "t_below_s": lo, "excitation_below": e_lo,
            "beta_max_si": diag["beta_max_si"], "beta_max_1e-3_N_per_m3": diag["beta_max_si"] * 1e3,
            "beta_max_internal": diag["beta_max"], "a10": r_hi.free_params[0], "a11": r_hi.free_params[1]}


def _tcrit_task(args):
    trap_block, bracket, tol, n_steps = args
    return find_tcrit(trap_from_dict(trap_block), tuple(bracket), tol_s=tol, n_steps=n_steps)


def run_tcrit_table(config: ExperimentConfig) -> list[dict]:
    tol = config.protocol.get("tcrit_tol_s", 0.1e-6)
    n_steps = config.simulation.get("n_steps", 200_000)
    bracket = config.protocol.get("tcrit_bracket_us_mhz", (6.0, 14.0))
    tasks = [({**config.trap, "omega0_hz": f}, bracket, tol, n_steps) for f in config.frequencies_hz]
    rows = _map(_tcrit_task, tasks, config.workers)
    write_table(config.output_dir() / "tcrit_table.csv", rows, provenance(config))
    return rows


# ---------------------------------------------------------------- bias sweep

def lambda_for_delta_e(alpha: float, beta: float, delta_e: float) -> float:
    """Tilt (internal) whose final double well has energy difference ``delta_e`` (internal)."""
    if delta_e == 0:
        return 0.0
    sign = math.copysign(1.0, delta_e)
    # two minima survive while |lambda| < lambda_c
    q_c = math.sqrt(-alpha / (6 * beta))
    lam_c = abs(2 * alpha * q_c + 4 * beta * q_c**3)
    f = lambda lam: well_energy_difference(alpha, beta, sign * lam) - delta_e
    if f(0.999 * lam_c) * sign < 0:
        raise ConfigError(f"energy difference {delta_e:g} exceeds what the double well can hold")
    return sign * brentq(f, 0.0, 0.999 * lam_c, xtol=1e-15, rtol=1e-14)


def _bias_task(args):
    design, lam, engine, n_steps, grid = args
    wf = synthesize_waveform(ProtocolDesign.from_dict(design))
    return {k: v.excitation_quanta for k, v in simulate_waveform(wf, engine, lam, n_steps, grid).items()}


def run_bias_sweep(config: ExperimentConfig, write: bool = True) -> list[dict]:
    """Excitation of the lambda = 0 design run under a list of tilts."""
    result, wf, _ = run_design(config, write=write)
    trap = wf.trap
    a_f, b_f = float(wf.alpha[-1]), float(wf.beta[-1])
    if config.bias.get("lambda_N"):
        lams = [float(trap.from_si(v, "force")) for v in config.bias["lambda_N"]]
    else:
        lams = [lambda_for_delta_e(a_f, b_f, float(v)) for v in config.bias["delta_e_quanta"]]
    for lam in lams:
        if external_minima(a_f, b_f, lam).size != 2:
            raise ConfigError(f"tilt {trap.to_si(lam, 'force'):.3g} N destroys one of the final wells")
    sim = config.simulation
    engine = sim.get("engine", "classical")
    tasks = [(result.design.to_dict(), lam, engine, sim.get("n_steps"), _grid_from_config(config)) for lam in lams]
    results = _map(_bias_task, tasks, config.workers)
    rows = []
    for lam, res in zip(lams, results):
        row = {"lambda_N": trap.to_si(lam, "force"), "lambda_internal": lam,
               "delta_e_quanta": well_energy_difference(a_f, b_f, lam) if lam else 0.0}
        row.update({f"excitation_{k}": v for k, v in res.items()})
        rows.append(row)
    if write:
        write_table(config.output_dir() / "bias_sweep.csv", rows, provenance(config))
    return rows


# ---------------------------------------------------------------- reference ramp

ALPHA_PROFILES = ("quintic", "cubic")


def _alpha_profile(kind: str, s):
    """Smooth step p(s) from 0 to 1 with p'(0) = p'(1) = 0, and p'(s)."""
    if kind == "cubic":
        return 3 * s**2 - 2 * s**3, 6 * s * (1 - s)
    if kind == "quintic":
        return 1 - (1 - s) ** 4 * (1 + 4 * s), 20 * s * (1 - s) ** 3
    raise ValueError(f"alpha profile must be one of {ALPHA_PROFILES}")


def reference_waveform(trap: TrapSpec, t_f: float, expansion_factor: float = 10.0,
                       alpha_profile: str = "quintic", n_samples: int = 2001) -> Waveform:
    """Non-optimized ramp: d(t) = d0 + (d_f - d0) s^2 sin(pi s / 2), alpha stepped
    from alpha0 to -alpha0/2, beta from the equilibrium quintic.  ``t_f`` in seconds."""
    cc = trap.coulomb_internal
    d0 = trap.d0_internal
    d_f = expansion_factor * d0
    tf = trap.from_si(t_f, "time")
    a0, a1 = 0.5, -0.25

    def source(t):
        t = np.asarray(t, dtype=float)
        s = t / tf
        sn, cs = np.sin(0.5 * np.pi * s), np.cos(0.5 * np.pi * s)
        k = 0.5 * np.pi
        gap = d_f - d0
        d = d0 + gap * s**2 * sn
        d1 = gap * (2 * s * sn + k * s**2 * cs) / tf
        d2 = gap * (2 * sn + 4 * k * s * cs - k**2 * s**2 * sn) / tf**2
        p, dp = _alpha_profile(alpha_profile, s)
        alpha = a0 + (a1 - a0) * p
        alpha_dot = (a1 - a0) * dp / tf
        beta = (2 * cc - 2 * alpha * d**3) / d**5
        beta_dot = -2 * alpha_dot / d**2 + (-10 * cc / d**6 + 4 * alpha / d**3) * d1
        wm = 2 * alpha + 3 * beta * d**2
        return {"t": t, "alpha": alpha, "beta": beta, "d": d, "d_dot": d1, "d_ddot": d2,
                "omega2_minus": wm, "omega2_plus": wm + 4 * cc / d**3,
                "alpha_dot": alpha_dot, "beta_dot": beta_dot}

    meta = {"kind": "reference", "alpha_profile": alpha_profile, "t_f_s": t_f,
            "expansion_factor": expansion_factor}
    return waveform_from_source(trap, source, tf, n_samples, meta)


def _reference_task(args):
    trap_block, t_f, ef, profile, n_steps = args
    trap = trap_from_dict(trap_block)
    wf = reference_waveform(trap, t_f, ef, profile)
    e_ref = propagate_classical(wf, n_steps=n_steps).report.excitation_quanta
    e_sta, res = sta_excitation(trap, t_f, expansion_factor=ef, n_steps=n_steps)
    d = wf.diagnostics()
    return {"t_f": t_f, "E_ex_reference": e_ref, "E_ex_sta": e_sta,
            "reference_omega2_minus_min": d["omega2_minus_min"],
            "reference_omega2_plus_min": d["omega2_plus_min"],
            "a10": res.free_params[0], "a11": res.free_params[1]}


def run_reference_ramp(config: ExperimentConfig) -> dict:
    """Paired STA and reference-ramp excitations along t_f, plus both sub-quantum thresholds."""
    p = config.protocol
    profile = p.get("reference_alpha", "quintic")
    if profile not in ALPHA_PROFILES:
        raise ConfigError(f"protocol.reference_alpha must be one of {ALPHA_PROFILES}")
    n_steps = config.simulation.get("n_steps", 200_000)
    tasks = [(config.trap, t_f, p.get("expansion_factor", 10.0), profile, n_steps) for t_f in config.t_f_values()]
    rows = _map(_reference_task, tasks, config.workers)
    summary = {"reference_alpha": profile,
               "reference_threshold_s": first_below(rows, "E_ex_reference", 1.0),
               "sta_threshold_s": first_below(rows, "E_ex_sta", 1.0)}
    write_table(config.output_dir() / "reference_compare.csv", rows, provenance(config, summary=summary))
    return {"rows": rows, **summary}


def first_below(rows: list[dict], key: str, level: float) -> float | None:
    """Smallest t_f from which the excitation stays below ``level`` for all longer t_f."""
    rows = sorted(rows, key=lambda r: r["t_f"])
    best = None
    for r in reversed(rows):
        if r[key] < level:
            best = r["t_f"]
        else:
            break
    return best


RUNNERS = {
    "design": run_design,
    "simulate": run_simulate,
    "excitation-curve": run_excitation_curve,
    "tcrit-table": run_tcrit_table,
    "bias-sweep": run_bias_sweep,
    "reference-compare": run_reference_ramp,
}
