import math

import numpy as np
import pytest

from ionsplit.ansatz import design_fields, waveform_from_source
from ionsplit.shooting import integrate_x_plus, nm_energy, shoot


def _const_source(omega2, d_ddot_fn):
    def source(t):
        t = np.asarray(t, dtype=float)
        z = np.zeros_like(t)
        return {"t": t, "alpha": z + 0.5, "beta": z, "d": z + 1.0, "d_dot": z, "d_ddot": d_ddot_fn(t),
                "omega2_minus": z + 1.0, "omega2_plus": z + omega2, "alpha_dot": z, "beta_dot": z}
    return source


def test_static_trap_keeps_centre_at_rest(trap):
    wf = waveform_from_source(trap, _const_source(3.0, lambda t: 0.0 * t), 40.0, 1001)
    traj = integrate_x_plus(wf, 2000)
    assert np.all(traj.x == 0.0) and np.all(traj.x_dot == 0.0)


def test_resonant_drive_closed_form(trap):
    om, eps = math.sqrt(3.0), 1e-3
    wf = waveform_from_source(trap, _const_source(om**2, lambda t: eps * np.sin(om * t)), 30.0, 1001)
    traj = integrate_x_plus(wf, 20000)
    f = -eps / math.sqrt(2.0)
    exact = f / (2 * om**2) * (np.sin(om * traj.t) - om * traj.t * np.cos(om * traj.t))
    assert np.max(np.abs(traj.x - exact)) < 1e-10
    assert traj.error_estimate < 1e-9


def test_nm_energy_endpoints(trap, shot_52):
    assert nm_energy(0, 1.0, 0.0, 1.0, 1.0, mode="minus") == pytest.approx(0.5, rel=1e-15)
    design = shot_52.design
    gp = design.rho_plus.gamma
    w2 = design.omega_plus_final**2
    assert nm_energy(0, gp, 0.0, w2, design.omega0_plus) == pytest.approx(0.5 * design.omega_plus_final, rel=1e-12)
    assert nm_energy(2, 1.0, 0.0, 1.0, 1.0, mode="minus") == pytest.approx(2.5, rel=1e-15)


def test_nm_energy_bounded_below_along_design(shot_52):
    design = shot_52.design
    t = shot_52.t[::200]
    f = design_fields(design, t)
    rho, rho_dot = design.rho_plus.derivatives(t / design.t_f_internal, 1, design.t_f_internal)
    for i in range(t.size):
        e = nm_energy(0, rho[i], rho_dot[i], f["omega2_plus"][i], design.omega0_plus,
                      shot_52.x_plus[200 * i], shot_52.x_plus_dot[200 * i], f["d_ddot"][i])
        assert e >= 0.5 * math.sqrt(f["omega2_plus"][i]) - 1e-12


def test_shooting_converges(shot_52):
    assert shot_52.converged
    assert max(map(abs, shot_52.terminal_residuals)) < 1e-6
    assert shot_52.excess < 1e-8
    assert shot_52.integration_error < 1e-9
    assert shot_52.x_plus[0] == 0.0 and shot_52.x_plus_dot[0] == 0.0


def test_adiabatic_limit(trap):
    """Excess energy without any correction vanishes as t_f grows; shooting still reaches zero."""
    start = [shoot(trap, tf, max_iter=1).excess for tf in (10e-6, 20e-6, 50e-6)]
    assert start[0] > start[1] > start[2] and start[2] < 1e-9
    res = shoot(trap, 50e-6)
    assert res.converged and res.excess < 1e-12


def test_order12_with_frozen_c12_recovers_order11(trap, shot_52):
    r12 = shoot(trap, 5.2e-6, order=12, fixed={2: 0.0})
    assert r12.free_params[2] == 0.0
    assert r12.free_params[:2] == pytest.approx(shot_52.free_params, rel=1e-6)


def test_deterministic(trap, shot_52):
    again = shoot(trap, 5.2e-6)
    assert again.free_params == shot_52.free_params
    assert again.evaluations == shot_52.evaluations


def test_objective_guards(trap):
    with pytest.raises(ValueError):
        shoot(trap, 5e-6, order=11, objective="perturbative")
    with pytest.raises(ValueError):
        shoot(trap, 5e-6, objective="bogus")


def test_residual_objective_and_json(trap, tmp_path):
    res = shoot(trap, 5.2e-6, objective="residual")
    assert max(map(abs, res.terminal_residuals)) < 1e-6
    res.to_json(tmp_path / "r.json")
    assert (tmp_path / "r.json").read_text().startswith("{")
