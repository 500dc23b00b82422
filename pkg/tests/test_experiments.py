import json
import math
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from ionsplit import cli
from ionsplit.experiments import (ConfigError, ExperimentConfig, NonConvergenceError, find_tcrit, first_below,
                                  lambda_for_delta_e, reference_waveform, run_bias_sweep, run_excitation_curve,
                                  run_reference_ramp, run_tcrit_table)
from ionsplit.potential import well_energy_difference

SCHEMA_DIR = Path(__file__).resolve().parents[1] / "src" / "ionsplit" / "schemas"


def _cfg(tmp_path, **kw):
    base = {"kind": "design", "protocol": {"t_f": 5.2e-6}, "output": {"dir": str(tmp_path)}}
    base.update(kw)
    return ExperimentConfig.from_dict(base)


@pytest.mark.parametrize("bad", [
    {"kind": "nope"},
    {"kind": "design"},
    {"kind": "design", "protocol": {"t_f": -1.0}},
    {"kind": "design", "protocol": {"t_f": 1e-6, "order": 7}},
    {"kind": "design", "protocol": {"t_f": 1e-6, "order": 11, "objective": "perturbative"}},
    {"kind": "design", "protocol": {"t_f": 1e-6}, "trap": {"species": "Xe+", "omega0_hz": 1e6}},
    {"kind": "design", "protocol": {"t_f": 1e-6}, "colour": "blue"},
    {"kind": "bias-sweep", "protocol": {"t_f": 1e-6}},
    {"kind": "excitation-curve"},
    {"kind": "simulate", "protocol": {"t_f": 1e-6}, "simulation": {"engine": "abacus"}},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_schema_accepts_examples_and_hash_is_stable(tmp_path):
    schema = json.loads((SCHEMA_DIR / "experiment_config.schema.json").read_text())
    cfg = _cfg(tmp_path)
    jsonschema.validate(cfg.to_dict(), schema)
    assert cfg.content_hash() == _cfg(tmp_path).content_hash()
    assert cfg.content_hash() != _cfg(tmp_path, workers=2).content_hash()


def test_t_f_range():
    cfg = ExperimentConfig.from_dict({"kind": "excitation-curve", "protocol": {"t_f_range": [3e-6, 4e-6, 3]}})
    assert cfg.t_f_values() == pytest.approx([3e-6, 3.5e-6, 4e-6])


def test_cli_design_and_replay(tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(["design", "--t-f", "5.2e-6", "--out", str(out1)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["converged"] and summary["beta_max_si"] == pytest.approx(11.4e-3, rel=0.25)
    design = json.loads((out1 / "design.json").read_text())
    jsonschema.validate(design, json.loads((SCHEMA_DIR / "design.schema.json").read_text()))
    assert design["provenance"]["config_hash"]
    assert cli.main(["design", "--config", str(out1 / "design.json").replace("design.json", "none.json"),
                     "--out", str(out2)]) == 3
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "design", "protocol": {"t_f": 5.2e-6}}))
    assert cli.main(["design", "--config", str(cfg), "--out", str(out2)]) == 0
    assert (out1 / "waveform.csv").read_bytes() == (out2 / "waveform.csv").read_bytes()


def test_cli_bad_config_exit_code(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "design", "protocol": {"t_f": 5.2e-6, "order": 7}}))
    assert cli.main(["design", "--config", str(cfg)]) == 3
    assert cli.main(["simulate", "--config", str(cfg)]) == 3  # kind mismatch
    assert cli.main(["design", "--set", "protocol.t_f=-2"]) == 3


def test_cli_overrides():
    data = {}
    cli.apply_override(data, "protocol.t_f_values=[1e-6, 2e-6]")
    cli.apply_override(data, "trap.species=Ca40+")
    assert data == {"protocol": {"t_f_values": [1e-6, 2e-6]}, "trap": {"species": "Ca40+"}}
    with pytest.raises(ConfigError):
        cli.apply_override(data, "no_equals_sign")


def test_cli_simulate_both_engines(tmp_path, capsys):
    code = cli.main(["simulate", "--t-f", "5.2e-6", "--engine", "classical", "--out", str(tmp_path)])
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["reports"]["classical"]["excitation_quanta"] < 0.1


def test_tcrit_bracket_failure(tmp_path, trap):
    with pytest.raises(NonConvergenceError):
        find_tcrit(trap, (6.0 * 2, 8.0 * 2))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "tcrit-table", "frequencies_hz": [2e6],
                               "protocol": {"tcrit_bracket_us_mhz": [12.0, 16.0]}}))
    assert cli.main(["tcrit-table", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_lambda_from_energy_difference(wf_52, trap):
    a, b = float(wf_52.alpha[-1]), float(wf_52.beta[-1])
    lam = lambda_for_delta_e(a, b, 1000.0)
    assert well_energy_difference(a, b, lam) == pytest.approx(1000.0, rel=1e-10)
    # Delta E is close to lambda * d(t_f)
    assert lam == pytest.approx(1000.0 / wf_52.d[-1], rel=0.05)
    assert trap.to_si(lam, "force") == pytest.approx(22.9e-21, rel=0.01)
    assert lambda_for_delta_e(a, b, -1000.0) == pytest.approx(-lam, rel=1e-10)
    with pytest.raises(ConfigError):
        lambda_for_delta_e(a, b, 1e9)


def test_bias_sweep(tmp_path, wf_52):
    cfg = ExperimentConfig.from_dict({"kind": "bias-sweep", "protocol": {"t_f": 5.2e-6},
                                      "bias": {"delta_e_quanta": [0.0, 1000.0, 5000.0]},
                                      "output": {"dir": str(tmp_path)}})
    rows = run_bias_sweep(cfg)
    ex = [r["excitation_classical"] for r in rows]
    assert rows[0]["lambda_N"] == 0.0
    assert ex[0] < 0.1 and ex[0] < ex[1] < ex[2]
    assert rows[1]["delta_e_quanta"] == pytest.approx(1000.0, rel=1e-9)
    assert (tmp_path / "bias_sweep.csv").exists() and (tmp_path / "bias_sweep.json").exists()


def test_bias_destroying_a_well_is_rejected(tmp_path):
    cfg = ExperimentConfig.from_dict({"kind": "bias-sweep", "protocol": {"t_f": 5.2e-6},
                                      "bias": {"lambda_N": [1e-15]}, "output": {"dir": str(tmp_path)}})
    with pytest.raises(ConfigError):
        run_bias_sweep(cfg, write=False)


def test_reference_waveform_endpoints(trap):
    wf = reference_waveform(trap, 20e-6)
    assert wf.d[0] == pytest.approx(trap.d0_internal, rel=1e-14)
    assert wf.d[-1] == pytest.approx(10 * trap.d0_internal, rel=1e-14)
    assert wf.alpha[0] == 0.5 and wf.alpha[-1] == pytest.approx(-0.25, rel=1e-14)
    f = wf.evaluate(np.array([0.0, wf.t_f]))
    assert np.allclose(f["alpha_dot"], 0.0, atol=1e-15)
    # the prescribed d(t) ends with d'(t_f) = 2 (d_f - d0) / t_f
    assert f["d_dot"][1] == pytest.approx(2 * 9 * trap.d0_internal / wf.t_f, rel=1e-12)
    cubic = reference_waveform(trap, 20e-6, alpha_profile="cubic")
    assert cubic.diagnostics()["omega2_minus_min"] < 0 < wf.diagnostics()["omega2_minus_min"]
    # beta from the equilibrium relation, checked by finite differences for beta_dot
    t = np.array([0.3, 0.6]) * wf.t_f
    h = 1e-4
    num = (wf.evaluate(t + h)["beta"] - wf.evaluate(t - h)["beta"]) / (2 * h)
    assert np.allclose(wf.evaluate(t)["beta_dot"], num, rtol=1e-6)


def test_reference_excitation_is_final_frame_kinetic_energy(trap):
    """The prescribed ramp leaves the pair moving apart: E_ex -> (m/2) d'(t_f)^2 / 2 at long t_f."""
    from ionsplit.classical import propagate_classical
    wf = reference_waveform(trap, 100e-6)
    e = propagate_classical(wf).report.excitation_quanta
    assert e == pytest.approx(0.25 * wf.d_dot[-1] ** 2, rel=1e-3)


def test_reference_compare_and_first_below(tmp_path):
    cfg = ExperimentConfig.from_dict({"kind": "reference-compare", "protocol": {"t_f_values": [5.2e-6]},
                                      "output": {"dir": str(tmp_path)}})
    out = run_reference_ramp(cfg)
    row = out["rows"][0]
    assert row["E_ex_sta"] < 0.1 and row["E_ex_reference"] > 100
    assert out["sta_threshold_s"] == 5.2e-6 and out["reference_threshold_s"] is None
    rows = [{"t_f": 1, "x": 2.0}, {"t_f": 2, "x": 0.5}, {"t_f": 3, "x": 1.5}, {"t_f": 4, "x": 0.2}]
    assert first_below(rows, "x", 1.0) == 4


def test_excitation_curve_long_times(tmp_path):
    cfg = ExperimentConfig.from_dict({"kind": "excitation-curve", "protocol": {"t_f_values": [15e-6, 20e-6]},
                                      "output": {"dir": str(tmp_path)}})
    rows = run_excitation_curve(cfg)
    for r in rows:
        assert r["E_ex_order11"] < 1e-3 and r["E_ex_order12"] < 1e-3
    header = (tmp_path / "excitation_curve.csv").read_text().splitlines()[0]
    assert header.startswith("t_f,E_ex_order11,E_ex_order12,a10,a11,c10,c11,c12")


@pytest.mark.slow
def test_tcrit_low_frequency_rows(tmp_path):
    cfg = ExperimentConfig.from_dict({"kind": "tcrit-table", "frequencies_hz": [1.2e6, 0.8e6],
                                      "output": {"dir": str(tmp_path)}})
    rows = run_tcrit_table(cfg)
    assert rows[0]["t_crit_us"] < rows[1]["t_crit_us"]
    assert rows[1]["t_crit_us"] == pytest.approx(11.2, abs=0.5 * 11.2 / 4.4)
    assert rows[1]["beta_max_1e-3_N_per_m3"] == pytest.approx(0.539, rel=0.25)
