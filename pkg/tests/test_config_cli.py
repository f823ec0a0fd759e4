"""Config parsing/validation, overrides, hashing, CLI commands and artifacts."""

import json

import numpy as np
import pytest

import nesc
from nesc import ConfigError
from nesc.cli import main
from nesc.config import (
    apply_overrides,
    bundled_config_path,
    config_from_dict,
    parse_config,
)

from conftest import three_agent_raw


def test_bundled_inesc_parses_to_paper_parameters():
    cfg = parse_config(bundled_config_path("fig1_inesc"))
    assert cfg.variant == "inesc"
    np.testing.assert_array_equal(cfg.tau, [5.0, 10.0, 15.0])
    for p in cfg.est_params:
        assert p.sigma == 1e-6
        assert p.K == 50.0
        assert p.k_T == 50.0
        assert p.alpha1 == 0.1
    amps = [d.amplitude[0] for d in cfg.dither]
    freqs = [d.frequency[0] for d in cfg.dither]
    phases = [d.phase[0] for d in cfg.dither]
    assert amps == [0.5, 0.5, 0.5]
    assert freqs == [40.0, 50.0, 60.0]
    assert phases == [0.0, 0.0, 0.0]
    assert cfg.step == 1e-3 and cfg.horizon == 100.0 and cfg.stride == 10


def test_bundled_baseline_parses_to_paper_parameters():
    cfg = parse_config(bundled_config_path("fig1_baseline"))
    bl = cfg.baseline
    np.testing.assert_array_equal(bl.omega_h, [180.0, 200.0, 220.0])
    np.testing.assert_array_equal(bl.omega_l, [45.0, 50.0, 55.0])
    np.testing.assert_array_equal(bl.omega, [90.0, 100.0, 110.0])
    np.testing.assert_array_equal(bl.k, [0.5] * 3)
    np.testing.assert_array_equal(bl.A, [5.0] * 3)


def test_negative_tau_is_named_in_error():
    raw = three_agent_raw()
    raw["controller"]["agents"][1]["tau"] = -1.0
    with pytest.raises(ConfigError, match=r"agents\[1\].tau"):
        config_from_dict(raw)


def test_unknown_keys_rejected():
    raw = three_agent_raw()
    raw["controller"]["agents"][0]["taus"] = 3.0
    with pytest.raises(ConfigError, match="unknown keys"):
        config_from_dict(raw)
    raw = three_agent_raw()
    raw["simulation"] = {}
    with pytest.raises(ConfigError, match="unknown keys"):
        config_from_dict(raw)


def test_step_guard():
    raw = three_agent_raw()
    raw["sim"]["step"] = 0.01  # = min(1/K, 2*pi/60)/10 = 0.002 guard
    with pytest.raises(ConfigError, match="allow_large_step"):
        config_from_dict(raw)
    raw["sim"]["allow_large_step"] = True
    cfg = config_from_dict(raw)
    assert cfg.step == 0.01


def test_defaults_and_normalized_roundtrip():
    raw = {"game": three_agent_raw()["game"]}
    cfg = config_from_dict(raw, "bare")
    assert cfg.variant is None
    assert cfg.step == 1e-3 and cfg.horizon == 100.0 and cfg.stride == 10
    with pytest.raises(ConfigError):
        cfg.require_controller()
    full = parse_config(bundled_config_path("fig1_inesc"))
    again = config_from_dict(full.normalized, full.name)
    assert again.config_hash == full.config_hash


def test_config_hash_changes_with_parameters():
    a = config_from_dict(three_agent_raw())
    raw = three_agent_raw()
    raw["controller"]["agents"][0]["tau"] = 6.0
    b = config_from_dict(raw)
    assert a.config_hash != b.config_hash


def test_overrides_paths_and_wildcard():
    raw = three_agent_raw()
    apply_overrides(raw, [
        "controller.agents.0.tau=7.5",
        "controller.agents.*.dither.amplitude=0.25",
        "sim.horizon=12.0",
    ])
    cfg = config_from_dict(raw)
    assert cfg.tau[0] == 7.5
    assert all(d.amplitude[0] == 0.25 for d in cfg.dither)
    assert cfg.horizon == 12.0


def test_override_errors():
    raw = three_agent_raw()
    with pytest.raises(ConfigError, match="key=value"):
        apply_overrides(raw, ["sim.step"])
    with pytest.raises(ConfigError, match="out of range"):
        apply_overrides(raw, ["controller.agents.7.tau=1"])
    with pytest.raises(ConfigError, match="list index"):
        apply_overrides(raw, ["controller.agents.x.tau=1"])
    with pytest.raises(ConfigError, match="leaf"):
        apply_overrides(raw, ["controller.agents.*=1"])


def test_parse_error_reports_line_and_column(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "game": [,]\n}\n')
    with pytest.raises(ConfigError, match="line 2"):
        parse_config(p)


def test_theta_box_shape_validation():
    raw = three_agent_raw()
    raw["controller"]["agents"][0]["theta_box"] = [[-1.0, 1.0]]
    with pytest.raises(ConfigError, match="theta_box"):
        config_from_dict(raw)


# ---- CLI ----------------------------------------------------------------


def run_cli(*argv):
    return main(list(argv))


def test_cli_run_emits_artifacts(tmp_path, capsys):
    code = run_cli("run", "--config", str(bundled_config_path("fig1_fullinfo")),
                   "--out", str(tmp_path), "--horizon", "5.0")
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    traj = tmp_path / "trajectory.csv"
    metrics = tmp_path / "metrics.json"
    assert traj.exists() and metrics.exists()
    assert out["config_hash"]
    record = json.loads(metrics.read_text())
    assert record["config_hash"] == out["config_hash"]
    assert record["variant"] == "fullinfo"
    assert "trailing_u_error" in record["metrics"]


def test_cli_rerun_reproduces_identical_files(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run_cli("run", "--config",
                       str(bundled_config_path("fig1_fullinfo")),
                       "--out", str(out), "--horizon", "5.0") == 0
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
    assert (a / "metrics.json").read_bytes() == (b / "metrics.json").read_bytes()


def test_cli_csv_schema_and_roundtrip(tmp_path):
    assert run_cli("run", "--config", str(bundled_config_path("fig1_inesc")),
                   "--out", str(tmp_path), "--horizon", "2.0",
                   "--override", "output.lyapunov=true") == 0
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    header = lines[0].split(",")
    expected = (
        ["t"]
        + [f"x_{j}" for j in (1, 2, 3)]
        + [f"u_{j}" for j in (1, 2, 3)]
        + [f"u_hat_{j}" for j in (1, 2, 3)]
        + [f"y_{j}" for j in (1, 2, 3)]
        + [f"theta_hat_{i}_{j}" for i in (1, 2, 3) for j in (0, 1)]
        + ["W", "V", "T", "L"]
    )
    assert header == expected
    # 17 significant digits round-trip the binary values exactly
    data = np.genfromtxt(str(tmp_path / "trajectory.csv"), delimiter=",",
                         skip_header=1)
    raw = three_agent_raw()
    raw["sim"]["horizon"] = 2.0
    res = nesc.run(config_from_dict(raw, "fig1_inesc"))
    np.testing.assert_array_equal(data[:, 0], res.t)
    np.testing.assert_array_equal(data[:, 1:4], res.x)
    np.testing.assert_array_equal(data[:, 7:10], res.u_hat)


def test_cli_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.json"
    raw = three_agent_raw()
    raw["controller"]["agents"][0]["tau"] = -5.0
    p.write_text(json.dumps(raw))
    assert run_cli("run", "--config", str(p), "--out", str(tmp_path)) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError"
    assert "tau" in err["message"]


def test_cli_blowup_exit_code(tmp_path, capsys):
    raw = three_agent_raw()
    for i, agent in enumerate(raw["game"]["agents"]):
        Q = np.zeros((3, 3))
        Q[i, i] = -1.0
        agent["cost"] = {"Q": Q.tolist(), "q": [0.0] * 3, "r": 0.0}
    raw["controller"] = {"variant": "fullinfo", "agents": [{"tau": 0.1}] * 3}
    raw["sim"] = {"step": 0.001, "horizon": 20.0, "stride": 10,
                  "x0": [1e300] * 3}
    p = tmp_path / "explode.json"
    p.write_text(json.dumps(raw))
    assert run_cli("run", "--config", str(p), "--out", str(tmp_path)) == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "BlowUpError"
    assert err["t"] > 0


def test_cli_check_monotone_violation_exit_code(tmp_path, capsys):
    raw = {"game": {"agents": [
        {"B": [[1.0]], "cost": {"Q": [[0.0, 1.0], [1.0, 0.0]],
                                "q": [0.0, 0.0], "r": 0.0}},
        {"B": [[1.0]], "cost": {"Q": [[0.0, -1.0], [-1.0, 0.0]],
                                "q": [0.0, 0.0], "r": 0.0}},
    ]}}
    p = tmp_path / "rotation.json"
    p.write_text(json.dumps(raw))
    assert run_cli("check-monotone", "--config", str(p)) == 4
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "AssumptionViolationError"


def test_cli_ne_solve_decoupled(tmp_path, capsys):
    centers = [1.0, -2.0, 0.5]
    agents = []
    for i, c in enumerate(centers):
        Q = np.zeros((3, 3))
        Q[i, i] = 2.0
        q = np.zeros(3)
        q[i] = -2.0 * c
        agents.append({"B": [[1.0]],
                       "cost": {"Q": Q.tolist(), "q": q.tolist(), "r": c * c}})
    p = tmp_path / "decoupled.json"
    p.write_text(json.dumps({"game": {"agents": agents}}))
    assert run_cli("ne-solve", "--config", str(p)) == 0
    out = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(out["u_star"], centers, atol=1e-12)
    assert out["residual"] <= 1e-10


def test_cli_check_monotone_and_recommend_tau(capsys):
    cfg = str(bundled_config_path("fig1_inesc"))
    assert run_cli("check-monotone", "--config", cfg) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["mu"] == pytest.approx(2.2094305849579051, rel=1e-12)
    assert out["certified"] is True
    assert run_cli("recommend-tau", "--config", cfg, "--beta", "1.0") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["tau_star"] == pytest.approx(12.493408845293416, rel=1e-10)


def test_cli_sweep(tmp_path, capsys):
    code = run_cli(
        "sweep", "--config", str(bundled_config_path("fig1_inesc")),
        "--param", "controller.agents.*.dither.amplitude",
        "--values", "[0.5, 0.25]",
        "--out", str(tmp_path), "--override", "sim.horizon=2.0",
    )
    assert code == 0
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert rows[0].startswith("value,trailing_u_error")
    assert len(rows) == 3
    record = json.loads((tmp_path / "sweep.json").read_text())
    assert [r["value"] for r in record["runs"]] == [0.5, 0.25]
    hashes = {r["config_hash"] for r in record["runs"]}
    assert len(hashes) == 2


def test_cli_compare(tmp_path, capsys):
    code = run_cli(
        "compare", "--inesc", str(bundled_config_path("fig1_inesc")),
        "--baseline", str(bundled_config_path("fig1_baseline")),
        "--out", str(tmp_path), "--override", "sim.horizon=2.0",
    )
    assert code == 0
    lines = (tmp_path / "compare.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header[0] == "t"
    assert "x_1_inesc" in header and "x_1_baseline" in header
    assert "u_1_inesc" in header and "u_1_baseline" in header
    assert len(header) == 1 + 2 * 6
    record = json.loads((tmp_path / "compare_metrics.json").read_text())
    assert record["probe"]["inesc"]["max_amplitude"] == 0.5
    assert record["probe"]["baseline"]["max_amplitude"] == 5.0


def test_cli_compare_rejects_mismatched_games(tmp_path):
    raw = three_agent_raw()
    raw["game"]["agents"][0]["cost"]["r"] = 99.0
    p = tmp_path / "other.json"
    p.write_text(json.dumps(raw))
    code = run_cli("compare", "--inesc", str(p),
                   "--baseline", str(bundled_config_path("fig1_baseline")),
                   "--out", str(tmp_path))
    assert code == 2
