"""Integrator, closed-loop runs, determinism, metrics."""

import copy

import numpy as np
import pytest

import nesc
from nesc import BlowUpError, ConfigError, convergence_metrics, run, step_rk4
from nesc.config import config_from_dict

from conftest import three_agent_raw


def test_rk4_zero_derivative_keeps_state():
    z = np.array([1.0, -2.0, 3.5])
    out = step_rk4(lambda t, z: np.zeros_like(z), 0.0, z, 0.1)
    np.testing.assert_array_equal(out, z)


def test_rk4_exponential_decay():
    z = np.array([1.0])
    for s in range(100):
        z = step_rk4(lambda t, z: -z, s * 0.01, z, 0.01)
    assert z[0] == pytest.approx(np.exp(-1.0), abs=1e-9)


def test_rk4_equals_degree4_taylor_on_linear_system():
    rng = np.random.default_rng(11)
    A = -np.eye(4) + 0.2 * rng.standard_normal((4, 4))
    z = rng.standard_normal(4)
    h = 0.01
    stepped = step_rk4(lambda t, v: A @ v, 0.0, z, h)
    M = np.eye(4)
    taylor = np.eye(4)
    for k in range(1, 5):
        M = M @ (h * A) / k
        taylor = taylor + M
    np.testing.assert_allclose(stepped, taylor @ z, atol=1e-15)


def test_rk4_rejects_bad_step():
    with pytest.raises(ConfigError):
        step_rk4(lambda t, z: z, 0.0, np.zeros(1), 0.0)


def test_run_is_deterministic(sec4_config):
    a = run(sec4_config)
    b = run(sec4_config)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.t, b.t)


def test_python_and_kernel_paths_agree():
    for name in ("fig1_inesc", "fig1_fullinfo", "fig1_baseline"):
        raw = nesc.config.load_raw(nesc.bundled_config_path(name))
        raw["sim"]["horizon"] = 2.0
        cfg = config_from_dict(raw, name)
        fast = run(cfg)
        slow = run(cfg, force_python=True)
        assert np.abs(fast.states - slow.states).max() < 1e-9


def test_step_halving_changes_final_state_little(fullinfo_tau_star_config):
    # mid-transient comparison, where truncation error actually accumulates
    raw = copy.deepcopy(fullinfo_tau_star_config.normalized)
    raw["sim"]["horizon"] = 5.0
    res = run(config_from_dict(raw, "h"))
    raw_half = copy.deepcopy(raw)
    raw_half["sim"]["step"] /= 2.0
    res_half = run(config_from_dict(raw_half, "halved"))
    assert np.abs(res.states[-1] - res_half.states[-1]).max() < 1e-8


def test_fullinfo_converges_with_paper_time_constants(sec4_config):
    # tau = (5, 10, 15) from the example: below tau*, still Hurwitz
    raw = copy.deepcopy(sec4_config.normalized)
    raw["controller"] = {"variant": "fullinfo",
                         "agents": [{"tau": v} for v in (5.0, 10.0, 15.0)]}
    raw["output"] = {"lyapunov": False, "beta": 1.0}
    cfg = config_from_dict(raw, "fullinfo_51015")
    res = run(cfg)
    ne = nesc.solve_ne(cfg.game)
    assert np.linalg.norm(res.u_hat[-1] - ne.u_star) < 1e-6
    A, _ = nesc.fullinfo_closed_loop(cfg.game, [5.0, 10.0, 15.0])
    assert nesc.is_hurwitz(A)


def test_zero_cost_game_controller_at_rest():
    raw = three_agent_raw()
    for agent in raw["game"]["agents"]:
        agent["cost"] = {"Q": np.zeros((3, 3)).tolist(),
                         "q": [0.0, 0.0, 0.0], "r": 0.0}
    raw["sim"]["horizon"] = 5.0
    raw["sim"]["u0"] = [1.0, -1.0, 0.5]
    cfg = config_from_dict(raw, "zero_cost")
    res = run(cfg)
    # no gradient force: u_hat frozen, the applied input is u0 + dither
    np.testing.assert_array_equal(res.u_hat, np.tile(cfg.u0, (res.samples, 1)))
    d = res.u - res.u_hat
    amp = np.array([0.5, 0.5, 0.5])
    freq = np.array([40.0, 50.0, 60.0])
    np.testing.assert_allclose(
        d, amp * np.sin(np.outer(res.t, freq)), atol=1e-12)


def test_blow_up_reports_time_component_and_partial_trace():
    raw = three_agent_raw()
    # destabilize: concave own costs flip the gradient feedback sign
    for i, agent in enumerate(raw["game"]["agents"]):
        Q = np.zeros((3, 3))
        Q[i, i] = -1.0
        agent["cost"] = {"Q": Q.tolist(), "q": [0.0] * 3, "r": 0.0}
    raw["controller"] = {"variant": "fullinfo",
                         "agents": [{"tau": 0.1}] * 3}
    raw["sim"] = {"step": 0.001, "horizon": 20.0, "stride": 10,
                  "x0": [1e300, 1e300, 1e300]}
    cfg = config_from_dict(raw, "explode")
    with pytest.raises(BlowUpError) as err:
        run(cfg)
    exc = err.value
    assert exc.t is not None and 0 < exc.t < 20.0
    assert exc.component is not None
    assert exc.partial is not None
    assert exc.partial.samples >= 1
    assert np.all(np.isfinite(exc.partial.states))


def test_convergence_metrics_at_ne(sec4_game, u_star_oracle):
    ne = nesc.solve_ne(sec4_game)
    raw = three_agent_raw()
    raw["controller"] = {"variant": "fullinfo", "agents": [{"tau": 15.0}] * 3}
    raw["sim"]["horizon"] = 2.0
    raw["sim"]["x0"] = ne.x_star.tolist()
    raw["sim"]["u0"] = ne.u_star.tolist()
    res = run(config_from_dict(raw, "at_ne"))
    m = convergence_metrics(res, ne, window=1.0, ball=0.1)
    assert m.trailing_u_error < 1e-12
    assert m.trailing_x_error < 1e-12
    assert m.peak_u_error < 1e-12
    assert m.entry_time == 0.0


def test_convergence_metrics_entry_time(sec4_config):
    ne = nesc.solve_ne(sec4_config.game)
    res = run(sec4_config)
    m = convergence_metrics(res, ne, window=20.0, ball=0.1)
    err = np.linalg.norm(res.u_hat - ne.u_star, axis=1)
    idx = np.nonzero(err > 0.1)[0]
    assert m.entry_time == pytest.approx(res.t[idx[-1] + 1])
    # a ball nothing ever leaves again gives t0; an unreachable ball gives None
    tight = convergence_metrics(res, ne, window=20.0, ball=1e-9)
    assert tight.entry_time is None
    with pytest.raises(ConfigError):
        convergence_metrics(res, ne, window=1000.0)


def test_result_accessors(inesc_run, sec4_config):
    res = inesc_run
    assert res.x.shape == (res.samples, 3)
    assert res.u.shape == (res.samples, 3)
    assert res.y.shape == (res.samples, 3)
    assert res.theta_hat(0).shape == (res.samples, 2)
    assert res.Sigma(2).shape == (res.samples, 2, 2)
    snap = res.state_at(5)
    est = snap.estimator(1)
    assert est.Sigma.shape == (2, 2)
    np.testing.assert_array_equal(snap.x, res.x[5])
    # y matches direct cost evaluation
    s = res.samples // 2
    for i in range(3):
        assert res.y[s, i] == pytest.approx(
            nesc.eval_cost(sec4_config.game, i, res.x[s]), rel=1e-12)


def test_component_names(sec4_config):
    layout = nesc.StateLayout.build("inesc", sec4_config.game)
    assert layout.component_name(0) == "x[0]"
    assert layout.component_name(3) == "u_hat[0]"
    assert layout.component_name(int(layout.est_offsets[0])) == "agent0.y_hat"
    assert layout.component_name(layout.dim - 1) == "agent2.Sigma[1,1]"
