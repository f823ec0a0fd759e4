"""Shared fixtures: the three-agent example game and cached reference runs."""

import numpy as np
import pytest

import nesc
from nesc.config import config_from_dict, load_raw


def three_agent_raw():
    """Raw dict of the bundled three-agent limited-information config."""
    return load_raw(nesc.bundled_config_path("fig1_inesc"))


@pytest.fixture(scope="session")
def sec4_config():
    return nesc.parse_config(nesc.bundled_config_path("fig1_inesc"))


@pytest.fixture(scope="session")
def sec4_game(sec4_config):
    return sec4_config.game


@pytest.fixture(scope="session")
def baseline_config():
    return nesc.parse_config(nesc.bundled_config_path("fig1_baseline"))


@pytest.fixture(scope="session")
def u_star_oracle():
    """Independent linear solve of the hand-derived stationarity system.

    grad_1 = 3u1 + 1.5u2 + u3 - 3
    grad_2 = -2u1 + 3u2 + u3 - 6
    grad_3 = -2.5u1 - u2 + 3u3 - 9
    """
    J = np.array([[3.0, 1.5, 1.0], [-2.0, 3.0, 1.0], [-2.5, -1.0, 3.0]])
    b = np.array([3.0, 6.0, 9.0])
    return np.linalg.solve(J, b)


@pytest.fixture(scope="session")
def inesc_run(sec4_config):
    """Full 100 s limited-information run, stride 10."""
    return nesc.run(sec4_config)


@pytest.fixture(scope="session")
def inesc_run_fine():
    """20 s limited-information run recorded at every step (stride 1)."""
    raw = three_agent_raw()
    raw["sim"]["horizon"] = 20.0
    raw["sim"]["stride"] = 1
    return nesc.run(config_from_dict(raw, "fig1_inesc_fine"))


@pytest.fixture(scope="session")
def inesc_run_quarter():
    """100 s run with all dither amplitudes halved to 0.25."""
    raw = three_agent_raw()
    for agent in raw["controller"]["agents"]:
        agent["dither"]["amplitude"] = 0.25
    return nesc.run(config_from_dict(raw, "fig1_inesc_quarter"))


@pytest.fixture(scope="session")
def baseline_run(baseline_config):
    return nesc.run(baseline_config)


@pytest.fixture(scope="session")
def tau_star(sec4_game):
    return nesc.recommend_tau(sec4_game, beta=1.0)


@pytest.fixture(scope="session")
def fullinfo_tau_star_config(tau_star):
    raw = load_raw(nesc.bundled_config_path("fig1_fullinfo"))
    for agent in raw["controller"]["agents"]:
        agent["tau"] = tau_star
    return config_from_dict(raw, "fig1_fullinfo_tau_star")


@pytest.fixture(scope="session")
def fullinfo_run(fullinfo_tau_star_config):
    return nesc.run(fullinfo_tau_star_config)


def zero_game(N=3):
    """Game with all costs identically zero."""
    Z = np.zeros((N, N))
    return nesc.GameModel.quadratic(
        [np.eye(1)] * N, [Z] * N, [np.zeros(N)] * N)


def decoupled_game(centers):
    """h_i = (x_i - c_i)^2 with B = I; the NE is u* = centers."""
    N = len(centers)
    Qs, qs, rs = [], [], []
    for i, c in enumerate(centers):
        Q = np.zeros((N, N))
        Q[i, i] = 2.0
        q = np.zeros(N)
        q[i] = -2.0 * c
        Qs.append(Q)
        qs.append(q)
        rs.append(c * c)
    return nesc.GameModel.quadratic([np.eye(1)] * N, Qs, qs, rs)
