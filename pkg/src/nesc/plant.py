"""Per-agent LTI subsystem xdot_i = -x_i + B_i u_i and its steady-state map.

Only this plant class is supported; the state matrix is fixed at -I. Under
a constant input the subsystem settles to pi_i(u_i) = B_i u_i, so the
stacked steady-state map is pi(u) = B u.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

__all__ = ["plant_derivative", "steady_state"]


def plant_derivative(x_i, B_i, u_i) -> np.ndarray:
    """Time derivative -x_i + B_i u_i of one agent's plant state."""
    x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
    u_i = np.atleast_1d(np.asarray(u_i, dtype=float))
    B_i = np.atleast_2d(np.asarray(B_i, dtype=float))
    if B_i.shape != (x_i.shape[0], u_i.shape[0]):
        raise ConfigError(
            f"B_i has shape {B_i.shape}, expected ({x_i.shape[0]}, {u_i.shape[0]})"
        )
    return -x_i + B_i @ u_i


def steady_state(B, u) -> np.ndarray:
    """Stacked steady state pi(u) = B u for the block-diagonal input matrix B."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if B.shape[1] != u.shape[0]:
        raise ConfigError(f"B has {B.shape[1]} columns but u has dimension {u.shape[0]}")
    return B @ u
