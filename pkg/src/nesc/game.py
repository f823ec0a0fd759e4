"""Game definition: per-agent costs, gradients, and pseudo-gradient maps.

Each agent i has a cost h_i acting on the full stacked state x of all
agents. The two pseudo-gradients are

    F_x(x) = [grad_{x_1} h_1(x); ...; grad_{x_N} h_N(x)]      (state space)
    F(u)   = B^T F_x(B u)                                      (input space)

where B = diag(B_1, ..., B_N) and pi(u) = B u is the steady-state map of
the plant. A Nash equilibrium is a zero of F.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError

__all__ = [
    "QuadraticCost",
    "CallbackCost",
    "GameModel",
    "eval_cost",
    "grad_xi",
    "grad_full",
    "pseudo_gradient_x",
    "pseudo_gradient_u",
]


def _finite_diff_gradient(fn, x):
    """Central finite differences with per-component step 1e-6 * (1 + |x_k|)."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        h = 1e-6 * (1.0 + abs(x[k]))
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (fn(xp) - fn(xm)) / (2.0 * h)
    return g


class QuadraticCost:
    """Cost h(x) = 0.5 x'Qx + q'x + r with exact analytic gradient.

    Q is symmetrized on construction; the gradient is sym(Q) x + q, which
    leaves the cost value unchanged.
    """

    def __init__(self, Q, q, r=0.0):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        q = np.atleast_1d(np.asarray(q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ConfigError(f"cost Q must be square, got {Q.shape}")
        if q.shape != (Q.shape[0],):
            raise ConfigError(
                f"cost q has dimension {q.shape[0]}, expected {Q.shape[0]}"
            )
        self.Q_sym = 0.5 * (Q + Q.T)
        self.q = q
        self.r = float(r)
        self.Q_sym.flags.writeable = False
        self.q.flags.writeable = False

    @property
    def dim(self):
        return self.q.shape[0]

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * x @ self.Q_sym @ x + self.q @ x + self.r

    def gradient(self, x):
        return self.Q_sym @ np.asarray(x, dtype=float) + self.q


class CallbackCost:
    """Differentiable cost given as a callable, with optional gradient.

    When no gradient callback is supplied, central finite differences are
    used (step 1e-6 scaled by 1 + |x| per component).
    """

    def __init__(self, fn: Callable, gradient: Callable | None = None, dim: int | None = None):
        if dim is None or dim < 1:
            raise ConfigError("CallbackCost requires the stacked dimension")
        self.fn = fn
        self._gradient = gradient
        self._dim = int(dim)

    @property
    def dim(self):
        return self._dim

    def value(self, x):
        return float(self.fn(np.asarray(x, dtype=float)))

    def gradient(self, x):
        if self._gradient is not None:
            g = np.atleast_1d(np.asarray(self._gradient(x), dtype=float))
            if g.shape != (self._dim,):
                raise ConfigError(
                    f"cost gradient returned shape {g.shape}, expected ({self._dim},)"
                )
            return g
        return _finite_diff_gradient(self.value, x)


@dataclass(frozen=True)
class GameModel:
    """Immutable N-agent game: input matrices B_i plus one cost per agent.

    All operations on a GameModel are pure; instances are safe to share
    across concurrently running simulations.
    """

    B_blocks: tuple
    costs: tuple
    n_dims: tuple = field(init=False)
    m_dims: tuple = field(init=False)

    def __post_init__(self):
        blocks = tuple(np.atleast_2d(np.asarray(B, dtype=float)) for B in self.B_blocks)
        if len(blocks) == 0:
            raise ConfigError("game needs at least one agent")
        if len(blocks) != len(self.costs):
            raise ConfigError(
                f"{len(blocks)} B blocks but {len(self.costs)} costs"
            )
        for B in blocks:
            B.flags.writeable = False
        object.__setattr__(self, "B_blocks", blocks)
        object.__setattr__(self, "costs", tuple(self.costs))
        object.__setattr__(self, "n_dims", tuple(B.shape[0] for B in blocks))
        object.__setattr__(self, "m_dims", tuple(B.shape[1] for B in blocks))
        n = sum(self.n_dims)
        for i, cost in enumerate(self.costs):
            if cost.dim != n:
                raise ConfigError(
                    f"agent {i} cost has dimension {cost.dim}, stacked state is {n}"
                )
        self._validate_callback_gradients()

    def _validate_callback_gradients(self):
        # Spot-check user-supplied gradients against finite differences at
        # 10 seeded random points; a mismatch is a wiring bug, not noise.
        rng = np.random.default_rng(0)
        for i, cost in enumerate(self.costs):
            if not (isinstance(cost, CallbackCost) and cost._gradient is not None):
                continue
            for _ in range(10):
                x = rng.standard_normal(self.n)
                g = cost.gradient(x)
                g_fd = _finite_diff_gradient(cost.value, x)
                err = np.linalg.norm(g - g_fd)
                if err > 1e-4 * (1.0 + np.linalg.norm(g_fd)):
                    raise ConfigError(
                        f"agent {i} gradient callback disagrees with finite "
                        f"differences (error {err:.3g}) at x={x}"
                    )

    @property
    def N(self):
        return len(self.B_blocks)

    @property
    def n(self):
        return sum(self.n_dims)

    @property
    def m(self):
        return sum(self.m_dims)

    @property
    def n_offsets(self):
        return np.concatenate([[0], np.cumsum(self.n_dims)])

    @property
    def m_offsets(self):
        return np.concatenate([[0], np.cumsum(self.m_dims)])

    @property
    def B(self):
        """Dense block-diagonal input matrix (n x m)."""
        B = np.zeros((self.n, self.m))
        no, mo = self.n_offsets, self.m_offsets
        for i, blk in enumerate(self.B_blocks):
            B[no[i]:no[i + 1], mo[i]:mo[i + 1]] = blk
        return B

    def is_quadratic(self):
        return all(isinstance(c, QuadraticCost) for c in self.costs)

    def x_slice(self, i):
        no = self.n_offsets
        return slice(no[i], no[i + 1])

    def u_slice(self, i):
        mo = self.m_offsets
        return slice(mo[i], mo[i + 1])

    @classmethod
    def quadratic(cls, B_blocks, Q_list, q_list, r_list=None):
        """Build an all-quadratic game from per-agent (Q, q, r) data."""
        if r_list is None:
            r_list = [0.0] * len(Q_list)
        costs = tuple(QuadraticCost(Q, q, r) for Q, q, r in zip(Q_list, q_list, r_list))
        return cls(B_blocks=tuple(B_blocks), costs=costs)


def _check_agent_index(game, i):
    if not 0 <= i < game.N:
        raise ConfigError(f"agent index {i} out of range for {game.N} agents")


def _check_stacked(game, x, dim, name):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (dim,):
        raise ConfigError(f"{name} has shape {x.shape}, expected ({dim},)")
    return x


def eval_cost(game: GameModel, i: int, x) -> float:
    """Cost output y_i = h_i(x) for agent i at the stacked state x."""
    _check_agent_index(game, i)
    x = _check_stacked(game, x, game.n, "x")
    return float(game.costs[i].value(x))


def grad_full(game: GameModel, i: int, x) -> np.ndarray:
    """Full gradient of h_i with respect to the whole stacked state (n,)."""
    _check_agent_index(game, i)
    x = _check_stacked(game, x, game.n, "x")
    return np.asarray(game.costs[i].gradient(x), dtype=float)


def grad_xi(game: GameModel, i: int, x) -> np.ndarray:
    """Partial gradient grad_{x_i} h_i(x), the agent's own block (n_i,)."""
    return grad_full(game, i, x)[game.x_slice(i)]


def pseudo_gradient_x(game: GameModel, x) -> np.ndarray:
    """Stacked partial gradients F_x(x) = [grad_{x_i} h_i(x)]_i (n,)."""
    x = _check_stacked(game, x, game.n, "x")
    out = np.empty(game.n)
    for i in range(game.N):
        out[game.x_slice(i)] = game.costs[i].gradient(x)[game.x_slice(i)]
    return out


def pseudo_gradient_u(game: GameModel, u) -> np.ndarray:
    """Steady-state pseudo-gradient F(u) = B^T F_x(B u) (m,)."""
    u = _check_stacked(game, u, game.m, "u")
    B = game.B
    return B.T @ pseudo_gradient_x(game, B @ u)


def quadratic_structure(game: GameModel):
    """Affine structure (J_x, g0) with F_x(x) = J_x x + g0.

    Only defined for all-quadratic games, where each agent's partial
    gradient is an affine function of the stacked state.
    """
    if not game.is_quadratic():
        raise ConfigError("quadratic_structure requires an all-quadratic game")
    J_x = np.empty((game.n, game.n))
    g0 = np.empty(game.n)
    for i in range(game.N):
        rows = game.x_slice(i)
        J_x[rows, :] = game.costs[i].Q_sym[rows, :]
        g0[rows] = game.costs[i].q[rows]
    return J_x, g0
