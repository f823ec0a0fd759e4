"""Per-agent time-varying parameter estimation for the limited-information law.

Each agent sees only its own cost output y_i and input u_i. The output
derivative admits the parametrization

    ydot_i = theta_i^0 + theta_i^1 u_i = [1, u_i'] theta_i,

where theta_i = [theta_i^0, theta_i^1'] collects the drift term and the
input sensitivity. The estimator states evolve as

    yhat_dot   = [1, u'] theta_hat + K e + c' theta_hat_dot,   e = y - yhat
    c_dot      = -K c + [1, u']'
    etahat_dot = -K etahat
    Sigma_dot  = c c' - k_T Sigma + sigma I
    theta_dot  = Proj(theta_hat, Sigma^{-1} (c (e - etahat) - sigma theta_hat))

with Proj the projection onto the tangent cone of the box Theta at
theta_hat. theta_hat_dot is evaluated first; yhat_dot uses it.

Indexing convention, fixed project-wide: component 0 of theta is theta^0,
components 1..m_i are theta^1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DiagnosticError, InvariantError
from .game import GameModel, grad_full

__all__ = [
    "EstimatorState",
    "EstimatorParams",
    "true_theta",
    "project_tangent_cone",
    "estimator_derivative",
]

DEFAULT_THETA_BOUND = 1e4
SIGMA_CONDITION_LIMIT = 1e12


@dataclass
class EstimatorState:
    """Estimator state bundle for one agent (regressor dimension k = m_i + 1)."""

    y_hat: float
    c: np.ndarray
    eta_hat: float
    Sigma: np.ndarray
    theta_hat: np.ndarray

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        self.theta_hat = np.atleast_1d(np.asarray(self.theta_hat, dtype=float))
        self.Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        k = self.c.shape[0]
        if self.theta_hat.shape != (k,) or self.Sigma.shape != (k, k):
            raise ConfigError(
                f"inconsistent estimator dimensions: c {self.c.shape}, "
                f"theta_hat {self.theta_hat.shape}, Sigma {self.Sigma.shape}"
            )

    @property
    def k(self):
        return self.c.shape[0]

    @classmethod
    def initial(cls, m_i: int, alpha1: float) -> "EstimatorState":
        """Zero state with Sigma(0) = alpha1 * I."""
        k = m_i + 1
        return cls(
            y_hat=0.0,
            c=np.zeros(k),
            eta_hat=0.0,
            Sigma=alpha1 * np.eye(k),
            theta_hat=np.zeros(k),
        )


@dataclass(frozen=True)
class EstimatorParams:
    """Per-agent estimator gains and the parameter box Theta.

    theta_lo/theta_hi bound each component of theta_hat; defaults are the
    wide box [-1e4, 1e4]^{m_i+1}, which never binds in the bundled example.
    """

    K: float
    k_T: float
    sigma: float
    alpha1: float
    theta_lo: np.ndarray
    theta_hi: np.ndarray

    def __post_init__(self):
        for name in ("K", "k_T", "sigma", "alpha1"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"estimator gain {name} must be positive")
        lo = np.atleast_1d(np.asarray(self.theta_lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.theta_hi, dtype=float))
        if lo.shape != hi.shape:
            raise ConfigError("theta_box bounds have mismatched shapes")
        if np.any(lo >= hi):
            raise ConfigError("theta_box is empty (lower bound >= upper bound)")
        object.__setattr__(self, "theta_lo", lo)
        object.__setattr__(self, "theta_hi", hi)

    @classmethod
    def create(cls, m_i: int, K: float, k_T: float, sigma: float, alpha1: float,
               theta_box=None) -> "EstimatorParams":
        k = m_i + 1
        if theta_box is None:
            lo = np.full(k, -DEFAULT_THETA_BOUND)
            hi = np.full(k, DEFAULT_THETA_BOUND)
        else:
            box = np.asarray(theta_box, dtype=float)
            if box.shape != (k, 2):
                raise ConfigError(
                    f"theta_box must have shape ({k}, 2), got {box.shape}"
                )
            lo, hi = box[:, 0].copy(), box[:, 1].copy()
        return cls(K=K, k_T=k_T, sigma=sigma, alpha1=alpha1,
                   theta_lo=lo, theta_hi=hi)


def true_theta(game: GameModel, x, u, i: int) -> np.ndarray:
    """Ground-truth parameter vector (theta_i^0, theta_i^1) from full state.

    By the chain rule along the plant dynamics,

        ydot_i = sum_j grad_{x_j} h_i(x)' (-x_j + B_j u_j),

    so theta_i^0 = -sum_j grad_{x_j} h_i(x)' x_j
                   + sum_{j != i} grad_{x_j} h_i(x)' B_j u_j
    and theta_i^1 = grad_{x_i} h_i(x)' B_i.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    g = grad_full(game, i, x)
    theta0 = -g @ x
    for j in range(game.N):
        gj = g[game.x_slice(j)]
        if j != i:
            theta0 += gj @ (game.B_blocks[j] @ u[game.u_slice(j)])
    theta1 = game.B_blocks[i].T @ g[game.x_slice(i)]
    return np.concatenate([[theta0], theta1])


def project_tangent_cone(theta_hat, v, theta_lo, theta_hi,
                         strict: bool = True) -> np.ndarray:
    """Project the velocity v onto the tangent cone of the box at theta_hat.

    A component is zeroed iff it points outward at an active bound; interior
    components pass through unchanged. With strict=True a point outside the
    box raises InvariantError; the integrator uses strict=False because RK4
    stage states may leave the box by O(step^2) before the post-step clamp,
    and an out-of-box component then counts as sitting at its bound.
    """
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    v = np.array(v, dtype=float)
    lo = np.atleast_1d(np.asarray(theta_lo, dtype=float))
    hi = np.atleast_1d(np.asarray(theta_hi, dtype=float))
    if strict and (np.any(theta_hat < lo) or np.any(theta_hat > hi)):
        raise InvariantError(
            f"theta_hat {theta_hat} outside its box [{lo}, {hi}]"
        )
    out = v.copy()
    out[(theta_hat <= lo) & (v < 0.0)] = 0.0
    out[(theta_hat >= hi) & (v > 0.0)] = 0.0
    return out


def estimator_derivative(s: EstimatorState, p: EstimatorParams,
                         y_i: float, u_i) -> EstimatorState:
    """Time derivatives of all five estimator components (as a state bundle).

    theta_hat_dot is computed first; yhat_dot then uses it through the
    c' theta_hat_dot feedforward term.
    """
    u_i = np.atleast_1d(np.asarray(u_i, dtype=float))
    k = s.k
    if u_i.shape != (k - 1,):
        raise ConfigError(f"u_i has shape {u_i.shape}, expected ({k - 1},)")
    if np.linalg.cond(s.Sigma) > SIGMA_CONDITION_LIMIT:
        raise DiagnosticError(
            f"Sigma numerically singular (condition number > {SIGMA_CONDITION_LIMIT:g})"
        )
    reg = np.concatenate([[1.0], u_i])
    e = float(y_i) - s.y_hat
    raw = np.linalg.solve(s.Sigma, s.c * (e - s.eta_hat) - p.sigma * s.theta_hat)
    theta_dot = project_tangent_cone(s.theta_hat, raw, p.theta_lo, p.theta_hi,
                                     strict=False)
    y_hat_dot = reg @ s.theta_hat + p.K * e + s.c @ theta_dot
    c_dot = -p.K * s.c + reg
    eta_hat_dot = -p.K * s.eta_hat
    Sigma_dot = np.outer(s.c, s.c) - p.k_T * s.Sigma + p.sigma * np.eye(k)
    return EstimatorState(
        y_hat=y_hat_dot, c=c_dot, eta_hat=eta_hat_dot,
        Sigma=Sigma_dot, theta_hat=theta_dot,
    )
