"""Ground-truth oracles and theorem diagnostics.

Nash equilibrium computation, strong-monotonicity certification, the
integral-gain threshold tau*, persistence-of-excitation monitoring and
Lyapunov-value evaluation along recorded trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AssumptionViolationError,
    ConfigError,
    DiagnosticError,
    NescError,
    SolverError,
)
from .estimator import true_theta
from .game import (
    GameModel,
    pseudo_gradient_u,
    quadratic_structure,
)
from .plant import steady_state

__all__ = [
    "NashSolution",
    "MonotonicityCertificate",
    "PEReport",
    "LyapunovTrace",
    "solve_ne",
    "check_monotonicity",
    "recommend_tau",
    "pe_monitor",
    "lyapunov_trace",
    "fullinfo_closed_loop",
    "is_hurwitz",
]

NE_RESIDUAL_TOL = 1e-10
NEWTON_MAX_ITER = 200


@dataclass(frozen=True)
class NashSolution:
    """Nash equilibrium input u*, its steady state x* = pi(u*), and ||F(u*)||."""

    u_star: np.ndarray
    x_star: np.ndarray
    residual: float

    def to_dict(self):
        return {
            "u_star": self.u_star.tolist(),
            "x_star": self.x_star.tolist(),
            "residual": self.residual,
        }


@dataclass(frozen=True)
class MonotonicityCertificate:
    """Strong-monotonicity constant of the pseudo-gradient F.

    For quadratic games mu is the exact minimum eigenvalue of the symmetric
    part of the constant Jacobian; otherwise a sampled lower estimate with
    certified=False.
    """

    mu: float
    is_strongly_monotone: bool
    certified: bool

    def to_dict(self):
        return {
            "mu": self.mu,
            "is_strongly_monotone": self.is_strongly_monotone,
            "certified": self.certified,
        }


def game_jacobian(game: GameModel) -> np.ndarray:
    """Constant Jacobian J = B' J_x B of F for an all-quadratic game."""
    J_x, _ = quadratic_structure(game)
    B = game.B
    return B.T @ J_x @ B


def solve_ne(game: GameModel) -> NashSolution:
    """Compute the Nash equilibrium u* with F(u*) = 0.

    Quadratic games reduce to one linear solve; otherwise a damped Newton
    iteration with finite-difference Jacobians is used. The residual must
    come out below 1e-10.
    """
    if game.is_quadratic():
        J_x, g0 = quadratic_structure(game)
        B = game.B
        J = B.T @ J_x @ B
        rhs = -B.T @ g0
        try:
            u_star = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError as exc:
            raise NescError(
                "internal inconsistency: singular pseudo-gradient Jacobian "
                "contradicts strong monotonicity"
            ) from exc
    else:
        u_star = _newton_zero(game)
    residual = float(np.linalg.norm(pseudo_gradient_u(game, u_star)))
    if residual > NE_RESIDUAL_TOL:
        raise SolverError(f"NE residual {residual:.3g} above {NE_RESIDUAL_TOL:g}")
    return NashSolution(
        u_star=u_star,
        x_star=steady_state(game.B, u_star),
        residual=residual,
    )


def _newton_zero(game: GameModel) -> np.ndarray:
    u = np.zeros(game.m)
    f = pseudo_gradient_u(game, u)
    for _ in range(NEWTON_MAX_ITER):
        if np.linalg.norm(f) <= 0.1 * NE_RESIDUAL_TOL:
            return u
        J = _fd_jacobian(lambda v: pseudo_gradient_u(game, v), u)
        try:
            step = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular Jacobian in Newton iteration") from exc
        lam = 1.0
        norm0 = np.linalg.norm(f)
        while lam > 1e-8:
            u_try = u + lam * step
            f_try = pseudo_gradient_u(game, u_try)
            if np.linalg.norm(f_try) < norm0:
                u, f = u_try, f_try
                break
            lam *= 0.5
        else:
            raise SolverError("Newton line search stalled")
    raise SolverError(f"Newton did not converge in {NEWTON_MAX_ITER} iterations")


def _fd_jacobian(fn, u, h=1e-7):
    f0 = fn(u)
    J = np.empty((f0.shape[0], u.shape[0]))
    for k in range(u.shape[0]):
        step = h * (1.0 + abs(u[k]))
        up = u.copy()
        up[k] += step
        J[:, k] = (fn(up) - f0) / step
    return J


def check_monotonicity(game: GameModel, samples: int = 1000,
                       rng=None) -> MonotonicityCertificate:
    """Certify (quadratic) or estimate (generic) strong monotonicity of F.

    Quadratic case: mu = lambda_min((J + J') / 2) exactly. Generic case:
    minimum of (F(u)-F(v))'(u-v)/||u-v||^2 over random pairs, reported as a
    non-certified estimate.
    """
    if game.is_quadratic():
        J = game_jacobian(game)
        mu = float(np.linalg.eigvalsh(0.5 * (J + J.T))[0])
        return MonotonicityCertificate(mu=mu, is_strongly_monotone=mu > 0.0,
                                       certified=True)
    rng = np.random.default_rng(0) if rng is None else rng
    mu = np.inf
    for _ in range(samples):
        u = rng.standard_normal(game.m)
        v = rng.standard_normal(game.m)
        du = u - v
        denom = du @ du
        if denom < 1e-16:
            continue
        val = (pseudo_gradient_u(game, u) - pseudo_gradient_u(game, v)) @ du / denom
        mu = min(mu, float(val))
    return MonotonicityCertificate(mu=mu, is_strongly_monotone=mu > 0.0,
                                   certified=False)


def recommend_tau(game: GameModel, beta: float = 1.0) -> float:
    """Integral time-constant threshold tau* for guaranteed convergence.

        tau* = ((L + beta ||B|| L_F)^2 + 4 L beta ||B||) / (4 beta mu)

    with L the Lipschitz constant of B' o F_x, L_F that of F, both exact
    spectral norms of the constant Jacobians of a quadratic game.
    """
    if beta <= 0:
        raise ConfigError("beta must be positive")
    if not game.is_quadratic():
        raise ConfigError(
            "recommend_tau requires a quadratic game (global Lipschitz "
            "constants are not computable otherwise)"
        )
    cert = check_monotonicity(game)
    if cert.mu <= 0:
        raise AssumptionViolationError(
            f"pseudo-gradient is not strongly monotone (mu = {cert.mu:.3g})"
        )
    J_x, _ = quadratic_structure(game)
    B = game.B
    L = float(np.linalg.norm(B.T @ J_x, 2))
    L_F = float(np.linalg.norm(game_jacobian(game), 2))
    norm_B = float(np.linalg.norm(B, 2))
    return ((L + beta * norm_B * L_F) ** 2 + 4.0 * L * beta * norm_B) / (
        4.0 * beta * cert.mu
    )


@dataclass(frozen=True)
class PEReport:
    """Windowed Gram-integral spectrum of a regressor-filter trace.

    min_eigs[t] is the minimum eigenvalue of int_{t}^{t+T} c c' over the
    window starting at sample t; alpha_squared is their infimum, the
    persistence-of-excitation level.
    """

    times: np.ndarray
    min_eigs: np.ndarray
    alpha_squared: float
    window: float


def pe_monitor(c_trace, dt: float, T_window: float) -> PEReport:
    """Minimum eigenvalue of the sliding-window Gram integral of c c'.

    The integral uses the trapezoid rule at the recording step dt. The
    window must fit inside the trace.
    """
    c = np.asarray(c_trace, dtype=float)
    if c.ndim != 2:
        raise ConfigError("c_trace must be 2-d (samples x components)")
    S = c.shape[0]
    w = int(round(T_window / dt))
    if w < 1 or w >= S:
        raise ConfigError(
            f"window of {T_window} s ({w} samples) does not fit a trace of {S} samples"
        )
    outer = c[:, :, None] * c[:, None, :]
    cum = np.zeros_like(outer)
    np.cumsum(0.5 * (outer[1:] + outer[:-1]) * dt, axis=0, out=cum[1:])
    gram = cum[w:] - cum[:-w]
    gram = 0.5 * (gram + np.swapaxes(gram, 1, 2))
    eigs = np.linalg.eigvalsh(gram)[:, 0]
    times = np.arange(eigs.shape[0]) * dt
    return PEReport(times=times, min_eigs=eigs,
                    alpha_squared=float(eigs.min()), window=w * dt)


@dataclass(frozen=True)
class LyapunovTrace:
    """Per-sample Lyapunov values along a recorded run.

    V and T are the plant and NE-error quadratic forms; W_est collects the
    estimation terms (zero for the full-information variant). W = V + T is
    the full-information candidate; L = W_est + V + T the composite one.
    The approximate flag marks traces whose eta reconstruction used
    finite-differenced parameter derivatives.
    """

    t: np.ndarray
    W_est: np.ndarray
    V: np.ndarray
    T: np.ndarray
    beta: float
    approximate: bool = False

    @property
    def W(self) -> np.ndarray:
        return self.V + self.T

    @property
    def L(self) -> np.ndarray:
        return self.W_est + self.V + self.T


def _v_term(game, x_s, u_s, beta):
    diff = x_s - u_s @ game.B.T
    return 0.5 * beta * np.sum(diff * diff, axis=1)


def _t_term(tau_channels, u_s, u_star):
    tau_min = tau_channels.min()
    du = u_s - u_star
    return 0.5 / tau_min * np.sum(du * du * tau_channels, axis=1)


def lyapunov_trace(result, game: GameModel, ne: NashSolution,
                   beta: float = 1.0) -> LyapunovTrace:
    """Evaluate the Lyapunov candidates along a recorded trajectory.

    Full information: W = T(u) + V(x, u). Limited information: adds the
    estimation terms sum_i (eta_tilde_i^2 + theta_tilde_i' Sigma_i
    theta_tilde_i) / 2, where theta_tilde = theta_hat - theta_true and the
    unestimated auxiliary eta is co-integrated from
    etadot_i = -K_i eta_i - c_i' thetadot_i with finite-differenced
    thetadot (hence approximate=True).
    """
    if beta <= 0:
        raise ConfigError("beta must be positive")
    variant = result.variant
    t = result.t
    x_s = result.x
    if variant == "fullinfo":
        u_s = result.u_hat
        tau_ch = result.tau_channels
        V = _v_term(game, x_s, u_s, beta)
        T = _t_term(tau_ch, u_s, ne.u_star)
        return LyapunovTrace(t=t, W_est=np.zeros_like(V), V=V, T=T, beta=beta)
    if variant != "inesc":
        raise DiagnosticError(
            f"no Lyapunov candidate is defined for the '{variant}' variant"
        )
    u_hat = result.u_hat
    u_s = result.u
    tau_ch = result.tau_channels
    V = _v_term(game, x_s, u_hat, beta)
    T = _t_term(tau_ch, u_hat, ne.u_star)
    S = t.shape[0]
    W_est = np.zeros(S)
    dt = float(t[1] - t[0]) if S > 1 else 0.0
    for i in range(result.layout.N):
        theta_hat = result.theta_hat(i)
        Sigma = result.Sigma(i)
        c = result.c(i)
        eta_hat = result.eta_hat(i)
        theta = np.stack([true_theta(game, x_s[s], u_s[s], i) for s in range(S)])
        theta_dot = np.gradient(theta, dt, axis=0) if S > 1 else np.zeros_like(theta)
        eta = _cointegrate_eta(result.est_K(i), c, theta_dot, dt)
        eta_t = eta_hat - eta
        theta_t = theta_hat - theta
        quad = np.einsum("sj,sjk,sk->s", theta_t, Sigma, theta_t)
        W_est += 0.5 * eta_t ** 2 + 0.5 * quad
    return LyapunovTrace(t=t, W_est=W_est, V=V, T=T, beta=beta, approximate=True)


def _cointegrate_eta(K, c, theta_dot, dt):
    """Exponential-trapezoid integration of etadot = -K eta + f, eta(0) = 0."""
    f = -np.sum(c * theta_dot, axis=1)
    S = f.shape[0]
    eta = np.zeros(S)
    if S < 2:
        return eta
    E = np.exp(-K * dt)
    # exact response to a forcing linear between samples
    phi1 = (1.0 - E) / K
    phi2 = (dt - phi1) / (K * dt)
    for s in range(S - 1):
        eta[s + 1] = E * eta[s] + f[s] * phi1 + (f[s + 1] - f[s]) * phi2
    return eta


def fullinfo_closed_loop(game: GameModel, tau):
    """Affine closed loop zdot = A z + b of plant + full-information law.

    State ordering is [x; u]. Only defined for quadratic games, where the
    loop is affine with unique equilibrium (pi(u*), u*).
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if tau.shape != (game.N,):
        raise ConfigError(f"tau has shape {tau.shape}, expected ({game.N},)")
    if np.any(tau <= 0):
        raise ConfigError("tau must be positive")
    J_x, g0 = quadratic_structure(game)
    B = game.B
    n, m = game.n, game.m
    tau_ch = np.repeat(tau, game.m_dims)
    A = np.zeros((n + m, n + m))
    A[:n, :n] = -np.eye(n)
    A[:n, n:] = B
    A[n:, :n] = -(B.T @ J_x) / tau_ch[:, None]
    b = np.concatenate([np.zeros(n), -(B.T @ g0) / tau_ch])
    return A, b


def is_hurwitz(A) -> bool:
    """True iff every eigenvalue of A has a strictly negative real part."""
    return bool(np.all(np.linalg.eigvals(np.asarray(A, dtype=float)).real < 0.0))
