"""The three control laws and dither generation.

Full information:   udot_i = -(1/tau_i) B_i' grad_{x_i} h_i(x)
Limited information (integral NE seeking):
                    u_i = uhat_i + d_i(t),  uhatdot_i = -(1/tau_i) theta_hat_i^1
Perturbation baseline (washout + low-pass extremum seeking, scalar inputs):
                    etadot_i  = -omega_h^i eta_i + omega_h^i y_i
                    xidot_i   = -omega_l^i xi_i + omega_l^i (y_i - eta_i) A_i sin(omega_i t)
                    uhatdot_i = -k_i A_i xi_i,   u_i = uhat_i + A_i sin(omega_i t)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DiagnosticError
from .estimator import estimator_derivative
from .game import GameModel, pseudo_gradient_x

__all__ = [
    "DitherSpec",
    "FullInfoController",
    "InescController",
    "BaselineController",
    "dither",
    "fullinfo_derivative",
    "inesc_derivative",
    "baseline_derivative",
    "baseline_input",
]


@dataclass(frozen=True)
class DitherSpec:
    """Sinusoidal probe per input channel: amplitude * sin(frequency*t + phase)."""

    amplitude: np.ndarray
    frequency: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        amp = np.atleast_1d(np.asarray(self.amplitude, dtype=float))
        freq = np.atleast_1d(np.asarray(self.frequency, dtype=float))
        ph = np.atleast_1d(np.asarray(self.phase, dtype=float))
        width = max(amp.shape[0], freq.shape[0], ph.shape[0])
        amp, freq, ph = (np.broadcast_to(a, (width,)).copy() for a in (amp, freq, ph))
        if np.any(amp < 0):
            raise ConfigError("dither amplitude must be >= 0")
        if np.any((amp > 0) & (freq <= 0)):
            raise ConfigError("dither frequency must be positive where amplitude > 0")
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "frequency", freq)
        object.__setattr__(self, "phase", ph)

    @property
    def channels(self):
        return self.amplitude.shape[0]

    @classmethod
    def zero(cls, channels: int) -> "DitherSpec":
        return cls(np.zeros(channels), np.ones(channels), np.zeros(channels))


def dither(spec: DitherSpec, t: float) -> np.ndarray:
    """Probe signal d(t), one value per input channel."""
    return spec.amplitude * np.sin(spec.frequency * t + spec.phase)


def _check_tau(tau, N):
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if tau.shape != (N,):
        raise ConfigError(f"tau has shape {tau.shape}, expected ({N},)")
    if np.any(tau <= 0):
        raise ConfigError("tau must be positive")
    return tau


@dataclass
class FullInfoController:
    """Integral gradient-play controller using exact partial gradients."""

    tau: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.u = np.atleast_1d(np.asarray(self.u, dtype=float))
        self.tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        if np.any(self.tau <= 0):
            raise ConfigError("tau must be positive")


def fullinfo_derivative(ctrl: FullInfoController, game: GameModel, x) -> np.ndarray:
    """udot = -tau^{-1} B' F_x(x), with tau_i applied to agent i's channels."""
    tau = _check_tau(ctrl.tau, game.N)
    fx = pseudo_gradient_x(game, x)
    udot = np.empty(game.m)
    for i in range(game.N):
        g_i = game.B_blocks[i].T @ fx[game.x_slice(i)]
        udot[game.u_slice(i)] = -g_i / tau[i]
    return udot


@dataclass
class InescController:
    """Limited-information integral controller with per-agent estimators."""

    tau: np.ndarray
    u_hat: np.ndarray
    estimators: list
    est_params: list
    dither: list

    def __post_init__(self):
        self.tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        self.u_hat = np.atleast_1d(np.asarray(self.u_hat, dtype=float))
        if np.any(self.tau <= 0):
            raise ConfigError("tau must be positive")
        if not (len(self.estimators) == len(self.est_params) == len(self.dither)
                == self.tau.shape[0]):
            raise ConfigError("per-agent controller lists have mismatched lengths")

    def input_at(self, t: float, m_offsets) -> np.ndarray:
        """Applied input u(t) = u_hat + d(t), stacked over agents."""
        u = self.u_hat.copy()
        for i, spec in enumerate(self.dither):
            u[m_offsets[i]:m_offsets[i + 1]] += dither(spec, t)
        return u


def inesc_derivative(ctrl: InescController, y, t: float):
    """Derivatives (u_hat_dot, estimator derivative bundles) at time t.

    y holds the measured cost outputs, one per agent. Each agent's
    estimator is fed its own (y_i, u_i) with u_i = uhat_i + d_i(t);
    uhatdot_i = -(1/tau_i) theta_hat_i^1 (components 1.. of theta_hat_i).
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    N = len(ctrl.estimators)
    if y.shape != (N,):
        raise ConfigError(f"y has shape {y.shape}, expected ({N},)")
    m_dims = [s.k - 1 for s in ctrl.estimators]
    m_offsets = np.concatenate([[0], np.cumsum(m_dims)])
    u = ctrl.input_at(t, m_offsets)
    u_hat_dot = np.empty(ctrl.u_hat.shape[0])
    est_dots = []
    for i, (s, p) in enumerate(zip(ctrl.estimators, ctrl.est_params)):
        u_i = u[m_offsets[i]:m_offsets[i + 1]]
        try:
            est_dots.append(estimator_derivative(s, p, y[i], u_i))
        except DiagnosticError as exc:
            raise DiagnosticError(f"agent {i}: {exc}") from exc
        u_hat_dot[m_offsets[i]:m_offsets[i + 1]] = -s.theta_hat[1:] / ctrl.tau[i]
    return u_hat_dot, est_dots


@dataclass
class BaselineController:
    """Washout + low-pass perturbation controller; scalar input channels only."""

    omega_h: np.ndarray
    omega_l: np.ndarray
    omega: np.ndarray
    k: np.ndarray
    A: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    u_hat: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("omega_h", "omega_l", "omega", "k", "A", "eta", "xi", "u_hat"):
            arrays[name] = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            setattr(self, name, arrays[name])
        N = arrays["omega_h"].shape[0]
        for name, arr in arrays.items():
            if arr.shape != (N,):
                raise ConfigError(f"baseline field {name} has shape {arr.shape}, expected ({N},)")
        for name in ("omega_h", "omega_l", "omega", "A"):
            if np.any(arrays[name] <= 0):
                raise ConfigError(f"baseline {name} must be positive")

    @property
    def N(self):
        return self.omega_h.shape[0]


def baseline_input(ctrl: BaselineController, t: float) -> np.ndarray:
    """Applied input u(t) = u_hat + A sin(omega t), one scalar per agent."""
    return ctrl.u_hat + ctrl.A * np.sin(ctrl.omega * t)


def baseline_derivative(ctrl: BaselineController, y, t: float):
    """Derivatives (eta_dot, xi_dot, u_hat_dot) of the baseline filters."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (ctrl.N,):
        raise ConfigError(f"y has shape {y.shape}, expected ({ctrl.N},)")
    probe = ctrl.A * np.sin(ctrl.omega * t)
    eta_dot = -ctrl.omega_h * ctrl.eta + ctrl.omega_h * y
    xi_dot = -ctrl.omega_l * ctrl.xi + ctrl.omega_l * (y - ctrl.eta) * probe
    u_hat_dot = -ctrl.k * ctrl.A * ctrl.xi
    return eta_dot, xi_dot, u_hat_dot
