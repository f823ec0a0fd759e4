"""Deterministic fixed-step integration of the composed closed loop.

The closed-loop state is a flat float64 vector whose layout depends on the
controller variant (see StateLayout). Quadratic games run through compiled
kernels; games with callback costs fall back to a pure-Python path that
composes the module-level operation functions. Both paths use classical
RK4, apply the same post-step hooks (theta_hat clamped to its box, Sigma
re-symmetrized) and abort with a partial trace on NaN/Inf.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .controllers import (
    BaselineController,
    FullInfoController,
    InescController,
    baseline_derivative,
    baseline_input,
    fullinfo_derivative,
    inesc_derivative,
)
from .errors import BlowUpError, ConfigError, DiagnosticError
from .estimator import EstimatorState
from .game import GameModel, eval_cost, quadratic_structure

__all__ = [
    "StateLayout",
    "ClosedLoopState",
    "SimResult",
    "ConvergenceMetrics",
    "step_rk4",
    "run",
    "convergence_metrics",
]

VARIANTS = ("fullinfo", "inesc", "baseline")


@dataclass(frozen=True)
class StateLayout:
    """Index map from the flat state vector to named components."""

    variant: str
    n: int
    m: int
    N: int
    n_offsets: np.ndarray
    m_offsets: np.ndarray
    est_offsets: np.ndarray | None
    k_dims: np.ndarray | None
    dim: int

    @classmethod
    def build(cls, variant: str, game: GameModel) -> "StateLayout":
        if variant not in VARIANTS:
            raise ConfigError(f"unknown controller variant '{variant}'")
        n, m, N = game.n, game.m, game.N
        est_offsets = None
        k_dims = None
        if variant == "fullinfo":
            dim = n + m
        elif variant == "inesc":
            k_dims = np.asarray([mi + 1 for mi in game.m_dims], dtype=np.int64)
            blocks = 2 + 2 * k_dims + k_dims ** 2
            est_offsets = n + m + np.concatenate([[0], np.cumsum(blocks)[:-1]])
            est_offsets = est_offsets.astype(np.int64)
            dim = int(n + m + blocks.sum())
        else:
            if any(mi != 1 for mi in game.m_dims):
                raise ConfigError(
                    "baseline controller supports scalar input channels only"
                )
            dim = n + 3 * N
        return cls(
            variant=variant, n=n, m=m, N=N,
            n_offsets=np.asarray(game.n_offsets, dtype=np.int64),
            m_offsets=np.asarray(game.m_offsets, dtype=np.int64),
            est_offsets=est_offsets, k_dims=k_dims, dim=dim,
        )

    @property
    def x_slice(self):
        return slice(0, self.n)

    @property
    def u_slice(self):
        """Controller integral state: u for fullinfo, u_hat otherwise."""
        if self.variant == "baseline":
            return slice(self.n + 2 * self.N, self.n + 3 * self.N)
        return slice(self.n, self.n + self.m)

    @property
    def eta_slice(self):
        if self.variant != "baseline":
            raise DiagnosticError("eta is a baseline state")
        return slice(self.n, self.n + self.N)

    @property
    def xi_slice(self):
        if self.variant != "baseline":
            raise DiagnosticError("xi is a baseline state")
        return slice(self.n + self.N, self.n + 2 * self.N)

    def _est_base(self, i):
        if self.variant != "inesc" or self.est_offsets is None:
            raise DiagnosticError("estimator states exist only for the inesc variant")
        return int(self.est_offsets[i]), int(self.k_dims[i])

    def y_hat_index(self, i):
        base, _ = self._est_base(i)
        return base

    def eta_hat_index(self, i):
        base, _ = self._est_base(i)
        return base + 1

    def c_slice(self, i):
        base, k = self._est_base(i)
        return slice(base + 2, base + 2 + k)

    def theta_slice(self, i):
        base, k = self._est_base(i)
        return slice(base + 2 + k, base + 2 + 2 * k)

    def sigma_slice(self, i):
        base, k = self._est_base(i)
        return slice(base + 2 + 2 * k, base + 2 + 2 * k + k * k)

    def component_name(self, idx: int) -> str:
        """Human-readable name of a flat state component."""
        if idx < self.n:
            return f"x[{idx}]"
        if self.variant == "fullinfo":
            return f"u[{idx - self.n}]"
        if self.variant == "baseline":
            local = idx - self.n
            if local < self.N:
                return f"eta[{local}]"
            if local < 2 * self.N:
                return f"xi[{local - self.N}]"
            return f"u_hat[{local - 2 * self.N}]"
        if idx < self.n + self.m:
            return f"u_hat[{idx - self.n}]"
        for i in range(self.N):
            base, k = self._est_base(i)
            if base <= idx < base + 2 + 2 * k + k * k:
                off = idx - base
                if off == 0:
                    return f"agent{i}.y_hat"
                if off == 1:
                    return f"agent{i}.eta_hat"
                if off < 2 + k:
                    return f"agent{i}.c[{off - 2}]"
                if off < 2 + 2 * k:
                    return f"agent{i}.theta_hat[{off - 2 - k}]"
                a, b = divmod(off - 2 - 2 * k, k)
                return f"agent{i}.Sigma[{a},{b}]"
        return f"state[{idx}]"


@dataclass(frozen=True)
class ClosedLoopState:
    """One simulated snapshot: time plus the flat state and its layout."""

    t: float
    z: np.ndarray
    layout: StateLayout

    @property
    def x(self):
        return self.z[self.layout.x_slice]

    @property
    def u_hat(self):
        return self.z[self.layout.u_slice]

    def estimator(self, i) -> EstimatorState:
        lay = self.layout
        k = int(lay.k_dims[i])
        return EstimatorState(
            y_hat=float(self.z[lay.y_hat_index(i)]),
            c=self.z[lay.c_slice(i)].copy(),
            eta_hat=float(self.z[lay.eta_hat_index(i)]),
            Sigma=self.z[lay.sigma_slice(i)].reshape(k, k).copy(),
            theta_hat=self.z[lay.theta_slice(i)].copy(),
        )


class SimResult:
    """Recorded trajectory with derived series accessors.

    Samples are uniform at the recording stride. States are stored as one
    (samples x dim) array in the layout's flat ordering.
    """

    def __init__(self, t, states, layout, game, config):
        self.t = t
        self.states = states
        self.layout = layout
        self.game = game
        self.config = config

    @property
    def variant(self):
        return self.layout.variant

    @property
    def samples(self):
        return self.t.shape[0]

    @property
    def x(self):
        return self.states[:, self.layout.x_slice]

    @property
    def u_hat(self):
        return self.states[:, self.layout.u_slice]

    @property
    def u(self):
        """Applied input over time (u_hat plus the probe, where present)."""
        u = self.u_hat.copy()
        if self.variant == "inesc":
            for i, spec in enumerate(self.config.dither):
                sl = slice(*self.layout.m_offsets[i:i + 2])
                u[:, sl] += spec.amplitude * np.sin(
                    np.outer(self.t, spec.frequency) + spec.phase
                )
        elif self.variant == "baseline":
            bl = self.config.baseline
            u += bl.A * np.sin(np.outer(self.t, bl.omega))
        return u

    @property
    def y(self):
        """Cost outputs y_i(t) = h_i(x(t)), shape (samples, N)."""
        X = self.x
        out = np.empty((self.samples, self.layout.N))
        if self.game.is_quadratic():
            for i, cost in enumerate(self.game.costs):
                out[:, i] = (
                    0.5 * np.einsum("sj,jk,sk->s", X, cost.Q_sym, X)
                    + X @ cost.q + cost.r
                )
        else:
            for s in range(self.samples):
                for i in range(self.layout.N):
                    out[s, i] = eval_cost(self.game, i, X[s])
        return out

    @property
    def tau_channels(self):
        if self.variant == "baseline":
            raise DiagnosticError("tau is not a baseline parameter")
        return np.repeat(self.config.tau, self.game.m_dims)

    def theta_hat(self, i):
        return self.states[:, self.layout.theta_slice(i)]

    def c(self, i):
        return self.states[:, self.layout.c_slice(i)]

    def Sigma(self, i):
        k = int(self.layout.k_dims[i])
        return self.states[:, self.layout.sigma_slice(i)].reshape(-1, k, k)

    def eta_hat(self, i):
        return self.states[:, self.layout.eta_hat_index(i)]

    def y_hat(self, i):
        return self.states[:, self.layout.y_hat_index(i)]

    def est_K(self, i):
        return self.config.est_params[i].K

    def state_at(self, s) -> ClosedLoopState:
        return ClosedLoopState(t=float(self.t[s]), z=self.states[s].copy(),
                               layout=self.layout)


def step_rk4(f: Callable, t: float, z: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step of zdot = f(t, z) from time t."""
    if h <= 0:
        raise ConfigError("step size must be positive")
    k1 = f(t, z)
    k2 = f(t + 0.5 * h, z + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, z + 0.5 * h * k2)
    k4 = f(t + h, z + h * k3)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _initial_state(config, layout) -> np.ndarray:
    z0 = np.zeros(layout.dim)
    z0[layout.x_slice] = config.x0
    z0[layout.u_slice] = config.u0
    if layout.variant == "inesc":
        for i, p in enumerate(config.est_params):
            k = int(layout.k_dims[i])
            z0[layout.sigma_slice(i)] = (p.alpha1 * np.eye(k)).ravel()
            z0[layout.theta_slice(i)] = np.clip(np.zeros(k), p.theta_lo, p.theta_hi)
    return z0


def _steps_and_output(config, layout):
    steps = int(round(config.horizon / config.step))
    if steps < 1:
        raise ConfigError("horizon shorter than one step")
    recorded = steps // config.stride + 1
    out = np.zeros((recorded, layout.dim))
    return steps, out


def run(config, force_python: bool = False) -> SimResult:
    """Integrate the configured closed loop and record the trajectory.

    Deterministic: identical configs produce bit-identical results. Raises
    BlowUpError (with the partial trace) if any state goes NaN/Inf and
    DiagnosticError if an estimator scaling matrix turns singular.
    """
    game = config.game
    layout = StateLayout.build(config.variant, game)
    z0 = _initial_state(config, layout)
    steps, out = _steps_and_output(config, layout)
    if game.is_quadratic() and not force_python:
        rec, status, bad, bad_step = _run_kernel(config, layout, game, z0, steps, out)
    else:
        rec, status, bad, bad_step = _run_python(config, layout, game, z0, steps, out)
    t = np.arange(rec) * (config.step * config.stride)
    result = SimResult(t=t, states=out[:rec], layout=layout, game=game,
                       config=config)
    if status == _kernels.STATUS_NONFINITE:
        t_bad = bad_step * config.step
        name = layout.component_name(bad)
        raise BlowUpError(
            f"state {name} became non-finite at t={t_bad:.6g}",
            t=t_bad, component=name, partial=result,
        )
    if status == _kernels.STATUS_SINGULAR:
        t_bad = bad_step * config.step
        raise DiagnosticError(
            f"Sigma for agent {bad} numerically singular at t={t_bad:.6g}"
        )
    return result


def _pack_quadratic(game):
    Qs = np.stack([c.Q_sym for c in game.costs])
    qv = np.stack([c.q for c in game.costs])
    rv = np.asarray([c.r for c in game.costs])
    return Qs, qv, rv


def _run_kernel(config, layout, game, z0, steps, out):
    if layout.variant == "fullinfo":
        Jx, g0 = quadratic_structure(game)
        tau_ch = np.repeat(config.tau, game.m_dims).astype(float)
        rec, status, bad, bad_step = _kernels.integrate_fullinfo(
            z0, config.step, steps, config.stride, out,
            Jx, g0, game.B, tau_ch,
        )
    elif layout.variant == "inesc":
        Qs, qv, rv = _pack_quadratic(game)
        amp = np.concatenate([d.amplitude for d in config.dither])
        freq = np.concatenate([d.frequency for d in config.dither])
        phase = np.concatenate([d.phase for d in config.dither])
        K = np.asarray([p.K for p in config.est_params])
        kT = np.asarray([p.k_T for p in config.est_params])
        sigma = np.asarray([p.sigma for p in config.est_params])
        th_lo = np.concatenate([p.theta_lo for p in config.est_params])
        th_hi = np.concatenate([p.theta_hi for p in config.est_params])
        k_off = np.concatenate([[0], np.cumsum(layout.k_dims)]).astype(np.int64)
        rec, status, bad, bad_step = _kernels.integrate_inesc(
            z0, config.step, steps, config.stride, out,
            Qs, qv, rv, game.B, layout.n_offsets, layout.m_offsets,
            layout.est_offsets, k_off, np.asarray(config.tau, dtype=float),
            amp, freq, phase, K, kT, sigma, th_lo, th_hi,
        )
    else:
        Qs, qv, rv = _pack_quadratic(game)
        bl = config.baseline
        rec, status, bad, bad_step = _kernels.integrate_baseline(
            z0, config.step, steps, config.stride, out,
            Qs, qv, rv, game.B, layout.n_offsets,
            bl.omega_h, bl.omega_l, bl.omega, bl.k, bl.A,
        )
    return rec, status, bad, bad_step


def _unpack_estimators(z, layout):
    ests = []
    for i in range(layout.N):
        k = int(layout.k_dims[i])
        ests.append(EstimatorState(
            y_hat=float(z[layout.y_hat_index(i)]),
            c=z[layout.c_slice(i)],
            eta_hat=float(z[layout.eta_hat_index(i)]),
            Sigma=z[layout.sigma_slice(i)].reshape(k, k),
            theta_hat=z[layout.theta_slice(i)],
        ))
    return ests


def _python_rhs(config, layout, game):
    B = game.B
    n = layout.n

    if layout.variant == "fullinfo":
        ctrl = FullInfoController(tau=config.tau, u=np.zeros(layout.m))

        def rhs(t, z):
            dz = np.empty_like(z)
            x = z[layout.x_slice]
            u = z[layout.u_slice]
            dz[layout.x_slice] = -x + B @ u
            dz[layout.u_slice] = fullinfo_derivative(ctrl, game, x)
            return dz

        return rhs

    if layout.variant == "inesc":

        def rhs(t, z):
            dz = np.empty_like(z)
            x = z[layout.x_slice]
            ctrl = InescController(
                tau=config.tau, u_hat=z[layout.u_slice],
                estimators=_unpack_estimators(z, layout),
                est_params=list(config.est_params),
                dither=list(config.dither),
            )
            u = ctrl.input_at(t, layout.m_offsets)
            dz[layout.x_slice] = -x + B @ u
            y = np.asarray([eval_cost(game, i, x) for i in range(layout.N)])
            u_hat_dot, est_dots = inesc_derivative_checked(ctrl, y, t)
            dz[layout.u_slice] = u_hat_dot
            for i, d in enumerate(est_dots):
                k = int(layout.k_dims[i])
                dz[layout.y_hat_index(i)] = d.y_hat
                dz[layout.eta_hat_index(i)] = d.eta_hat
                dz[layout.c_slice(i)] = d.c
                dz[layout.theta_slice(i)] = d.theta_hat
                dz[layout.sigma_slice(i)] = d.Sigma.ravel()
            return dz

        return rhs

    bl = config.baseline

    def rhs(t, z):
        dz = np.empty_like(z)
        x = z[layout.x_slice]
        ctrl = BaselineController(
            omega_h=bl.omega_h, omega_l=bl.omega_l, omega=bl.omega,
            k=bl.k, A=bl.A,
            eta=z[layout.eta_slice], xi=z[layout.xi_slice],
            u_hat=z[layout.u_slice],
        )
        u = baseline_input(ctrl, t)
        dz[layout.x_slice] = -x + B @ u
        y = np.asarray([eval_cost(game, i, x) for i in range(layout.N)])
        eta_dot, xi_dot, u_hat_dot = baseline_derivative(ctrl, y, t)
        dz[layout.eta_slice] = eta_dot
        dz[layout.xi_slice] = xi_dot
        dz[layout.u_slice] = u_hat_dot
        return dz

    return rhs


def inesc_derivative_checked(ctrl, y, t):
    """inesc_derivative with DiagnosticErrors annotated by time."""
    try:
        return inesc_derivative(ctrl, y, t)
    except DiagnosticError as exc:
        raise DiagnosticError(f"{exc} (t={t:.6g})") from exc


def _run_python(config, layout, game, z0, steps, out):
    rhs = _python_rhs(config, layout, game)
    z = z0.copy()
    out[0] = z
    rec = 1
    h = config.step
    for s in range(steps):
        t = s * h
        try:
            z = step_rk4(rhs, t, z, h)
        except DiagnosticError as exc:
            raise DiagnosticError(f"{exc} at step {s + 1}") from exc
        if layout.variant == "inesc":
            for i, p in enumerate(config.est_params):
                sl = layout.theta_slice(i)
                np.clip(z[sl], p.theta_lo, p.theta_hi, out=z[sl])
                ssl = layout.sigma_slice(i)
                k = int(layout.k_dims[i])
                S = z[ssl].reshape(k, k)
                z[ssl] = (0.5 * (S + S.T)).ravel()
        if not np.all(np.isfinite(z)):
            bad = int(np.argmin(np.isfinite(z)))
            return rec, _kernels.STATUS_NONFINITE, bad, s + 1
        if (s + 1) % config.stride == 0:
            out[rec] = z
            rec += 1
    return rec, _kernels.STATUS_OK, -1, -1


@dataclass(frozen=True)
class ConvergenceMetrics:
    """Trailing-window and peak distances to the Nash equilibrium."""

    window: float
    trailing_u_error: float
    trailing_x_error: float
    entry_time: float | None
    entry_ball: float
    peak_u_error: float
    peak_x_error: float

    def to_dict(self):
        return {
            "window": self.window,
            "trailing_u_error": self.trailing_u_error,
            "trailing_x_error": self.trailing_x_error,
            "entry_time": self.entry_time,
            "entry_ball": self.entry_ball,
            "peak_u_error": self.peak_u_error,
            "peak_x_error": self.peak_x_error,
        }


def convergence_metrics(result: SimResult, ne, window: float,
                        ball: float = 0.15) -> ConvergenceMetrics:
    """Distance metrics of a run against the Nash equilibrium.

    trailing_* are time averages over the trailing window of
    ||u_hat - u*|| and ||x - pi(u_hat)||; entry_time is the first time
    after which ||u_hat - u*|| stays inside the given ball.
    """
    t = result.t
    if window > t[-1] - t[0] + 1e-12:
        raise ConfigError(f"window {window} s exceeds the recorded horizon")
    u_hat = result.u_hat
    x = result.x
    B = result.game.B
    u_err = np.linalg.norm(u_hat - ne.u_star, axis=1)
    x_err = np.linalg.norm(x - u_hat @ B.T, axis=1)
    mask = t >= t[-1] - window
    outside = np.nonzero(u_err > ball)[0]
    if outside.size == 0:
        entry = float(t[0])
    elif outside[-1] + 1 >= t.shape[0]:
        entry = None
    else:
        entry = float(t[outside[-1] + 1])
    return ConvergenceMetrics(
        window=float(window),
        trailing_u_error=float(u_err[mask].mean()),
        trailing_x_error=float(x_err[mask].mean()),
        entry_time=entry,
        entry_ball=float(ball),
        peak_u_error=float(u_err.max()),
        peak_x_error=float(x_err.max()),
    )
