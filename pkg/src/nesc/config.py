"""Experiment configuration: JSON schema, validation, overrides, hashing.

A config file is a JSON object with sections

    game        required; {"agents": [{"B": rows, "cost": {"Q","q","r"}}]}
    controller  optional; {"variant": ..., "agents": [per-agent params]}
    sim         optional; step/horizon/stride/initial conditions
    output      optional; lyapunov column emission and its beta weight

Matrices are row-major lists of rows. Per-agent controller keys by variant:
fullinfo {tau}; inesc {tau, K, k_T, sigma, alpha1, theta_box?, dither?};
baseline {omega_h, omega_l, omega, k, A}. The dither subsection holds
amplitude/frequency/phase, scalar or per input channel.

theta indexing convention (project-wide): component 0 of any theta vector
is the drift term theta^0; components 1..m_i are the input sensitivity
theta^1. theta_box rows follow the same order.

Unknown keys anywhere are rejected. All defaults are materialized into the
normalized dict used for the config hash, so identical effective configs
hash identically.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .controllers import DitherSpec
from .errors import ConfigError
from .estimator import EstimatorParams
from .game import GameModel

__all__ = [
    "ExperimentConfig",
    "BaselineParams",
    "parse_config",
    "load_raw",
    "config_from_dict",
    "apply_overrides",
    "bundled_config_path",
    "list_bundled_configs",
]

DEFAULT_STEP = 1e-3
DEFAULT_HORIZON = 100.0
DEFAULT_STRIDE = 10
STEP_GUARD_FACTOR = 10.0


@dataclass(frozen=True)
class BaselineParams:
    omega_h: np.ndarray
    omega_l: np.ndarray
    omega: np.ndarray
    k: np.ndarray
    A: np.ndarray


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description with all defaults materialized."""

    name: str
    game: GameModel
    variant: str | None
    tau: np.ndarray | None
    est_params: tuple | None
    dither: tuple | None
    baseline: BaselineParams | None
    step: float
    horizon: float
    stride: int
    allow_large_step: bool
    x0: np.ndarray
    u0: np.ndarray
    lyapunov_columns: bool
    beta: float
    normalized: dict

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.normalized, sort_keys=True,
                               separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def require_controller(self):
        if self.variant is None:
            raise ConfigError("config has no controller section")


def _expect_dict(obj, path):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")
    return obj


def _expect_list(obj, path):
    if not isinstance(obj, list):
        raise ConfigError(f"{path}: expected an array")
    return obj


def _check_keys(d, allowed, path):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")


def _number(d, key, path, default=None, positive=False, required=False):
    if key not in d:
        if required:
            raise ConfigError(f"{path}.{key}: missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number")
    v = float(v)
    if positive and not v > 0:
        raise ConfigError(f"{path}.{key}: must be positive")
    if not math.isfinite(v):
        raise ConfigError(f"{path}.{key}: must be finite")
    return v


def _vector(obj, path, length=None):
    arr = np.asarray(obj, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ConfigError(f"{path}: expected a flat array")
    if length is not None and arr.shape[0] != length:
        raise ConfigError(f"{path}: expected {length} entries, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{path}: entries must be finite")
    return arr


def _matrix(obj, path):
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a numeric matrix") from exc
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ConfigError(f"{path}: expected a matrix (list of rows)")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{path}: entries must be finite")
    return arr


def _parse_game(d):
    d = _expect_dict(d, "game")
    _check_keys(d, {"agents"}, "game")
    agents = _expect_list(d.get("agents"), "game.agents")
    if not agents:
        raise ConfigError("game.agents: needs at least one agent")
    B_blocks, Qs, qs, rs = [], [], [], []
    for i, a in enumerate(agents):
        path = f"game.agents[{i}]"
        a = _expect_dict(a, path)
        _check_keys(a, {"B", "cost"}, path)
        if "B" not in a or "cost" not in a:
            raise ConfigError(f"{path}: needs 'B' and 'cost'")
        B_blocks.append(_matrix(a["B"], f"{path}.B"))
        cost = _expect_dict(a["cost"], f"{path}.cost")
        _check_keys(cost, {"Q", "q", "r"}, f"{path}.cost")
        Qs.append(_matrix(cost.get("Q"), f"{path}.cost.Q"))
        qs.append(_vector(cost.get("q"), f"{path}.cost.q"))
        rs.append(_number(cost, "r", f"{path}.cost", default=0.0))
    return GameModel.quadratic(B_blocks, Qs, qs, rs)


def _parse_dither(d, m_i, path):
    if d is None:
        return DitherSpec.zero(m_i)
    d = _expect_dict(d, path)
    _check_keys(d, {"amplitude", "frequency", "phase"}, path)
    amp = _vector(d.get("amplitude", 0.0), f"{path}.amplitude")
    freq = _vector(d.get("frequency", 1.0), f"{path}.frequency")
    phase = _vector(d.get("phase", 0.0), f"{path}.phase")
    for name, arr in (("amplitude", amp), ("frequency", freq), ("phase", phase)):
        if arr.shape[0] not in (1, m_i):
            raise ConfigError(
                f"{path}.{name}: expected 1 or {m_i} entries, got {arr.shape[0]}"
            )
    try:
        return DitherSpec(
            amplitude=np.broadcast_to(amp, (m_i,)),
            frequency=np.broadcast_to(freq, (m_i,)),
            phase=np.broadcast_to(phase, (m_i,)),
        )
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_controller(d, game):
    d = _expect_dict(d, "controller")
    _check_keys(d, {"variant", "agents"}, "controller")
    variant = d.get("variant")
    if variant not in ("fullinfo", "inesc", "baseline"):
        raise ConfigError(
            f"controller.variant: expected fullinfo|inesc|baseline, got {variant!r}"
        )
    agents = _expect_list(d.get("agents"), "controller.agents")
    if len(agents) != game.N:
        raise ConfigError(
            f"controller.agents: {len(agents)} entries for a {game.N}-agent game"
        )
    tau = None
    est_params = None
    dither = None
    baseline = None
    if variant in ("fullinfo", "inesc"):
        tau = np.empty(game.N)
        for i, a in enumerate(agents):
            path = f"controller.agents[{i}]"
            a = _expect_dict(a, path)
            allowed = {"tau"} if variant == "fullinfo" else {
                "tau", "K", "k_T", "sigma", "alpha1", "theta_box", "dither"}
            _check_keys(a, allowed, path)
            tau[i] = _number(a, "tau", path, positive=True, required=True)
        if variant == "inesc":
            est_params = []
            dither = []
            for i, a in enumerate(agents):
                path = f"controller.agents[{i}]"
                m_i = game.m_dims[i]
                box = a.get("theta_box")
                if box is not None:
                    box = _matrix(box, f"{path}.theta_box")
                try:
                    est_params.append(EstimatorParams.create(
                        m_i=m_i,
                        K=_number(a, "K", path, positive=True, required=True),
                        k_T=_number(a, "k_T", path, positive=True, required=True),
                        sigma=_number(a, "sigma", path, positive=True, required=True),
                        alpha1=_number(a, "alpha1", path, positive=True, required=True),
                        theta_box=box,
                    ))
                except ConfigError as exc:
                    raise ConfigError(f"{path}: {exc}") from exc
                dither.append(_parse_dither(a.get("dither"), m_i, f"{path}.dither"))
            est_params = tuple(est_params)
            dither = tuple(dither)
    else:
        if any(mi != 1 for mi in game.m_dims):
            raise ConfigError(
                "controller.variant: baseline supports scalar input channels only"
            )
        cols = {name: np.empty(game.N) for name in
                ("omega_h", "omega_l", "omega", "k", "A")}
        for i, a in enumerate(agents):
            path = f"controller.agents[{i}]"
            a = _expect_dict(a, path)
            _check_keys(a, set(cols), path)
            for name in cols:
                positive = name != "k"
                cols[name][i] = _number(a, name, path, positive=positive,
                                        required=True)
        baseline = BaselineParams(**cols)
    return variant, tau, est_params, dither, baseline


def _step_guard_limit(variant, est_params, dither, baseline):
    """Fastest estimator and probe time scales feeding the step-size guard."""
    terms = []
    if variant == "inesc" and est_params:
        terms.append(1.0 / max(p.K for p in est_params))
        freqs = [
            float(f)
            for spec in dither
            for a, f in zip(spec.amplitude, spec.frequency)
            if a > 0
        ]
        if freqs:
            terms.append(2.0 * math.pi / max(freqs))
    if variant == "baseline" and baseline is not None:
        terms.append(2.0 * math.pi / float(baseline.omega.max()))
    return min(terms) / STEP_GUARD_FACTOR if terms else None


def config_from_dict(data, name="config") -> ExperimentConfig:
    """Validate a raw config dict and materialize every default."""
    data = _expect_dict(data, "config")
    _check_keys(data, {"name", "game", "controller", "sim", "output"}, "config")
    if "game" not in data:
        raise ConfigError("config: missing 'game' section")
    if "name" in data and not isinstance(data["name"], str):
        raise ConfigError("name: expected a string")
    name = data.get("name", name)
    game = _parse_game(data["game"])
    variant = tau = est_params = dither = baseline = None
    if "controller" in data:
        variant, tau, est_params, dither, baseline = _parse_controller(
            data["controller"], game)
    sim = _expect_dict(data.get("sim", {}), "sim")
    _check_keys(sim, {"step", "horizon", "stride", "allow_large_step",
                      "x0", "u0"}, "sim")
    step = _number(sim, "step", "sim", default=DEFAULT_STEP, positive=True)
    horizon = _number(sim, "horizon", "sim", default=DEFAULT_HORIZON,
                      positive=True)
    stride = sim.get("stride", DEFAULT_STRIDE)
    if isinstance(stride, bool) or not isinstance(stride, int) or stride < 1:
        raise ConfigError("sim.stride: expected a positive integer")
    allow_large_step = sim.get("allow_large_step", False)
    if not isinstance(allow_large_step, bool):
        raise ConfigError("sim.allow_large_step: expected a boolean")
    if horizon < step:
        raise ConfigError("sim.horizon: shorter than one step")
    x0 = _vector(sim.get("x0", np.zeros(game.n)), "sim.x0", game.n)
    u0 = _vector(sim.get("u0", np.zeros(game.m)), "sim.u0", game.m)
    output = _expect_dict(data.get("output", {}), "output")
    _check_keys(output, {"lyapunov", "beta"}, "output")
    lyap = output.get("lyapunov", False)
    if not isinstance(lyap, bool):
        raise ConfigError("output.lyapunov: expected a boolean")
    beta = _number(output, "beta", "output", default=1.0, positive=True)
    if lyap and variant == "baseline":
        raise ConfigError(
            "output.lyapunov: no Lyapunov candidate exists for the baseline"
        )
    if variant is not None and not allow_large_step:
        limit = _step_guard_limit(variant, est_params, dither, baseline)
        if limit is not None and step >= limit:
            raise ConfigError(
                f"sim.step: {step:g} s is too large for the configured "
                f"dynamics (guard limit {limit:.3g} s); set "
                f"sim.allow_large_step=true to override"
            )
    normalized = _normalize(name, game, variant, tau, est_params, dither,
                            baseline, step, horizon, stride, allow_large_step,
                            x0, u0, lyap, beta)
    return ExperimentConfig(
        name=name, game=game, variant=variant, tau=tau,
        est_params=est_params, dither=dither, baseline=baseline,
        step=step, horizon=horizon, stride=stride,
        allow_large_step=allow_large_step, x0=x0, u0=u0,
        lyapunov_columns=lyap, beta=beta, normalized=normalized,
    )


def _normalize(name, game, variant, tau, est_params, dither, baseline,
               step, horizon, stride, allow_large_step, x0, u0, lyap, beta):
    agents = []
    for i in range(game.N):
        cost = game.costs[i]
        agents.append({
            "B": game.B_blocks[i].tolist(),
            "cost": {"Q": cost.Q_sym.tolist(), "q": cost.q.tolist(),
                     "r": cost.r},
        })
    out = {
        "name": name,
        "game": {"agents": agents},
        "sim": {"step": step, "horizon": horizon, "stride": stride,
                "allow_large_step": allow_large_step,
                "x0": x0.tolist(), "u0": u0.tolist()},
        "output": {"lyapunov": lyap, "beta": beta},
    }
    if variant is None:
        return out
    ctrl_agents = []
    for i in range(game.N):
        if variant == "fullinfo":
            ctrl_agents.append({"tau": float(tau[i])})
        elif variant == "inesc":
            p = est_params[i]
            d = dither[i]
            ctrl_agents.append({
                "tau": float(tau[i]), "K": p.K, "k_T": p.k_T,
                "sigma": p.sigma, "alpha1": p.alpha1,
                "theta_box": np.column_stack([p.theta_lo, p.theta_hi]).tolist(),
                "dither": {"amplitude": d.amplitude.tolist(),
                           "frequency": d.frequency.tolist(),
                           "phase": d.phase.tolist()},
            })
        else:
            ctrl_agents.append({
                "omega_h": float(baseline.omega_h[i]),
                "omega_l": float(baseline.omega_l[i]),
                "omega": float(baseline.omega[i]),
                "k": float(baseline.k[i]),
                "A": float(baseline.A[i]),
            })
    out["controller"] = {"variant": variant, "agents": ctrl_agents}
    return out


def load_raw(path) -> dict:
    """Read a JSON config file into a raw dict (no validation)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: parse error at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def parse_config(path) -> ExperimentConfig:
    """Load, parse and validate a JSON config file."""
    path = Path(path)
    return config_from_dict(load_raw(path), name=path.stem)


def apply_overrides(data: dict, overrides) -> dict:
    """Apply dot-path overrides ('a.b.0.c=value') to a raw config dict.

    List indices are numeric path segments; '*' fans out over a whole
    list. Values parse as JSON, falling back to a literal string.
    """
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}': expected key=value")
        key, _, raw_value = item.partition("=")
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value
        _set_path(data, key.split("."), value, key)
    return data


def _set_path(node, segments, value, full_key):
    seg, rest = segments[0], segments[1:]
    if seg == "*":
        if not rest:
            raise ConfigError(f"override '{full_key}': '*' cannot be the leaf")
        if not isinstance(node, list):
            raise ConfigError(f"override '{full_key}': '*' needs a list")
        for child in node:
            _set_path(child, rest, value, full_key)
        return
    if isinstance(node, list):
        try:
            idx = int(seg)
        except ValueError as exc:
            raise ConfigError(
                f"override '{full_key}': '{seg}' is not a list index"
            ) from exc
        if not 0 <= idx < len(node):
            raise ConfigError(f"override '{full_key}': index {idx} out of range")
        if rest:
            _set_path(node[idx], rest, value, full_key)
        else:
            node[idx] = value
        return
    if not isinstance(node, dict):
        raise ConfigError(f"override '{full_key}': cannot descend into {type(node).__name__}")
    if rest:
        if seg not in node:
            node[seg] = {}
        _set_path(node[seg], rest, value, full_key)
    else:
        node[seg] = value


def bundled_config_path(name: str) -> Path:
    """Path of a config shipped with the package (name without .json)."""
    root = resources.files("nesc") / "configs"
    p = Path(str(root / f"{name}.json"))
    if not p.exists():
        raise ConfigError(
            f"no bundled config '{name}' (have: {', '.join(list_bundled_configs())})"
        )
    return p


def list_bundled_configs():
    root = resources.files("nesc") / "configs"
    return sorted(p.name[:-5] for p in Path(str(root)).glob("*.json"))
