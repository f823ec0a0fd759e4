"""Experiment runner CLI: config ingestion, subcommands, CSV/JSON emission.

Subcommands:
    run             integrate one config; emit trajectory.csv + metrics.json
    compare         run an inesc and a baseline config on the same game;
                    emit a joined figure-data CSV + metrics
    sweep           vary one config parameter over a list of values
    ne-solve        print the Nash equilibrium as JSON
    check-monotone  print the strong-monotonicity certificate as JSON
    recommend-tau   print the integral-gain threshold tau* as JSON

Exit codes: 0 success, 2 config error, 3 numerical blow-up, 4 assumption
violation, 1 any other failure. Failures print a machine-readable JSON
record to stderr.

Trajectory CSV schema: t, x_1..x_n, u_1..u_m, u_hat_1..u_hat_m, y_1..y_N,
then for the inesc variant theta_hat_<agent>_<component> columns
(component 0 is theta^0), then W, V, T, L when Lyapunov emission is
enabled (W is the estimation-term sum, zero for fullinfo). Floats carry 17
significant digits, so parsing the file reproduces the exact binary
values.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

from .analysis import (
    check_monotonicity,
    lyapunov_trace,
    recommend_tau,
    solve_ne,
)
from .config import (
    ExperimentConfig,
    apply_overrides,
    config_from_dict,
    load_raw,
)
from .errors import (
    AssumptionViolationError,
    BlowUpError,
    ConfigError,
    NescError,
)
from .sim import convergence_metrics, run

__all__ = ["main", "entrypoint"]

METRICS_WINDOW = 20.0


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _load_config(args, extra_overrides=()) -> ExperimentConfig:
    raw = load_raw(args.config)
    overrides = list(extra_overrides) + list(args.override or [])
    if getattr(args, "step", None) is not None:
        overrides.append(f"sim.step={args.step}")
    if getattr(args, "horizon", None) is not None:
        overrides.append(f"sim.horizon={args.horizon}")
    apply_overrides(raw, overrides)
    return config_from_dict(raw, name=Path(args.config).stem)


def _trajectory_columns(result, config):
    """(header, column arrays) for the trajectory CSV."""
    layout = result.layout
    headers = ["t"]
    cols = [result.t]
    x = result.x
    for j in range(layout.n):
        headers.append(f"x_{j + 1}")
        cols.append(x[:, j])
    u = result.u
    for j in range(layout.m):
        headers.append(f"u_{j + 1}")
        cols.append(u[:, j])
    u_hat = result.u_hat
    for j in range(u_hat.shape[1]):
        headers.append(f"u_hat_{j + 1}")
        cols.append(u_hat[:, j])
    y = result.y
    for i in range(layout.N):
        headers.append(f"y_{i + 1}")
        cols.append(y[:, i])
    if result.variant == "inesc":
        for i in range(layout.N):
            th = result.theta_hat(i)
            for j in range(th.shape[1]):
                headers.append(f"theta_hat_{i + 1}_{j}")
                cols.append(th[:, j])
    if config.lyapunov_columns:
        ne = solve_ne(result.game)
        trace = lyapunov_trace(result, result.game, ne, beta=config.beta)
        headers += ["W", "V", "T", "L"]
        cols += [trace.W_est, trace.V, trace.T, trace.L]
    return headers, cols


def write_trajectory_csv(result, config, path):
    headers, cols = _trajectory_columns(result, config)
    with open(path, "w") as fh:
        fh.write(",".join(headers) + "\n")
        for s in range(result.samples):
            fh.write(",".join(_fmt(col[s]) for col in cols) + "\n")


def _run_record(result, config):
    record = {
        "name": config.name,
        "config_hash": config.config_hash,
        "variant": config.variant,
        "step": config.step,
        "horizon": config.horizon,
        "stride": config.stride,
        "samples": result.samples,
        "final_x": result.x[-1].tolist(),
        "final_u_hat": result.u_hat[-1].tolist(),
    }
    ne = solve_ne(config.game)
    record["ne"] = ne.to_dict()
    window = min(METRICS_WINDOW, config.horizon)
    record["metrics"] = convergence_metrics(result, ne, window).to_dict()
    return record


def write_metrics_json(record, path):
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_run(args) -> int:
    config = _load_config(args)
    config.require_controller()
    result = run(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(result, config, out / "trajectory.csv")
    record = _run_record(result, config)
    write_metrics_json(record, out / "metrics.json")
    print(json.dumps({"trajectory": str(out / "trajectory.csv"),
                      "metrics": str(out / "metrics.json"),
                      "config_hash": config.config_hash}))
    return 0


def cmd_compare(args) -> int:
    raw_a = load_raw(args.inesc)
    raw_b = load_raw(args.baseline)
    apply_overrides(raw_a, args.override or [])
    apply_overrides(raw_b, args.override or [])
    cfg_a = config_from_dict(raw_a, name=Path(args.inesc).stem)
    cfg_b = config_from_dict(raw_b, name=Path(args.baseline).stem)
    if cfg_a.variant != "inesc" or cfg_b.variant != "baseline":
        raise ConfigError("compare expects an inesc config and a baseline config")
    if cfg_a.normalized["game"] != cfg_b.normalized["game"]:
        raise ConfigError("compare configs describe different games")
    if (cfg_a.step, cfg_a.stride, cfg_a.horizon) != (
            cfg_b.step, cfg_b.stride, cfg_b.horizon):
        raise ConfigError("compare configs must share step, stride and horizon")
    res_a = run(cfg_a)
    res_b = run(cfg_b)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    headers = ["t"]
    cols = [res_a.t]
    for tag, res in (("inesc", res_a), ("baseline", res_b)):
        x, u = res.x, res.u
        for j in range(x.shape[1]):
            headers.append(f"x_{j + 1}_{tag}")
            cols.append(x[:, j])
        for j in range(u.shape[1]):
            headers.append(f"u_{j + 1}_{tag}")
            cols.append(u[:, j])
    csv_path = out / "compare.csv"
    with open(csv_path, "w") as fh:
        fh.write(",".join(headers) + "\n")
        for s in range(res_a.samples):
            fh.write(",".join(_fmt(col[s]) for col in cols) + "\n")
    record = {
        "inesc": _run_record(res_a, cfg_a),
        "baseline": _run_record(res_b, cfg_b),
        "probe": {
            "inesc": {
                "max_amplitude": float(max(d.amplitude.max() for d in cfg_a.dither)),
                "frequencies": sorted(
                    float(f) for d in cfg_a.dither for f in d.frequency),
            },
            "baseline": {
                "max_amplitude": float(cfg_b.baseline.A.max()),
                "frequencies": sorted(float(f) for f in cfg_b.baseline.omega),
            },
        },
    }
    write_metrics_json(record, out / "compare_metrics.json")
    print(json.dumps({"compare": str(csv_path),
                      "metrics": str(out / "compare_metrics.json")}))
    return 0


def cmd_sweep(args) -> int:
    try:
        values = json.loads(args.values)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--values is not valid JSON: {exc}") from exc
    if not isinstance(values, list) or not values:
        raise ConfigError("--values must be a non-empty JSON array")
    base_raw = load_raw(args.config)
    apply_overrides(base_raw, args.override or [])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        raw = copy.deepcopy(base_raw)
        apply_overrides(raw, [f"{args.param}={json.dumps(value)}"])
        cfg = config_from_dict(raw, name=Path(args.config).stem)
        cfg.require_controller()
        result = run(cfg)
        record = _run_record(result, cfg)
        rows.append({"value": value, **record})
    csv_path = out / "sweep.csv"
    with open(csv_path, "w") as fh:
        fh.write("value,trailing_u_error,trailing_x_error,peak_u_error,"
                 "entry_time,config_hash\n")
        for row in rows:
            m = row["metrics"]
            entry = m["entry_time"]
            fh.write(",".join([
                _fmt(float(row["value"])),
                _fmt(m["trailing_u_error"]),
                _fmt(m["trailing_x_error"]),
                _fmt(m["peak_u_error"]),
                "" if entry is None else _fmt(entry),
                row["config_hash"],
            ]) + "\n")
    write_metrics_json({"param": args.param, "runs": rows}, out / "sweep.json")
    print(json.dumps({"sweep": str(csv_path),
                      "metrics": str(out / "sweep.json")}))
    return 0


def cmd_ne_solve(args) -> int:
    config = _load_config(args)
    ne = solve_ne(config.game)
    print(json.dumps({"name": config.name, "config_hash": config.config_hash,
                      **ne.to_dict()}, indent=2))
    return 0


def cmd_check_monotone(args) -> int:
    config = _load_config(args)
    cert = check_monotonicity(config.game)
    if not cert.is_strongly_monotone:
        print(json.dumps(cert.to_dict(), indent=2))
        raise AssumptionViolationError(
            f"pseudo-gradient is not strongly monotone (mu = {cert.mu:.6g})"
        )
    print(json.dumps({"name": config.name, "config_hash": config.config_hash,
                      **cert.to_dict()}, indent=2))
    return 0


def cmd_recommend_tau(args) -> int:
    config = _load_config(args)
    tau_star = recommend_tau(config.game, beta=args.beta)
    print(json.dumps({"name": config.name, "config_hash": config.config_hash,
                      "beta": args.beta, "tau_star": tau_star}, indent=2))
    return 0


def _add_common(p, config_required=True):
    p.add_argument("--config", required=config_required,
                   help="path to a JSON experiment config")
    p.add_argument("--override", action="append", metavar="KEY=VALUE",
                   help="dot-path config override, repeatable "
                        "(e.g. controller.agents.*.dither.amplitude=0.25)")
    p.add_argument("--seed", type=int, default=None,
                   help="reserved; the dynamics are deterministic")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nesc",
        description="Nash equilibrium seeking control experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate one configured closed loop")
    _add_common(p)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--step", type=float, default=None, help="override sim.step")
    p.add_argument("--horizon", type=float, default=None,
                   help="override sim.horizon")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare",
                       help="run inesc and baseline configs on the same game")
    p.add_argument("--inesc", required=True, help="inesc config path")
    p.add_argument("--baseline", required=True, help="baseline config path")
    p.add_argument("--override", action="append", metavar="KEY=VALUE",
                   help="override applied to both configs")
    p.add_argument("--seed", type=int, default=None,
                   help="reserved; the dynamics are deterministic")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="vary one parameter over a value list")
    _add_common(p)
    p.add_argument("--param", required=True,
                   help="dot path of the swept parameter")
    p.add_argument("--values", required=True,
                   help="JSON array of values, e.g. [0.5,0.25]")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ne-solve", help="print the Nash equilibrium")
    _add_common(p)
    p.set_defaults(func=cmd_ne_solve)

    p = sub.add_parser("check-monotone",
                       help="print the strong-monotonicity certificate")
    _add_common(p)
    p.set_defaults(func=cmd_check_monotone)

    p = sub.add_parser("recommend-tau",
                       help="print the integral-gain threshold tau*")
    _add_common(p)
    p.add_argument("--beta", type=float, default=1.0,
                   help="Lyapunov weight beta (default 1)")
    p.set_defaults(func=cmd_recommend_tau)

    return parser


_EXIT_CODES = (
    (ConfigError, 2),
    (BlowUpError, 3),
    (AssumptionViolationError, 4),
    (NescError, 1),
)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NescError as exc:
        code = next(c for cls, c in _EXIT_CODES if isinstance(exc, cls))
        record = {"error": type(exc).__name__, "message": str(exc),
                  "exit_code": code}
        if isinstance(exc, BlowUpError):
            record["t"] = exc.t
            record["component"] = exc.component
        print(json.dumps(record), file=sys.stderr)
        return code
    except OSError as exc:
        print(json.dumps({"error": "OSError", "message": str(exc),
                          "exit_code": 1}), file=sys.stderr)
        return 1


def entrypoint():
    sys.exit(main())
