"""Command-line front end.

Subcommands: ``analyze`` (closed-form ages and error ratios),
``simulate`` (Monte Carlo metrics), ``compare`` (analytic vs simulated
with a tolerance gate), ``sweep`` (one scalar swept, CSV out) and
``optimize`` (sensing allocation).  Configs are single JSON documents;
see ``load_config``.  Exit codes: 0 success, 1 usage error, 2 parse or
validation error, 3 tolerance failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import aoi as aoi_mod
from . import error as error_mod
from .model import ProcessModel, SystemConfig, ValidationError, validate_config
from .opt import ConstraintSet, Family, solve_closed_form, solve_grid
from .sim import SimParams, replicate, run_simulation

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_TOLERANCE = 3

_FAMILIES = {
    "linear": Family.LINEAR,
    "qconvex": Family.QUADRATIC_CONVEX,
    "qconcave": Family.QUADRATIC_CONCAVE,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad usage; the contract here is 1
    def error(self, message):
        raise UsageError(message)


def _req(doc: dict, key: str, kind, where: str):
    if key not in doc:
        raise ValidationError(f"{where}: missing required key '{key}'")
    val = doc[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if kind is list and isinstance(val, list):
        return val
    raise ValidationError(f"{where}.{key}: expected {kind.__name__}, got {type(val).__name__}")


def _number(val, where: str) -> float:
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    raise ValidationError(f"{where}: expected a number, got {type(val).__name__}")


def parse_config_dict(doc: dict) -> SystemConfig:
    """Build a validated SystemConfig from a config document.

    Schema: ``sensors`` (list of {"rate": r}), ``service_rate``,
    ``processes`` (list of {"transition_matrix": rows,
    "state_change_rate": z}), ``correlation`` (row-major N x M).
    Errors name the offending field.
    """
    if not isinstance(doc, dict):
        raise ValidationError("config root must be a JSON object")
    sensors = _req(doc, "sensors", list, "config")
    if not sensors:
        raise ValidationError("sensors: need at least one sensor (N >= 1)")
    rates = []
    for i, entry in enumerate(sensors):
        if not isinstance(entry, dict):
            raise ValidationError(f"sensors[{i}]: expected an object with a 'rate' key")
        rates.append(_number(entry.get("rate"), f"sensors[{i}].rate"))
    service_rate = _req(doc, "service_rate", float, "config")
    raw_processes = _req(doc, "processes", list, "config")
    if not raw_processes:
        raise ValidationError("processes: need at least one process (M >= 1)")
    processes = []
    for j, entry in enumerate(raw_processes):
        if not isinstance(entry, dict):
            raise ValidationError(f"processes[{j}]: expected an object")
        matrix = entry.get("transition_matrix")
        if not isinstance(matrix, list) or not all(isinstance(r, list) for r in matrix):
            raise ValidationError(f"processes[{j}].transition_matrix: expected a list of rows")
        for a, row in enumerate(matrix):
            if len(row) != len(matrix):
                raise ValidationError(
                    f"processes[{j}].transition_matrix[{a}]: expected {len(matrix)} entries (square matrix)"
                )
            for b, vv in enumerate(row):
                _number(vv, f"processes[{j}].transition_matrix[{a}][{b}]")
        zeta = _number(entry.get("state_change_rate"), f"processes[{j}].state_change_rate")
        processes.append(ProcessModel(np.array(matrix, dtype=float), zeta))
    correlation = _req(doc, "correlation", list, "config")
    if len(correlation) != len(sensors):
        raise ValidationError(
            f"correlation: expected {len(sensors)} rows (one per sensor), got {len(correlation)}"
        )
    for i, row in enumerate(correlation):
        if not isinstance(row, list) or len(row) != len(processes):
            raise ValidationError(f"correlation[{i}]: expected a row of {len(processes)} entries")
        for j, vv in enumerate(row):
            v = _number(vv, f"correlation[{i}][{j}]")
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"correlation[{i}][{j}]: must lie in [0, 1], got {v}")
    config = SystemConfig(
        sensor_rates=np.array(rates, dtype=float),
        service_rate=service_rate,
        correlation=np.array(correlation, dtype=float),
        processes=tuple(processes),
    )
    return validate_config(config)


def load_config(path: str) -> SystemConfig:
    """Read and validate a JSON config file; errors carry file context."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return parse_config_dict(doc)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def config_to_dict(config: SystemConfig) -> dict:
    """Canonical echo of a config; re-parsing it yields an identical config."""
    return {
        "sensors": [{"rate": float(r)} for r in config.sensor_rates],
        "service_rate": float(config.service_rate),
        "processes": [
            {
                "transition_matrix": [[float(v) for v in row] for row in p.transition_matrix],
                "state_change_rate": float(p.state_change_rate),
            }
            for p in config.processes
        ],
        "correlation": [[float(v) for v in row] for row in config.correlation],
    }


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf"
    if math.isnan(value):
        return "nan"
    return format(value, ".12g")


def _jsonable(value):
    """Floats that JSON cannot carry become the strings 'inf'/'nan'."""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        if math.isnan(value):
            return "nan"
        return value
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(_jsonable(doc), indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _error_ratios(config: SystemConfig) -> list[float]:
    vals = []
    for j in range(config.num_processes):
        try:
            vals.append(error_mod.error_ratio(config, j).ratio)
        except error_mod.UntrackedProcessError:
            vals.append(math.nan)
    return vals


def _threads(n_tasks: int) -> int:
    env = os.environ.get("AOI_CORR_THREADS", "").strip()
    cap = max(1, int(env)) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def _dump_chains(config: SystemConfig, path: str) -> None:
    payload = []
    for j in range(config.num_processes):
        try:
            chain = error_mod.error_ratio(config, j).chain
        except error_mod.UntrackedProcessError:
            chain = error_mod.build_embedded_chain(config, j)
        payload.append(
            {
                "process": j,
                "states": [list(s) for s in chain.states],
                "transition_matrix": [[float(v) for v in row] for row in chain.transition_matrix],
                "holding": [float(v) for v in chain.holding],
                "stationary": None
                if chain.stationary is None
                else [float(v) for v in chain.stationary],
            }
        )
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def cmd_analyze(args) -> int:
    config = load_config(args.config)
    result = aoi_mod.aoi_result(config)
    if args.chain_dump:
        _dump_chains(config, args.chain_dump)
    _emit(
        {
            "config": config_to_dict(config),
            "aoi": [float(v) for v in result.per_process],
            "aoi_sum": float(result.total),
            "error_ratio": _error_ratios(config),
        },
        args.out,
    )
    return EXIT_OK


def _metrics_doc(rep) -> dict:
    doc = {
        "aoi_mean": [float(v) for v in rep.aoi_mean],
        "error_ratio": [float(v) for v in rep.error_ratio],
        "interdeparture_mean": rep.interdeparture_mean,
        "interdeparture_second_moment": rep.interdeparture_second_moment,
        "arrivals": rep.arrivals,
        "drops": rep.drops,
        "departures": rep.departures,
    }
    if rep.n_reps > 1:
        doc["aoi_se"] = [float(v) for v in rep.aoi_se]
        doc["error_se"] = [float(v) for v in rep.error_se]
    return doc


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    params = SimParams(horizon=args.horizon, seed=args.seed, buffer_capacity=args.buffer)
    if args.event_log:
        metrics = run_simulation(config, params, log_events=True)
        metrics.events.write_csv(args.event_log)
    rep = replicate(config, params, args.reps)
    doc = {
        "config": config_to_dict(config),
        "params": {
            "horizon": params.horizon,
            "warmup": params.warmup,
            "seed": params.seed,
            "buffer_capacity": params.buffer_capacity,
            "reps": args.reps,
        },
        "metrics": _metrics_doc(rep),
    }
    _emit(doc, args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    config = load_config(args.config)
    analytic = aoi_mod.aoi_result(config)
    if np.any(np.isinf(analytic.per_process)):
        raise ValidationError("compare requires every process to be tracked (finite analytic age)")
    eps = [error_mod.error_ratio(config, j).ratio for j in range(config.num_processes)]
    params = SimParams(horizon=args.horizon, seed=args.seed, buffer_capacity=args.buffer)
    rep = replicate(config, params, args.reps)

    rows = []
    ok = True
    for j in range(config.num_processes):
        a = float(analytic.per_process[j])
        s = float(rep.aoi_mean[j])
        rel = abs(s - a) / a
        ok &= rel <= args.tolerance
        rows.append({"process": j, "metric": "aoi", "analytic": a, "simulated": s, "rel_diff": rel})
        ae = eps[j]
        se_ = float(rep.error_ratio[j])
        adiff = abs(se_ - ae)
        rel_e = adiff / ae if ae > 0 else math.inf
        ok &= adiff <= args.tolerance
        rows.append(
            {
                "process": j,
                "metric": "error_ratio",
                "analytic": ae,
                "simulated": se_,
                "abs_diff": adiff,
                "rel_diff": rel_e,
            }
        )
    _emit(
        {
            "config": config_to_dict(config),
            "tolerance": args.tolerance,
            "rows": rows,
            "pass": bool(ok),
        },
        args.out,
    )
    return EXIT_OK if ok else EXIT_TOLERANCE


def _parse_sweep(spec: str):
    parts = spec.split(":")
    if len(parts) not in (4, 5):
        raise UsageError("--sweep expects VAR:LO:HI:N (optionally :log)")
    var, lo_s, hi_s, n_s = parts[:4]
    scale = parts[4] if len(parts) == 5 else "lin"
    if scale not in ("lin", "log"):
        raise UsageError(f"--sweep scale must be 'lin' or 'log', got '{scale}'")
    try:
        lo, hi, n = float(lo_s), float(hi_s), int(n_s)
    except ValueError as exc:
        raise UsageError(f"--sweep bounds: {exc}") from exc
    if n < 2:
        raise UsageError("--sweep needs at least 2 steps")
    if scale == "log":
        if lo <= 0 or hi <= 0:
            raise UsageError("--sweep log scale needs positive bounds")
        grid = np.geomspace(lo, hi, n)
    else:
        grid = np.linspace(lo, hi, n)
    return var, grid


def _apply_sweep_var(config: SystemConfig, var: str, value: float) -> SystemConfig:
    """Return a copy of the config with one scalar replaced.

    Variables (1-based indices): lambdaI, mu, zetaJ, pc_I_J, and p, the
    symmetric tuning variable that fills the off-diagonal of a square
    correlation matrix with 1-p.
    """
    if var == "mu":
        return replace(config, service_rate=value)
    if var.startswith("lambda"):
        i = int(var[len("lambda"):]) - 1
        if not 0 <= i < config.num_sensors:
            raise ValidationError(f"sweep variable {var}: sensor index out of range")
        rates = np.array(config.sensor_rates)
        rates[i] = value
        return replace(config, sensor_rates=rates)
    if var.startswith("zeta"):
        j = int(var[len("zeta"):]) - 1
        if not 0 <= j < config.num_processes:
            raise ValidationError(f"sweep variable {var}: process index out of range")
        procs = list(config.processes)
        procs[j] = ProcessModel(procs[j].transition_matrix, value)
        return replace(config, processes=tuple(procs))
    if var.startswith("pc_"):
        try:
            _, i_s, j_s = var.split("_")
            i, j = int(i_s) - 1, int(j_s) - 1
        except ValueError as exc:
            raise ValidationError(f"sweep variable {var}: expected pc_I_J") from exc
        if not (0 <= i < config.num_sensors and 0 <= j < config.num_processes):
            raise ValidationError(f"sweep variable {var}: index out of range")
        pc = np.array(config.correlation)
        pc[i, j] = value
        return replace(config, correlation=pc)
    if var == "p":
        if config.num_sensors != config.num_processes:
            raise ValidationError("sweep variable p needs a square correlation matrix")
        pc = np.array(config.correlation)
        off = ~np.eye(config.num_sensors, dtype=bool)
        pc[off] = 1.0 - value
        return replace(config, correlation=pc)
    raise ValidationError(f"unknown sweep variable '{var}'")


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    var, grid = _parse_sweep(args.sweep)
    m = config.num_processes

    def point(value: float):
        cfg = validate_config(_apply_sweep_var(config, var, float(value)))
        ages = aoi_mod.aoi_result(cfg).per_process
        errs = _error_ratios(cfg)
        return list(map(float, ages)) + errs

    with ThreadPoolExecutor(max_workers=_threads(len(grid))) as pool:
        results = list(pool.map(point, grid))

    header = ["sweep_var", "value"]
    header += [f"aoi_{j + 1}" for j in range(m)] + [f"err_{j + 1}" for j in range(m)]
    lines = [",".join(header)]
    for value, vals in zip(grid, results):
        lines.append(",".join([var, _fmt(float(value))] + [_fmt(v) for v in vals]))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _solve_allocation(constraints: ConstraintSet, lam, m: int, step: float):
    if constraints.kind is Family.QUADRATIC_CONCAVE:
        return solve_grid(constraints, lam, m, step=step)
    return solve_closed_form(constraints, lam, m)


def cmd_optimize(args) -> int:
    config = load_config(args.config)
    n = config.num_sensors
    if args.budgets:
        try:
            budgets = [float(v) for v in args.budgets.split(",")]
        except ValueError as exc:
            raise UsageError(f"--budgets must be comma-separated numbers: {exc}") from exc
        if len(budgets) == 1:
            budgets = budgets * n
        if len(budgets) != n:
            raise UsageError(f"--budgets needs 1 or {n} values, got {len(budgets)}")
    else:
        budgets = [1.0] * n
    family = _FAMILIES[args.family]
    constraints = ConstraintSet(family, np.array(budgets))

    if args.sweep:
        # one optimization per grid point: CSV of the optimal matrix and objective
        var, grid = _parse_sweep(args.sweep)
        m = config.num_processes

        def point(value: float):
            cfg = validate_config(_apply_sweep_var(config, var, float(value)))
            res = _solve_allocation(constraints, cfg.sensor_rates, m, args.step)
            return res

        with ThreadPoolExecutor(max_workers=_threads(len(grid))) as pool:
            results = list(pool.map(point, grid))
        header = ["sweep_var", "value"]
        header += [f"pc_{i + 1}_{j + 1}" for i in range(n) for j in range(m)]
        header.append("objective")
        lines = [",".join(header)]
        for value, res in zip(grid, results):
            cells = [var, _fmt(float(value))]
            cells += [_fmt(float(v)) for v in np.asarray(res.correlation).ravel()]
            cells.append(_fmt(float(res.objective)))
            lines.append(",".join(cells))
        text = "\n".join(lines) + "\n"
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK

    result = _solve_allocation(constraints, config.sensor_rates, config.num_processes, args.step)
    cert = result.certificate
    doc = {
        "family": args.family,
        "budgets": budgets,
        "correlation": [[float(v) for v in row] for row in result.correlation],
        "objective": float(result.objective),
        "method": result.method,
        "step": result.step,
        "kkt": None
        if cert is None
        else {
            "stationarity_residual": cert.stationarity_residual,
            "complementarity_residual": cert.complementarity_residual,
            "feasible": cert.feasible,
            "tau": [[float(v) for v in row] for row in cert.tau],
            "v": [[float(v) for v in row] for row in cert.v],
            "xi": [float(v) for v in cert.xi],
        },
    }
    _emit(doc, args.out)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="aoicorr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the JSON system config")
        p.add_argument("--out", default=None, help="output path (stdout when omitted)")

    p = sub.add_parser("analyze", help="closed-form ages and error ratios")
    common(p)
    p.add_argument("--chain-dump", default=None,
                   help="also write the per-process jump chains (matrix, holding times, stationary) as JSON")
    p.set_defaults(func=cmd_analyze)

    def sim_opts(p, tolerance=False):
        common(p)
        p.add_argument("--seed", required=True, type=int, help="base RNG seed (required)")
        p.add_argument("--horizon", type=float, default=1e5, help="simulated time units")
        p.add_argument("--reps", type=int, default=1, help="independent replications")
        p.add_argument("--buffer", type=int, choices=(0, 1), default=0, help="buffer capacity")
        if tolerance:
            p.add_argument("--tolerance", type=float, default=0.05,
                           help="max relative AoI / absolute error-ratio deviation")

    p = sub.add_parser("simulate", help="Monte Carlo metrics")
    sim_opts(p)
    p.add_argument("--event-log", default=None, help="also write a per-event CSV (debugging)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="analytic vs simulated, gated by --tolerance")
    sim_opts(p, tolerance=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="vary one scalar, write CSV")
    common(p)
    p.add_argument("--sweep", required=True, metavar="VAR:LO:HI:N[:log]",
                   help="variable and grid (lambdaI, mu, zetaJ, pc_I_J, or p)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="optimal sensing allocation")
    common(p)
    p.add_argument("--family", required=True, choices=sorted(_FAMILIES))
    p.add_argument("--budgets", default=None, help="comma-separated per-sensor budgets (default 1)")
    p.add_argument("--step", type=float, default=1e-3, help="grid step for qconcave")
    p.add_argument("--sweep", default=None, metavar="VAR:LO:HI:N[:log]",
                   help="re-optimize along a parameter grid and write CSV instead of JSON")
    p.set_defaults(func=cmd_optimize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
