"""Experiment runner: ``ehlab run|check|policy``.

``run`` loads a JSON experiment config, dispatches to the library, writes
CSV result files plus a machine-readable ``summary.json`` (config hash,
library version, every computed scalar, tolerance verdicts for embedded
regression checks), and exits nonzero when an embedded check fails.
``check`` executes the acceptance suite and prints one pass/fail line per
criterion.  ``policy`` evaluates a single policy on one instance, with an
optional simulation.

Exit codes: 0 ok, 2 config error, 3 solver failure, 4 acceptance or
regression failure.  EHLAB_THREADS caps sweep parallelism.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .arrivals import ArrivalModel
from .errors import SolverError
from .mac import (
    MacInstance,
    inner_bound_dual,
    outer_bound,
    region_sweep,
    sum_throughput_vs_users,
)
from .numerics import gap_bound_g, throughput_upper_bound
from .p2p_dual import (
    cp_schedule,
    offline_throughput,
    ona_schedule,
    sandwich_bounds,
    sna_schedule,
    solve_dp,
)
from .p2p_single import solve_greedy, solve_integer
from .simulator import analytic_renewal_throughput, simulate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_ACCEPTANCE = 4


class ConfigError(ValueError):
    pass


def _require_keys(config: dict, allowed: set[str], kind: str) -> None:
    unknown = set(config) - allowed - {"kind"}
    if unknown:
        raise ConfigError(f"unknown config keys for kind={kind}: {sorted(unknown)}")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])


class _Experiment:
    """Accumulates outputs, scalar values and check verdicts for one run."""

    def __init__(self, out_dir: Path, config: dict):
        self.out_dir = out_dir
        self.config = config
        self.values: dict[str, float] = {}
        self.checks: list[dict] = []
        self.outputs: list[str] = []

    def check(self, name: str, value: float, expected: float, tol: float) -> None:
        self.values[name] = value
        self.checks.append(
            {
                "name": name,
                "value": value,
                "expected": expected,
                "tolerance": tol,
                "pass": bool(abs(value - expected) <= tol),
            }
        )

    def csv(self, name: str, header: list[str], rows: list[list]) -> None:
        path = self.out_dir / name
        _write_csv(path, header, rows)
        self.outputs.append(name)

    def finish(self) -> int:
        digest = hashlib.sha256(
            json.dumps(self.config, sort_keys=True).encode()
        ).hexdigest()
        summary = {
            "kind": self.config.get("kind"),
            "config_sha256": digest,
            "library_version": __version__,
            "values": self.values,
            "checks": self.checks,
            "outputs": self.outputs,
        }
        with (self.out_dir / "summary.json").open("w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        failed = [c["name"] for c in self.checks if not c["pass"]]
        if failed:
            print(f"regression checks failed: {failed}", file=sys.stderr)
            return EXIT_ACCEPTANCE
        return EXIT_OK


def _run_fig2(config: dict, exp: _Experiment) -> None:
    _require_keys(config, {"r_values"}, "fig2")
    r_values = config.get("r_values", [1, 2, 4, 8, 16, 30])
    rows = []
    for r in r_values:
        g = gap_bound_g(int(r))
        exp.values[f"G({r})"] = g
        rows.append([r, g, 0.72 / math.sqrt(r)])
    exp.csv("fig2.csv", ["r", "G", "ref_decay"], rows)
    if 1 in r_values:
        exp.check("G(1)", exp.values["G(1)"], 0.721, 2e-3)
    gs = [exp.values[f"G({r})"] for r in sorted(r_values)]
    exp.checks.append(
        {
            "name": "G nonincreasing in r",
            "value": float(max(gs[i + 1] - gs[i] for i in range(len(gs) - 1))),
            "expected": 0.0,
            "tolerance": 1e-12,
            "pass": all(gs[i + 1] <= gs[i] + 1e-12 for i in range(len(gs) - 1)),
        }
    )


def _run_fig3(config: dict, exp: _Experiment) -> None:
    _require_keys(config, {"b_values", "p", "include_dp"}, "fig3")
    b_values = config.get("b_values", [1, 2, 3, 5, 8, 13, 22])
    p = config.get("p", 0.5)
    include_dp = config.get("include_dp", True)
    header = ["B", "T_ub", "T_off", "T_on", "T_ONA", "T_SNA", "T_SB"]
    rows = []
    for b in b_values:
        b = int(b)
        mu = p  # e_h = 1, r = B
        t_ub = throughput_upper_bound(mu)
        t_off = offline_throughput(float(b), b, p)
        t_on = solve_dp(float(b), b, p).gain if include_dp else float("nan")
        t_ona = ona_schedule(float(b), b, p)[1]
        t_sna = analytic_renewal_throughput(sna_schedule(float(b), b, p), b, p)
        t_sb = solve_integer(float(b), mu).integer_throughput
        rows.append([b, t_ub, t_off, t_on, t_ona, t_sna, t_sb])
        for name, val in zip(header[1:], rows[-1][1:]):
            exp.values[f"{name}(B={b})"] = val
    exp.csv("fig3.csv", header, rows)
    pins = {
        "T_off(B=1)": (0.27794, 5e-4),
        "T_ONA(B=1)": (0.25000, 5e-4),
        "T_SNA(B=1)": (0.20076, 5e-4),
        "T_SB(B=1)": (0.16667, 5e-4),
    }
    if include_dp:
        pins["T_on(B=1)"] = (0.2500, 3e-3)
    for name, (target, tol) in pins.items():
        if name in exp.values:
            exp.check(name, exp.values[name], target, tol)


def _run_fig4(config: dict, exp: _Experiment) -> None:
    _require_keys(config, {"r_values", "e_h_values", "p", "include_dp"}, "fig4")
    r_values = config.get("r_values", [1, 3])
    e_h_values = config.get("e_h_values", [1, 2, 3, 5, 8, 13, 22, 36, 60, 100])
    p = config.get("p", 0.1)
    include_dp = config.get("include_dp", False)
    header = ["r", "E_H", "T_ub", "T_on", "T_ONA", "T_SNA", "T_CP", "T_lb", "T_SB"]
    rows = []
    for r in r_values:
        for e_h in e_h_values:
            b = float(r * e_h)
            mu = p * e_h
            t_ub, t_lb = sandwich_bounds(b, int(r), p)
            t_on = solve_dp(b, int(r), p).gain if include_dp else float("nan")
            t_ona = ona_schedule(b, int(r), p)[1]
            t_sna = analytic_renewal_throughput(sna_schedule(b, int(r), p), int(r), p)
            t_cp = analytic_renewal_throughput(cp_schedule(b, int(r), p), int(r), p)
            t_sb = solve_integer(b, mu).integer_throughput
            rows.append([r, e_h, t_ub, t_on, t_ona, t_sna, t_cp, t_lb, t_sb])
    exp.csv("fig4.csv", header, rows)


def _sim_models(p_values, r, mu):
    for p in p_values:
        e_h = mu / p
        yield p, ArrivalModel(p=p, e_h=e_h, battery_capacity=r * e_h)


def _run_fig5(config: dict, exp: _Experiment) -> None:
    allowed = {"p_values", "r_values", "mu", "num_slots", "seed"}
    _require_keys(config, allowed, "fig5")
    p_values = config.get("p_values", [0.01, 0.05, 0.125, 0.2, 1 / 3, 0.5, 1.0])
    r_values = config.get("r_values", [2, 4])
    mu = config.get("mu", 1.0)
    num_slots = int(config.get("num_slots", 200_000))
    seed = int(config.get("seed", 7))
    header = ["r", "p", "T_ub", "T_OA", "T_ONA", "T_SA", "T_SNA", "T_CP", "T_SB"]
    rows = []
    for r in r_values:
        for p, model in _sim_models(p_values, int(r), mu):
            b = model.battery_capacity
            t_oa = simulate("oa", model, "dual", num_slots, seed).avg_throughput
            t_sa = simulate("sa", model, "dual", num_slots, seed + 1).avg_throughput
            t_ona = ona_schedule(b, int(r), p)[1]
            t_sna = analytic_renewal_throughput(sna_schedule(b, int(r), p), int(r), p)
            t_cp = analytic_renewal_throughput(cp_schedule(b, int(r), p), int(r), p)
            t_sb = solve_integer(b, mu).integer_throughput
            rows.append(
                [r, p, throughput_upper_bound(mu), t_oa, t_ona, t_sa, t_sna, t_cp, t_sb]
            )
    exp.csv("fig5.csv", header, rows)


def _run_fig6(config: dict, exp: _Experiment) -> None:
    allowed = {"p_values", "r_values", "mu", "num_slots", "seed"}
    _require_keys(config, allowed, "fig6")
    p_values = config.get("p_values", [0.01, 0.05, 0.125, 0.2, 1 / 3, 0.5, 1.0])
    r_values = config.get("r_values", [2, 4])
    mu = config.get("mu", 1.0)
    num_slots = int(config.get("num_slots", 200_000))
    seed = int(config.get("seed", 11))
    header = ["r", "p", "policy", "discarded_pct_of_mu"]
    rows = []
    for r in r_values:
        for p, model in _sim_models(p_values, int(r), mu):
            for policy in ("oa", "ona", "sa", "sna", "cp"):
                stats = simulate(policy, model, "dual", num_slots, seed)
                rows.append([r, p, policy, 100.0 * stats.discarded_per_slot / mu])
    exp.csv("fig6.csv", header, rows)


def _run_fig7(config: dict, exp: _Experiment) -> None:
    allowed = {"resolution", "symmetric", "e_h", "p_1", "p_2", "e_h_1", "e_h_2", "b"}
    _require_keys(config, allowed, "fig7")
    resolution = int(config.get("resolution", 25))
    b = float(config.get("b", 20.0))
    e_h_1 = float(config.get("e_h_1", config.get("e_h", 10.0)))
    e_h_2 = float(config.get("e_h_2", config.get("e_h", 10.0)))
    p_1 = float(config.get("p_1", 0.25))
    p_2 = float(config.get("p_2", 0.25))
    instance = MacInstance(
        [ArrivalModel(p_1, e_h_1, b), ArrivalModel(p_2, e_h_2, b)]
    )
    ob = outer_bound(instance)
    ib = inner_bound_dual(instance)
    exp.values["outer_per_user"] = ob[(0,)]
    exp.values["outer_sum"] = ob[(0, 1)]
    exp.values["inner_db_sum"] = ib[(0, 1)]
    rows = []
    for case in ("single", "dual"):
        boundary = region_sweep(instance, case, resolution)
        for pt in boundary.points:
            rows.append(
                [
                    case,
                    pt.weights[0],
                    pt.throughputs[0],
                    pt.throughputs[1],
                    int(pt.converged),
                    pt.iterations,
                ]
            )
        if boundary.failures:
            raise SolverError("; ".join(boundary.failures))
    exp.csv("fig7.csv", ["case", "lambda_1", "T_1", "T_2", "converged", "iterations"], rows)
    exp.check("outer_sum", ob[(0, 1)], throughput_upper_bound(p_1 * e_h_1 + p_2 * e_h_2), 1e-12)


def _run_fig8(config: dict, exp: _Experiment) -> None:
    allowed = {"u_max", "p", "e_h", "r_factors"}
    _require_keys(config, allowed, "fig8")
    u_max = int(config.get("u_max", 8))
    p = float(config.get("p", 0.2))
    e_h = float(config.get("e_h", 10.0))
    r_factors = config.get("r_factors", [1, 5])
    header = ["U", "upper"] + [f"dual_B_{k}EH" for k in r_factors] + ["single"]
    upper = sum_throughput_vs_users(ArrivalModel(p, e_h, e_h), "upper", u_max)
    duals = [
        sum_throughput_vs_users(ArrivalModel(p, e_h, k * e_h), "dual", u_max)
        for k in r_factors
    ]
    single = sum_throughput_vs_users(ArrivalModel(p, e_h, e_h), "single", u_max)
    rows = []
    for u in range(u_max):
        rows.append([u + 1, upper[u]] + [d[u] for d in duals] + [single[u]])
    exp.csv("fig8.csv", header, rows)
    if u_max >= 3:
        exp.check("upper(U=3)", upper[2], throughput_upper_bound(3 * p * e_h), 1e-12)


def _run_table1(config: dict, exp: _Experiment) -> None:
    allowed = {"p_values", "r_values", "mu", "num_slots", "seed"}
    _require_keys(config, allowed, "table1")
    p_values = config.get("p_values", [0.01, 0.5])
    r_values = config.get("r_values", [2, 4])
    mu = config.get("mu", 1.0)
    num_slots = int(config.get("num_slots", 300_000))
    seed = int(config.get("seed", 5))
    rows = []
    for r in r_values:
        for p, model in _sim_models(p_values, int(r), mu):
            for policy in ("oa", "ona", "sa", "sna", "cp"):
                stats = simulate(policy, model, "dual", num_slots, seed)
                rows.append([r, p, policy, 100.0 * stats.idle_fraction])
            sb_stats = simulate("sb_opt", model, "single", num_slots, seed)
            rows.append([r, p, "sb_opt", 100.0 * sb_stats.idle_fraction])
    exp.csv("table1.csv", ["r", "p", "policy", "idle_pct"], rows)


def _run_custom(config: dict, exp: _Experiment) -> None:
    allowed = {"op", "b", "r", "p", "num_slots", "seed"}
    _require_keys(config, allowed, "custom")
    op = config.get("op")
    if op not in ("ona", "sna", "cp", "offline", "sandwich", "sb", "dp"):
        raise ConfigError(f"unknown custom op {op!r}")
    try:
        b = float(config["b"])
        r = int(config["r"])
        p = float(config["p"])
    except KeyError as exc:
        raise ConfigError(f"custom config requires key {exc}") from None
    row: list = [op, b, r, p]
    header = ["op", "b", "r", "p"]
    if op in ("ona", "sna", "cp"):
        if op == "ona":
            schedule, value = ona_schedule(b, r, p)
        else:
            schedule = sna_schedule(b, r, p) if op == "sna" else cp_schedule(b, r, p)
            value = analytic_renewal_throughput(schedule, r, p)
        header += ["throughput", "horizon"]
        row += [value, len(schedule.powers)]
        exp.values[f"{op}_throughput"] = value
        if config.get("num_slots"):
            model = ArrivalModel(p, b / r, b)
            stats = simulate(
                op, model, "dual", int(config["num_slots"]), int(config.get("seed", 0))
            )
            header += ["simulated", "ci"]
            row += [stats.avg_throughput, stats.ci_halfwidth]
    elif op == "offline":
        value = offline_throughput(b, r, p)
        header += ["throughput"]
        row += [value]
        exp.values["offline_throughput"] = value
    elif op == "sandwich":
        t_ub, t_lb = sandwich_bounds(b, r, p)
        header += ["T_ub", "T_lb"]
        row += [t_ub, t_lb]
    elif op == "sb":
        sol = solve_integer(b, p * b / r)
        header += ["n_star", "throughput"]
        row += [sol.n_star, sol.integer_throughput]
        exp.values["sb_throughput"] = sol.integer_throughput
    elif op == "dp":
        sol = solve_dp(b, r, p)
        header += ["gain", "iterations"]
        row += [sol.gain, sol.iterations]
        exp.values["dp_gain"] = sol.gain
    exp.csv("custom.csv", header, [row])


_RUNNERS = {
    "fig2": _run_fig2,
    "fig3": _run_fig3,
    "fig4": _run_fig4,
    "fig5": _run_fig5,
    "fig6": _run_fig6,
    "fig7": _run_fig7,
    "fig8": _run_fig8,
    "table1": _run_table1,
    "custom": _run_custom,
}


def _cmd_run(args) -> int:
    try:
        config = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    kind = config.get("kind")
    if kind not in _RUNNERS:
        print(f"config error: unknown kind {kind!r}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    exp = _Experiment(out_dir, config)
    try:
        _RUNNERS[kind](config, exp)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    status = exp.finish()
    print(f"wrote {', '.join(exp.outputs + ['summary.json'])} to {out_dir}")
    return status


def _cmd_check(args) -> int:
    from .acceptance import run_acceptance

    results = run_acceptance(quick=args.quick)
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  [{r.duration:6.1f}s]")
        for line in r.details:
            if args.verbose or not r.passed:
                print(f"        {line}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} criteria passed")
    return EXIT_OK if failed == 0 else EXIT_ACCEPTANCE


def _cmd_policy(args) -> int:
    b, r, p = args.b, args.r, args.p
    try:
        if args.name in ("ona", "sna", "cp"):
            if args.name == "ona":
                schedule, value = ona_schedule(b, r, p)
            else:
                schedule = sna_schedule(b, r, p) if args.name == "sna" else cp_schedule(b, r, p)
                value = analytic_renewal_throughput(schedule, r, p)
            print(f"analytic throughput: {value:.6f}")
            shown = schedule.powers[: min(len(schedule.powers), 12)]
            print(f"schedule ({len(schedule.powers)} slots): {np.array2string(shown, precision=4)}"
                  + (" ..." if len(schedule.powers) > 12 else ""))
        elif args.name == "offline":
            print(f"analytic throughput: {offline_throughput(b, r, p):.6f}")
        elif args.name == "sb":
            sol = solve_integer(b, p * b / r)
            print(
                f"relaxed: P={sol.relaxed_power:.6f} T={sol.relaxed_throughput:.6f}; "
                f"integer: N*={sol.n_star} T={sol.integer_throughput:.6f}"
            )
        elif args.name == "greedy":
            sol = solve_greedy(p, b / r)
            print(f"P*={sol.power:.6f} tau*={sol.tau:.6f} T={sol.throughput:.6f}")
        elif args.name == "dp":
            sol = solve_dp(b, r, p)
            print(f"gain: {sol.gain:.6f} ({sol.iterations} sweeps, span {sol.span:.1e})")
        else:
            print(f"unknown policy {args.name!r}", file=sys.stderr)
            return EXIT_CONFIG
        if args.simulate:
            model = ArrivalModel(p, b / r, b)
            system = "single" if args.name == "sb" else "dual"
            name = "sb_opt" if args.name == "sb" else args.name
            if args.name in ("greedy", "dp"):
                print("simulation not supported for this policy via the CLI")
                return EXIT_CONFIG
            stats = simulate(name, model, system, args.simulate, args.seed)
            print(
                f"simulated: T={stats.avg_throughput:.6f} +- {stats.ci_halfwidth:.6f}, "
                f"idle={stats.idle_fraction:.4f}, discarded/slot={stats.discarded_per_slot:.6f}"
            )
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ehlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)

    p_check = sub.add_parser("check", help="run the acceptance suite")
    p_check.add_argument("--quick", action="store_true")
    p_check.add_argument("--verbose", action="store_true")

    p_pol = sub.add_parser("policy", help="evaluate one policy")
    p_pol.add_argument("name")
    p_pol.add_argument("--b", type=float, required=True)
    p_pol.add_argument("--r", type=int, required=True)
    p_pol.add_argument("--p", type=float, required=True)
    p_pol.add_argument("--simulate", type=int, default=0)
    p_pol.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "check":
        return _cmd_check(args)
    return _cmd_policy(args)


if __name__ == "__main__":
    sys.exit(main())
