"""Command-line front end.

Every run writes its CSV outputs plus a ``manifest.json`` (subcommand,
scenario, seed, flags, version, outputs, wall time) into the output
directory, so results can be reproduced bit for bit. Exit codes: 0 success,
1 validation error, 2 check-suite failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis, checks, jump, nojump, oracle, pathsim, riccati, scenarios
from .model import MarketScenario, ScenarioError, load_scenario

USAGE_EXIT = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(USAGE_EXIT)


def _add_common(parser, scenario_required: bool = True, paths_default: int = 10_000):
    parser.add_argument("--scenario", type=Path, required=scenario_required,
                        help="scenario JSON document")
    parser.add_argument("--seed", type=int, default=42, help="master RNG seed")
    parser.add_argument("--paths", type=int, default=paths_default,
                        help="Monte Carlo path count")
    parser.add_argument("--steps", type=int, default=None,
                        help="override the scenario's grid steps (default: keep)")
    parser.add_argument("--out", type=Path, default=Path("./out"),
                        help="output directory (all files land here)")


def build_parser() -> _Parser:
    parser = _Parser(prog="intraday-eq",
                     description="Equilibrium pricing and simulation for an "
                                 "intraday power market")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("riccati", help="solve the per-agent cost-weight system")
    _add_common(p)

    p = sub.add_parser("weights", help="equilibrium weight curves (no-jump)")
    _add_common(p)

    p = sub.add_parser("volatility", help="analytic price-volatility curve")
    _add_common(p)
    p.add_argument("--alpha", type=float, default=None,
                   help="mix proportion of the scenario's first agent type "
                        "(needs a two-agent template scenario)")
    p.add_argument("--n-agents", type=int, default=200,
                   help="market size for --alpha mixes")

    p = sub.add_parser("simulate", help="Monte Carlo equilibrium paths")
    _add_common(p)
    p.add_argument("--mode", choices=pathsim.MODES, default="nojump-closed-form")
    p.add_argument("--dump-paths", type=int, default=16,
                   help="number of paths written to paths.csv")

    p = sub.add_parser("sweep-alpha", help="volatility curves across agent mixes")
    _add_common(p)
    p.add_argument("--alphas", type=float, nargs="+",
                   default=[1.0, 0.115, 0.05, 0.005, 0.0])
    p.add_argument("--n-agents", type=int, default=200)

    p = sub.add_parser("jump-study", help="time-0 price/rate across outage intensities")
    _add_common(p)
    p.add_argument("--lambdas", type=float, nargs="+",
                   default=list(np.linspace(0.0, 1.0, 21)))

    p = sub.add_parser("two-agent", help="exact single-outage trajectories")
    _add_common(p, paths_default=100)

    p = sub.add_parser("oracle", help="discrete-game convergence table")
    _add_common(p)
    p.add_argument("--k-values", type=int, nargs="+", default=[25, 50, 100, 200])

    p = sub.add_parser("check", help="run the full verification suite")
    _add_common(p, scenario_required=False)

    return parser


def _load(args) -> MarketScenario:
    scenario = load_scenario(args.scenario)
    if args.steps is not None:
        scenario = scenario.replace_steps(args.steps)
    return scenario


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


class _Run:
    """Collects outputs and writes the manifest when the command finishes."""

    def __init__(self, args):
        self.args = args
        self.out: Path = args.out
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.t0 = time.monotonic()

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def finish(self) -> None:
        flags = {k: (str(v) if isinstance(v, Path) else v)
                 for k, v in vars(self.args).items() if k != "command"}
        manifest = {
            "subcommand": self.args.command,
            "scenario": str(self.args.scenario) if self.args.scenario else None,
            "seed": getattr(self.args, "seed", None),
            "flags": flags,
            "tool_version": __version__,
            "outputs": self.outputs,
            "wall_time_s": round(time.monotonic() - self.t0, 3),
        }
        with open(self.out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, default=str)
            fh.write("\n")


def cmd_riccati(args) -> int:
    scenario = _load(args)
    run = _Run(args)
    tables = riccati.solve_all(scenario)
    rows = []
    for i, table in enumerate(tables):
        for e in range(table.n_states):
            for k, t in enumerate(scenario.grid.points):
                rows.append((t, i, e, table.values[e, k]))
    _write_csv(run.path("riccati.csv"), ["t", "agent", "state", "y"], rows)
    run.finish()
    return 0


def cmd_weights(args) -> int:
    scenario = _load(args)
    run = _Run(args)
    w = nojump.compute_weights(scenario, riccati.solve_all(scenario))
    rows = []
    for i in range(scenario.n_agents):
        for k, t in enumerate(scenario.grid.points):
            rows.append((t, i, w.F[i, k], w.G[k], w.pi[i, k]))
    _write_csv(run.path("weights.csv"), ["t", "agent", "F", "G", "pi"], rows)
    run.finish()
    return 0


def _alpha_scenario(scenario: MarketScenario, alpha: float, n_agents: int) -> MarketScenario:
    if scenario.n_agents != 2:
        raise ScenarioError("--alpha needs a two-agent template scenario")
    return analysis.mixed_market(scenario.agents[0], scenario.agents[1], alpha,
                                 n_agents, scenario.horizon, scenario.grid_steps)


def cmd_volatility(args) -> int:
    scenario = _load(args)
    if args.alpha is not None:
        scenario = _alpha_scenario(scenario, args.alpha, args.n_agents)
    run = _Run(args)
    w = nojump.compute_weights(scenario, riccati.solve_all(scenario))
    curve = nojump.volatility_curve(scenario, w)
    _write_csv(run.path("zeta.csv"), ["t", "zeta_sq"],
               zip(scenario.grid.points, curve.values))
    run.finish()
    return 0


def cmd_simulate(args) -> int:
    scenario = _load(args)
    run = _Run(args)
    plan = pathsim.RngPlan(args.seed)
    ens = pathsim.simulate_equilibrium(scenario, plan, args.paths, mode=args.mode)
    stats = analysis.ensemble_stats(ens)

    dump = min(args.dump_paths, ens.n_paths)
    rows = []
    for p in range(dump):
        for k, t in enumerate(ens.grid_points):
            for i in range(scenario.n_agents):
                rows.append((
                    p, t, i, ens.demands[k, i, p], int(ens.chain_states[k, i, p]),
                    ens.inventories[k, i, p], ens.rates[k, i, p], ens.prices[k, p],
                ))
    _write_csv(run.path("paths.csv"),
               ["path", "t", "agent", "D", "state", "X", "q", "P"], rows)

    price_mean = ens.prices.mean(axis=1)
    price_se = (ens.prices.std(axis=1, ddof=1) / np.sqrt(ens.n_paths)
                if ens.n_paths > 1 else np.zeros_like(price_mean))
    summary = []
    for k, t in enumerate(ens.grid_points):
        drift = stats.drift_mean[k] if k < len(stats.drift_mean) else ""
        qv = stats.qv_rate[k] if k < len(stats.qv_rate) else ""
        summary.append((t, price_mean[k], price_se[k], drift, qv, ens.clearing_max))
    _write_csv(run.path("ensemble.csv"),
               ["t", "price_mean", "price_se", "drift_mean", "qv_rate", "clearing_max"],
               summary)
    run.finish()
    return 0


def cmd_sweep_alpha(args) -> int:
    scenario = _load(args)
    if scenario.n_agents != 2:
        raise ScenarioError("sweep-alpha needs a two-agent template scenario")
    run = _Run(args)
    points = analysis.samuelson_sweep(
        scenario.agents[0], scenario.agents[1], args.alphas,
        n_agents=args.n_agents, horizon=scenario.horizon,
        grid_steps=scenario.grid_steps,
    )
    rows = []
    for pt in points:
        for t, z in zip(pt.t, pt.zeta_sq):
            rows.append((pt.alpha, t, z, pt.classification))
    _write_csv(run.path("alpha_sweep.csv"), ["alpha", "t", "zeta_sq", "class"], rows)
    run.finish()
    return 0


def cmd_jump_study(args) -> int:
    scenario = _load(args)
    run = _Run(args)
    points = analysis.lambda_sweep(scenario, args.lambdas)
    _write_csv(run.path("jump_sweep.csv"), ["lambda", "P0", "q2_0"],
               [(p.lam, p.p0, p.q2_0) for p in points])
    run.finish()
    return 0


def cmd_two_agent(args) -> int:
    scenario = _load(args)
    run = _Run(args)
    plan = pathsim.RngPlan(args.seed)
    ens = pathsim.simulate_equilibrium(scenario, plan, args.paths, mode="two-agent-jump")
    rows = []
    for p in range(ens.n_paths):
        for k, t in enumerate(ens.grid_points):
            rows.append((p, t, int(ens.chain_states[k, 1, p]),
                         ens.inventories[k, 0, p], ens.rates[k, 0, p], ens.prices[k, p]))
    _write_csv(run.path("two_agent_paths.csv"),
               ["path", "t", "state2", "X1", "q1", "P"], rows)
    run.finish()
    return 0


def cmd_oracle(args) -> int:
    scenario = _load(args)
    run = _Run(args)
    tables = riccati.solve_all(scenario)
    state = jump.MatrixState.from_tables(
        scenario, tables, [a.initial_state for a in scenario.agents],
        scenario.d0(), scenario.x0(), t=0.0,
    )
    report = oracle.convergence_report(
        scenario, args.k_values, jump.price_general(state), jump.x_drift_general(state),
    )
    _write_csv(run.path("oracle_convergence.csv"), ["K", "max_err_P", "max_err_q"],
               zip(report.steps, report.max_err_price, report.max_err_rate))
    run.finish()
    return 0


def cmd_check(args) -> int:
    scenario = _load(args) if args.scenario else None
    run = _Run(args)
    results = checks.run_all(seed=args.seed, n_paths=args.paths, scenario=scenario)
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name:<{width}}  {r.detail}")
        failures += 0 if r.passed else 1
    _write_csv(run.path("check_report.csv"), ["name", "passed", "detail"],
               [(r.name, int(r.passed), r.detail) for r in results])
    run.finish()
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 0 if failures == 0 else 2


_COMMANDS = {
    "riccati": cmd_riccati,
    "weights": cmd_weights,
    "volatility": cmd_volatility,
    "simulate": cmd_simulate,
    "sweep-alpha": cmd_sweep_alpha,
    "jump-study": cmd_jump_study,
    "two-agent": cmd_two_agent,
    "oracle": cmd_oracle,
    "check": cmd_check,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return USAGE_EXIT
    try:
        return _COMMANDS[args.command](args)
    except (ScenarioError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(dispatch())
