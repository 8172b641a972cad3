"""Command-line entry point: ``largegames <command> SCENARIO [options]``.

Exit codes: 0 success, 1 invalid scenario or arguments, 2 solver or check
failure under ``--strict``, 3 I/O error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from typing import Optional

from largegames.convergence import (
    ExperimentReport,
    GameSequenceSpec,
    _table,
    closed_graph_experiment,
    concentration_experiment,
    discretize,
    merge_reports,
)
from largegames.errors import CapacityError, LargeGamesError, ScenarioError
from largegames.finite_games import MixedProfile, rsne_gap_exact, solve_rsne, summary
from largegames.limit_game import induced_distribution, ned_report, rsne_check, societal_summary, solve_limit_rsne
from largegames.measures import bl_distance, format_weight, prohorov
from largegames.scenario import check_scenario, load_scenario

EXIT_OK, EXIT_INVALID, EXIT_FLAGGED, EXIT_IO = 0, 1, 2, 3
DEFAULTS = {"seed": 0, "tol": 1e-6, "trials": 200}


class _Flagged(Exception):
    """Raised to request exit code 2 after output has been written."""


def _effective(args, scenario) -> dict:
    """Experiment settings: explicit flags override the scenario, which overrides defaults."""
    exp = dict(scenario.experiment)
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            exp[key] = flag
    return exp


def _config(args, scenario, exp: dict) -> dict:
    with open(args.scenario, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    flags = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return {
        "command": args.command,
        "scenario_path": args.scenario,
        "scenario_sha256": digest,
        "flags": flags,
        "experiment": exp,
        "scenario": scenario.data,
    }


def _emit(args, payload: dict, rows: list, extra_rows: Optional[list] = None):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        with open(f"{args.out}.json", "w") as fh:
            fh.write(text)
        with open(f"{args.out}.csv", "w") as fh:
            fh.write(_table(rows))
        if extra_rows:
            with open(f"{args.out}.trials.csv", "w") as fh:
                fh.write(_table(extra_rows))
        print(f"wrote {args.out}.json and {args.out}.csv")
    else:
        print(text)


def _report_payload(config: dict, report: ExperimentReport) -> dict:
    payload = report.to_dict()
    payload["config"] = config
    return payload


def _warn(scenario):
    for w in scenario.warnings:
        print(str(w), file=sys.stderr)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    with open(args.scenario) as fh:
        text = fh.read()
    scenario, issues = check_scenario(text)
    for issue in issues:
        print(str(issue))
    if scenario is None:
        n_err = sum(not i.warning for i in issues)
        print(f"invalid: {n_err} error(s)")
        return EXIT_INVALID
    print("ok")
    return EXIT_OK


def cmd_metric(args) -> int:
    scenario = load_scenario(args.scenario)
    _warn(scenario)
    missing = [name for name in (args.p, args.q) if name not in scenario.measures]
    if missing:
        known = sorted(scenario.measures)
        raise ScenarioError(f"unknown measure {missing[0]!r}; scenario defines {known}", "measures")
    p, q = scenario.measures[args.p], scenario.measures[args.q]
    rho, beta = prohorov(p, q), bl_distance(p, q)
    print(f"prohorov {format_weight(rho)}")
    print(f"bl {format_weight(beta)}")
    if args.out:
        exp = _effective(args, scenario)
        payload = {"p": args.p, "q": args.q, "prohorov": rho, "bl": beta, "config": _config(args, scenario, exp)}
        _emit(args, payload, [{"p": args.p, "q": args.q, "prohorov": rho, "bl": beta}])
    return EXIT_OK


def _strategy_rows(space, labels: list, strategies) -> list:
    rows = []
    for name, g in zip(labels, strategies):
        row = {"who": name}
        row.update({lab: float(w) for lab, w in zip(space.labels, g.weights)})
        rows.append(row)
    return rows


def cmd_solve(args) -> int:
    scenario = load_scenario(args.scenario)
    _warn(scenario)
    exp = _effective(args, scenario)
    config = _config(args, scenario, exp)
    space = scenario.space
    if args.limit:
        res = solve_limit_rsne(scenario.limit, tol=exp["tol"], max_iter=exp["max_iter"])
        check = rsne_check(scenario.limit, res.strategy, tol=exp["tol"])
        names = [scenario.limit.type_name(t) for t in range(len(scenario.limit.types))]
        tau = societal_summary(scenario.limit, res.strategy)
        payload = {
            "game": "limit",
            "gap": res.gap,
            "converged": res.converged,
            "iterations": res.iterations,
            "rsne_check": {"is_equilibrium": check.is_equilibrium, "worst_gap": check.worst_gap},
            "summary": tau.to_dict(),
            "strategy": {name: g.to_dict() for name, g in zip(names, res.strategy.strategies)},
            "config": config,
        }
        rows = _strategy_rows(space, names, res.strategy.strategies)
    else:
        if args.n is not None:
            game = discretize(scenario.limit, args.n, exp["scheme"], exp["seed"])
            names = [f"{i}:{scenario.limit.type_name(p.type_index)}" for i, p in enumerate(game.players)]
        else:
            if scenario.finite is None:
                raise ScenarioError("no finite_game block; use --n N or --limit", "finite_game")
            game = scenario.finite
            names = [str(i) for i in range(game.n)]
        res = solve_rsne(game, method=exp["method"], tol=exp["tol"], max_iter=exp["max_iter"], seed=exp["seed"])
        try:
            exact = rsne_gap_exact(game, res.profile)
        except CapacityError:
            exact = None
        payload = {
            "game": "finite",
            "n": game.n,
            "gap": res.gap,
            "exact_gap": exact,
            "converged": res.converged,
            "iterations": res.iterations,
            "summary": summary(game, res.profile).to_dict(),
            "profile": [g.to_dict() for g in res.profile.strategies],
            "config": config,
        }
        rows = _strategy_rows(space, names, res.profile.strategies)
    print(f"gap {format_weight(res.gap)} converged {res.converged}", file=sys.stderr)
    _emit(args, payload, rows)
    if args.strict and res.gap > exp["tol"]:
        raise _Flagged(f"certified gap {res.gap:.3g} exceeds tol {exp['tol']:.3g}")
    return EXIT_OK


def cmd_concentrate(args) -> int:
    scenario = load_scenario(args.scenario)
    _warn(scenario)
    exp = _effective(args, scenario)
    params = {"method": exp["method"], "tol": exp["tol"], "max_iter": exp["max_iter"], "seed": exp["seed"]}
    reports = []
    flagged = False
    games = []
    if args.finite:
        if scenario.finite is None:
            raise ScenarioError("no finite_game block", "finite_game")
        games.append((scenario.finite, scenario.finite_profile))
    else:
        games.extend((discretize(scenario.limit, n, exp["scheme"], exp["seed"]), None) for n in exp["sizes"])
    for game, profile in games:
        if profile is None:
            if exp["profile"] == "uniform":
                profile = MixedProfile.uniform(game)
            else:
                res = solve_rsne(game, **params)
                flagged |= not res.converged
                profile = res.profile
        reports.append(concentration_experiment(game, profile, exp["trials"], exp["seed"]))
    report = merge_reports(reports, {"profile": "given" if args.finite and scenario.finite_profile else exp["profile"]})
    _emit(args, _report_payload(_config(args, scenario, exp), report), report.records, report.trials)
    if args.strict and flagged:
        raise _Flagged("solver did not reach tol for some n")
    return EXIT_OK


def cmd_closedgraph(args) -> int:
    scenario = load_scenario(args.scenario)
    _warn(scenario)
    exp = _effective(args, scenario)
    spec = GameSequenceSpec(scenario.limit, exp["sizes"], exp["scheme"], exp["seed"])
    params = {"method": exp["method"], "tol": exp["tol"], "max_iter": exp["max_iter"], "seed": exp["seed"]}
    report = closed_graph_experiment(spec, params)
    _emit(args, _report_payload(_config(args, scenario, exp), report), report.records)
    if args.strict and report.metadata["any_flagged"]:
        raise _Flagged("solver did not reach tol for some n")
    return EXIT_OK


def cmd_ned(args) -> int:
    scenario = load_scenario(args.scenario)
    _warn(scenario)
    exp = _effective(args, scenario)
    res = solve_limit_rsne(scenario.limit, tol=exp["tol"], max_iter=exp["max_iter"])
    dist = induced_distribution(scenario.limit, res.strategy)
    check_tol = 2 * exp["tol"]
    atoms = ned_report(dist, scenario.limit, check_tol)
    passed = all(a.gap <= check_tol for a in atoms)
    chars = dist.space.characteristics
    rows = [
        {
            "characteristic": a.characteristic,
            "feasible": " ".join(chars[a.characteristic].feasible.labels),
            "payoff": chars[a.characteristic].payoff.source,
            "action": scenario.space.labels[a.action],
            "weight": a.weight,
            "gap": a.gap,
            "best_response": a.gap <= check_tol,
        }
        for a in atoms
    ]
    payload = {
        "solver_gap": res.gap,
        "converged": res.converged,
        "check_tol": check_tol,
        "passed": passed,
        "atoms": rows,
        "config": _config(args, scenario, exp),
    }
    print(f"ned {'pass' if passed else 'FAIL'} (solver gap {format_weight(res.gap)})", file=sys.stderr)
    _emit(args, payload, rows)
    if args.strict and not (passed and res.converged):
        raise _Flagged("equilibrium distribution check failed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", help="scenario YAML file")
    common.add_argument("--seed", type=int, default=None, help="master seed (default: scenario, else 0)")
    common.add_argument("--tol", type=float, default=None, help="gap tolerance (default: scenario, else 1e-6)")
    common.add_argument("--trials", type=int, default=None, help="Monte Carlo trials (default: scenario, else 200)")
    common.add_argument("--out", default=None, help="write PREFIX.json and PREFIX.csv instead of printing JSON")
    common.add_argument("--strict", action="store_true", help="exit 2 when a solver or check is flagged")

    parser = argparse.ArgumentParser(prog="largegames", description="Equilibria and metrics for large anonymous games.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a scenario file and list every problem")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("metric", parents=[common], help="Prohorov and bounded-Lipschitz distance of two named measures")
    p.add_argument("--p", required=True, help="name of the first measure")
    p.add_argument("--q", required=True, help="name of the second measure")
    p.set_defaults(func=cmd_metric)

    p = sub.add_parser("solve", parents=[common], help="solve the finite or the limit game")
    which = p.add_mutually_exclusive_group()
    which.add_argument("--n", type=int, help="discretize the limit game into N players")
    which.add_argument("--limit", action="store_true", help="solve the limit game")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("concentrate", parents=[common], help="empirical vs mean action distribution experiment")
    p.add_argument("--finite", action="store_true", help="use the finite_game block instead of discretizations")
    p.set_defaults(func=cmd_concentrate)

    p = sub.add_parser("closedgraph", parents=[common], help="equilibria along a sequence of finite games")
    p.set_defaults(func=cmd_closedgraph)

    p = sub.add_parser("ned", parents=[common], help="solve the limit game and check its equilibrium distribution")
    p.set_defaults(func=cmd_ned)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "solve" and args.n is not None and args.n < 1:
        parser.error("--n must be positive")
    if args.trials is not None and args.trials < 1:
        parser.error("--trials must be positive")
    if args.tol is not None and not args.tol > 0:
        parser.error("--tol must be positive")
    try:
        return args.func(args)
    except ScenarioError as exc:
        for issue in getattr(exc, "issues", []):
            print(str(issue), file=sys.stderr)
        if not getattr(exc, "issues", None):
            print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except _Flagged as exc:
        print(f"flagged: {exc}", file=sys.stderr)
        return EXIT_FLAGGED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except LargeGamesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
