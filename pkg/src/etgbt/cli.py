"""Command-line front end.

Subcommands: plan, simulate, verify-bounds, benchmark, gen-env.
Exit codes are a stable contract: 0 success, 2 input error, 3 no solution,
4 bound-verification failure.  All commands honor --seed and produce
byte-identical outputs on repeated invocation (the plan file's wall-time
provenance field is the one documented exception).  ETGBT_THREADS caps
benchmark concurrency; --quiet suppresses progress output.
"""

import argparse
import csv
import json
import os
import sys as _sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import scenario as scen
from .bounds import check_bound_dominates
from .environment import RandomEnvParams, random_environment
from .errors import EtgbtError, NoSolution, PlacementFailure, ScenarioError
from .planner import plan as run_planner
from .simulate import monte_carlo

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_SOLUTION = 3
EXIT_BOUND_FAIL = 4

VERIFY_HORIZON_MAX = 20
DEFAULT_DELTA_GRID = "0.25,0.5,1,2,4"


def _say(args, message: str) -> None:
    if not getattr(args, "quiet", False):
        print(message)


def _worker_count() -> int:
    env_cap = os.environ.get("ETGBT_THREADS")
    if env_cap:
        return max(1, int(env_cap))
    return max(1, min(4, os.cpu_count() or 1))


def cmd_plan(args) -> int:
    scenario = scen.load_scenario(args.scenario)
    params = scenario.planner
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.time_budget is not None:
        overrides["time_budget"] = args.time_budget
        overrides["max_iterations"] = args.max_iterations  # may be None
    if args.max_iterations is not None:
        overrides["max_iterations"] = args.max_iterations
    if overrides:
        params = replace(params, **overrides)
    iteration_log = [] if args.iter_log else None
    stats: dict = {}
    started = time.perf_counter()
    try:
        result = run_planner(scenario.system, scenario.environment, params,
                             scenario.initial_mean, scenario.sigma0, scenario.lambda0,
                             iteration_log=iteration_log, stats_out=stats)
    except NoSolution as exc:
        _say(args, f"no solution: {exc} ({exc.stats})")
        return EXIT_NO_SOLUTION
    wall = time.perf_counter() - started
    scen.save_plan(result, scenario.doc, params.seed, wall, args.out)
    if args.iter_log:
        with open(args.iter_log, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "tree_size", "best_cost"])
            for row in iteration_log:
                writer.writerow([row[0], row[1], "" if row[2] is None else repr(row[2])])
    _say(args, f"plan written to {args.out}: cost {result.expected_cost:.4f}, "
               f"horizon {result.horizon}, tree {stats.get('nodes_alive', 1)} nodes "
               f"({stats.get('iterations', 0)} iterations, {wall:.1f}s)")
    return EXIT_OK


def cmd_simulate(args) -> int:
    plan, scenario, _ = scen.load_plan(args.plan)
    runs = args.runs if args.runs is not None else scenario.sim_runs
    seed = args.seed if args.seed is not None else scenario.sim_seed
    stats = monte_carlo(plan, scenario.system, scenario.environment, runs, seed,
                        scenario.sigma0, scenario.lambda0)
    with open(args.out, "w") as fh:
        json.dump(stats.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    trace_path = args.traces or (os.path.splitext(args.out)[0] + "_traces.csv")
    with open(trace_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "trigger_rate", "min_epsilon"])
        writer.writerow([0, "", repr(float(stats.per_step_min_epsilon[0]))])
        for k in range(plan.horizon):
            writer.writerow([k + 1, repr(float(stats.per_step_trigger_rate[k])),
                             repr(float(stats.per_step_min_epsilon[k + 1]))])
    _say(args, f"{runs} rollouts: collision {stats.collision_fraction:.4f}, "
               f"goal {stats.goal_fraction:.4f}, mean cost {stats.mean_cost:.4f} "
               f"(plan expected {plan.expected_cost:.4f}), "
               f"min epsilon {stats.min_epsilon_overall:.3e}")
    return EXIT_OK


def cmd_verify_bounds(args) -> int:
    if args.horizon > VERIFY_HORIZON_MAX:
        raise ScenarioError("--horizon",
                            f"enumeration limit is {VERIFY_HORIZON_MAX} steps")
    try:
        deltas = [float(tok) for tok in args.delta_grid.split(",") if tok.strip()]
    except ValueError:
        raise ScenarioError("--delta-grid", "expected comma-separated numbers") from None
    if not deltas or any(d <= 0 for d in deltas):
        raise ScenarioError("--delta-grid", "thresholds must be positive")
    scenario = scen.load_scenario(args.scenario)
    all_pass = True
    rows = []
    for delta in deltas:
        report = check_bound_dominates(
            scenario.system, scenario.sigma0, scenario.lambda0,
            [delta] * args.horizon, args.horizon, bound_scale=args.bound_scale)
        rows.extend((delta, step, prefix, eps) for step, prefix, eps in report.rows)
        verdict = "PASS" if report.passed else "FAIL"
        _say(args, f"delta={delta:g}: min epsilon {report.min_epsilon:.3e}  {verdict}")
        all_pass &= report.passed
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["delta", "step", "gamma_prefix_id", "epsilon_min"])
            for delta, step, prefix, eps in rows:
                writer.writerow([repr(delta), step, prefix, repr(eps)])
    if not all_pass:
        _say(args, "BOUND VERIFICATION FAILED")
        return EXIT_BOUND_FAIL
    return EXIT_OK


def _trial_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence(entropy=master,
                                      spawn_key=(index,)).generate_state(1)[0])


def _benchmark_trial(scenario_doc: dict, budgets: list, master_seed: int,
                     trial_index: int, random_env: bool) -> list:
    """One paired trial: run every budget with the same seed (and environment)."""
    seed = _trial_seed(master_seed, trial_index)
    if random_env:
        env, start = random_environment(RandomEnvParams(seed=seed))
        scenario_doc = dict(scenario_doc)
        scenario_doc["environment"] = scen.environment_to_dict(env)
        initial = dict(scenario_doc["initial"])
        initial["mean"] = [float(start[0]), float(start[1])]
        scenario_doc["initial"] = initial
    scenario = scen.scenario_from_dict(scenario_doc)
    results = []
    for budget in budgets:
        params = replace(scenario.planner, seed=seed, time_budget=float(budget),
                         max_iterations=None)
        try:
            result = run_planner(scenario.system, scenario.environment, params,
                                 scenario.initial_mean, scenario.sigma0,
                                 scenario.lambda0)
            results.append(result.expected_cost)
        except (NoSolution, ValueError):
            results.append(None)
    return results


def cmd_benchmark(args) -> int:
    budgets = [float(tok) for tok in args.budgets.split(",") if tok.strip()]
    if budgets != sorted(budgets) or not budgets:
        raise ScenarioError("--budgets", "must be a nonempty ascending list of seconds")
    if args.random_envs is not None:
        base = scen.load_scenario(args.scenario) if args.scenario else None
        if base is None:
            raise ScenarioError("scenario", "benchmark --random-envs still needs a "
                                            "base scenario for system and planner config")
        trials = args.random_envs
        random_env = True
        doc = base.doc
    else:
        if not args.scenario:
            raise ScenarioError("scenario", "missing scenario path")
        doc = scen.load_scenario(args.scenario).doc
        trials = args.trials
        random_env = False
    workers = _worker_count()
    tasks = [(doc, budgets, args.seed, t, random_env) for t in range(trials)]
    if workers > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_benchmark_trial, *zip(*tasks)))
    else:
        rows = [_benchmark_trial(*task) for task in tasks]
    table = []
    for j, budget in enumerate(budgets):
        costs = [row[j] for row in rows if row[j] is not None]
        failed = trials - len(costs)
        if costs:
            mean = float(np.mean(costs))
            stderr = float(np.std(costs, ddof=1) / np.sqrt(len(costs))) if len(costs) > 1 else 0.0
        else:
            mean, stderr = float("nan"), float("nan")
        table.append((budget, trials, len(costs), failed, mean, stderr))
    with open(args.out, "w", newline="") as fh:
        fh.write("# cost uncertainty is the standard error of the mean\n")
        writer = csv.writer(fh)
        writer.writerow(["budget_s", "trials", "solved", "no_solution",
                         "mean_cost", "stderr_cost"])
        for row in table:
            writer.writerow([repr(row[0]), row[1], row[2], row[3],
                             repr(row[4]), repr(row[5])])
    _say(args, f"{'budget':>10} {'mean cost':>12} {'stderr':>8} {'solved':>7}")
    for budget, n_trials, solved, failed, mean, stderr in table:
        _say(args, f"{budget:>9.0f}s {mean:>12.3f} {stderr:>8.3f} {solved:>4}/{n_trials}")
    return EXIT_OK


DEFAULT_CONTROL_LIMIT = 5.0


def _generated_scenario_doc(env, start) -> dict:
    """Scenario document around a generated environment: planar unit-step system."""
    eye2 = [[1.0, 0.0], [0.0, 1.0]]
    scale = lambda M, s: [[v * s for v in row] for row in M]  # noqa: E731
    return {
        "schema_version": scen.SCHEMA_VERSION,
        "system": {"A": eye2, "B": eye2, "C": eye2,
                   "Q": scale(eye2, 0.01), "R": scale(eye2, 0.01),
                   "K": scale(eye2, 0.5)},
        "initial": {"mean": [float(start[0]), float(start[1])],
                    "sigma": scale(eye2, 0.01)},
        "environment": scen.environment_to_dict(env),
        "planner": {
            "control_low": [-DEFAULT_CONTROL_LIMIT, -DEFAULT_CONTROL_LIMIT],
            "control_high": [DEFAULT_CONTROL_LIMIT, DEFAULT_CONTROL_LIMIT],
            "p_safe": 0.99, "cost_cm": 1.0,
            "delta_min": 0.3, "delta_max": 5.0,
            "steps_min": 5, "steps_max": 20,
            "selection_radius": 5.0, "witness_radius": 2.5,
            "goal_bias": 0.05, "max_iterations": 40000, "seed": 0,
        },
        "simulation": {"runs": 3000, "seed": 0},
    }


def cmd_gen_env(args) -> int:
    params = RandomEnvParams(count=args.count, center_low=args.center_low,
                             center_high=args.center_high,
                             radius_mean=args.radius_mean,
                             radius_std=args.radius_std, seed=args.seed)
    env, start = random_environment(params)
    scen.save_scenario(_generated_scenario_doc(env, start), args.out)
    _say(args, f"scenario written to {args.out}: {args.count} obstacles, "
               f"start ({start[0]:.2f}, {start[1]:.2f})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="etgbt",
        description="Motion and event-triggered-communication planning "
                    "for linear-Gaussian robots")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="compute a plan for a scenario")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--time-budget", type=float, default=None)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--iter-log", default=None, help="per-iteration CSV log")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="Monte Carlo validation of a plan file")
    p.add_argument("plan")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--traces", default=None, help="per-step trace CSV path")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify-bounds",
                       help="exhaustively check the covariance bound recursion")
    p.add_argument("scenario")
    p.add_argument("--horizon", type=int, default=12)
    p.add_argument("--delta-grid", default=DEFAULT_DELTA_GRID)
    p.add_argument("--out", default=None, help="epsilon CSV path")
    p.add_argument("--bound-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify_bounds)

    p = sub.add_parser("benchmark", help="planner cost versus time budget")
    p.add_argument("scenario", nargs="?", default=None)
    p.add_argument("--random-envs", type=int, default=None,
                   help="trials on freshly generated environments")
    p.add_argument("--budgets", required=True, help="ascending seconds, comma-separated")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("gen-env", help="generate a randomized scenario")
    p.add_argument("--count", type=int, default=15)
    p.add_argument("--center-low", type=float, default=0.0)
    p.add_argument("--center-high", type=float, default=100.0)
    p.add_argument("--radius-mean", type=float, default=10.0)
    p.add_argument("--radius-std", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_env)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, PlacementFailure) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_INPUT
    except (EtgbtError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    _sys.exit(main())
