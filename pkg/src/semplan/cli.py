"""Command-line interface: compile-dfa, plan, simulate, eval-predicate, sweep.

Every command reads a scenario file (or, for sweep, generates benchmark
scenarios), writes its artifacts into --out, and uses exit codes
0 = success with solution, 2 = no solution, 3 = task violation,
1 = usage or I/O error.  All emitted files are byte-stable for a fixed
(scenario, seed) except for fields that report measured wall-clock time
(the sweep runtime column and the timings sidecars).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import oracles
from .executor import SUCCESS, VIOLATED, execute
from .ltl import compile_to_dfa, prune_dfa
from .planner import PlanModel, plan
from .predicates import prob_within_radius
from .scenario import ScenarioError, benchmark_scenario, load_scenario

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_SOLUTION = 2
EXIT_VIOLATION = 3


def _load(args):
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
        scenario.planner.seed = args.seed
    if args.uniform_sampling:
        scenario.planner.sampling = "uniform"
    return scenario


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_compile_dfa(args):
    scenario = _load(args)
    out = _outdir(args)
    dfa = compile_to_dfa(scenario.formula, state_cap=scenario.planner.state_cap)
    index = prune_dfa(dfa, scenario.atom_meta())
    (out / "dfa.txt").write_text(dfa.dump())
    report = {
        "states": dfa.n_states,
        "initial": dfa.initial,
        "accepting": dfa.accepting,
        "dead": dfa.dead,
        "alphabet": list(dfa.alphabet),
        "transitions_kept": index.kept_edge_count,
        "transitions_pruned": index.pruned_edge_count,
        "accepting_reachable_after_pruning": index.accept_reachable,
    }
    if not index.accept_reachable:
        report["warning"] = ("no pruned path from the initial to the accepting "
                             "state; the task may be infeasible or the pruning "
                             "too conservative -- planners fall back to the "
                             "unpruned automaton")
    _write_json(out / "pruning.json", report)
    print(f"DFA: {dfa.n_states} states, accepting={dfa.accepting}, "
          f"pruned {index.pruned_edge_count} transition assignments")
    if not index.accept_reachable:
        print("warning: accepting state unreachable in the pruned automaton")
    return EXIT_OK


def _write_plan_csv(path, scenario, result):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["step"]
        for j in range(len(scenario.robots)):
            head += [f"robot_{j + 1}_x", f"robot_{j + 1}_y", f"robot_{j + 1}_theta"]
        head += ["dfa_state", "label"]
        w.writerow(head)
        for i, pose in enumerate(result.poses):
            row = [i]
            for (x, y, th) in pose:
                row += [repr(round(x, 9)), repr(round(y, 9)), repr(round(th, 9))]
            row += [result.dfa_states[i], "|".join(sorted(result.labels[i]))]
            w.writerow(row)


def cmd_plan(args):
    from . import plots

    scenario = _load(args)
    out = _outdir(args)
    t0 = time.perf_counter()
    result = plan(scenario)
    wall = time.perf_counter() - t0
    stats = dict(result.stats)
    stats.pop("wall_time_s", None)
    stats["found"] = result.found
    stats["horizon"] = result.horizon
    stats["cost"] = round(result.cost, 9)
    _write_json(out / "plan_stats.json", stats)
    _write_json(out / "timings.json", {"plan_wall_time_s": wall})
    _write_plan_csv(out / "plan_trace.csv", scenario, result)
    plots.plot_plan(scenario, result, out / "plan.png")
    if result.found:
        print(f"solution: H={result.horizon} cost={result.cost:.4f} "
              f"(first found at iteration {stats['first_solution_iter']})")
        return EXIT_OK
    print("no solution found")
    return EXIT_NO_SOLUTION


def cmd_simulate(args):
    from . import plots

    scenario = _load(args)
    out = _outdir(args)
    trace = execute(scenario)
    lm_ids = [lm.id for lm in scenario.landmarks]
    trace.to_csv(out / "trace.csv", len(scenario.robots), lm_ids)
    stride = max(1, len(trace.records) // 200)
    with open(out / "trace_plot.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace.csv_header(len(scenario.robots), lm_ids))
        for r in trace.records[::stride]:
            w.writerow(r)
    summary = trace.summary()
    wall = summary.pop("wall_time_s")
    _write_json(out / "summary.json", summary)
    _write_json(out / "timings.json", {"mission_wall_time_s": wall})
    plots.plot_mission(scenario, trace, out / "mission.png")
    print(f"{trace.status}: {trace.steps} steps, {trace.replans} replans, "
          f"cost {trace.final_cost:.3f}")
    if trace.status == SUCCESS:
        return EXIT_OK
    if trace.status == VIOLATED:
        return EXIT_VIOLATION
    return EXIT_NO_SOLUTION


def cmd_eval_predicate(args):
    scenario = _load(args)
    out = _outdir(args)
    model = PlanModel(scenario)
    pose, map0, _ = model.root_state()
    team = model.team_of(pose)
    rows = []
    for p in scenario.predicates:
        idx = scenario.robot_index[p.robot]
        pos = np.array([team.poses[idx].x, team.poses[idx].y])
        if p.kind == "uncertainty":
            lm = map0.landmark(p.landmark)
            raw = lm.cov[0, 0] * lm.cov[1, 1] - lm.cov[0, 1] ** 2
            truth = raw <= p.delta
            threshold = p.delta
        elif p.kind == "proximity":
            lm = map0.landmark(p.landmark)
            raw = prob_within_radius(lm.mean, lm.cov, pos, p.radius)
            threshold = 1.0 - p.delta
            truth = raw >= threshold
        else:
            best = 0.0
            for lm in map0.landmarks:
                weight = lm.class_prob(p.cls) if p.kind == "class_proximity" else \
                    (1.0 if lm.top_class() == p.cls else 0.0)
                if weight <= 0.0:
                    continue
                best = max(best, weight * prob_within_radius(lm.mean, lm.cov, pos,
                                                             p.radius))
            raw = best
            threshold = 1.0 - p.delta
            truth = raw >= threshold
        rows.append({"name": p.name, "kind": p.kind, "robot": p.robot,
                     "target": p.landmark or p.cls or "",
                     "raw_value": repr(round(float(raw), 12)),
                     "threshold": repr(round(float(threshold), 12)),
                     "true": truth})
    with open(out / "predicates.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["name", "kind", "robot", "target",
                                           "raw_value", "threshold", "true"])
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"{r['name']:>20s}  {r['kind']:<24s} raw={r['raw_value']:<22s} "
              f"thr={r['threshold']:<22s} -> {r['true']}")
    return EXIT_OK


def _sweep_cell(n_robots, n_landmarks, seed, uniform):
    scenario = benchmark_scenario(n_robots=n_robots, n_landmarks=n_landmarks,
                                  seed=seed,
                                  sampling="uniform" if uniform else "biased")
    t0 = time.perf_counter()
    result = plan(scenario)
    return {
        "robots": n_robots,
        "landmarks": n_landmarks,
        "seed": seed,
        "found": result.found,
        "horizon": result.horizon,
        "cost": round(result.cost, 6),
        "iterations_to_first": result.stats["first_solution_iter"],
        "tree_size": result.stats["tree_size"],
        "runtime_s": round(time.perf_counter() - t0, 4),
    }


def _run_oracle_report(path):
    report = oracles.OracleReport()
    rng = np.random.default_rng(20240811)
    for i in range(20):
        a = rng.normal(size=(2, 2))
        cov = a @ a.T + 0.05 * np.eye(2)
        mean = rng.normal(scale=2.0, size=2)
        point = rng.normal(scale=2.0, size=2)
        r = rng.uniform(0.3, 3.0)
        mc, _ = oracles.mc_disk_mass(mean, cov, point, r, 100_000, rng)
        report.add(f"disk_mass_{i}", mc, prob_within_radius(mean, cov, point, r), 0.02)
    from . import ltl as _ltl

    for i in range(20):
        n = int(rng.integers(4, 15))
        nodes = list(range(n))
        edges = []
        for u in nodes:
            for v in rng.choice(n, size=rng.integers(1, 4), replace=False):
                edges.append((u, int(v)))
        adj = {}
        for u, v in edges:
            adj.setdefault(u, set()).add(v)
        dist = _ltl._all_pairs_hops(nodes, adj)
        src, dst = int(rng.integers(n)), int(rng.integers(n))
        got = dist.get(src, {}).get(dst, math.inf)
        want = oracles.hop_distance(nodes, edges, src, dst)
        report.add(f"hop_distance_{i}", want, got, 0, exact=True)
    for i in range(20):
        a = rng.normal(size=(2, 2))
        cov = a @ a.T + 0.1 * np.eye(2)
        h = rng.normal(size=(1, 2))
        q = np.array([[rng.uniform(0.05, 1.0)]])
        want = oracles.kf_posterior_cov(cov, np.eye(2), np.zeros((2, 2)), h, q)
        from .semantic_map import _joseph_update

        got, _ = _joseph_update(cov, h, q)
        report.add(f"kf_cov_{i}", float(np.linalg.det(want)),
                   float(np.linalg.det(got)), 1e-9)
    report.to_csv(path)
    return report.all_pass


def cmd_sweep(args):
    from . import plots

    out = _outdir(args)
    robots = [int(v) for v in args.robots.split(",")]
    landmarks = [int(v) for v in args.landmarks.split(",")]
    seeds = [int(v) for v in args.seeds.split(",")]
    cells = [(n, m, s) for n in robots for m in landmarks for s in seeds]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_cell, [c[0] for c in cells],
                                 [c[1] for c in cells], [c[2] for c in cells],
                                 [args.uniform_sampling] * len(cells)))
    else:
        rows = [_sweep_cell(n, m, s, args.uniform_sampling) for n, m, s in cells]

    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)

    summary = []
    for n in robots:
        for m in landmarks:
            cell = [r for r in rows if r["robots"] == n and r["landmarks"] == m]
            summary.append({
                "robots": n,
                "landmarks": m,
                "solved": sum(r["found"] for r in cell),
                "runs": len(cell),
                "mean_runtime_s": float(np.mean([r["runtime_s"] for r in cell])),
                "mean_horizon": float(np.mean([r["horizon"] for r in cell
                                               if r["found"]] or [0])),
            })
    plots.plot_sweep(summary, out / "sweep.png")
    for row in summary:
        print(f"N={row['robots']:<3d} M={row['landmarks']:<3d} "
              f"solved {row['solved']}/{row['runs']} "
              f"runtime {row['mean_runtime_s']:.2f}s  H~{row['mean_horizon']:.0f}")
    ok = all(r["found"] for r in rows)
    if args.oracle:
        if not _run_oracle_report(out / "oracle_report.csv"):
            print("oracle report: FAILURES (see oracle_report.csv)")
            return EXIT_USAGE
        print("oracle report: all checks passed")
    return EXIT_OK if ok else EXIT_NO_SOLUTION


# ---------------------------------------------------------------------------

def _add_common(sp, scenario_required=True):
    if scenario_required:
        sp.add_argument("--scenario", required=True, help="scenario YAML file")
    sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    sp.add_argument("--out", default="out", help="output directory")
    sp.add_argument("--workers", type=int, default=1,
                    help="parallel workers (sweep only; cells stay deterministic)")
    sp.add_argument("--uniform-sampling", action="store_true",
                    help="disable biased sampling (ablation)")


def main(argv=None):
    ap = argparse.ArgumentParser(prog="semplan",
                                 description="Mission planning over uncertain "
                                             "semantic maps")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("compile-dfa", help="compile and prune the task automaton")
    _add_common(sp)
    sp.set_defaults(fn=cmd_compile_dfa)

    sp = sub.add_parser("plan", help="plan an open-loop solution")
    _add_common(sp)
    sp.set_defaults(fn=cmd_plan)

    sp = sub.add_parser("simulate", help="closed-loop mission with replanning")
    _add_common(sp)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("eval-predicate", help="predicate values at the initial state")
    _add_common(sp)
    sp.set_defaults(fn=cmd_eval_predicate)

    sp = sub.add_parser("sweep", help="scalability grid over robots x landmarks")
    _add_common(sp, scenario_required=False)
    sp.add_argument("--robots", default="1,5", help="comma list of team sizes")
    sp.add_argument("--landmarks", default="5,15", help="comma list of map sizes")
    sp.add_argument("--seeds", default="0", help="comma list of seeds")
    sp.add_argument("--oracle", action="store_true",
                    help="also emit a brute-force oracle cross-check report")
    sp.set_defaults(fn=cmd_sweep)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
