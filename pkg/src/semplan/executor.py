"""Closed-loop execution: run a plan, learn the map online, replan.

The executor mirrors the planner's discrete-time model step for step.
At each step it consumes the current label (computed from the online
map), advances the automaton, applies the next planned control, advances
the ground truth with process noise, collects gated measurements and
fuses them into the online map.  Before each move it re-simulates the
next few planned transitions against the online belief (propagated by
the same measurement-free prediction used during planning); if any
planned automaton transition no longer fires, a fresh tree is planted at
the current state.  With exact priors and no noise the online map equals
the planned map and the plan executes verbatim with zero replans.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .planner import PlanModel, Planner, PlanningError
from .semantic_map import (class_belief_update, ground_truth_step,
                           posterior_position_update)
from .semantic_map import SemanticMapEstimate
from .sensing import classify, sense

__all__ = ["Executor", "MissionTrace", "execute", "lookahead_feasible",
           "compare_replanning_frequency",
           "SUCCESS", "VIOLATED", "FAILED_REPLAN_BUDGET", "FAILED_STEP_BUDGET",
           "FAILED_NO_PLAN"]

SUCCESS = "SUCCESS"
VIOLATED = "VIOLATED"
FAILED_REPLAN_BUDGET = "FAILED_REPLAN_BUDGET"
FAILED_STEP_BUDGET = "FAILED_STEP_BUDGET"
FAILED_NO_PLAN = "FAILED_NO_PLAN"


@dataclass
class MissionTrace:
    """Per-step mission record plus the terminal outcome."""

    scenario_name: str
    status: str = ""
    replans: int = 0
    steps: int = 0
    wall_time_s: float = 0.0
    final_cost: float = 0.0
    records: list = field(default_factory=list)
    plan_stats: list = field(default_factory=list)

    @property
    def success(self):
        return self.status == SUCCESS

    def summary(self):
        return {
            "scenario": self.scenario_name,
            "status": self.status,
            "success": self.success,
            "steps": self.steps,
            "replans": self.replans,
            "final_cost": round(self.final_cost, 9),
            "wall_time_s": round(self.wall_time_s, 6),
        }

    def csv_header(self, n_robots, lm_ids):
        cols = ["step"]
        for j in range(n_robots):
            cols += [f"robot_{j + 1}_x", f"robot_{j + 1}_y", f"robot_{j + 1}_theta"]
        for lid in lm_ids:
            cols += [f"lm_{lid}_true_x", f"lm_{lid}_true_y",
                     f"lm_{lid}_est_x", f"lm_{lid}_est_y",
                     f"lm_{lid}_det_cov", f"lm_{lid}_top_class"]
        cols += ["dfa_state", "replanned", "label"]
        return cols

    def to_csv(self, path, n_robots, lm_ids):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.csv_header(n_robots, lm_ids))
            for r in self.records:
                w.writerow(r)


def _fmt(x):
    return repr(round(float(x), 9))


class Executor:
    def __init__(self, scenario, model=None, rng=None):
        self.scenario = scenario
        self.model = model if model is not None else PlanModel(scenario)
        self.params = scenario.executor
        self.rng = rng if rng is not None else np.random.default_rng(scenario.seed)
        self.lm_ids = [lm.id for lm in scenario.landmarks]
        self._dyn = {lm.id: lm.prior.dynamics for lm in scenario.landmarks}
        self._true_class_idx = {
            lm.id: scenario.classes.index(lm.true_class) for lm in scenario.landmarks
        }

    # -- planning ------------------------------------------------------------

    def _plan_from(self, pose, online_map, q, t, first):
        import copy

        params = self.scenario.planner
        if not first:
            params = copy.copy(params)
            if self.params.replan_n_max is not None:
                params.n_max = self.params.replan_n_max
            params.stop_at_first = self.params.replan_stop_at_first
        scenario = copy.copy(self.scenario)
        scenario.planner = params
        seed = int(self.rng.integers(2 ** 62))
        planner = Planner(scenario, model=self.model,
                          root=(pose, online_map, q), root_step=t,
                          rng=np.random.default_rng(seed))
        return planner.run()

    # -- main loop -------------------------------------------------------------

    def run(self, plan_result=None):
        t0 = time.perf_counter()
        model = self.model
        scenario = self.scenario
        pose, online_map, q = model.root_state()
        online_map = online_map.copy()
        truth = scenario.true_states()
        trace = MissionTrace(scenario_name=scenario.name)
        t = 0
        plan_idx = 0
        replanned_now = False

        if plan_result is None:
            try:
                plan_result = self._plan_from(pose, model.intern_map(online_map.copy()),
                                              q, 0, first=True)
            except PlanningError:
                trace.status = VIOLATED
                trace.wall_time_s = time.perf_counter() - t0
                return trace
            trace.plan_stats.append(plan_result.stats)
        if not plan_result.found:
            trace.status = FAILED_NO_PLAN
            self._record(trace, t, pose, truth, online_map, q, False)
            trace.wall_time_s = time.perf_counter() - t0
            return trace

        cost = 0.0
        while True:
            terminal = None
            if q == model.dfa.accepting:
                terminal = SUCCESS
            elif t >= self.params.max_steps:
                terminal = FAILED_STEP_BUDGET

            if terminal is None:
                stale = plan_idx >= len(plan_result.controls) or not lookahead_feasible(
                    model, online_map, plan_result, plan_idx, q,
                    self.params.lookahead, t)
                if stale:
                    if trace.replans + 1 > self.params.max_replans:
                        terminal = FAILED_REPLAN_BUDGET
                    else:
                        trace.replans += 1
                        replanned_now = True
                        try:
                            plan_result = self._plan_from(
                                pose, model.intern_map(online_map.copy()), q, t,
                                first=False)
                            trace.plan_stats.append(plan_result.stats)
                            plan_idx = 0
                            if not plan_result.found:
                                terminal = FAILED_NO_PLAN
                        except PlanningError:
                            terminal = VIOLATED

            self._record(trace, t, pose, truth, online_map, q, replanned_now)
            replanned_now = False
            if terminal is not None:
                trace.status = terminal
                break

            sigma = model.label_of(pose, online_map, cached=False)
            q_next = model.dfa.next_state(q, sigma)
            if q_next is None:
                trace.status = VIOLATED
                break

            control = plan_result.controls[plan_idx]
            new_pose = model.step_pose(pose, control)
            cost += model.motion_cost(pose, new_pose)

            for lid in self.lm_ids:
                truth[lid] = ground_truth_step(truth[lid], self._dyn[lid], t, self.rng)

            online_map = self._fuse(online_map, new_pose, truth, t)

            pose = new_pose
            q = q_next
            t += 1
            plan_idx += 1

        trace.steps = t
        trace.final_cost = cost
        trace.wall_time_s = time.perf_counter() - t0
        return trace

    # -- measurement fusion -------------------------------------------------------

    def _fuse(self, online_map, new_pose, truth, t):
        model = self.model
        scenario = self.scenario
        team = model.team_of(new_pose)
        new_landmarks = []
        for lm in online_map.landmarks:
            true_pos = truth[lm.id]
            items = []
            class_obs = []
            for j, sensor in enumerate(model.sensors):
                if sensor is None:
                    continue
                robot_pose = team.poses[j]
                m = sense(sensor, robot_pose, true_pos, model.workspace, self.rng,
                          step=t + 1, robot_id=scenario.robots[j].id, landmark_id=lm.id)
                if m is not None:
                    items.append((sensor, robot_pose, m.value))
                    class_obs.append(classify(self._true_class_idx[lm.id],
                                              scenario.confusion, self.rng))
            new_lm = posterior_position_update(lm, t, items, model.workspace)
            belief = new_lm.class_belief
            for obs in class_obs:
                belief = class_belief_update(belief, obs, scenario.confusion)
            new_lm.class_belief = belief
            new_landmarks.append(new_lm)
        return SemanticMapEstimate(new_landmarks, online_map.class_set)

    def _record(self, trace, t, pose, truth, online_map, q, replanned):
        row = [t]
        for (x, y, th) in pose:
            row += [_fmt(x), _fmt(y), _fmt(th)]
        for lm in online_map.landmarks:
            tp = truth[lm.id]
            det = lm.cov[0, 0] * lm.cov[1, 1] - lm.cov[0, 1] ** 2
            row += [_fmt(tp[0]), _fmt(tp[1]), _fmt(lm.mean[0]), _fmt(lm.mean[1]),
                    _fmt(det), lm.top_class()]
        sigma = self.model.label_of(pose, online_map, cached=False)
        row += [q, int(replanned), "|".join(sorted(sigma))]
        trace.records.append(row)


def lookahead_feasible(model, online_map, plan_result, plan_idx, current_q,
                       lookahead, t):
    """True iff the next planned transitions still fire under the online map.

    Simulates min(lookahead, remaining) steps: labels are evaluated at the
    planned poses on the online belief propagated by the measurement-free
    prediction, and each must reproduce the planned automaton transition.
    """
    if plan_result.dfa_states[plan_idx] != current_q:
        return False
    steps = min(lookahead, len(plan_result.controls) - plan_idx)
    sim_map = online_map
    for k in range(steps):
        pose_k = plan_result.poses[plan_idx + k]
        sigma = model.label_of(pose_k, sim_map, cached=False)
        q_next = model.dfa.next_state(plan_result.dfa_states[plan_idx + k], sigma)
        if q_next != plan_result.dfa_states[plan_idx + k + 1]:
            return False
        sim_map = model.propagate_map(sim_map, plan_result.poses[plan_idx + k + 1],
                                      t + k)
    return True


def execute(scenario, plan_result=None, model=None, rng=None):
    """Run the mission loop; see Executor."""
    return Executor(scenario, model=model, rng=rng).run(plan_result=plan_result)


def compare_replanning_frequency(variant_factories, seeds):
    """Run each scenario variant over the seeds; summarize replanning.

    `variant_factories` maps a variant name to a callable seed -> Scenario.
    Returns one row per variant with mean replan count, success rate and
    mean wall time, plus the per-seed replan counts.
    """
    rows = []
    for name, factory in variant_factories.items():
        replans, successes, times, steps = [], [], [], []
        for seed in seeds:
            scenario = factory(seed)
            trace = execute(scenario)
            replans.append(trace.replans)
            successes.append(trace.success)
            times.append(trace.wall_time_s)
            steps.append(trace.steps)
        rows.append({
            "variant": name,
            "runs": len(list(seeds)),
            "mean_replans": float(np.mean(replans)),
            "success_rate": float(np.mean(successes)),
            "mean_steps": float(np.mean(steps)),
            "mean_wall_time_s": float(np.mean(times)),
            "replans_per_seed": list(replans),
        })
    return rows
