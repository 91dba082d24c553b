"""Tree search over (team pose, map estimate, automaton state).

The tree is grown by sampling a bucket of nodes (nodes sharing a
quantized team pose and automaton state), then sampling one control per
bucket member and extending.  Bucket selection is biased toward nodes
whose automaton state is closest, in pruned-automaton hops, to the
accepting state; control selection is biased toward the control that
shrinks the geodesic distance to a landmark assigned from the automaton
transition being chased.  Both laws keep every alternative at positive
probability, which is what the completeness/optimality arguments need.

Node maps evolve by the measurement-free Riccati prediction, so a node's
map depends only on its ancestor pose sequence; identical maps are
interned and shared between nodes.
"""

from __future__ import annotations

import itertools
import math
import time
from array import array
from dataclasses import dataclass, field

import numpy as np

from . import ltl
from .dynamics import RobotPose, RobotTeamState, wrap_angle
from .predicates import label as eval_label
from .semantic_map import (LandmarkEstimate, SemanticMapEstimate, predict_mean,
                           propagate_covariance)
from .sensing import in_gate
from .workspace import GoalBlockedError, virtual_obstacles_for_transition

__all__ = ["PlanModel", "Tree", "BucketIndex", "PlanResult", "Planner",
           "PlanningError", "plan", "sample_bucket", "sample_control",
           "assign_target_landmarks"]

ZERO_STEP_COST = 1e-6


class PlanningError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Shared deterministic machinery (also used by the executor and oracles)
# ---------------------------------------------------------------------------

class PlanModel:
    """Dynamics, map propagation and labeling for one scenario.

    Maps are interned by content so equal beliefs are one object; labels
    are cached per (team pose, map object).
    """

    def __init__(self, scenario, dfa=None, index=None):
        self.scenario = scenario
        self.workspace = scenario.workspace
        self.control_sets = scenario.control_sets()
        self.sensors = scenario.sensors()
        self.defs = scenario.predicates
        self.robot_index = scenario.robot_index
        self.relaxed = scenario.executor.use_relaxed_predicates
        self.dfa = dfa if dfa is not None else ltl.compile_to_dfa(
            scenario.formula, state_cap=scenario.planner.state_cap)
        if index is not None:
            self.index = index
            self.pruning_fell_back = False
        else:
            self.index = ltl.prune_dfa(self.dfa, scenario.atom_meta())
            self.pruning_fell_back = not self.index.accept_reachable
            if self.pruning_fell_back:
                self.index = ltl.prune_dfa(self.dfa, scenario.atom_meta(), prune=False)
        self._controls = [cs.controls() for cs in self.control_sets]
        self._ctrl_arrays = [self._precompute(cs) for cs in self.control_sets]
        self._map_pool = {}
        self._label_cache = {}
        self.assign_warning_count = 0
        self._ellipse_cache = {}
        self._vo_cache = {}
        self._assign_cache = {}

    @staticmethod
    def _precompute(cs):
        pairs = cs.controls()
        u = np.array([p[0] for p in pairs])
        w = np.array([p[1] for p in pairs])
        half = 0.5 * cs.tau * w
        chord = cs.tau * u * np.sinc(half / math.pi)
        return u, w, half, chord

    # -- state views ----------------------------------------------------------

    def root_state(self):
        team = self.scenario.initial_team()
        pose = tuple((p.x, p.y, p.theta) for p in team.poses)
        return pose, self.intern_map(self.scenario.initial_map()), self.dfa.initial

    def team_of(self, pose):
        return RobotTeamState(tuple(RobotPose(*p) for p in pose))

    def joint_controls(self):
        return list(itertools.product(*self._controls))

    def controls_of(self, j):
        return self._controls[j]

    # -- dynamics -------------------------------------------------------------

    def step_pose(self, pose, joint):
        out = []
        for (x, y, th), (u, w), cs in zip(pose, joint, self.control_sets):
            half = 0.5 * cs.tau * w
            chord = cs.tau * u * (math.sin(half) / half if half else 1.0)
            out.append((x + chord * math.cos(th + half),
                        y + chord * math.sin(th + half),
                        wrap_angle(th + cs.tau * w)))
        return tuple(out)

    def successor_positions(self, j, x, y, th):
        """Successor (x, y) arrays of robot j under each of its controls."""
        u, w, half, chord = self._ctrl_arrays[j]
        return x + chord * np.cos(th + half), y + chord * np.sin(th + half)

    def pose_free(self, pose):
        return all(self.workspace.is_free((x, y)) for x, y, _ in pose)

    def motion_cost(self, pose_a, pose_b):
        c = 0.0
        for (xa, ya, _), (xb, yb, _) in zip(pose_a, pose_b):
            c += math.hypot(xb - xa, yb - ya)
        if c == 0.0:
            c = ZERO_STEP_COST * self.control_sets[0].tau
        return c

    # -- map propagation -------------------------------------------------------

    def intern_map(self, map_estimate):
        key = b"".join(lm.mean.tobytes() + lm.cov.tobytes()
                       for lm in map_estimate.landmarks)
        hit = self._map_pool.get(key)
        if hit is None:
            self._map_pool[key] = map_estimate
            return map_estimate
        return hit

    def propagate_map(self, map_estimate, new_pose, t):
        """Predict means to t+1 and run the Riccati step at the new pose."""
        new_landmarks = []
        changed = False
        for lm in map_estimate.landmarks:
            mean = lm.mean if lm.dynamics.is_static else predict_mean(lm, t)
            gated = False
            for (x, y, th), sensor in zip(new_pose, self.sensors):
                if sensor is None:
                    continue
                if math.hypot(mean[0] - x, mean[1] - y) <= sensor.range_limit:
                    if in_gate(sensor, RobotPose(x, y, th), mean, self.workspace):
                        gated = True
                        break
            if not gated and lm.dynamics.is_static:
                new_landmarks.append(lm)
                continue
            cov = propagate_covariance(lm, self.team_of(new_pose), self.sensors,
                                       self.workspace, predicted_mean=mean)
            new_landmarks.append(LandmarkEstimate(lm.id, mean, cov, lm.class_belief,
                                                  lm.dynamics, lm.classes))
            changed = True
        if not changed:
            return map_estimate
        return self.intern_map(SemanticMapEstimate(new_landmarks,
                                                   map_estimate.class_set))

    # -- labels and automaton ---------------------------------------------------

    def label_of(self, pose, map_estimate, cached=True):
        if not cached:
            return eval_label(self.team_of(pose), map_estimate, self.defs,
                              self.robot_index, relaxed=self.relaxed)
        key = (pose, id(map_estimate))
        hit = self._label_cache.get(key)
        if hit is None:
            hit = eval_label(self.team_of(pose), map_estimate, self.defs,
                             self.robot_index, relaxed=self.relaxed)
            self._label_cache[key] = hit
        return hit

    def dfa_step(self, q, pose, map_estimate):
        return self.dfa.next_state(q, self.label_of(pose, map_estimate))

    # -- sampling support --------------------------------------------------------

    def ellipse_cells(self, lm, map_id):
        key = (lm.id, map_id)
        hit = self._ellipse_cache.get(key)
        if hit is None:
            hit = self.workspace.confidence_ellipse_cells(
                lm.mean, lm.cov, self.scenario.planner.ellipse_epsilon)
            self._ellipse_cache[key] = hit
        return hit

    def virtual_obstacles(self, robot_id, q_next, q_min, map_estimate):
        key = (robot_id, q_next, q_min, id(map_estimate))
        hit = self._vo_cache.get(key)
        if hit is None:
            guard = self.index.adj.get(q_next, {}).get(q_min)
            if guard is None:
                hit = frozenset()
            else:
                hit = frozenset(virtual_obstacles_for_transition(
                    self.workspace, map_estimate, guard, robot_id,
                    self.scenario.defs_by_name,
                    epsilon=self.scenario.planner.ellipse_epsilon))
            self._vo_cache[key] = hit
        return hit

    def assignments_for(self, q_next, q_min, map_estimate):
        key = (q_next, q_min, id(map_estimate))
        hit = self._assign_cache.get(key)
        if hit is None:
            sigma = ltl.select_transition_symbol(self.index, q_next, q_min)
            hit, warnings = assign_target_landmarks(map_estimate, sigma,
                                                    self.scenario.defs_by_name)
            self.assign_warning_count += len(warnings)
            self._assign_cache[key] = hit
        return hit


# ---------------------------------------------------------------------------
# Landmark assignment from a transition symbol
# ---------------------------------------------------------------------------

_KIND_PRIORITY = {"proximity": 0, "class_proximity": 1,
                  "relaxed_class_proximity": 1, "uncertainty": 2}


def assign_target_landmarks(map_estimate, sigma, defs_by_name):
    """Per-robot landmark targets realizing the positive atoms of sigma.

    Proximity and uncertainty atoms bind their robot to their landmark.
    Class atoms bind to the landmark with the largest class probability,
    ties broken by probability/det(cov) and then by landmark order.
    Robots without atoms in sigma get None.  Returns (assignments,
    warnings); a class wanted by sigma but believed impossible everywhere
    yields None plus a warning entry.
    """
    assignments = {}
    warnings = []
    by_robot = {}
    for name in sorted(sigma):
        pdef = defs_by_name.get(name)
        if pdef is None:
            continue
        by_robot.setdefault(pdef.robot, []).append(pdef)
    for robot, defs in by_robot.items():
        defs.sort(key=lambda d: (_KIND_PRIORITY.get(d.kind, 3), d.name))
        pdef = defs[0]
        if pdef.kind in ("proximity", "uncertainty"):
            assignments[robot] = pdef.landmark
            continue
        best = None
        for i, lm in enumerate(map_estimate.landmarks):
            w = lm.class_prob(pdef.cls)
            if pdef.kind == "relaxed_class_proximity" and lm.top_class() != pdef.cls:
                continue
            if w <= 0.0:
                continue
            det = max(lm.cov[0, 0] * lm.cov[1, 1] - lm.cov[0, 1] ** 2, 1e-300)
            cand = (w, w / det, -i, lm.id)
            if best is None or cand > best:
                best = cand
        if best is None:
            warnings.append(f"no landmark can satisfy class atom {pdef.name!r}")
            assignments[robot] = None
        else:
            assignments[robot] = best[3]
    return assignments, warnings


# ---------------------------------------------------------------------------
# Tree and bucket index
# ---------------------------------------------------------------------------

class Tree:
    """Flat arrays per node; poses are flattened (x, y, theta) triples."""

    def __init__(self, n_robots):
        self.n_robots = n_robots
        self.parents = array("q")
        self.costs = array("d")
        self.steps = array("l")
        self.dfas = array("l")
        self.pose_flat = array("d")
        self.map_ids = array("l")
        self.controls = []          # joint control that created the node
        self.maps = []              # map pool: id -> SemanticMapEstimate
        self._map_index = {}        # id(map) -> pool position
        self.goal_nodes = []

    def __len__(self):
        return len(self.parents)

    def map_pool_id(self, map_obj):
        pos = self._map_index.get(id(map_obj))
        if pos is None:
            pos = len(self.maps)
            self.maps.append(map_obj)
            self._map_index[id(map_obj)] = pos
        return pos

    def add(self, parent, cost, step, dfa, pose, map_obj, control):
        nid = len(self.parents)
        self.parents.append(parent)
        self.costs.append(cost)
        self.steps.append(step)
        self.dfas.append(dfa)
        for p in pose:
            self.pose_flat.extend(p)
        self.map_ids.append(self.map_pool_id(map_obj))
        self.controls.append(control)
        return nid

    def pose(self, nid):
        base = nid * 3 * self.n_robots
        flat = self.pose_flat
        return tuple(tuple(flat[base + 3 * j: base + 3 * j + 3])
                     for j in range(self.n_robots))

    def map_of(self, nid):
        return self.maps[self.map_ids[nid]]

    def path_to_root(self, nid):
        path = []
        seen = 0
        while nid >= 0:
            path.append(nid)
            nid = self.parents[nid]
            seen += 1
            if seen > len(self.parents):
                raise PlanningError("cycle detected in tree")
        path.reverse()
        return path


class BucketIndex:
    """Partition of tree nodes by (quantized team pose, automaton state).

    Tracks, per bucket, the best hop distance to the accepting state so
    the biased law can draw from the frontier set K_min in O(1).
    """

    def __init__(self, dist_to_accept, warmup_singletons):
        self.dist_to_accept = dist_to_accept  # automaton state -> hops (inf ok)
        self.warmup = warmup_singletons
        self.key_to_bucket = {}
        self.members = []
        self.best = []
        self.d_min = math.inf
        self.kmin_ids = []
        self._kmin_set = set()

    @property
    def n_buckets(self):
        return len(self.members)

    def add(self, node_id, key, dfa_state):
        d = self.dist_to_accept.get(dfa_state, math.inf)
        if len(self.members) < self.warmup or key not in self.key_to_bucket:
            bid = len(self.members)
            self.members.append([node_id])
            self.best.append(d)
            self.key_to_bucket[key] = bid
        else:
            bid = self.key_to_bucket[key]
            self.members[bid].append(node_id)
            if d < self.best[bid]:
                self.best[bid] = d
            else:
                d = None  # no bucket-level improvement
        if d is not None:
            if d < self.d_min:
                self.d_min = d
                self.kmin_ids = [b for b, v in enumerate(self.best) if v == d]
                self._kmin_set = set(self.kmin_ids)
            elif d == self.d_min and bid not in self._kmin_set:
                self.kmin_ids.append(bid)
                self._kmin_set.add(bid)
        return bid


def quantize_pose(pose, bin_xy, bin_theta):
    return tuple((int(math.floor(x / bin_xy)), int(math.floor(y / bin_xy)),
                  int(math.floor((th + math.pi) / bin_theta)))
                 for x, y, th in pose)


def sample_bucket(index, params, rng):
    """Draw a bucket id.

    Biased mode: probability p_rand spread uniformly over the buckets
    meeting the minimum automaton distance, the rest spread uniformly
    over the complement (falling back to K_min when no complement
    exists).  Uniform mode: uniform over all buckets.
    """
    k = index.n_buckets
    if k == 0:
        raise PlanningError("no buckets to sample")
    if params.sampling == "uniform":
        return int(rng.integers(k))
    n_min = len(index.kmin_ids)
    if n_min == 0 or n_min == k or rng.random() < params.p_rand:
        if n_min == 0:
            return int(rng.integers(k))
        return index.kmin_ids[int(rng.integers(n_min))]
    for _ in range(64):
        b = int(rng.integers(k))
        if b not in index._kmin_set:
            return b
    others = [b for b in range(k) if b not in index._kmin_set]
    return others[int(rng.integers(len(others)))]


def sample_control(pose_j, control_set, model, j, field, sensing_range, params, rng):
    """Draw (u, omega) for robot j per the three-case biased law.

    field None (no assigned landmark): uniform.  Otherwise u* is the
    control whose successor has the smallest geodesic distance to the
    assigned landmark; beyond sensing range u* is drawn with probability
    p_new and the rest uniformly, inside sensing range the draw is
    uniform to vary the viewpoint.  Returns (control, fallback) where
    fallback marks an unusable field (all successors blocked).
    """
    controls = model.controls_of(j)
    n = len(controls)
    if field is None or params.sampling == "uniform":
        return controls[int(rng.integers(n))], False
    x, y, th = pose_j
    sx, sy = model.successor_positions(j, x, y, th)
    vals = field.values_at(sx, sy)
    finite = np.isfinite(vals)
    if not finite.any():
        return controls[int(rng.integers(n))], True
    star = int(np.argmin(np.where(finite, vals, np.inf)))
    d_j = float(vals[star])
    if d_j < sensing_range:
        return controls[int(rng.integers(n))], False
    if n == 1 or rng.random() < params.p_new:
        return controls[star], False
    k = int(rng.integers(n - 1))
    if k >= star:
        k += 1
    return controls[k], False


# ---------------------------------------------------------------------------
# Planner
# ---------------------------------------------------------------------------

@dataclass
class PlanResult:
    found: bool
    horizon: int = 0
    cost: float = 0.0
    controls: list = field(default_factory=list)
    poses: list = field(default_factory=list)
    dfa_states: list = field(default_factory=list)
    maps: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)


class Planner:
    """One tree search over a scenario, optionally re-rooted."""

    def __init__(self, scenario, model=None, root=None, root_step=0, rng=None):
        self.scenario = scenario
        self.params = scenario.planner
        self.model = model if model is not None else PlanModel(scenario)
        seed = self.params.seed if self.params.seed is not None else scenario.seed
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.rejections = {"obstacle": 0, "violation": 0}
        self.fallback_uniform = 0
        self._field_failures = 0

        pose, map0, q0 = self.model.root_state() if root is None else root
        map0 = self.model.intern_map(map0)
        if not self.model.pose_free(pose):
            raise PlanningError("initial team configuration is not in free space")
        if self.model.dfa_step(q0, pose, map0) is None:
            raise PlanningError("initial label already violates the task")

        dist = {q: self.model.index.distance_to_accept(q) for q in self.model.dfa.states}
        self.dist_to_accept = dist
        self.tree = Tree(len(scenario.robots))
        self.index = BucketIndex(dist, self.params.warmup_singletons)
        nid = self.tree.add(-1, 0.0, root_step, q0, pose, map0, None)
        self.index.add(nid, self._key(pose, q0), q0)
        self._labels = {}
        self._qnext = {}
        self._min_sets = {}
        if q0 == self.model.dfa.accepting:
            self.tree.goal_nodes.append(nid)
        self.first_solution_iter = None

    def _key(self, pose, q):
        return (quantize_pose(pose, self.params.pose_bin_xy,
                              self.params.pose_bin_theta), q)

    def _node_label(self, nid):
        lab = self._labels.get(nid)
        if lab is None:
            lab = self.model.label_of(self.tree.pose(nid), self.tree.map_of(nid))
            self._labels[nid] = lab
        return lab

    def _node_qnext(self, nid):
        """Automaton state the node's own label leads to (None = violation)."""
        if nid in self._qnext:
            return self._qnext[nid]
        q = self.model.dfa.next_state(self.tree.dfas[nid], self._node_label(nid))
        self._qnext[nid] = q
        return q

    def _field_for(self, robot_id, q_next, q_min, map_estimate, t):
        assignment = self.model.assignments_for(q_next, q_min, map_estimate)
        lm_id = assignment.get(robot_id)
        if lm_id is None:
            return None
        lm = map_estimate.landmark(lm_id)
        goal = lm.mean if lm.dynamics.is_static else predict_mean(lm, t)
        vo = self.model.virtual_obstacles(robot_id, q_next, q_min, map_estimate)
        try:
            return self.model.workspace.geodesic_field(goal, vo)
        except GoalBlockedError:
            try:
                return self.model.workspace.geodesic_field(goal)
            except GoalBlockedError:
                self._field_failures += 1
                return None

    def extend(self, bucket_id):
        """Extend every (subsampled) node of the bucket by one control."""
        members = self.index.members[bucket_id]
        cap = self.params.extension_cap
        if len(members) > cap:
            pick = self.rng.choice(len(members), size=cap, replace=False)
            chosen = [members[i] for i in sorted(pick)]
        else:
            chosen = list(members)
        model = self.model
        new_ids = []
        for nid in chosen:
            q_next = self._node_qnext(nid)
            if q_next is None:
                self.rejections["violation"] += 1
                continue
            pose = self.tree.pose(nid)
            map_est = self.tree.map_of(nid)
            t = self.tree.steps[nid]

            q_min = None
            if self.params.sampling == "biased":
                cands = self._min_sets.get(q_next)
                if cands is None:
                    cands = sorted(ltl.reachable_min_set(model.index, q_next,
                                                         model.dfa.accepting))
                    self._min_sets[q_next] = cands
                if cands:
                    q_min = cands[int(self.rng.integers(len(cands)))]

            joint = []
            for j, spec in enumerate(self.scenario.robots):
                field_j = None
                if q_min is not None:
                    field_j = self._field_for(spec.id, q_next, q_min, map_est, t)
                rng_range = model.sensors[j].range_limit if model.sensors[j] else 0.0
                ctrl, fb = sample_control(pose[j], spec.control_set, model, j,
                                          field_j, rng_range, self.params, self.rng)
                if fb:
                    self.fallback_uniform += 1
                joint.append(ctrl)
            joint = tuple(joint)

            new_pose = model.step_pose(pose, joint)
            if not model.pose_free(new_pose):
                self.rejections["obstacle"] += 1
                continue
            new_map = model.propagate_map(map_est, new_pose, t)
            cost = self.tree.costs[nid] + model.motion_cost(pose, new_pose)
            new_id = self.tree.add(nid, cost, t + 1, q_next, new_pose, new_map, joint)
            self.index.add(new_id, self._key(new_pose, q_next), q_next)
            if q_next == model.dfa.accepting:
                self.tree.goal_nodes.append(new_id)
            new_ids.append(new_id)
        return new_ids

    def extract_best(self):
        """Cheapest accepting node with its control/pose trace, or None."""
        if not self.tree.goal_nodes:
            return None
        best = min(self.tree.goal_nodes, key=lambda n: (self.tree.costs[n], n))
        path = self.tree.path_to_root(best)
        controls = [self.tree.controls[n] for n in path[1:]]
        return {
            "node": best,
            "path": path,
            "horizon": self.tree.steps[best],
            "cost": self.tree.costs[best],
            "controls": controls,
        }

    def run(self):
        t0 = time.perf_counter()
        n_done = 0
        for n in range(1, self.params.n_max + 1):
            if self.params.stop_at_first and self.tree.goal_nodes:
                break
            bucket = sample_bucket(self.index, self.params, self.rng)
            self.extend(bucket)
            n_done = n
            if self.first_solution_iter is None and self.tree.goal_nodes:
                self.first_solution_iter = n
        if self.tree.goal_nodes and self.first_solution_iter is None:
            self.first_solution_iter = 0
        best = self.extract_best()
        sizes = [len(m) for m in self.index.members]
        stats = {
            "iterations": n_done,
            "tree_size": len(self.tree),
            "buckets": self.index.n_buckets,
            "bucket_occupancy": {
                "min": min(sizes),
                "mean": round(sum(sizes) / len(sizes), 3),
                "max": max(sizes),
            },
            "first_solution_iter": self.first_solution_iter,
            "rejections": dict(self.rejections),
            "uniform_fallbacks": self.fallback_uniform,
            "field_failures": self._field_failures,
            "assignment_warnings": self.model.assign_warning_count,
            "goal_nodes": len(self.tree.goal_nodes),
            "pruning_fell_back": self.model.pruning_fell_back,
            "wall_time_s": time.perf_counter() - t0,
            "workers": 1,
            "deterministic": True,
        }
        if best is None:
            return PlanResult(found=False, stats=stats)
        path = best["path"]
        poses = [self.tree.pose(n) for n in path]
        maps = [self.tree.map_of(n) for n in path]
        labels = [self.model.label_of(p, m) for p, m in zip(poses, maps)]
        return PlanResult(
            found=True,
            horizon=best["horizon"],
            cost=best["cost"],
            controls=best["controls"],
            poses=poses,
            dfa_states=[self.tree.dfas[n] for n in path],
            maps=maps,
            labels=labels,
            stats=stats,
        )


def plan(scenario, model=None, root=None, rng=None):
    """Run the full search for a scenario; see Planner for the knobs."""
    return Planner(scenario, model=model, root=root, rng=rng).run()
