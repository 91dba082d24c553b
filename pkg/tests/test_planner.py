import math
from collections import Counter

import numpy as np
import pytest

from semplan.dynamics import RobotPose
from semplan.planner import (BucketIndex, Planner, PlanningError,
                             assign_target_landmarks, plan, sample_bucket,
                             sample_control)
from semplan.scenario import (PlannerParams, benchmark_scenario, tiny_scenario)
from semplan.semantic_map import (LandmarkEstimate, SemanticMapEstimate,
                                  TargetDynamics)
from semplan.predicates import PredicateDef


def make_index(n_buckets, kmin_ids):
    idx = BucketIndex({0: 0}, warmup_singletons=0)
    for b in range(n_buckets):
        idx.members.append([b])
        idx.best.append(0.0 if b in kmin_ids else 1.0)
    idx.d_min = 0.0
    idx.kmin_ids = sorted(kmin_ids)
    idx._kmin_set = set(kmin_ids)
    return idx


class TestSampleBucket:
    def test_biased_law_frequencies(self, rng):
        idx = make_index(4, {0})
        params = PlannerParams(n_max=1, p_rand=0.9)
        counts = Counter(sample_bucket(idx, params, rng) for _ in range(100_000))
        assert counts[0] / 100_000 == pytest.approx(0.9, abs=0.01)
        for b in (1, 2, 3):
            assert counts[b] / 100_000 == pytest.approx(0.1 / 3, abs=0.01)

    def test_all_buckets_minimal_uniform(self, rng):
        idx = make_index(3, {0, 1, 2})
        params = PlannerParams(n_max=1)
        counts = Counter(sample_bucket(idx, params, rng) for _ in range(60_000))
        for b in range(3):
            assert counts[b] / 60_000 == pytest.approx(1 / 3, abs=0.02)

    def test_uniform_mode(self, rng):
        idx = make_index(5, {0})
        params = PlannerParams(n_max=1, sampling="uniform")
        counts = Counter(sample_bucket(idx, params, rng) for _ in range(100_000))
        for b in range(5):
            assert counts[b] / 100_000 == pytest.approx(0.2, abs=0.01)

    def test_positive_floor_every_bucket(self, rng):
        idx = make_index(6, {1, 4})
        params = PlannerParams(n_max=1, p_rand=0.9)
        n = 100_000
        counts = Counter(sample_bucket(idx, params, rng) for _ in range(n))
        floor = (1 - params.p_rand) / (2 * 6)
        for b in range(6):
            assert counts[b] / n >= floor


class TestAssignTargets:
    def _map(self, beliefs, covs=None):
        classes = ("person", "car")
        lms = []
        for i, b in enumerate(beliefs):
            cov = np.eye(2) if covs is None else covs[i]
            lms.append(LandmarkEstimate(f"lm{i + 1}", np.array([float(i), 0.0]),
                                        cov, np.asarray(b, float),
                                        TargetDynamics.static(), classes))
        return SemanticMapEstimate(lms, classes)

    def test_proximity_atom_binds_directly(self):
        defs = {"a": PredicateDef("a", "proximity", "r1", landmark="lm3",
                                  radius=1.0, delta=0.5)}
        m = self._map([(1, 0), (1, 0), (1, 0)])
        got, warn = assign_target_landmarks(m, frozenset({"a"}), defs)
        assert got == {"r1": "lm3"} and not warn

    def test_class_atom_argmax_belief(self):
        defs = {"a": PredicateDef("a", "class_proximity", "r1", radius=1.0,
                                  delta=0.5, cls="person")}
        m = self._map([(0.3, 0.7), (0.6, 0.4)])
        got, _ = assign_target_landmarks(m, frozenset({"a"}), defs)
        assert got == {"r1": "lm2"}

    def test_class_tie_broken_by_det(self):
        defs = {"a": PredicateDef("a", "class_proximity", "r1", radius=1.0,
                                  delta=0.5, cls="person")}
        m = self._map([(0.6, 0.4), (0.6, 0.4)],
                      covs=[np.eye(2), 0.01 * np.eye(2)])
        got, _ = assign_target_landmarks(m, frozenset({"a"}), defs)
        assert got == {"r1": "lm2"}  # smaller det(cov) wins the tie

    def test_empty_symbol(self):
        got, warn = assign_target_landmarks(self._map([(1, 0)]), frozenset(), {})
        assert got == {} and not warn

    def test_impossible_class_warns(self):
        defs = {"a": PredicateDef("a", "class_proximity", "r1", radius=1.0,
                                  delta=0.5, cls="person")}
        m = self._map([(0.0, 1.0)])
        got, warn = assign_target_landmarks(m, frozenset({"a"}), defs)
        assert got == {"r1": None} and warn

    def test_uncertainty_atom_binds_its_landmark(self):
        defs = {"a": PredicateDef("a", "uncertainty", "r1", landmark="lm1",
                                  delta=0.5)}
        got, _ = assign_target_landmarks(self._map([(1, 0)]), frozenset({"a"}), defs)
        assert got == {"r1": "lm1"}


class TestSampleControl:
    def _setup(self):
        sc = benchmark_scenario(seed=3)
        from semplan.planner import PlanModel

        model = PlanModel(sc)
        lm = sc.landmarks[0].prior
        field = model.workspace.geodesic_field(lm.mean)
        return sc, model, field

    def test_unassigned_uniform(self, rng):
        sc, model, _ = self._setup()
        n = len(model.controls_of(0))
        counts = Counter()
        for _ in range(50_000):
            c, fb = sample_control((0.8, 1.0, 0.0), sc.robots[0].control_set,
                                   model, 0, None, 1.0, sc.planner, rng)
            counts[c] += 1
        for c in model.controls_of(0):
            assert counts[c] / 50_000 == pytest.approx(1 / n, abs=0.02)

    def test_far_assignment_prefers_best_control(self, rng):
        sc, model, field = self._setup()
        pose = (0.8, 1.0, 0.0)
        sx, sy = model.successor_positions(0, *pose)
        star = int(np.argmin(field.values_at(sx, sy)))
        best = model.controls_of(0)[star]
        n = len(model.controls_of(0))
        counts = Counter()
        for _ in range(100_000):
            c, _ = sample_control(pose, sc.robots[0].control_set, model, 0,
                                  field, 0.4, sc.planner, rng)
            counts[c] += 1
        assert counts[best] / 100_000 == pytest.approx(0.9, abs=0.01)
        for c in model.controls_of(0):
            if c != best:
                assert counts[c] / 100_000 == pytest.approx(0.1 / (n - 1), abs=0.01)

    def test_within_range_uniform(self, rng):
        sc, model, field = self._setup()
        goal = sc.landmarks[0].prior.mean
        pose = (float(goal[0]) - 0.3, float(goal[1]), 0.0)
        n = len(model.controls_of(0))
        counts = Counter()
        for _ in range(50_000):
            c, _ = sample_control(pose, sc.robots[0].control_set, model, 0,
                                  field, 2.0, sc.planner, rng)
            counts[c] += 1
        for c in model.controls_of(0):
            assert counts[c] / 50_000 == pytest.approx(1 / n, abs=0.02)

    def test_control_floor_all_cases(self, rng):
        sc, model, field = self._setup()
        n = len(model.controls_of(0))
        floor = (1 - sc.planner.p_new) / (2 * n)
        for pose, rng_range in (((0.8, 1.0, 0.0), 0.4),       # far: biased
                                ((0.8, 1.0, 0.0), 1e9),       # near: uniform
                                ):
            counts = Counter()
            for _ in range(60_000):
                c, _ = sample_control(pose, sc.robots[0].control_set, model, 0,
                                      field, rng_range, sc.planner, rng)
                counts[c] += 1
            for c in model.controls_of(0):
                assert counts[c] / 60_000 >= floor


class TestInitAndExtend:
    def test_fresh_tree(self):
        sc = tiny_scenario(seed=1)
        pl = Planner(sc)
        assert len(pl.tree) == 1
        assert pl.index.n_buckets == 1
        assert pl.tree.costs[0] == 0.0

    def test_root_in_obstacle_rejected(self):
        sc = benchmark_scenario(seed=0)
        sc.robots[0].start = RobotPose(3.2, 3.0, 0.0)  # inside the wall
        with pytest.raises(PlanningError, match="free space"):
            Planner(sc)

    def test_root_violation_rejected(self):
        sc = tiny_scenario(seed=1)
        # landmark belief sits just off the robot: at_goal holds at the root
        # (radius 0.3) while the tight "other" atom does not (radius 0.01)
        start = sc.robots[0].start
        sc.landmarks[0].prior.mean = np.array([start.x + 0.1, start.y])
        from semplan.predicates import PredicateDef as PD
        sc.predicates.append(PD("other", "proximity", "r1", landmark="lm1",
                                radius=0.01, delta=0.01))
        sc.defs_by_name = {p.name: p for p in sc.predicates}
        sc.task_text = "!at_goal U other"
        from semplan.ltl import parse_cosafe_ltl
        sc.formula = parse_cosafe_ltl(sc.task_text)
        with pytest.raises(PlanningError, match="violates"):
            Planner(sc)

    def test_pruning_fallback_flag(self):
        sc = tiny_scenario(seed=1)
        # both atoms on the same robot and different landmarks, conjoined in
        # one symbol: the only enabling assignment gets pruned
        from semplan.predicates import PredicateDef as PD
        from semplan.ltl import parse_cosafe_ltl
        lm2 = sc.landmarks[0].prior.copy()
        lm2.id = "lm2"
        from semplan.scenario import LandmarkSpec
        sc.landmarks.append(LandmarkSpec("lm2", lm2, lm2.mean.copy(), "target"))
        sc.predicates.append(PD("two", "proximity", "r1", landmark="lm2",
                                radius=0.3, delta=0.25))
        sc.defs_by_name = {p.name: p for p in sc.predicates}
        sc.task_text = "F (at_goal & two)"
        sc.formula = parse_cosafe_ltl(sc.task_text)
        pl = Planner(sc)
        assert pl.model.pruning_fell_back

    def test_obstacle_rejection_counted(self):
        sc = benchmark_scenario(seed=0, n_max=300)
        pl = Planner(sc)
        for _ in range(300):
            pl.extend(sample_bucket(pl.index, sc.planner, pl.rng))
        assert pl.rejections["obstacle"] > 0

    def test_goal_set_grows_on_acceptance(self):
        sc = tiny_scenario(seed=1, n_max=400)
        res = plan(sc)
        assert res.found
        assert res.stats["goal_nodes"] >= 1


class TestExtract:
    def test_no_goal_returns_none(self):
        sc = tiny_scenario(seed=1)
        pl = Planner(sc)
        assert pl.extract_best() is None

    def test_argmin_cost(self):
        sc = tiny_scenario(seed=1)
        pl = Planner(sc)
        pose = pl.tree.pose(0)
        m = pl.tree.map_of(0)
        a = pl.tree.add(0, 5.0, 1, pl.model.dfa.accepting, pose, m, ((1.0, 0.0),))
        b = pl.tree.add(0, 4.2, 1, pl.model.dfa.accepting, pose, m, ((1.0, 0.0),))
        pl.tree.goal_nodes.extend([a, b])
        assert pl.extract_best()["cost"] == pytest.approx(4.2)

    def test_cost_equals_edge_sum(self):
        sc = tiny_scenario(seed=4, n_max=800)
        pl = Planner(sc)
        res = pl.run()
        assert res.found
        path = pl.tree.path_to_root(pl.tree.goal_nodes[0])
        best = min(pl.tree.goal_nodes, key=lambda n: (pl.tree.costs[n], n))
        path = pl.tree.path_to_root(best)
        total = 0.0
        for a, b in zip(path, path[1:]):
            total += pl.model.motion_cost(pl.tree.pose(a), pl.tree.pose(b))
        assert total == pytest.approx(pl.tree.costs[best], abs=1e-12)


class TestPlan:
    def test_zero_iterations_no_solution(self):
        sc = tiny_scenario(seed=1, n_max=0)
        res = plan(sc)
        assert not res.found
        assert res.stats["tree_size"] == 1

    def test_trivial_task_accepts_at_root(self):
        sc = tiny_scenario(seed=1, n_max=0)
        sc.task_text = "true"
        from semplan.ltl import parse_cosafe_ltl
        sc.formula = parse_cosafe_ltl("true")
        res = plan(sc)
        assert res.found and res.horizon == 0 and res.cost == 0.0
        assert res.controls == []

    def test_benchmark_feasible(self):
        res = plan(benchmark_scenario(seed=5))
        assert res.found
        assert res.stats["first_solution_iter"] <= 5000

    def test_deterministic_given_seed(self):
        a = plan(benchmark_scenario(seed=11))
        b = plan(benchmark_scenario(seed=11))
        assert a.found == b.found
        assert a.cost == b.cost
        assert a.controls == b.controls
        assert a.stats["tree_size"] == b.stats["tree_size"]


class TestTreeInvariants:
    @pytest.fixture(scope="module")
    def grown(self):
        sc = benchmark_scenario(seed=2, n_max=600, stop_at_first=False)
        pl = Planner(sc)
        for _ in range(600):
            pl.extend(sample_bucket(pl.index, sc.planner, pl.rng))
        return pl

    def test_single_parent_no_cycles(self, grown):
        pl = grown
        for nid in range(len(pl.tree)):
            path = pl.tree.path_to_root(nid)
            assert path[0] == 0 and path[-1] == nid

    def test_cost_recursion(self, grown):
        pl = grown
        for nid in range(1, len(pl.tree)):
            parent = pl.tree.parents[nid]
            step_cost = pl.model.motion_cost(pl.tree.pose(parent),
                                             pl.tree.pose(nid))
            assert pl.tree.costs[nid] - pl.tree.costs[parent] == pytest.approx(
                step_cost, abs=1e-12)
            assert pl.tree.steps[nid] == pl.tree.steps[parent] + 1

    def test_dfa_states_replay_from_labels(self, grown):
        pl = grown
        rng = np.random.default_rng(0)
        ids = rng.choice(len(pl.tree), size=min(100, len(pl.tree)), replace=False)
        for nid in ids:
            path = pl.tree.path_to_root(int(nid))
            q = pl.model.dfa.initial
            for a, b in zip(path, path[1:]):
                sigma = pl.model.label_of(pl.tree.pose(a), pl.tree.map_of(a))
                q = pl.model.dfa.next_state(q, sigma)
                assert q == pl.tree.dfas[b]

    def test_covariance_replay_bit_exact(self, grown):
        pl = grown
        rng = np.random.default_rng(1)
        ids = rng.choice(len(pl.tree), size=min(40, len(pl.tree)), replace=False)
        for nid in ids:
            path = pl.tree.path_to_root(int(nid))
            m = pl.tree.map_of(0)
            for a, b in zip(path, path[1:]):
                m = pl.model.propagate_map(m, pl.tree.pose(b), pl.tree.steps[a])
            got = pl.tree.map_of(int(nid))
            for lm_r, lm_g in zip(m.landmarks, got.landmarks):
                assert lm_r.mean.tobytes() == lm_g.mean.tobytes()
                assert lm_r.cov.tobytes() == lm_g.cov.tobytes()

    def test_best_cost_monotone_over_iterations(self):
        sc = benchmark_scenario(seed=7, n_max=2500, stop_at_first=False)
        pl = Planner(sc)
        best = math.inf
        history = []
        for _ in range(2500):
            pl.extend(sample_bucket(pl.index, sc.planner, pl.rng))
            out = pl.extract_best()
            if out is not None:
                assert out["cost"] <= best + 1e-12
                best = out["cost"]
                history.append(best)
        assert history, "no solution found while checking monotonicity"
