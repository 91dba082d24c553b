import math

import numpy as np
import pytest

from semplan.ltl import compile_to_dfa, parse_cosafe_ltl
from semplan.oracles import (OracleBudgetError, OracleReport, exhaustive_plan,
                             hop_distance, mc_disk_mass, semantic_eval)
from semplan.planner import plan
from semplan.scenario import tiny_scenario

from conftest import random_cosafe_formula, random_word


class TestSemanticEval:
    def test_eventually_on_second_symbol(self):
        f = parse_cosafe_ltl("F a")
        assert semantic_eval(f, [frozenset(), frozenset({"a"})])

    def test_until_violated_immediately(self):
        f = parse_cosafe_ltl("!b U a")
        assert not semantic_eval(f, [frozenset({"b"})])

    def test_empty_word_only_satisfies_true(self):
        assert semantic_eval(parse_cosafe_ltl("true"), [])
        assert not semantic_eval(parse_cosafe_ltl("a"), [])
        assert not semantic_eval(parse_cosafe_ltl("F a"), [])

    def test_agreement_with_dfa(self, rng):
        for _ in range(200):
            f = random_cosafe_formula(rng)
            d = compile_to_dfa(f)
            w = random_word(rng)
            assert d.accepts(w) == semantic_eval(f, w)


class TestMcDiskMass:
    def test_zero_radius(self, rng):
        p, _ = mc_disk_mass([0, 0], np.eye(2), [1, 1], 0.0, 100_000, rng)
        assert p == 0.0

    def test_huge_radius(self, rng):
        p, _ = mc_disk_mass([0, 0], np.eye(2), [1, 1], 1e3, 100_000, rng)
        assert p == 1.0

    def test_matches_rayleigh(self, rng):
        p, se = mc_disk_mass([2, 3], np.eye(2), [2, 3], 1.0, 400_000, rng)
        assert p == pytest.approx(1 - math.exp(-0.5), abs=0.005)
        assert se < 0.002


class TestHopDistance:
    def test_simple_chain(self):
        assert hop_distance([0, 1, 2], [(0, 1), (1, 2)], 0, 2) == 2

    def test_unreachable(self):
        assert hop_distance([0, 1], [], 0, 1) == math.inf

    def test_self(self):
        assert hop_distance([0], [], 0, 0) == 0


class TestExhaustivePlan:
    def test_matches_sampling_planner(self):
        sc = tiny_scenario(seed=2, n_max=4000)
        sc.planner.stop_at_first = False
        res = plan(sc)
        best = exhaustive_plan(sc, 4)
        assert res.found and best is not None
        assert res.cost == pytest.approx(best[0], abs=1e-9)

    def test_unsatisfiable_task_none_on_both_sides(self):
        sc = tiny_scenario(seed=2, n_max=300)
        # broad, never-localizable belief: the proximity bar is unreachable
        sc.landmarks[0].prior.cov = np.eye(2)
        assert exhaustive_plan(sc, 4) is None
        assert not plan(sc).found

    def test_accepting_root_costs_zero(self):
        sc = tiny_scenario(seed=2)
        sc.task_text = "true"
        from semplan.ltl import parse_cosafe_ltl

        sc.formula = parse_cosafe_ltl("true")
        assert exhaustive_plan(sc, 0) == (0.0, [])

    def test_budget_guard(self):
        sc = tiny_scenario(seed=2)
        with pytest.raises(OracleBudgetError):
            exhaustive_plan(sc, 30, budget=10_000)


def test_oracle_report_rows(tmp_path):
    rep = OracleReport()
    assert rep.add("case1", 1.0, 1.005, 0.01)
    assert not rep.add("case2", 1.0, 2.0, 0.01)
    assert rep.add("case3", 5, 5, 0, exact=True)
    assert not rep.all_pass
    out = tmp_path / "report.csv"
    rep.to_csv(out)
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 4 and lines[0].startswith("case,")
