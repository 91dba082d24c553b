import itertools
import math

import pytest

from semplan.ltl import (TRUE, AtomBinding, Formula, Guard, LtlError,
                         LtlSyntaxError, PrunedDfaIndex, compile_to_dfa,
                         dfa_distance, next_state, parse_cosafe_ltl, prune_dfa,
                         reachable_min_set, select_transition_symbol)
from semplan.oracles import hop_distance, semantic_eval

from conftest import random_cosafe_formula, random_word


def meta(**kw):
    return {name: AtomBinding(robot=r, kind=k, landmark=lm, cls=c)
            for name, (r, k, lm, c) in kw.items()}


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

class TestParse:
    def test_eventually_desugars_to_until(self):
        f = parse_cosafe_ltl("F a")
        assert f.kind == "until"
        assert f.children[0] is TRUE
        assert f.children[1].kind == "atom" and f.children[1].name == "a"

    def test_conjunction_of_untils(self):
        f = parse_cosafe_ltl("(F a) & (!b U a)")
        assert f.kind == "and" and len(f.children) == 2
        ev, unt = f.children
        assert ev.children[0] is TRUE
        assert unt.kind == "until"
        assert unt.children[0].kind == "not" and unt.children[0].name == "b"

    def test_negation_of_compound_rejected(self):
        with pytest.raises(LtlSyntaxError):
            parse_cosafe_ltl("!(a & b)")

    def test_precedence(self):
        f = parse_cosafe_ltl("!b U a")
        assert f.kind == "until" and f.children[0].kind == "not"
        g = parse_cosafe_ltl("F a & b")
        assert g.kind == "and" and g.children[0].kind == "until"
        h = parse_cosafe_ltl("a | b U c")
        assert h.kind == "or" and h.children[1].kind == "until"

    def test_syntax_error_carries_position(self):
        with pytest.raises(LtlSyntaxError) as exc:
            parse_cosafe_ltl("a &\n& b")
        assert exc.value.line == 2

    def test_unknown_atom(self):
        with pytest.raises(LtlSyntaxError, match="unknown atom"):
            parse_cosafe_ltl("F z", known_atoms={"a"})


# ---------------------------------------------------------------------------
# compilation
# ---------------------------------------------------------------------------

class TestCompile:
    def test_true_single_accepting_state(self):
        d = compile_to_dfa(parse_cosafe_ltl("true"))
        assert d.n_states == 1 and d.initial == d.accepting

    def test_eventually_two_states(self):
        d = compile_to_dfa(parse_cosafe_ltl("F a"))
        assert d.n_states == 2
        assert d.next_state(d.initial, frozenset({"a"})) == d.accepting
        assert d.next_state(d.initial, frozenset()) == d.initial

    def test_sequenced_visit_with_avoidance_has_six_states(self):
        # visit l1 then l2, avoiding s until each
        f = parse_cosafe_ltl("F (a & F b) & (!s U b) & (!s U a)")
        assert compile_to_dfa(f).n_states == 6

    def test_single_atom_brute_force(self):
        f = parse_cosafe_ltl("F a")
        d = compile_to_dfa(f)
        syms = [frozenset(), frozenset({"a"})]
        for n in range(5):
            for word in itertools.product(syms, repeat=n):
                assert d.accepts(word) == semantic_eval(f, list(word))

    def test_state_cap(self):
        f = parse_cosafe_ltl("F (a & F (b & F (c & F a)))")
        with pytest.raises(LtlError, match="cap"):
            compile_to_dfa(f, state_cap=2)

    def test_random_equivalence(self, rng):
        for _ in range(150):
            f = random_cosafe_formula(rng)
            d = compile_to_dfa(f)
            for _ in range(20):
                w = random_word(rng)
                assert d.accepts(w) == semantic_eval(f, w), (str(f), w)

    def test_dump_deterministic_and_bfs_numbered(self):
        d = compile_to_dfa(parse_cosafe_ltl("F a"))
        dump = d.dump()
        assert dump == d.dump()
        assert dump.splitlines()[0].startswith("0\t")


# ---------------------------------------------------------------------------
# pruning and distances
# ---------------------------------------------------------------------------

class TestPrune:
    def test_same_robot_two_landmarks_pruned(self):
        d = compile_to_dfa(parse_cosafe_ltl("F (a & b)"))
        idx = prune_dfa(d, meta(a=("r1", "proximity", "l1", None),
                                b=("r1", "proximity", "l2", None)))
        assert not idx.accept_reachable  # only enabling symbol was {a, b}
        assert idx.pruned_edge_count > 0

    def test_different_robots_kept(self):
        d = compile_to_dfa(parse_cosafe_ltl("F (a & b)"))
        idx = prune_dfa(d, meta(a=("r1", "proximity", "l1", None),
                                b=("r2", "proximity", "l2", None)))
        assert idx.accept_reachable

    def test_same_robot_two_classes_pruned(self):
        d = compile_to_dfa(parse_cosafe_ltl("F (a & b)"))
        idx = prune_dfa(d, meta(a=("r1", "class_proximity", None, "person"),
                                b=("r1", "class_proximity", None, "car")))
        assert not idx.accept_reachable

    def test_chain_distance(self):
        # same robot: direct {a, b} jump pruned, leaving the 2-hop chain
        d = compile_to_dfa(parse_cosafe_ltl("F a & F b"))
        idx = prune_dfa(d, meta(a=("r1", "proximity", "l1", None),
                                b=("r1", "proximity", "l2", None)))
        assert idx.accept_reachable
        assert dfa_distance(idx, d.initial, d.accepting) == 2

    def test_pruning_only_removes(self, rng):
        bindings = [("r1", "proximity", "l1", None), ("r1", "proximity", "l2", None),
                    ("r2", "proximity", "l1", None)]
        for _ in range(30):
            f = random_cosafe_formula(rng)
            d = compile_to_dfa(f)
            m = {a: AtomBinding(*bindings[rng.integers(3)]) for a in d.alphabet}
            pruned = prune_dfa(d, m)
            full = prune_dfa(d, m, prune=False)
            assert pruned.kept_edge_count <= full.kept_edge_count
            for q in d.states:
                if q == d.dead:
                    continue
                for q2 in pruned.adj[q]:
                    assert set(pruned.adj[q][q2].masks) <= set(full.adj[q][q2].masks)
                    assert pruned.distance(q, q2) >= full.distance(q, q2) or \
                        pruned.distance(q, q2) == 1


class TestDistance:
    def test_self_distance_zero(self):
        d = compile_to_dfa(parse_cosafe_ltl("F a & F b"))
        idx = prune_dfa(d, {})
        for q in idx.adj:
            assert dfa_distance(idx, q, q) == 0

    def test_disconnected_pair_is_inf(self):
        d = compile_to_dfa(parse_cosafe_ltl("F a"))
        idx = prune_dfa(d, {})
        assert dfa_distance(idx, d.accepting, d.initial) == math.inf

    def test_unknown_state(self):
        d = compile_to_dfa(parse_cosafe_ltl("F a"))
        idx = prune_dfa(d, {})
        with pytest.raises(LtlError):
            dfa_distance(idx, 99, 0)

    def test_random_automata_match_oracle(self, rng):
        checked = 0
        while checked < 20:
            f = random_cosafe_formula(rng)
            d = compile_to_dfa(f)
            if d.n_states > 20 or d.initial == d.dead:
                continue
            idx = prune_dfa(d, {})
            nodes = sorted(idx.adj)
            edges = [(q, q2) for q in nodes for q2 in idx.adj[q]]
            for _ in range(50):
                a = nodes[rng.integers(len(nodes))]
                b = nodes[rng.integers(len(nodes))]
                assert dfa_distance(idx, a, b) == hop_distance(nodes, edges, a, b)
            checked += 1


class TestNextState:
    def test_accepting_sink_loops(self):
        d = compile_to_dfa(parse_cosafe_ltl("F a"))
        for sigma in (frozenset(), frozenset({"a"})):
            assert next_state(d, d.accepting, sigma) == d.accepting

    def test_eventually_fires(self):
        d = compile_to_dfa(parse_cosafe_ltl("F a"))
        assert next_state(d, d.initial, frozenset({"a"})) == d.accepting

    def test_violation_returns_none(self):
        f = parse_cosafe_ltl("!b U a")
        d = compile_to_dfa(f)
        assert next_state(d, d.initial, frozenset({"b"})) is None
        assert semantic_eval(f, [frozenset({"b"})]) is False


class TestReachableMinSet:
    def test_accepting_self(self):
        d = compile_to_dfa(parse_cosafe_ltl("F a"))
        idx = prune_dfa(d, {})
        assert reachable_min_set(idx, d.accepting, d.accepting) == {d.accepting}

    def test_chain_advances(self):
        d = compile_to_dfa(parse_cosafe_ltl("F a & F b"))
        idx = prune_dfa(d, meta(a=("r1", "proximity", "l1", None),
                                b=("r1", "proximity", "l2", None)))
        got = reachable_min_set(idx, d.initial, d.accepting)
        assert got and all(dfa_distance(idx, q, d.accepting) == 1 for q in got)

    def test_tied_successors_all_returned(self):
        d = compile_to_dfa(parse_cosafe_ltl("F a & F b"))
        idx = prune_dfa(d, meta(a=("r1", "proximity", "l1", None),
                                b=("r1", "proximity", "l2", None)))
        got = reachable_min_set(idx, d.initial, d.accepting)
        assert len(got) == 2  # the a-done and b-done states tie at one hop


class TestSelectSymbol:
    def _index_with_guard(self, guard):
        d = compile_to_dfa(parse_cosafe_ltl("true"))
        return PrunedDfaIndex(d, {0: {1: guard}}, {0: {0: 0}, 1: {1: 0}})

    def test_single_symbol(self):
        idx = self._index_with_guard(Guard(("a",), (1,)))
        assert select_transition_symbol(idx, 0, 1) == frozenset({"a"})

    def test_fewest_positive_atoms_wins(self):
        idx = self._index_with_guard(Guard(("a", "b"), (1, 3)))  # {a}, {a,b}
        assert select_transition_symbol(idx, 0, 1) == frozenset({"a"})

    def test_deterministic(self):
        d = compile_to_dfa(parse_cosafe_ltl("F a & F b"))
        idx = prune_dfa(d, {})
        pairs = [(q, q2) for q in idx.adj for q2 in idx.adj[q]]
        for q, q2 in pairs:
            first = select_transition_symbol(idx, q, q2)
            for _ in range(5):
                assert select_transition_symbol(idx, q, q2) == first
