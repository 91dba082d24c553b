"""Co-safe LTL over named predicates: parsing, DFA compilation, pruning.

Formulas are built from `true`, atoms, negated atoms, `&`, `|`, `U`
(until) and `F` (eventually, sugar for `true U phi`).  They are compiled
into a deterministic finite automaton by repeated formula derivatives:
the state reached after reading a symbol is the simplified residual
formula, so the expansion is deterministic by construction.  A single
accepting sink (the residual `true`) and, when the formula can be
violated, a single absorbing dead state (the residual `false`) come out
of the construction for free.

Transition guards are kept per source state as assignments ("minterms")
over that state's own support atoms only; atoms that do not occur in the
state's residual formula are unconstrained.  This avoids enumerating the
full symbol alphabet, which is exponential in the number of atoms.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

__all__ = [
    "Formula",
    "LtlError",
    "LtlSyntaxError",
    "TRUE",
    "FALSE",
    "atom",
    "f_not",
    "f_and",
    "f_or",
    "f_until",
    "f_eventually",
    "parse_cosafe_ltl",
    "Dfa",
    "Guard",
    "compile_to_dfa",
    "AtomBinding",
    "PrunedDfaIndex",
    "prune_dfa",
    "dfa_distance",
    "next_state",
    "reachable_min_set",
    "select_transition_symbol",
]


class LtlError(Exception):
    pass


class LtlSyntaxError(LtlError):
    def __init__(self, message, line, col):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# Formula AST
# ---------------------------------------------------------------------------

class Formula:
    """Co-safe formula node, hash-consed so equal structures are one object.

    kind is one of "true", "false", "atom", "not", "and", "or", "until".
    "not" wraps an atom only; `F phi` is stored as `true U phi`.  The
    canonical constructors f_and / f_or flatten, deduplicate and sort
    children; interning then makes equality and hashing O(1), which keeps
    the derivative expansion fast for deeply nested formulas.
    """

    __slots__ = ("kind", "name", "children", "_id", "_atoms")
    _intern: dict = {}

    def __new__(cls, kind, name=None, children=()):
        key = (kind, name, tuple(c._id for c in children))
        inst = cls._intern.get(key)
        if inst is None:
            inst = super().__new__(cls)
            inst.kind = kind
            inst.name = name
            inst.children = children
            inst._id = len(cls._intern)
            inst._atoms = None
            cls._intern[key] = inst
        return inst

    def __hash__(self):
        return self._id

    def __str__(self):
        return _fmt(self)

    def __repr__(self):
        return f"Formula({_fmt(self)})"

    def atoms(self):
        """Sorted tuple of atom names occurring in the formula."""
        if self._atoms is None:
            out = set()
            _collect_atoms(self, out)
            self._atoms = tuple(sorted(out))
        return self._atoms


def _collect_atoms(f, out):
    if f.kind in ("atom", "not"):
        out.add(f.name)
    for c in f.children:
        _collect_atoms(c, out)


def _fmt(f):
    if f.kind == "true":
        return "true"
    if f.kind == "false":
        return "false"
    if f.kind == "atom":
        return f.name
    if f.kind == "not":
        return "!" + f.name
    if f.kind == "and":
        return "(" + " & ".join(_fmt(c) for c in f.children) + ")"
    if f.kind == "or":
        return "(" + " | ".join(_fmt(c) for c in f.children) + ")"
    return "(" + _fmt(f.children[0]) + " U " + _fmt(f.children[1]) + ")"


TRUE = Formula("true")
FALSE = Formula("false")


def atom(name):
    return Formula("atom", name=name)


def f_not(f):
    if f.kind != "atom":
        raise LtlError(f"negation applies to atoms only, got: {f}")
    return Formula("not", name=f.name)


def _sort_key(f):
    return f._id


# The canonical constructors keep every formula in a disjunctive normal
# form over "literal" nodes (atoms, negated atoms, untils): an antichain
# of monomials.  Absorption (drop superset monomials) is what stops the
# residuals of nested untils from growing without bound during DFA
# expansion; complement pairs inside a monomial cancel it.

def _monomials(f):
    """DNF view of a canonical formula: set of frozensets of literals."""
    if f.kind == "true":
        return {frozenset()}
    if f.kind == "false":
        return set()
    if f.kind in ("atom", "not", "until"):
        return {frozenset((f,))}
    if f.kind == "and":
        return {frozenset(f.children)}
    out = set()
    for c in f.children:
        if c.kind == "and":
            out.add(frozenset(c.children))
        else:
            out.add(frozenset((c,)))
    return out


def _monomial_ok(m):
    pos = {f.name for f in m if f.kind == "atom"}
    neg = {f.name for f in m if f.kind == "not"}
    return not (pos & neg)


def _antichain(monos):
    keep = []
    for m in sorted(monos, key=len):
        if not any(k <= m for k in keep):
            keep.append(m)
    return keep


def _from_monomials(monos):
    monos = _antichain(m for m in monos if _monomial_ok(m))
    if not monos:
        return FALSE
    terms = []
    for m in monos:
        lits = sorted(m, key=_sort_key)
        if not lits:
            return TRUE
        terms.append(lits[0] if len(lits) == 1 else Formula("and", children=tuple(lits)))
    terms = sorted(set(terms), key=_sort_key)
    if len(terms) == 1:
        return terms[0]
    return Formula("or", children=tuple(terms))


def f_and(parts):
    monos = {frozenset()}
    for p in parts:
        if p.kind == "false":
            return FALSE
        pm = _monomials(p)
        monos = {m1 | m2 for m1 in monos for m2 in pm}
    return _from_monomials(monos)


def f_or(parts):
    monos = set()
    for p in parts:
        if p.kind == "true":
            return TRUE
        monos |= _monomials(p)
    return _from_monomials(monos)


def f_until(left, right):
    if right.kind == "false":
        return FALSE
    if left.kind == "false":
        return right
    return Formula("until", children=(left, right))


def f_eventually(f):
    return f_until(TRUE, f)


_DERIV_MEMO: dict = {}


def _derivative(f, sigma):
    """Residual formula after consuming the symbol (set of true atoms)."""
    if f.kind in ("true", "false"):
        return f
    if f.kind == "atom":
        return TRUE if f.name in sigma else FALSE
    if f.kind == "not":
        return FALSE if f.name in sigma else TRUE
    key = (f._id, sigma)
    hit = _DERIV_MEMO.get(key)
    if hit is not None:
        return hit
    if f.kind == "and":
        out = f_and([_derivative(c, sigma) for c in f.children])
    elif f.kind == "or":
        out = f_or([_derivative(c, sigma) for c in f.children])
    else:
        left, right = f.children
        # phi U psi  ==  psi | (phi & X(phi U psi)) on non-empty words
        out = f_or([_derivative(right, sigma),
                    f_and([_derivative(left, sigma), f])])
    _DERIV_MEMO[key] = out
    return out


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_KEYWORDS = {"U", "F", "true"}


def _tokenize(text):
    toks = []
    line, col = 1, 1
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch.isspace():
            col += 1
            i += 1
            continue
        if ch in "()&|!":
            toks.append((ch, ch, line, col))
            col += 1
            i += 1
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = word if word in _KEYWORDS else "ident"
            toks.append((kind, word, line, col))
            col += j - i
            i = j
            continue
        raise LtlSyntaxError(f"unexpected character {ch!r}", line, col)
    toks.append(("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, tokens, known_atoms=None):
        self.toks = tokens
        self.pos = 0
        self.known = known_atoms

    def peek(self):
        return self.toks[self.pos]

    def take(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise LtlSyntaxError(msg, tok[2], tok[3])

    def parse(self):
        f = self.parse_or()
        if self.peek()[0] != "eof":
            self.error(f"unexpected token {self.peek()[1]!r}")
        return f

    def parse_or(self):
        parts = [self.parse_and()]
        while self.peek()[0] == "|":
            self.take()
            parts.append(self.parse_and())
        return parts[0] if len(parts) == 1 else Formula("or", children=tuple(parts))

    def parse_and(self):
        parts = [self.parse_until()]
        while self.peek()[0] == "&":
            self.take()
            parts.append(self.parse_until())
        return parts[0] if len(parts) == 1 else Formula("and", children=tuple(parts))

    def parse_until(self):
        left = self.parse_unary()
        if self.peek()[0] == "U":
            self.take()
            right = self.parse_until()
            return Formula("until", children=(left, right))
        return left

    def parse_unary(self):
        kind, word, line, col = self.peek()
        if kind == "!":
            self.take()
            inner_tok = self.peek()
            inner = self.parse_unary()
            if inner.kind != "atom":
                raise LtlSyntaxError(
                    "negation may only be applied to an atomic predicate",
                    inner_tok[2], inner_tok[3])
            return Formula("not", name=inner.name)
        if kind == "F":
            self.take()
            return Formula("until", children=(TRUE, self.parse_unary()))
        if kind == "(":
            self.take()
            f = self.parse_or()
            if self.peek()[0] != ")":
                self.error("expected ')'")
            self.take()
            return f
        if kind == "true":
            self.take()
            return TRUE
        if kind == "ident":
            self.take()
            if self.known is not None and word not in self.known:
                raise LtlSyntaxError(f"unknown atom {word!r}", line, col)
            return Formula("atom", name=word)
        self.error(f"expected a formula, got {word!r}" if word else "unexpected end of input")


def parse_cosafe_ltl(text, known_atoms=None):
    """Parse co-safe LTL text into a normalized Formula.

    Precedence (tightest first): ! and F, U (right associative), &, |.
    `F phi` desugars to `true U phi`; negation is restricted to atoms.
    When `known_atoms` is given, atom names outside it are rejected.
    """
    return _Parser(_tokenize(text), known_atoms).parse()


# ---------------------------------------------------------------------------
# DFA
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Guard:
    """Enabling condition of one DFA edge.

    `support` are the atoms the source state constrains; `masks` are the
    bit assignments over `support` (bit i = truth of support[i]) that take
    the edge.  Atoms outside the support are unconstrained.
    """

    support: tuple
    masks: tuple

    def symbols(self):
        """Minimal positive-atom sets, one per mask (don't-cares false)."""
        out = []
        for m in self.masks:
            out.append(frozenset(a for i, a in enumerate(self.support) if m >> i & 1))
        return out

    def required_false_atoms(self):
        """Atoms that are false under every enabling assignment."""
        req = set()
        for i, a in enumerate(self.support):
            if all(not (m >> i & 1) for m in self.masks):
                req.add(a)
        return req

    def admits(self, sigma):
        m = 0
        for i, a in enumerate(self.support):
            if a in sigma:
                m |= 1 << i
        return m in set(self.masks)


class Dfa:
    """Deterministic finite automaton over sets of true atoms.

    States are ints numbered in BFS discovery order from the initial
    state.  `dead`, when present, is the absorbing violation state; a
    move into it means the formula can no longer be satisfied and is
    reported as None by :meth:`next_state`.
    """

    def __init__(self, states, initial, accepting, dead, alphabet,
                 support, succ_tables, state_formulas=None):
        self.states = states                # list of int ids
        self.initial = initial
        self.accepting = accepting          # single accepting sink (or None)
        self.dead = dead                    # violation sink id or None
        self.alphabet = alphabet            # tuple of atom names
        self._support = support             # id -> tuple of atoms
        self._succ = succ_tables            # id -> list: mask -> successor id
        self._formulas = state_formulas or {}

    @property
    def n_states(self):
        return len(self.states)

    def support(self, q):
        return self._support[q]

    def _mask_of(self, q, sigma):
        m = 0
        for i, a in enumerate(self._support[q]):
            if a in sigma:
                m |= 1 << i
        return m

    def step(self, q, sigma):
        """Raw successor including the dead state."""
        return self._succ[q][self._mask_of(q, sigma)]

    def next_state(self, q, sigma):
        """Successor of q under symbol sigma, or None on violation."""
        if q not in self._succ:
            raise LtlError(f"unknown DFA state {q}")
        nxt = self.step(q, sigma)
        if self.dead is not None and nxt == self.dead:
            return None
        return nxt

    def accepts(self, word):
        """Run the automaton on a finite word (iterable of symbols)."""
        q = self.initial
        for sigma in word:
            q = self.next_state(q, sigma)
            if q is None:
                return False
        return q == self.accepting

    def edges(self):
        """All transitions as (src, Guard, dst), deterministic order."""
        out = []
        for q in self.states:
            by_dst = {}
            for mask, dst in enumerate(self._succ[q]):
                by_dst.setdefault(dst, []).append(mask)
            for dst in sorted(by_dst):
                out.append((q, Guard(self._support[q], tuple(by_dst[dst])), dst))
        return out

    def dump(self):
        """Deterministic text dump: one `src TAB guard TAB dst` per line."""
        lines = []
        for src, guard, dst in self.edges():
            lines.append(f"{src}\t{_guard_text(guard)}\t{dst}")
        return "\n".join(lines) + "\n"


def _merge_cubes(support, masks):
    """Reduce a set of minterms to cubes (care_mask, value) for display."""
    n = len(support)
    cubes = {(((1 << n) - 1), m) for m in masks}
    changed = True
    while changed:
        changed = False
        merged = set()
        used = set()
        cl = sorted(cubes)
        for i in range(len(cl)):
            for j in range(i + 1, len(cl)):
                c1, v1 = cl[i]
                c2, v2 = cl[j]
                if c1 != c2:
                    continue
                diff = v1 ^ v2
                if diff and not diff & (diff - 1):  # single bit
                    merged.add((c1 & ~diff, v1 & ~diff))
                    used.add(cl[i])
                    used.add(cl[j])
        if merged - cubes:
            cubes = (cubes - used) | merged
            changed = True
    return sorted(cubes)


def _guard_text(guard):
    if not guard.support:
        return "true"
    parts = []
    for care, val in _merge_cubes(guard.support, guard.masks):
        lits = []
        for i, a in enumerate(guard.support):
            if care >> i & 1:
                lits.append(a if val >> i & 1 else "!" + a)
        parts.append(" & ".join(lits) if lits else "true")
    if "true" in parts:
        return "true"
    return " | ".join(parts)


def compile_to_dfa(formula, state_cap=100_000):
    """Compile a normalized co-safe formula into a Dfa.

    Expansion proceeds breadth-first over simplified formula derivatives;
    exceeding `state_cap` states (or 2^20 assignments for one state's
    support) raises LtlError.  Unreachable states never get created.
    """
    init = _normalize(formula)
    alphabet = init.atoms()
    ids = {init: 0}
    order = [init]
    succ_tables = {}
    support = {}
    queue = deque([init])
    while queue:
        f = queue.popleft()
        q = ids[f]
        sup = f.atoms()
        if len(sup) > 20:
            raise LtlError(f"state support too large ({len(sup)} atoms)")
        support[q] = sup
        table = []
        for mask in range(1 << len(sup)):
            sigma = frozenset(a for i, a in enumerate(sup) if mask >> i & 1)
            nf = _derivative(f, sigma)
            if nf not in ids:
                if len(ids) >= state_cap:
                    raise LtlError(f"DFA state cap {state_cap} exceeded")
                ids[nf] = len(ids)
                order.append(nf)
                queue.append(nf)
            table.append(ids[nf])
        succ_tables[q] = table
    accepting = ids.get(TRUE)
    dead = ids.get(FALSE)
    formulas = {i: f for f, i in ids.items()}
    return Dfa(list(range(len(ids))), 0, accepting, dead, alphabet,
               support, succ_tables, formulas)


def _normalize(f):
    """Re-canonicalize a parse AST (flatten/sort/absorb)."""
    if f.kind in ("true", "false", "atom", "not"):
        return f
    if f.kind == "and":
        return f_and([_normalize(c) for c in f.children])
    if f.kind == "or":
        return f_or([_normalize(c) for c in f.children])
    return f_until(_normalize(f.children[0]), _normalize(f.children[1]))


# ---------------------------------------------------------------------------
# Pruning and hop distances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AtomBinding:
    """What an atom requires: which robot, and a landmark or class target.

    kind is one of "proximity", "class_proximity", "uncertainty",
    "relaxed_class_proximity".
    """

    robot: str
    kind: str
    landmark: Optional[str] = None
    cls: Optional[str] = None


_LOCATION_KINDS = ("proximity",)
_CLASS_KINDS = ("class_proximity", "relaxed_class_proximity")


def _mask_feasible(support, mask, meta):
    """False when one robot must hold position atoms for two targets."""
    lm_by_robot = {}
    cls_by_robot = {}
    for i, a in enumerate(support):
        if not (mask >> i & 1):
            continue
        b = meta.get(a)
        if b is None:
            continue
        if b.kind in _LOCATION_KINDS:
            lm_by_robot.setdefault(b.robot, set()).add(b.landmark)
        elif b.kind in _CLASS_KINDS:
            cls_by_robot.setdefault(b.robot, set()).add(b.cls)
    if any(len(s) > 1 for s in lm_by_robot.values()):
        return False
    if any(len(s) > 1 for s in cls_by_robot.values()):
        return False
    return True


@dataclass
class PrunedDfaIndex:
    """Pruned transition graph plus hop-distance tables.

    `adj[q]` maps successor -> Guard restricted to the surviving symbol
    assignments.  `dist[q][q']` holds the pruned-graph hop count; missing
    entries mean unreachable.  The violation sink never appears as a
    successor here.
    """

    dfa: Dfa
    adj: dict
    dist: dict
    accept_reachable: bool = True
    pruned_edge_count: int = 0
    kept_edge_count: int = 0
    _symbol_cache: dict = field(default_factory=dict, repr=False)

    def distance(self, q, q2):
        if q not in self.dfa._succ or q2 not in self.dfa._succ:
            raise LtlError(f"unknown DFA state {q if q not in self.dfa._succ else q2}")
        if q == q2:
            return 0
        if q not in self.dist:  # the violation sink reaches nothing
            return math.inf
        return self.dist[q].get(q2, math.inf)

    def distance_to_accept(self, q):
        if self.dfa.accepting is None:
            return math.inf
        return self.distance(q, self.dfa.accepting)


def _all_pairs_hops(nodes, adj):
    dist = {}
    for src in nodes:
        d = {src: 0}
        dq = deque([src])
        while dq:
            u = dq.popleft()
            for v in sorted(adj.get(u, ())):
                if v not in d:
                    d[v] = d[u] + 1
                    dq.append(v)
        dist[src] = d
    return dist


def prune_dfa(dfa, atom_meta, prune=True):
    """Drop transition assignments that need a robot in two places at once.

    `atom_meta` maps atom name -> AtomBinding.  An enabling assignment is
    infeasible when its true atoms bind one robot to two distinct
    landmarks (position atoms) or to two distinct classes (class atoms).
    Edges that lose every assignment disappear from the pruned graph.
    With `prune=False` the index is built over the unpruned graph (the
    fallback when pruning disconnects the accepting state).

    Returns a PrunedDfaIndex; `accept_reachable` is False when no pruned
    path leads from the initial to the accepting state, in which case the
    caller may rebuild with `prune=False`.
    """
    adj = {}
    pruned = kept = 0
    for q in dfa.states:
        if q == dfa.dead:
            continue
        sup = dfa.support(q)
        by_dst = {}
        for mask, dst in enumerate(dfa._succ[q]):
            if dst == dfa.dead:
                continue
            if prune and not _mask_feasible(sup, mask, atom_meta):
                pruned += 1
                continue
            kept += 1
            by_dst.setdefault(dst, []).append(mask)
        adj[q] = {dst: Guard(sup, tuple(masks)) for dst, masks in sorted(by_dst.items())}
    dist = _all_pairs_hops(sorted(adj), adj)
    ok = True
    if dfa.accepting is None:
        ok = False
    else:
        ok = dfa.accepting in dist.get(dfa.initial, {})
    return PrunedDfaIndex(dfa, adj, dist, accept_reachable=ok,
                          pruned_edge_count=pruned, kept_edge_count=kept)


def dfa_distance(index, q, q2):
    """Hop count from q to q2 over the pruned graph; math.inf if none."""
    return index.distance(q, q2)


def next_state(dfa, q, sigma):
    """delta(q, sigma), or None when the move violates the formula."""
    return dfa.next_state(q, sigma)


def reachable_min_set(index, q_next, q_accept):
    """One-hop successors of q_next closest (in pruned hops) to q_accept.

    Returns the full argmin set; empty when q_next has no pruned
    successors.  The violation sink is never a candidate.
    """
    succs = sorted(index.adj.get(q_next, ()))
    if not succs:
        return set()
    dists = [index.distance(s, q_accept) for s in succs]
    best = min(dists)
    return {s for s, d in zip(succs, dists) if d == best}


def select_transition_symbol(index, q_next, q_min):
    """Deterministic enabling symbol for the pruned edge q_next -> q_min.

    Chooses the assignment with the fewest positive atoms, breaking ties
    lexicographically on the sorted atom names, so repeated calls agree.
    """
    key = (q_next, q_min)
    cached = index._symbol_cache.get(key)
    if cached is not None:
        return cached
    guard = index.adj.get(q_next, {}).get(q_min)
    if guard is None:
        raise LtlError(f"no pruned transition {q_next} -> {q_min}")
    best = min(guard.symbols(), key=lambda s: (len(s), tuple(sorted(s))))
    index._symbol_cache[key] = best
    return best
