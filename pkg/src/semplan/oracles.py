"""Brute-force reference implementations used by the test suite.

Everything here is deliberately independent of the production code paths
it cross-checks: the word evaluator recurses on the temporal semantics
directly, distances use a unit-cost Dijkstra rather than layered BFS,
disk masses are Monte Carlo, the Kalman oracle is the plain textbook
update, and the tiny-scenario planner enumerates every control sequence.
"""

from __future__ import annotations

import heapq
import itertools
import math

import numpy as np

__all__ = [
    "semantic_eval",
    "hop_distance",
    "mc_disk_mass",
    "kf_posterior_cov",
    "kf_posterior",
    "exhaustive_plan",
    "OracleReport",
]


def semantic_eval(formula, word):
    """Evaluate a formula on a finite word (sequence of atom-name sets).

    Direct recursion on the finite-word semantics: atoms (and negated
    atoms) need a first position, `phi1 U phi2` needs some position t
    where phi2 holds with phi1 holding at every earlier position.
    """
    k = formula.kind
    if k == "true":
        return True
    if k == "false":
        return False
    if k == "atom":
        return len(word) > 0 and formula.name in word[0]
    if k == "not":
        return len(word) > 0 and formula.name not in word[0]
    if k == "and":
        return all(semantic_eval(c, word) for c in formula.children)
    if k == "or":
        return any(semantic_eval(c, word) for c in formula.children)
    left, right = formula.children
    for t in range(len(word)):
        if semantic_eval(right, word[t:]):
            if all(semantic_eval(left, word[t2:]) for t2 in range(t)):
                return True
    return False


def hop_distance(nodes, edges, src, dst):
    """Unit-cost Dijkstra hop count over explicit edges; inf if no path."""
    adj = {n: [] for n in nodes}
    for a, b in edges:
        adj[a].append(b)
    dist = {src: 0}
    heap = [(0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if u == dst:
            return d
        if d > dist.get(u, math.inf):
            continue
        for v in adj.get(u, ()):
            if d + 1 < dist.get(v, math.inf):
                dist[v] = d + 1
                heapq.heappush(heap, (d + 1, v))
    return dist.get(dst, math.inf)


def mc_disk_mass(mean, cov, point, r, samples, rng):
    """Monte-Carlo mass of N(mean, cov) inside the r-disk around point.

    Returns (estimate, standard_error).
    """
    mean = np.asarray(mean, dtype=float)
    point = np.asarray(point, dtype=float)
    draws = rng.multivariate_normal(mean, np.asarray(cov, dtype=float), size=samples)
    inside = np.linalg.norm(draws - point, axis=1) <= r
    p = float(np.mean(inside))
    se = math.sqrt(max(p * (1 - p), 1e-12) / samples)
    return p, se


def kf_posterior_cov(cov, A, R, H, Q):
    """Textbook Kalman covariance step: predict then batch update.

    H stacks the measurement rows of every sensing robot; Q is the
    corresponding block-diagonal noise.  Pass H=None for predict-only.
    """
    P = A @ cov @ A.T + R
    if H is None or len(H) == 0:
        return P
    H = np.atleast_2d(np.asarray(H, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    S = H @ P @ H.T + Q
    K = P @ H.T @ np.linalg.inv(S)
    return (np.eye(P.shape[0]) - K @ H) @ P


def kf_posterior(mean, cov, H, Q, y):
    """Textbook mean+cov measurement update (no prediction)."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    S = H @ cov @ H.T + Q
    K = cov @ H.T @ np.linalg.inv(S)
    mean2 = mean + K @ (y - H @ mean)
    cov2 = (np.eye(cov.shape[0]) - K @ H) @ cov
    return mean2, cov2


class OracleBudgetError(Exception):
    pass


def exhaustive_plan(scenario, depth, budget=10_000_000):
    """Enumerate every control sequence up to `depth`; return the optimal
    (cost, controls) reaching the accepting automaton state, or None.

    Replays the same dynamics, map propagation and labeling the planner
    uses, but searches by full enumeration instead of sampling.  Raises
    OracleBudgetError when the sequence count exceeds `budget`.
    """
    from . import planner as _planner

    model = _planner.PlanModel(scenario)
    joint = model.joint_controls()
    n_seq = sum(len(joint) ** d for d in range(1, depth + 1))
    if n_seq > budget:
        raise OracleBudgetError(f"{n_seq} sequences exceed budget {budget}")

    root_pose, root_map, root_dfa = model.root_state()
    if root_dfa == model.dfa.accepting:
        return 0.0, []

    best = None
    for d in range(1, depth + 1):
        for seq in itertools.product(joint, repeat=d):
            pose, mp, q = root_pose, root_map, root_dfa
            cost = 0.0
            t = 0
            ok = True
            for u in seq:
                new_pose = model.step_pose(pose, u)
                if not model.pose_free(new_pose):
                    ok = False
                    break
                q = model.dfa_step(q, pose, mp)
                if q is None:
                    ok = False
                    break
                cost += model.motion_cost(pose, new_pose)
                mp = model.propagate_map(mp, new_pose, t)
                pose = new_pose
                t += 1
                if q == model.dfa.accepting:
                    break
            if ok and q == model.dfa.accepting:
                if best is None or cost < best[0]:
                    best = (cost, list(seq[:t]))
    return best


class OracleReport:
    """Accumulates (case, oracle value, implementation value, tol) rows."""

    def __init__(self):
        self.rows = []

    def add(self, case_id, oracle_value, impl_value, tolerance, exact=False):
        if exact:
            ok = oracle_value == impl_value
        else:
            ok = abs(oracle_value - impl_value) <= tolerance
        self.rows.append({
            "case": case_id,
            "oracle": oracle_value,
            "implementation": impl_value,
            "tolerance": tolerance,
            "pass": bool(ok),
        })
        return ok

    @property
    def all_pass(self):
        return all(r["pass"] for r in self.rows)

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["case", "oracle", "implementation",
                                               "tolerance", "pass"])
            w.writeheader()
            for r in self.rows:
                w.writerow(r)
