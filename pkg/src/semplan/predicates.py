"""Perception-based predicates over (team state, map estimate).

The common core is the mass of a Gaussian position belief inside a disk
around a robot.  It is computed deterministically by quadrature in polar
coordinates in the whitened frame of the belief: 64 Gauss-Legendre nodes
per 64 angular panels, with the radial factor integrated in closed form
(the radial integrand of a standard normal is an exact exponential), so
accuracy does not degrade for tightly concentrated beliefs.  All
threshold comparisons are closed inequalities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = ["PredicateDef", "prob_within_radius", "eval_proximity",
           "eval_class_proximity", "eval_uncertainty",
           "eval_relaxed_class_proximity", "eval_predicate", "label"]

KINDS = ("proximity", "class_proximity", "uncertainty", "relaxed_class_proximity")

# fixed 64x64 tensor angular rule: 64 Gauss-Legendre nodes in each of 64 panels
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)
_PANELS = 64
_theta = np.concatenate([
    (2.0 * math.pi / _PANELS) * (k + 0.5 * (_GL_NODES + 1.0)) for k in range(_PANELS)
])
_W_THETA = np.tile(0.5 * (2.0 * math.pi / _PANELS) * _GL_WEIGHTS, _PANELS)
_COS_T = np.cos(_theta)
_SIN_T = np.sin(_theta)

_TAIL_LOG = -40.0  # e^-40 ~ 4e-18, far below every stated tolerance


@dataclass(frozen=True)
class PredicateDef:
    """Named atomic predicate binding a robot to a landmark or class.

    kinds: proximity (robot near one landmark with high probability),
    class_proximity (near at least one landmark of a class),
    uncertainty (landmark covariance determinant small),
    relaxed_class_proximity (class decided by the most likely label).
    """

    name: str
    kind: str
    robot: str
    landmark: Optional[str] = None
    radius: Optional[float] = None
    delta: Optional[float] = None
    cls: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown predicate kind {self.kind!r}")
        if self.kind != "uncertainty" and not (self.radius and self.radius > 0):
            raise ValueError(f"predicate {self.name}: radius must be positive")
        if self.delta is None or not 0.0 < self.delta < 1.0:
            raise ValueError(f"predicate {self.name}: delta must be in (0, 1)")
        if self.kind == "proximity" and self.landmark is None:
            raise ValueError(f"predicate {self.name}: proximity needs a landmark")
        if self.kind == "uncertainty" and self.landmark is None:
            raise ValueError(f"predicate {self.name}: uncertainty needs a landmark")
        if self.kind in ("class_proximity", "relaxed_class_proximity") and self.cls is None:
            raise ValueError(f"predicate {self.name}: class predicates need a class")


def _chol2(cov):
    a = math.sqrt(max(cov[0, 0], 1e-12))
    b = cov[0, 1] / a
    c = math.sqrt(max(cov[1, 1] - b * b, 1e-12))
    return a, b, c


def prob_within_radius(mean, cov, point, r):
    """Mass of N(mean, cov) inside the disk of radius r around point."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    dx = mean[0] - point[0]
    dy = mean[1] - point[1]
    dist = math.hypot(dx, dy)

    tr = cov[0, 0] + cov[1, 1]
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    lam_max = max(0.5 * (tr + math.sqrt(max(tr * tr - 4.0 * det, 0.0))), 1e-12)
    # rigorous 2-D Gaussian tail bounds make the extreme regimes exact
    inner = r - dist
    if inner > 0 and -(inner * inner) / (2.0 * lam_max) < _TAIL_LOG:
        return 1.0
    outer = dist - r
    if outer > 0 and -(outer * outer) / (2.0 * lam_max) < _TAIL_LOG:
        return 0.0

    a, b, c = _chol2(cov)
    # whitened frame: x = mean + L z, z ~ N(0, I); disk -> ||s L u + d|| <= r
    lux = a * _COS_T
    luy = b * _COS_T + c * _SIN_T
    A = lux * lux + luy * luy
    B = 2.0 * (lux * dx + luy * dy)
    C = dist * dist - r * r
    disc = B * B - 4.0 * A * C
    valid = disc > 0.0
    sq = np.sqrt(np.where(valid, disc, 0.0))
    s_lo = np.maximum((-B - sq) / (2.0 * A), 0.0)
    s_hi = (-B + sq) / (2.0 * A)
    valid &= s_hi > 0.0
    # exact radial integral of s*exp(-s^2/2) over [s_lo, s_hi]
    contrib = np.where(valid,
                       np.exp(-0.5 * s_lo * s_lo) - np.exp(-0.5 * s_hi * s_hi),
                       0.0)
    p = float(np.dot(_W_THETA, contrib) / (2.0 * math.pi))
    return min(max(p, 0.0), 1.0)


def _robot_position(team, robot_index):
    p = team.poses[robot_index]
    return np.array([p.x, p.y])


def eval_proximity(pdef, team, map_estimate, robot_index):
    lm = map_estimate.landmark(pdef.landmark)
    pos = _robot_position(team, robot_index)
    p = prob_within_radius(lm.mean, lm.cov, pos, pdef.radius)
    return p >= 1.0 - pdef.delta


def eval_class_proximity(pdef, team, map_estimate, robot_index):
    if pdef.cls not in map_estimate.class_set:
        raise ValueError(f"predicate {pdef.name}: class {pdef.cls!r} not in class set")
    pos = _robot_position(team, robot_index)
    best = 0.0
    for lm in map_estimate.landmarks:
        w = lm.class_prob(pdef.cls)
        if w <= 0.0:
            continue
        best = max(best, prob_within_radius(lm.mean, lm.cov, pos, pdef.radius) * w)
    return best >= 1.0 - pdef.delta


def eval_uncertainty(pdef, team, map_estimate, robot_index):
    lm = map_estimate.landmark(pdef.landmark)
    det = lm.cov[0, 0] * lm.cov[1, 1] - lm.cov[0, 1] * lm.cov[1, 0]
    return det <= pdef.delta


def eval_relaxed_class_proximity(pdef, team, map_estimate, robot_index):
    pos = _robot_position(team, robot_index)
    best = 0.0
    for lm in map_estimate.landmarks:
        if lm.top_class() != pdef.cls:
            continue
        best = max(best, prob_within_radius(lm.mean, lm.cov, pos, pdef.radius))
    return best >= 1.0 - pdef.delta


def eval_predicate(pdef, team, map_estimate, robot_index, relaxed=False):
    kind = pdef.kind
    if relaxed and kind == "class_proximity":
        kind = "relaxed_class_proximity"
    if kind == "proximity":
        return eval_proximity(pdef, team, map_estimate, robot_index)
    if kind == "class_proximity":
        return eval_class_proximity(pdef, team, map_estimate, robot_index)
    if kind == "uncertainty":
        return eval_uncertainty(pdef, team, map_estimate, robot_index)
    return eval_relaxed_class_proximity(pdef, team, map_estimate, robot_index)


def label(team, map_estimate, defs, robot_index_of, relaxed=False):
    """The set of predicate names true at (team, map).

    `robot_index_of` maps robot ids to their index in the team tuple.
    """
    out = set()
    for pdef in defs:
        idx = robot_index_of[pdef.robot]
        if eval_predicate(pdef, team, map_estimate, idx, relaxed=relaxed):
            out.add(pdef.name)
    return frozenset(out)
