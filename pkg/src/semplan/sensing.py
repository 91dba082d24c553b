"""Simulated perception: gated range/position sensors and a noisy classifier.

Sensors only fire inside a gate (range limit, field-of-view footprint and
line of sight against the known obstacles).  A range sensor reports the
distance to the landmark with noise growing linearly in distance; a
position sensor reports the landmark position with fixed Gaussian noise.
The same models provide the linearized observation rows and noise used by
the belief filter, with a variance floor of 1e-12 (std 1e-6) so that
noise-free configurations stay numerically well posed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = ["SensorModel", "Measurement", "in_gate", "sense",
           "observation_jacobian_and_noise", "classify", "VAR_FLOOR"]

VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class SensorModel:
    """kind "range": scalar distance, noise std = slope * distance.
    kind "position": 2-D position, noise covariance position_cov.
    fov is None for an omnidirectional disk, or (width, height) meters of
    an axis-aligned rectangular footprint centered on the robot."""

    kind: str
    range_limit: float
    fov: Optional[tuple] = None
    noise_slope: float = 0.0
    position_cov: Optional[np.ndarray] = None
    _cov_sqrt: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("range", "position"):
            raise ValueError(f"unknown sensor kind {self.kind!r}")
        if self.range_limit <= 0:
            raise ValueError("range_limit must be positive")
        if self.kind == "range" and self.noise_slope < 0:
            raise ValueError("noise slope must be non-negative")
        if self.kind == "position":
            q = np.asarray(self.position_cov, dtype=float)
            if q.shape != (2, 2) or not np.allclose(q, q.T, atol=1e-9):
                raise ValueError("position noise covariance must be symmetric 2x2")
            w, v = np.linalg.eigh(q)
            if w.min() < -1e-9:
                raise ValueError("position noise covariance must be PSD")
            sqrt = v @ np.diag(np.sqrt(w.clip(min=0.0))) @ v.T
            object.__setattr__(self, "position_cov", q)
            object.__setattr__(self, "_cov_sqrt", sqrt)


@dataclass(frozen=True)
class Measurement:
    robot: str
    landmark: str
    kind: str
    value: object     # float for range, (2,) ndarray for position
    step: int


def in_gate(sensor, robot_pose, landmark_position, workspace):
    """Range + footprint + line-of-sight admittance test."""
    dx = float(landmark_position[0]) - robot_pose.x
    dy = float(landmark_position[1]) - robot_pose.y
    dist = math.hypot(dx, dy)
    if dist > sensor.range_limit:
        return False
    if sensor.fov is not None:
        w, h = sensor.fov
        if abs(dx) > 0.5 * w or abs(dy) > 0.5 * h:
            return False
    return workspace.segment_free((robot_pose.x, robot_pose.y),
                                  (landmark_position[0], landmark_position[1]))


def sense(sensor, robot_pose, true_landmark_position, workspace, rng, step=0,
          robot_id="", landmark_id=""):
    """Draw one gated measurement of the true landmark position, or None."""
    if not in_gate(sensor, robot_pose, true_landmark_position, workspace):
        return None
    if sensor.kind == "range":
        dist = math.hypot(true_landmark_position[0] - robot_pose.x,
                          true_landmark_position[1] - robot_pose.y)
        value = dist + sensor.noise_slope * dist * rng.standard_normal()
    else:
        noise = sensor._cov_sqrt @ rng.standard_normal(2)
        value = np.asarray(true_landmark_position, dtype=float) + noise
    return Measurement(robot_id, landmark_id, sensor.kind, value, step)


def observation_jacobian_and_noise(sensor, robot_pose, linearization_point):
    """Measurement row(s) and noise covariance at the linearization point.

    Position sensors are linear (identity block).  Range sensors return
    the unit direction row from the robot to the point and the
    state-dependent variance (slope * distance)^2, floored at VAR_FLOOR.
    """
    if sensor.kind == "position":
        q = sensor.position_cov.copy()
        w = np.linalg.eigvalsh(q)
        if w.min() < VAR_FLOOR:
            q = q + (VAR_FLOOR - min(w.min(), 0.0)) * np.eye(2)
        return np.eye(2), q
    dx = float(linearization_point[0]) - robot_pose.x
    dy = float(linearization_point[1]) - robot_pose.y
    dist = math.hypot(dx, dy)
    if dist < 1e-9:
        raise ValueError("range sensor cannot be linearized at the robot position")
    jac = np.array([[dx / dist, dy / dist]])
    var = max((sensor.noise_slope * dist) ** 2, VAR_FLOOR)
    return jac, np.array([[var]])


def classify(true_class_index, confusion, rng):
    """Draw a predicted class index from the classifier's confusion column.

    confusion[r, c] = P(predicted r | actual c); rows must sum over each
    column's draws, i.e. each column is a distribution over predictions.
    """
    p = np.asarray(confusion, dtype=float)[:, true_class_index]
    return int(rng.choice(len(p), p=p / p.sum()))
