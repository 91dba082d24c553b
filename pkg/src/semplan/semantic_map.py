"""Uncertain semantic map: Gaussian landmark beliefs with discrete classes.

Each landmark carries a 2-D Gaussian position belief, a discrete class
belief and linear dynamics x(t+1) = A x(t) + B mu(t) + noise, where the
input schedule mu(t) realizes static, straight-line, oscillating or
orbiting motion.  Because the observation models are (linearized)
Gaussian, the position covariance evolves by the Kalman Riccati map as a
function of the robot trajectory alone -- no measurement values needed --
which is what lets the planner predict future map uncertainty offline.
Class beliefs are only touched by the executor's Bayes update.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
import numpy as np

from .sensing import in_gate, observation_jacobian_and_noise

__all__ = [
    "TargetDynamics",
    "LandmarkEstimate",
    "SemanticMapEstimate",
    "DegenerateSensorError",
    "predict_mean",
    "propagate_covariance",
    "posterior_position_update",
    "class_belief_update",
    "ground_truth_step",
]


class DegenerateSensorError(RuntimeError):
    pass


class TargetDynamics:
    """Linear per-landmark dynamics with a deterministic input schedule.

    kind is one of "static", "line", "oscillate", "orbit"; the schedule
    maps a step index to the input vector mu(t).  Process noise is zero
    for static targets.
    """

    def __init__(self, kind, A=None, B=None, process_noise=None, schedule=None,
                 params=None):
        self.kind = kind
        self.A = np.eye(2) if A is None else np.asarray(A, dtype=float)
        self.B = np.eye(2) if B is None else np.asarray(B, dtype=float)
        q = np.zeros((2, 2)) if process_noise is None else np.asarray(process_noise, dtype=float)
        if q.shape != (2, 2) or not np.allclose(q, q.T, atol=1e-9):
            raise ValueError("process noise must be a symmetric 2x2 matrix")
        w, v = np.linalg.eigh(q)
        if w.min() < -1e-9:
            raise ValueError("process noise must be PSD")
        self.process_noise = q
        self._noise_sqrt = v @ np.diag(np.sqrt(w.clip(min=0.0))) @ v.T
        self._schedule = schedule
        self.params = params or {}
        if self.A.shape != (2, 2) or self.B.shape[0] != 2:
            raise ValueError("A must be 2x2 and B must have 2 rows")
        self._zero_mu = np.zeros(self.B.shape[1])
        self.is_static = (self.kind == "static"
                          and np.array_equal(self.A, np.eye(2))
                          and not self.process_noise.any())

    def mu(self, t):
        if self._schedule is None:
            return self._zero_mu
        return np.asarray(self._schedule(t), dtype=float)

    # -- schedule factories --------------------------------------------------

    @classmethod
    def static(cls):
        return cls("static")

    @classmethod
    def line(cls, velocity, tau, process_noise=None):
        """Constant velocity (m/s); per-step input is velocity * tau."""
        step = np.asarray(velocity, dtype=float) * tau
        return cls("line", process_noise=process_noise,
                   schedule=lambda t: step, params={"velocity": velocity, "tau": tau})

    @classmethod
    def oscillate(cls, p0, p1, speed, tau, process_noise=None):
        """Back-and-forth along the segment p0 -> p1 at the given speed."""
        p0 = np.asarray(p0, dtype=float)
        p1 = np.asarray(p1, dtype=float)
        length = float(np.linalg.norm(p1 - p0))
        if length <= 0 or speed <= 0:
            raise ValueError("oscillation needs a positive segment and speed")
        direction = (p1 - p0) / length
        step = speed * tau

        def pos(t):
            s = math.fmod(t * step, 2.0 * length)
            if s < 0:
                s += 2.0 * length
            return p0 + direction * (s if s <= length else 2.0 * length - s)

        return cls("oscillate", process_noise=process_noise,
                   schedule=lambda t: pos(t + 1) - pos(t),
                   params={"p0": p0, "p1": p1, "speed": speed, "tau": tau})

    @classmethod
    def orbit(cls, center, radius, angular_speed, tau, phase=0.0, process_noise=None):
        """Circular track around center (angular speed in rad/s)."""
        center = np.asarray(center, dtype=float)

        def pos(t):
            a = phase + angular_speed * tau * t
            return center + radius * np.array([math.cos(a), math.sin(a)])

        return cls("orbit", process_noise=process_noise,
                   schedule=lambda t: pos(t + 1) - pos(t),
                   params={"center": center, "radius": radius,
                           "angular_speed": angular_speed, "tau": tau, "phase": phase})


@dataclass
class LandmarkEstimate:
    """Gaussian position belief plus class belief for one landmark."""

    id: str
    mean: np.ndarray                 # (2,)
    cov: np.ndarray                  # (2, 2)
    class_belief: np.ndarray         # (n_classes,) sums to 1
    dynamics: TargetDynamics
    classes: tuple = ()

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        self.class_belief = np.asarray(self.class_belief, dtype=float)
        validate_cov(self.cov, f"landmark {self.id} covariance")
        if abs(self.class_belief.sum() - 1.0) > 1e-9 or (self.class_belief < 0).any():
            raise ValueError(f"landmark {self.id}: class belief must be a distribution")

    def class_prob(self, cls):
        return float(self.class_belief[self.classes.index(cls)])

    def top_class(self):
        return self.classes[int(np.argmax(self.class_belief))]

    def copy(self):
        return LandmarkEstimate(self.id, self.mean.copy(), self.cov.copy(),
                                self.class_belief.copy(), self.dynamics, self.classes)


@dataclass
class SemanticMapEstimate:
    """Ordered landmark beliefs; the number of landmarks is fixed."""

    landmarks: list
    class_set: tuple

    def __post_init__(self):
        self._by_id = {lm.id: lm for lm in self.landmarks}
        if len(self._by_id) != len(self.landmarks):
            raise ValueError("duplicate landmark ids")

    def landmark(self, lm_id):
        return self._by_id[lm_id]

    def index_of(self, lm_id):
        return [lm.id for lm in self.landmarks].index(lm_id)

    def copy(self):
        return SemanticMapEstimate([lm.copy() for lm in self.landmarks], self.class_set)


def validate_cov(cov, what="covariance"):
    if cov.shape != (2, 2):
        raise ValueError(f"{what} must be 2x2")
    if np.abs(cov - cov.T).max() > 1e-9:
        raise ValueError(f"{what} must be symmetric")
    if np.linalg.eigvalsh(cov).min() < -1e-10:
        raise ValueError(f"{what} must be PSD")


def predict_mean(lm, t):
    """A-priori mean one step ahead of step t: A x + B mu(t)."""
    dyn = lm.dynamics
    return dyn.A @ lm.mean + dyn.B @ dyn.mu(t)


def _joseph_update(cov, H, Q):
    S = H @ cov @ H.T + Q
    det = np.linalg.det(S) if S.shape[0] > 1 else float(S[0, 0])
    if abs(det) < 1e-30:
        raise DegenerateSensorError("singular innovation covariance")
    K = cov @ H.T @ np.linalg.inv(S)
    IKH = np.eye(2) - K @ H
    out = IKH @ cov @ IKH.T + K @ Q @ K.T
    return 0.5 * (out + out.T), K


def _condition(cov):
    cov = 0.5 * (cov + cov.T)
    d = np.diag(cov)
    if d.min() < 0 or cov[0, 0] * cov[1, 1] - cov[0, 1] ** 2 < 0:
        w, v = np.linalg.eigh(cov)
        w = np.where(w < 1e-12, np.maximum(w, 0.0), w)
        cov = v @ np.diag(w) @ v.T
        cov = 0.5 * (cov + cov.T)
    return cov


def propagate_covariance(lm, team, sensors, workspace, predicted_mean=None):
    """One Riccati step of the landmark covariance along the team's move.

    Predicts through the landmark dynamics, then folds in an information
    update for every robot whose sensor gates the landmark at its
    predicted mean.  Never looks at measurement values: for (linearized)
    Gaussian observations the a-posteriori covariance is measurement-free.
    """
    dyn = lm.dynamics
    cov = dyn.A @ lm.cov @ dyn.A.T + dyn.process_noise
    mean = lm.mean if predicted_mean is None else np.asarray(predicted_mean, dtype=float)
    for pose, sensor in zip(team.poses, sensors):
        if sensor is None:
            continue
        if in_gate(sensor, pose, mean, workspace):
            H, Q = observation_jacobian_and_noise(sensor, pose, mean)
            cov, _ = _joseph_update(cov, H, Q)
    return _condition(cov)


def posterior_position_update(lm, t, items, workspace=None):
    """Predict, then fuse the step's measurements into a new estimate.

    `items` is a list of (sensor, robot_pose, value) for this landmark;
    an empty list degrades to prediction only.  Range measurements use an
    EKF linearized at the predicted mean.  The covariance path is the
    same Joseph update as propagate_covariance, so for linear sensors the
    result matches the measurement-free prediction exactly.
    """
    dyn = lm.dynamics
    mean = predict_mean(lm, t)
    cov = dyn.A @ lm.cov @ dyn.A.T + dyn.process_noise
    for sensor, pose, value in items:
        H, Q = observation_jacobian_and_noise(sensor, pose, mean)
        if sensor.kind == "range":
            predicted = math.hypot(mean[0] - pose.x, mean[1] - pose.y)
            innovation = np.array([float(value) - predicted])
        else:
            innovation = np.asarray(value, dtype=float) - mean
        cov_new, K = _joseph_update(cov, H, Q)
        mean = mean + K @ innovation
        cov = cov_new
    out = lm.copy()
    out.mean = mean
    out.cov = _condition(cov)
    return out


def class_belief_update(belief, measured_index, confusion):
    """Bayes update of a class belief from one classifier output.

    belief'(c) is proportional to confusion[measured, c] * belief(c).
    A zero posterior everywhere (contradictory evidence) leaves the
    belief unchanged and warns.
    """
    belief = np.asarray(belief, dtype=float)
    confusion = np.asarray(confusion, dtype=float)
    if not 0 <= measured_index < confusion.shape[0]:
        raise ValueError(f"measured class index {measured_index} out of range")
    post = confusion[measured_index, :] * belief
    total = post.sum()
    if total <= 0.0:
        warnings.warn("class measurement has zero likelihood under the belief; "
                      "belief left unchanged")
        return belief.copy()
    return post / total


def ground_truth_step(true_state, dynamics, t, rng):
    """Simulator-side truth advance with Gaussian process noise."""
    noise = dynamics._noise_sqrt @ rng.standard_normal(2)
    return dynamics.A @ np.asarray(true_state, dtype=float) + dynamics.B @ dynamics.mu(t) + noise
