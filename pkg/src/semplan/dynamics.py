"""Differential-drive team kinematics over finite control sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["RobotPose", "ControlSet", "RobotTeamState", "wrap_angle",
           "step_diff_drive", "step_team"]


def wrap_angle(theta):
    """Wrap an angle to (-pi, pi]."""
    r = math.remainder(theta, 2.0 * math.pi)
    if r <= -math.pi:
        r += 2.0 * math.pi
    return r


@dataclass(frozen=True)
class RobotPose:
    x: float
    y: float
    theta: float

    def position(self):
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class ControlSet:
    """Finite motion primitives: pairs from speeds x turn rates, fixed period.

    speeds in m/s, turn_rates in rad/s, tau in seconds.
    """

    speeds: tuple
    turn_rates: tuple
    tau: float

    def __post_init__(self):
        if not self.speeds or not self.turn_rates:
            raise ValueError("control set must be non-empty")
        if self.tau <= 0:
            raise ValueError("sampling period must be positive")

    def controls(self):
        """All (u, omega) pairs, deterministic order."""
        return [(u, w) for u in self.speeds for w in self.turn_rates]


@dataclass(frozen=True)
class RobotTeamState:
    poses: tuple  # tuple of RobotPose

    def __len__(self):
        return len(self.poses)

    def positions(self):
        return np.array([[p.x, p.y] for p in self.poses])


def _sinc(y):
    # sin(y)/y with sinc(0) = 1; numpy's sinc is the normalized variant
    return float(np.sinc(y / math.pi))


def step_diff_drive(pose, u, omega, tau):
    """One unicycle step by exact integration of constant (u, omega).

    Uses the chord form tau*u*sinc(tau*omega/2) rotated to the mid-step
    heading, which is the omega -> 0 straight-line formula and the
    arc formula in one expression, with no branch threshold.
    """
    half = 0.5 * tau * omega
    chord = tau * u * _sinc(half)
    return RobotPose(
        pose.x + chord * math.cos(pose.theta + half),
        pose.y + chord * math.sin(pose.theta + half),
        wrap_angle(pose.theta + tau * omega),
    )


def step_team(team, joint_control, control_sets):
    """Synchronous per-robot step; joint_control is one (u, omega) pair
    per robot, drawn from the product of the robots' control sets."""
    if not (len(team) == len(joint_control) == len(control_sets)):
        raise ValueError("team, joint control and control sets must align")
    poses = tuple(
        step_diff_drive(p, u, w, cs.tau)
        for p, (u, w), cs in zip(team.poses, joint_control, control_sets)
    )
    return RobotTeamState(poses)
