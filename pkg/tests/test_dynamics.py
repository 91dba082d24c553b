import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from semplan.dynamics import (ControlSet, RobotPose, RobotTeamState,
                              step_diff_drive, step_team, wrap_angle)


class TestStep:
    def test_zero_control_is_identity(self):
        p = RobotPose(1.0, 2.0, 0.7)
        q = step_diff_drive(p, 0.0, 0.0, 0.5)
        assert (q.x, q.y, q.theta) == (1.0, 2.0, 0.7)

    def test_straight_along_x(self):
        q = step_diff_drive(RobotPose(0, 0, 0), 1.0, 0.0, 0.1)
        assert q.x == pytest.approx(0.1)
        assert q.y == pytest.approx(0.0)

    def test_straight_along_y(self):
        q = step_diff_drive(RobotPose(0, 0, math.pi / 2), 1.0, 0.0, 0.5)
        assert q.y == pytest.approx(0.5)
        assert abs(q.x) < 1e-12

    def test_arc_matches_exact_integration(self):
        u, w, tau = 1.0, 0.8, 0.4
        q = step_diff_drive(RobotPose(0, 0, 0.3), u, w, tau)
        # closed-form arc
        x = (u / w) * (math.sin(0.3 + tau * w) - math.sin(0.3))
        y = (u / w) * (math.cos(0.3) - math.cos(0.3 + tau * w))
        assert q.x == pytest.approx(x, abs=1e-12)
        assert q.y == pytest.approx(y, abs=1e-12)

    @given(st.floats(-6, 6), st.floats(0, 2), st.floats(0.01, 1.0))
    def test_chord_never_exceeds_arc(self, w, u, tau):
        q = step_diff_drive(RobotPose(0, 0, 0), u, w, tau)
        assert math.hypot(q.x, q.y) <= tau * u + 1e-12

    def test_heading_wrapped(self):
        q = step_diff_drive(RobotPose(0, 0, 3.0), 0.0, 2.0, 1.0)
        assert -math.pi < q.theta <= math.pi

    def test_small_omega_limit_matches_straight(self):
        a = step_diff_drive(RobotPose(0, 0, 0.5), 1.0, 1e-6, 0.5)
        b = step_diff_drive(RobotPose(0, 0, 0.5), 1.0, 0.0, 0.5)
        assert math.hypot(a.x - b.x, a.y - b.y) < 1e-6
        assert abs(a.x - b.x) < 1e-6


class TestWrap:
    def test_pi_maps_to_pi(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)

    def test_minus_pi_maps_to_pi(self):
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)

    @given(st.floats(-50, 50))
    def test_range(self, t):
        w = wrap_angle(t)
        assert -math.pi < w <= math.pi
        assert math.cos(w) == pytest.approx(math.cos(t), abs=1e-9)


class TestTeam:
    def _sets(self, n):
        return [ControlSet((0.0, 1.0), (0.0, 0.5), 0.5) for _ in range(n)]

    def test_all_zero_controls(self):
        team = RobotTeamState((RobotPose(0, 0, 0), RobotPose(1, 1, 1)))
        out = step_team(team, ((0.0, 0.0), (0.0, 0.0)), self._sets(2))
        assert out == team

    def test_single_robot_reduces(self):
        team = RobotTeamState((RobotPose(0, 0, 0),))
        out = step_team(team, ((1.0, 0.5),), self._sets(1))
        assert out.poses[0] == step_diff_drive(RobotPose(0, 0, 0), 1.0, 0.5, 0.5)

    def test_componentwise(self, rng):
        poses = tuple(RobotPose(*rng.uniform(-1, 1, 3)) for _ in range(3))
        team = RobotTeamState(poses)
        joint = tuple((float(rng.choice([0, 1])), float(rng.uniform(-1, 1)))
                      for _ in range(3))
        out = step_team(team, joint, self._sets(3))
        for p, (u, w), q in zip(poses, joint, out.poses):
            assert q == step_diff_drive(p, u, w, 0.5)

    def test_arity_mismatch(self):
        team = RobotTeamState((RobotPose(0, 0, 0),))
        with pytest.raises(ValueError):
            step_team(team, ((0.0, 0.0), (0.0, 0.0)), self._sets(2))


def test_control_set_validation():
    with pytest.raises(ValueError):
        ControlSet((), (0.0,), 0.5)
    with pytest.raises(ValueError):
        ControlSet((1.0,), (0.0,), 0.0)
    cs = ControlSet((0.0, 1.0), (0.0, -0.5, 0.5), 0.2)
    assert len(cs.controls()) == 6
