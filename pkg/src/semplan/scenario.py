"""Scenario files: ingestion, validation and programmatic builders.

A scenario bundles everything one run needs: workspace geometry, robots
(dynamics, control sets, sensors), landmark priors and ground truth, the
class set and classifier confusion matrix, named predicates, the task
formula, and planner/executor parameters.  Files are YAML with a
`schema_version` field; see the README for the schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .dynamics import ControlSet, RobotPose, RobotTeamState
from .ltl import AtomBinding, parse_cosafe_ltl
from .predicates import PredicateDef
from .semantic_map import LandmarkEstimate, SemanticMapEstimate, TargetDynamics
from .sensing import SensorModel
from .workspace import Workspace

__all__ = ["Scenario", "ScenarioError", "RobotSpec", "LandmarkSpec",
           "PlannerParams", "ExecutorParams", "load_scenario",
           "scenario_from_dict", "benchmark_scenario", "tiny_scenario",
           "replan_scenario"]

SCHEMA_VERSION = 1

DEFAULT_SPEEDS = (0.0, 1.0)
DEFAULT_TURN_RATES_DEG = tuple(float(d) for d in range(-180, 181, 15))


class ScenarioError(ValueError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("scenario validation failed:\n  " + "\n  ".join(self.problems))


@dataclass
class RobotSpec:
    id: str
    start: RobotPose
    control_set: ControlSet
    sensor: Optional[SensorModel] = None


@dataclass
class LandmarkSpec:
    id: str
    prior: LandmarkEstimate
    true_position: np.ndarray
    true_class: str


@dataclass
class PlannerParams:
    """Knobs of the tree search; probabilities live in (0.5, 1)."""

    n_max: int = 5000
    p_rand: float = 0.9
    p_new: float = 0.9
    pose_bin_xy: float = 0.5
    pose_bin_theta: float = math.radians(30.0)
    warmup_singletons: int = 100
    extension_cap: int = 32
    sampling: str = "biased"
    state_cap: int = 100_000
    stop_at_first: bool = False
    ellipse_epsilon: float = 0.9
    seed: Optional[int] = None

    def __post_init__(self):
        problems = []
        if not 0.5 < self.p_rand < 1.0:
            problems.append(f"planner.p_rand must be in (0.5, 1), got {self.p_rand}")
        if not 0.5 < self.p_new < 1.0:
            problems.append(f"planner.p_new must be in (0.5, 1), got {self.p_new}")
        if self.sampling not in ("biased", "uniform"):
            problems.append(f"planner.sampling must be biased or uniform, got {self.sampling!r}")
        if self.n_max < 0:
            problems.append("planner.n_max must be non-negative")
        if problems:
            raise ScenarioError(problems)


@dataclass
class ExecutorParams:
    lookahead: int = 3
    max_replans: int = 10
    max_steps: int = 500
    use_relaxed_predicates: bool = False
    replan_n_max: Optional[int] = None
    replan_stop_at_first: bool = True

    def __post_init__(self):
        if self.lookahead < 1:
            raise ScenarioError("executor.lookahead must be >= 1")


@dataclass
class Scenario:
    workspace: Workspace
    robots: list
    landmarks: list
    classes: tuple
    confusion: np.ndarray
    predicates: list
    task_text: str
    planner: PlannerParams = field(default_factory=PlannerParams)
    executor: ExecutorParams = field(default_factory=ExecutorParams)
    seed: int = 0
    name: str = "scenario"

    def __post_init__(self):
        self.formula = parse_cosafe_ltl(self.task_text,
                                        known_atoms={p.name for p in self.predicates})
        self.robot_index = {r.id: i for i, r in enumerate(self.robots)}
        self.defs_by_name = {p.name: p for p in self.predicates}
        self._validate()

    def _validate(self):
        problems = []
        if len(self.robot_index) != len(self.robots):
            problems.append("robots: duplicate robot ids")
        lm_ids = {lm.id for lm in self.landmarks}
        if len(lm_ids) != len(self.landmarks):
            problems.append("landmarks: duplicate landmark ids")
        for lm in self.landmarks:
            if lm.true_class not in self.classes:
                problems.append(f"landmarks[{lm.id}].true_class: unknown class {lm.true_class!r}")
            b = lm.prior.class_belief
            if abs(b.sum() - 1.0) > 1e-9:
                problems.append(f"landmarks[{lm.id}].class_belief: sums to {b.sum():.6g}, not 1")
        c = np.asarray(self.confusion, dtype=float)
        if c.shape != (len(self.classes), len(self.classes)):
            problems.append("confusion_matrix: shape does not match the class list")
        elif np.abs(c.sum(axis=0) - 1.0).max() > 1e-6:
            problems.append("confusion_matrix: each column (actual class) must sum to 1")
        for p in self.predicates:
            where = f"predicates[{p.name}]"
            if p.robot not in self.robot_index:
                problems.append(f"{where}.robot: unknown robot {p.robot!r}")
            if p.landmark is not None and p.landmark not in lm_ids:
                problems.append(f"{where}.landmark: unknown landmark {p.landmark!r}")
            if p.cls is not None and p.cls not in self.classes:
                problems.append(f"{where}.class: unknown class {p.cls!r}")
        for r in self.robots:
            if not self.workspace.is_free((r.start.x, r.start.y)):
                problems.append(f"robots[{r.id}].start: not in free space")
        if problems:
            raise ScenarioError(problems)

    # -- convenience views ---------------------------------------------------

    def initial_team(self):
        return RobotTeamState(tuple(r.start for r in self.robots))

    def initial_map(self):
        return SemanticMapEstimate([lm.prior.copy() for lm in self.landmarks],
                                   self.classes)

    def control_sets(self):
        return [r.control_set for r in self.robots]

    def sensors(self):
        return [r.sensor for r in self.robots]

    def atom_meta(self):
        return {p.name: AtomBinding(robot=p.robot, kind=p.kind,
                                    landmark=p.landmark, cls=p.cls)
                for p in self.predicates}

    def true_states(self):
        return {lm.id: np.asarray(lm.true_position, dtype=float)
                for lm in self.landmarks}


# ---------------------------------------------------------------------------
# YAML loading
# ---------------------------------------------------------------------------

def load_scenario(path):
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return scenario_from_dict(data, name=str(path))


def _mat(value, what, problems):
    try:
        m = np.asarray(value, dtype=float)
        if m.shape != (2, 2):
            raise ValueError
        return m
    except Exception:
        problems.append(f"{what}: expected a 2x2 matrix")
        return np.eye(2)


def _dynamics_from_dict(d, tau, where, problems):
    d = d or {"kind": "static"}
    kind = d.get("kind", "static")
    noise = None
    if "process_noise" in d:
        noise = _mat(d["process_noise"], f"{where}.process_noise", problems)
    try:
        if kind == "static":
            if noise is not None and noise.any():
                return TargetDynamics("static", process_noise=noise)
            return TargetDynamics.static()
        if kind == "line":
            return TargetDynamics.line(d["velocity"], tau, process_noise=noise)
        if kind == "oscillate":
            return TargetDynamics.oscillate(d["p0"], d["p1"], d["speed"], tau,
                                            process_noise=noise)
        if kind == "orbit":
            return TargetDynamics.orbit(d["center"], d["radius"], d["angular_speed"],
                                        tau, phase=d.get("phase", 0.0),
                                        process_noise=noise)
    except KeyError as e:
        problems.append(f"{where}: missing dynamics field {e}")
        return TargetDynamics.static()
    except (ValueError, ScenarioError) as e:
        problems.append(f"{where}: {e}")
        return TargetDynamics.static()
    problems.append(f"{where}.kind: unknown dynamics kind {kind!r}")
    return TargetDynamics.static()


def _sensor_from_dict(d, where, problems):
    if d is None:
        return None
    kind = d.get("kind", "position")
    fov = None
    f = d.get("fov")
    if isinstance(f, dict) and f.get("shape") == "rect":
        fov = (float(f["width"]), float(f["height"]))
    try:
        if kind == "range":
            return SensorModel("range", range_limit=float(d["range"]), fov=fov,
                               noise_slope=float(d.get("noise_slope", 0.5)))
        return SensorModel("position", range_limit=float(d["range"]), fov=fov,
                           position_cov=_mat(d.get("noise_cov", np.zeros((2, 2))),
                                             f"{where}.noise_cov", problems))
    except (KeyError, ValueError) as e:
        problems.append(f"{where}: {e}")
        return None


def scenario_from_dict(data, name="scenario"):
    problems = []
    if data.get("schema_version") != SCHEMA_VERSION:
        problems.append(f"schema_version: expected {SCHEMA_VERSION}, "
                        f"got {data.get('schema_version')!r}")

    ws_d = data.get("workspace", {})
    try:
        workspace = Workspace(ws_d.get("bounds", (0, 0, 10, 10)),
                              obstacles=ws_d.get("obstacles", ()),
                              grid_resolution=ws_d.get("grid_resolution", 0.25))
    except ValueError as e:
        problems.append(f"workspace: {e}")
        workspace = Workspace((0, 0, 10, 10))

    classes = tuple(data.get("classes", ()))
    if not classes:
        problems.append("classes: at least one class is required")
        classes = ("object",)

    robots = []
    for i, rd in enumerate(data.get("robots", [])):
        rid = rd.get("id", f"r{i + 1}")
        where = f"robots[{rid}]"
        start = rd.get("start", [0, 0, 0])
        tau = float(rd.get("tau", 0.5))
        speeds = tuple(float(s) for s in rd.get("speeds", DEFAULT_SPEEDS))
        rates = tuple(math.radians(float(w))
                      for w in rd.get("turn_rates_deg", DEFAULT_TURN_RATES_DEG))
        try:
            cs = ControlSet(speeds, rates, tau)
        except ValueError as e:
            problems.append(f"{where}: {e}")
            cs = ControlSet(DEFAULT_SPEEDS, (0.0,), 0.5)
        sensor = _sensor_from_dict(rd.get("sensor"), f"{where}.sensor", problems)
        robots.append(RobotSpec(rid, RobotPose(float(start[0]), float(start[1]),
                                               float(start[2])), cs, sensor))
    if not robots:
        problems.append("robots: at least one robot is required")
        robots = [RobotSpec("r1", RobotPose(0, 0, 0),
                            ControlSet(DEFAULT_SPEEDS, (0.0,), 0.5), None)]

    base_tau = robots[0].control_set.tau
    landmarks = []
    for i, ld in enumerate(data.get("landmarks", [])):
        lid = ld.get("id", f"lm{i + 1}")
        where = f"landmarks[{lid}]"
        dyn = _dynamics_from_dict(ld.get("dynamics"), base_tau, f"{where}.dynamics",
                                  problems)
        belief_d = ld.get("class_belief", {})
        belief = np.array([float(belief_d.get(c, 0.0)) for c in classes])
        if abs(belief.sum() - 1.0) > 1e-9 or (belief < 0).any():
            problems.append(f"{where}.class_belief: sums to {belief.sum():.6g}, not 1")
            belief = np.ones(len(classes)) / len(classes)
        cov = _mat(ld.get("prior_cov", np.eye(2)), f"{where}.prior_cov", problems)
        try:
            prior = LandmarkEstimate(lid, np.asarray(ld.get("prior_mean", [0, 0]), float),
                                     cov, belief, dyn, classes)
        except ValueError as e:
            problems.append(f"{where}: {e}")
            continue
        true_pos = np.asarray(ld.get("true_position", ld.get("prior_mean", [0, 0])), float)
        landmarks.append(LandmarkSpec(lid, prior, true_pos,
                                      ld.get("true_class", classes[0])))

    n = len(classes)
    confusion = np.asarray(data.get("confusion_matrix", np.eye(n)), dtype=float)

    predicates = []
    for i, pd in enumerate(data.get("predicates", [])):
        pname = pd.get("name", f"p{i + 1}")
        try:
            predicates.append(PredicateDef(
                name=pname, kind=pd.get("kind", "proximity"),
                robot=pd.get("robot", robots[0].id),
                landmark=pd.get("landmark"),
                radius=pd.get("radius"), delta=pd.get("delta"),
                cls=pd.get("cls")))
        except ValueError as e:
            problems.append(f"predicates[{pname}]: {e}")

    pl = data.get("planner", {}) or {}
    ex = data.get("executor", {}) or {}
    try:
        planner = PlannerParams(
            n_max=int(pl.get("n_max", 5000)),
            p_rand=float(pl.get("p_rand", 0.9)),
            p_new=float(pl.get("p_new", 0.9)),
            pose_bin_xy=float(pl.get("pose_bin_xy", 0.5)),
            pose_bin_theta=math.radians(float(pl.get("pose_bin_theta_deg", 30.0))),
            warmup_singletons=int(pl.get("warmup_singletons", 100)),
            extension_cap=int(pl.get("extension_cap", 32)),
            sampling=pl.get("sampling", "biased"),
            state_cap=int(pl.get("dfa_state_cap", 100_000)),
            stop_at_first=bool(pl.get("stop_at_first", False)),
            ellipse_epsilon=float(pl.get("ellipse_epsilon", 0.9)),
            seed=pl.get("seed"))
    except ScenarioError as e:
        problems.extend(e.problems)
        planner = PlannerParams()
    try:
        executor = ExecutorParams(
            lookahead=int(ex.get("lookahead", 3)),
            max_replans=int(ex.get("max_replans", 10)),
            max_steps=int(ex.get("max_steps", 500)),
            use_relaxed_predicates=bool(ex.get("use_relaxed_predicates", False)),
            replan_n_max=ex.get("replan_n_max"),
            replan_stop_at_first=bool(ex.get("replan_stop_at_first", True)))
    except ScenarioError as e:
        problems.extend(e.problems)
        executor = ExecutorParams()

    task = data.get("task", "true")
    try:
        scenario = Scenario(workspace=workspace, robots=robots, landmarks=landmarks,
                            classes=classes, confusion=confusion,
                            predicates=predicates, task_text=task,
                            planner=planner, executor=executor,
                            seed=int(data.get("seed", 0)), name=name)
    except ScenarioError as e:
        raise ScenarioError(problems + e.problems) from None
    except Exception as e:
        raise ScenarioError(problems + [f"task: {e}"]) from None
    if problems:
        raise ScenarioError(problems)
    return scenario


# ---------------------------------------------------------------------------
# Programmatic builders (tests, sweeps, studies)
# ---------------------------------------------------------------------------

def _identity_confusion(classes):
    return np.eye(len(classes))


def benchmark_scenario(n_robots=1, n_landmarks=2, seed=0, n_max=5000,
                       sampling="biased", stop_at_first=True, tau=0.5,
                       sensor_range=0.4):
    """Feasibility benchmark: 10x10 m workspace with two interior walls.

    Robots start along the left edge; landmark priors are tight and
    scattered over the right two thirds (seeded); the task requires robot
    1 near landmark 1 and the last robot near landmark 2.
    """
    rng = np.random.default_rng(seed)
    walls = [
        [[3.0, 0.0], [3.4, 0.0], [3.4, 6.0], [3.0, 6.0]],
        [[6.6, 4.0], [7.0, 4.0], [7.0, 10.0], [6.6, 10.0]],
    ]
    ws = Workspace((0, 0, 10, 10), obstacles=walls, grid_resolution=0.25)
    classes = ("target", "decoy")
    robots = []
    for j in range(n_robots):
        start = RobotPose(0.8, 1.0 + 8.0 * j / max(n_robots, 2), 0.0)
        cs = ControlSet((0.0, 1.0),
                        tuple(math.radians(d) for d in (0, 30, -30, 90, -90, 180, -180)),
                        tau)
        sensor = SensorModel("range", range_limit=sensor_range, noise_slope=0.5)
        robots.append(RobotSpec(f"r{j + 1}", start, cs, sensor))
    landmarks = []
    for i in range(n_landmarks):
        while True:
            if n_robots > 1 and i < n_robots:
                # assigned landmarks sit in a band across from their robots
                y0 = robots[i].start.y
                pos = rng.uniform([4.2, max(0.8, y0 - 1.2)],
                                  [6.4, min(9.2, y0 + 1.2)])
            else:
                pos = rng.uniform([4.2, 0.8], [9.2, 9.2])
            if ws.is_free(pos) and ws.is_free(pos + [0.3, 0.3]) and ws.is_free(pos - [0.3, 0.3]):
                break
        prior = LandmarkEstimate(f"lm{i + 1}", pos, 4e-4 * np.eye(2),
                                 np.array([1.0, 0.0]), TargetDynamics.static(),
                                 classes)
        landmarks.append(LandmarkSpec(f"lm{i + 1}", prior, pos.copy(), "target"))
    # every robot owns one visit atom (more robots, more atom/landmark pairs);
    # multi-robot visits are sequenced so the automaton distance decreases
    # stage by stage, which is what the frontier bias feeds on
    if n_robots == 1:
        preds = [
            PredicateDef("reach_a", "proximity", "r1", landmark="lm1",
                         radius=0.2, delta=0.25),
            PredicateDef("reach_b", "proximity", "r1", landmark="lm2",
                         radius=0.2, delta=0.25),
        ]
        task = "F reach_a & F reach_b"
        bin_xy, bin_theta = 2.0, math.radians(180.0)
    else:
        preds = [
            PredicateDef(f"reach_{j + 1}", "proximity", f"r{j + 1}",
                         landmark=f"lm{(j % n_landmarks) + 1}",
                         radius=0.2, delta=0.25)
            for j in range(n_robots)
        ]
        task = " & ".join(f"F reach_{j + 1}" for j in range(n_robots))
        bin_xy, bin_theta = 4.0, math.radians(360.0)
    return Scenario(
        workspace=ws, robots=robots, landmarks=landmarks, classes=classes,
        confusion=_identity_confusion(classes), predicates=preds,
        task_text=task,
        planner=PlannerParams(n_max=n_max, sampling=sampling,
                              stop_at_first=stop_at_first, seed=seed,
                              pose_bin_xy=bin_xy, pose_bin_theta=bin_theta,
                              warmup_singletons=16, extension_cap=16),
        executor=ExecutorParams(max_steps=400),
        seed=seed, name=f"benchmark_N{n_robots}_M{n_landmarks}_s{seed}")


def tiny_scenario(seed=0, n_max=200, depth_hint=3):
    """Tiny deterministic instance for optimality cross-checks.

    One robot, three controls, a static landmark a couple of steps away,
    no sensing, empty workspace: the reachable pose set is a few dozen
    states, so exhaustive enumeration is feasible.
    """
    rng = np.random.default_rng(seed)
    ws = Workspace((0, 0, 4, 4), grid_resolution=0.25)
    classes = ("target",)
    tau = 1.0
    cs = ControlSet((1.0,), (0.0, math.radians(45), math.radians(-45)), tau)
    start = RobotPose(1.0, 2.0, 0.0)
    robots = [RobotSpec("r1", start, cs, None)]
    # placed on a depth<=depth_hint reachable position that still leaves a
    # free onward move (the accepting transition consumes one more step)
    from .dynamics import step_diff_drive
    controls = cs.controls()
    while True:
        steps = rng.integers(1, depth_hint + 1)
        pose = start
        for _ in range(steps):
            u, w = controls[rng.integers(len(controls))]
            cand = step_diff_drive(pose, u, w, tau)
            if ws.is_free((cand.x, cand.y)):
                pose = cand
        onward = (step_diff_drive(pose, u, w, tau) for u, w in controls)
        if any(ws.is_free((p.x, p.y)) for p in onward):
            break
    goal = np.array([pose.x, pose.y])
    prior = LandmarkEstimate("lm1", goal, 1e-6 * np.eye(2), np.array([1.0]),
                             TargetDynamics.static(), classes)
    landmarks = [LandmarkSpec("lm1", prior, goal.copy(), "target")]
    preds = [PredicateDef("at_goal", "proximity", "r1", landmark="lm1",
                          radius=0.3, delta=0.25)]
    return Scenario(
        workspace=ws, robots=robots, landmarks=landmarks, classes=classes,
        confusion=_identity_confusion(classes), predicates=preds,
        task_text="F at_goal",
        planner=PlannerParams(n_max=n_max, seed=seed, warmup_singletons=20),
        executor=ExecutorParams(max_steps=50),
        seed=seed, name=f"tiny_s{seed}")


def replan_scenario(offset=0.0, seed=0, zero_noise=None, prior_scale=None,
                    process_noise_scale=None):
    """Prior-quality study: one robot, two landmarks, position sensing.

    `offset` displaces the first landmark's prior mean from its true
    position; worse offsets come with broader priors and larger process
    noise, zero offset defaults to a noise-free world.
    """
    if zero_noise is None:
        zero_noise = offset == 0.0
    if prior_scale is None:
        prior_scale = {0.0: 1e-4, 4.0: 2.0, 10.0: 4.0}.get(offset, max(offset / 2.5, 1e-4))
    if process_noise_scale is None:
        process_noise_scale = 0.0 if zero_noise else {4.0: 2e-4, 10.0: 4e-3}.get(
            offset, 4e-4 * max(offset, 1.0))

    ws = Workspace((0, 0, 10, 10), grid_resolution=0.25)
    classes = ("supply",)
    tau = 0.5
    cs = ControlSet((0.0, 1.0),
                    tuple(math.radians(d) for d in (0, 30, -30, 90, -90, 180)),
                    tau)
    meas_cov = np.zeros((2, 2)) if zero_noise else 2.5e-3 * np.eye(2)
    sensor = SensorModel("position", range_limit=1.2, position_cov=meas_cov)
    robots = [RobotSpec("r1", RobotPose(1.2, 1.2, 0.0), cs, sensor)]

    # truth sits one sensing range from the start, well inside the bounds
    true1 = np.array([2.0, 2.0])
    direction = np.array([1.0, 1.0]) / math.sqrt(2.0)
    prior1 = true1 + offset * direction
    dyn = (TargetDynamics.static() if process_noise_scale == 0.0 else
           TargetDynamics("static", process_noise=process_noise_scale * np.eye(2)))
    lm1 = LandmarkEstimate("lm1", prior1, prior_scale * np.eye(2),
                           np.array([1.0]), dyn, classes)
    true2 = np.array([8.5, 2.0])
    lm2 = LandmarkEstimate("lm2", true2.copy(), 1e-4 * np.eye(2),
                           np.array([1.0]), TargetDynamics.static(), classes)
    landmarks = [LandmarkSpec("lm1", lm1, true1, "supply"),
                 LandmarkSpec("lm2", lm2, true2.copy(), "supply")]
    preds = [
        PredicateDef("near1", "proximity", "r1", landmark="lm1", radius=0.5, delta=0.2),
        PredicateDef("near2", "proximity", "r1", landmark="lm2", radius=0.5, delta=0.2),
        PredicateDef("back1", "proximity", "r1", landmark="lm1", radius=0.5, delta=0.2),
    ]
    # lm1 -> lm2 -> lm1: the return leg makes the mission track lm1's drift
    return Scenario(
        workspace=ws, robots=robots, landmarks=landmarks, classes=classes,
        confusion=_identity_confusion(classes), predicates=preds,
        task_text="F (near1 & F (near2 & F back1))",
        planner=PlannerParams(n_max=4000, seed=seed, stop_at_first=True,
                              pose_bin_xy=2.0, pose_bin_theta=math.radians(180.0),
                              warmup_singletons=16, extension_cap=8),
        executor=ExecutorParams(lookahead=3, max_replans=25, max_steps=240,
                                replan_n_max=3000),
        seed=seed, name=f"replan_off{offset}_s{seed}")
