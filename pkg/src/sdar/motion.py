"""Layered synchronous motion planning on a 2-D arm surrogate.

Each arm is a base->end-effector segment with a disc gripper.  Transit is
above-plane (carried objects collide with nothing); what is checked is
arm-arm segment clearance along sampled trajectories plus endpoint grasp and
placement feasibility.  The rung ladder per leg: straight synchronous motion,
rule-based untangling (departure delays, then home-side via points), and
finally sequential execution with one arm parked at its retract pose.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .depgraph import Arrangement, footprint
from .geom import (
    MIN_GAP,
    OrientedBox,
    Point,
    Pose2,
    Workspace,
    box_at,
    boxes_closer_than,
    dist,
    inside,
    overlaps,
    segment_clearance,
)
from .taskplan import PlannerSession, Stage, TaskPlan, assign_arms

DT = 0.02
K_BUFFERS = 20
DEFAULT_EE_RADIUS = 0.04
DEFAULT_CLEARANCE = 0.10
PAD_HALF_THICKNESS = 0.01
BASE_KEEPOUT_MARGIN = 0.01
VALIDATE_REFINE = 8  # validator samples at dt / VALIDATE_REFINE
# Sampled clearance threshold above the limit.  EEs move at unit speed, so
# clearance is 2-Lipschitz in time: samples >= clearance + GUARD at spacing
# <= GUARD certify the continuous trajectory, and a leg ending at
# clearance + GUARD always satisfies the next leg's entry sample.
VALIDATE_GUARD = 0.0025


class NoFeasibleSubTask(Exception):
    pass


class BufferSamplingExhausted(Exception):
    pass


class SubTaskInfeasible(Exception):
    pass


class MotionFailure(Exception):
    pass


class Mode(enum.Enum):
    SYNCHRONOUS = "synchronous"
    UNTANGLED = "untangled"
    SEQUENTIAL = "sequential"


class GraspAngle(enum.Enum):
    """Approach ladder: two top-down grasps, then tilted side approaches."""

    TOP_DOWN_LONG = "top_down_long"
    TOP_DOWN_SHORT = "top_down_short"
    SIDE_PLANE0_POS = "side_plane0_pos"
    SIDE_PLANE0_NEG = "side_plane0_neg"
    SIDE_PLANE1_POS = "side_plane1_pos"
    SIDE_PLANE1_NEG = "side_plane1_neg"

    @property
    def tilt(self) -> float:
        return 0.0 if self in TOP_DOWN_SET else math.pi / 4


GRASP_LADDER = tuple(GraspAngle)
TOP_DOWN_SET = (GraspAngle.TOP_DOWN_LONG, GraspAngle.TOP_DOWN_SHORT)
FULL_SET = GRASP_LADDER


@dataclass(frozen=True)
class ArmModel:
    base: Point
    reach: float
    ee_radius: float = DEFAULT_EE_RADIUS
    clearance: float = DEFAULT_CLEARANCE
    retract: Point = (0.0, 0.0)
    via: Point = (0.0, 0.0)


def default_arms(
    workspace: Workspace | None = None, clearance: float = DEFAULT_CLEARANCE
) -> tuple[ArmModel, ArmModel]:
    ws = workspace or Workspace()
    reach = ws.diagonal + 0.1
    mid = ws.height / 2.0
    left = ArmModel(
        base=(0.0, mid),
        reach=reach,
        clearance=clearance,
        retract=(-0.06, mid),
        via=(0.08 * ws.width, 0.9 * ws.height),
    )
    right = ArmModel(
        base=(ws.width, mid),
        reach=reach,
        clearance=clearance,
        retract=(ws.width + 0.06, mid),
        via=(0.92 * ws.width, 0.9 * ws.height),
    )
    return left, right


# ------------------------------------------------------------------ paths


@dataclass
class ArmPath:
    """Piecewise-linear EE path over [0, duration] in absolute time."""

    knots: list[tuple[float, Point]]

    @property
    def duration(self) -> float:
        return self.knots[-1][0]

    @property
    def end(self) -> Point:
        return self.knots[-1][1]

    def pos(self, t: float) -> Point:
        knots = self.knots
        if t <= knots[0][0]:
            return knots[0][1]
        for (t0, p0), (t1, p1) in zip(knots, knots[1:]):
            if t <= t1:
                if t1 - t0 <= 1e-12:
                    return p1
                a = (t - t0) / (t1 - t0)
                return (p0[0] + a * (p1[0] - p0[0]), p0[1] + a * (p1[1] - p0[1]))
        return knots[-1][1]


def _timed(points: list[Point], depart: float = 0.0) -> ArmPath:
    """Unit-speed path through points, departing at `depart`."""
    knots = [(0.0, points[0])]
    if depart > 0.0:
        knots.append((depart, points[0]))
    t = depart
    for a, b in zip(points, points[1:]):
        t += dist(a, b)
        knots.append((t, b))
    return ArmPath(knots)


def _pad(path: ArmPath, duration: float) -> ArmPath:
    if path.duration < duration - 1e-12:
        return ArmPath(path.knots + [(duration, path.end)])
    return path


@dataclass
class SyncMotion:
    """A synchronized pair of timed EE paths for one leg."""

    stage: Stage
    mode: Mode
    paths: tuple[ArmPath, ArmPath]
    duration: float
    carried: tuple[Optional[int], Optional[int]]
    # per-arm time at which the gripper event (CLOSE/OPEN) fires
    event_times: tuple[Optional[float], Optional[float]]

    def carried_at(self, arm: int, t: float) -> Optional[int]:
        obj = self.carried[arm]
        ev = self.event_times[arm]
        if obj is None:
            return None
        if ev is None:
            return obj
        if self.stage == Stage.TO_START:
            return obj if t >= ev - 1e-12 else None
        # the object counts as placed exactly at the gripper-open event
        return obj if t < ev - 1e-12 else None


@dataclass(frozen=True)
class Conflict:
    t: float
    detail: str


def validate_motion(
    paths: tuple[ArmPath, ArmPath],
    arms: tuple[ArmModel, ArmModel],
    duration: float,
    dt: float = DT,
    margin: float = 0.0,
    guard: Optional[float] = None,
) -> Optional[Conflict]:
    """First sampled arm-arm clearance violation, or None.

    With guard=None (the planner's own validation) the threshold is
    clearance + VALIDATE_GUARD at sample spacing <= VALIDATE_GUARD, which
    certifies the continuous trajectory keeps the bare clearance.
    Re-checkers pass guard=0.0 to test the bare threshold at their own grid.
    """
    clearance = max(arms[0].clearance, arms[1].clearance)
    if guard is None:
        guard = VALIDATE_GUARD
    if duration <= 1e-12:
        steps = 1
    elif guard > 0.0:
        steps = max(int(round(VALIDATE_REFINE / dt)), int(math.ceil(duration / VALIDATE_GUARD)))
    else:
        steps = int(round(VALIDATE_REFINE / dt))
    for k in range(steps + 1):
        t = duration * k / steps
        p1 = paths[0].pos(t)
        p2 = paths[1].pos(t)
        c = segment_clearance(arms[0].base, p1, arms[1].base, p2)
        if c < clearance + guard - margin - 1e-9:
            return Conflict(t / duration if duration > 0 else 0.0, f"arm clearance {c:.4f}")
    return None


# ------------------------------------------------------- grasp feasibility


def _face_frames(box: OrientedBox):
    """(long_axis_unit, short_axis_unit, long_half, short_half): the long
    faces are the pair of faces with the longer side length."""
    (ux, uy), (vx, vy) = box.axes()
    if box.half_width >= box.half_height:
        return (ux, uy), (vx, vy), box.half_width, box.half_height
    return (vx, vy), (ux, uy), box.half_height, box.half_width


def _offset_box(box: OrientedBox, axis: Point, offset: float, half_along: float, half_across: float, across_axis: Point) -> OrientedBox:
    cx = box.center.x + axis[0] * offset
    cy = box.center.y + axis[1] * offset
    theta = math.atan2(across_axis[1], across_axis[0])
    return box_at(Pose2(cx, cy, theta), half_along, half_across)


def _finger_pads(box: OrientedBox, angle: GraspAngle, ee_radius: float) -> list[OrientedBox]:
    """Footprints the gripper needs free: finger pads for top-down grasps,
    an approach corridor for tilted side grasps."""
    long_ax, short_ax, long_h, short_h = _face_frames(box)
    inset = 1e-6  # avoid measure-zero corner contact with flush neighbors
    if angle == GraspAngle.TOP_DOWN_LONG:
        # fingers close across the short dimension, contacting the long faces
        half_along = min(long_h, ee_radius) - inset
        return [
            _offset_box(box, short_ax, sgn * (short_h + PAD_HALF_THICKNESS), half_along, PAD_HALF_THICKNESS, long_ax)
            for sgn in (1.0, -1.0)
        ]
    if angle == GraspAngle.TOP_DOWN_SHORT:
        half_along = min(short_h, ee_radius) - inset
        return [
            _offset_box(box, long_ax, sgn * (long_h + PAD_HALF_THICKNESS), half_along, PAD_HALF_THICKNESS, short_ax)
            for sgn in (1.0, -1.0)
        ]
    corr_half = ee_radius  # corridor: gripper width wide, 2x gripper depth long
    if angle in (GraspAngle.SIDE_PLANE0_POS, GraspAngle.SIDE_PLANE0_NEG):
        sgn = 1.0 if angle == GraspAngle.SIDE_PLANE0_POS else -1.0
        return [
            _offset_box(box, short_ax, sgn * (short_h + corr_half), ee_radius, corr_half, long_ax)
        ]
    sgn = 1.0 if angle == GraspAngle.SIDE_PLANE1_POS else -1.0
    return [
        _offset_box(box, long_ax, sgn * (long_h + corr_half), ee_radius, corr_half, short_ax)
    ]


def grasp_feasible(
    obj_box: OrientedBox,
    angle: GraspAngle,
    obstacles: list[OrientedBox],
    arm: ArmModel,
) -> bool:
    """Reach plus free finger pads / approach corridor against the obstacles
    (the grasped object itself must not be in the obstacle list)."""
    if dist(arm.base, obj_box.center.xy) > arm.reach:
        return False
    for pad in _finger_pads(obj_box, angle, arm.ee_radius):
        if any(overlaps(pad, ob) for ob in obstacles):
            return False
    return True


# ------------------------------------------------------------- buffers


def sample_buffers(
    scene: Arrangement,
    shapes,
    pending_goals: list[OrientedBox],
    k: int,
    rng,
    buffered_shape: tuple[float, float],
    workspace: Workspace,
    skip_ids: set[int] = frozenset(),
    min_gap: float = MIN_GAP,
) -> list[Pose2]:
    """Up to k poses whose footprint avoids all on-table objects, all pending
    goals, and each other.  Rejection sampling capped at 100*k draws.

    min_gap > 0 additionally keeps finger room around the parked object;
    min_gap == 0 is the bare non-overlap contract."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hw, hh = buffered_shape
    margin = math.hypot(hw, hh)
    table = [footprint(i, p, shapes) for i, p in scene.on_table() if i not in skip_ids]
    found: list[Pose2] = []
    found_boxes: list[OrientedBox] = []
    for _ in range(100 * k):
        if len(found) == k:
            break
        pose = Pose2(
            rng.uniform(margin, workspace.width - margin),
            rng.uniform(margin, workspace.height - margin),
            rng.uniform(-math.pi, math.pi),
        )
        box = box_at(pose, hw, hh)
        if not inside(workspace, box):
            continue
        obstacles = table + pending_goals + found_boxes
        if min_gap > 0.0:
            if any(boxes_closer_than(box, ob, min_gap) for ob in obstacles):
                continue
        elif any(overlaps(box, ob) for ob in obstacles):
            continue
        found.append(pose)
        found_boxes.append(box)
    if not found:
        raise BufferSamplingExhausted(
            f"no buffer pose found within {100 * k} draws for shape {buffered_shape}"
        )
    return found


# ------------------------------------------------------ sub-task binding


@dataclass
class ArmTask:
    obj: Optional[int] = None
    angle: Optional[GraspAngle] = None
    pick: Optional[Point] = None
    target: Optional[Pose2] = None
    to_buffer: bool = False


@dataclass
class InstantiatedSubTask:
    tasks: tuple[ArmTask, ArmTask]
    pair: Optional[tuple[int, int]] = None
    need_buffer: bool = False
    candidates_considered: list = field(default_factory=list)
    travel: float = 0.0

    def task_for(self, obj: int) -> ArmTask:
        for t in self.tasks:
            if t.obj == obj:
                return t
        raise KeyError(obj)

    @property
    def buffer_pose(self) -> Optional[Pose2]:
        for t in self.tasks:
            if t.to_buffer:
                return t.target
        return None


def _other_base_ok(point: Point, other: ArmModel, clearance: float) -> bool:
    return dist(point, other.base) >= clearance + BASE_KEEPOUT_MARGIN


def _scene_boxes(session: PlannerSession, exclude: set[int]) -> list[OrientedBox]:
    return [
        footprint(i, p, session.instance.shapes)
        for i, p in session.current.on_table()
        if i not in exclude
    ]


def _bind_arm(
    session: PlannerSession,
    arm_idx: int,
    arms,
    obj: int,
    target: Pose2,
    level,
    partner: Optional[int],
    partner_target: Optional[Pose2],
) -> Optional[ArmTask]:
    """First angle in the ladder level feasible for both the grasp at the
    object's current pose and the placement at the target pose."""
    shapes = session.instance.shapes
    ws = session.instance.workspace
    arm = arms[arm_idx]
    other = arms[1 - arm_idx]
    clearance = max(a.clearance for a in arms)
    cur_pose = session.current.pose_of(obj)
    cur_box = footprint(obj, cur_pose, shapes)
    target_box = footprint(obj, target, shapes)

    if not _other_base_ok(cur_pose.xy, other, clearance):
        return None
    if not _other_base_ok(target.xy, other, clearance):
        return None
    if not inside(ws, target_box):
        return None
    if dist(arm.base, target.xy) > arm.reach:
        return None

    grasp_obstacles = _scene_boxes(session, exclude={obj})
    place_obstacles = _scene_boxes(session, exclude={obj} | ({partner} if partner is not None else set()))
    if partner_target is not None and partner is not None:
        place_obstacles = place_obstacles + [footprint(partner, partner_target, shapes)]
    if any(overlaps(target_box, ob) for ob in place_obstacles):
        return None

    for angle in level:
        if grasp_feasible(cur_box, angle, grasp_obstacles, arm) and grasp_feasible(
            target_box, angle, place_obstacles, arm
        ):
            return ArmTask(obj=obj, angle=angle, pick=cur_pose.xy, target=target)
    return None


def _travel(session: PlannerSession, arm_idx: int, task: ArmTask) -> float:
    start = tuple(session.ee[arm_idx])
    return dist(start, task.pick) + dist(task.pick, task.target.xy)


def _pending_goal_boxes(session: PlannerSession) -> list[OrientedBox]:
    shapes = session.instance.shapes
    return [
        footprint(i, session.instance.goal.pose_of(i), shapes)
        for i in sorted(session.remaining)
    ]


def _iter_instantiations(plan: TaskPlan, session: PlannerSession, arms, k_buffers: int):
    """Candidate x angle-level x buffer enumeration, deterministic, narrowest
    angle set first, then smallest max-arm travel."""
    goal_of = session.instance.goal.pose_of

    if plan.single_arm is not None:
        preferred, obj = plan.single_arm
        if plan.need_buffer:
            targets = _buffer_options(session, obj, k_buffers)
        else:
            targets = [goal_of(obj)]
        for level in (TOP_DOWN_SET, FULL_SET):
            for target in targets:
                for arm_idx in (preferred, 1 - preferred):
                    task = _bind_arm(session, arm_idx, arms, obj, target, level, None, None)
                    if task is None:
                        continue
                    task = replace(task, to_buffer=plan.need_buffer)
                    tasks = [ArmTask(), ArmTask()]
                    tasks[arm_idx] = task
                    yield InstantiatedSubTask(
                        tasks=tuple(tasks),
                        need_buffer=plan.need_buffer,
                        candidates_considered=[],
                        travel=_travel(session, arm_idx, task),
                    )
        return

    buffers_for: dict[int, list[Pose2]] = {}
    if plan.need_buffer:
        # deterministic per-object draws, in candidate order
        for _, b in plan.candidates:
            if b not in buffers_for:
                buffers_for[b] = _buffer_options(session, b, k_buffers)

    seen = set()
    for level in (TOP_DOWN_SET, FULL_SET):
        scored = []
        for idx, (i, j) in enumerate(plan.candidates):
            o1, o2 = assign_arms((i, j), session.current, arms)
            if plan.need_buffer:
                # second pair element parks at a buffer, first goes home
                opts = [(goal_of(i), b) for b in buffers_for[j]]
            else:
                opts = [(goal_of(i), goal_of(j))]
            for b_idx, (ti, tj) in enumerate(opts):
                tmap = {i: ti, j: tj}
                t1 = _bind_arm(
                    session, 0, arms, o1, tmap[o1], level, o2, tmap[o2]
                )
                if t1 is None:
                    continue
                t2 = _bind_arm(
                    session, 1, arms, o2, tmap[o2], level, o1, tmap[o1]
                )
                if t2 is None:
                    continue
                if plan.need_buffer:
                    if t1.obj == j:
                        t1 = replace(t1, to_buffer=True)
                    else:
                        t2 = replace(t2, to_buffer=True)
                travel = max(_travel(session, 0, t1), _travel(session, 1, t2))
                scored.append((travel, idx, b_idx, (t1, t2), (i, j)))
        for travel, idx, b_idx, tasks, pair in sorted(
            scored, key=lambda s: (s[0], s[1], s[2])
        ):
            key = (pair, tasks[0].target, tasks[1].target, tasks[0].angle, tasks[1].angle)
            if key in seen:
                continue
            seen.add(key)
            yield InstantiatedSubTask(
                tasks=tasks,
                pair=pair,
                need_buffer=plan.need_buffer,
                candidates_considered=list(plan.candidates),
                travel=travel,
            )


def _buffer_options(session: PlannerSession, obj: int, k: int) -> list[Pose2]:
    """Buffer poses for one object: finger-room sampling first, then the bare
    non-overlap contract on crowded tables (pad checks re-filter at bind)."""
    pending = _pending_goal_boxes(session)
    for min_gap in (MIN_GAP, 0.0):
        try:
            return sample_buffers(
                session.current,
                session.instance.shapes,
                pending,
                k,
                session.rng,
                session.instance.shapes[obj],
                session.instance.workspace,
                min_gap=min_gap,
            )
        except BufferSamplingExhausted:
            continue
    return []


def select_best_task(
    plan: TaskPlan, session: PlannerSession, arms, k_buffers: int = K_BUFFERS
) -> InstantiatedSubTask:
    for sub in _iter_instantiations(plan, session, arms, k_buffers):
        return sub
    raise NoFeasibleSubTask(f"no feasible instantiation for candidates {plan.candidates}")


# ------------------------------------------------------------------ legs


def _leg_endpoints(sub: InstantiatedSubTask, stage: Stage, ee, arms):
    """Per-arm (start, goal_point, carried) for one leg of the round."""
    out = []
    for a in (0, 1):
        task = sub.tasks[a]
        start = tuple(ee[a])
        if task.obj is None:
            out.append((start, arms[a].retract, None))
        elif stage == Stage.TO_START:
            out.append((start, task.pick, task.obj))
        else:
            out.append((start, task.target.xy, task.obj))
    return out


def _motion_from_paths(stage, mode, p1, p2, sub, arrival):
    duration = max(p1.duration, p2.duration)
    p1, p2 = _pad(p1, duration), _pad(p2, duration)
    carried = tuple(t.obj for t in sub.tasks)
    return SyncMotion(
        stage=stage,
        mode=mode,
        paths=(p1, p2),
        duration=duration,
        carried=carried,
        event_times=arrival,
    )


def plan_sync(
    sub: InstantiatedSubTask,
    arms,
    stage: Stage,
    ee,
    dt: float = DT,
) -> SyncMotion | Conflict:
    """Straight-line synchronized motion for one leg, validated by sampling."""
    pts = _leg_endpoints(sub, stage, ee, arms)
    paths = [_timed([s, g]) for s, g, _ in pts]
    arrival = tuple(
        p.duration if t[2] is not None else None for p, t in zip(paths, pts)
    )
    motion = _motion_from_paths(stage, Mode.SYNCHRONOUS, paths[0], paths[1], sub, arrival)
    bad = validate_motion(motion.paths, arms, motion.duration, dt)
    if bad is not None:
        return bad
    return motion


def untangle(
    sub: InstantiatedSubTask,
    arms,
    stage: Stage,
    ee,
    conflict: Conflict,
    dt: float = DT,
) -> Optional[SyncMotion]:
    """Departure delays for the shorter-path arm (25% then 50%), then
    home-side via-point routing; first variant that validates wins."""
    pts = _leg_endpoints(sub, stage, ee, arms)
    lens = [dist(s, g) for s, g, _ in pts]
    base_T = max(lens) if max(lens) > 0 else 0.0
    yielder = 0 if lens[0] < lens[1] else 1

    variants = []
    for frac in (0.25, 0.5):
        delay = frac * base_T
        paths = []
        for a, (s, g, _) in enumerate(pts):
            paths.append(_timed([s, g], depart=delay if a == yielder else 0.0))
        variants.append(paths)
    via_paths = []
    for a, (s, g, _) in enumerate(pts):
        if dist(s, g) < 1e-12:
            via_paths.append(_timed([s, g]))
        else:
            via_paths.append(_timed([s, arms[a].via, g]))
    variants.append(via_paths)

    for paths in variants:
        arrival = tuple(
            p.duration if t[2] is not None else None for p, t in zip(paths, pts)
        )
        motion = _motion_from_paths(stage, Mode.UNTANGLED, paths[0], paths[1], sub, arrival)
        if validate_motion(motion.paths, arms, motion.duration, dt) is None:
            return motion
    return None


def _two_phase(pts, arms, first: int):
    """Arm `first` retreats while the other works, then roles swap."""
    second = 1 - first
    s_f, g_f, _ = pts[first]
    s_s, g_s, _ = pts[second]
    r_f, r_s = arms[first].retract, arms[second].retract
    t1 = max(dist(s_f, r_f), dist(s_s, g_s))
    p_f = _pad(_timed([s_f, r_f]), t1)
    p_f = ArmPath(p_f.knots + _shift(_timed([r_f, g_f]).knots[1:], t1))
    p_s = _pad(_timed([s_s, g_s]), t1)
    p_s = ArmPath(p_s.knots + _shift(_timed([g_s, r_s]).knots[1:], t1))
    arrival = [None, None]
    arrival[first] = t1 + dist(r_f, g_f)
    arrival[second] = dist(s_s, g_s)
    paths = [None, None]
    paths[first], paths[second] = p_f, p_s
    return paths, arrival


def _serial_phases(pts, arms, first: int):
    """One arm moves at a time: retreat, other works, other retreats, work."""
    second = 1 - first
    s_f, g_f, _ = pts[first]
    s_s, g_s, _ = pts[second]
    r_f, r_s = arms[first].retract, arms[second].retract
    t1 = dist(s_f, r_f)
    t2 = t1 + dist(s_s, g_s)
    t3 = t2 + dist(g_s, r_s)
    p_f = _pad(_timed([s_f, r_f]), t3)
    p_f = ArmPath(p_f.knots + _shift(_timed([r_f, g_f]).knots[1:], t3))
    p_s = _pad(_timed([s_s, g_s], depart=t1), t2)
    p_s = ArmPath(p_s.knots + _shift(_timed([g_s, r_s]).knots[1:], t2))
    arrival = [None, None]
    arrival[first] = t3 + dist(r_f, g_f)
    arrival[second] = t2
    paths = [None, None]
    paths[first], paths[second] = p_f, p_s
    return paths, arrival


def sequential_fallback(
    sub: InstantiatedSubTask,
    arms,
    stage: Stage,
    ee,
    dt: float = DT,
) -> SyncMotion:
    """Arm 1 retreats while arm 2 completes its task, then arm 2 retreats
    while arm 1 completes; if that choreography still conflicts, the mirrored
    and fully serial variants are tried before giving up."""
    pts = _leg_endpoints(sub, stage, ee, arms)
    active = [a for a in (0, 1) if sub.tasks[a].obj is not None]

    if len(active) <= 1:
        paths = [None, None]
        arrival = [None, None]
        if not active:
            for a, (s, g, _) in enumerate(pts):
                paths[a] = _timed([s, g])
        else:
            act = active[0]
            idle = 1 - act
            s_i, g_i, _ = pts[idle]
            s_a, g_a, _ = pts[act]
            t_park = dist(s_i, g_i)
            paths[idle] = _timed([s_i, g_i])
            paths[act] = _timed([s_a, g_a], depart=t_park)
            arrival[act] = paths[act].duration
        motion = _motion_from_paths(
            stage, Mode.SEQUENTIAL, paths[0], paths[1], sub, tuple(arrival)
        )
        bad = validate_motion(motion.paths, arms, motion.duration, dt)
        if bad is not None:
            raise SubTaskInfeasible(f"sequential single-arm leg invalid at t={bad.t:.3f}")
        return motion

    last = None
    for builder, first in (
        (_two_phase, 0),
        (_two_phase, 1),
        (_serial_phases, 0),
        (_serial_phases, 1),
    ):
        paths, arrival = builder(pts, arms, first)
        motion = _motion_from_paths(
            stage, Mode.SEQUENTIAL, paths[0], paths[1], sub, tuple(arrival)
        )
        last = validate_motion(motion.paths, arms, motion.duration, dt)
        if last is None:
            return motion
    raise SubTaskInfeasible(f"sequential leg invalid at t={last.t:.3f}: {last.detail}")


def _shift(knots: list[tuple[float, Point]], offset: float):
    return [(t + offset, p) for t, p in knots]


def _ladder(sub, arms, stage, ee, dt, force_sequential=False) -> SyncMotion:
    if force_sequential:
        return sequential_fallback(sub, arms, stage, ee, dt)
    res = plan_sync(sub, arms, stage, ee, dt)
    if isinstance(res, SyncMotion):
        return res
    fixed = untangle(sub, arms, stage, ee, res, dt)
    if fixed is not None:
        return fixed
    return sequential_fallback(sub, arms, stage, ee, dt)


def _relay_buffers(session: PlannerSession, obj: int, arms, k: int) -> list[Pose2]:
    """Buffer poses reachable by either arm, for handing an object across the
    exclusive zone around each arm base."""
    clearance = max(a.clearance for a in arms)
    return [
        p
        for p in _buffer_options(session, obj, k)
        if all(_other_base_ok(p.xy, arm, clearance) for arm in arms)
    ]


def _degraded_single_moves(plan: TaskPlan, session: PlannerSession, arms, k_buffers):
    """Last-resort recovery: move one object alone, nearest feasible arm; an
    object stuck between the two base keep-out zones is relayed via a buffer."""
    objs: list[int] = []
    if plan.single_arm is not None:
        objs = [plan.single_arm[1]]
    else:
        for pair in plan.candidates:
            for o in pair:
                if o not in objs:
                    objs.append(o)
    dg = session.graph_over_remaining()

    def single_moves(obj, targets, to_buffer):
        pose = session.current.pose_of(obj)
        order = sorted((0, 1), key=lambda a: dist(arms[a].base, pose.xy))
        for level in (TOP_DOWN_SET, FULL_SET):
            for arm_idx in order:
                for target in targets:
                    task = _bind_arm(session, arm_idx, arms, obj, target, level, None, None)
                    if task is None:
                        continue
                    task = replace(task, to_buffer=to_buffer)
                    tasks = [ArmTask(), ArmTask()]
                    tasks[arm_idx] = task
                    yield InstantiatedSubTask(
                        tasks=tuple(tasks),
                        need_buffer=to_buffer,
                        travel=_travel(session, arm_idx, task),
                    )

    # pass 1: place one object directly (buffer targets if the plan says so)
    for obj in objs:
        to_buffer = plan.need_buffer and (
            plan.single_arm is not None or any(obj == b for _, b in plan.candidates)
        )
        if to_buffer:
            targets = _buffer_options(session, obj, k_buffers)
        elif dg.out_neighbors(obj):
            continue  # blocked by a live dependency, handled in pass 2/3
        else:
            targets = [session.instance.goal.pose_of(obj)]
        yield from single_moves(obj, targets, to_buffer)
    # pass 2: a movable object no single arm can both pick and place is
    # relayed through a dual-reachable buffer (hand-over across the table)
    for obj in objs:
        if not plan.need_buffer and not dg.out_neighbors(obj):
            yield from single_moves(obj, _relay_buffers(session, obj, arms, k_buffers), True)
    # pass 3: a cycle member nothing else frees is parked at a buffer, the
    # same way a single arm would break the cycle; an object already sitting
    # at a buffer is never re-parked (no progress in that)
    for obj in objs:
        if dg.out_neighbors(obj) and obj not in session.buffered:
            yield from single_moves(obj, _buffer_options(session, obj, k_buffers), True)


def plan_motion(
    plan: TaskPlan,
    session: PlannerSession,
    arms,
    dt: float = DT,
    k_buffers: int = K_BUFFERS,
    force_sequential: bool = False,
    forced_sub: Optional[InstantiatedSubTask] = None,
) -> tuple[InstantiatedSubTask, SyncMotion]:
    """Run the rung ladder for the current leg; on a ToStart leg this first
    binds the sub-task (selection) and keeps it pending for the ToGoal leg."""
    if plan.stage == Stage.TO_GOAL:
        sub = session.pending
        if sub is None:
            raise MotionFailure("no pending sub-task for a goal-bound leg")
        try:
            motion = _ladder(sub, arms, Stage.TO_GOAL, session.ee, dt, force_sequential)
        except SubTaskInfeasible as exc:
            raise MotionFailure(f"goal-bound leg failed: {exc}") from exc
        return sub, motion

    candidates_iter: list | object
    if forced_sub is not None:
        candidates_iter = [forced_sub]
    else:
        candidates_iter = _iter_instantiations(plan, session, arms, k_buffers)

    def try_sub(sub):
        # commit only if the round can be finished: the goal-bound leg is
        # dry-run from the start leg's end configuration before binding
        motion = _ladder(sub, arms, Stage.TO_START, session.ee, dt, force_sequential)
        next_ee = [motion.paths[0].end, motion.paths[1].end]
        _ladder(sub, arms, Stage.TO_GOAL, next_ee, dt, force_sequential)
        return motion

    last_error = "no feasible instantiation"
    found_any = False
    for sub in candidates_iter:
        found_any = True
        try:
            motion = try_sub(sub)
        except SubTaskInfeasible as exc:
            last_error = str(exc)
            continue
        session.pending = sub
        return sub, motion
    if forced_sub is not None:
        raise MotionFailure(f"forced sub-task failed: {last_error}")
    for sub in _degraded_single_moves(plan, session, arms, k_buffers):
        try:
            motion = try_sub(sub)
        except SubTaskInfeasible as exc:
            last_error = str(exc)
            continue
        session.pending = sub
        return sub, motion
    raise MotionFailure(
        f"all instantiations failed (considered any: {found_any}): {last_error}"
    )
