"""Execute planning sessions, record run traces, and re-verify them.

The verifier replays a trace file against the problem definition using only
the geometric primitives, independent of the planner code paths: arrangement
feasibility after every round, arm-arm clearance at every exported sample,
pick/place consistency, and exact goal attainment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .depgraph import Held, arrangement_violations
from .geom import Pose2, box_at, dist, inside, overlaps, segment_clearance
from .instances import Instance, instance_hash
from .motion import (
    DT,
    K_BUFFERS,
    ArmModel,
    InstantiatedSubTask,
    MotionFailure,
    SyncMotion,
    default_arms,
    plan_motion,
)
from .taskplan import (
    Gripper,
    PlannerSession,
    Stage,
    TaskComplete,
    next_task_plan,
)

TRACE_FORMAT = "sdar-trace/1"


class ValidationFailure(Exception):
    pass


@dataclass
class RunMetrics:
    n: int
    actions: int = 0
    buffers_used: int = 0
    sync_steps: int = 0
    makespan: float = 0.0
    fallback_counts: dict = field(default_factory=dict)
    success: bool = False
    sequence: list[int] = field(default_factory=list)
    failure: Optional[str] = None


@dataclass
class LegRecord:
    index: int
    stage: str
    mode: str
    objs: tuple[Optional[int], Optional[int]]
    angles: tuple[Optional[str], Optional[str]]
    buffer_pose: Optional[Pose2]
    candidates: list[tuple[int, int]]
    duration: float
    samples: list  # per arm: list of (t, x, y, carried|None)
    grips: list  # (arm, action, obj, t)
    places: list  # (obj, Pose2, kind)


@dataclass
class Trace:
    instance_hash: str
    seed: int
    arms: tuple[ArmModel, ArmModel]
    dt: float
    legs: list[LegRecord] = field(default_factory=list)
    metrics: Optional[RunMetrics] = None

    def sample_count(self) -> int:
        return sum(len(leg.samples[0]) for leg in self.legs)


@dataclass
class RunRecord:
    trace: Optional[Trace] = None
    subs: list = field(default_factory=list)
    motions: list[SyncMotion] = field(default_factory=list)


def new_session(instance: Instance, seed: int, arms=None) -> PlannerSession:
    arms = arms or default_arms(instance.workspace)
    return PlannerSession(instance=instance, rng_seed=seed, arms=arms)


def _sample_leg(motion: SyncMotion, dt: float):
    per_arm = [[], []]
    steps = int(round(1.0 / dt)) if motion.duration > 1e-12 else 0
    for a in (0, 1):
        for k in range(steps + 1):
            t = motion.duration * k / steps if steps else 0.0
            x, y = motion.paths[a].pos(t)
            per_arm[a].append((t, x, y, motion.carried_at(a, t)))
    return per_arm


def _record_leg(trace, idx, sub, motion, plan, dt):
    objs = tuple(t.obj for t in sub.tasks)
    angles = tuple(t.angle.value if t.angle else None for t in sub.tasks)
    grips = []
    places = []
    for a, task in enumerate(sub.tasks):
        if task.obj is None:
            continue
        ev = motion.event_times[a]
        if motion.stage == Stage.TO_START:
            grips.append((a, "close", task.obj, ev, task.pick))
        else:
            grips.append((a, "open", task.obj, ev, task.target.xy))
            places.append((task.obj, task.target, "buffer" if task.to_buffer else "goal"))
    trace.legs.append(
        LegRecord(
            index=idx,
            stage=motion.stage.value,
            mode=motion.mode.value,
            objs=objs,
            angles=angles,
            buffer_pose=sub.buffer_pose,
            candidates=list(plan.candidates),
            duration=motion.duration,
            samples=_sample_leg(motion, dt),
            grips=grips,
            places=places,
        )
    )


def _apply_leg(session: PlannerSession, sub: InstantiatedSubTask, motion: SyncMotion):
    session.ee = [motion.paths[0].end, motion.paths[1].end]
    if motion.stage == Stage.TO_START:
        for a, task in enumerate(sub.tasks):
            st = session.arm_states[a]
            st.stage = Stage.TO_GOAL
            if task.obj is not None:
                st.gripper = Gripper.CLOSE
                st.assigned = task.obj
                st.grasp_angle = task.angle
                session.current.poses[task.obj] = Held(arm=a + 1)
        return
    for a, task in enumerate(sub.tasks):
        st = session.arm_states[a]
        st.stage = Stage.TO_START
        st.gripper = Gripper.OPEN
        st.assigned = None
        st.grasp_angle = None
        if task.obj is None:
            continue
        session.current.poses[task.obj] = task.target
        session.removal_sequence.append(task.obj)
        session.actions += 1
        if task.to_buffer:
            session.buffers_used += 1
            session.buffered[task.obj] = task.target
        else:
            session.remaining.discard(task.obj)
            session.buffered.pop(task.obj, None)
    session.pending = None
    session.rounds += 1


def execute(
    session: PlannerSession,
    arms=None,
    *,
    dt: float = DT,
    k_buffers: int = K_BUFFERS,
    force_sequential: bool = False,
    forced_subs: Optional[list] = None,
    record: Optional[RunRecord] = None,
) -> RunMetrics:
    """Loop task planning and motion planning until the instance resolves."""
    arms = arms or session.arms
    inst = session.instance
    metrics = RunMetrics(n=inst.n)
    trace = Trace(instance_hash(inst), session.rng_seed, arms, dt)
    if record is not None:
        record.trace = trace
    fallbacks: dict[str, int] = {}
    leg_idx = 0
    round_idx = 0
    try:
        while True:
            try:
                plan = next_task_plan(session)
            except TaskComplete:
                break
            forced = None
            if forced_subs is not None and plan.stage == Stage.TO_START:
                forced = forced_subs[round_idx]
            sub, motion = plan_motion(
                plan,
                session,
                arms,
                dt=dt,
                k_buffers=k_buffers,
                force_sequential=force_sequential,
                forced_sub=forced,
            )
            if record is not None:
                record.motions.append(motion)
                if plan.stage == Stage.TO_START:
                    record.subs.append(sub)
            _record_leg(trace, leg_idx, sub, motion, plan, dt)
            _apply_leg(session, sub, motion)
            fallbacks[motion.mode.value] = fallbacks.get(motion.mode.value, 0) + 1
            metrics.makespan += motion.duration
            leg_idx += 1
            if motion.stage == Stage.TO_GOAL:
                round_idx += 1
                issues = arrangement_violations(
                    session.current, inst.shapes, inst.workspace
                )
                if issues:
                    raise ValidationFailure(
                        f"infeasible arrangement after round {round_idx}: {issues}"
                    )
    except MotionFailure as exc:
        metrics.failure = str(exc)
        metrics.success = False
        metrics.actions = session.actions
        metrics.buffers_used = session.buffers_used
        metrics.sync_steps = session.rounds
        metrics.fallback_counts = fallbacks
        metrics.sequence = list(session.removal_sequence)
        trace.metrics = metrics
        return metrics

    for i in inst.ids():
        cur = session.current.poses[i]
        if not isinstance(cur, Pose2) or not cur.almost_equal(inst.goal.pose_of(i), 1e-9):
            raise ValidationFailure(f"object {i} did not end at its goal pose")
    metrics.actions = session.actions
    metrics.buffers_used = session.buffers_used
    metrics.sync_steps = session.rounds
    metrics.fallback_counts = fallbacks
    metrics.sequence = list(session.removal_sequence)
    metrics.success = True
    trace.metrics = metrics
    return metrics


def run_instance(
    instance: Instance,
    seed: int,
    arms=None,
    *,
    dt: float = DT,
    k_buffers: int = K_BUFFERS,
    force_sequential: bool = False,
    forced_subs=None,
) -> tuple[RunMetrics, RunRecord]:
    session = new_session(instance, seed, arms)
    rec = RunRecord()
    metrics = execute(
        session,
        dt=dt,
        k_buffers=k_buffers,
        force_sequential=force_sequential,
        forced_subs=forced_subs,
        record=rec,
    )
    return metrics, rec


# -------------------------------------------------------------- trace IO


def _fmt(x: float) -> str:
    return repr(float(x))


def dumps_trace(trace: Trace) -> str:
    a1, a2 = trace.arms
    lines = [
        TRACE_FORMAT,
        f"instance {trace.instance_hash} seed {trace.seed}",
        "arms "
        f"base1 {_fmt(a1.base[0])} {_fmt(a1.base[1])} "
        f"base2 {_fmt(a2.base[0])} {_fmt(a2.base[1])} "
        f"reach {_fmt(a1.reach)} ee_radius {_fmt(a1.ee_radius)} "
        f"clearance {_fmt(max(a1.clearance, a2.clearance))} dt {_fmt(trace.dt)}",
    ]
    for leg in trace.legs:
        cands = ";".join(f"{i},{j}" for i, j in leg.candidates) or "-"
        objs = " ".join("-" if o is None else str(o) for o in leg.objs)
        angles = " ".join(a or "-" for a in leg.angles)
        buf = (
            f"{_fmt(leg.buffer_pose.x)} {_fmt(leg.buffer_pose.y)} {_fmt(leg.buffer_pose.theta)}"
            if leg.buffer_pose
            else "- - -"
        )
        lines.append(
            f"leg {leg.index} stage {leg.stage} mode {leg.mode} objs {objs} "
            f"angles {angles} buffer {buf} candidates {cands} duration {_fmt(leg.duration)}"
        )
        for a in (0, 1):
            for t, x, y, carried in leg.samples[a]:
                c = "-" if carried is None else str(carried)
                lines.append(f"s {leg.index} {a} {_fmt(t)} {_fmt(x)} {_fmt(y)} {c}")
        for arm, action, obj, t, point in leg.grips:
            lines.append(
                f"grip {leg.index} {arm} {action} {obj} {_fmt(t)} "
                f"{_fmt(point[0])} {_fmt(point[1])}"
            )
        for obj, pose, kind in leg.places:
            lines.append(
                f"place {leg.index} {obj} {_fmt(pose.x)} {_fmt(pose.y)} {_fmt(pose.theta)} {kind}"
            )
    m = trace.metrics
    if m is not None:
        fb = ",".join(f"{k}={v}" for k, v in sorted(m.fallback_counts.items())) or "-"
        lines.append(
            f"metrics actions {m.actions} buffers_used {m.buffers_used} "
            f"sync_steps {m.sync_steps} makespan {_fmt(m.makespan)} fallbacks {fb} "
            f"success {int(m.success)}"
        )
    return "\n".join(lines) + "\n"


def save_trace(trace: Trace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_trace(trace))


def loads_trace(text: str) -> Trace:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != TRACE_FORMAT:
        raise ValueError(f"expected {TRACE_FORMAT} header")
    hdr = lines[1].split()
    arm_f = lines[2].split()

    def take(tokens, key):
        return tokens[tokens.index(key) + 1 :]

    base1 = (float(arm_f[2]), float(arm_f[3]))
    base2 = (float(arm_f[5]), float(arm_f[6]))
    reach = float(take(arm_f, "reach")[0])
    ee_radius = float(take(arm_f, "ee_radius")[0])
    clearance = float(take(arm_f, "clearance")[0])
    dt = float(take(arm_f, "dt")[0])
    a1 = ArmModel(base=base1, reach=reach, ee_radius=ee_radius, clearance=clearance)
    a2 = ArmModel(base=base2, reach=reach, ee_radius=ee_radius, clearance=clearance)
    trace = Trace(hdr[1], int(hdr[3]), (a1, a2), dt)

    legs: dict[int, LegRecord] = {}
    metrics = None
    for ln in lines[3:]:
        parts = ln.split()
        if parts[0] == "leg":
            # leg I stage S mode M objs O1 O2 angles A1 A2 buffer X Y T candidates C duration D
            idx = int(parts[1])
            objs = tuple(None if v == "-" else int(v) for v in (parts[7], parts[8]))
            angles = tuple(None if v == "-" else v for v in (parts[10], parts[11]))
            buf = None
            if parts[13] != "-":
                buf = Pose2(float(parts[13]), float(parts[14]), float(parts[15]))
            cands = []
            if parts[17] != "-":
                for item in parts[17].split(";"):
                    i, j = item.split(",")
                    cands.append((int(i), int(j)))
            legs[idx] = LegRecord(
                index=idx,
                stage=parts[3],
                mode=parts[5],
                objs=objs,
                angles=angles,
                buffer_pose=buf,
                candidates=cands,
                duration=float(parts[19]),
                samples=[[], []],
                grips=[],
                places=[],
            )
        elif parts[0] == "s":
            leg = legs[int(parts[1])]
            arm = int(parts[2])
            carried = None if parts[6] == "-" else int(parts[6])
            leg.samples[arm].append(
                (float(parts[3]), float(parts[4]), float(parts[5]), carried)
            )
        elif parts[0] == "grip":
            legs[int(parts[1])].grips.append(
                (
                    int(parts[2]),
                    parts[3],
                    int(parts[4]),
                    float(parts[5]),
                    (float(parts[6]), float(parts[7])),
                )
            )
        elif parts[0] == "place":
            legs[int(parts[1])].places.append(
                (
                    int(parts[2]),
                    Pose2(float(parts[3]), float(parts[4]), float(parts[5])),
                    parts[6],
                )
            )
        elif parts[0] == "metrics":
            fb = {}
            if parts[10] != "-":
                for item in parts[10].split(","):
                    k, v = item.split("=")
                    fb[k] = int(v)
            metrics = RunMetrics(
                n=0,
                actions=int(parts[2]),
                buffers_used=int(parts[4]),
                sync_steps=int(parts[6]),
                makespan=float(parts[8]),
                fallback_counts=fb,
                success=bool(int(parts[12])),
            )
    trace.legs = [legs[k] for k in sorted(legs)]
    trace.metrics = metrics
    return trace


def load_trace(path) -> Trace:
    with open(path, encoding="utf-8") as fh:
        return loads_trace(fh.read())


# ------------------------------------------------------------- verification


def verify_trace(trace: Trace | str, instance: Instance) -> tuple[bool, str]:
    """Replay a trace against the instance using only geometric primitives."""
    if isinstance(trace, str):
        trace = loads_trace(trace)
    if trace.instance_hash != instance_hash(instance):
        return False, "instance hash mismatch"
    a1, a2 = trace.arms
    clearance = max(a1.clearance, a2.clearance)
    shapes = instance.shapes
    ws = instance.workspace

    table: dict[int, Pose2] = {i: instance.start.pose_of(i) for i in instance.ids()}
    held: dict[int, Optional[int]] = {0: None, 1: None}
    expect_stage = "tostart"
    prev_end = None

    def table_feasible(where: str) -> Optional[str]:
        boxes = [(i, box_at(p, *shapes[i])) for i, p in sorted(table.items())]
        for k, (i, bi) in enumerate(boxes):
            if not inside(ws, bi):
                return f"{where}: object {i} outside workspace"
            for j, bj in boxes[k + 1 :]:
                if overlaps(bi, bj):
                    return f"{where}: objects {i} and {j} overlap"
        return None

    for leg in trace.legs:
        where = f"leg {leg.index}"
        if leg.stage != expect_stage:
            return False, f"{where}: expected stage {expect_stage}, got {leg.stage}"
        expect_stage = "togoal" if expect_stage == "tostart" else "tostart"
        if len(leg.samples[0]) != len(leg.samples[1]):
            return False, f"{where}: sample count mismatch between arms"
        if prev_end is not None:
            for a in (0, 1):
                _, x0, y0, _ = leg.samples[a][0]
                if dist((x0, y0), prev_end[a]) > 1e-6:
                    return False, f"{where}: arm {a + 1} path discontinuity"
        for k in range(len(leg.samples[0])):
            _, x1, y1, _ = leg.samples[0][k]
            _, x2, y2, _ = leg.samples[1][k]
            c = segment_clearance(a1.base, (x1, y1), a2.base, (x2, y2))
            if c < clearance - 1e-6:
                return False, f"{where}: clearance {c:.4f} at sample {k}"
        sample_gap = leg.duration / max(len(leg.samples[0]) - 1, 1)
        for arm, action, obj, t, point in leg.grips:
            # the event point must agree with nearby samples (unit EE speed)
            near = min(leg.samples[arm], key=lambda s: abs(s[0] - t))
            if dist((near[1], near[2]), point) > sample_gap + 1e-9:
                return False, f"{where}: arm {arm + 1} event point far from its path"
            if action == "close":
                if obj not in table:
                    return False, f"{where}: grasping object {obj} not on the table"
                if held[arm] is not None:
                    return False, f"{where}: arm {arm + 1} already holds an object"
                if dist(point, table[obj].xy) > 1e-9:
                    return False, f"{where}: arm {arm + 1} closed away from object {obj}"
                del table[obj]
                held[arm] = obj
            else:
                if held[arm] != obj:
                    return False, f"{where}: arm {arm + 1} released unheld object {obj}"
                placed = [p for o, p, _ in leg.places if o == obj]
                if not placed or dist(point, placed[0].xy) > 1e-9:
                    return False, f"{where}: arm {arm + 1} opened away from its placement"
        for obj, pose, kind in leg.places:
            arm = 0 if held[0] == obj else (1 if held[1] == obj else None)
            if arm is None:
                return False, f"{where}: placing object {obj} that is not held"
            box = box_at(pose, *shapes[obj])
            if not inside(ws, box):
                return False, f"{where}: placement of {obj} outside workspace"
            for j, pj in table.items():
                if overlaps(box, box_at(pj, *shapes[j])):
                    return False, f"{where}: placement of {obj} overlaps object {j}"
            if kind == "goal" and not pose.almost_equal(instance.goal.pose_of(obj), 1e-9):
                return False, f"{where}: goal placement of {obj} at the wrong pose"
            table[obj] = pose
            held[arm] = None
        bad = table_feasible(where)
        if bad:
            return False, bad
        prev_end = [
            (leg.samples[a][-1][1], leg.samples[a][-1][2]) for a in (0, 1)
        ]

    if held[0] is not None or held[1] is not None:
        return False, "run ended with an object still held"
    for i in instance.ids():
        if i not in table or not table[i].almost_equal(instance.goal.pose_of(i), 1e-9):
            return False, f"object {i} not at its goal pose at the end"
    return True, "ok"


def iterate_frames(trace: Trace, instance: Instance):
    """Yield (table poses, ee points, carried ids) per exported time sample.
    Placements are applied at their gripper-open event times, so the last
    frame of a successful trace shows the goal scene."""
    table: dict[int, Pose2] = {i: instance.start.pose_of(i) for i in instance.ids()}
    for leg in trace.legs:
        place_of = {obj: pose for obj, pose, _ in leg.places}
        opens = sorted(
            (t, obj) for _, action, obj, t, _ in leg.grips if action == "open"
        )
        n = len(leg.samples[0])
        for k in range(n):
            now = leg.samples[0][k][0]
            while opens and opens[0][0] <= now + 1e-12:
                _, obj = opens.pop(0)
                table[obj] = place_of[obj]
            ee = []
            carried = []
            for a in (0, 1):
                _, x, y, c = leg.samples[a][k]
                ee.append((x, y))
                carried.append(c)
                if c is not None and c in table:
                    del table[c]
            yield dict(table), list(ee), list(carried)
        for t, obj in opens:
            table[obj] = place_of[obj]
