"""Dependency-driven dual-arm task planning.

Each synchronized round is planned in two legs: with both arms heading to
start poses the planner rebuilds the dependency graph over unsolved objects
and emits candidate object pairs (movable pairs, a chain terminal pair, or
cycle-breaking pairs with the buffer flag); with both arms heading to goals it
simply releases and keeps the bound assignments.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

from .depgraph import Arrangement, DepGraph, build_dependency_graph, decompose
from .geom import Pose2, dist
from .instances import Instance

if TYPE_CHECKING:  # pragma: no cover
    from .motion import InstantiatedSubTask


class TaskComplete(Exception):
    pass


class InconsistentState(Exception):
    pass


class CycleTooShort(Exception):
    pass


class Gripper(enum.Enum):
    OPEN = "open"
    CLOSE = "close"


class Stage(enum.Enum):
    TO_START = "tostart"
    TO_GOAL = "togoal"


@dataclass
class ArmState:
    gripper: Gripper = Gripper.OPEN
    assigned: Optional[int] = None
    grasp_angle: object = None
    stage: Stage = Stage.TO_START


@dataclass
class TaskPlan:
    stage: Stage
    candidates: list[tuple[int, int]] = field(default_factory=list)
    gripper_actions: tuple[Gripper, Gripper] = (Gripper.CLOSE, Gripper.CLOSE)
    assignments: tuple = (None, None)
    need_buffer: bool = False
    single_arm: Optional[tuple[int, int]] = None  # (arm index, object id)


@dataclass
class PlannerSession:
    """Single-writer state machine for one rearrangement run."""

    instance: Instance
    rng_seed: int
    arms: tuple = ()
    current: Arrangement = None
    remaining: set[int] = field(default_factory=set)
    buffered: dict[int, Pose2] = field(default_factory=dict)
    arm_states: list[ArmState] = field(default_factory=lambda: [ArmState(), ArmState()])
    ee: list = field(default_factory=list)
    rng: random.Random = None
    pending: Optional["InstantiatedSubTask"] = None
    removal_sequence: list[int] = field(default_factory=list)
    actions: int = 0
    buffers_used: int = 0
    rounds: int = 0

    def __post_init__(self):
        if self.current is None:
            self.current = self.instance.start.copy()
        if not self.remaining:
            self.remaining = {
                i
                for i in self.instance.ids()
                if not self.instance.start.pose_of(i).almost_equal(
                    self.instance.goal.pose_of(i)
                )
            }
        self.rng = random.Random(self.rng_seed)
        if self.arms and not self.ee:
            self.ee = [self.arms[0].retract, self.arms[1].retract]

    def graph_over_remaining(self) -> DepGraph:
        cur = Arrangement({i: self.current.poses[i] for i in self.remaining})
        goal = Arrangement({i: self.instance.goal.poses[i] for i in self.remaining})
        return build_dependency_graph(
            cur, goal, self.instance.shapes, self.instance.workspace, check=False
        )


def assign_arms(pair: tuple[int, int], current: Arrangement, arms) -> tuple[int, int]:
    """Bind a pair to arms: smaller x goes to the left-base arm; ties fall to
    base distance, then id.  Symmetric in the pair order."""
    i, j = pair
    pi, pj = current.pose_of(i), current.pose_of(j)

    def key(obj, pose):
        return (pose.x, dist(arms[0].base, pose.xy), obj)

    first, second = sorted(((i, pi), (j, pj)), key=lambda t: key(*t))
    return first[0], second[0]


def mark_buffer_target(cycle: list[int]) -> list[tuple[int, int]]:
    """Adjacent-pair choices on a cycle: the edge tail goes straight to its
    goal, the edge head must be parked at a buffer."""
    if len(cycle) < 3:
        raise CycleTooShort(f"cycle of length {len(cycle)} needs no buffer")
    return [(cycle[k], cycle[(k + 1) % len(cycle)]) for k in range(len(cycle))]


def removal_sequence_trace(session: PlannerSession) -> list[int]:
    return list(session.removal_sequence)


def _nearest_arm(pose: Pose2, arms) -> int:
    d0 = dist(arms[0].base, pose.xy)
    d1 = dist(arms[1].base, pose.xy)
    return 0 if d0 <= d1 else 1


def _chain_lengths(decomp) -> dict[int, int]:
    return {v: len(c) for c in decomp.chains for v in c}


def next_task_plan(session: PlannerSession) -> TaskPlan:
    stages = {s.stage for s in session.arm_states}
    if len(stages) > 1:
        raise InconsistentState("arms are in mixed execution stages")
    stage = stages.pop()

    if stage == Stage.TO_GOAL:
        return TaskPlan(
            stage=Stage.TO_GOAL,
            gripper_actions=(Gripper.OPEN, Gripper.OPEN),
            assignments=tuple(
                (s.assigned, s.grasp_angle) for s in session.arm_states
            ),
        )

    if not session.remaining:
        raise TaskComplete

    if len(session.remaining) == 1:
        obj = next(iter(session.remaining))
        arm = _nearest_arm(session.current.pose_of(obj), session.arms)
        return TaskPlan(stage=Stage.TO_START, single_arm=(arm, obj))

    dg = session.graph_over_remaining()
    decomp = decompose(dg)
    movable = decomp.movable_now

    if len(movable) >= 2:
        cands = [
            (movable[a], movable[b])
            for a in range(len(movable))
            for b in range(a + 1, len(movable))
        ]
        return TaskPlan(stage=Stage.TO_START, candidates=cands)

    if len(movable) == 1:
        m = movable[0]
        chain_len = _chain_lengths(decomp)
        partners = sorted(
            (j for j in session.remaining if j != m and dg.out_neighbors(j) == {m}),
            key=lambda j: (-chain_len.get(j, 1), j),
        )
        if partners:
            return TaskPlan(
                stage=Stage.TO_START, candidates=[(m, j) for j in partners]
            )
        # nothing can ride along with m this round; break a cycle first and
        # let m pair up once the break spawns new movable objects

    # Cycle resolution: swaps are free, longer cycles cost one buffer park.
    for cyc in decomp.cycles:
        if len(cyc) != 2:
            continue
        a, b = cyc
        if dg.out_neighbors(a) == {b} and dg.out_neighbors(b) == {a}:
            return TaskPlan(stage=Stage.TO_START, candidates=[(a, b)])
    for cyc in decomp.cycles:
        if len(cyc) < 3:
            continue
        pairs = [
            (a, b) for a, b in mark_buffer_target(cyc) if dg.out_neighbors(a) == {b}
        ]
        if pairs:
            return TaskPlan(stage=Stage.TO_START, candidates=pairs, need_buffer=True)
    for scc in decomp.complex_sccs:
        out_deg = {v: len(dg.out_neighbors(v) & set(scc)) for v in scc}
        v = max(scc, key=lambda u: (out_deg[u], -u))
        partners = sorted(j for j in session.remaining if dg.out_neighbors(j) == {v})
        if partners:
            return TaskPlan(
                stage=Stage.TO_START,
                candidates=[(x, v) for x in partners],
                need_buffer=True,
            )
        arm = _nearest_arm(session.current.pose_of(v), session.arms)
        return TaskPlan(
            stage=Stage.TO_START, single_arm=(arm, v), need_buffer=True
        )

    if movable:
        # a lone movable object with no partner and no breakable cycle this
        # round still makes progress on its own
        m = movable[0]
        arm = _nearest_arm(session.current.pose_of(m), session.arms)
        return TaskPlan(stage=Stage.TO_START, single_arm=(arm, m))

    raise InconsistentState(
        "no resolvable structure in the dependency graph; remaining="
        f"{sorted(session.remaining)} edges={sorted(dg.edges)}"
    )
