import random

import pytest

from sdar import instances, sim
from sdar.depgraph import Arrangement, DepGraph, decompose
from sdar.geom import Pose2
from sdar.motion import default_arms
from sdar.taskplan import (
    CycleTooShort,
    Gripper,
    InconsistentState,
    Stage,
    TaskComplete,
    assign_arms,
    mark_buffer_target,
    next_task_plan,
    removal_sequence_trace,
)


def fresh_session(inst, seed=0):
    return sim.new_session(inst, seed)


def pairs_as_set(cands):
    return {frozenset(p) for p in cands}


# ------------------------------------------------------------ branch logic

def test_showcase_first_round_pairs_all_movable():
    session = fresh_session(instances.showcase9())
    plan = next_task_plan(session)
    assert plan.stage == Stage.TO_START
    assert pairs_as_set(plan.candidates) == {
        frozenset({4, 7}), frozenset({7, 8}), frozenset({4, 8})
    }
    assert plan.gripper_actions == (Gripper.CLOSE, Gripper.CLOSE)
    assert not plan.need_buffer


def test_cycle_round_emits_adjacent_pairs_with_buffer_flag():
    inst = instances.showcase9()
    session = fresh_session(inst)
    # pretend objects 4..8 are already solved
    for i in (4, 5, 6, 7, 8):
        session.remaining.discard(i)
        session.current.poses[i] = inst.goal.pose_of(i)
    plan = next_task_plan(session)
    assert plan.need_buffer
    assert set(plan.candidates) == {(0, 1), (1, 2), (2, 3), (3, 0)}


def test_to_goal_round_is_passthrough():
    session = fresh_session(instances.showcase9())
    for st in session.arm_states:
        st.stage = Stage.TO_GOAL
        st.gripper = Gripper.CLOSE
    session.arm_states[0].assigned = 4
    session.arm_states[1].assigned = 7
    plan = next_task_plan(session)
    assert plan.stage == Stage.TO_GOAL
    assert plan.gripper_actions == (Gripper.OPEN, Gripper.OPEN)
    assert plan.assignments[0][0] == 4 and plan.assignments[1][0] == 7


def test_two_cycle_swap_has_no_buffer():
    session = fresh_session(instances.gen_single_cycle(2, 0))
    plan = next_task_plan(session)
    assert pairs_as_set(plan.candidates) == {frozenset({0, 1})}
    assert not plan.need_buffer


def test_single_object_left_uses_one_arm():
    inst = instances.gen_random(3, 5)
    session = fresh_session(inst)
    keep = min(session.remaining)
    for i in list(session.remaining):
        if i != keep:
            session.remaining.discard(i)
            session.current.poses[i] = inst.goal.pose_of(i)
    plan = next_task_plan(session)
    assert plan.single_arm is not None
    assert plan.single_arm[1] == keep
    assert plan.candidates == []


def test_mixed_stages_raise():
    session = fresh_session(instances.gen_random(2, 0))
    session.arm_states[0].stage = Stage.TO_GOAL
    with pytest.raises(InconsistentState):
        next_task_plan(session)


def test_task_complete_on_identity():
    session = fresh_session(instances.identity_instance(3, 0))
    with pytest.raises(TaskComplete):
        next_task_plan(session)


def test_chain_terminal_pair_when_one_movable():
    # 2 -> 1 -> 0: only 0 movable, partner is its chain predecessor 1
    inst = instances.showcase9()
    session = fresh_session(inst)
    session.remaining = {4, 5, 6}
    plan = next_task_plan(session)
    assert plan.candidates[0] == (4, 5)
    assert not plan.need_buffer


# ------------------------------------------------------------- assign_arms

def test_assign_arms_by_x_coordinate():
    arms = default_arms()
    cur = Arrangement({0: Pose2(0.2, 0.3), 1: Pose2(0.8, 0.3)})
    assert assign_arms((0, 1), cur, arms) == (0, 1)
    assert assign_arms((1, 0), cur, arms) == (0, 1)


def test_assign_arms_tie_breaks_on_base_distance():
    arms = default_arms()
    cur = Arrangement({0: Pose2(0.5, 0.31), 1: Pose2(0.5, 0.55)})
    # equal x: object 0 is nearer arm 1's base (y = 0.3)
    assert assign_arms((0, 1), cur, arms) == (0, 1)


def test_assign_arms_symmetric_over_random_pairs():
    arms = default_arms()
    rng = random.Random(11)
    for _ in range(50):
        cur = Arrangement(
            {
                0: Pose2(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.5)),
                1: Pose2(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.5)),
            }
        )
        assert assign_arms((0, 1), cur, arms) == assign_arms((1, 0), cur, arms)


# ------------------------------------------------------- mark_buffer_target

def test_mark_buffer_target_choices():
    choices = mark_buffer_target([0, 1, 2, 3])
    assert len(choices) == 4
    assert (0, 1) in choices  # mover 0, object 1 to the buffer
    for mover, buffered in choices:
        assert mover != buffered


def test_mark_buffer_target_rejects_short_cycles():
    with pytest.raises(CycleTooShort):
        mark_buffer_target([0, 1])


def test_three_cycle_break_leaves_a_chain():
    # graph-level simulation of all 3 adjacent-pair choices on a 3-cycle
    edges = {(0, 1), (1, 2), (2, 0)}
    for mover, buffered in mark_buffer_target([0, 1, 2]):
        rest = {0, 1, 2} - {mover}
        kept = {
            (i, j)
            for i, j in edges
            if i in rest and j in rest and j != buffered  # buffered start vacated
        }
        d = decompose(DepGraph(tuple(sorted(rest)), frozenset(kept)))
        assert not d.cycles and not d.complex_sccs
        assert len(d.chains) == 1 and set(d.chains[0]) == rest


# --------------------------------------------------------- removal sequence

def test_removal_sequence_showcase():
    inst = instances.showcase9()
    session = fresh_session(inst)
    sim.execute(session)
    seq = removal_sequence_trace(session)
    assert len(seq) == 10
    counts = {i: seq.count(i) for i in range(9)}
    doubled = [i for i, c in counts.items() if c == 2]
    assert len(doubled) == 1 and doubled[0] in (0, 1, 2, 3)
    assert all(counts[i] == 1 for i in range(9) if i != doubled[0])
    # independents precede the chain tail; chain order 4 then 5 then 6
    assert seq.index(7) < seq.index(6) and seq.index(8) < seq.index(6)
    assert seq.index(4) < seq.index(5) < seq.index(6)


def test_removal_sequence_identity_and_swap():
    session = fresh_session(instances.identity_instance(3, 1))
    sim.execute(session)
    assert removal_sequence_trace(session) == []

    session = fresh_session(instances.gen_single_cycle(2, 3))
    sim.execute(session)
    seq = removal_sequence_trace(session)
    assert sorted(seq) == [0, 1]
