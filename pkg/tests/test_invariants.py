"""Cross-module run invariants checked over generated instances."""

from sdar import instances, sim
from sdar.depgraph import decompose, footprint
from sdar.geom import overlaps
from sdar.motion import plan_motion, select_best_task
from sdar.sim import _apply_leg
from sdar.taskplan import Stage, TaskComplete, next_task_plan


def step_through(inst, seed=0):
    """Drive a session leg by leg, yielding (session, plan) before each leg."""
    session = sim.new_session(inst, seed)
    while True:
        try:
            plan = next_task_plan(session)
        except TaskComplete:
            return
        yield session, plan
        sub, motion = plan_motion(plan, session, session.arms)
        _apply_leg(session, sub, motion)


def test_buffer_count_equals_long_cycle_count():
    cases = (
        [(instances.gen_single_cycle(n, 1), 1 if n >= 3 else 0) for n in (2, 3, 5, 8)]
        + [(instances.gen_double_cycle(n, 1), None) for n in (4, 6, 9, 12)]
        + [(instances.gen_mixed(s), 1) for s in (0, 1)]
    )
    for inst, expected in cases:
        if expected is None:
            d = decompose(inst.graph())
            expected = sum(1 for c in d.cycles if len(c) >= 3)
        metrics, _ = sim.run_instance(inst, 3)
        assert metrics.success
        assert metrics.buffers_used == expected, inst.label


def test_session_terminates_within_two_n_rounds():
    for inst in (
        instances.gen_random(12, 0),
        instances.gen_mixed(2),
        instances.gen_double_cycle(10, 0),
        instances.showcase9(),
    ):
        metrics, _ = sim.run_instance(inst, 1)
        assert metrics.success
        assert metrics.sync_steps <= 2 * inst.n


def test_candidates_never_include_solved_objects():
    for inst in (instances.showcase9(), instances.gen_mixed(3)):
        for session, plan in step_through(inst):
            for pair in plan.candidates:
                assert set(pair) <= session.remaining
            if plan.single_arm:
                assert plan.single_arm[1] in session.remaining
            if plan.need_buffer and plan.candidates:
                # every buffer-flagged pair lies on one cycle of the current graph
                d = decompose(session.graph_over_remaining())
                cyc_sets = [set(c) for c in d.cycles] + [set(c) for c in d.complex_sccs]
                for pair in plan.candidates:
                    assert any(set(pair) <= c or pair[1] in c for c in cyc_sets)


def test_selected_targets_never_overlap_live_footprints():
    for seed in range(8):
        inst = instances.gen_random(8, 500 + seed)
        for session, plan in step_through(inst, seed):
            if plan.stage != Stage.TO_START:
                continue
            try:
                sub = select_best_task(plan, session, session.arms)
            except Exception:
                continue
            moving = {t.obj for t in sub.tasks if t.obj is not None}
            for task in sub.tasks:
                if task.obj is None:
                    continue
                box = footprint(task.obj, task.target, inst.shapes)
                for i, p in session.current.on_table():
                    if i not in moving:
                        assert not overlaps(box, footprint(i, p, inst.shapes))


def test_every_successful_trace_verifies():
    for inst in (
        instances.gen_random(6, 11),
        instances.gen_single_cycle(6, 2),
        instances.gen_double_cycle(7, 3),
        instances.gen_mixed(7),
    ):
        metrics, rec = sim.run_instance(inst, 13)
        assert metrics.success
        ok, msg = sim.verify_trace(sim.dumps_trace(rec.trace), inst)
        assert ok, (inst.label, msg)
