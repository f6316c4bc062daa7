from sdar import instances
from sdar.geom import Pose2
from sdar.sim import (
    dumps_trace,
    iterate_frames,
    load_trace,
    loads_trace,
    run_instance,
    save_trace,
    verify_trace,
)


def test_identity_instance_executes_to_nothing():
    inst = instances.identity_instance(4, 2)
    metrics, rec = run_instance(inst, 0)
    assert metrics.success
    assert metrics.actions == 0
    assert metrics.makespan == 0.0
    assert metrics.sync_steps == 0
    ok, msg = verify_trace(rec.trace, inst)
    assert ok, msg


def test_showcase_run_matches_expected_counts():
    inst = instances.showcase9()
    metrics, rec = run_instance(inst, 0)
    assert metrics.success
    assert metrics.actions == 10
    assert metrics.buffers_used == 1
    assert metrics.makespan > 0


def test_two_cycle_swap_metrics():
    inst = instances.gen_single_cycle(2, 9)
    metrics, _ = run_instance(inst, 1)
    assert metrics.success and metrics.actions == 2 and metrics.buffers_used == 0


def test_actions_equal_n_plus_buffers_across_categories():
    cases = [
        instances.gen_random(7, 3),
        instances.gen_single_cycle(5, 1),
        instances.gen_double_cycle(7, 2),
        instances.gen_mixed(4),
    ]
    for inst in cases:
        metrics, _ = run_instance(inst, 11)
        assert metrics.success
        assert metrics.actions == inst.n + metrics.buffers_used
        assert metrics.sync_steps <= metrics.actions


def test_trace_roundtrip_and_verify():
    inst = instances.gen_mixed(2)
    metrics, rec = run_instance(inst, 5)
    text = dumps_trace(rec.trace)
    again = loads_trace(text)
    assert dumps_trace(again) == text
    ok, msg = verify_trace(again, inst)
    assert ok, msg


def test_trace_file_io(tmp_path):
    inst = instances.gen_single_cycle(3, 0)
    _, rec = run_instance(inst, 2)
    path = tmp_path / "run.trace"
    save_trace(rec.trace, path)
    assert path.read_text().startswith("sdar-trace/1\n")
    ok, msg = verify_trace(load_trace(path), inst)
    assert ok, msg


def test_verify_rejects_tampered_placement():
    inst = instances.showcase9()
    _, rec = run_instance(inst, 0)
    trace = rec.trace
    # push one goal placement onto a neighbor's footprint
    for leg in trace.legs:
        if leg.places:
            obj, pose, kind = leg.places[0]
            victim = next(i for i in inst.ids() if i != obj)
            bad = inst.goal.pose_of(victim)
            leg.places[0] = (obj, Pose2(bad.x, bad.y, bad.theta), kind)
            break
    ok, msg = verify_trace(trace, inst)
    assert not ok
    assert msg != "ok"


def test_verify_rejects_wrong_instance():
    inst = instances.gen_random(4, 1)
    other = instances.gen_random(4, 2)
    _, rec = run_instance(inst, 0)
    ok, msg = verify_trace(rec.trace, other)
    assert not ok and "hash" in msg


def test_verify_rejects_clearance_violation():
    inst = instances.gen_random(3, 4)
    _, rec = run_instance(inst, 0)
    trace = rec.trace
    # teleport one sample of arm 2 onto arm 1's sampled position
    leg = next(l for l in trace.legs if len(l.samples[0]) > 2)
    k = len(leg.samples[0]) // 2
    t, x, y, c = leg.samples[0][k]
    t2 = leg.samples[1][k][0]
    leg.samples[1][k] = (t2, x, y, c)
    ok, msg = verify_trace(trace, inst)
    assert not ok and "clearance" in msg


def test_final_state_must_reach_goal():
    inst = instances.gen_random(3, 6)
    _, rec = run_instance(inst, 0)
    trace = rec.trace
    dropped = [leg for leg in trace.legs if not leg.places]
    trace.legs = [leg for leg in trace.legs if leg is not (trace.legs[-1])]
    ok, msg = verify_trace(trace, inst)
    assert not ok


def test_iterate_frames_counts_and_final_scene():
    inst = instances.gen_single_cycle(2, 6)
    metrics, rec = run_instance(inst, 0)
    frames = list(iterate_frames(rec.trace, inst))
    assert len(frames) == rec.trace.sample_count()
    table, ee, carried = frames[-1]
    for i in inst.ids():
        assert i in table
        assert table[i].almost_equal(inst.goal.pose_of(i), 1e-9)


def test_forced_sequential_replay_preserves_plan():
    inst = instances.gen_mixed(5)
    metrics, rec = run_instance(inst, 21)
    forced, frec = run_instance(inst, 21, force_sequential=True, forced_subs=rec.subs)
    assert forced.success
    assert forced.actions == metrics.actions
    assert forced.buffers_used == metrics.buffers_used
    assert forced.sequence == metrics.sequence
    assert forced.makespan >= metrics.makespan
    assert set(forced.fallback_counts) == {"sequential"}
