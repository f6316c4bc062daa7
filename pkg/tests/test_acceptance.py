"""Acceptance suite: every criterion at its stated tolerance, one printed
pass/fail line each.  Run with `pytest tests/test_acceptance.py -v -s`."""

import itertools
import random
import time

import pytest

from sdar import instances, sim
from sdar.baseline import min_fvs, single_arm_optimal_actions
from sdar.cli import main as cli_main
from sdar.depgraph import DepGraph, decompose, footprint
from sdar.geom import overlaps
from sdar.motion import (
    DT,
    ArmTask,
    Conflict,
    InstantiatedSubTask,
    Mode,
    Pose2,
    SubTaskInfeasible,
    SyncMotion,
    default_arms,
    plan_sync,
    sequential_fallback,
    untangle,
    validate_motion,
)
from sdar.taskplan import Stage

ARMS = default_arms()


def _report(num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {num:2d} {name}: {status} {detail}".rstrip())
    assert ok, f"criterion {num} ({name}) failed: {detail}"


@pytest.fixture(scope="module")
def suite_results():
    """One full run of the default suite, reused across criteria."""
    results = []
    for inst in instances.default_suite():
        metrics, record = sim.run_instance(inst, 42)
        verified, msg = sim.verify_trace(record.trace, inst)
        results.append((inst, metrics, record, verified, msg))
    return results


def test_criterion_1_dependency_graph_exactness():
    t0 = time.time()
    rng = random.Random(1)
    checked = 0
    for k in range(500):
        n = rng.choice(range(4, 13))
        inst = instances.gen_random(n, 10_000 + k)
        got = set(inst.graph().edges)
        brute = set()
        for i in inst.ids():
            gb = footprint(i, inst.goal.pose_of(i), inst.shapes)
            for j in inst.ids():
                if i != j and overlaps(gb, footprint(j, inst.start.pose_of(j), inst.shapes)):
                    brute.add((i, j))
        assert got == brute, f"edge mismatch on R{n} seed {10_000 + k}"
        checked += 1
    elapsed = time.time() - t0
    _report(1, "dependency-graph exactness", checked == 500 and elapsed < 10.0,
            f"({checked} instances, {elapsed:.1f}s)")


def test_criterion_2_running_example_reproduction():
    inst = instances.showcase9()
    d = decompose(inst.graph())
    structure_ok = (
        d.cycles == [[0, 1, 2, 3]]
        and d.chains == [[6, 5, 4]]
        and d.isolated == [7]
    )
    metrics, record = sim.run_instance(inst, 0)
    verified, _ = sim.verify_trace(record.trace, inst)
    run_ok = (
        metrics.success
        and verified
        and metrics.actions == 10
        and metrics.buffers_used == 1
    )
    _report(2, "running-example reproduction", structure_ok and run_ok,
            f"(actions={metrics.actions}, buffers={metrics.buffers_used})")


def test_criterion_3_two_cycle_swap():
    bad = []
    for seed in range(100):
        inst = instances.gen_single_cycle(2, seed)
        metrics, _ = sim.run_instance(inst, seed)
        if not (metrics.success and metrics.actions == 2 and metrics.buffers_used == 0):
            bad.append(seed)
    _report(3, "2-cycle dual-arm swap", not bad, f"(100 seeds, bad={bad})")


def test_criterion_4_action_count_dominance():
    t0 = time.time()
    cases = (
        [instances.gen_single_cycle(n, 0) for n in range(2, 11)]
        + [instances.gen_double_cycle(n, 0) for n in range(4, 13)]
        + [instances.gen_mixed(s) for s in range(10)]
    )
    violations = []
    for inst in cases:
        oracle = single_arm_optimal_actions(inst)
        assert oracle.assumption_holds, inst.label
        metrics, _ = sim.run_instance(inst, 5)
        assert metrics.success, inst.label
        two_cycle = any(len(c) == 2 for c in decompose(inst.graph()).cycles)
        if metrics.actions > oracle.single_arm_optimal_actions:
            violations.append((inst.label, "dominance"))
        if two_cycle and metrics.actions >= oracle.single_arm_optimal_actions:
            violations.append((inst.label, "strictness"))
        if oracle.single_arm_optimal_actions / metrics.actions < 1.0:
            violations.append((inst.label, "ratio"))
    elapsed = time.time() - t0
    _report(4, "action-count dominance", not violations and elapsed < 60.0,
            f"({len(cases)} instances, {elapsed:.1f}s, violations={violations})")


def test_criterion_5_success_rate(suite_results):
    failures = [
        (inst.label, inst.seed, metrics.failure or msg)
        for inst, metrics, _, verified, msg in suite_results
        if not (metrics.success and verified)
    ]
    _report(
        5,
        "100% success on the default suite",
        len(suite_results) >= 200 and not failures,
        f"({len(suite_results)} instances, failures={failures[:3]})",
    )


def test_criterion_6_parallelism_saving(suite_results):
    t0 = time.time()
    ratios = []
    per_instance_bad = []
    for inst, metrics, record, verified, _ in suite_results:
        if inst.category != "R" or inst.n < 8:
            continue
        forced, _ = sim.run_instance(
            inst, 42, force_sequential=True, forced_subs=record.subs
        )
        assert forced.success, inst.label
        r = metrics.makespan / forced.makespan
        ratios.append(r)
        if r > 1.0 + 1e-9:
            per_instance_bad.append((inst.label, inst.seed, r))
    avg = sum(ratios) / len(ratios)
    elapsed = time.time() - t0
    ok = not per_instance_bad and avg <= 0.75 + 0.05 and elapsed < 120.0
    _report(6, "parallel vs sequential makespan", ok,
            f"({len(ratios)} instances, avg ratio {avg:.3f} <= 0.80, {elapsed:.1f}s)")


def test_criterion_7_trajectory_soundness(suite_results):
    violations = []
    arms_cache = {}
    for inst, metrics, record, _, _ in suite_results:
        if not metrics.success:
            continue
        arms = arms_cache.setdefault(inst.workspace, default_arms(inst.workspace))
        for motion in record.motions:
            bad = validate_motion(motion.paths, arms, motion.duration, DT / 2, margin=1e-6, guard=0.0)
            if bad is not None:
                violations.append((inst.label, inst.seed, bad))
    _report(7, "trajectory soundness at dt/2", not violations,
            f"(violations={violations[:3]})")


def _leg(e1, t1, e2, t2):
    sub = InstantiatedSubTask(
        tasks=(
            ArmTask(obj=0, pick=e1, target=Pose2(*t1)),
            ArmTask(obj=1, pick=e2, target=Pose2(*t2)),
        )
    )
    return sub, [e1, e2]


def _all_rungs(sub, ee):
    """(mode, duration) for every rung that validates on this leg."""
    rungs = []
    sync = plan_sync(sub, ARMS, Stage.TO_GOAL, ee)
    conflict = sync if isinstance(sync, Conflict) else Conflict(0.0, "synthetic")
    if isinstance(sync, SyncMotion):
        rungs.append((Mode.SYNCHRONOUS, sync.duration))
    unt = untangle(sub, ARMS, Stage.TO_GOAL, ee, conflict)
    if unt is not None:
        rungs.append((Mode.UNTANGLED, unt.duration))
    try:
        seq = sequential_fallback(sub, ARMS, Stage.TO_GOAL, ee)
        rungs.append((Mode.SEQUENTIAL, seq.duration))
    except SubTaskInfeasible:
        pass
    return rungs


def test_criterion_8_fallback_ladder():
    fixtures = [
        _leg((0.2, 0.45), (0.3, 0.15), (0.8, 0.45), (0.7, 0.15)),   # clean
        _leg((0.46, 0.10), (0.46, 0.50), (0.52, 0.50), (0.58, 0.10)),  # delay
        _leg((0.44, 0.10), (0.44, 0.50), (0.52, 0.50), (0.52, 0.10)),  # via
        _leg((0.30, 0.30), (0.72, 0.32), (0.70, 0.28), (0.28, 0.30)),  # sequential only
    ]
    triggered = set()
    monotone_ok = True
    details = []
    for sub, ee in fixtures:
        rungs = _all_rungs(sub, ee)
        first = rungs[0][0] if rungs else None
        # the ladder rung actually used is the first valid one
        sync = plan_sync(sub, ARMS, Stage.TO_GOAL, ee)
        if isinstance(sync, SyncMotion):
            triggered.add(Mode.SYNCHRONOUS)
        else:
            unt = untangle(sub, ARMS, Stage.TO_GOAL, ee, sync)
            if unt is not None:
                triggered.add(Mode.UNTANGLED)
            else:
                sequential_fallback(sub, ARMS, Stage.TO_GOAL, ee)
                triggered.add(Mode.SEQUENTIAL)
        order = {Mode.SYNCHRONOUS: 0, Mode.UNTANGLED: 1, Mode.SEQUENTIAL: 2}
        durs = dict(rungs)
        seq = [durs[m] for m in sorted(durs, key=order.get)]
        if any(a > b + 1e-9 for a, b in zip(seq, seq[1:])):
            monotone_ok = False
            details.append((ee, rungs))
    # ladder monotonicity must also hold on every leg of an end-to-end run
    for inst in (instances.showcase9(), instances.gen_mixed(0)):
        metrics, record = sim.run_instance(inst, 42)
        assert metrics.success
        for k, motion in enumerate(record.motions):
            sub = record.subs[k // 2]
            ee = [p.knots[0][1] for p in motion.paths]
            rungs = dict(_all_rungs(sub, ee)) if motion.stage == Stage.TO_GOAL else None
            if rungs and len(rungs) > 1:
                order = [Mode.SYNCHRONOUS, Mode.UNTANGLED, Mode.SEQUENTIAL]
                seq = [rungs[m] for m in order if m in rungs]
                if any(a > b + 1e-9 for a, b in zip(seq, seq[1:])):
                    monotone_ok = False
                    details.append((inst.label, k, rungs))
    all_rungs_hit = triggered == {Mode.SYNCHRONOUS, Mode.UNTANGLED, Mode.SEQUENTIAL}
    _report(8, "fallback ladder exercised and monotone",
            all_rungs_hit and monotone_ok,
            f"(triggered={sorted(m.value for m in triggered)}, issues={details[:2]})")


def test_criterion_9_determinism(tmp_path):
    suite = tmp_path / "suite"
    assert cli_main(["gen", "S", "4", "--count", "2", "--seed", "0", "--out", str(suite)]) == 0
    assert cli_main(["gen", "M", "--count", "2", "--seed", "0", "--out", str(suite)]) == 0
    payload = []
    for name in ("one", "two"):
        csv = tmp_path / name / "report.csv"
        traces = tmp_path / name / "traces"
        code = cli_main([
            "bench", str(suite), "--out", str(csv), "--traces", str(traces), "--seed", "11",
        ])
        assert code == 0
        payload.append(
            (csv.read_bytes(), {p.name: p.read_bytes() for p in traces.iterdir()})
        )
    _report(9, "bench determinism", payload[0] == payload[1],
            f"({len(payload[0][1])} traces compared byte-for-byte)")


def _naive_min_fvs(n, edges):
    def has_cycle(keep):
        succ = {v: [] for v in keep}
        for i, j in edges:
            if i in keep and j in keep:
                succ[i].append(j)
        color = {v: 0 for v in keep}

        def dfs(v):
            color[v] = 1
            for w in succ[v]:
                if color[w] == 1 or (color[w] == 0 and dfs(w)):
                    return True
            color[v] = 2
            return False

        return any(color[v] == 0 and dfs(v) for v in keep)

    verts = list(range(n))
    for size in range(n + 1):
        for subset in itertools.combinations(verts, size):
            if not has_cycle(set(verts) - set(subset)):
                return size
    return n


def test_criterion_10_oracle_self_check():
    t0 = time.time()
    rng = random.Random(2024)
    for _ in range(1000):
        n = rng.randint(1, 10)
        edges = frozenset(
            (i, j) for i in range(n) for j in range(n) if i != j and rng.random() < 0.25
        )
        g = DepGraph(tuple(range(n)), edges)
        assert min_fvs(g) == _naive_min_fvs(n, edges)
    elapsed = time.time() - t0
    _report(10, "min-FVS oracle self-check", elapsed < 30.0,
            f"(1000 graphs, {elapsed:.1f}s)")
