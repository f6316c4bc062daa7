"""Instance model, category generators (R/S/D/M), and the .inst file format.

Generators rejection-sample and then audit the induced dependency-graph
structure, retrying with a derived sub-seed until the audit passes, so every
returned instance provably matches its category label.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass

from .depgraph import (
    Arrangement,
    Shapes,
    arrangement_violations,
    build_dependency_graph,
    decompose,
)
from .geom import MIN_GAP, Pose2, Workspace, box_at, box_clearance, boxes_closer_than, inside, overlaps

INSTANCE_FORMAT = "sdar-instance/1"

# Shared generator constants (workspace units).
RAND_HALF_RANGE = (0.03, 0.06)
RING_HALF_RANGE = (0.03, 0.045)
OVERLAP_SHIFT = 0.05


class GenerationExhausted(Exception):
    pass


class ParseError(Exception):
    pass


class FeasibilityError(Exception):
    pass


@dataclass
class Instance:
    workspace: Workspace
    shapes: Shapes
    start: Arrangement
    goal: Arrangement
    label: str
    seed: int

    @property
    def n(self) -> int:
        return len(self.shapes)

    @property
    def category(self) -> str:
        return self.label[0]

    def ids(self) -> list[int]:
        return sorted(self.shapes)

    def graph(self):
        return build_dependency_graph(self.start, self.goal, self.shapes, self.workspace)


def instance_hash(inst: Instance) -> str:
    return hashlib.sha256(dumps(inst).encode()).hexdigest()[:12]


def _validate(inst: Instance) -> list[str]:
    issues = arrangement_violations(inst.start, inst.shapes, inst.workspace)
    issues += [
        "goal: " + v for v in arrangement_violations(inst.goal, inst.shapes, inst.workspace)
    ]
    if set(inst.start.poses) != set(inst.goal.poses) or set(inst.start.poses) != set(
        inst.shapes
    ):
        issues.append("id sets differ between shapes/start/goal")
    return issues


def _sample_pose(rng: random.Random, ws: Workspace, hw: float, hh: float) -> Pose2:
    margin = math.hypot(hw, hh)
    return Pose2(
        rng.uniform(margin, ws.width - margin),
        rng.uniform(margin, ws.height - margin),
        rng.uniform(-math.pi, math.pi),
    )


def _place_all(rng, ws, shapes, attempts_budget, cross_boxes=()) -> Arrangement:
    """Rejection-sample poses keeping MIN_GAP between same-arrangement
    footprints; against `cross_boxes` a pose must either overlap cleanly
    (an intended dependency) or keep MIN_GAP (no razor-thin near misses)."""
    placed: dict[int, Pose2] = {}
    boxes = []
    attempts = 0
    for obj in sorted(shapes):
        hw, hh = shapes[obj]
        while True:
            attempts += 1
            if attempts > attempts_budget:
                raise GenerationExhausted(
                    f"failed to place object {obj} after {attempts_budget} attempts"
                )
            pose = _sample_pose(rng, ws, hw, hh)
            box = box_at(pose, hw, hh)
            if not inside(ws, box):
                continue
            if any(boxes_closer_than(box, b, MIN_GAP) for b in boxes):
                continue
            if any(
                not overlaps(box, b) and boxes_closer_than(box, b, MIN_GAP)
                for b in cross_boxes
            ):
                continue
            placed[obj] = pose
            boxes.append(box)
            break
    return Arrangement(dict(placed))


def _gap_audit(inst: Instance) -> list[str]:
    """Reachable arrangements must never put two distinct live footprints
    closer than MIN_GAP without a full overlap (gripper finger room)."""
    issues = []
    sb = {i: box_at(inst.start.pose_of(i), *inst.shapes[i]) for i in inst.ids()}
    gb = {i: box_at(inst.goal.pose_of(i), *inst.shapes[i]) for i in inst.ids()}
    for group, boxes in (("start", sb), ("goal", gb)):
        ids = sorted(boxes)
        for k, i in enumerate(ids):
            for j in ids[k + 1 :]:
                if 0.0 < box_clearance(boxes[i], boxes[j]) < MIN_GAP:
                    issues.append(f"{group}: near-flush pair ({i}, {j})")
    for i in inst.ids():
        for j in inst.ids():
            if i == j:
                continue
            if not overlaps(gb[i], sb[j]) and box_clearance(gb[i], sb[j]) < MIN_GAP:
                issues.append(f"goal {i} nearly flush with start {j}")
    return issues


def gen_random(n: int, seed: int, workspace: Workspace | None = None) -> Instance:
    """Random start/goal configurations, both feasible by rejection sampling."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ws = workspace or Workspace()

    def build(s, attempt):
        rng = random.Random(("R", n, s, attempt).__repr__())
        shapes = {
            i: (rng.uniform(*RAND_HALF_RANGE), rng.uniform(*RAND_HALF_RANGE))
            for i in range(n)
        }
        start = _place_all(rng, ws, shapes, 10_000)
        start_boxes = [box_at(p, *shapes[i]) for i, p in start.on_table()]
        goal = _place_all(rng, ws, shapes, 10_000, cross_boxes=start_boxes)
        return Instance(ws, shapes, start, goal, f"R{n}", seed)

    return _audited(build, seed, _gap_audit)


def _ellipse_slots(cx, cy, a, b, n, phase=0.0) -> list[tuple[float, float]]:
    """n points equally spaced by arc length on an ellipse."""
    samples = 2048
    pts = []
    arc = [0.0]
    for k in range(samples + 1):
        t = phase + 2.0 * math.pi * k / samples
        pts.append((cx + a * math.cos(t), cy + b * math.sin(t)))
        if k:
            arc.append(arc[-1] + math.dist(pts[-2], pts[-1]))
    total = arc[-1]
    slots = []
    targets = [total * k / n for k in range(n)]
    idx = 0
    for tgt in targets:
        while arc[idx] < tgt:
            idx += 1
        slots.append(pts[idx])
    return slots


def _ring_half_range(slots, shift=OVERLAP_SHIFT) -> tuple[float, float]:
    """Half-extent range small enough that a ring construction on these slots
    keeps MIN_GAP between every non-overlapping footprint pair."""
    n = len(slots)
    goals = []
    for k in range(n):
        cur, nxt = slots[k], slots[(k + 1) % n]
        f = shift / math.dist(cur, nxt)
        goals.append((nxt[0] + (cur[0] - nxt[0]) * f, nxt[1] + (cur[1] - nxt[1]) * f))
    dmin = math.inf
    for i in range(n):
        for j in range(n):
            if i < j:
                dmin = min(dmin, math.dist(goals[i], goals[j]))
                dmin = min(dmin, math.dist(slots[i], slots[j]))
            if j != i and j != (i + 1) % n:
                dmin = min(dmin, math.dist(goals[i], slots[j]))
    h_max = min(0.045, (dmin - MIN_GAP - 0.014) / (2.0 * math.sqrt(2.0)))
    h_min = max(0.027, min(0.03, 0.85 * h_max))
    if h_max <= h_min:
        raise GenerationExhausted(f"ring slots too dense for graspable objects ({dmin=:.3f})")
    return h_min, h_max


def _ring_arrangements(rng, slots, shapes, ids):
    """Starts on the slots; each goal sits on the next slot, pulled back enough
    to guarantee footprint overlap with that slot's occupant."""
    n = len(ids)
    start = {}
    goal = {}
    for k, obj in enumerate(ids):
        sx, sy = slots[k]
        jx, jy = rng.uniform(-0.004, 0.004), rng.uniform(-0.004, 0.004)
        start[obj] = Pose2(sx + jx, sy + jy, rng.uniform(-0.3, 0.3))
    for k, obj in enumerate(ids):
        nxt = start[ids[(k + 1) % n]]
        cur = start[obj]
        d = math.dist(cur.xy, nxt.xy)
        f = OVERLAP_SHIFT / d
        goal[obj] = Pose2(
            nxt.x + (cur.x - nxt.x) * f,
            nxt.y + (cur.y - nxt.y) * f,
            rng.uniform(-0.3, 0.3),
        )
    return Arrangement(start), Arrangement(goal)


def _audited(builder, seed, audit, cap=50):
    last = "no attempt"
    for attempt in range(cap):
        try:
            inst = builder(seed, attempt)
        except GenerationExhausted as exc:
            last = str(exc)
            continue
        problems = _validate(inst)
        if not problems:
            problems = audit(inst)
        if not problems:
            return inst
        last = "; ".join(problems)
    raise GenerationExhausted(f"audit never passed: {last}")


def gen_single_cycle(n: int, seed: int, workspace: Workspace | None = None) -> Instance:
    """Configurations inducing exactly one simple n-cycle."""
    if n < 2:
        raise ValueError("single cycle needs n >= 2")
    ws = workspace or Workspace()

    def build(s, attempt):
        rng = random.Random(("S", n, s, attempt).__repr__())
        slots = _ellipse_slots(
            ws.width / 2, ws.height / 2, 0.36, 0.22, n, phase=rng.uniform(0, 2 * math.pi)
        )
        lo, hi = _ring_half_range(slots)
        shapes = {i: (rng.uniform(lo, hi), rng.uniform(lo, hi)) for i in range(n)}
        start, goal = _ring_arrangements(rng, slots, shapes, list(range(n)))
        return Instance(ws, shapes, start, goal, f"S{n}", seed)

    def audit(inst):
        d = decompose(inst.graph())
        ok = (
            len(d.cycles) == 1
            and sorted(d.cycles[0]) == inst.ids()
            and not d.chains
            and not d.isolated
            and not d.complex_sccs
            and not d.others
        )
        problems = [] if ok else [f"expected a single {n}-cycle, got {d}"]
        return problems + _gap_audit(inst)

    return _audited(build, seed, audit)


def gen_double_cycle(n: int, seed: int, workspace: Workspace | None = None) -> Instance:
    """Configurations inducing exactly two vertex-disjoint simple cycles."""
    if n < 4:
        raise ValueError("double cycle needs n >= 4")
    ws = workspace or Workspace()
    n1 = (n + 1) // 2
    n2 = n - n1

    def build(s, attempt):
        rng = random.Random(("D", n, s, attempt).__repr__())
        left = _ellipse_slots(0.26, ws.height / 2, 0.16, 0.16, n1, rng.uniform(0, 6.28))
        right = _ellipse_slots(0.74, ws.height / 2, 0.16, 0.16, n2, rng.uniform(0, 6.28))
        shapes = {}
        for ring, ids in ((left, range(n1)), (right, range(n1, n))):
            lo, hi = _ring_half_range(ring)
            for i in ids:
                shapes[i] = (rng.uniform(lo, hi), rng.uniform(lo, hi))
        s1, g1 = _ring_arrangements(rng, left, shapes, list(range(n1)))
        s2, g2 = _ring_arrangements(rng, right, shapes, list(range(n1, n)))
        start = Arrangement({**s1.poses, **s2.poses})
        goal = Arrangement({**g1.poses, **g2.poses})
        return Instance(ws, shapes, start, goal, f"D{n}", seed)

    def audit(inst):
        d = decompose(inst.graph())
        ok = (
            len(d.cycles) == 2
            and sorted(len(c) for c in d.cycles) == sorted((n1, n2))
            and not d.chains
            and not d.isolated
            and not d.complex_sccs
            and not d.others
        )
        problems = [] if ok else [f"expected cycles of {n1} and {n2}, got {d}"]
        return problems + _gap_audit(inst)

    return _audited(build, seed, audit)


def gen_mixed(seed: int, workspace: Workspace | None = None) -> Instance:
    """12 objects: 3 isolated, one 4-chain, one 2-cycle, one 3-cycle."""
    ws = workspace or Workspace()

    def build(s, attempt):
        rng = random.Random(("M", s, attempt).__repr__())
        ids = list(range(12))
        rng.shuffle(ids)
        chain_ids, ring_ids, swap_ids, iso_ids = (
            ids[0:4],
            ids[4:7],
            ids[7:9],
            ids[9:12],
        )
        shapes: Shapes = {}
        for i in chain_ids:
            shapes[i] = (rng.uniform(0.028, 0.038), rng.uniform(0.028, 0.038))
        for i in ring_ids:
            shapes[i] = (rng.uniform(0.028, 0.036), rng.uniform(0.028, 0.036))
        for i in swap_ids:
            shapes[i] = (rng.uniform(0.027, 0.032), rng.uniform(0.027, 0.032))
        for i in iso_ids:
            shapes[i] = (rng.uniform(0.027, 0.033), rng.uniform(0.027, 0.033))

        def jit(x, y, r=0.006):
            return (x + rng.uniform(-r, r), y + rng.uniform(-r, r))

        start: dict[int, Pose2] = {}
        goal: dict[int, Pose2] = {}

        def th():
            return rng.uniform(-0.25, 0.25)

        # Chain c0 -> c1 -> c2 -> c3 along a row of five slots.
        slots = [jit(0.07 + 0.16 * k, 0.09) for k in range(5)]
        for k, obj in enumerate(chain_ids):
            start[obj] = Pose2(*slots[k], th())
        for k, obj in enumerate(chain_ids[:-1]):
            nxt = start[chain_ids[k + 1]]
            cur = start[obj]
            f = OVERLAP_SHIFT / math.dist(cur.xy, nxt.xy)
            goal[obj] = Pose2(nxt.x + (cur.x - nxt.x) * f, nxt.y + (cur.y - nxt.y) * f, th())
        goal[chain_ids[-1]] = Pose2(*slots[4], th())

        # 3-cycle on a small ring.
        ring_slots = [
            jit(0.24 + 0.13 * math.cos(a), 0.41 + 0.13 * math.sin(a), 0.004)
            for a in (math.pi / 2, math.pi / 2 + 2 * math.pi / 3, math.pi / 2 + 4 * math.pi / 3)
        ]
        for k, obj in enumerate(ring_ids):
            start[obj] = Pose2(*ring_slots[k], th())
        for k, obj in enumerate(ring_ids):
            nxt = start[ring_ids[(k + 1) % 3]]
            cur = start[obj]
            f = OVERLAP_SHIFT / math.dist(cur.xy, nxt.xy)
            goal[obj] = Pose2(nxt.x + (cur.x - nxt.x) * f, nxt.y + (cur.y - nxt.y) * f, th())

        # 2-cycle: a side-by-side swap.
        p, q = swap_ids
        sp, sq = jit(0.50, 0.46), jit(0.72, 0.46)
        start[p], start[q] = Pose2(*sp, th()), Pose2(*sq, th())
        f = OVERLAP_SHIFT / math.dist(sp, sq)
        goal[p] = Pose2(sq[0] + (sp[0] - sq[0]) * f, sq[1] + (sp[1] - sq[1]) * f, th())
        goal[q] = Pose2(sp[0] + (sq[0] - sp[0]) * f, sp[1] + (sq[1] - sp[1]) * f, th())

        # Isolated objects: short hops in a reserved column, touching nothing.
        iso_start = [(0.945, 0.07), (0.945, 0.25), (0.945, 0.43)]
        iso_goal = [(0.86, 0.16), (0.86, 0.345), (0.86, 0.53)]
        for k, obj in enumerate(iso_ids):
            start[obj] = Pose2(*jit(*iso_start[k], 0.005), th())
            goal[obj] = Pose2(*jit(*iso_goal[k], 0.005), th())

        return Instance(ws, shapes, Arrangement(start), Arrangement(goal), f"M{seed}", seed)

    def audit(inst):
        d = decompose(inst.graph())
        ok = (
            len(d.isolated) == 3
            and len(d.chains) == 1
            and len(d.chains[0]) == 4
            and sorted(len(c) for c in d.cycles) == [2, 3]
            and not d.complex_sccs
            and not d.others
        )
        problems = [] if ok else [f"mixed structure audit failed: {d}"]
        return problems + _gap_audit(inst)

    return _audited(build, seed, audit)


def showcase9(workspace: Workspace | None = None) -> Instance:
    """Hand-placed 9-object fixture: a 4-cycle 0-1-2-3, a chain 6->5->4, a
    branch vertex 8 hanging off the cycle (edge 2->8), and isolated object 7."""
    ws = workspace or Workspace()
    h = (0.03, 0.03)
    shapes = {i: h for i in range(9)}
    start = {
        0: Pose2(0.18, 0.18),
        1: Pose2(0.38, 0.18),
        2: Pose2(0.38, 0.34),
        3: Pose2(0.18, 0.34),
        4: Pose2(0.60, 0.12),
        5: Pose2(0.74, 0.12),
        6: Pose2(0.88, 0.12),
        7: Pose2(0.88, 0.48),
        8: Pose2(0.27, 0.38),
    }
    goal = {
        0: Pose2(0.34, 0.18),
        1: Pose2(0.38, 0.30),
        2: Pose2(0.22, 0.34),
        3: Pose2(0.18, 0.22),
        4: Pose2(0.52, 0.24),
        5: Pose2(0.64, 0.12),
        6: Pose2(0.78, 0.12),
        7: Pose2(0.74, 0.48),
        8: Pose2(0.55, 0.45),
    }
    return Instance(ws, shapes, Arrangement(start), Arrangement(goal), "X9", 0)


def identity_instance(n: int = 3, seed: int = 0) -> Instance:
    """Start equals goal: nothing to do."""
    inst = gen_random(n, seed)
    return Instance(
        inst.workspace, inst.shapes, inst.start, inst.start.copy(), f"I{n}", seed
    )


def default_suite() -> list[Instance]:
    """The benchmark suite: 200 instances across R/S/D/M."""
    suite = []
    for n in (4, 6, 8, 10, 12):
        for seed in range(12):
            suite.append(gen_random(n, seed * 131 + n))
    for n in range(2, 11):
        for seed in range(5):
            suite.append(gen_single_cycle(n, seed))
    for n in range(4, 13):
        for seed in range(5):
            suite.append(gen_double_cycle(n, seed))
    for seed in range(50):
        suite.append(gen_mixed(seed))
    return suite


def dumps(inst: Instance) -> str:
    lines = [
        INSTANCE_FORMAT,
        f"label {inst.label}",
        f"seed {inst.seed}",
        f"workspace {inst.workspace.width!r} {inst.workspace.height!r}",
        f"objects {inst.n}",
    ]
    for i in inst.ids():
        hw, hh = inst.shapes[i]
        s = inst.start.pose_of(i)
        g = inst.goal.pose_of(i)
        lines.append(
            f"{i} {hw!r} {hh!r} {s.x!r} {s.y!r} {s.theta!r} {g.x!r} {g.y!r} {g.theta!r}"
        )
    return "\n".join(lines) + "\n"


def save(inst: Instance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(inst))


def loads(text: str, source: str = "<string>") -> Instance:
    lines = text.splitlines()

    def fail(lineno, msg):
        raise ParseError(f"{source}:{lineno}: {msg}")

    if not lines or lines[0].strip() != INSTANCE_FORMAT:
        fail(1, f"expected header {INSTANCE_FORMAT!r}")
    header: dict[str, list[str]] = {}
    body_start = None
    for k, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts:
            continue
        if parts[0] in ("label", "seed", "workspace", "objects"):
            header[parts[0]] = parts[1:]
            if parts[0] == "objects":
                body_start = k
                break
        else:
            fail(k, f"unexpected field {parts[0]!r}")
    for key in ("label", "seed", "workspace", "objects"):
        if key not in header:
            fail(body_start or len(lines), f"missing {key!r} field")
    try:
        seed = int(header["seed"][0])
        n = int(header["objects"][0])
        ws = Workspace(float(header["workspace"][0]), float(header["workspace"][1]))
    except (ValueError, IndexError) as exc:
        fail(body_start or 1, f"bad header value: {exc}")
    label = header["label"][0]

    shapes: Shapes = {}
    start: dict[int, Pose2] = {}
    goal: dict[int, Pose2] = {}
    rows = 0
    for k, raw in enumerate(lines[body_start:], start=body_start + 1):
        if not raw.strip():
            continue
        parts = raw.split()
        if len(parts) != 9:
            fail(k, f"expected 9 fields, got {len(parts)}")
        try:
            obj = int(parts[0])
            vals = [float(v) for v in parts[1:]]
        except ValueError as exc:
            fail(k, f"bad numeric field: {exc}")
        if obj in shapes:
            fail(k, f"duplicate object id {obj}")
        shapes[obj] = (vals[0], vals[1])
        start[obj] = Pose2(vals[2], vals[3], vals[4])
        goal[obj] = Pose2(vals[5], vals[6], vals[7])
        rows += 1
    if rows != n:
        raise ParseError(f"{source}: object table has {rows} rows, header says {n}")
    inst = Instance(ws, shapes, Arrangement(start), Arrangement(goal), label, seed)
    problems = _validate(inst)
    if problems:
        raise FeasibilityError(f"{source}: " + "; ".join(problems))
    return inst


def load(path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), source=str(path))
