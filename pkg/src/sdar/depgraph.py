"""Dependency graph construction and structural decomposition.

An edge (i -> j) means object i cannot be placed at its goal until object j has
left its current pose.  The decomposition feeds the task planner: vertices with
zero out-degree are movable immediately, chains impose a strict order, cycles
need a swap (length 2) or one buffer relocation (length >= 3).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .geom import OrientedBox, Pose2, Workspace, box_at, inside, overlaps


class InfeasibleArrangement(Exception):
    pass


@dataclass(frozen=True)
class Held:
    """Placement marker for an object carried by an arm (1 or 2)."""

    arm: int


Placement = Pose2 | Held

Shapes = dict[int, tuple[float, float]]


@dataclass
class Arrangement:
    """Full assignment of object ids to table poses (or a carrying arm)."""

    poses: dict[int, Placement]

    def ids(self) -> list[int]:
        return sorted(self.poses)

    def on_table(self) -> list[tuple[int, Pose2]]:
        return [(i, p) for i, p in sorted(self.poses.items()) if isinstance(p, Pose2)]

    def pose_of(self, obj: int) -> Pose2:
        p = self.poses[obj]
        if not isinstance(p, Pose2):
            raise KeyError(f"object {obj} is held, not on the table")
        return p

    def copy(self) -> "Arrangement":
        return Arrangement(dict(self.poses))


def footprint(obj: int, pose: Pose2, shapes: Shapes) -> OrientedBox:
    hw, hh = shapes[obj]
    return box_at(pose, hw, hh)


def arrangement_violations(
    arr: Arrangement, shapes: Shapes, workspace: Workspace
) -> list[str]:
    """All feasibility violations: overlap pairs, out-of-workspace, arm double-holds."""
    issues = []
    table = arr.on_table()
    boxes = [(i, footprint(i, p, shapes)) for i, p in table]
    for idx, (i, bi) in enumerate(boxes):
        if not inside(workspace, bi):
            issues.append(f"object {i} outside workspace")
        for j, bj in boxes[idx + 1 :]:
            if overlaps(bi, bj):
                issues.append(f"objects {i} and {j} overlap")
    held_arms = [p.arm for p in arr.poses.values() if isinstance(p, Held)]
    for arm in set(held_arms):
        if held_arms.count(arm) > 1:
            issues.append(f"arm {arm} holds more than one object")
    return issues


def check_feasible(arr: Arrangement, shapes: Shapes, workspace: Workspace) -> None:
    issues = arrangement_violations(arr, shapes, workspace)
    if issues:
        raise InfeasibleArrangement("; ".join(issues))


@dataclass(frozen=True)
class DepGraph:
    vertices: tuple[int, ...]
    edges: frozenset[tuple[int, int]]

    @property
    def n(self) -> int:
        return len(self.vertices)

    def out_neighbors(self, v: int) -> set[int]:
        return {j for i, j in self.edges if i == v}

    def in_neighbors(self, v: int) -> set[int]:
        return {i for i, j in self.edges if j == v}

    def successors(self) -> dict[int, list[int]]:
        succ: dict[int, list[int]] = {v: [] for v in self.vertices}
        for i, j in sorted(self.edges):
            succ[i].append(j)
        return succ


def build_dependency_graph(
    start: Arrangement,
    goal: Arrangement,
    shapes: Shapes,
    workspace: Workspace,
    check: bool = True,
) -> DepGraph:
    """Edge set from pairwise goal-vs-current overlap tests (no self-edges)."""
    if set(start.poses) != set(goal.poses):
        raise InfeasibleArrangement("start and goal arrangements cover different ids")
    if check:
        check_feasible(start, shapes, workspace)
        check_feasible(goal, shapes, workspace)
    start_boxes = {i: footprint(i, p, shapes) for i, p in start.on_table()}
    goal_boxes = {i: footprint(i, p, shapes) for i, p in goal.on_table()}
    edges = set()
    for i, gb in goal_boxes.items():
        for j, sb in start_boxes.items():
            if i != j and overlaps(gb, sb):
                edges.add((i, j))
    return DepGraph(tuple(sorted(start.poses)), frozenset(edges))


@dataclass
class Decomposition:
    movable_now: list[int]
    isolated: list[int]
    chains: list[list[int]]
    cycles: list[list[int]]
    complex_sccs: list[list[int]]
    others: list[int] = field(default_factory=list)


def _tarjan_sccs(g: DepGraph) -> list[list[int]]:
    """Iterative Tarjan; components returned sorted by smallest member."""
    succ = g.successors()
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    counter = 0
    sccs: list[list[int]] = []

    for root in g.vertices:
        if root in index:
            continue
        work = [(root, iter(succ[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ[w])))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                sccs.append(sorted(comp))
    return sorted(sccs, key=lambda c: c[0])


def _cycle_order(component: list[int], g: DepGraph) -> list[int]:
    """Vertices of a simple-cycle SCC listed so consecutive pairs are edges."""
    members = set(component)
    succ_in = {
        v: next(j for j in sorted(g.out_neighbors(v)) if j in members) for v in component
    }
    start = min(component)
    order = [start]
    cur = succ_in[start]
    while cur != start:
        order.append(cur)
        cur = succ_in[cur]
    return order


def decompose(g: DepGraph) -> Decomposition:
    out_deg = {v: 0 for v in g.vertices}
    in_deg = {v: 0 for v in g.vertices}
    for i, j in g.edges:
        out_deg[i] += 1
        in_deg[j] += 1

    sccs = _tarjan_sccs(g)
    cycles: list[list[int]] = []
    complex_sccs: list[list[int]] = []
    big_scc_members: set[int] = set()
    for comp in sccs:
        if len(comp) < 2:
            continue
        members = set(comp)
        big_scc_members |= members
        intra = sum(1 for i, j in g.edges if i in members and j in members)
        if intra == len(comp):
            cycles.append(_cycle_order(comp, g))
        else:
            complex_sccs.append(comp)

    eligible = {
        v
        for v in g.vertices
        if v not in big_scc_members and in_deg[v] <= 1 and out_deg[v] <= 1
    }
    succ_path: dict[int, int] = {}
    pred_path: dict[int, int] = {}
    for i, j in g.edges:
        if i in eligible and j in eligible:
            succ_path[i] = j
            pred_path[j] = i
    chains = []
    for head in sorted(v for v in eligible if v not in pred_path):
        path = [head]
        cur = head
        while cur in succ_path:
            cur = succ_path[cur]
            path.append(cur)
        if len(path) >= 2:
            chains.append(path)

    chain_members = {v for c in chains for v in c}
    isolated = sorted(v for v in g.vertices if in_deg[v] == 0 and out_deg[v] == 0)
    classified = big_scc_members | chain_members | set(isolated)
    others = sorted(v for v in g.vertices if v not in classified)
    movable = sorted(v for v in g.vertices if out_deg[v] == 0)
    return Decomposition(movable, isolated, chains, cycles, complex_sccs, others)


def to_dot(g: DepGraph, name: str = "dg") -> str:
    """DOT export, one `i -> j;` line per edge."""
    lines = [f"digraph {name} {{"]
    for v in g.vertices:
        lines.append(f"  {v};")
    for i, j in sorted(g.edges):
        lines.append(f"  {i} -> {j};")
    lines.append("}")
    return "\n".join(lines) + "\n"
