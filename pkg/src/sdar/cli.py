"""Command-line front end: generate suites, plan instances, run benchmark
sweeps, and render scenes, dependency graphs, and trace animations.

Exit codes: 0 success, 1 planning failure, 2 input error.  Numeric defaults
can be overridden with SDAR_<FLAG> environment variables (e.g. SDAR_SEED,
SDAR_CLEARANCE, SDAR_DT, SDAR_K_BUFFERS, SDAR_JOBS).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import baseline, instances, sim
from .depgraph import footprint, to_dot
from .geom import Pose2
from .instances import FeasibilityError, GenerationExhausted, Instance, ParseError
from .motion import DEFAULT_CLEARANCE, DT, K_BUFFERS, default_arms

CSV_HEADER = (
    "instance,category,n,actions,oracle_actions,oracle_assumption,ratio,"
    "sync_steps,buffers_used,makespan,sequential_makespan,"
    "fb_synchronous,fb_untangled,fb_sequential,success,verified"
)


def _env(name: str, cast, default):
    raw = os.environ.get(f"SDAR_{name}")
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError:
        print(f"warning: ignoring SDAR_{name}={raw!r}", file=sys.stderr)
        return default


def _add_motion_flags(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=_env("SEED", int, 0))
    p.add_argument("--clearance", type=float, default=_env("CLEARANCE", float, DEFAULT_CLEARANCE))
    p.add_argument("--dt", type=float, default=_env("DT", float, DT))
    p.add_argument("--k-buffers", type=int, default=_env("K_BUFFERS", int, K_BUFFERS))


# ------------------------------------------------------------------- gen


def cmd_gen(args) -> int:
    out = Path(args.out)
    written = []
    try:
        if args.category == "default":
            for inst in instances.default_suite():
                path = out / inst.category / _suite_name(inst)
                path.parent.mkdir(parents=True, exist_ok=True)
                instances.save(inst, path)
                written.append(path)
        else:
            for k in range(args.count):
                seed = args.seed + k
                inst = _generate(args.category, args.n, seed)
                path = out / inst.category / _suite_name(inst)
                path.parent.mkdir(parents=True, exist_ok=True)
                instances.save(inst, path)
                written.append(path)
    except GenerationExhausted as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    print(f"wrote {len(written)} instance file(s) under {out}")
    return 0


def _generate(category: str, n, seed: int) -> Instance:
    if category == "M":
        return instances.gen_mixed(seed)
    if n is None:
        raise GenerationExhausted(f"category {category} requires an object count")
    if category == "R":
        return instances.gen_random(n, seed)
    if category == "S":
        return instances.gen_single_cycle(n, seed)
    if category == "D":
        return instances.gen_double_cycle(n, seed)
    raise GenerationExhausted(f"unknown category {category!r}")


def _suite_name(inst: Instance) -> str:
    return f"{inst.label}_{inst.seed:04d}.inst"


# ------------------------------------------------------------------ plan


def cmd_plan(args) -> int:
    try:
        inst = instances.load(args.instance)
    except (ParseError, FeasibilityError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    arms = default_arms(inst.workspace, clearance=args.clearance)
    t0 = time.perf_counter()
    metrics, record = sim.run_instance(
        inst, args.seed, arms, dt=args.dt, k_buffers=args.k_buffers
    )
    elapsed = time.perf_counter() - t0
    if args.trace_out:
        sim.save_trace(record.trace, args.trace_out)
    ok, msg = sim.verify_trace(record.trace, inst)
    print(f"instance   {inst.label} (n={inst.n}, seed {args.seed})")
    print(f"success    {metrics.success}")
    print(f"actions    {metrics.actions}")
    print(f"buffers    {metrics.buffers_used}")
    print(f"sub-tasks  {metrics.sync_steps}")
    print(f"makespan   {metrics.makespan:.4f}")
    print(f"fallbacks  {metrics.fallback_counts}")
    print(f"verified   {ok} ({msg})")
    print(f"plan time  {elapsed:.3f}s")
    if not metrics.success:
        print(f"failure    {metrics.failure}", file=sys.stderr)
        return 1
    return 0 if ok else 1


# ----------------------------------------------------------------- bench


def _bench_one(payload):
    path, seed, clearance, dt, k_buffers = payload
    inst = instances.load(path)
    arms = default_arms(inst.workspace, clearance=clearance)
    t0 = time.perf_counter()
    metrics, record = sim.run_instance(inst, seed, arms, dt=dt, k_buffers=k_buffers)
    elapsed = time.perf_counter() - t0
    verified, _ = sim.verify_trace(record.trace, inst)
    try:
        oracle = baseline.single_arm_optimal_actions(inst)
        oracle_actions = oracle.single_arm_optimal_actions
        assumption = oracle.assumption_holds
    except baseline.BudgetExceeded:
        oracle_actions, assumption = -1, False
    seq_makespan = float("nan")
    if metrics.success:
        forced, _ = sim.run_instance(
            inst, seed, arms, dt=dt, k_buffers=k_buffers,
            force_sequential=True, forced_subs=record.subs,
        )
        if forced.success:
            seq_makespan = forced.makespan
    fb = metrics.fallback_counts
    ratio = oracle_actions / metrics.actions if metrics.actions and oracle_actions > 0 else float("nan")
    row = (
        f"{Path(path).stem},{inst.category},{inst.n},{metrics.actions},"
        f"{oracle_actions},{int(assumption)},{ratio:.6f},"
        f"{metrics.sync_steps},{metrics.buffers_used},{metrics.makespan:.9f},"
        f"{seq_makespan:.9f},{fb.get('synchronous', 0)},{fb.get('untangled', 0)},"
        f"{fb.get('sequential', 0)},{int(metrics.success)},{int(verified)}"
    )
    return {
        "name": Path(path).stem,
        "category": inst.category,
        "row": row,
        "trace": sim.dumps_trace(record.trace),
        "success": metrics.success and verified,
        "ratio": ratio if assumption and metrics.success else None,
        "saving": (1.0 - metrics.makespan / seq_makespan)
        if metrics.success and seq_makespan == seq_makespan and seq_makespan > 0
        else None,
        "elapsed": elapsed,
    }


def cmd_bench(args) -> int:
    suite_dir = Path(args.suite)
    paths = sorted(suite_dir.rglob("*.inst"))
    if not paths:
        print(f"no .inst files under {suite_dir}", file=sys.stderr)
        return 2
    payloads = [(str(p), args.seed, args.clearance, args.dt, args.k_buffers) for p in paths]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_bench_one, payloads))
    else:
        results = [_bench_one(p) for p in payloads]
    results.sort(key=lambda r: r["name"])

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in results:
            fh.write(r["row"] + "\n")
    if args.traces:
        tdir = Path(args.traces)
        tdir.mkdir(parents=True, exist_ok=True)
        for r in results:
            (tdir / f"{r['name']}.trace").write_text(r["trace"], encoding="utf-8")

    print(f"wrote {out} ({len(results)} instances)")
    for cat in sorted({r["category"] for r in results}):
        rows = [r for r in results if r["category"] == cat]
        succ = sum(1 for r in rows if r["success"]) / len(rows)
        ratios = [r["ratio"] for r in rows if r["ratio"] is not None]
        savings = [r["saving"] for r in rows if r["saving"] is not None]
        mean_ratio = sum(ratios) / len(ratios) if ratios else float("nan")
        mean_saving = sum(savings) / len(savings) if savings else float("nan")
        mean_t = sum(r["elapsed"] for r in rows) / len(rows)
        print(
            f"  {cat}: {len(rows):3d} instances, success {succ:6.1%}, "
            f"mean action ratio {mean_ratio:.3f}, mean makespan saving {mean_saving:.1%}, "
            f"mean plan time {mean_t:.3f}s"
        )
    failures = [r["name"] for r in results if not r["success"]]
    if failures:
        print(f"failures: {failures}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------- render


_SVG_SCALE = 800.0


def _svg_open(ws) -> list[str]:
    w = ws.width * _SVG_SCALE
    h = ws.height * _SVG_SCALE
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {w:.0f} {h:.0f}">',
        f'<rect x="0" y="0" width="{w:.0f}" height="{h:.0f}" fill="#f8f8f4" '
        'stroke="#444" stroke-width="2"/>',
    ]


def _svg_pt(ws, p) -> tuple[float, float]:
    return p[0] * _SVG_SCALE, (ws.height - p[1]) * _SVG_SCALE


def _svg_box(ws, box, fill, stroke, dash="", opacity=1.0, label=None) -> str:
    pts = " ".join(f"{x:.1f},{y:.1f}" for x, y in (_svg_pt(ws, c) for c in box.corners()))
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    svg = (
        f'<polygon points="{pts}" fill="{fill}" stroke="{stroke}" '
        f'stroke-width="1.5" opacity="{opacity}"{extra}/>'
    )
    if label is not None:
        cx, cy = _svg_pt(ws, box.center.xy)
        svg += (
            f'<text x="{cx:.1f}" y="{cy + 5:.1f}" font-size="16" text-anchor="middle" '
            f'fill="#222">{label}</text>'
        )
    return svg


_PALETTE = [
    "#7db8da", "#e8a87c", "#a8d5a2", "#d5a2c8", "#e8d87c",
    "#9aa7e8", "#e87c7c", "#7cd8ce", "#c8b49a", "#b4e87c",
]


def render_scene(inst: Instance, which: str) -> str:
    """SVG panel for the start or goal arrangement; the goal panel shows the
    start footprints as white outlines for reference."""
    ws = inst.workspace
    parts = _svg_open(ws)
    if which == "goal":
        for i in inst.ids():
            parts.append(
                _svg_box(ws, footprint(i, inst.start.pose_of(i), inst.shapes),
                         "white", "#999", dash="4 3")
            )
    arr = inst.goal if which == "goal" else inst.start
    for i in inst.ids():
        parts.append(
            _svg_box(ws, footprint(i, arr.pose_of(i), inst.shapes),
                     _PALETTE[i % len(_PALETTE)], "#333", label=i)
        )
    parts.append("</svg>")
    return "\n".join(parts)


def render_frame(inst: Instance, table, ee, carried, arms) -> str:
    ws = inst.workspace
    parts = _svg_open(ws)
    for i in inst.ids():
        parts.append(
            _svg_box(ws, footprint(i, inst.goal.pose_of(i), inst.shapes),
                     "none", "#bbb", dash="3 3")
        )
    for i, pose in sorted(table.items()):
        parts.append(
            _svg_box(ws, footprint(i, pose, inst.shapes),
                     _PALETTE[i % len(_PALETTE)], "#333", label=i)
        )
    for a in (0, 1):
        bx, by = _svg_pt(ws, arms[a].base)
        ex, ey = _svg_pt(ws, ee[a])
        parts.append(
            f'<line x1="{bx:.1f}" y1="{by:.1f}" x2="{ex:.1f}" y2="{ey:.1f}" '
            'stroke="#555" stroke-width="4" stroke-linecap="round" opacity="0.7"/>'
        )
        r = arms[a].ee_radius * _SVG_SCALE
        fill = "#d04040" if carried[a] is not None else "#6080d0"
        parts.append(f'<circle cx="{ex:.1f}" cy="{ey:.1f}" r="{r:.1f}" fill="{fill}"/>')
        if carried[a] is not None:
            obj = carried[a]
            hw, hh = inst.shapes[obj]
            box = footprint(obj, Pose2(ee[a][0], ee[a][1], 0.0), inst.shapes)
            parts.append(_svg_box(ws, box, _PALETTE[obj % len(_PALETTE)], "#d04040",
                                  opacity=0.8, label=obj))
    parts.append("</svg>")
    return "\n".join(parts)


def cmd_render(args) -> int:
    path = Path(args.path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        head = path.read_text(encoding="utf-8").splitlines()[0].strip()
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2

    if head == instances.INSTANCE_FORMAT:
        try:
            inst = instances.load(path)
        except (ParseError, FeasibilityError) as exc:
            print(f"input error: {exc}", file=sys.stderr)
            return 2
        (out / "start.svg").write_text(render_scene(inst, "start"), encoding="utf-8")
        (out / "goal.svg").write_text(render_scene(inst, "goal"), encoding="utf-8")
        (out / "depgraph.dot").write_text(to_dot(inst.graph()), encoding="utf-8")
        print(f"wrote start.svg, goal.svg, depgraph.dot under {out}")
        return 0

    if head == sim.TRACE_FORMAT:
        if not args.instance:
            print("trace rendering needs --instance", file=sys.stderr)
            return 2
        try:
            inst = instances.load(args.instance)
            trace = sim.load_trace(path)
        except (ParseError, FeasibilityError, ValueError) as exc:
            print(f"input error: {exc}", file=sys.stderr)
            return 2
        arms = trace.arms
        count = 0
        for k, (table, ee, carried) in enumerate(sim.iterate_frames(trace, inst)):
            frame = render_frame(inst, table, ee, carried, arms)
            (out / f"frame_{k:05d}.svg").write_text(frame, encoding="utf-8")
            count += 1
        print(f"wrote {count} frames under {out}")
        return 0

    print(f"input error: unrecognized file header {head!r}", file=sys.stderr)
    return 2


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdar", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate instance files")
    g.add_argument("category", choices=["R", "S", "D", "M", "default"])
    g.add_argument("n", type=int, nargs="?", default=None, help="object count (R/S/D)")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=_env("SEED", int, 0))
    g.add_argument("--out", default="suites")
    g.set_defaults(func=cmd_gen)

    pl = sub.add_parser("plan", help="plan and execute one instance")
    pl.add_argument("instance")
    pl.add_argument("--trace-out", default=None)
    _add_motion_flags(pl)
    pl.set_defaults(func=cmd_plan)

    b = sub.add_parser("bench", help="run a benchmark sweep over a suite directory")
    b.add_argument("suite")
    b.add_argument("--out", default="report.csv")
    b.add_argument("--traces", default=None, help="directory for per-instance traces")
    b.add_argument("--jobs", type=int, default=_env("JOBS", int, 1))
    _add_motion_flags(b)
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("render", help="render scenes, graphs, or trace frames")
    r.add_argument("path", help="an .inst file or a trace file")
    r.add_argument("--instance", default=None, help="instance file (for traces)")
    r.add_argument("--out", default="render")
    r.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
