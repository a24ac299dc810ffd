"""Command line entry point: ``cdimlab <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .runner import ExperimentConfig, RunRecord, get_space, run_sweep

SUBCOMMANDS = ("space", "cover", "modulus", "weights", "recursion", "cylinders", "sweep", "report")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--jobs", type=int, help="worker count for sweep cells")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--cache", type=Path, help="directory for cached spaces")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="cdimlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("space", parents=[common], help="build (or load) the model space")
    sub.add_parser("cover", parents=[common], help="build covers and export them as CSV")
    sub.add_parser("modulus", parents=[common], help="solve the configured (p, n) cells")
    sub.add_parser("weights", parents=[common], help="calibrate and check the paper weights")
    sub.add_parser("recursion", parents=[common], help="evaluate the simplified recursion")
    cyl = sub.add_parser("cylinders", parents=[common], help="tree of cylinders of a graph of groups")
    cyl.add_argument("--gog", type=Path, help="graph-of-groups JSON (default: two-vertex example)")
    cyl.add_argument("--base", default=None)
    cyl.add_argument("--depth", type=int, default=2)
    cyl.add_argument("--cap", type=int, default=4)
    sub.add_parser("sweep", parents=[common], help="all stages plus report")
    rep = sub.add_parser("report", parents=[common], help="report from a saved run summary")
    rep.add_argument("--record", type=Path, help="run_summary.json to render")
    rep.add_argument("--acceptance", nargs="*", default=None,
                     help="also run the desk-scale acceptance checks (optionally by key)")
    return ap


def _config(args) -> ExperimentConfig:
    d = json.loads(args.config.read_text()) if args.config else {}
    for k in ("seed", "jobs"):
        if getattr(args, k) is not None:
            d[k] = getattr(args, k)
    for k in ("out", "cache"):
        if getattr(args, k) is not None:
            d[k] = str(getattr(args, k))
    return ExperimentConfig.from_dict(d)


def _finish(rec: RunRecord, out: Path, acceptance=None) -> int:
    from .report import emit_report
    paths = emit_report(rec, out, acceptance)
    for k, v in sorted(rec.checks.items()):
        print(f"[{'PASS' if v else 'FAIL'}] {k}")
    for r in acceptance or []:
        print(r.line())
    print(f"wrote {len(paths)} files to {out}")
    ok = rec.passed and all(r.passed for r in acceptance or [])
    return 0 if ok else 1


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    cmd = args.command

    if cmd == "cylinders":
        from .gog import (compute_cylinders, expand_bass_serre, figure3_example, load_gog,
                          tree_of_cylinders)
        gog = load_gog(args.gog) if args.gog else figure3_example()
        base = args.base or next(iter(gog.vertices))
        t = expand_bass_serre(gog, base, args.depth, args.cap)
        toc = tree_of_cylinders(t, compute_cylinders(t))
        out = args.out or Path("out")
        out.mkdir(parents=True, exist_ok=True)
        (out / "truncation.txt").write_text(t.edge_list_text())
        (out / "truncation.dot").write_text(t.to_dot())
        (out / "tree_of_cylinders.txt").write_text(toc.edge_list_text())
        (out / "tree_of_cylinders.dot").write_text(toc.to_dot())
        chk = toc.checks()
        print(json.dumps({"orbit_classes": toc.orbit_classes(), "checks": chk}, indent=2))
        return 0 if all(chk.values()) else 1

    if cmd == "report":
        rec = None
        if args.record:
            rec = RunRecord.from_json(args.record.read_text())
        acc = None
        if args.acceptance is not None:
            from .acceptance import run_all
            acc = run_all(keys=args.acceptance or None, echo=None)
        if rec is None:
            rec = RunRecord(config_hash="", config={}, started="")
        return _finish(rec, args.out or Path("out"), acc)

    cfg = _config(args)
    out = Path(cfg.out)

    if cmd == "space":
        s = get_space(cfg)
        out.mkdir(parents=True, exist_ok=True)
        (out / "space_edges.txt").write_text(s.edge_list_text())
        print(json.dumps({"key": s.content_hash(), "circles": s.n_circles, "nodes": s.n_nodes,
                          "total_length": s.total_length()}, indent=2))
        return 0

    if cmd == "cover":
        from .cover import build_cover
        s = get_space(cfg)
        out.mkdir(parents=True, exist_ok=True)
        ok = True
        for n in cfg.n_range:
            c = build_cover(s, int(n))
            c.write_csv(out / f"cover_{n}_centers.csv", out / f"cover_{n}_nerve.csv")
            chk = c.check()
            ok &= chk["separated"] and chk["covering"] and chk["nerve_symmetric"]
            print(json.dumps({"n": n, "sets": c.size, **chk}))
        return 0 if ok else 1

    stages = {"modulus": ("solver",), "weights": ("weights",), "recursion": ("recursion",),
              "sweep": ("solver", "weights", "recursion")}[cmd]
    rec = run_sweep(cfg, stages=stages)
    return _finish(rec, out)


if __name__ == "__main__":
    sys.exit(main())
