"""``lawshield`` command line: train, run, check-trace, render.

Exit codes: 0 compliant / success, 1 violation (or collision) found,
2 usage or configuration error. ``LAWSHIELD_LOG`` sets the log level
(e.g. ``debug``, ``info``; default ``warning``).
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .audit import audit_trace
from .law_dsl import LawError, load_law
from .render import write_svg
from .rl_agent import QTable, train
from .simulator import (DATA_DIR, MODES, ScriptExhaustedError, SimulationError, builtin_law,
                        load_scenario, perturb_scenario, run_episode)
from .trace_csv import TraceSchemaError, read_trace, write_trace
from .world import PredicateError

log = logging.getLogger("lawshield")

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class ConfigError(Exception):
    pass


def _setup_logging() -> None:
    level = os.environ.get("LAWSHIELD_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def resolve_scenario(name: str, law_arg: str | None = None):
    law = resolve_law(law_arg) if law_arg else None
    p = Path(name)
    if not p.is_file():
        p = DATA_DIR / "scenarios" / f"{name}.json"
    if not p.is_file():
        raise ConfigError(f"scenario not found: {name}")
    return load_scenario(p, law)


def resolve_law(name: str):
    p = Path(name)
    if p.is_file():
        return load_law(p)
    if (DATA_DIR / "laws" / f"{name}.law").exists():
        return builtin_law(name)
    raise ConfigError(f"law file not found: {name}")


def _load_qtable(path: str | None, mode: str) -> QTable | None:
    if mode == "backup-only":
        return None
    if not path:
        raise ConfigError(f"mode {mode!r} needs --qtable")
    if not Path(path).is_file():
        raise ConfigError(f"q-table not found: {path}")
    return QTable.load(path)


# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    sc = resolve_scenario(args.scenario)
    if args.episodes < 0:
        raise ConfigError("--episodes must be non-negative")
    if args.episodes == 0:
        log.warning("0 training episodes: writing an empty table (default action everywhere)")
        print("warning: 0 episodes, the table is empty", file=sys.stderr)
    curve: list = []
    table = train(sc, args.episodes, seed=args.seed, curve=curve)
    out = Path(args.out or f"{sc.name}.qtable")
    out.parent.mkdir(parents=True, exist_ok=True)
    table.save(out)
    curve_path = out.with_suffix(".curve.csv")
    with open(curve_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "epsilon", "return"])
        for ep, eps, ret in curve:
            w.writerow([ep, repr(eps), repr(ret)])
    print(f"trained {args.episodes} episodes on {sc.name}: {len(table)} states -> {out}")
    return EXIT_OK


def _episode_row(result, seed) -> dict:
    return {"seed": seed, "violations": result.violations,
            "first_violation": "" if result.first_violation is None else result.first_violation,
            "collision": int(result.collision), "mean_speed": f"{result.mean_speed:.4f}",
            **{f"steps_{k}": v for k, v in result.tag_counts().items()}}


def _batch_job(job):
    scenario, law_arg, qtable_path, mode, seed = job
    sc = resolve_scenario(scenario, law_arg)
    q = _load_qtable(qtable_path, mode)
    return _episode_row(run_episode(perturb_scenario(sc, seed), q, mode), seed)


def _write_candidates(path: Path, decisions) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t", "index", "p_lat", "p_lon", "safe", "legal", "cost", "chosen"])
        for d in decisions:
            for c in d.candidates or ():
                chosen = d.target is not None and tuple(c.target) == tuple(d.target)
                w.writerow([d.step, repr(d.t), c.index, c.target[0], repr(float(c.target[1])),
                            int(bool(c.safe)), int(bool(c.legal)),
                            "" if c.cost is None else repr(c.cost), int(chosen)])


def cmd_run(args) -> int:
    if args.mode not in MODES:
        raise ConfigError(f"--mode must be one of {', '.join(MODES)}")
    sc = resolve_scenario(args.scenario, args.law)
    q = _load_qtable(args.qtable, args.mode)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)

    if args.batch:
        if args.batch < 1:
            raise ConfigError("--batch must be positive")
        base = args.seed or 0
        jobs = [(args.scenario, args.law, args.qtable, args.mode, base + i) for i in range(args.batch)]
        with ProcessPoolExecutor() as pool:
            rows = list(pool.map(_batch_job, jobs))
        path = out / "batch.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
        bad = [r for r in rows if r["violations"] or r["collision"]]
        print(f"{len(rows)} episodes, {len(bad)} with violations or collisions -> {path}")
        return EXIT_VIOLATION if bad else EXIT_OK

    if args.seed is not None:
        sc = perturb_scenario(sc, args.seed)
    result = run_episode(sc, q, args.mode, dump_candidates=args.dump_candidates)
    law_ok = result.audit.step_ok if result.audit is not None else None
    write_trace(out / "trace.csv", result.trace, law_ok=law_ok, prescribed=sc.prescribed,
                decisions=result.decisions)
    if args.dump_candidates:
        _write_candidates(out / "candidates.csv", result.decisions)
    if args.render:
        write_svg(out / "trace.svg", result.trace,
                  result.decisions if args.dump_candidates else (), f"{sc.name} ({args.mode})")
    counts = ", ".join(f"{k}={v}" for k, v in result.tag_counts().items())
    print(f"{sc.name} [{args.mode}] steps={len(result.trace) - 1} mean_speed={result.mean_speed:.2f} "
          f"{counts}")
    if result.audit is not None:
        print(result.audit.summary())
    if result.collision:
        print(f"collision at t={result.trace.last.t:.1f} s")
    return EXIT_VIOLATION if result.violations or result.collision else EXIT_OK


def cmd_check_trace(args) -> int:
    loaded = read_trace(args.trace)
    if not args.law:
        raise ConfigError("check-trace needs at least one --law")
    violated = False
    for name in args.law:
        law = resolve_law(name)
        report = audit_trace(law, loaded.trace, loaded.prescribed)
        print(report.summary())
        violated |= not report.satisfied
    return EXIT_VIOLATION if violated else EXIT_OK


def cmd_render(args) -> int:
    loaded = read_trace(args.trace)
    out = Path(args.out or Path(args.trace).with_suffix(".svg"))
    write_svg(out, loaded.trace, title=Path(args.trace).stem)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lawshield", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a Q-table on a scenario")
    t.add_argument("--scenario", required=True, help="scenario JSON path or built-in name")
    t.add_argument("--episodes", type=int, default=5000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", help="q-table output path (a .curve.csv is written beside it)")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("run", help="run one (or --batch N) episodes")
    r.add_argument("--scenario", required=True)
    r.add_argument("--law", help="override the scenario's law file")
    r.add_argument("--qtable")
    r.add_argument("--mode", default="shielded", choices=MODES)
    r.add_argument("--seed", type=int, help="perturb the other vehicle's speed with this seed")
    r.add_argument("--out", help="output directory (default: current directory)")
    r.add_argument("--render", action="store_true", help="also write trace.svg")
    r.add_argument("--dump-candidates", action="store_true")
    r.add_argument("--batch", type=int, help="run N seeded perturbations in parallel")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check-trace", help="audit a trace CSV against law files")
    c.add_argument("trace")
    c.add_argument("--law", action="append", help="law path or built-in name (repeatable)")
    c.set_defaults(func=cmd_check_trace)

    v = sub.add_parser("render", help="render a trace CSV to SVG")
    v.add_argument("trace")
    v.add_argument("--out")
    v.set_defaults(func=cmd_render)
    return p


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, LawError, TraceSchemaError, OSError, PredicateError,
            SimulationError, ScriptExhaustedError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
