"""awml command line: run, sweep, analyze, replay.

Exit codes: 0 success, 1 runtime failure, 2 bad configuration or arguments.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from awml import artifacts
from awml import config as cfgmod
from awml.errors import AWMLError, ConfigError

log = logging.getLogger("awml")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _out_dir(args) -> Path:
    return Path(os.environ.get("AWML_OUT") or args.out or "runs")


def _int_list(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    out = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def execute(cfg: cfgmod.Config, run_dir: Path) -> Path:
    from awml.harness.run import run_awml

    rec, tr = run_awml(cfg.run)
    artifacts.write_run(run_dir, cfg, rec, tr)
    return run_dir


# -- run ------------------------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = cfgmod.load(args.config, args.set or [])
    out = _out_dir(args)
    run_dir = out / artifacts.run_dir_name(cfg)
    log.info("run -> %s", run_dir)
    execute(cfg, run_dir)
    print(run_dir)
    return EXIT_OK


# -- sweep ----------------------------------------------------------------------------------

def _sweep_cell(payload):
    text, overrides, run_dir = payload
    try:
        cfg = cfgmod.load_text(text, overrides)
        execute(cfg, Path(run_dir))
        return run_dir, "ok", ""
    except Exception as e:  # recorded per cell; the sweep keeps going
        return run_dir, "failed", f"{type(e).__name__}: {e}\n{traceback.format_exc(limit=3)}"


def cmd_sweep(args) -> int:
    seeds = _int_list(args.seeds or "")
    if not seeds:
        raise ConfigError("--seeds must name at least one seed")
    text = Path(args.config).read_text() if Path(args.config).exists() else None
    if text is None:
        raise ConfigError(f"cannot read config {args.config}")
    base = cfgmod.load_text(text, args.set or [])
    signals = [s for s in (args.signals or base.run.curiosity.kind).split(",") if s]
    cells = []
    out = _out_dir(args)
    for sig in signals:
        for seed in seeds:
            ov = list(args.set or []) + [f"curiosity.kind={sig}", f"harness.seed={seed}"]
            cfg = cfgmod.load_text(text, ov)      # surfaces grid config errors before any run
            cells.append((text, ov, str(out / artifacts.run_dir_name(cfg, stamp="sweep"))))
    out.mkdir(parents=True, exist_ok=True)
    todo = [c for c in cells if not (Path(c[2]) / artifacts.METRICS).exists() or args.force]
    log.info("sweep: %d cells (%d already complete)", len(cells), len(cells) - len(todo))
    results = {c[2]: (c[2], "ok", "") for c in cells if c not in todo}
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for res in pool.map(_sweep_cell, todo):
                results[res[0]] = res
    else:
        for c in todo:
            res = _sweep_cell(c)
            results[res[0]] = res
            log.info("%s: %s", Path(res[0]).name, res[1])
    with open(out / "sweep_index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["signal", "seed", "status", "run_dir", "error"])
        for (_, ov, run_dir) in cells:
            _, status, err = results[run_dir]
            w.writerow([ov[-2].split("=")[1], ov[-1].split("=")[1], status, Path(run_dir).name,
                        err.splitlines()[0] if err else ""])
    failed = [r for r in results.values() if r[1] != "ok"]
    for r in failed:
        log.error("cell %s failed: %s", r[0], r[2])
    return EXIT_RUNTIME if failed else EXIT_OK


# -- analyze --------------------------------------------------------------------------------

def _write_rows(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def find_runs(root: Path) -> list[Path]:
    return sorted(p.parent for p in root.glob("*/" + artifacts.METRICS))


def cmd_analyze(args) -> int:
    from awml.errors import AnalysisError
    from awml.harness.analysis import indicator_curve, indicator_dataset, summarize

    root = Path(args.sweep_dir)
    paths = find_runs(root) if not (root / artifacts.METRICS).exists() else [root]
    if not paths:
        raise ConfigError(f"no completed runs under {root}")
    runs = [artifacts.load_run(p) for p in paths]
    out = Path(args.out) if args.out else root
    out.mkdir(parents=True, exist_ok=True)
    summary, failures = summarize(runs)
    _write_rows(out / "summary.csv", summary)
    _write_rows(out / "failure_table.csv", failures)
    signals = {r.signal for r in runs}
    if len(runs) >= 30 and len(signals) >= 3:
        total = min(int(r.visible.shape[0]) for r in runs if r.visible is not None)
        every = int(runs[0].cfg.run.harness.validate_every)
        Ts = list(range(every, total + 1, every))
        try:
            curve = indicator_curve(indicator_dataset(runs), Ts, B=args.buckets)
            _write_rows(out / "early_indicator.csv", curve)
        except AnalysisError as e:
            log.warning("early indicator skipped: %s", e)
    else:
        log.info("early indicator needs >= 30 runs over >= 3 signals (have %d runs, %d signals)",
                 len(runs), len(signals))
    print(out / "summary.csv")
    return EXIT_OK


# -- replay ---------------------------------------------------------------------------------

def replay_events(events_path: Path, cfg: cfgmod.Config) -> tuple[int, int | None, bool]:
    """Re-simulate from logged actions. Returns (verified steps, first divergent t or None, truncated)."""
    from awml.env.room import WorldSpec, env_step, reset

    r = cfg.run
    env = reset(WorldSpec(r.world.kind, r.world.animate_kind, r.harness.seed, r.world.behavior_params), r.room)
    n = 0
    with open(events_path) as fh:
        lines = fh.readlines()
    truncated = bool(lines) and not lines[-1].endswith("\n")
    rows = artifacts.read_events(events_path)
    for row in rows:
        env, obs = env_step(env, int(row["action"]), None)
        ok = row["t"] == env.t and row["orientation"] == env.orientation
        pos, phases = env.positions(), env.phases()
        for i, (x, y, m, ph) in enumerate(row["agents"]):
            ok = ok and x == pos[i, 0] and y == pos[i, 1] and m == int(obs.mask[i]) and ph == phases[i]
        if not ok:
            return n, int(row["t"]), truncated
        n += 1
    return n, None, truncated


def cmd_replay(args) -> int:
    events = Path(args.events)
    if not events.exists():
        raise ConfigError(f"events file {events} does not exist")
    cfg_path = Path(args.config) if args.config else events.parent / artifacts.CONFIG
    cfg = cfgmod.load(cfg_path, args.set or [])
    n, bad, truncated = replay_events(events, cfg)
    if bad is not None:
        print(f"divergence at step t={bad} (after {n} matching steps)")
        return EXIT_RUNTIME
    note = " (log truncated; verified prefix only)" if truncated else ""
    print(f"replay ok: {n} steps match{note}")
    return EXIT_OK


# -- entry point ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="awml", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required)
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override (repeatable)")
        sp.add_argument("--out", help="output root (AWML_OUT overrides)")

    sp = sub.add_parser("run", help="one training run")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="grid over signals x seeds")
    common(sp)
    sp.add_argument("--seeds", required=True, help="e.g. 0,1,2 or 0-9")
    sp.add_argument("--signals", help="comma-separated curiosity kinds")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--force", action="store_true", help="rerun cells that already completed")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("analyze", help="summary, failure table and early indicator for a sweep")
    sp.add_argument("sweep_dir")
    sp.add_argument("--out")
    sp.add_argument("--buckets", type=int, default=10)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("replay", help="verify an events log by re-simulating the environment")
    sp.add_argument("events")
    common(sp, config_required=False)
    sp.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (AWMLError, OSError, ValueError, ArithmeticError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
