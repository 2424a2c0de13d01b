"""Run-directory artifacts: config echo, metrics CSV, events JSONL, checkpoints."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from awml import config as cfgmod
from awml.env.geometry import ACTIONS
from awml.errors import ConfigError
from awml.harness.run import RunRecord, Trainer
from awml.numcore.checkpoint import save_params
from awml.worldmodel import save_world_model

CONFIG, METRICS, EVENTS, CHECKPOINTS = "config.yaml", "metrics.csv", "events.jsonl", "checkpoints"


def run_dir_name(cfg: cfgmod.Config, stamp: str | None = None) -> str:
    r = cfg.run
    stamp = stamp or time.strftime("%Y%m%d-%H%M%S")
    return f"{r.curiosity.kind}-{r.world.kind}-{r.world.animate_kind}-seed{r.harness.seed}-{stamp}"


def write_config(run_dir: Path, cfg: cfgmod.Config) -> None:
    (run_dir / CONFIG).write_text(cfgmod.dump(cfg))


def write_metrics(run_dir: Path, rec: RunRecord) -> None:
    with open(run_dir / METRICS, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "behavior", "validation_loss"])
        for k, step in enumerate(rec.val_steps):
            for behavior, series in rec.val_losses.items():
                w.writerow([step, behavior, repr(float(series[k]))])


def event_rows(rec: RunRecord):
    for k in range(len(rec.phases)):
        vis = rec.visible[k]
        yield {
            "t": k + 1,
            "action": int(rec.actions[k]),
            "action_name": ACTIONS[int(rec.actions[k])],
            "eps": float(rec.eps[k]),
            "reward": float(rec.rewards[k]),
            "visible_agents": [int(i) for i in np.flatnonzero(vis)],
            "orientation": float(rec.orientation[k]),
            "agents": [[float(p[0]), float(p[1]), int(m), ph]
                       for p, m, ph in zip(rec.positions[k], vis, rec.phases[k])],
        }


def write_events(run_dir: Path, rec: RunRecord) -> None:
    with open(run_dir / EVENTS, "w") as fh:
        for row in event_rows(rec):
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")


def write_checkpoints(run_dir: Path, tr: Trainer) -> None:
    root = run_dir / CHECKPOINTS
    root.mkdir(exist_ok=True)
    save_world_model(tr.model, root / "world_model")
    save_params(tr.learner.qnet.params, root / "qnet")
    for name, params in tr.signal.state().items():
        save_params(params, root / name)


def write_run(run_dir: Path, cfg: cfgmod.Config, rec: RunRecord, tr: Trainer) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    write_config(run_dir, cfg)
    write_metrics(run_dir, rec)
    if cfg.io.events:
        write_events(run_dir, rec)
    if cfg.io.checkpoints:
        write_checkpoints(run_dir, tr)


# -- reading back ----------------------------------------------------------------------------

@dataclass
class LoadedRun:
    path: Path
    cfg: cfgmod.Config
    val_steps: np.ndarray
    val_losses: dict[str, np.ndarray]
    visible: np.ndarray | None
    agent_kinds: list[str]

    @property
    def signal(self) -> str:
        return self.cfg.run.curiosity.kind

    @property
    def world(self) -> str:
        return self.cfg.run.world.kind

    @property
    def behavior(self) -> str:
        return self.cfg.run.world.animate_kind

    @property
    def seed(self) -> int:
        return self.cfg.run.harness.seed


def read_metrics(path: Path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    steps: list[int] = []
    series: dict[str, list[float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            s = int(row["step"])
            if not steps or steps[-1] != s:
                steps.append(s)
            series.setdefault(row["behavior"], []).append(float(row["validation_loss"]))
    return np.array(steps, dtype=np.int64), {k: np.array(v) for k, v in series.items()}


def read_events(path: Path):
    """Yields parsed rows; stops quietly at a truncated final line."""
    with open(path) as fh:
        for line in fh:
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                if line.endswith("\n"):
                    raise
                return


def read_visibility(path: Path, n_agents: int) -> np.ndarray:
    rows = [r["visible_agents"] for r in read_events(path)]
    vis = np.zeros((len(rows), n_agents), dtype=bool)
    for k, idx in enumerate(rows):
        vis[k, idx] = True
    return vis


def load_run(run_dir: str | Path, with_events: bool = True) -> LoadedRun:
    from awml.env.room import WorldSpec, reset

    d = Path(run_dir)
    if not (d / CONFIG).exists() or not (d / METRICS).exists():
        raise ConfigError(f"{d} is not a completed run directory")
    cfg = cfgmod.load(d / CONFIG)
    r = cfg.run
    kinds = reset(WorldSpec(r.world.kind, r.world.animate_kind, r.harness.seed, r.world.behavior_params),
                  r.room).agent_kinds
    steps, losses = read_metrics(d / METRICS)
    vis = read_visibility(d / EVENTS, len(kinds)) if with_events and (d / EVENTS).exists() else None
    return LoadedRun(d, cfg, steps, losses, vis, kinds)
