"""Sweep-level aggregation over completed runs."""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from collections.abc import Sequence

import numpy as np

from awml.env.behaviors import ANIMATE_KINDS, NOISE
from awml.errors import AnalysisError, ContractError
from awml.harness.indicator import IndicatorDataset, IndicatorRun, assign_labels, early_indicator
from awml.harness.metrics import attention_metrics, classify_failure, end_loss

log = logging.getLogger(__name__)

RANDOM = "random"


def run_stats(run) -> dict:
    """Per-run end loss on the world scalar and the animate attention ratio."""
    series = run.val_losses.get("world", np.array([]))
    try:
        loss = end_loss(series)
    except ContractError:
        loss = math.nan
    ratio = math.nan
    if run.visible is not None and len(run.visible):
        ratio = attention_metrics(run.visible, run.agent_kinds).animate_ratio
    return {"end_loss": loss, "performance": 1.0 / loss if loss == loss else math.nan, "attention_ratio": ratio}


def summarize(runs: Sequence) -> tuple[list[dict], list[dict]]:
    """(summary rows per (signal, world, behavior), failure rows per (signal, world))."""
    cells: dict[tuple, list[dict]] = defaultdict(list)
    for r in runs:
        cells[(r.signal, r.world, r.behavior)].append(run_stats(r))
    summary = []
    for (sig, world, beh), stats in sorted(cells.items()):
        loss = np.array([s["end_loss"] for s in stats])
        perf = np.array([s["performance"] for s in stats])
        att = np.array([s["attention_ratio"] for s in stats])
        row = {"signal": sig, "world": world, "behavior": beh, "n_seeds": len(stats),
               "end_loss_mean": float(np.nanmean(loss)) if np.isfinite(loss).any() else math.nan,
               "performance_mean": float(np.nanmean(perf)) if np.isfinite(perf).any() else math.nan,
               "attention_ratio_mean": float(np.mean(att)), "attention_ratio_sd": _sd(att),
               "ratio_vs_random": math.nan, "failure": ""}
        rand = cells.get((RANDOM, world, beh))
        if rand is not None:
            rperf = np.array([s["performance"] for s in rand])
            if np.isfinite(rperf).any():
                row["ratio_vs_random"] = float(row["performance_mean"] / np.nanmean(rperf))
            try:
                row["failure"] = classify_failure(att, [s["attention_ratio"] for s in rand], world)
            except AnalysisError as e:
                row["failure"] = f"n/a ({e})"
        summary.append(row)
    if not any(k[0] == RANDOM for k in cells):
        log.warning("no Random condition in this sweep: ratios and failure labels omitted")
    failures = []
    by_signal = defaultdict(list)
    for row in summary:
        by_signal[(row["signal"], row["world"])].append(row["failure"])
    for (sig, world), labels in sorted(by_signal.items()):
        counts = {lab: labels.count(lab) for lab in ("Indifference", "NoiseFixation", "None")}
        failures.append({"signal": sig, "world": world, "behaviors": len(labels), **counts})
    return summary, failures


def _sd(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if len(x) > 1 else math.nan


def indicator_dataset(runs: Sequence) -> IndicatorDataset:
    ds = IndicatorDataset()
    for r in runs:
        if r.visible is None or "world" not in r.val_losses:
            continue
        anim = [i for i, k in enumerate(r.agent_kinds) if k in ANIMATE_KINDS]
        noise = [i for i, k in enumerate(r.agent_kinds) if k == NOISE]
        ds.runs.append(IndicatorRun(r.behavior, np.asarray(r.val_steps), np.asarray(r.val_losses["world"]),
                                    r.visible[:, anim].any(axis=1).astype(float),
                                    r.visible[:, noise].any(axis=1).astype(float)))
    return assign_labels(ds)


def indicator_curve(ds: IndicatorDataset, Ts: Sequence[int], B: int = 10) -> list[dict]:
    return [{"T": int(T), **early_indicator(ds, int(T), B)} for T in Ts]
