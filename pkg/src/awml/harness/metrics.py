"""End performance, ratios against Random, attention statistics and failure labels."""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from awml.env.behaviors import ANIMATE_KINDS, NOISE
from awml.errors import AnalysisError, ContractError

END_WINDOW = 5
DIFF_WINDOW = 500

NONE, INDIFFERENCE, NOISE_FIXATION = "None", "Indifference", "NoiseFixation"


def end_loss(series: Sequence[float], k: int = END_WINDOW) -> float:
    if len(series) < k:
        raise ContractError(f"need at least {k} validation points, got {len(series)}")
    return float(np.mean(np.asarray(series[-k:], dtype=np.float64)))


def end_performance(series: Sequence[float], k: int = END_WINDOW) -> float:
    return 1.0 / end_loss(series, k)


def ratio_vs_random(ours_perf: float, random_perf: float) -> float:
    return ours_perf / random_perf


@dataclass
class Attention:
    animate_steps: int
    noise_steps: float          # visible steps per noise agent (mean over noise agents)
    animate_ratio: float        # +inf when no noise agent was ever visible
    differential: np.ndarray    # animate minus mean of all other agents, per 500-step block
    differential_noise: np.ndarray


def _block_means(x: np.ndarray, w: int) -> np.ndarray:
    n = len(x) // w
    return x[:n * w].reshape(n, w, *x.shape[1:]).mean(axis=1) if n else np.zeros((0,) + x.shape[1:])


def attention_metrics(visible: np.ndarray, agent_kinds: Sequence[str], window: int = DIFF_WINDOW) -> Attention:
    vis = np.asarray(visible, dtype=bool)
    if vis.ndim != 2 or vis.shape[1] != len(agent_kinds):
        raise ContractError("visibility log must be (steps, n_agents)")
    anim = [i for i, k in enumerate(agent_kinds) if k in ANIMATE_KINDS]
    noise = [i for i, k in enumerate(agent_kinds) if k == NOISE]
    others = [i for i in range(len(agent_kinds)) if i not in anim]
    a = vis[:, anim].any(axis=1) if anim else np.zeros(len(vis), dtype=bool)
    a_steps = int(a.sum())
    n_steps = float(vis[:, noise].sum(axis=0).mean()) if noise else 0.0
    ratio = a_steps / n_steps if n_steps > 0 else math.inf
    fa = _block_means(a.astype(np.float64), window)
    fo = _block_means(vis[:, others].astype(np.float64), window).mean(axis=1) if others else np.zeros_like(fa)
    fn = _block_means(vis[:, noise].astype(np.float64), window).mean(axis=1) if noise else np.zeros_like(fa)
    return Attention(a_steps, n_steps, ratio, fa - fo, fa - fn)


def classify_failure(signal_ratios: Sequence[float], random_ratios: Sequence[float], world_kind: str,
                     min_seeds: int = 3) -> str:
    """NoiseFixation: Noise-world mean ratio more than 2 Random sd below Random's mean.
    Indifference: mean ratio within 2 Random sd of Random's mean. Otherwise None."""
    s = np.asarray(signal_ratios, dtype=np.float64)
    r = np.asarray(random_ratios, dtype=np.float64)
    if len(s) < min_seeds or len(r) < min_seeds:
        raise AnalysisError(f"need >= {min_seeds} seeds per condition, got {len(s)} and {len(r)}")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(r))):
        raise AnalysisError("attention ratios must be finite")
    mu, sd = r.mean(), r.std(ddof=1)
    m = s.mean()
    if world_kind == "NoiseWorld" and m < mu - 2.0 * sd:
        return NOISE_FIXATION
    if abs(m - mu) <= 2.0 * sd:
        return INDIFFERENCE
    return NONE


def best_k(values: Sequence[float], k: int = 5, lower_is_better: bool = True) -> np.ndarray:
    """The k best seeds (optional aggregation mode)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    return v[:k] if lower_is_better else v[::-1][:k]
