"""Curiosity signals. Each one scores a freshly collected window with a scalar reward.

All signals share one interface so the harness can swap them from config:

    score(batch)               -> rewards, one per window in `batch`
    on_wm_step(batch, count)   -> after each world-model gradient step (same batch)
    on_round_start()           -> before the gradient steps of an update round
    drives_controller          -> False only for Random (actions drawn uniformly)
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from awml.errors import ConfigError
from awml.numcore import autodiff as ad
from awml.numcore.layers import forward_mlp, init_mlp
from awml.numcore.optim import AdamState, adam_step
from awml.numcore.params import ParamSet
from awml.worldmodel import (Batch, WorldModel, old_model_update, warm_start_sync, wm_train_step)

KINDS = ("gamma_progress", "delta_progress", "rnd", "disagreement", "adversarial", "random")


@dataclass
class CuriosityConfig:
    kind: str = "gamma_progress"
    gamma: float = 0.9995
    delta: int = 1
    ensemble_size: int = 3
    rnd_hidden: int = 128
    rnd_out: int = 64
    rnd_lr: float = 1e-4
    adversarial_ce: bool = False     # sensitivity flag: include the mask cross-entropy term

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"curiosity.kind must be one of {KINDS}, got {self.kind!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("curiosity.gamma must lie in (0, 1)")
        if self.delta < 1:
            raise ConfigError("curiosity.delta must be >= 1")
        if self.kind == "disagreement" and self.ensemble_size < 2:
            raise ConfigError("disagreement needs ensemble_size >= 2")


class Signal:
    kind = "base"
    drives_controller = True

    def score(self, batch: Batch) -> np.ndarray:
        raise NotImplementedError

    def on_wm_step(self, batch: Batch, update_counter: int) -> None:
        pass

    def on_round_start(self) -> None:
        pass

    def state(self) -> dict[str, ParamSet]:
        """Extra parameter sets worth checkpointing."""
        return {}


def progress_reward(old: WorldModel, new: WorldModel, batch: Batch) -> np.ndarray:
    """L(θ_old) − L(θ_new) per window: positive when the newer model predicts better."""
    return old.window_losses(batch) - new.window_losses(batch)


# γ-Progress -------------------------------------------------------------------------

@dataclass
class ProgressState:
    theta_new: WorldModel
    theta_old: WorldModel
    gamma: float


class GammaProgress(Signal):
    kind = "gamma_progress"

    def __init__(self, live: WorldModel, gamma: float = 0.9995):
        if not 0.0 < gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        self.ps = ProgressState(live, live.clone(), gamma)

    def score(self, batch):
        return reward_gamma_progress(self.ps, batch)

    def on_wm_step(self, batch, update_counter):
        old_model_update(self.ps.theta_old, self.ps.theta_new, self.ps.gamma)
        warm_start_sync(self.ps.theta_old, self.ps.theta_new, update_counter)

    def state(self):
        return {"old_model": self.ps.theta_old.params()}


def reward_gamma_progress(ps: ProgressState, batch: Batch) -> np.ndarray:
    return progress_reward(ps.theta_old, ps.theta_new, batch)


# δ-Progress -------------------------------------------------------------------------

@dataclass
class DeltaState:
    snapshots: deque
    delta: int = 1


class DeltaProgress(Signal):
    kind = "delta_progress"

    def __init__(self, live: WorldModel, delta: int = 1):
        if delta < 1:
            raise ConfigError("delta must be >= 1")
        self.live = live
        self.ds = DeltaState(deque(maxlen=delta), delta)

    def score(self, batch):
        return reward_delta_progress(self.ds, self.live, batch)

    def on_round_start(self):
        # θ_k before this round's steps becomes θ_old for the data collected after them
        self.ds.snapshots.append(self.live.clone())


def reward_delta_progress(ds: DeltaState, live: WorldModel, batch: Batch) -> np.ndarray:
    if not ds.snapshots:
        return np.zeros(len(batch))
    return progress_reward(ds.snapshots[0], live, batch)


# RND ----------------------------------------------------------------------------------

@dataclass
class RNDState:
    target: ParamSet
    predictor: ParamSet
    adam: AdamState
    scale: np.ndarray


def rnd_init(rng: np.random.Generator, d_in: int, hidden: int = 128, d_out: int = 64, lr: float = 1e-4,
             scale: np.ndarray | None = None) -> RNDState:
    sizes = [d_in, hidden, hidden, d_out]
    target = init_mlp(rng, sizes)
    predictor = init_mlp(rng, sizes)
    s = np.ones(d_in) if scale is None else np.asarray(scale, dtype=np.float64)
    return RNDState(target, predictor, AdamState.for_params(predictor, lr=lr), s)


def reward_rnd(rs: RNDState, obs: np.ndarray) -> np.ndarray:
    """Mean squared predictor/target gap per observation; obs is (dim,) or (B, dim)."""
    x = np.atleast_2d(obs) * rs.scale
    d = forward_mlp(rs.predictor, x) - forward_mlp(rs.target, x)
    r = np.mean(d * d, axis=-1)
    return r if np.ndim(obs) > 1 else r[0]


def rnd_loss_grads(rs: RNDState, obs: np.ndarray) -> tuple[float, ParamSet]:
    x = np.atleast_2d(obs) * rs.scale
    tape = ad.Tape()
    leaves = tape.watch(rs.predictor)
    target = forward_mlp(rs.target, x)
    diff = ad.sub(forward_mlp(leaves, x), target)
    loss = ad.mean(ad.square(diff))
    return float(loss.value), ad.backward(tape, loss, rs.predictor)


def train_rnd(rs: RNDState, obs: np.ndarray) -> float:
    loss, g = rnd_loss_grads(rs, obs)
    adam_step(rs.adam, rs.predictor, g)
    return loss


class RND(Signal):
    kind = "rnd"

    def __init__(self, live: WorldModel, rng: np.random.Generator, hidden=128, d_out=64, lr=1e-4):
        L = live.layout
        scale = np.ones(L.dim)
        for i in range(L.n_agents):
            scale[L.coord_index(i)] = 1.0 / live.half_extent
        scale[L.aux_slice] = 1.0 / live.half_extent
        self.rs = rnd_init(rng, L.dim, hidden, d_out, lr, scale)

    def score(self, batch):
        return reward_rnd(self.rs, batch.Y[:, -1])

    def on_wm_step(self, batch, update_counter):
        train_rnd(self.rs, batch.Y[:, -1])

    def state(self):
        return {"rnd_target": self.rs.target, "rnd_predictor": self.rs.predictor}


# Disagreement -----------------------------------------------------------------------

@dataclass
class EnsembleState:
    members: list
    adams: list


class Disagreement(Signal):
    """Member 0 is the live world model; the others train in lockstep on the same batches."""
    kind = "disagreement"

    def __init__(self, live: WorldModel, rng: np.random.Generator, n: int = 3):
        if n < 2:
            raise ConfigError("disagreement needs at least 2 ensemble members")
        extra = [WorldModel(live.cfg, live.layout, live.groups, rng, live.half_extent) for _ in range(n - 1)]
        self.es = EnsembleState([live] + extra, [None] + [m.new_adam() for m in extra])

    def score(self, batch):
        return reward_disagreement(self.es, batch)

    def on_wm_step(self, batch, update_counter):
        for m, adam in zip(self.es.members[1:], self.es.adams[1:]):
            wm_train_step(m, batch, adam)

    def state(self):
        return {f"member{k}": m.params() for k, m in enumerate(self.es.members[1:], start=1)}


def ensemble_variance(preds: np.ndarray) -> np.ndarray:
    """preds (N, B, ...) -> (B,): population variance across members, mean over the rest."""
    preds = np.asarray(preds, dtype=np.float64)
    if preds.shape[0] < 2:
        raise ConfigError("need at least 2 ensemble members")
    var = (preds - preds[0]).var(axis=0)     # centering on one member keeps identical ensembles at exactly 0
    return var.reshape(var.shape[0], -1).mean(axis=1)


def reward_disagreement(es: EnsembleState, batch: Batch) -> np.ndarray:
    preds = np.stack([m.predict(batch.X, batch.A)[0] for m in es.members])
    return ensemble_variance(preds)


# Adversarial / Random -----------------------------------------------------------------

class Adversarial(Signal):
    kind = "adversarial"

    def __init__(self, live: WorldModel, include_ce: bool = False):
        self.live = live
        self.include_ce = include_ce

    def score(self, batch):
        return reward_adversarial(self.live, batch, self.include_ce)


def reward_adversarial(model: WorldModel, batch: Batch, include_ce: bool = False) -> np.ndarray:
    return model.window_losses(batch, coord_only=not include_ce)


class RandomSignal(Signal):
    kind = "random"
    drives_controller = False

    def score(self, batch):
        return np.zeros(len(batch))


def reward_random() -> float:
    return 0.0


def make_signal(cfg: CuriosityConfig, live: WorldModel, rng: np.random.Generator) -> Signal:
    cfg.validate()
    k = cfg.kind
    if k == "gamma_progress":
        return GammaProgress(live, cfg.gamma)
    if k == "delta_progress":
        return DeltaProgress(live, cfg.delta)
    if k == "rnd":
        return RND(live, rng, cfg.rnd_hidden, cfg.rnd_out, cfg.rnd_lr)
    if k == "disagreement":
        return Disagreement(live, rng, cfg.ensemble_size)
    if k == "adversarial":
        return Adversarial(live, cfg.adversarial_ce)
    return RandomSignal()
