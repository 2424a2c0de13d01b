"""The AWML training loop: collect, score, store, then update world model, curiosity state and Q-net."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from awml.controller import (WINDOW, DQNConfig, EpsSchedule, Replay, dqn_update, make_learner, q_values,
                             select_action, store)
from awml.curiosity import CuriosityConfig, make_signal
from awml.env.geometry import N_ACTIONS, RoomConfig
from awml.env.room import WorldSpec, encode, env_step, reset
from awml.errors import ConfigError
from awml.harness.validation import validate, validated_kinds
from awml.worldmodel import GroupSpec, WMConfig, WorldModel, make_batch, wm_train_step

log = logging.getLogger(__name__)

# independent RNG streams per run, keyed (seed, purpose)
_INIT, _ACT, _BATCH, _DQN, _VALID = 1, 2, 3, 4, 5


@dataclass
class HarnessConfig:
    total_steps: int = 200_000
    steps_per_round: int = 40
    grad_steps: int = 10
    validate_every: int = 5000
    validation_steps: int = 2000
    seed: int = 0

    def validate(self) -> None:
        if self.total_steps < 0:
            raise ConfigError("harness.total_steps must be >= 0")
        if self.steps_per_round < 1 or self.grad_steps < 1 or self.validate_every < 1:
            raise ConfigError("steps_per_round, grad_steps and validate_every must be >= 1")
        if self.validation_steps < 1:
            raise ConfigError("harness.validation_steps must be >= 1")


@dataclass
class RunConfig:
    world: WorldSpec = field(default_factory=WorldSpec)
    room: RoomConfig = field(default_factory=RoomConfig)
    wm: WMConfig = field(default_factory=WMConfig)
    dqn: DQNConfig = field(default_factory=DQNConfig)
    curiosity: CuriosityConfig = field(default_factory=CuriosityConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)

    def validate(self) -> None:
        self.world.validate()
        self.room.validate()
        self.wm.validate()
        self.dqn.validate()
        self.curiosity.validate()
        self.harness.validate()
        if self.dqn.capacity < self.wm.tau_in + self.wm.tau_out:
            raise ConfigError("dqn.capacity must hold at least one world-model window")


@dataclass
class RunRecord:
    signal: str
    world: str
    animate: str
    seed: int
    agent_kinds: list[str]
    val_steps: list[int] = field(default_factory=list)
    val_losses: dict[str, list[float]] = field(default_factory=dict)   # behavior -> series; "world" scalar
    actions: np.ndarray | None = None
    rewards: np.ndarray | None = None
    eps: np.ndarray | None = None
    visible: np.ndarray | None = None          # (T, n_agents) bool, step t = 1..T
    orientation: np.ndarray | None = None
    positions: np.ndarray | None = None        # (T, n_agents, 2) ground truth
    phases: list | None = None
    wm_updates: int = 0
    q_updates: int = 0
    train_losses: list[float] = field(default_factory=list)

    @property
    def world_series(self) -> list[float]:
        return self.val_losses.get("world", [])


def _rng(seed: int, purpose: int, *extra: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), purpose, *extra])))


class Trainer:
    """Holds the full training context of one run; `run_awml` drives it."""

    def __init__(self, cfg: RunConfig):
        cfg.validate()
        self.cfg = cfg
        h = cfg.harness
        self.env = reset(WorldSpec(cfg.world.kind, cfg.world.animate_kind, h.seed, cfg.world.behavior_params),
                         cfg.room)
        L = self.env.layout
        init = _rng(h.seed, _INIT)
        self.model = WorldModel(cfg.wm, L, GroupSpec.of(self.env.groups), init, cfg.room.half_extent)
        self.adam = self.model.new_adam()
        self.signal = make_signal(cfg.curiosity, self.model, init)
        scale = np.ones(L.dim)
        for i in range(L.n_agents):
            scale[L.coord_index(i)] = 1.0 / cfg.room.half_extent
        scale[L.aux_slice] = 1.0 / cfg.room.half_extent
        self.learner = make_learner(init, L.dim, cfg.dqn, scale)
        self.replay = Replay(cfg.dqn.capacity, L.dim)
        self.eps = EpsSchedule()
        self.rng_act = _rng(h.seed, _ACT)
        self.rng_batch = _rng(h.seed, _BATCH)
        self.rng_dqn = _rng(h.seed, _DQN)
        T = h.total_steps
        self.obs = np.zeros((T + 1, L.dim))
        self.act = np.zeros(T + 1, dtype=np.int64)
        o0 = encode(self.env, self.env.default_estimates())
        self.obs[0] = o0.vector()
        self.last_c = o0.c_tilde
        self.t = 0
        self.record = RunRecord(cfg.curiosity.kind, cfg.world.kind, cfg.world.animate_kind, h.seed,
                                self.env.agent_kinds)
        n = self.env.n_agents
        self.record.actions = np.zeros(T, dtype=np.int64)
        self.record.rewards = np.zeros(T)
        self.record.eps = np.zeros(T)
        self.record.visible = np.zeros((T, n), dtype=bool)
        self.record.orientation = np.zeros(T)
        self.record.positions = np.zeros((T, n, 2))
        self.record.phases = []
        store(self.replay, self.obs[0], 0, 0.0, 0)

    # -- collection -------------------------------------------------------------------
    def _choose(self) -> tuple[int, float]:
        t = self.t
        if not self.signal.drives_controller:
            return int(self.rng_act.integers(N_ACTIONS)), 1.0
        eps = self.eps(t)
        if t + 1 < WINDOW:
            return int(self.rng_act.integers(N_ACTIONS)), eps
        q = q_values(self.learner.qnet, self.obs[t - WINDOW + 1:t + 1])
        return select_action(q, eps, self.rng_act), eps

    def _estimate(self, a: int) -> np.ndarray:
        ti = self.cfg.wm.tau_in
        t = self.t
        if t + 1 < ti:
            return self.last_c
        A = np.append(self.act[t + 1 - ti:t + 1], a)
        return self.model.predict_next(self.obs[t + 1 - ti:t + 1], A)

    def env_step(self) -> None:
        a, eps = self._choose()
        c_hat = self._estimate(a)
        self.env, o = env_step(self.env, a, c_hat)
        self.t += 1
        t = self.t
        self.obs[t] = o.vector()
        self.act[t] = a
        self.last_c = o.c_tilde
        r = self.record
        r.actions[t - 1] = a
        r.eps[t - 1] = eps
        r.visible[t - 1] = o.mask > 0
        r.orientation[t - 1] = self.env.orientation
        r.positions[t - 1] = self.env.positions()
        r.phases.append(self.env.phases())

    def score_and_store(self, first: int, last: int) -> None:
        """Rewards for records first..last (windows ending there), then append to replay."""
        span = self.cfg.wm.tau_in + self.cfg.wm.tau_out
        ends = np.arange(first, last + 1)
        rewards = np.zeros(len(ends))
        ok = ends - span + 1 >= 0
        if ok.any():
            batch = make_batch(self.obs, self.act, ends[ok] - span + 1, self.cfg.wm)
            rewards[ok] = self.signal.score(batch)
        for e, c in zip(ends, rewards):
            store(self.replay, self.obs[e], int(self.act[e]), float(c), int(e))
            self.record.rewards[e - 1] = c

    # -- updates ------------------------------------------------------------------------
    def wm_batch(self):
        wm, t = self.cfg.wm, self.t
        span = wm.tau_in + wm.tau_out
        lo = max(0, t + 1 - self.cfg.dqn.capacity)
        starts = self.rng_batch.integers(lo, t + 2 - span, size=wm.batch)
        return make_batch(self.obs, self.act, starts, wm)

    def update_round(self) -> None:
        self.signal.on_round_start()
        for _ in range(self.cfg.harness.grad_steps):
            batch = self.wm_batch()
            loss = wm_train_step(self.model, batch, self.adam)
            self.record.wm_updates += 1
            self.record.train_losses.append(loss)
            self.signal.on_wm_step(batch, self.record.wm_updates)
            if self.signal.drives_controller:
                dqn_update(self.learner, self.replay, self.rng_dqn)
                self.record.q_updates += 1

    def run_validation(self) -> dict[str, float]:
        h = self.cfg.harness
        k = self.t // h.validate_every
        ti = self.cfg.wm.tau_in
        hist_obs = self.obs[max(0, self.t + 1 - ti):self.t + 1]
        hist_act = self.act[max(0, self.t + 1 - ti):self.t + 1]
        if len(hist_obs) < ti:
            pad = ti - len(hist_obs)
            hist_obs = np.concatenate([np.repeat(hist_obs[:1], pad, axis=0), hist_obs])
            hist_act = np.concatenate([np.zeros(pad, dtype=np.int64), hist_act])
        out = {}
        for j, kind in enumerate(validated_kinds(self.env)):
            out[kind] = validate(self.model, self.env, kind, hist_obs, hist_act, h.validation_steps,
                                 _rng(h.seed, _VALID, k, j))
        out["world"] = float(np.mean(list(out.values())))
        rec = self.record
        rec.val_steps.append(self.t)
        for key, v in out.items():
            rec.val_losses.setdefault(key, []).append(v)
        return out

    @property
    def warmup(self) -> int:
        """Replay size before updates start: min_buffer, but never less than one
        world-model window or one n-step Q segment."""
        c = self.cfg
        return max(c.dqn.min_buffer, c.wm.tau_in + c.wm.tau_out, c.dqn.nstep + WINDOW)

    def run(self) -> RunRecord:
        h = self.cfg.harness
        while self.t < h.total_steps:
            first = self.t + 1
            # rounds never straddle a validation boundary
            to_boundary = h.validate_every - self.t % h.validate_every
            n = min(h.steps_per_round, h.total_steps - self.t, to_boundary)
            for _ in range(n):
                self.env_step()
            self.score_and_store(first, self.t)
            if len(self.replay) >= self.warmup:
                self.update_round()
            if self.t % h.validate_every == 0:
                v = self.run_validation()
                log.info("t=%d validation %s", self.t, {k: round(x, 4) for k, x in v.items()})
        return self.record


def run_awml(cfg: RunConfig) -> tuple[RunRecord, Trainer]:
    tr = Trainer(cfg)
    return tr.run(), tr
