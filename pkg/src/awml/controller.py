"""ε-greedy DQN gaze controller with n-step returns assembled at sampling time."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from awml.env.geometry import N_ACTIONS
from awml.errors import ConfigError, ContractError
from awml.numcore import autodiff as ad
from awml.numcore.layers import forward_mlp, init_mlp
from awml.numcore.optim import AdamState, adam_step
from awml.numcore.params import ParamSet

WINDOW = 3  # x_{t-2:t}


@dataclass
class DQNConfig:
    discount: float = 0.99
    nstep: int = 200
    batch: int = 256
    capacity: int = 200_000
    hidden: int = 512
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    target_sync_period: int = 1000
    min_buffer: int = 1000

    def validate(self) -> None:
        if self.nstep < 1:
            raise ConfigError("dqn.nstep must be >= 1")
        if not 0.0 < self.discount < 1.0:
            raise ConfigError("dqn.discount must lie in (0, 1)")
        if min(self.batch, self.capacity, self.hidden, self.target_sync_period) < 1:
            raise ConfigError("dqn batch, capacity, hidden and target_sync_period must be positive")
        if self.capacity < self.nstep + WINDOW:
            raise ConfigError("dqn.capacity must hold at least one n-step segment")


@dataclass
class EpsSchedule:
    eps0: float = 1.0
    eps_min: float = 0.025
    decay: float = 0.0001

    def __call__(self, t: int) -> float:
        return max(self.eps_min, self.eps0 - self.decay * t)


class QNet:
    """Two-layer tanh MLP on the flattened last three observations."""

    def __init__(self, params: ParamSet, scale: np.ndarray):
        self.params = params
        self.scale = np.asarray(scale, dtype=np.float64)   # per observation column

    @classmethod
    def create(cls, rng: np.random.Generator, obs_dim: int, hidden: int = 512, scale=None) -> QNet:
        params = init_mlp(rng, [WINDOW * obs_dim, hidden, N_ACTIONS])
        return cls(params, np.ones(obs_dim) if scale is None else scale)

    def features(self, windows: np.ndarray) -> np.ndarray:
        """(B, 3, dim) -> (B, 3*dim)."""
        w = np.asarray(windows) * self.scale
        return w.reshape(w.shape[0], -1)

    def clone(self) -> QNet:
        return QNet(self.params.copy(), self.scale)


def q_values(qnet: QNet, window: np.ndarray) -> np.ndarray:
    window = np.asarray(window)
    if window.ndim != 2 or window.shape[0] != WINDOW:
        raise ContractError(f"q_values needs a window of exactly {WINDOW} observations, got {window.shape}")
    return forward_mlp(qnet.params, qnet.features(window[None]))[0]


def select_action(qvals: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    """Uniform with probability eps, else argmax (np.argmax keeps the lowest index on ties)."""
    if not 0.0 <= eps <= 1.0:
        raise ConfigError(f"eps must lie in [0, 1], got {eps}")
    if rng.random() < eps:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(qvals))


class Replay:
    """Ring buffer of per-step records (obs, action that produced it, reward, step index).

    The transition for state s_j = obs[j-2:j+1] is (s_j, act[j+1], c[j+1..j+n], s_{j+n});
    states and n-step returns are assembled from contiguous records when sampling.
    """

    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros(capacity, dtype=np.int64)
        self.rew = np.zeros(capacity)
        self.step = np.full(capacity, -1, dtype=np.int64)
        self.size = 0
        self.head = 0      # next write slot

    def __len__(self) -> int:
        return self.size

    def _slot(self, logical):
        """Chronological index (0 = oldest) -> ring slot."""
        return (self.head - self.size + np.asarray(logical)) % self.capacity

    def window(self, logical, n_obs: int = WINDOW) -> np.ndarray:
        idx = np.asarray(logical)[..., None] + np.arange(-n_obs + 1, 1)
        return self.obs[self._slot(idx)]


def store(replay: Replay, obs: np.ndarray, action: int, c: float, step: int) -> None:
    if replay.size and step <= replay.step[(replay.head - 1) % replay.capacity]:
        raise ContractError("replay step indices must strictly increase")
    k = replay.head
    replay.obs[k] = obs
    replay.act[k] = action
    replay.rew[k] = c
    replay.step[k] = step
    replay.head = (k + 1) % replay.capacity
    replay.size = min(replay.size + 1, replay.capacity)


def sample_starts(replay: Replay, n: int, batch: int, rng: np.random.Generator, max_tries: int = 100):
    """Chronological indices j with records j-2 .. j+n all present and step-contiguous."""
    lo, hi = WINDOW - 1, replay.size - 1 - n
    if hi < lo:
        raise ContractError("not enough history for one n-step segment")
    out = np.empty(0, dtype=np.int64)
    for _ in range(max_tries):
        j = rng.integers(lo, hi + 1, size=batch - out.size)
        first = replay.step[replay._slot(j - (WINDOW - 1))]
        last = replay.step[replay._slot(j + n)]
        out = np.concatenate([out, j[last - first == n + WINDOW - 1]])
        if out.size == batch:
            return out
    raise ContractError("could not draw enough contiguous n-step segments")


def nstep_targets(rewards: np.ndarray, q_next_max: np.ndarray, discount: float) -> np.ndarray:
    """Σ_{i<n} β^i r_i + β^n max_a Q_target(s_{t+n}, a) for rewards of shape (B, n)."""
    n = rewards.shape[1]
    return rewards @ (discount ** np.arange(n)) + discount ** n * q_next_max


def td_loss(qnet: QNet, params, feats, actions, targets):
    """Mean squared TD error; `params` may be plain or tape leaves."""
    q = forward_mlp(params, feats)
    err = ad.sub(ad.pick(q, actions), targets)
    return ad.mean(ad.square(err))


@dataclass
class DQNLearner:
    qnet: QNet
    target: QNet
    adam: AdamState
    cfg: DQNConfig
    updates: int = 0


def make_learner(rng: np.random.Generator, obs_dim: int, cfg: DQNConfig, scale=None) -> DQNLearner:
    cfg.validate()
    q = QNet.create(rng, obs_dim, cfg.hidden, scale)
    return DQNLearner(q, q.clone(), AdamState.for_params(q.params, cfg.lr, cfg.beta1, cfg.beta2), cfg)


def dqn_update(learner: DQNLearner, replay: Replay, rng: np.random.Generator) -> dict:
    cfg = learner.cfg
    if len(replay) < cfg.min_buffer:
        raise ContractError(f"replay holds {len(replay)} < {cfg.min_buffer} transitions")
    j = sample_starts(replay, cfg.nstep, cfg.batch, rng)
    feats = learner.qnet.features(replay.window(j))
    actions = replay.act[replay._slot(j + 1)]
    rewards = replay.rew[replay._slot(j[:, None] + 1 + np.arange(cfg.nstep))]
    q_next = forward_mlp(learner.target.params, learner.target.features(replay.window(j + cfg.nstep)))
    targets = nstep_targets(rewards, q_next.max(axis=1), cfg.discount)
    tape = ad.Tape()
    leaves = tape.watch(learner.qnet.params)
    loss = td_loss(learner.qnet, leaves, feats, actions, targets)
    grads = ad.backward(tape, loss, learner.qnet.params)
    adam_step(learner.adam, learner.qnet.params, grads)
    learner.updates += 1
    if learner.updates % cfg.target_sync_period == 0:
        learner.target.params.assign(learner.qnet.params)
    return {"td_loss": float(loss.value), "target_mean": float(targets.mean())}
