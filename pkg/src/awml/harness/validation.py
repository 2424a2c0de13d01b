"""Hard-coded validation protocols. They run on a cloned env with forked RNG streams."""
from __future__ import annotations

import numpy as np

from awml.env import behaviors as bh
from awml.env.geometry import ROTATION, angular_diff, bearing_deg
from awml.env.room import Room, env_step
from awml.errors import ConfigError
from awml.worldmodel import WorldModel, loss_terms, make_batch

STAY = 0


def pursuit_action(orientation: float, target_deg: float, deadband: float | None = None) -> int:
    """Smallest rotation that reduces the bearing error; Stay inside the deadband.

    Without a deadband, Stay whenever no rotation would reduce the error.
    """
    err = (target_deg - orientation + 180.0) % 360.0 - 180.0
    if deadband is not None and abs(err) <= deadband:
        return STAY
    best, best_mag = STAY, None
    for a, r in enumerate(ROTATION):
        if r == 0 or np.sign(r) != np.sign(err):
            continue
        if abs(err - r) < abs(err) and (best_mag is None or abs(r) < best_mag):
            best, best_mag = a, abs(r)
    return best


def _target_bearing(env: Room, agents: list[int]) -> float:
    return bearing_deg(env.positions()[agents].mean(axis=0))


def validation_policy(env: Room, kind: str, agents: list[int]) -> int:
    if kind in (bh.PEEKABOO_DET, bh.PEEKABOO_STOCH):
        return pursuit_action(env.orientation, _target_bearing(env, agents), env.cfg.fov_deg / 4.0)
    return pursuit_action(env.orientation, _target_bearing(env, agents))


def rollout_validation(model: WorldModel, env: Room, kind: str, hist_obs: np.ndarray, hist_act: np.ndarray,
                       steps: int, rng: np.random.Generator):
    """Run the protocol for behavior `kind` on a clone of `env`.

    hist_obs / hist_act hold the last tau_in training records; they seed the
    estimates for out-of-view agents but are not scored. Returns
    (obs (tau_in + steps, dim), act, phases per step).
    """
    if kind not in bh.ALL_KINDS:
        raise ConfigError(f"unknown behavior {kind!r}")
    agents = env.agents_of(kind)
    if not agents:
        raise ConfigError(f"behavior {kind!r} is not present in this world")
    env = env.clone()
    if kind in (bh.REACH_DET, bh.REACH_STOCH):
        env.respawn_aux(rng)
    ti = model.cfg.tau_in
    obs = np.concatenate([hist_obs[-ti:], np.zeros((steps, hist_obs.shape[1]))])
    act = np.concatenate([hist_act[-ti:], np.zeros(steps, dtype=np.int64)])
    phases = []
    for k in range(steps):
        a = validation_policy(env, kind, agents)
        j = ti + k
        act[j] = a
        c_hat = model.predict_next(obs[j - ti:j], act[j - ti:j + 1])
        env, o = env_step(env, a, c_hat)
        obs[j] = o.vector()
        phases.append([env.agents[i].label for i in agents])
    return obs, act, phases


def behavior_loss(model: WorldModel, obs: np.ndarray, act: np.ndarray, agents: list[int],
                  skip: int) -> float:
    """Mean wm loss restricted to `agents`, over windows lying after the first `skip` records."""
    cfg = model.cfg
    n_win = len(obs) - skip - cfg.tau_in - cfg.tau_out + 1
    if n_win < 1:
        raise ConfigError("validation rollout too short for one window")
    batch = make_batch(obs, act, skip + np.arange(n_win), cfg)
    coords, logits = model.predict(batch.X, batch.A)
    L = model.layout
    c_t, m_t = L.coords(batch.Y), L.masks(batch.Y)
    coord, ce = loss_terms(coords[:, :, agents], logits[:, :, agents], c_t[:, :, agents], m_t[:, :, agents],
                           squared=cfg.squared)
    return float(np.mean(coord + ce))


def validate(model: WorldModel, env: Room, kind: str, hist_obs, hist_act, steps: int,
             rng: np.random.Generator) -> float:
    obs, act, _ = rollout_validation(model, env, kind, hist_obs, hist_act, steps, rng)
    return behavior_loss(model, obs, act, env.agents_of(kind), skip=model.cfg.tau_in)


def validated_kinds(env: Room) -> list[str]:
    """Behaviors entering the world scalar: Mixture averages static, periodic and
    animate; the Noise world scores the animate behavior only."""
    kinds = []
    for s in env.slots:
        k = s.spec.kind
        if k in bh.ANIMATE_KINDS or (env.spec.kind == "Mixture" and k in (bh.STATIC, bh.PERIODIC)):
            if k not in kinds:
                kinds.append(k)
    return kinds


def angular_error(env: Room, agents: list[int]) -> float:
    return angular_diff(env.orientation, _target_bearing(env, agents))
