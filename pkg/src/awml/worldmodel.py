"""Ensemble-of-component-networks forward model with the masked coordinate loss.

Trajectory convention used throughout: ``obs[j]`` is the observation produced
by ``act[j]``. A window starting at ``j`` has

    X = obs[j : j+tau_in]                 past observations
    A = act[j : j+tau_in+tau_out]         actions (A[0] produced X[0])
    Y = obs[j+tau_in : j+tau_in+tau_out]  targets

The recurrent input at step s (s = 0 .. tau_in+tau_out-2) is the observation
X[s] (zeros once s >= tau_in), the one-hot of the action A[s+1] that leads to
the next observation, and an "observed" flag. The output at step s predicts
the observation after A[s+1]; the last tau_out outputs are the prediction.
Rollouts are open loop: predictions are never fed back as inputs.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from awml.env.geometry import N_ACTIONS
from awml.env.room import ObsLayout
from awml.errors import ConfigError, ContractError, SchemaError
from awml.numcore import autodiff as ad
from awml.numcore.checkpoint import load_params, save_params
from awml.numcore.layers import forward_lstm_mlp, init_lstm_mlp
from awml.numcore.optim import AdamState, adam_step
from awml.numcore.params import ParamSet, check_schema, ema_blend_


@dataclass
class WMConfig:
    tau_in: int = 10
    tau_out: int = 5
    hidden_single: int = 256
    hidden_group: int = 512
    entangled: bool = False
    batch: int = 256
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    squared: bool = False       # sensitivity flag: squared instead of Euclidean coordinate error
    dtype: str = "float64"

    def validate(self) -> None:
        if self.tau_in < 1 or self.tau_out < 1:
            raise ConfigError("tau_in and tau_out must be >= 1")
        if min(self.hidden_single, self.hidden_group, self.batch) < 1:
            raise ConfigError("hidden sizes and batch must be positive")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"dtype must be float64 or float32, got {self.dtype!r}")

    def hidden_for(self, group_size: int) -> int:
        return self.hidden_single if group_size == 1 else self.hidden_group

    @property
    def seq_len(self) -> int:
        return self.tau_in + self.tau_out - 1


@dataclass(frozen=True)
class GroupSpec:
    groups: tuple[tuple[int, ...], ...]

    @classmethod
    def of(cls, groups) -> GroupSpec:
        return cls(tuple(tuple(int(i) for i in g) for g in groups))

    def validate(self, n_agents: int) -> None:
        flat = sorted(i for g in self.groups for i in g)
        if flat != list(range(n_agents)) or any(len(g) == 0 for g in self.groups):
            raise ConfigError(f"groups {self.groups} do not partition agents 0..{n_agents - 1}")


@dataclass
class Batch:
    X: np.ndarray   # (B, tau_in, dim)
    A: np.ndarray   # (B, tau_in + tau_out) int
    Y: np.ndarray   # (B, tau_out, dim)

    def __len__(self) -> int:
        return len(self.X)


def make_batch(obs: np.ndarray, act: np.ndarray, starts, cfg: WMConfig) -> Batch:
    starts = np.asarray(starts, dtype=np.int64)
    ti, to = cfg.tau_in, cfg.tau_out
    if starts.size and (starts.min() < 0 or starts.max() + ti + to > len(obs)):
        raise ContractError("window runs outside the trajectory")
    X = obs[starts[:, None] + np.arange(ti)]
    A = act[starts[:, None] + np.arange(ti + to)]
    Y = obs[starts[:, None] + ti + np.arange(to)]
    return Batch(X, A, Y)


@dataclass
class _Stack:
    """Same-sized components evaluated as one stacked network."""
    comp_ids: list[int]
    agents: np.ndarray      # (K, g) agent indices per stacked component
    cols: np.ndarray        # (K, d_obs) observation columns feeding each component
    scale: np.ndarray       # (d_obs,) per-column input scaling
    params: ParamSet = field(repr=False)

    @property
    def size(self) -> int:
        return self.agents.shape[1]


class WorldModel:
    """Components ω_k over groups I_k; outputs concatenated in agent order.

    Coordinates enter and leave the networks divided by `half_extent`, so
    predict() returns room coordinates while the nets see values in [-1, 1].
    """

    def __init__(self, cfg: WMConfig, layout: ObsLayout, groups: GroupSpec, rng: np.random.Generator,
                 half_extent: float = 10.0):
        cfg.validate()
        groups.validate(layout.n_agents)
        self.cfg = cfg
        self.layout = layout
        self.groups = groups
        self.half_extent = float(half_extent)
        comps = [tuple(range(layout.n_agents))] if cfg.entangled else list(groups.groups)
        by_size: dict[int, list[int]] = {}
        for k, g in enumerate(comps):
            by_size.setdefault(len(g), []).append(k)
        self.components = comps
        self.stacks: list[_Stack] = []
        dtype = np.dtype(cfg.dtype)
        for size in sorted(by_size):
            ids = by_size[size]
            agents = np.array([comps[k] for k in ids], dtype=np.int64)
            cols = np.array([self._columns(comps[k]) for k in ids], dtype=np.int64)
            scale = self._scale(size)
            d_in = cols.shape[1] + N_ACTIONS + 1
            hidden = cfg.hidden_group if cfg.entangled else cfg.hidden_for(size)
            params = init_lstm_mlp(rng, d_in, hidden, 3 * size, stack=len(ids)).astype(dtype)
            self.stacks.append(_Stack(ids, agents, cols, scale, params))

    # -- input plumbing --------------------------------------------------------------
    def _columns(self, group) -> list[int]:
        L = self.layout
        cols = []
        for i in group:
            cols.extend(range(3 * i, 3 * i + 3))
        cols.extend(range(L.aux_slice.start, L.aux_slice.stop))
        cols.extend(range(L.ego_slice.start, L.ego_slice.stop))
        return cols

    def _scale(self, size: int) -> np.ndarray:
        s = [1.0 / self.half_extent, 1.0 / self.half_extent, 1.0] * size
        s += [1.0 / self.half_extent] * (2 * self.layout.n_aux) + [1.0, 1.0]
        return np.array(s)

    def inputs(self, st: _Stack, X: np.ndarray, A: np.ndarray, n_steps: int) -> np.ndarray:
        """(T, K, B, d_in) recurrent inputs for `n_steps` steps (past steps first)."""
        B, ti = X.shape[0], X.shape[1]
        K, d_obs = st.cols.shape
        out = np.zeros((n_steps, K, B, d_obs + N_ACTIONS + 1), dtype=st.params.dtype)
        past = min(ti, n_steps)
        obs = X[:, :past][:, :, st.cols] * st.scale          # (B, past, K, d_obs)
        out[:past, :, :, :d_obs] = obs.transpose(1, 2, 0, 3)
        out[:past, :, :, -1] = 1.0
        a = A[:, 1:n_steps + 1]                               # (B, n_steps)
        onehot = np.eye(N_ACTIONS, dtype=out.dtype)[a]        # (B, n_steps, 9)
        out[:, :, :, d_obs:d_obs + N_ACTIONS] = onehot.transpose(1, 0, 2)[:, None]
        return out

    def _check(self, X, A, n_future):
        ti = self.cfg.tau_in
        if X.ndim != 3 or X.shape[1] != ti or X.shape[2] != self.layout.dim:
            raise ContractError(f"X must be (B, {ti}, {self.layout.dim}), got {X.shape}")
        if A.shape != (X.shape[0], ti + n_future):
            raise ContractError(f"A must be (B, {ti + n_future}), got {A.shape}")

    # -- evaluation ---------------------------------------------------------------------
    def predict(self, X: np.ndarray, A: np.ndarray, n_future: int | None = None):
        """Open-loop prediction: (coords (B, n_future, n, 2), mask logits (B, n_future, n))."""
        n_future = self.cfg.tau_out if n_future is None else n_future
        X, A = np.asarray(X), np.asarray(A)
        self._check(X, A, n_future)
        B = X.shape[0]
        T = self.cfg.tau_in + n_future - 1
        n = self.layout.n_agents
        coords = np.zeros((B, n_future, n, 2))
        logits = np.zeros((B, n_future, n))
        for st in self.stacks:
            out, _ = forward_lstm_mlp(st.params, self.inputs(st, X, A, T))
            c, m = _split(out[self.cfg.tau_in - 1:], st.size)     # (F, K, B, g, 2), (F, K, B, g)
            c = c * self.half_extent
            coords[:, :, st.agents.ravel()] = c.transpose(2, 0, 1, 3, 4).reshape(B, n_future, -1, 2)
            logits[:, :, st.agents.ravel()] = m.transpose(2, 0, 1, 3).reshape(B, n_future, -1)
        return coords, logits

    def predict_next(self, X: np.ndarray, A: np.ndarray) -> np.ndarray:
        """One-step coordinate estimates for a single window: X (tau_in, dim), A (tau_in+1,)."""
        coords, _ = self.predict(np.asarray(X)[None], np.asarray(A)[None], n_future=1)
        return coords[0, 0]

    def window_losses(self, batch: Batch, coord_only: bool = False) -> np.ndarray:
        """Per-window loss, shape (B,)."""
        coords, logits = self.predict(batch.X, batch.A)
        c_t, m_t = self.layout.coords(batch.Y), self.layout.masks(batch.Y)
        coord, ce = loss_terms(coords, logits, c_t, m_t, squared=self.cfg.squared)
        return coord if coord_only else coord + ce

    # -- parameter utilities ---------------------------------------------------------
    def clone(self) -> WorldModel:
        new = copy.copy(self)
        new.stacks = [copy.copy(st) for st in self.stacks]
        for st in new.stacks:
            st.params = st.params.copy()
        return new

    def new_adam(self) -> list[AdamState]:
        c = self.cfg
        return [AdamState.for_params(st.params, lr=c.lr, beta1=c.beta1, beta2=c.beta2) for st in self.stacks]

    def component_params(self, k: int) -> ParamSet:
        for st in self.stacks:
            if k in st.comp_ids:
                j = st.comp_ids.index(k)
                return ParamSet({name: v[j] for name, v in st.params.items()})
        raise IndexError(k)

    def params(self) -> ParamSet:
        """All components, one `comp{k}.` namespace each."""
        out = ParamSet()
        for k in range(len(self.components)):
            for name, v in self.component_params(k).items():
                out[f"comp{k}.{name}"] = v
        return out

    def load(self, flat: ParamSet) -> None:
        for st in self.stacks:
            for name in st.params.keys():
                try:
                    parts = [flat[f"comp{k}.{name}"] for k in st.comp_ids]
                except KeyError as e:
                    raise SchemaError(f"checkpoint is missing {e}") from None
                arr = np.stack(parts)
                if arr.shape != st.params[name].shape:
                    raise SchemaError(f"{name}: shape {arr.shape} != {st.params[name].shape}")
                st.params[name] = arr.astype(st.params[name].dtype)

    def equal(self, other: WorldModel) -> bool:
        return all(a.params.equal(b.params) for a, b in zip(self.stacks, other.stacks))


def _split(out, g: int):
    """(..., 3g) -> coords (..., g, 2), logits (..., g)."""
    return out[..., :2 * g].reshape(out.shape[:-1] + (g, 2)), out[..., 2 * g:]


def loss_terms(coords, logits, c_target, mask, squared: bool = False):
    """Per-window (coordinate term, cross-entropy term), summed over horizon and agents."""
    diff = np.asarray(coords) - np.asarray(c_target)
    d2 = np.sum(diff * diff, axis=-1)
    dist = d2 if squared else np.sqrt(d2)
    z = np.asarray(logits)
    m = np.asarray(mask, dtype=z.dtype)
    ce = np.maximum(z, 0.0) - z * m + np.log1p(np.exp(-np.abs(z)))
    axes = tuple(range(1, dist.ndim)) if dist.ndim > 1 else None
    if dist.ndim <= 1:
        return float(np.sum(m * dist)), float(np.sum(ce))
    return np.sum(m * dist, axis=axes), np.sum(ce, axis=axes)


def wm_loss(coords, logits, c_target, mask, squared: bool = False) -> float:
    """Σ_t' Σ_i m·‖ĉ − c̃‖₂ + BCE(σ(m̂), m) for one window (arrays shaped (tau_out, n, ...))."""
    coord, ce = loss_terms(np.asarray(coords)[None], np.asarray(logits)[None],
                           np.asarray(c_target)[None], np.asarray(mask)[None], squared)
    return float(coord[0] + ce[0])


def wm_predict(model: WorldModel, X, A):
    return model.predict(X, A)


def _stack_loss(model: WorldModel, st: _Stack, leaves, batch: Batch, tape: ad.Tape):
    """Recorded batch-mean loss restricted to the stack's outputs."""
    cfg = model.cfg
    B = len(batch)
    out, _ = forward_lstm_mlp(leaves, model.inputs(st, batch.X, batch.A, cfg.seq_len), tape=tape)
    out = ad.getitem(out, (slice(cfg.tau_in - 1, None),))           # (F, K, B, 3g)
    g = st.size
    F, K = cfg.tau_out, len(st.comp_ids)
    coords = ad.reshape(ad.getitem(out, (Ellipsis, slice(0, 2 * g))), (F, K, B, g, 2))
    coords = ad.scale(coords, model.half_extent)        # coordinate head works in room-scaled units
    logits = ad.getitem(out, (Ellipsis, slice(2 * g, None)))
    # targets arranged (F, K, B, g, ...)
    c_t = model.layout.coords(batch.Y)[:, :, st.agents]               # (B, F, K, g, 2)
    m_t = model.layout.masks(batch.Y)[:, :, st.agents]                # (B, F, K, g)
    c_t = c_t.transpose(1, 2, 0, 3, 4).astype(st.params.dtype)
    m_t = m_t.transpose(1, 2, 0, 3).astype(st.params.dtype)
    diff = ad.sub(coords, c_t)
    dist = ad.total(ad.square(diff), axis=-1) if cfg.squared else ad.norm2(diff)
    coord_term = ad.total(ad.mul(dist, m_t))
    ce_term = ad.total(ad.bce_logits(logits, m_t))
    return ad.scale(ad.add(coord_term, ce_term), 1.0 / B)


def wm_grads(model: WorldModel, batch: Batch) -> tuple[list[ParamSet], float]:
    """Per-stack gradients of the batch-mean loss, plus the loss value."""
    tape = ad.Tape()
    grads, losses = [], []
    for s, st in enumerate(model.stacks):
        leaves = tape.watch(st.params, prefix=f"s{s}.")
        losses.append(_stack_loss(model, st, leaves, batch, tape))
    loss = losses[0]
    for other in losses[1:]:
        loss = ad.add(loss, other)
    full = ad.backward(tape, loss)
    for s, st in enumerate(model.stacks):
        grads.append(ParamSet({k: full[f"s{s}.{k}"] for k in st.params.keys()}))
    return grads, float(loss.value)


def wm_train_step(model: WorldModel, batch: Batch, adam: list[AdamState]) -> float:
    """One Adam step per component on the batch-mean loss; returns that loss (pre-step)."""
    if len(batch) == 0:
        raise ContractError("empty batch")
    grads, loss = wm_grads(model, batch)
    for st, g, state in zip(model.stacks, grads, adam):
        adam_step(state, st.params, g)
    return loss


def old_model_update(old: WorldModel, new: WorldModel, gamma: float) -> WorldModel:
    """θ_old ← γ θ_old + (1 − γ) θ_new, per component, in place."""
    if len(old.stacks) != len(new.stacks):
        raise SchemaError("world models have different component layouts")
    for a, b in zip(old.stacks, new.stacks):
        check_schema(a.params, b.params)
        ema_blend_(a.params, b.params, gamma)
    return old


WARM_START_UPDATE = 100


def warm_start_sync(old: WorldModel, new: WorldModel, update_counter: int) -> WorldModel:
    """At world-model update 100 exactly, old := copy(new)."""
    if update_counter == WARM_START_UPDATE:
        for a, b in zip(old.stacks, new.stacks):
            a.params.assign(b.params)
    return old


def save_world_model(model: WorldModel, directory: str | Path) -> Path:
    return save_params(model.params(), directory)


def load_world_model(model: WorldModel, directory: str | Path) -> WorldModel:
    model.load(load_params(directory))
    return model
