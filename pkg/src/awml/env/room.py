"""The four-quadrant room and its oracle encoder."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from awml.env import behaviors as bh
from awml.env.geometry import N_ACTIONS, RoomConfig, Zone, action_index, rotate, visible_many
from awml.errors import ConfigError, ContractError

MIXTURE, NOISE_WORLD = "Mixture", "NoiseWorld"
AUX_STREAM = 1000


def rng_stream(seed: int, quadrant: int, index: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, quadrant, index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(quadrant), int(index)])))


@dataclass(frozen=True)
class WorldSpec:
    kind: str = NOISE_WORLD
    animate_kind: str = bh.REACH_DET
    seed: int = 0
    behavior_params: dict = field(default_factory=dict, hash=False, compare=False)

    def validate(self) -> None:
        if self.kind not in (MIXTURE, NOISE_WORLD):
            raise ConfigError(f"world kind must be {MIXTURE!r} or {NOISE_WORLD!r}, got {self.kind!r}")
        if self.animate_kind not in bh.ANIMATE_KINDS:
            raise ConfigError(f"animate_kind must be one of {bh.ANIMATE_KINDS}, got {self.animate_kind!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be a 64-bit non-negative integer")
        unknown = set(self.behavior_params) - set(bh.ALL_KINDS)
        if unknown:
            raise ConfigError(f"behavior_params has unknown kinds {sorted(unknown)}")

    def layout(self) -> list[str]:
        """Behavior kind per quadrant 1..4."""
        if self.kind == MIXTURE:
            return [bh.STATIC, bh.PERIODIC, bh.NOISE, self.animate_kind]
        return [bh.NOISE, bh.NOISE, bh.NOISE, self.animate_kind]

    def behavior_specs(self) -> list[bh.BehaviorSpec]:
        return [bh.BehaviorSpec(kind, q + 1, dict(self.behavior_params.get(kind, {})))
                for q, kind in enumerate(self.layout())]


@dataclass
class Observation:
    c_tilde: np.ndarray   # (n_agents, 2) masked coordinates
    mask: np.ndarray      # (n_agents,) 0/1
    aux: np.ndarray       # (n_aux, 2)
    ego: np.ndarray       # (2,) cos, sin of gaze orientation

    def vector(self) -> np.ndarray:
        ext = np.concatenate([self.c_tilde, self.mask[:, None]], axis=1).ravel()
        return np.concatenate([ext, self.aux.ravel(), self.ego])


@dataclass(frozen=True)
class ObsLayout:
    n_agents: int
    n_aux: int

    @property
    def dim(self) -> int:
        return 3 * self.n_agents + 2 * self.n_aux + 2

    def coord_index(self, i: int) -> slice:
        return slice(3 * i, 3 * i + 2)

    def mask_index(self, i: int) -> int:
        return 3 * i + 2

    @property
    def aux_slice(self) -> slice:
        return slice(3 * self.n_agents, 3 * self.n_agents + 2 * self.n_aux)

    @property
    def ego_slice(self) -> slice:
        return slice(self.dim - 2, self.dim)

    def coords(self, x: np.ndarray) -> np.ndarray:
        """(..., dim) -> (..., n_agents, 2)."""
        ext = x[..., :3 * self.n_agents].reshape(x.shape[:-1] + (self.n_agents, 3))
        return ext[..., :2]

    def masks(self, x: np.ndarray) -> np.ndarray:
        ext = x[..., :3 * self.n_agents].reshape(x.shape[:-1] + (self.n_agents, 3))
        return ext[..., 2]


@dataclass
class _Slot:
    spec: bh.BehaviorSpec
    zone: Zone
    program: bh.Program
    agents: slice
    aux: slice
    rngs: list
    aux_rng: np.random.Generator


class Room:
    """Mutable environment state. Use `reset` to build and `env_step` to advance."""

    def __init__(self, spec: WorldSpec, cfg: RoomConfig):
        spec.validate()
        cfg.validate()
        self.spec = spec
        self.cfg = cfg
        self.t = 0
        self.orientation = float(cfg.init_orientation_deg) % 360.0
        self.slots: list[_Slot] = []
        self.agents: list[bh.ExternalAgentState] = []
        aux_parts = []
        n_aux = 0
        for bspec in spec.behavior_specs():
            zone = Zone.for_quadrant(bspec.quadrant, cfg)
            prog = bh.make_program(bspec, zone)
            rngs = [rng_stream(spec.seed, bspec.quadrant, i) for i in range(bspec.n_agents)]
            aux_rng = rng_stream(spec.seed, bspec.quadrant, AUX_STREAM)
            states, aux = prog.init(rngs, aux_rng)
            a0 = len(self.agents)
            self.agents.extend(states)
            self.slots.append(_Slot(bspec, zone, prog, slice(a0, a0 + len(states)),
                                    slice(n_aux, n_aux + len(aux)), rngs, aux_rng))
            aux_parts.append(np.asarray(aux, dtype=np.float64).reshape(-1, 2))
            n_aux += len(aux)
        self.aux = np.concatenate(aux_parts, axis=0) if aux_parts else np.zeros((0, 2))
        self.layout = ObsLayout(len(self.agents), len(self.aux))
        self.last_visible = self.visibility()

    # ---- static facts about the world -------------------------------------------------
    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def agent_kinds(self) -> list[str]:
        return [s.spec.kind for s in self.slots for _ in range(s.spec.n_agents)]

    @property
    def agent_quadrants(self) -> np.ndarray:
        return np.array([s.spec.quadrant for s in self.slots for _ in range(s.spec.n_agents)])

    @property
    def groups(self) -> list[list[int]]:
        """Minimal behaviorally interdependent agent groups (one per behavior)."""
        return [list(range(s.agents.start, s.agents.stop)) for s in self.slots]

    def agents_of(self, kind: str) -> list[int]:
        return [i for i, k in enumerate(self.agent_kinds) if k == kind]

    @property
    def animate_agents(self) -> list[int]:
        return [i for i, k in enumerate(self.agent_kinds) if k in bh.ANIMATE_KINDS]

    def zone_center(self, i: int) -> np.ndarray:
        for s in self.slots:
            if s.agents.start <= i < s.agents.stop:
                return s.zone.center
        raise IndexError(i)

    def zone_of(self, i: int) -> Zone:
        for s in self.slots:
            if s.agents.start <= i < s.agents.stop:
                return s.zone
        raise IndexError(i)

    def default_estimates(self) -> np.ndarray:
        return np.array([self.zone_center(i) for i in range(self.n_agents)])

    # ---- dynamic state -------------------------------------------------------------------
    def positions(self) -> np.ndarray:
        return np.array([a.position for a in self.agents])

    def phases(self) -> list[str]:
        return [a.label for a in self.agents]

    def visibility(self) -> np.ndarray:
        return visible_many(self.orientation, self.positions(), self.cfg.fov_deg)

    def clone(self) -> Room:
        return copy.deepcopy(self)

    def respawn_aux(self, rng: np.random.Generator) -> None:
        """Move every auxiliary object to a fresh location drawn from `rng`."""
        for s in self.slots:
            if s.aux.stop > s.aux.start:
                self.aux[s.aux] = s.program.new_aux(rng)


def reset(spec: WorldSpec, cfg: RoomConfig | None = None) -> Room:
    return Room(spec, cfg or RoomConfig())


def encode(env: Room, c_hat: np.ndarray | None) -> Observation:
    """Oracle encoder with the masked-coordinate substitution for out-of-view agents."""
    n = env.n_agents
    if c_hat is None:
        c_hat = env.default_estimates()
    c_hat = np.asarray(c_hat, dtype=np.float64)
    if c_hat.shape != (n, 2):
        raise ContractError(f"c_hat must have shape ({n}, 2), got {c_hat.shape}")
    vis = env.visibility()
    truth = env.positions()
    c_tilde = np.where(vis[:, None], truth, c_hat)
    th = np.radians(env.orientation)
    return Observation(c_tilde, vis.astype(np.float64), env.aux.copy(), np.array([np.cos(th), np.sin(th)]))


def env_step(env: Room, a, c_hat: np.ndarray | None) -> tuple[Room, Observation]:
    """Rotate gaze, advance every behavior (contingent on last step's visibility), encode.

    Mutates and returns `env`.
    """
    env.orientation = rotate(env.orientation, action_index(a))
    t_next = env.t + 1
    for s in env.slots:
        states = env.agents[s.agents]
        aux = env.aux[s.aux]
        ctx = bh.StepContext(t_next, env.last_visible[s.agents], s.rngs, s.aux_rng)
        new_states, new_aux = s.program.step(states, aux, ctx)
        env.agents[s.agents] = new_states
        if s.aux.stop > s.aux.start:
            env.aux[s.aux] = new_aux
    env.t = t_next
    obs = encode(env, c_hat)
    env.last_visible = obs.mask.astype(bool)
    return env, obs


def random_actions(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, N_ACTIONS, size=n)
