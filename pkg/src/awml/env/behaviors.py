"""Hard-coded dynamics of the external agents.

Each behavior owns one quadrant zone, one or two agents, and optionally some
auxiliary objects (reaching targets, the peekaboo hiding object). Programs
are stateless; all mutable data lives in `ExternalAgentState.phase` and in
the aux array, so an environment can be cloned with a plain deepcopy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from awml.env.geometry import Zone, polar, reflect_across
from awml.errors import ConfigError, ContractError

STATIC, PERIODIC, NOISE = "Static", "Periodic", "Noise"
REACH_DET, REACH_STOCH = "ReachDet", "ReachStoch"
CHASE_DET, CHASE_STOCH = "ChaseDet", "ChaseStoch"
PEEKABOO_DET, PEEKABOO_STOCH = "PeekabooDet", "PeekabooStoch"
MIMIC_DET, MIMIC_STOCH = "MimicDet", "MimicStoch"

INANIMATE_KINDS = (STATIC, PERIODIC, NOISE)
ANIMATE_KINDS = (REACH_DET, REACH_STOCH, CHASE_DET, CHASE_STOCH,
                 PEEKABOO_DET, PEEKABOO_STOCH, MIMIC_DET, MIMIC_STOCH)
ALL_KINDS = INANIMATE_KINDS + ANIMATE_KINDS

DEFAULTS = {
    STATIC: {},
    PERIODIC: {"speed": 0.20},
    NOISE: {"step": 0.25},
    REACH_DET: {"speed": 0.20, "arrival": 0.3, "relocate_every": 500, "n_objects": 3},
    REACH_STOCH: {"speed": 0.20, "arrival": 0.3, "relocate_every": 500, "n_objects": 3},
    CHASE_DET: {"chaser_speed": 0.22, "runner_speed": 0.25, "bound_threshold": 0.5},
    CHASE_STOCH: {"chaser_speed": 0.22, "runner_speed": 0.25, "bound_threshold": 0.5,
                  "min_escape_distance": 2.0},
    PEEKABOO_DET: {"speed": 0.25, "stare_steps": 5, "peek_after": 40},
    PEEKABOO_STOCH: {"speed": 0.25, "stare_steps": 5, "peek_after": 40, "n_peek": 3},
    MIMIC_DET: {"step": 0.25, "delay": 10},
    MIMIC_STOCH: {"step": 0.25, "delay": 10, "noise_sigma": 0.05},
}


@dataclass
class BehaviorSpec:
    kind: str
    quadrant: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ConfigError(f"unknown behavior kind {self.kind!r}")
        if self.quadrant not in (1, 2, 3, 4):
            raise ConfigError(f"quadrant must be 1..4, got {self.quadrant}")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise ConfigError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged = dict(DEFAULTS[self.kind])
        merged.update(self.params)
        self.params = merged
        for k, v in merged.items():
            if ("speed" in k or k == "step") and not v > 0:
                raise ConfigError(f"{self.kind}.{k} must be > 0")

    @property
    def n_agents(self) -> int:
        return 2 if self.kind in (CHASE_DET, CHASE_STOCH, MIMIC_DET, MIMIC_STOCH) else 1

    @property
    def animate(self) -> bool:
        return self.kind in ANIMATE_KINDS


@dataclass
class ExternalAgentState:
    position: np.ndarray
    phase: dict = field(default_factory=dict)

    def copy(self) -> ExternalAgentState:
        ph = {k: (v.copy() if isinstance(v, (np.ndarray, list)) else v) for k, v in self.phase.items()}
        return ExternalAgentState(self.position.copy(), ph)

    @property
    def label(self) -> str:
        return str(self.phase.get("mode", ""))


@dataclass
class StepContext:
    t: int
    visible: np.ndarray | None  # previous-step visibility of this behavior's agents
    rngs: list                   # one Generator per agent
    aux_rng: np.random.Generator | None = None


def _toward(p: np.ndarray, target: np.ndarray, speed: float) -> tuple[np.ndarray, bool]:
    d = target - p
    n = math.hypot(float(d[0]), float(d[1]))
    if n <= speed:
        return target.copy(), True
    return p + d * (speed / n), False


def _random_step(p: np.ndarray, zone: Zone, step: float, rng: np.random.Generator) -> np.ndarray:
    for _ in range(64):
        th = rng.uniform(0.0, 2.0 * math.pi)
        q = p + step * np.array([math.cos(th), math.sin(th)])
        if zone.contains(q):
            return q
    # towards the zone center always stays inside for steps below the zone half-width
    return zone.clamp(_toward(p, zone.center, step)[0])


class Program:
    n_aux = 0
    needs_gaze = False

    def __init__(self, spec: BehaviorSpec, zone: Zone):
        self.spec = spec
        self.zone = zone
        self.p = spec.params

    def init(self, rngs, aux_rng) -> tuple[list[ExternalAgentState], np.ndarray]:
        raise NotImplementedError

    def step(self, states, aux, ctx: StepContext) -> tuple[list[ExternalAgentState], np.ndarray]:
        raise NotImplementedError

    def new_aux(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros((0, 2))


class StaticProgram(Program):
    def init(self, rngs, aux_rng):
        return [ExternalAgentState(self.zone.center, {"mode": "still"})], np.zeros((0, 2))

    def step(self, states, aux, ctx):
        return [states[0].copy()], aux


class PeriodicProgram(Program):
    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        z = self.zone
        span = z.r_max - z.r_min
        a = polar(z.r_min + 0.15 * span, z.mid_deg - 0.5 * (z.mid_deg - z.lo_deg))
        b = polar(z.r_max - 0.15 * span, z.mid_deg + 0.5 * (z.hi_deg - z.mid_deg))
        return a, b

    def init(self, rngs, aux_rng):
        a, _ = self.endpoints()
        return [ExternalAgentState(a, {"mode": "toB"})], np.zeros((0, 2))

    def step(self, states, aux, ctx):
        s = states[0].copy()
        a, b = self.endpoints()
        target = b if s.phase["mode"] == "toB" else a
        s.position, arrived = _toward(s.position, target, self.p["speed"])
        if arrived:
            s.phase["mode"] = "toA" if s.phase["mode"] == "toB" else "toB"
        return [s], aux


class NoiseProgram(Program):
    def init(self, rngs, aux_rng):
        return [ExternalAgentState(self.zone.sample(rngs[0]), {"mode": "wander"})], np.zeros((0, 2))

    def step(self, states, aux, ctx):
        s = states[0].copy()
        s.position = _random_step(s.position, self.zone, self.p["step"], ctx.rngs[0])
        return [s], aux


class ReachProgram(Program):
    stochastic = False

    @property
    def n_aux(self):
        return int(self.p["n_objects"])

    def new_aux(self, rng):
        pts = []
        attempts = 0
        while len(pts) < self.n_aux:
            q = self.zone.sample(rng, margin=0.3)
            attempts += 1
            if attempts > 200 or all(np.hypot(*(q - r)) >= 1.0 for r in pts):
                pts.append(q)
        return np.array(pts)

    def init(self, rngs, aux_rng):
        aux = self.new_aux(aux_rng)
        return [ExternalAgentState(self.zone.center, {"mode": "reach", "target": 0})], aux

    def step(self, states, aux, ctx):
        s = states[0].copy()
        every = int(self.p["relocate_every"])
        if every > 0 and ctx.t > 0 and ctx.t % every == 0:
            aux = self.new_aux(ctx.aux_rng)
        target = int(s.phase["target"])
        s.position, _ = _toward(s.position, aux[target], self.p["speed"])
        if np.hypot(*(s.position - aux[target])) <= self.p["arrival"]:
            if self.stochastic:
                s.phase["target"] = int(ctx.rngs[0].integers(self.n_aux))
            else:
                s.phase["target"] = (target + 1) % self.n_aux
        s.position = self.zone.clamp(s.position)
        return [s], aux


class ReachStochProgram(ReachProgram):
    stochastic = True


class ChaseProgram(Program):
    """Agent 0 chases agent 1; the runner flees and escapes when cornered."""
    stochastic = False

    def escape_points(self) -> list[np.ndarray]:
        z = self.zone
        span = z.r_max - z.r_min
        q = 0.5 * (z.hi_deg - z.lo_deg)
        return [polar(z.r_min + 0.2 * span, z.mid_deg),
                polar(z.r_max - 0.2 * span, z.mid_deg - 0.5 * q),
                polar(z.r_max - 0.2 * span, z.mid_deg + 0.5 * q)]

    def init(self, rngs, aux_rng):
        pts = self.escape_points()
        chaser = ExternalAgentState(pts[0].copy(), {"mode": "chase"})
        runner = ExternalAgentState(self.zone.center, {"mode": "flee"})
        return [chaser, runner], np.zeros((0, 2))

    def _pick_escape(self, chaser_pos, runner_pos, rng):
        if not self.stochastic:
            pts = self.escape_points()
            d = [np.hypot(*(p - chaser_pos)) for p in pts]
            return pts[int(np.argmax(d))]
        best, best_d = None, -1.0
        for _ in range(32):
            q = self.zone.sample(rng, margin=self.p["bound_threshold"] + 0.1)
            dq = float(np.hypot(*(q - chaser_pos)))
            if dq >= self.p["min_escape_distance"]:
                return q
            if dq > best_d:
                best, best_d = q, dq
        return best

    def step(self, states, aux, ctx):
        if len(states) != 2:
            raise ContractError("chasing needs both chaser and runner states")
        chaser, runner = states[0].copy(), states[1].copy()
        old_runner = runner.position.copy()
        chaser.position, _ = _toward(chaser.position, old_runner, self.p["chaser_speed"])
        chaser.position = self.zone.clamp(chaser.position)

        rs = self.p["runner_speed"]
        if runner.phase["mode"] == "escape":
            target = np.asarray(runner.phase["target"])
            runner.position, arrived = _toward(runner.position, target, rs)
            if arrived:
                runner.phase = {"mode": "flee"}
        else:
            away = runner.position - states[0].position
            n = float(np.hypot(*away))
            if n < 1e-12:
                away, n = np.array([1.0, 0.0]), 1.0
            runner.position = runner.position + away * (rs / n)
            if self.zone.boundary_distance(self.zone.clamp(runner.position)) < self.p["bound_threshold"] \
                    or not self.zone.contains(runner.position):
                target = self._pick_escape(chaser.position, runner.position, ctx.rngs[1])
                runner.phase = {"mode": "escape", "target": np.asarray(target).copy()}
        runner.position = self.zone.clamp(runner.position)
        return [chaser, runner], aux


class ChaseStochProgram(ChaseProgram):
    stochastic = True


class PeekabooProgram(Program):
    """Exposed -> (stare) Hidden -> (keep staring) Peeking -> Hidden ...; look-away -> Exposed."""
    n_aux = 1
    needs_gaze = True
    stochastic = False

    def locations(self, aux: np.ndarray):
        z = self.zone
        obj = aux[0]
        r_obj = float(np.hypot(*obj))
        ang = math.degrees(math.atan2(obj[1], obj[0]))
        hide = polar(min(r_obj + 0.6, z.r_max), ang)
        lateral = 0.6 * (z.hi_deg - z.mid_deg)
        r_peek = min(r_obj + 0.6, z.r_max)
        peeks = [polar(r_peek, ang + lateral)]
        if self.stochastic:
            extra = [polar(r_peek, ang - 0.95 * lateral), polar(min(r_obj + 1.6, z.r_max), ang + 0.5 * lateral)]
            peeks += extra[:max(int(self.p["n_peek"]) - 1, 0)]
        exposed = polar(z.r_min + 0.2 * (z.r_max - z.r_min), z.mid_deg)
        return exposed, hide, [self.zone.clamp(p) for p in peeks]

    def new_aux(self, rng):
        z = self.zone
        return np.array([polar(z.r_min + 0.55 * (z.r_max - z.r_min), z.mid_deg - 0.3 * (z.mid_deg - z.lo_deg))])

    def init(self, rngs, aux_rng):
        aux = self.new_aux(aux_rng)
        exposed, _, _ = self.locations(aux)
        return [ExternalAgentState(exposed, {"mode": "Exposed", "stare": 0, "peek": 0})], aux

    def step(self, states, aux, ctx):
        if ctx.visible is None:
            raise ContractError("peekaboo needs the previous-step gaze visibility")
        s = states[0].copy()
        exposed, hide, peeks = self.locations(aux)
        seen = bool(ctx.visible[0])
        ph = s.phase
        stare_steps = int(self.p["stare_steps"])
        if not seen:
            ph["mode"], ph["stare"] = "Exposed", 0
        else:
            ph["stare"] += 1
            if ph["mode"] == "Exposed" and ph["stare"] >= stare_steps:
                ph["mode"] = "Hidden"
            elif ph["mode"] == "Hidden" and ph["stare"] >= stare_steps + int(self.p["peek_after"]):
                ph["mode"] = "Peeking"
                if self.stochastic:
                    ph["peek"] = int(ctx.rngs[0].integers(len(peeks)))
        target = {"Exposed": exposed, "Hidden": hide}.get(ph["mode"])
        if target is None:
            target = peeks[int(ph["peek"])]
        s.position, arrived = _toward(s.position, target, self.p["speed"])
        if ph["mode"] == "Peeking" and arrived and seen:
            # caught peeking: duck back behind the object and restart the peek timer
            ph["mode"], ph["stare"] = "Hidden", stare_steps
        s.position = self.zone.clamp(s.position)
        return [s], aux


class PeekabooStochProgram(PeekabooProgram):
    stochastic = True


class MimicProgram(Program):
    """Agent 0 (actor) wanders in the upper half; agent 1 mirrors it with a delay."""
    stochastic = False

    def halves(self) -> tuple[Zone, Zone]:
        lower, upper = self.zone.split()
        return upper, lower  # actor half, imitator half

    def init(self, rngs, aux_rng):
        actor_zone, imit_zone = self.halves()
        a0 = actor_zone.sample(rngs[0], margin=0.3)
        actor = ExternalAgentState(a0, {"mode": "act"})
        imitator = ExternalAgentState(reflect_across(a0, self.zone.mid_deg),
                                      {"mode": "imitate", "buffer": [a0.copy()]})
        return [actor, imitator], np.zeros((0, 2))

    def step(self, states, aux, ctx):
        if len(states) != 2:
            raise ContractError("mimicry needs both actor and imitator states")
        actor_zone, imit_zone = self.halves()
        actor, imit = states[0].copy(), states[1].copy()
        actor.position = _random_step(actor.position, actor_zone, self.p["step"], ctx.rngs[0])
        buf = [np.asarray(b) for b in imit.phase["buffer"]]
        buf.append(actor.position.copy())
        delay = int(self.p["delay"])
        if len(buf) > delay + 1:
            buf = buf[-(delay + 1):]
        imit.phase["buffer"] = buf
        pos = reflect_across(buf[0], self.zone.mid_deg)
        if self.stochastic:
            pos = pos + ctx.rngs[1].normal(0.0, self.p["noise_sigma"], size=2)
        imit.position = imit_zone.clamp(pos)
        return [actor, imit], aux


class MimicStochProgram(MimicProgram):
    stochastic = True


PROGRAMS = {
    STATIC: StaticProgram, PERIODIC: PeriodicProgram, NOISE: NoiseProgram,
    REACH_DET: ReachProgram, REACH_STOCH: ReachStochProgram,
    CHASE_DET: ChaseProgram, CHASE_STOCH: ChaseStochProgram,
    PEEKABOO_DET: PeekabooProgram, PEEKABOO_STOCH: PeekabooStochProgram,
    MIMIC_DET: MimicProgram, MIMIC_STOCH: MimicStochProgram,
}


def make_program(spec: BehaviorSpec, zone: Zone) -> Program:
    return PROGRAMS[spec.kind](spec, zone)


def behavior_step(spec: BehaviorSpec, zone: Zone, states, aux, ctx: StepContext):
    """Advance one behavior by one tick; returns (new states, new aux)."""
    prog = make_program(spec, zone)
    if len(states) != spec.n_agents:
        raise ContractError(f"{spec.kind} expects {spec.n_agents} agent states, got {len(states)}")
    if len(ctx.rngs) < spec.n_agents:
        raise ContractError(f"{spec.kind} expects {spec.n_agents} random streams")
    return prog.step(states, aux, ctx)
