"""Gaze kinematics, field-of-view tests and quadrant zones (2-D, degrees)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from awml.errors import ConfigError, GeometryError

ACTIONS = ("Stay", "L12", "L24", "L48", "L96", "R12", "R24", "R48", "R96")
ROTATION = (0, -12, -24, -48, -96, 12, 24, 48, 96)
N_ACTIONS = len(ACTIONS)
QUADRANT_DIAGONALS = {1: 45.0, 2: 135.0, 3: 225.0, 4: 315.0}

_EPS = 1e-9


@dataclass(frozen=True)
class RoomConfig:
    half_extent: float = 10.0
    fov_deg: float = 50.0
    zone_half_angle_deg: float = 15.0
    zone_radii: tuple[float, float] = (4.0, 9.0)
    init_orientation_deg: float = 0.0

    def validate(self) -> None:
        if not self.fov_deg < 90.0 - 2.0 * self.zone_half_angle_deg:
            raise ConfigError(
                f"fov_deg={self.fov_deg} must be < 90 - 2*zone_half_angle_deg "
                f"= {90.0 - 2.0 * self.zone_half_angle_deg} so one gaze cone never spans two zones")
        r0, r1 = self.zone_radii
        if not 0.0 < r0 < r1 <= self.half_extent:
            raise ConfigError(f"zone radii {self.zone_radii} must satisfy 0 < r_min < r_max <= half_extent")
        if not 0.0 < self.fov_deg < 360.0:
            raise ConfigError("fov_deg must lie in (0, 360)")


def action_index(a) -> int:
    if isinstance(a, str):
        try:
            return ACTIONS.index(a)
        except ValueError:
            raise ConfigError(f"unknown action {a!r}") from None
    a = int(a)
    if not 0 <= a < N_ACTIONS:
        raise ConfigError(f"action index {a} out of range")
    return a


def normalize_deg(x: float) -> float:
    y = math.fmod(x, 360.0)
    if y < 0.0:
        y += 360.0
    if y >= 360.0:
        y -= 360.0
    return y


def rotate(orientation_deg: float, a) -> float:
    return normalize_deg(orientation_deg + ROTATION[action_index(a)])


def bearing_deg(p) -> float:
    x, y = float(p[0]), float(p[1])
    if x == 0.0 and y == 0.0:
        raise GeometryError("bearing of the origin is undefined")
    return normalize_deg(math.degrees(math.atan2(y, x)))


def angular_diff(a: float, b: float) -> float:
    """Absolute circular difference in degrees, in [0, 180]."""
    d = abs(normalize_deg(a) - normalize_deg(b))
    return 360.0 - d if d > 180.0 else d


def visible(orientation_deg: float, p, cfg: RoomConfig) -> int:
    """1 iff p lies inside the gaze cone (boundary inclusive, up to float roundoff)."""
    return int(angular_diff(orientation_deg, bearing_deg(p)) <= cfg.fov_deg / 2.0 + _EPS)


def visible_many(orientation_deg: float, points: np.ndarray, fov_deg: float) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if np.any((pts[:, 0] == 0.0) & (pts[:, 1] == 0.0)):
        raise GeometryError("bearing of the origin is undefined")
    bearings = np.degrees(np.arctan2(pts[:, 1], pts[:, 0]))
    d = np.abs((bearings - orientation_deg + 180.0) % 360.0 - 180.0)
    return d <= fov_deg / 2.0 + _EPS


def polar(r: float, deg: float) -> np.ndarray:
    t = math.radians(deg)
    return np.array([r * math.cos(t), r * math.sin(t)])


def reflect_across(p: np.ndarray, line_deg: float) -> np.ndarray:
    """Mirror image of p across the line through the origin at `line_deg`."""
    t = math.radians(2.0 * line_deg)
    c, s = math.cos(t), math.sin(t)
    x, y = float(p[0]), float(p[1])
    return np.array([x * c + y * s, x * s - y * c])


@dataclass(frozen=True)
class Zone:
    """Annular sector: angles [lo_deg, hi_deg] (continuous, lo < hi), radii [r_min, r_max]."""
    lo_deg: float
    hi_deg: float
    r_min: float
    r_max: float

    @classmethod
    def for_quadrant(cls, q: int, cfg: RoomConfig) -> Zone:
        c = QUADRANT_DIAGONALS[q]
        h = cfg.zone_half_angle_deg
        return cls(c - h, c + h, cfg.zone_radii[0], cfg.zone_radii[1])

    @property
    def mid_deg(self) -> float:
        return 0.5 * (self.lo_deg + self.hi_deg)

    @property
    def center(self) -> np.ndarray:
        return polar(0.5 * (self.r_min + self.r_max), self.mid_deg)

    def split(self) -> tuple[Zone, Zone]:
        """(lower-angle half, upper-angle half)."""
        m = self.mid_deg
        return Zone(self.lo_deg, m, self.r_min, self.r_max), Zone(m, self.hi_deg, self.r_min, self.r_max)

    def _rel_angle(self, p) -> float:
        ang = math.degrees(math.atan2(float(p[1]), float(p[0])))
        return (ang - self.mid_deg + 180.0) % 360.0 - 180.0

    def contains(self, p, tol: float = _EPS) -> bool:
        r = math.hypot(float(p[0]), float(p[1]))
        if r < self.r_min - tol or r > self.r_max + tol:
            return False
        half = 0.5 * (self.hi_deg - self.lo_deg)
        return abs(self._rel_angle(p)) <= half + tol

    def clamp(self, p) -> np.ndarray:
        if self.contains(p):
            return np.asarray(p, dtype=np.float64).copy()
        r = math.hypot(float(p[0]), float(p[1]))
        half = 0.5 * (self.hi_deg - self.lo_deg)
        rel = self._rel_angle(p) if r > 0 else 0.0
        rel = min(max(rel, -half), half)
        r = min(max(r, self.r_min), self.r_max)
        return polar(r, self.mid_deg + rel)

    def boundary_distance(self, p) -> float:
        r = math.hypot(float(p[0]), float(p[1]))
        half = 0.5 * (self.hi_deg - self.lo_deg)
        slack = math.radians(half - abs(self._rel_angle(p)))
        return min(r - self.r_min, self.r_max - r, r * math.sin(max(slack, 0.0)))

    def sample(self, rng: np.random.Generator, margin: float = 0.0) -> np.ndarray:
        """Area-uniform point; rejection-samples away from the boundary when margin > 0."""
        for _ in range(1000):
            r = math.sqrt(rng.uniform(self.r_min ** 2, self.r_max ** 2))
            p = polar(r, rng.uniform(self.lo_deg, self.hi_deg))
            if margin <= 0.0 or self.boundary_distance(p) >= margin:
                return p
        return self.center
