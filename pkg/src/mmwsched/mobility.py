"""Random waypoint-style motion inside a circular region."""
import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass
class MobilityParams:
    v_min: float
    v_max: float
    r_min: float  # rad/s
    r_max: float
    period: int


@dataclass
class MobilityState:
    x: float
    y: float
    heading: float = 0.0
    speed: float = 0.0
    rotation_rate: float = 0.0
    orientation: float = 0.0
    cx: float = 0.0
    cy: float = 0.0
    radius: float = 0.0
    slots_since_refresh: int = 0

    @classmethod
    def at(cls, x, y, radius, params: MobilityParams, rng: np.random.Generator):
        m = cls(x=x, y=y, cx=x, cy=y, radius=radius)
        m.orientation = rng.uniform(0.0, TWO_PI)
        resample(m, params, rng)
        return m

    @property
    def velocity(self):
        return self.speed * math.cos(self.heading), self.speed * math.sin(self.heading)

    def offset(self) -> float:
        return math.hypot(self.x - self.cx, self.y - self.cy)


def resample(m: MobilityState, params: MobilityParams, rng: np.random.Generator) -> None:
    m.speed = rng.uniform(params.v_min, params.v_max)
    m.heading = rng.uniform(0.0, TWO_PI)
    rate = rng.uniform(params.r_min, params.r_max)
    m.rotation_rate = rate if rng.random() < 0.5 else -rate
    m.slots_since_refresh = 0


def _inside(m: MobilityState, x: float, y: float) -> bool:
    # tolerance absorbs rounding for devices sitting exactly on the rim
    return math.hypot(x - m.cx, y - m.cy) <= m.radius + 1e-9


def step_mobility(m: MobilityState, t_slot: float, params: MobilityParams, rng: np.random.Generator,
                  max_tries: int = 64) -> MobilityState:
    """Advance one slot in place and return ``m``.

    Parameters are refreshed every ``params.period`` slots. A move that would
    leave the region triggers a refresh whose heading is redrawn until the
    move stays inside; after ``max_tries`` the heading points at the centre.
    """
    if m.slots_since_refresh >= params.period:
        resample(m, params, rng)
    step = m.speed * t_slot
    nx = m.x + step * math.cos(m.heading)
    ny = m.y + step * math.sin(m.heading)
    if not _inside(m, nx, ny):
        resample(m, params, rng)
        step = m.speed * t_slot
        for _ in range(max_tries):
            nx = m.x + step * math.cos(m.heading)
            ny = m.y + step * math.sin(m.heading)
            if _inside(m, nx, ny):
                break
            m.heading = rng.uniform(0.0, TWO_PI)
        else:
            m.heading = math.atan2(m.cy - m.y, m.cx - m.x)
            step = min(step, m.offset())
            nx = m.x + step * math.cos(m.heading)
            ny = m.y + step * math.sin(m.heading)
    m.x, m.y = nx, ny
    m.orientation = (m.orientation + m.rotation_rate * t_slot) % TWO_PI
    m.slots_since_refresh += 1
    return m
