"""Discrete-time 2D arena for a two-wheeled light-seeking robot.

The geometry kernels here are numba-compiled so the same code serves the
Python-level API below and the trial loop in :mod:`layered_evolution.tasks`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from numba import njit

# Layout of the packed parameter vector handed to compiled code.
P_WIDTH, P_HEIGHT, P_RADIUS, P_AXLE, P_VMAX, P_CONTACT, P_RANGE, P_FALLOFF = range(8)

RAY_OFFSETS = (-1.0, 0.0, 1.0)

BLOCK_NONE, BLOCK_OBSTACLE, BLOCK_WALL = 0, 1, 2


class WorldConfigError(ValueError):
    """Raised when the arena cannot be populated within the rejection budget."""


@dataclass(frozen=True)
class WorldConfig:
    width: float = 500.0
    height: float = 500.0
    robot_radius: float = 10.0
    axle: float = 20.0
    max_speed: float = 10.0
    contact_radius: float = 10.0
    n_obstacles: int = 10
    obstacle_min_side: float = 10.0
    obstacle_max_side: float = 40.0
    sensor_range: float = 50.0
    light_falloff: float = 1000.0
    max_attempts: int = 10_000

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise WorldConfigError("arena dimensions must be positive")
        if self.n_obstacles < 0:
            raise WorldConfigError("obstacle count must be non-negative")
        if not 0 < self.obstacle_min_side <= self.obstacle_max_side:
            raise WorldConfigError("obstacle side range is empty")
        if self.obstacle_max_side >= min(self.width, self.height):
            raise WorldConfigError("obstacles do not fit in the arena")
        if 2 * (self.robot_radius + self.contact_radius) >= min(self.width, self.height):
            raise WorldConfigError("arena too small for robot and lights")

    @property
    def touch_distance(self) -> float:
        return self.robot_radius + self.contact_radius

    def as_array(self) -> np.ndarray:
        return np.array([
            self.width, self.height, self.robot_radius, self.axle,
            self.max_speed, self.contact_radius, self.sensor_range,
            self.light_falloff,
        ], dtype=np.float64)


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float


@dataclass(frozen=True)
class RobotPose:
    position: Vec2
    heading: float


@dataclass(frozen=True)
class LightSource:
    id: int
    position: Vec2
    contact_radius: float


@dataclass(frozen=True)
class Obstacle:
    min: Vec2
    max: Vec2

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.min.x, self.min.y, self.max.x, self.max.y)


@dataclass(frozen=True)
class SensorFrame:
    light: tuple[float, float]
    obstacle: tuple[float, float, float]
    contact: tuple[int, int] = (0, 0)
    feedback: int = 0


@dataclass(frozen=True)
class World:
    config: WorldConfig
    robot: RobotPose
    lights: tuple[LightSource, LightSource]
    obstacles: tuple[Obstacle, ...]
    target_light: int
    step_count: int = 0
    _obstacle_array: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._obstacle_array is None:
            arr = np.array([o.as_tuple() for o in self.obstacles], dtype=np.float64)
            object.__setattr__(self, "_obstacle_array", arr.reshape(-1, 4))

    def obstacle_array(self) -> np.ndarray:
        return self._obstacle_array

    def light_array(self) -> np.ndarray:
        return np.array([[l.position.x, l.position.y] for l in self.lights], dtype=np.float64)

    def pose_array(self) -> np.ndarray:
        p = self.robot.position
        return np.array([p.x, p.y, self.robot.heading], dtype=np.float64)


# ---------------------------------------------------------------------------
# compiled geometry
# ---------------------------------------------------------------------------

@njit(cache=True)
def wrap_angle(a):
    a = (a + math.pi) % (2.0 * math.pi) - math.pi
    if a >= math.pi:
        a -= 2.0 * math.pi
    return a


@njit(cache=True)
def disc_hits_rect(cx, cy, r, xmin, ymin, xmax, ymax):
    """True when the open disc overlaps the rectangle (tangency is not overlap)."""
    px = min(max(cx, xmin), xmax)
    py = min(max(cy, ymin), ymax)
    dx = cx - px
    dy = cy - py
    return dx * dx + dy * dy < r * r


@njit(cache=True)
def _light_response(x, y, heading, lx, ly, falloff):
    dx = lx - x
    dy = ly - y
    d = math.sqrt(dx * dx + dy * dy)
    if d == 0.0:
        return 1.0
    c = math.cos(wrap_angle(math.atan2(dy, dx) - heading))
    if c <= 0.0:
        return 0.0
    return c * falloff / (falloff + d)


@njit(cache=True)
def _ray_rect_distance(ox, oy, dx, dy, xmin, ymin, xmax, ymax):
    """Distance along a unit ray to an axis-aligned rectangle, or -1 on a miss."""
    t_enter = -np.inf
    t_exit = np.inf
    if dx == 0.0:
        if ox < xmin or ox > xmax:
            return -1.0
    else:
        t1 = (xmin - ox) / dx
        t2 = (xmax - ox) / dx
        if t1 > t2:
            t1, t2 = t2, t1
        t_enter = max(t_enter, t1)
        t_exit = min(t_exit, t2)
    if dy == 0.0:
        if oy < ymin or oy > ymax:
            return -1.0
    else:
        t1 = (ymin - oy) / dy
        t2 = (ymax - oy) / dy
        if t1 > t2:
            t1, t2 = t2, t1
        t_enter = max(t_enter, t1)
        t_exit = min(t_exit, t2)
    if t_exit < 0.0 or t_exit < t_enter:
        return -1.0
    return max(t_enter, 0.0)


@njit(cache=True)
def _raycast(x, y, heading, offset, params, obstacles):
    a = heading + offset
    dx = math.cos(a)
    dy = math.sin(a)
    r = params[P_RADIUS]
    ox = x + r * dx
    oy = y + r * dy
    w = params[P_WIDTH]
    h = params[P_HEIGHT]
    # walls: exit distance from the arena box
    best = np.inf
    if dx > 0.0:
        best = min(best, (w - ox) / dx)
    elif dx < 0.0:
        best = min(best, -ox / dx)
    if dy > 0.0:
        best = min(best, (h - oy) / dy)
    elif dy < 0.0:
        best = min(best, -oy / dy)
    best = max(best, 0.0)
    for k in range(obstacles.shape[0]):
        t = _ray_rect_distance(ox, oy, dx, dy, obstacles[k, 0], obstacles[k, 1],
                               obstacles[k, 2], obstacles[k, 3])
        if t >= 0.0 and t < best:
            best = t
    rng = params[P_RANGE]
    if best > rng:
        return 0.0
    return 1.0 - best / rng


@njit(cache=True)
def _step_pose(x, y, heading, left, right, params, obstacles):
    vmax = params[P_VMAX]
    vl = vmax * left
    vr = vmax * right
    heading = wrap_angle(heading + (vr - vl) / params[P_AXLE])
    v = 0.5 * (vl + vr)
    nx = x + v * math.cos(heading)
    ny = y + v * math.sin(heading)
    r = params[P_RADIUS]
    blocked = BLOCK_NONE
    if nx < r or nx > params[P_WIDTH] - r or ny < r or ny > params[P_HEIGHT] - r:
        blocked = BLOCK_WALL
    else:
        for k in range(obstacles.shape[0]):
            if disc_hits_rect(nx, ny, r, obstacles[k, 0], obstacles[k, 1],
                              obstacles[k, 2], obstacles[k, 3]):
                blocked = BLOCK_OBSTACLE
                break
    if blocked != BLOCK_NONE:
        return x, y, heading, blocked
    return nx, ny, heading, blocked


@njit(cache=True)
def _touched_light(x, y, lights, params):
    reach = params[P_RADIUS] + params[P_CONTACT]
    for i in range(2):
        dx = lights[i, 0] - x
        dy = lights[i, 1] - y
        if dx * dx + dy * dy <= reach * reach:
            return i
    return -1


@njit(cache=True)
def _light_spot_ok(px, py, qx, qy, check_other, rx, ry, params, obstacles):
    """Whether a light may sit at (px, py).

    Its contact disc must clear every obstacle, the robot at (rx, ry) must not
    already be touching it, and it must be far enough from the other light at
    (qx, qy) that no robot pose touches both at once.
    """
    reach = params[P_RADIUS] + params[P_CONTACT]
    if (px - rx) ** 2 + (py - ry) ** 2 <= reach * reach:
        return False
    if check_other and (px - qx) ** 2 + (py - qy) ** 2 <= 4.0 * reach * reach:
        return False
    cr = params[P_CONTACT]
    for k in range(obstacles.shape[0]):
        if disc_hits_rect(px, py, cr, obstacles[k, 0], obstacles[k, 1],
                          obstacles[k, 2], obstacles[k, 3]):
            return False
    return True


@njit(cache=True)
def _relocate_lights(lights, rx, ry, params, obstacles, rand, pos, max_attempts):
    """Resample both lights in place from the uniform stream ``rand``.

    Returns the new read position, -1 if ``rand`` ran dry, or -2 when the
    attempt budget is exhausted.
    """
    cr = params[P_CONTACT]
    span_x = params[P_WIDTH] - 2.0 * cr
    span_y = params[P_HEIGHT] - 2.0 * cr
    for i in range(2):
        placed = False
        for _ in range(max_attempts):
            if pos + 2 > rand.shape[0]:
                return -1
            px = cr + span_x * rand[pos]
            py = cr + span_y * rand[pos + 1]
            pos += 2
            if _light_spot_ok(px, py, lights[0, 0], lights[0, 1], i == 1,
                              rx, ry, params, obstacles):
                lights[i, 0] = px
                lights[i, 1] = py
                placed = True
                break
        if not placed:
            return -2
    return pos


# ---------------------------------------------------------------------------
# Python-level operations
# ---------------------------------------------------------------------------

def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def draw_target(rng: np.random.Generator, distribution: str = "uniform") -> int:
    if distribution == "uniform":
        return int(rng.integers(2))
    if distribution == "biased":
        # light 0 is the target in two of three trials
        return 0 if rng.random() < 2.0 / 3.0 else 1
    raise ValueError(f"unknown target distribution {distribution!r}")


def generate_world(seed, with_obstacles: bool, config: Optional[WorldConfig] = None,
                   target_distribution: str = "uniform") -> World:
    """Place the robot, both lights and (optionally) the obstacles at random.

    Obstacles are rejection-sampled so that none overlaps the robot's start
    disc or either light's contact disc; obstacles may overlap each other.
    """
    cfg = config or WorldConfig()
    rng = _as_rng(seed)
    params = cfg.as_array()
    r, cr = cfg.robot_radius, cfg.contact_radius

    rx = rng.uniform(r, cfg.width - r)
    ry = rng.uniform(r, cfg.height - r)
    heading = wrap_angle(rng.uniform(-math.pi, math.pi))

    no_obstacles = np.zeros((0, 4))
    lights = np.zeros((2, 2))
    for i in range(2):
        for _ in range(cfg.max_attempts):
            px = rng.uniform(cr, cfg.width - cr)
            py = rng.uniform(cr, cfg.height - cr)
            if _light_spot_ok(px, py, lights[0, 0], lights[0, 1], i == 1,
                              rx, ry, params, no_obstacles):
                lights[i] = (px, py)
                break
        else:
            raise WorldConfigError("could not place light sources")

    rects = []
    if with_obstacles:
        for _ in range(cfg.n_obstacles):
            for _ in range(cfg.max_attempts):
                w, h = rng.uniform(cfg.obstacle_min_side, cfg.obstacle_max_side, size=2)
                x0 = rng.uniform(0.0, cfg.width - w)
                y0 = rng.uniform(0.0, cfg.height - h)
                box = (x0, y0, x0 + w, y0 + h)
                if disc_hits_rect(rx, ry, r, *box):
                    continue
                if any(disc_hits_rect(lights[i, 0], lights[i, 1], cr, *box) for i in range(2)):
                    continue
                rects.append(box)
                break
            else:
                raise WorldConfigError("arena too crowded: obstacle placement failed")

    target = draw_target(rng, target_distribution)
    return World(
        config=cfg,
        robot=RobotPose(Vec2(float(rx), float(ry)), float(heading)),
        lights=tuple(LightSource(i, Vec2(float(lights[i, 0]), float(lights[i, 1])), cr)
                     for i in range(2)),
        obstacles=tuple(Obstacle(Vec2(*b[:2]), Vec2(*b[2:])) for b in rects),
        target_light=target,
    )


def light_sensor_response(robot: RobotPose, light: LightSource,
                          falloff: Optional[float] = None) -> float:
    """Clipped-cosine bearing term times hyperbolic distance falloff, in [0, 1]."""
    if falloff is None:
        falloff = WorldConfig().light_falloff
    return float(_light_response(robot.position.x, robot.position.y, robot.heading,
                                 light.position.x, light.position.y, falloff))


def obstacle_raycast(world: World, ray_offset: float) -> float:
    p = world.robot.position
    return float(_raycast(p.x, p.y, world.robot.heading, ray_offset,
                          world.config.as_array(), world.obstacle_array()))


def sense(world: World, touch_event: Optional[int] = None) -> SensorFrame:
    falloff = world.config.light_falloff
    light = tuple(light_sensor_response(world.robot, l, falloff) for l in world.lights)
    obstacle = tuple(obstacle_raycast(world, off) for off in RAY_OFFSETS)
    if touch_event is None:
        return SensorFrame(light, obstacle)
    contact = [0, 0]
    contact[touch_event] = 1
    feedback = 1 if touch_event == world.target_light else -1
    return SensorFrame(light, obstacle, tuple(contact), feedback)


def step_robot(world: World, wheels: Sequence[float]) -> tuple[World, Optional[int]]:
    """Advance one step. Returns the new world and the touched light id, if any.

    Heading is updated first; the translation along the new heading is
    cancelled if it would leave the arena or overlap an obstacle.
    """
    left, right = float(wheels[0]), float(wheels[1])
    if not (math.isfinite(left) and math.isfinite(right)):
        raise ValueError("wheel commands must be finite")
    params = world.config.as_array()
    p = world.robot.position
    x, y, h, _ = _step_pose(p.x, p.y, world.robot.heading, left, right,
                            params, world.obstacle_array())
    touched = _touched_light(x, y, world.light_array(), params)
    new = replace(world, robot=RobotPose(Vec2(x, y), h), step_count=world.step_count + 1,
                  _obstacle_array=world.obstacle_array())
    return new, (int(touched) if touched >= 0 else None)


def relocate_lights(world: World, rng) -> World:
    """Move both lights to fresh random spots away from obstacles and the robot."""
    rng = _as_rng(rng)
    cfg = world.config
    params = cfg.as_array()
    lights = world.light_array()
    p = world.robot.position
    n = 64
    while True:
        # a prefix of a longer draw is the same draw, so growing the buffer is replay-safe
        buf = rng.bit_generator.state
        rand = rng.random(n)
        work = lights.copy()
        pos = _relocate_lights(work, p.x, p.y, params, world.obstacle_array(),
                               rand, 0, cfg.max_attempts)
        if pos == -2:
            raise WorldConfigError("arena too crowded: light relocation failed")
        if pos >= 0:
            break
        rng.bit_generator.state = buf
        n *= 4
    cr = cfg.contact_radius
    new_lights = tuple(LightSource(i, Vec2(float(work[i, 0]), float(work[i, 1])), cr)
                       for i in range(2))
    return replace(world, lights=new_lights, _obstacle_array=world.obstacle_array())
