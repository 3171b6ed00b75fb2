"""Planar workspace geometry: obstacles, goal region, and scenario sampling.

Conventions are conservative throughout: obstacles are closed sets (tangency
counts as a hit), and leaving the workspace counts as a collision so Monte
Carlo statistics stay well-defined.  Only the first two state dimensions are
positional; higher dimensions are never collision-checked.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import PlacementFailure

__all__ = [
    "Circle",
    "Rect",
    "Environment",
    "RandomEnvParams",
    "sphere_obstacle_free",
    "sphere_in_goal",
    "point_in_obstacle",
    "point_in_goal",
    "points_in_obstacle",
    "points_in_goal",
    "random_environment",
]


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ValueError(f"circle radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))


@dataclass(frozen=True)
class Rect:
    lo: tuple[float, float]
    hi: tuple[float, float]

    def __post_init__(self):
        lo = (float(self.lo[0]), float(self.lo[1]))
        hi = (float(self.hi[0]), float(self.hi[1]))
        if not (lo[0] < hi[0] and lo[1] < hi[1]):
            raise ValueError(f"rectangle needs lo < hi componentwise, got {lo}, {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)


@dataclass(frozen=True)
class Environment:
    """Workspace box, obstacle set, and goal region (box or circle)."""

    workspace: Rect
    obstacles: tuple
    goal: Circle | Rect

    # cached arrays for vectorized queries
    _circ_centers: np.ndarray = field(init=False, repr=False, compare=False)
    _circ_radii: np.ndarray = field(init=False, repr=False, compare=False)
    _rect_lo: np.ndarray = field(init=False, repr=False, compare=False)
    _rect_hi: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        circles = [o for o in self.obstacles if isinstance(o, Circle)]
        rects = [o for o in self.obstacles if isinstance(o, Rect)]
        if len(circles) + len(rects) != len(self.obstacles):
            raise ValueError("obstacles must be Circle or Rect instances")
        object.__setattr__(self, "_circ_centers",
                           np.array([c.center for c in circles], dtype=float).reshape(-1, 2))
        object.__setattr__(self, "_circ_radii",
                           np.array([c.radius for c in circles], dtype=float))
        object.__setattr__(self, "_rect_lo",
                           np.array([r.lo for r in rects], dtype=float).reshape(-1, 2))
        object.__setattr__(self, "_rect_hi",
                           np.array([r.hi for r in rects], dtype=float).reshape(-1, 2))
        gb_lo, gb_hi = _bounding_box(self.goal)
        ws = self.workspace
        if not (ws.lo[0] <= gb_lo[0] and ws.lo[1] <= gb_lo[1]
                and gb_hi[0] <= ws.hi[0] and gb_hi[1] <= ws.hi[1]):
            raise ValueError("goal region must lie inside the workspace")
        if isinstance(self.goal, Rect) and self.goal == ws:
            raise ValueError("goal region must not cover the entire workspace")


def _bounding_box(shape) -> tuple[tuple[float, float], tuple[float, float]]:
    if isinstance(shape, Circle):
        cx, cy = shape.center
        r = shape.radius
        return (cx - r, cy - r), (cx + r, cy + r)
    return shape.lo, shape.hi


def sphere_obstacle_free(center, radius: float, env: Environment) -> bool:
    """True iff the closed disc avoids every obstacle and stays in the workspace."""
    x, y = float(center[0]), float(center[1])
    ws = env.workspace
    if not (ws.lo[0] + radius <= x <= ws.hi[0] - radius
            and ws.lo[1] + radius <= y <= ws.hi[1] - radius):
        return False
    if env._circ_centers.shape[0]:
        d2 = np.square(env._circ_centers[:, 0] - x) + np.square(env._circ_centers[:, 1] - y)
        if np.any(d2 <= np.square(env._circ_radii + radius)):
            return False
    if env._rect_lo.shape[0]:
        # squared distance from the disc center to each rectangle (clamped closest point)
        cx = np.clip(x, env._rect_lo[:, 0], env._rect_hi[:, 0])
        cy = np.clip(y, env._rect_lo[:, 1], env._rect_hi[:, 1])
        d2 = np.square(cx - x) + np.square(cy - y)
        if np.any(d2 <= radius * radius):
            return False
    return True


def sphere_in_goal(center, radius: float, env: Environment) -> bool:
    """True iff the closed disc is entirely contained in the goal region."""
    x, y = float(center[0]), float(center[1])
    goal = env.goal
    if isinstance(goal, Circle):
        dist = np.hypot(x - goal.center[0], y - goal.center[1])
        return dist + radius <= goal.radius
    return (goal.lo[0] + radius <= x <= goal.hi[0] - radius
            and goal.lo[1] + radius <= y <= goal.hi[1] - radius)


def point_in_obstacle(point, env: Environment) -> bool:
    """True iff the point is inside any obstacle or outside the workspace."""
    x, y = float(point[0]), float(point[1])
    ws = env.workspace
    if not (ws.lo[0] <= x <= ws.hi[0] and ws.lo[1] <= y <= ws.hi[1]):
        return True
    if env._circ_centers.shape[0]:
        d2 = np.square(env._circ_centers[:, 0] - x) + np.square(env._circ_centers[:, 1] - y)
        if np.any(d2 <= np.square(env._circ_radii)):
            return True
    if env._rect_lo.shape[0]:
        inside = ((env._rect_lo[:, 0] <= x) & (x <= env._rect_hi[:, 0])
                  & (env._rect_lo[:, 1] <= y) & (y <= env._rect_hi[:, 1]))
        if np.any(inside):
            return True
    return False


def point_in_goal(point, env: Environment) -> bool:
    x, y = float(point[0]), float(point[1])
    goal = env.goal
    if isinstance(goal, Circle):
        return np.hypot(x - goal.center[0], y - goal.center[1]) <= goal.radius
    return goal.lo[0] <= x <= goal.hi[0] and goal.lo[1] <= y <= goal.hi[1]


def points_in_obstacle(points: np.ndarray, env: Environment) -> np.ndarray:
    """Vectorized point_in_obstacle over an (N, 2) array of positions."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    ws = env.workspace
    hit = ~((ws.lo[0] <= pts[:, 0]) & (pts[:, 0] <= ws.hi[0])
            & (ws.lo[1] <= pts[:, 1]) & (pts[:, 1] <= ws.hi[1]))
    if env._circ_centers.shape[0]:
        d2 = (np.square(pts[:, None, 0] - env._circ_centers[None, :, 0])
              + np.square(pts[:, None, 1] - env._circ_centers[None, :, 1]))
        hit |= np.any(d2 <= np.square(env._circ_radii)[None, :], axis=1)
    if env._rect_lo.shape[0]:
        inside = ((env._rect_lo[None, :, 0] <= pts[:, None, 0])
                  & (pts[:, None, 0] <= env._rect_hi[None, :, 0])
                  & (env._rect_lo[None, :, 1] <= pts[:, None, 1])
                  & (pts[:, None, 1] <= env._rect_hi[None, :, 1]))
        hit |= np.any(inside, axis=1)
    return hit


def points_in_goal(points: np.ndarray, env: Environment) -> np.ndarray:
    """Vectorized point_in_goal over an (N, 2) array of positions."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    goal = env.goal
    if isinstance(goal, Circle):
        d = np.hypot(pts[:, 0] - goal.center[0], pts[:, 1] - goal.center[1])
        return d <= goal.radius
    return ((goal.lo[0] <= pts[:, 0]) & (pts[:, 0] <= goal.hi[0])
            & (goal.lo[1] <= pts[:, 1]) & (pts[:, 1] <= goal.hi[1]))


@dataclass(frozen=True)
class RandomEnvParams:
    """Recipe for randomized scenarios: uniform centers, normal radii."""

    count: int = 15
    center_low: float = 0.0
    center_high: float = 100.0
    radius_mean: float = 10.0
    radius_std: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"obstacle count must be >= 1, got {self.count}")
        if self.center_high <= self.center_low:
            raise ValueError("center_high must exceed center_low")
        if self.radius_mean <= 3.0 * self.radius_std:
            warnings.warn("radius_mean <= 3*radius_std: truncation will distort radii",
                          stacklevel=2)


RADIUS_FLOOR = 0.5
PLACEMENT_ATTEMPTS = 10_000


def _truncated_radius(rng: np.random.Generator, mean: float, std: float) -> float:
    for _ in range(100):
        r = rng.normal(mean, std)
        if r >= RADIUS_FLOOR:
            return float(r)
    return RADIUS_FLOOR


def random_environment(params: RandomEnvParams) -> tuple[Environment, np.ndarray]:
    """Sample an environment and a start position, deterministically from the seed.

    Start and goal are rejection-sampled until each clears every obstacle by
    at least twice the mean radius; the goal is a disc of half the mean
    radius around the accepted goal center.
    """
    rng = np.random.default_rng(params.seed)
    lo, hi = params.center_low, params.center_high
    workspace = Rect((lo, lo), (hi, hi))
    obstacles = []
    for _ in range(params.count):
        center = rng.uniform(lo, hi, size=2)
        radius = _truncated_radius(rng, params.radius_mean, params.radius_std)
        obstacles.append(Circle((center[0], center[1]), radius))
    clearance = 2.0 * params.radius_mean
    goal_radius = 0.5 * params.radius_mean

    def clear_of_everything(point: np.ndarray) -> bool:
        if not (lo + clearance <= point[0] <= hi - clearance
                and lo + clearance <= point[1] <= hi - clearance):
            return False
        return all(np.hypot(point[0] - c.center[0], point[1] - c.center[1])
                   > c.radius + clearance for c in obstacles)

    def place(what: str) -> np.ndarray:
        for _ in range(PLACEMENT_ATTEMPTS):
            point = rng.uniform(lo, hi, size=2)
            if clear_of_everything(point):
                return point
        raise PlacementFailure(f"could not place {what} with clearance {clearance}")

    start = place("start")
    goal_center = place("goal")
    goal = Circle((goal_center[0], goal_center[1]), goal_radius)
    return Environment(workspace, tuple(obstacles), goal), start
