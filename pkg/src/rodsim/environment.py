"""Obstacle geometry, lidar-style sensing, point clouds and collision checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

DEDUP_EPS = 0.01


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _on_segment(p, q, r, eps=1e-12) -> bool:
    # r is colinear with pq; is it within the bounding box of pq
    return (
        min(p[0], q[0]) - eps <= r[0] <= max(p[0], q[0]) + eps
        and min(p[1], q[1]) - eps <= r[1] <= max(p[1], q[1]) + eps
    )


def segments_intersect(p1, p2, q1, q2, eps: float = 1e-12) -> bool:
    """Closed segment intersection test, touching and colinear overlap included."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and (
        (d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)
    ):
        return True
    if abs(d1) <= eps and _on_segment(q1, q2, p1):
        return True
    if abs(d2) <= eps and _on_segment(q1, q2, p2):
        return True
    if abs(d3) <= eps and _on_segment(p1, p2, q1):
        return True
    if abs(d4) <= eps and _on_segment(p1, p2, q2):
        return True
    return False


def point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(x, dtype=float) for x in (p, a, b))
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


@dataclass(frozen=True, eq=False)
class Obstacle:
    """Simple polygon; vertices are stored counter-clockwise with the first vertex kept first."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("an obstacle needs at least 3 two-dimensional vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError("obstacle vertices must be finite")
        area2 = float(np.sum(_cross(v, np.roll(v, -1, axis=0))))
        if abs(area2) < 1e-12:
            raise ValueError("degenerate obstacle polygon (zero area)")
        if area2 < 0:
            v = np.vstack([v[:1], v[:0:-1]])
        n = len(v)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    raise ValueError("obstacle polygon is self-intersecting")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __eq__(self, other):
        if not isinstance(other, Obstacle):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices)

    def __hash__(self):
        return hash(self.vertices.tobytes())

    @property
    def edges(self) -> np.ndarray:
        """Array of shape (n, 2, 2) holding each edge's endpoints."""
        return np.stack([self.vertices, np.roll(self.vertices, -1, axis=0)], axis=1)

    def contains(self, p, eps: float = 1e-12) -> bool:
        """Point-in-polygon, boundary included."""
        x, y = float(p[0]), float(p[1])
        v = self.vertices
        inside = False
        n = len(v)
        for i in range(n):
            a, b = v[i], v[(i + 1) % n]
            if abs(_orient(a, b, (x, y))) <= eps and _on_segment(a, b, (x, y)):
                return True
            if (a[1] > y) != (b[1] > y):
                xc = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
                if x < xc:
                    inside = not inside
        return inside

    def translated(self, offset) -> "Obstacle":
        return Obstacle(self.vertices + np.asarray(offset, dtype=float))


@dataclass(frozen=True)
class Workspace:
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 9.0, 9.0)
    obstacles: tuple[Obstacle, ...] = ()

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise ValueError(f"invalid workspace bounds {self.bounds}")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for k, ob in enumerate(self.obstacles):
            if not self.contains(ob.vertices).all():
                raise ValueError(f"obstacle {k} has vertices outside the workspace bounds")

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        xmin, ymin, xmax, ymax = self.bounds
        return (
            (pts[:, 0] >= xmin) & (pts[:, 0] <= xmax) & (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax)
        )

    def all_edges(self) -> np.ndarray:
        if not self.obstacles:
            return np.zeros((0, 2, 2))
        return np.concatenate([ob.edges for ob in self.obstacles])

    def inside_obstacle(self, p) -> bool:
        return any(ob.contains(p) for ob in self.obstacles)


@dataclass(frozen=True)
class SensorConfig:
    range: float = 1.2
    angular_resolution: float = math.radians(3.6)

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError("sensor range must be positive")
        if not self.angular_resolution > 0:
            raise ValueError("angular resolution must be positive")
        ratio = 2.0 * math.pi / self.angular_resolution
        if abs(ratio - round(ratio)) > 1e-6:
            raise ValueError("angular resolution must divide 2*pi into a whole number of rays")

    @property
    def n_rays(self) -> int:
        return int(round(2.0 * math.pi / self.angular_resolution))

    def ray_angles(self) -> np.ndarray:
        return np.arange(self.n_rays) * (2.0 * math.pi / self.n_rays)


class Scan(NamedTuple):
    points: np.ndarray
    blocked: bool  # origin lies inside an obstacle


def sense(workspace: Workspace, origin, cfg: SensorConfig) -> Scan:
    """Sweep rays from ``origin`` and return the nearest obstacle-boundary hit of each."""
    o = np.asarray(origin, dtype=float)
    if workspace.inside_obstacle(o):
        return Scan(np.zeros((0, 2)), True)
    edges = workspace.all_edges()
    if len(edges) == 0:
        return Scan(np.zeros((0, 2)), False)

    ang = cfg.ray_angles()
    d = np.stack([np.cos(ang), np.sin(ang)], axis=1)  # (R, 2)
    p = edges[:, 0, :]
    e = edges[:, 1, :] - p  # (E, 2)
    denom = _cross(d[:, None, :], e[None, :, :])  # (R, E)
    po = p - o  # (E, 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(po[None, :, :], e[None, :, :]) / denom
        s = _cross(po[None, :, :], d[:, None, :]) / denom
    valid = (np.abs(denom) > 1e-14) & (t >= 0.0) & (s >= 0.0) & (s <= 1.0)
    t = np.where(valid, t, np.inf)
    tmin = t.min(axis=1)
    hit = tmin <= cfg.range
    pts = o + d[hit] * tmin[hit, None]
    return Scan(pts, False)


def rod_collides(workspace: Workspace, leader_pos, follower_pos) -> bool:
    """True if the closed segment between the two robots touches any obstacle or leaves the bounds."""
    a = np.asarray(leader_pos, dtype=float)
    b = np.asarray(follower_pos, dtype=float)
    if not workspace.contains(np.stack([a, b])).all():
        return True
    for ob in workspace.obstacles:
        lo = ob.vertices.min(axis=0)
        hi = ob.vertices.max(axis=0)
        if np.any(np.maximum(a, b) < lo) or np.any(np.minimum(a, b) > hi):
            continue
        if ob.contains(a) or ob.contains(b):
            return True
        for q1, q2 in ob.edges:
            if segments_intersect(a, b, q1, q2):
                return True
    return False


class PointCloud:
    """Growing set of 2-D obstacle points with radius-based deduplication.

    A new point is dropped when an existing point lies strictly closer than
    ``eps``. Each stored point keeps a source tag and the step it was added.
    """

    def __init__(self, eps: float = DEDUP_EPS):
        self.eps = eps
        self._pts: list[tuple[float, float]] = []
        self._tags: list[tuple[str, int]] = []
        self._grid: dict[tuple[int, int], list[int]] = {}
        self._array: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._pts)

    def __contains__(self, p) -> bool:
        return self._near(float(p[0]), float(p[1]))

    def _cell(self, x: float, y: float) -> tuple[int, int]:
        return (math.floor(x / self.eps), math.floor(y / self.eps))

    def _near(self, x: float, y: float) -> bool:
        cx, cy = self._cell(x, y)
        eps2 = self.eps * self.eps
        for i in range(cx - 1, cx + 2):
            for j in range(cy - 1, cy + 2):
                for k in self._grid.get((i, j), ()):
                    px, py = self._pts[k]
                    if (px - x) ** 2 + (py - y) ** 2 < eps2:
                        return True
        return False

    def add(self, points, source: str = "sensed", step: int = 0) -> int:
        """Insert points in order; returns how many were new."""
        added = 0
        for p in np.asarray(points, dtype=float).reshape(-1, 2):
            x, y = float(p[0]), float(p[1])
            if self._near(x, y):
                continue
            self._grid.setdefault(self._cell(x, y), []).append(len(self._pts))
            self._pts.append((x, y))
            self._tags.append((source, step))
            added += 1
        if added:
            self._array = None
        return added

    def copy(self) -> "PointCloud":
        out = PointCloud(self.eps)
        out._pts = list(self._pts)
        out._tags = list(self._tags)
        out._grid = {k: list(v) for k, v in self._grid.items()}
        out._array = self._array
        return out

    @property
    def points(self) -> np.ndarray:
        if self._array is None:
            self._array = np.array(self._pts, dtype=float).reshape(-1, 2)
            self._array.setflags(write=False)
        return self._array

    @property
    def tags(self) -> list[tuple[str, int]]:
        return list(self._tags)

    def issuperset(self, other: "PointCloud") -> bool:
        return all(p in self for p in other._pts)


def accumulate(cloud: PointCloud, new_points, source: str = "sensed", step: int = 0) -> PointCloud:
    """Union of ``cloud`` and ``new_points`` as a new cloud; the input is left untouched."""
    out = cloud.copy()
    out.add(new_points, source=source, step=step)
    return out


@dataclass(frozen=True)
class Zone:
    """Rectangle ``(xmin, ymin, xmax, ymax)`` for the anchor vertex of one obstacle."""

    obstacle: int
    rect: tuple[float, float, float, float]
    anchor: int = 0

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.rect
        if xmin > xmax or ymin > ymax:
            raise ValueError(f"invalid zone rectangle {self.rect}")


def randomize_scenario(
    base: Workspace, zones: Sequence[Zone], seed: int | None, max_tries: int = 100
) -> Workspace:
    """Translate each zoned obstacle so its anchor vertex is uniform in the zone."""
    if not zones:
        return base
    rng = np.random.default_rng(seed)
    obstacles = list(base.obstacles)
    for z in zones:
        if not 0 <= z.obstacle < len(obstacles):
            raise ValueError(f"zone references missing obstacle {z.obstacle}")
        ob = base.obstacles[z.obstacle]
        xmin, ymin, xmax, ymax = z.rect
        for _ in range(max_tries):
            target = np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])
            moved = ob.translated(target - ob.vertices[z.anchor])
            if base.contains(moved.vertices).all():
                obstacles[z.obstacle] = moved
                break
        else:
            raise ValueError(f"could not place obstacle {z.obstacle} inside the workspace")
    return Workspace(base.bounds, tuple(obstacles))
