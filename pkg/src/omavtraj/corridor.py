"""Initial path search and safe-flight-corridor generation over point clouds.

The path search is a position-space RRT that treats the vehicle as its
inscribed sphere; whole-body safety is left to the optimizer.  Each path
segment then receives a convex polyhedron built by cutting planes: starting
from the segment's inflated bounding box, the obstacle point closest to the
segment is repeatedly cut off by the plane through it whose normal points
from the segment towards the point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .polytope import Polyhedron, interior_point, intersect

logger = logging.getLogger(__name__)


class NoPathError(RuntimeError):
    def __init__(self, message: str, n_nodes: int):
        super().__init__(message)
        self.n_nodes = n_nodes


class DecompositionError(RuntimeError):
    def __init__(self, message: str, segment: int):
        super().__init__(message)
        self.segment = segment


class GridIndex:
    """Uniform hash grid over a point set."""

    def __init__(self, points: NDArray, cell: float):
        self.points = points
        self.cell = float(cell)
        self._cells: dict[tuple[int, int, int], NDArray] = {}
        if len(points):
            keys = np.floor(points / self.cell).astype(np.int64)
            order = np.lexsort(keys.T[::-1])
            keys = keys[order]
            change = np.any(np.diff(keys, axis=0) != 0, axis=1)
            starts = np.concatenate([[0], np.nonzero(change)[0] + 1, [len(keys)]])
            for a, b in zip(starts[:-1], starts[1:]):
                self._cells[tuple(keys[a])] = order[a:b]

    def query_ball(self, center: ArrayLike, radius: float) -> NDArray:
        """Indices of points within ``radius`` of ``center``."""
        center = np.asarray(center, dtype=float)
        if not self._cells:
            return np.zeros(0, dtype=np.int64)
        lo = np.floor((center - radius) / self.cell).astype(np.int64)
        hi = np.floor((center + radius) / self.cell).astype(np.int64)
        found = []
        for i in range(lo[0], hi[0] + 1):
            for j in range(lo[1], hi[1] + 1):
                for k in range(lo[2], hi[2] + 1):
                    idx = self._cells.get((i, j, k))
                    if idx is not None:
                        found.append(idx)
        if not found:
            return np.zeros(0, dtype=np.int64)
        idx = np.concatenate(found)
        d2 = np.sum((self.points[idx] - center) ** 2, axis=1)
        return idx[d2 <= radius * radius]

    def any_within(self, center: NDArray, radius: float) -> bool:
        return len(self.query_ball(center, radius)) > 0


@dataclass
class PointCloud:
    points: NDArray
    lo: NDArray
    hi: NDArray
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud contains non-finite entries")
        if np.any(self.lo >= self.hi):
            raise ValueError("bounds must satisfy lo < hi")
        inside = np.all((self.points >= self.lo) & (self.points <= self.hi), axis=1)
        if not np.all(inside):
            logger.info("dropping %d points outside the map bounds", int(np.sum(~inside)))
            self.points = self.points[inside]

    def index(self, cell: float) -> GridIndex:
        key = round(cell, 9)
        if key not in self._index:
            self._index[key] = GridIndex(self.points, cell)
        return self._index[key]

    def in_bounds(self, p: NDArray) -> bool:
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def point_clear(self, p: NDArray, r: float) -> bool:
        return self.in_bounds(p) and not self.index(max(r, 0.05)).any_within(p, r)

    def segment_clear(self, a: NDArray, b: NDArray, r: float, resolution: float) -> bool:
        """Clearance of r sampled every ``resolution`` along a -> b."""
        n = max(int(np.ceil(np.linalg.norm(b - a) / resolution)), 1)
        for t in np.linspace(0.0, 1.0, n + 1):
            if not self.point_clear(a + t * (b - a), r):
                return False
        return True


@dataclass
class RRTConfig:
    seed: int = 0
    step: float = 0.3
    goal_bias: float = 0.1
    max_iter: int = 200000
    radius: float = 0.21
    goal_tol: float = 0.3
    check_resolution: float = 0.05


@dataclass
class SFCConfig:
    margin: float = 2.0
    max_faces: int = 40
    max_seg_len: float = 2.0


@dataclass
class Corridor:
    polys: list[Polyhedron]
    path: NDArray

    def to_json(self) -> dict:
        return {"polys": [P.to_json() for P in self.polys], "path": np.asarray(self.path).tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> Corridor:
        return cls([Polyhedron.from_json(p) for p in obj["polys"]], np.array(obj["path"], dtype=float))


def rrt_search(cloud: PointCloud, start: ArrayLike, goal: ArrayLike, cfg: RRTConfig) -> NDArray:
    """Goal-biased RRT; returns waypoints start ... goal as an (n, 3) array."""
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    r, res = cfg.radius, min(cfg.check_resolution, cfg.step)
    for name, p in (("start", start), ("goal", goal)):
        if not cloud.point_clear(p, r):
            raise NoPathError(f"{name} is in collision or out of bounds", 0)
    if cloud.segment_clear(start, goal, r, res):
        return np.vstack([start, goal])

    rng = np.random.default_rng(cfg.seed)
    cap = 1024
    nodes = np.empty((cap, 3))
    parent = np.empty(cap, dtype=np.int64)
    nodes[0], parent[0], n = start, -1, 1
    span = cloud.hi - cloud.lo
    for it in range(cfg.max_iter):
        target = goal if rng.random() < cfg.goal_bias else cloud.lo + rng.random(3) * span
        d2 = np.sum((nodes[:n] - target) ** 2, axis=1)
        near = int(np.argmin(d2))
        dist = np.sqrt(d2[near])
        if dist < 1e-9:
            continue
        new = nodes[near] + (target - nodes[near]) * min(1.0, cfg.step / dist)
        if not cloud.segment_clear(nodes[near], new, r, res):
            continue
        if n == cap:
            cap *= 2
            nodes = np.resize(nodes, (cap, 3))
            parent = np.resize(parent, cap)
        nodes[n], parent[n] = new, near
        n += 1
        if np.linalg.norm(goal - new) <= cfg.goal_tol and cloud.segment_clear(new, goal, r, res):
            chain = [n - 1]
            while parent[chain[-1]] >= 0:
                chain.append(int(parent[chain[-1]]))
            pts = nodes[chain[::-1]]
            if np.linalg.norm(pts[-1] - goal) > 1e-6:
                pts = np.vstack([pts, goal])
            else:
                pts[-1] = goal
            logger.debug("RRT reached goal after %d iterations, %d nodes", it + 1, n)
            return pts
    raise NoPathError(f"RRT exhausted {cfg.max_iter} iterations", n)


def shortcut(path: ArrayLike, cloud: PointCloud, r: float, resolution: float = 0.05) -> NDArray:
    """Greedy shortcutting: from each kept waypoint jump to the farthest visible one."""
    path = np.asarray(path, dtype=float)
    out = [path[0]]
    i = 0
    last = len(path) - 1
    while i < last:
        j = last
        while j > i + 1 and not cloud.segment_clear(path[i], path[j], r, resolution):
            j -= 1
        out.append(path[j])
        i = j
    return np.array(out)


def split_long_segments(path: ArrayLike, max_len: float) -> NDArray:
    path = np.asarray(path, dtype=float)
    out = [path[0]]
    for a, b in zip(path[:-1], path[1:]):
        n = max(int(np.ceil(np.linalg.norm(b - a) / max_len - 1e-9)), 1)
        for t in np.arange(1, n + 1) / n:
            out.append(a + t * (b - a))
    return np.array(out)


def closest_on_segment(a: NDArray, b: NDArray, x: NDArray) -> NDArray:
    """Closest point of segment a-b to each row of x."""
    ab = b - a
    L2 = float(ab @ ab)
    if L2 == 0.0:
        return np.broadcast_to(a, x.shape)
    t = np.clip((x - a) @ ab / L2, 0.0, 1.0)
    return a + t[..., None] * ab


def segment_polyhedron(
    a: NDArray, b: NDArray, cloud: PointCloud, cfg: SFCConfig, seg_id: int = 0
) -> Polyhedron:
    lo = np.maximum(np.minimum(a, b) - cfg.margin, cloud.lo)
    hi = np.minimum(np.maximum(a, b) + cfg.margin, cloud.hi)
    box = Polyhedron.box(lo, hi)
    A, bvec = [row for row in box.A], [v for v in box.b]
    pts = cloud.points
    pts = pts[np.all((pts > lo) & (pts < hi), axis=1)]
    if len(pts) == 0:
        return box
    seg_dist = np.linalg.norm(pts - closest_on_segment(a, b, pts), axis=1)
    alive = np.ones(len(pts), dtype=bool)
    while np.any(alive):
        if len(A) >= cfg.max_faces:
            raise DecompositionError(
                f"segment {seg_id}: {int(alive.sum())} points remain after {cfg.max_faces} faces",
                seg_id,
            )
        live = np.nonzero(alive)[0]
        j = live[np.argmin(seg_dist[live])]
        x = pts[j]
        c = closest_on_segment(a, b, x[None])[0]
        if seg_dist[j] < 1e-9:
            raise DecompositionError(f"segment {seg_id} passes through an obstacle point", seg_id)
        n = (x - c) / seg_dist[j]
        d = float(n @ x)
        A.append(n)
        bvec.append(d)
        alive &= pts @ n - d < -1e-9
    return Polyhedron(np.array(A), np.array(bvec))


def decompose(path: ArrayLike, cloud: PointCloud, cfg: SFCConfig) -> Corridor:
    path = np.asarray(path, dtype=float)
    polys = [
        segment_polyhedron(path[i], path[i + 1], cloud, cfg, i) for i in range(len(path) - 1)
    ]
    for i in range(len(polys) - 1):
        if interior_point(intersect(polys[i], polys[i + 1])) is None:
            raise DecompositionError(f"segments {i} and {i + 1} do not overlap", i)
    return Corridor(polys, path)


def validate(corridor: Corridor, cloud: PointCloud | None = None, tol: float = 1e-9) -> list[str]:
    """List of violated corridor invariants; empty when the corridor is sound."""
    out: list[str] = []
    path = np.asarray(corridor.path)
    if len(corridor.polys) != len(path) - 1:
        out.append(f"count: {len(corridor.polys)} polyhedra for {len(path) - 1} segments")
        return out
    for i, P in enumerate(corridor.polys):
        for p in (path[i], path[i + 1]):
            if np.any(P.A @ p - P.b > tol):
                out.append(f"segment {i}: path leaves polyhedron {i}")
                break
        if cloud is not None and len(cloud.points):
            inside = np.all(cloud.points @ P.A.T - P.b < -tol, axis=1)
            if np.any(inside):
                out.append(f"safety {i}: {int(inside.sum())} cloud points inside polyhedron {i}")
    for i in range(len(corridor.polys) - 1):
        if interior_point(intersect(corridor.polys[i], corridor.polys[i + 1])) is None:
            out.append(f"connection {i}: polyhedra {i} and {i + 1} have no common interior")
    return out


def corridor_from_path(
    start: ArrayLike, goal: ArrayLike, cloud: PointCloud, rrt: RRTConfig, sfc: SFCConfig
) -> Corridor:
    raw = rrt_search(cloud, start, goal, rrt)
    path = shortcut(raw, cloud, rrt.radius, min(rrt.check_resolution, rrt.step))
    path = split_long_segments(path, sfc.max_seg_len)
    return decompose(path, cloud, sfc)
