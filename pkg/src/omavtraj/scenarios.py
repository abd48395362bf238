"""Synthetic maps: a wall with a narrow vertical slot, and random floating boxes."""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from .corridor import PointCloud


def _grid(lo: float, hi: float, res: float, extra: tuple[float, ...] = ()) -> NDArray:
    n = int(round((hi - lo) / res))
    g = np.concatenate([lo + res * np.arange(n + 1), extra])
    return np.unique(np.round(g, 9))


def slot_wall(
    lo=(-4.0, -2.5, 0.0),
    hi=(4.0, 2.5, 3.0),
    thickness: float = 1.2,
    slot_width: float = 0.7,
    slot_z: tuple[float, float] = (0.3, 2.7),
    res: float = 0.1,
) -> PointCloud:
    """Solid wall across x = 0 with a vertical slot centred on y = 0.

    The grid includes points exactly on the slot edges so the free gap is
    exactly ``slot_width`` wide.
    """
    half = 0.5 * slot_width
    xs = _grid(-0.5 * thickness, 0.5 * thickness, res)
    ys = _grid(lo[1], hi[1], res, (-half, half))
    zs = _grid(lo[2], hi[2], res, slot_z)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.c_[X.ravel(), Y.ravel(), Z.ravel()]
    in_slot = (np.abs(pts[:, 1]) < half - 1e-9) & (pts[:, 2] > slot_z[0] + 1e-9) & (pts[:, 2] < slot_z[1] - 1e-9)
    return PointCloud(pts[~in_slot], np.array(lo, float), np.array(hi, float))


def random_boxes(
    length: float,
    seed: int,
    width: float = 6.0,
    height: float = 3.0,
    density: float = 0.12,
    size: tuple[float, float] = (0.3, 0.8),
    res: float = 0.1,
    clear_radius: float = 1.0,
) -> tuple[PointCloud, NDArray, NDArray]:
    """Floating box obstacles (surface points) along x in [0, length].

    Returns the cloud plus start and goal on the centreline; boxes are kept
    away from both endpoints.
    """
    rng = np.random.default_rng(seed)
    lo = np.array([-1.0, -0.5 * width, 0.0])
    hi = np.array([length + 1.0, 0.5 * width, height])
    start = np.array([0.0, 0.0, 0.5 * height])
    goal = np.array([length, 0.0, 0.5 * height])
    n_boxes = max(1, int(density * length * width))
    pts = []
    for _ in range(n_boxes):
        ext = rng.uniform(*size, 3)
        c = lo + ext / 2 + rng.random(3) * (hi - lo - ext)
        if min(np.linalg.norm(c - start), np.linalg.norm(c - goal)) < clear_radius + ext.max():
            continue
        axes = [_grid(c[d] - ext[d] / 2, c[d] + ext[d] / 2, res) for d in range(3)]
        X, Y, Z = np.meshgrid(*axes, indexing="ij")
        P = np.c_[X.ravel(), Y.ravel(), Z.ravel()]
        # surface shell only
        on = np.zeros(len(P), dtype=bool)
        for d in range(3):
            on |= np.isclose(P[:, d], axes[d][0]) | np.isclose(P[:, d], axes[d][-1])
        pts.append(P[on])
    cloud = np.vstack(pts) if pts else np.zeros((0, 3))
    return PointCloud(cloud, lo, hi), start, goal


def scenario_a_config(map_file: str) -> dict:
    """Run config for the slot-wall map: cross the wall from x = -3 to x = 3."""
    return {
        "map_file": map_file,
        "bounds": {"lo": [-4.0, -2.5, 0.0], "hi": [4.0, 2.5, 3.0]},
        "start": {"p": [-3.0, 0.0, 1.5], "Q": [1.0, 0.0, 0.0, 0.0]},
        "goal": {"p": [3.0, 0.0, 1.5], "Q": [1.0, 0.0, 0.0, 0.0]},
        "shape": {"lx": 1.1, "ly": 1.1, "lz": 0.42},
    }
