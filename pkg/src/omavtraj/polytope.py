"""Convex polyhedra in H-representation and the vehicle vertex model."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

MAX_FACES = 60


class PolytopeError(ValueError):
    """Raised for empty or unbounded polyhedra."""


@dataclass(frozen=True)
class Halfspace:
    n: NDArray
    d: float

    def __post_init__(self) -> None:
        n = np.asarray(self.n, dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0.0 or not np.isfinite(norm):
            raise ValueError("halfspace normal must be a finite nonzero vector")
        object.__setattr__(self, "n", n / norm)
        object.__setattr__(self, "d", float(self.d) / norm)


@dataclass(frozen=True)
class Polyhedron:
    """{p : A p <= b} with unit-length rows of A."""

    A: NDArray
    b: NDArray
    _vertices: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[1] != 3 or A.shape[0] != b.shape[0]:
            raise ValueError("A must be K x 3 and b length K")
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0.0):
            raise ValueError("zero normal in halfspace list")
        object.__setattr__(self, "A", A / norms[:, None])
        object.__setattr__(self, "b", b / norms)

    @classmethod
    def from_halfspaces(cls, halfspaces: list[Halfspace]) -> Polyhedron:
        return cls(np.array([h.n for h in halfspaces]), np.array([h.d for h in halfspaces]))

    @classmethod
    def box(cls, lo: ArrayLike, hi: ArrayLike) -> Polyhedron:
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        A = np.vstack([np.eye(3), -np.eye(3)])
        return cls(A, np.concatenate([hi, -lo]))

    @property
    def halfspaces(self) -> list[Halfspace]:
        return [Halfspace(n, d) for n, d in zip(self.A, self.b)]

    @property
    def n_faces(self) -> int:
        return self.A.shape[0]

    def vertices(self) -> NDArray:
        """Cached result of :func:`enumerate_vertices`."""
        if not self._vertices:
            self._vertices.append(enumerate_vertices(self))
        return self._vertices[0]

    def to_json(self) -> dict:
        return {"halfspaces": [{"n": n.tolist(), "d": float(d)} for n, d in zip(self.A, self.b)]}

    @classmethod
    def from_json(cls, obj: dict) -> Polyhedron:
        hs = obj["halfspaces"]
        return cls(np.array([h["n"] for h in hs], dtype=float), np.array([h["d"] for h in hs], dtype=float))


def contains(P: Polyhedron, p: ArrayLike, tol: float = 0.0) -> bool | NDArray:
    """True iff n_k^T p - d_k <= tol for every face; vectorized over rows of p."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    p = np.asarray(p, dtype=float)
    viol = p @ P.A.T - P.b
    out = np.all(viol <= tol, axis=-1)
    return bool(out) if out.ndim == 0 else out


def max_violation(P: Polyhedron, p: ArrayLike) -> NDArray:
    """max_k (n_k^T p - d_k); negative inside."""
    return np.max(np.asarray(p, dtype=float) @ P.A.T - P.b, axis=-1)


def remove_redundant(P: Polyhedron, tol: float = 1e-9) -> Polyhedron:
    """Drop halfspaces implied by the others (one LP per face).

    Empty polyhedra are returned unchanged.
    """
    keep = list(range(P.n_faces))
    for k in range(P.n_faces):
        others = [j for j in keep if j != k]
        if len(others) < 4:
            continue
        # bound the LP by the face itself shifted outwards
        A_ub = np.vstack([P.A[others], P.A[k]])
        b_ub = np.concatenate([P.b[others], [P.b[k] + 1.0]])
        res = linprog(-P.A[k], A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * 3, method="highs")
        if res.status == 2:
            return P
        if res.status == 0 and -res.fun <= P.b[k] + tol:
            keep.remove(k)
    return Polyhedron(P.A[keep], P.b[keep])


def intersect(A: Polyhedron, B: Polyhedron, prune: bool = True) -> Polyhedron:
    Aa = np.vstack([A.A, B.A])
    bb = np.concatenate([A.b, B.b])
    keep: list[int] = []
    for i in range(len(bb)):
        dup = any(
            np.all(np.abs(Aa[i] - Aa[j]) <= 1e-9) and abs(bb[i] - bb[j]) <= 1e-9 for j in keep
        )
        if not dup:
            keep.append(i)
    out = Polyhedron(Aa[keep], bb[keep])
    return remove_redundant(out) if prune else out


def _recession_ok(A: NDArray) -> bool:
    for axis in range(3):
        for sign in (1.0, -1.0):
            e = np.zeros(3)
            e[axis] = sign
            if not np.any(A @ e > 1e-9):
                return False
    return True


def enumerate_vertices(P: Polyhedron) -> NDArray:
    """Vertices by brute force over facet triples."""
    K = P.n_faces
    if K < 4:
        raise PolytopeError(f"polyhedron with {K} faces is unbounded")
    if K > MAX_FACES:
        raise PolytopeError(f"polyhedron has {K} faces, limit is {MAX_FACES}")
    if not _recession_ok(P.A):
        raise PolytopeError("polyhedron is unbounded along a coordinate axis")
    idx = np.array(list(itertools.combinations(range(K), 3)))
    N = P.A[idx]
    det = np.linalg.det(N)
    good = np.abs(det) > 1e-9
    N, rhs = N[good], P.b[idx[good]]
    if len(N) == 0:
        raise PolytopeError("no well-conditioned vertex triple")
    pts = np.linalg.solve(N, rhs[..., None])[..., 0]
    feas = np.all(pts @ P.A.T - P.b <= 1e-7, axis=1)
    pts = pts[feas]
    if len(pts) == 0:
        raise PolytopeError("polyhedron is empty")
    out: list[NDArray] = []
    for p in pts:
        if not any(np.max(np.abs(p - q)) <= 1e-6 for q in out):
            out.append(p)
    out_arr = np.array(out)
    # a cone with the apex as sole vertex passes the axis test; reject it
    if len(out_arr) < 4 or np.linalg.matrix_rank(out_arr - out_arr[0], tol=1e-9) < 3:
        raise PolytopeError("polyhedron is degenerate or unbounded")
    return out_arr


def interior_point(P: Polyhedron) -> NDArray | None:
    """Vertex centroid if it is strictly inside (margin 1e-9), else None."""
    try:
        V = enumerate_vertices(P)
    except PolytopeError:
        return None
    c = V.mean(axis=0)
    if np.all(P.A @ c - P.b < -1e-9):
        return c
    return None


@dataclass(frozen=True)
class VehicleShape:
    vertices_body: NDArray

    def __post_init__(self) -> None:
        V = np.atleast_2d(np.asarray(self.vertices_body, dtype=float))
        if V.shape[0] < 4 or V.shape[1] != 3:
            raise ValueError("vehicle shape needs at least four 3-D vertices")
        if np.linalg.matrix_rank(V - V.mean(axis=0)) < 3:
            raise ValueError("vehicle vertices must span three dimensions")
        object.__setattr__(self, "vertices_body", V)

    @classmethod
    def cuboid(cls, lx: float, ly: float, lz: float, margin: float = 0.0) -> VehicleShape:
        half = 0.5 * np.array([lx, ly, lz]) + margin
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=3)))
        return cls(signs * half)

    @property
    def half_extents(self) -> NDArray:
        return np.max(np.abs(self.vertices_body), axis=0)

    @property
    def radius(self) -> float:
        return float(np.max(np.linalg.norm(self.vertices_body, axis=1)))


def vehicle_vertices_world(shape: VehicleShape, p: ArrayLike, R: ArrayLike) -> NDArray:
    """v_l = p + R v_l_body; supports batched (p, R)."""
    p = np.asarray(p, dtype=float)
    R = np.asarray(R, dtype=float)
    return p[..., None, :] + np.einsum("...ij,lj->...li", R, shape.vertices_body)


def body_hull(shape: VehicleShape) -> Polyhedron:
    """H-representation of the convex hull of the body vertices (body frame)."""
    eq = ConvexHull(shape.vertices_body).equations
    P = Polyhedron(eq[:, :3], -eq[:, 3])
    return intersect(P, P)
