"""Unconstrained reformulation and solve of the whole-body trajectory problem.

Decision variables are ``(xi, q_sigma, tau)``:

* ``tau`` maps to durations through ``T = exp(tau)``;
* each interior position waypoint is a convex combination of the vertices
  of its polytope with weights ``(xi_j^2 + 1) / sum_m (xi_m^2 + 1)``, so it
  stays strictly inside whatever ``xi`` is;
* attitude waypoints ``q_sigma`` are free stereographic coordinates.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import nnls

from . import rotation
from .corridor import Corridor
from .costs import Limits, PenaltyWeights, sampled_violations, total_cost
from .lbfgs import LBFGSSettings, lbfgs_minimize
from .minco import Trajectory, construct, propagate_gradient
from .polytope import Polyhedron, VehicleShape, intersect

logger = logging.getLogger(__name__)

TAU_MAX = 30.0
MAX_PIECES_PER_SEGMENT = 8


@dataclass
class ProblemSpec:
    corridor: Corridor
    shape: VehicleShape
    start_p: NDArray
    goal_p: NDArray
    start_Q: NDArray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    goal_Q: NDArray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    limits: Limits = field(default_factory=Limits)
    weights: PenaltyWeights = field(default_factory=PenaltyWeights)
    s: int = 4
    d_piece: float = 1.0
    lbfgs: LBFGSSettings = field(default_factory=LBFGSSettings)
    start_derivs: NDArray | None = None
    """Rows 1..s-1 of the start condition, (s-1, 6); zeros when omitted."""
    goal_derivs: NDArray | None = None
    xi_init: str = "path"
    """'path' places waypoints on the initial path, 'centroid' uses xi = 0."""
    attitude_jitter: float = 0.01
    """Std. dev. of the seeded perturbation added to the zero attitude waypoints."""
    seed: int = 0

    def __post_init__(self) -> None:
        self.start_p = np.asarray(self.start_p, dtype=float)
        self.goal_p = np.asarray(self.goal_p, dtype=float)
        self.start_Q = np.asarray(self.start_Q, dtype=float)
        self.goal_Q = np.asarray(self.goal_Q, dtype=float)
        if self.d_piece <= 0:
            raise ValueError("d_piece must be positive")
        if self.xi_init not in ("path", "centroid"):
            raise ValueError("xi_init must be 'path' or 'centroid'")

    def boundary(self) -> tuple[NDArray, NDArray]:
        """(s, 6) start and end conditions."""
        out = []
        for p, Q, extra in (
            (self.start_p, self.start_Q, self.start_derivs),
            (self.goal_p, self.goal_Q, self.goal_derivs),
        ):
            bc = np.zeros((self.s, 6))
            bc[0, :3] = p
            bc[0, 3:] = rotation.rotvec_from_quat(Q)
            if extra is not None:
                bc[1:] = np.asarray(extra, dtype=float).reshape(self.s - 1, 6)
            out.append(bc)
        return out[0], out[1]


@dataclass
class PieceAllocation:
    M: int
    piece_poly: NDArray
    """Polytope index of each piece."""
    boundaries: NDArray
    """Waypoint indices k_1 < ... (1-based over interior waypoints) where the polytope changes."""
    waypoint_polys: list[Polyhedron]
    waypoint_vertices: list[NDArray]
    waypoint_path: NDArray
    """Position of each interior waypoint on the initial path, (M-1, 3)."""
    piece_length: NDArray

    @property
    def xi_sizes(self) -> list[int]:
        return [len(V) for V in self.waypoint_vertices]


@dataclass
class DecisionVars:
    xi: list[NDArray]
    q_sigma: NDArray
    tau: NDArray

    def pack(self) -> NDArray:
        parts = [*self.xi, self.q_sigma.ravel(), self.tau]
        return np.concatenate(parts) if parts else np.zeros(0)

    @classmethod
    def unpack(cls, x: NDArray, alloc: PieceAllocation) -> DecisionVars:
        xi, k = [], 0
        for n in alloc.xi_sizes:
            xi.append(x[k : k + n])
            k += n
        nq = 3 * (alloc.M - 1)
        q_sigma = x[k : k + nq].reshape(3, alloc.M - 1)
        return cls(xi, q_sigma, x[k + nq : k + nq + alloc.M])


@dataclass
class SolveReport:
    N_iter: int
    t_opt: float
    cost: float
    violations: dict
    reason: str
    M: int
    n_eval: int = 0
    skipped_updates: int = 0
    success: bool = True

    def to_json(self) -> dict:
        return {
            "N_iter": self.N_iter,
            "t_opt": self.t_opt,
            "cost": self.cost,
            "violations": dict(self.violations),
            "reason": self.reason,
            "M": self.M,
            "n_eval": self.n_eval,
            "skipped_updates": self.skipped_updates,
            "success": self.success,
        }


def allocate_pieces(corridor: Corridor, d_piece: float) -> PieceAllocation:
    path = np.asarray(corridor.path, dtype=float)
    L = np.linalg.norm(np.diff(path, axis=0), axis=1)
    m = np.clip(np.ceil(L / d_piece - 1e-12).astype(int), 1, MAX_PIECES_PER_SEGMENT)
    M = int(m.sum())
    bounds = np.cumsum(m)[:-1]
    piece_poly = np.repeat(np.arange(len(m)), m)
    piece_length = np.repeat(L / m, m)
    polys, verts, pts = [], [], []
    for i, mi in enumerate(m):
        a, b = path[i], path[i + 1]
        for j in range(1, mi):
            polys.append(corridor.polys[i])
            pts.append(a + (j / mi) * (b - a))
        if i < len(m) - 1:
            polys.append(intersect(corridor.polys[i], corridor.polys[i + 1]))
            pts.append(b)
    verts = [P.vertices() for P in polys]
    return PieceAllocation(
        M=M,
        piece_poly=piece_poly,
        boundaries=bounds,
        waypoint_polys=polys,
        waypoint_vertices=verts,
        waypoint_path=np.array(pts).reshape(-1, 3),
        piece_length=piece_length,
    )


def forward_T(tau: ArrayLike) -> tuple[NDArray, NDArray]:
    """Durations and their (diagonal) Jacobian dT/dtau."""
    tau = np.asarray(tau, dtype=float)
    if np.any(~np.isfinite(tau)) or np.any(np.abs(tau) > TAU_MAX):
        raise FloatingPointError(f"tau outside [-{TAU_MAX}, {TAU_MAX}]")
    T = np.exp(tau)
    return T, T


def forward_qp(xi: NDArray, vertices: NDArray) -> tuple[NDArray, NDArray]:
    """Waypoint from free variables and its (3, k) Jacobian."""
    V = np.asarray(vertices, dtype=float)
    if len(V) == 0:
        raise ValueError("empty vertex set")
    a = xi * xi + 1.0
    S = float(np.sum(a))
    q = (a / S) @ V
    J = (V - q).T * (2.0 * xi / S)
    return q, J


def _xi_from_point(p: NDArray, V: NDArray, mix: float = 0.95) -> NDArray:
    """Free variables whose weights reproduce (almost) the point p."""
    k = len(V)
    # convex weights by NNLS with a heavily weighted sum-to-one row
    A = np.vstack([V.T, 1e3 * np.ones(k)])
    w, _ = nnls(A, np.concatenate([p, [1e3]]))
    w = w / max(w.sum(), 1e-12)
    w = mix * w + (1.0 - mix) / k
    a = 2.0 * w / w.min()
    return np.sqrt(a - 1.0)


def initialize(spec: ProblemSpec, alloc: PieceAllocation) -> DecisionVars:
    if spec.xi_init == "centroid":
        xi = [np.zeros(len(V)) for V in alloc.waypoint_vertices]
    else:
        xi = [_xi_from_point(p, V) for p, V in zip(alloc.waypoint_path, alloc.waypoint_vertices)]
    tau = np.log(np.maximum(alloc.piece_length / spec.limits.v_max, 0.1))
    return DecisionVars(xi, np.zeros((3, alloc.M - 1)), tau)


class Problem:
    """Objective closure with cached boundary data."""

    def __init__(self, spec: ProblemSpec, alloc: PieceAllocation):
        self.spec = spec
        self.alloc = alloc
        self.bc_start, self.bc_end = spec.boundary()
        self.assignment = [spec.corridor.polys[i] for i in alloc.piece_poly]

    def trajectory(self, v: DecisionVars) -> tuple[Trajectory, list[NDArray]]:
        T, _ = forward_T(v.tau)
        M = self.alloc.M
        qp = np.zeros((3, M - 1))
        jac = []
        for w, (xi, V) in enumerate(zip(v.xi, self.alloc.waypoint_vertices)):
            qp[:, w], J = forward_qp(xi, V)
            jac.append(J)
        q = np.vstack([qp, v.q_sigma])
        return construct(q, T, self.bc_start, self.bc_end, self.spec.s), jac

    def __call__(self, x: NDArray) -> tuple[float, NDArray]:
        v = DecisionVars.unpack(x, self.alloc)
        try:
            traj, jac = self.trajectory(v)
        except FloatingPointError:
            return np.inf, np.full_like(x, np.nan)
        sp = self.spec
        cg = total_cost(traj, sp.limits, sp.weights, self.assignment, sp.shape)
        dq, dT = propagate_gradient(traj, cg.dC_dc, cg.dC_dT)
        g_xi = [dq[:3, w] @ J for w, J in enumerate(jac)]
        g = DecisionVars(g_xi, dq[3:], dT * traj.durations).pack()
        return cg.value, g


def objective(v: DecisionVars, spec: ProblemSpec, alloc: PieceAllocation) -> tuple[float, DecisionVars]:
    f, g = Problem(spec, alloc)(v.pack())
    return f, DecisionVars.unpack(g, alloc)


def solve(spec: ProblemSpec, alloc: PieceAllocation | None = None) -> tuple[Trajectory, SolveReport]:
    alloc = allocate_pieces(spec.corridor, spec.d_piece) if alloc is None else alloc
    prob = Problem(spec, alloc)
    v0 = initialize(spec, alloc)
    if spec.attitude_jitter > 0 and alloc.M > 1:
        # a mirror-symmetric corridor makes q_sigma = 0 a saddle of the penalty
        rng = np.random.default_rng(spec.seed)
        v0.q_sigma = v0.q_sigma + spec.attitude_jitter * rng.standard_normal(v0.q_sigma.shape)
    x0 = v0.pack()
    t0 = time.perf_counter()
    res = lbfgs_minimize(prob, x0, spec.lbfgs)
    t_opt = time.perf_counter() - t0
    traj, _ = prob.trajectory(DecisionVars.unpack(res.x, alloc))
    viol = sampled_violations(
        traj, spec.limits, prob.assignment, spec.shape, per_piece=4 * spec.weights.kappa
    )
    ok = res.reason not in ("nonfinite", "line_search")
    logger.info(
        "solve: M=%d iters=%d evals=%d cost=%.6g reason=%s t=%.3fs",
        alloc.M, res.n_iter, res.n_eval, res.f, res.reason, t_opt,
    )
    report = SolveReport(
        N_iter=res.n_iter,
        t_opt=t_opt,
        cost=float(res.f),
        violations=viol,
        reason=res.reason,
        M=alloc.M,
        n_eval=res.n_eval,
        skipped_updates=res.skipped_updates,
        success=ok,
    )
    return traj, report
