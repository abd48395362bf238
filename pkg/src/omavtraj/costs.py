"""Objective terms over a MINCO trajectory and their analytic gradients.

Every sampled penalty has the form ``W * sum_j phi(z, z', z'')(t_ij) * T_i / kappa``
with ``t_ij = t_{i-1} + (j / kappa) T_i`` for ``j = 1..kappa``.  Writing
``g_k = dphi/dz^(k)`` at a sample, the chain rule through
``z^(k)(t_ij) = c_i^T beta^(k)(j T_i / kappa)`` gives

    dP/dc_i = (T_i / kappa) sum_j sum_k beta^(k) g_k^T
    dP/dT_i = sum_j [phi / kappa + (T_i / kappa) (j / kappa) sum_k g_k . z^(k+1)]

which is the shared accumulator below; each family only supplies ``phi``
and its ``g_k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import rotation
from .minco import Trajectory, basis, falling_factorials
from .polytope import Polyhedron, VehicleShape

FAMILIES = ("v", "a", "omega", "corridor")


@dataclass(frozen=True)
class Limits:
    v_max: float = 0.6
    a_max: float = 2.0
    omega_max: float = 0.5

    def __post_init__(self) -> None:
        if min(self.v_max, self.a_max, self.omega_max) <= 0:
            raise ValueError("limits must be strictly positive")


@dataclass(frozen=True)
class PenaltyWeights:
    W_v: float = 1e5
    W_a: float = 1e5
    W_omega: float = 1e5
    W_c: float = 1e5
    k_rho: float = 10.0
    kappa: int = 16

    def __post_init__(self) -> None:
        if int(self.kappa) != self.kappa or self.kappa < 2:
            raise ValueError("kappa must be an integer >= 2")
        if min(self.W_v, self.W_a, self.W_omega, self.W_c) < 0:
            raise ValueError("penalty weights must be nonnegative")


@dataclass
class CostGradients:
    value: float
    dC_dc: NDArray
    dC_dT: NDArray

    def __add__(self, other: CostGradients) -> CostGradients:
        return CostGradients(self.value + other.value, self.dC_dc + other.dC_dc, self.dC_dT + other.dC_dT)

    @classmethod
    def zeros_like(cls, traj: Trajectory) -> CostGradients:
        return cls(0.0, np.zeros_like(traj.coeffs), np.zeros(traj.M))


def hinge_cubic(x):
    """V(x) = max(x, 0)^3 and its derivative."""
    m = np.maximum(x, 0.0)
    return m**3, 3.0 * m**2


def gram_matrices(T: NDArray, s: int) -> NDArray:
    """int_0^T beta^(s) beta^(s)^T dt for each duration, (M, 2s, 2s)."""
    n2 = 2 * s
    F = falling_factorials(n2)[s]
    p = np.arange(n2)
    e = p[:, None] + p[None, :] - 2 * s + 1
    active = (p[:, None] >= s) & (p[None, :] >= s)
    e_safe = np.where(active, e, 1)
    coef = np.where(active, F[:, None] * F[None, :] / e_safe, 0.0)
    return coef * np.asarray(T, dtype=float)[:, None, None] ** e_safe


def smoothness_energy(traj: Trajectory, k_rho: float) -> CostGradients:
    c, T, s = traj.coeffs, traj.durations, traj.s
    Q = gram_matrices(T, s)
    Qc = Q @ c
    J = float(np.vdot(c, Qc))
    zs = (basis(T, 2 * s, s + 1)[:, s, None, :] @ c)[:, 0]
    dT = np.sum(zs * zs, axis=1) + k_rho
    return CostGradients(J + k_rho * float(np.sum(T)), 2.0 * Qc, dT)


def _hinge_grad(x: NDArray, W: float) -> tuple[NDArray, NDArray] | None:
    """W * V(x) and W * V'(x), or None when every sample is feasible."""
    if not x.max() > 0.0:
        return None
    m = np.maximum(x, 0.0)
    return W * m**3, 3.0 * W * m * m


def _samples(traj: Trajectory, kappa: int) -> tuple[NDArray, NDArray, NDArray]:
    """Sample fractions, basis rows (M, kappa, 4, 2s) and z^(0..3) (M, kappa, 4, D)."""
    frac = np.arange(1, kappa + 1) / kappa
    B = basis(traj.durations[:, None] * frac, 2 * traj.s, 4)
    z = B @ traj.coeffs[:, None]
    return frac, B, z


def _kinodynamic_terms(
    z: NDArray, limits: Limits, weights: PenaltyWeights, families: tuple[str, ...], phi: NDArray, g: NDArray
) -> None:
    """Velocity, acceleration and body-rate families over all samples at once."""
    vel, acc = z[..., 1, :3], z[..., 2, :3]
    if "v" in families and weights.W_v > 0:
        r = _hinge_grad((vel * vel).sum(-1) - limits.v_max**2, weights.W_v)
        if r is not None:
            phi += r[0]
            g[..., 1, :3] += (2.0 * r[1])[..., None] * vel
    if "a" in families and weights.W_a > 0:
        r = _hinge_grad((acc * acc).sum(-1) - limits.a_max**2, weights.W_a)
        if r is not None:
            phi += r[0]
            g[..., 2, :3] += (2.0 * r[1])[..., None] * acc
    if "omega" in families and weights.W_omega > 0:
        s, sd = z[..., 0, 3:], z[..., 1, 3:]
        s2 = (s * s).sum(-1)
        den = 1.0 + s2
        c = (s * sd).sum(-1)
        f = 4.0 / den**2
        u = (s2 - 1.0)[..., None] * sd - 2.0 * c[..., None] * s + 2.0 * rotation.cross(s, sd)
        om = f[..., None] * u
        r = _hinge_grad((om * om).sum(-1) - limits.omega_max**2, weights.W_omega)
        if r is not None:
            phi += r[0]
            coef = (2.0 * r[1])[..., None]
            # row-vector products om^T A and om^T domega/dsigma without forming the Jacobians
            ws, wsd = (om * s).sum(-1)[..., None], (om * sd).sum(-1)[..., None]
            wA = f[..., None] * ((s2 - 1.0)[..., None] * om - 2.0 * ws * s + 2.0 * rotation.cross(om, s))
            wdu = 2.0 * wsd * s - 2.0 * ws * sd - 2.0 * c[..., None] * om - 2.0 * rotation.cross(om, sd)
            wds = f[..., None] * wdu - (16.0 / den**3 * (om * u).sum(-1))[..., None] * s
            g[..., 0, 3:] += coef * wds
            g[..., 1, 3:] += coef * wA


def _corridor_terms(
    z: NDArray, verts: NDArray, poly: Polyhedron, shape: VehicleShape, W: float, phi: NDArray, g: NDArray
) -> None:
    """Whole-body containment for one piece; z is (kappa, 4, 6), verts (kappa, L, 3)."""
    viol = verts @ poly.A.T - poly.b  # (kappa, L, K)
    r = _hinge_grad(viol, W)
    if r is None:
        return
    phi += r[0].sum(axis=(1, 2))
    h = r[1]
    g[:, 0, :3] += h.sum(axis=1) @ poly.A
    # E_j = sum_lk h n_k v_l^T, so dphi/dsigma_w = <E_j, dR/dsigma_w>
    E = np.swapaxes(h @ poly.A, 1, 2) @ shape.vertices_body
    g[:, 0, 3:] += np.einsum("jab,jwab->jw", E, rotation.dR_dsigma(z[:, 0, 3:]))


def sampled_penalties(
    traj: Trajectory,
    limits: Limits,
    weights: PenaltyWeights,
    families: tuple[str, ...] = FAMILIES,
    assignment: list[Polyhedron] | None = None,
    shape: VehicleShape | None = None,
) -> CostGradients:
    with_corridor = "corridor" in families and weights.W_c > 0
    if with_corridor:
        if assignment is None or shape is None:
            raise ValueError("corridor penalty needs a polyhedron per piece and a vehicle shape")
        if len(assignment) != traj.M or any(P is None for P in assignment):
            raise ValueError("every piece needs an assigned polyhedron")
    kappa = int(weights.kappa)
    frac, B, z = _samples(traj, kappa)
    phi = np.zeros(z.shape[:2])
    g = np.zeros(z.shape[:2] + (3, traj.dim))
    _kinodynamic_terms(z, limits, weights, families, phi, g)
    if with_corridor:
        R = rotation.rotmat_from_rotvec(z[:, :, 0, 3:])
        verts = z[:, :, 0, None, :3] + shape.vertices_body @ np.swapaxes(R, -1, -2)
        # polytopes differ per piece, so the face tests loop over pieces
        for i in range(traj.M):
            _corridor_terms(z[i], verts[i], assignment[i], shape, weights.W_c, phi[i], g[i])

    T = traj.durations
    w = T / kappa
    phi_sum = phi.sum(axis=1)
    value = float(w @ phi_sum)
    M, n2 = B.shape[0], B.shape[-1]
    Bg = np.swapaxes(B[:, :, :3].reshape(M, -1, n2), 1, 2) @ g.reshape(M, -1, traj.dim)
    dc = w[:, None, None] * Bg
    shift = (g * z[:, :, 1:4]).sum(axis=(2, 3))
    dT = phi_sum / kappa + w * (shift @ frac)
    return CostGradients(value, dc, dT)


def kinodynamic_penalties(traj: Trajectory, limits: Limits, weights: PenaltyWeights) -> CostGradients:
    return sampled_penalties(traj, limits, weights, ("v", "a", "omega"))


def corridor_penalty(
    traj: Trajectory, assignment: list[Polyhedron], shape: VehicleShape, weights: PenaltyWeights
) -> CostGradients:
    return sampled_penalties(traj, Limits(), weights, ("corridor",), assignment, shape)


def total_cost(
    traj: Trajectory,
    limits: Limits,
    weights: PenaltyWeights,
    assignment: list[Polyhedron] | None,
    shape: VehicleShape | None,
) -> CostGradients:
    fam = FAMILIES if assignment is not None else ("v", "a", "omega")
    return smoothness_energy(traj, weights.k_rho) + sampled_penalties(
        traj, limits, weights, fam, assignment, shape
    )


def sampled_violations(
    traj: Trajectory,
    limits: Limits,
    assignment: list[Polyhedron] | None,
    shape: VehicleShape | None,
    per_piece: int = 64,
) -> dict[str, float]:
    """Largest sampled excess over each limit (0 when satisfied).

    Limits are reported in their own units (m/s, m/s^2, rad/s); the
    corridor entry is the largest signed vertex-to-face distance in meters.
    """
    out = dict.fromkeys(FAMILIES, 0.0)
    for i in range(traj.M):
        T = float(traj.durations[i])
        alpha = np.linspace(0.0, T, per_piece + 1)
        z = np.einsum("jkp,pd->jkd", basis(alpha, 2 * traj.s, 3), traj.coeffs[i])
        out["v"] = max(out["v"], float(np.max(np.linalg.norm(z[:, 1, :3], axis=1))) - limits.v_max)
        out["a"] = max(out["a"], float(np.max(np.linalg.norm(z[:, 2, :3], axis=1))) - limits.a_max)
        om = rotation.angular_velocity(z[:, 0, 3:], z[:, 1, 3:])
        out["omega"] = max(out["omega"], float(np.max(np.linalg.norm(om, axis=1))) - limits.omega_max)
        if assignment is not None and shape is not None:
            R = rotation.rotmat_from_rotvec(z[:, 0, 3:])
            verts = z[:, 0, None, :3] + np.einsum("jab,lb->jla", R, shape.vertices_body)
            P = assignment[i]
            out["corridor"] = max(out["corridor"], float(np.max(verts @ P.A.T - P.b)))
    return {k: max(v, 0.0) for k, v in out.items()}
