"""Minimum-control-effort piecewise polynomials.

A trajectory of order ``s`` has ``M`` pieces of degree ``2s - 1`` in local
time; the coefficients follow from waypoints ``q`` and durations ``T`` by a
square banded linear system.  Row layout (``n = 2 M s`` rows)::

    s rows          z^(k)(0) = start condition, k = 0..s-1
    per knot i      2s-1 continuity rows, orders 0..2s-2, then the
                    interpolation row z_i(T_i) = q_i
    s rows          z^(k)(T_M) = end condition

This keeps the lower bandwidth at 3s-1 and the upper at s, so LU with
partial pivoting (LAPACK ``gbtrf``) costs O(M s^3).  The same factors serve
the transposed solve used by :func:`propagate_gradient`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import lapack


class MincoError(ValueError):
    pass


@lru_cache(maxsize=None)
def falling_factorials(n_coef: int) -> NDArray:
    """F[k, p] = p! / (p - k)! (zero when p < k), for k, p < n_coef."""
    F = np.zeros((n_coef, n_coef))
    for k in range(n_coef):
        for p in range(k, n_coef):
            F[k, p] = factorial(p) / factorial(p - k)
    F.setflags(write=False)
    return F


def basis(t: ArrayLike, n_coef: int, orders: int | None = None) -> NDArray:
    """beta^(k)(t) for k < orders; shape t.shape + (orders, n_coef)."""
    t = np.asarray(t, dtype=float)
    orders = n_coef if orders is None else orders
    F = falling_factorials(n_coef)[:orders]
    p = np.arange(n_coef)
    k = np.arange(orders)[:, None]
    powers = np.maximum(p[None, :] - k, 0)
    return F * t[..., None, None] ** powers


@lru_cache(maxsize=64)
def _pattern(M: int, s: int):
    """Row/column index arrays of the system (start, knot, end blocks)."""
    n2 = 2 * s
    i = np.arange(M - 1)[:, None, None]
    k = np.arange(n2)[None, :, None]
    p = np.arange(n2)[None, None, :]
    base = s + n2 * i
    # k < 2s-1 are continuity orders; k = 2s-1 is the interpolation row
    knot_rows = np.broadcast_to(base + k, (M - 1, n2, n2))
    knot_cols = np.broadcast_to(n2 * i + p, (M - 1, n2, n2))
    kc = np.arange(n2 - 1)
    next_rows = (s + n2 * np.arange(M - 1)[:, None] + kc[None, :])
    next_cols = n2 * (np.arange(M - 1)[:, None] + 1) + kc[None, :]
    end_base = s + n2 * (M - 1)
    ke = np.arange(s)[:, None]
    end_rows = np.broadcast_to(end_base + ke, (s, n2))
    end_cols = np.broadcast_to(n2 * (M - 1) + np.arange(n2)[None, :], (s, n2))
    return knot_rows, knot_cols, next_rows, next_cols, end_rows, end_cols


@lru_cache(maxsize=64)
def _flat_pattern(M: int, s: int) -> tuple[NDArray, NDArray, NDArray]:
    """The same entries as flat indices into C-ordered banded storage."""
    kl, ku = _bandwidths(s)
    n = 2 * s * M
    kr, kc, nr, nc, er, ec = _pattern(M, s)
    return tuple(((kl + ku + r - c) * n + c).reshape(-1) for r, c in ((kr, kc), (nr, nc), (er, ec)))


def _bandwidths(s: int) -> tuple[int, int]:
    return 3 * s - 1, s


@dataclass(frozen=True)
class Trajectory:
    """Immutable piecewise polynomial; ``coeffs[i]`` is the 2s x D block c_i."""

    s: int
    coeffs: NDArray
    durations: NDArray
    _lu: tuple | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=float)
        T = np.asarray(self.durations, dtype=float).reshape(-1)
        if c.ndim != 3 or c.shape[0] != T.shape[0] or c.shape[1] != 2 * self.s:
            raise ValueError("coeffs must be (M, 2s, D) matching durations")
        c.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "durations", T)

    @property
    def M(self) -> int:
        return self.coeffs.shape[0]

    @property
    def dim(self) -> int:
        return self.coeffs.shape[2]

    @property
    def knots(self) -> NDArray:
        return np.concatenate([[0.0], np.cumsum(self.durations)])

    @property
    def total_duration(self) -> float:
        return float(np.sum(self.durations))

    def locate(self, t: ArrayLike) -> tuple[NDArray, NDArray]:
        """Piece index and local time; knots resolve to the left piece."""
        t = np.asarray(t, dtype=float)
        knots = self.knots
        if np.any(t < 0.0) or np.any(t > knots[-1] * (1 + 1e-12) + 1e-12):
            raise ValueError("t outside trajectory domain")
        idx = np.clip(np.searchsorted(knots, t, side="left") - 1, 0, self.M - 1)
        return idx, np.clip(t - knots[idx], 0.0, None)

    def eval(self, t: ArrayLike, order: int = 0) -> NDArray:
        if not 0 <= order <= 2 * self.s - 1:
            raise ValueError(f"derivative order must be in [0, {2 * self.s - 1}]")
        idx, alpha = self.locate(t)
        b = basis(alpha, 2 * self.s, order + 1)[..., order, :]
        return np.einsum("...p,...pd->...d", b, self.coeffs[idx])

    def end_derivatives(self) -> NDArray:
        """z_i^(k)(T_i) for every piece, shape (M, 2s, D)."""
        B = basis(self.durations, 2 * self.s)
        return B @ self.coeffs

    def to_json(self) -> dict:
        return {
            "s": self.s,
            "pieces": [
                {"T": float(T), "coeffs": c.tolist()} for T, c in zip(self.durations, self.coeffs)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> Trajectory:
        pieces = obj["pieces"]
        return cls(
            s=int(obj["s"]),
            coeffs=np.array([p["coeffs"] for p in pieces], dtype=float),
            durations=np.array([p["T"] for p in pieces], dtype=float),
        )


def _check_bc(bc: ArrayLike, s: int, D: int, name: str) -> NDArray:
    bc = np.asarray(bc, dtype=float)
    if bc.shape != (s, D):
        raise MincoError(f"{name} must have shape ({s}, {D}), got {bc.shape}")
    if not np.all(np.isfinite(bc)):
        raise MincoError(f"{name} must be finite")
    return bc


def assemble(q: ArrayLike, T: ArrayLike, bc_start: ArrayLike, bc_end: ArrayLike, s: int):
    """Banded LAPACK storage of M(T) and the right-hand side b(q)."""
    if s not in (2, 3, 4):
        raise MincoError("order s must be 2, 3 or 4")
    T = np.asarray(T, dtype=float).reshape(-1)
    M = T.shape[0]
    if M < 1:
        raise MincoError("need at least one piece")
    if np.any(~np.isfinite(T)) or np.any(T <= 0.0):
        raise MincoError("durations must be strictly positive")
    q = np.asarray(q, dtype=float)
    bc_start = np.asarray(bc_start, dtype=float)
    D = bc_start.shape[1] if bc_start.ndim == 2 else 1
    q = q.reshape(D, M - 1)
    bc_start = _check_bc(bc_start, s, D, "bc_start")
    bc_end = _check_bc(bc_end, s, D, "bc_end")

    n2 = 2 * s
    n = n2 * M
    kl, ku = _bandwidths(s)
    off = kl + ku
    ab = np.zeros((2 * kl + ku + 1, n))
    F = falling_factorials(n2)
    ks = np.arange(s)
    ab[off, ks] = F[ks, ks]

    E = basis(T, n2)  # (M, 2s, 2s): beta^(k)(T_i)
    knot_idx, next_idx, end_idx = _flat_pattern(M, s)
    flat = ab.reshape(-1)
    if M > 1:
        flat[knot_idx] = np.concatenate([E[:-1, : n2 - 1, :], E[:-1, :1, :]], axis=1).reshape(-1)
        kk = np.arange(n2 - 1)
        flat[next_idx] = np.broadcast_to(-F[kk, kk], (M - 1, n2 - 1)).reshape(-1)
    flat[end_idx] = E[-1, :s, :].reshape(-1)

    rhs = np.zeros((n, D))
    rhs[:s] = bc_start
    if M > 1:
        rhs[s + n2 * np.arange(M - 1) + n2 - 1] = q.T
    rhs[n - s :] = bc_end
    return ab, rhs, kl, ku


def construct(
    q: ArrayLike, T: ArrayLike, bc_start: ArrayLike, bc_end: ArrayLike, s: int = 4
) -> Trajectory:
    """Unique spline through ``q`` with durations ``T`` and the given end conditions.

    ``q`` is D x (M-1) (one column per interior knot), the boundary
    conditions are s x D with row k holding the k-th derivative.
    """
    ab, rhs, kl, ku = assemble(q, T, bc_start, bc_end, s)
    lu, piv, info = lapack.dgbtrf(ab, kl, ku)
    if info != 0:
        raise MincoError("singular MINCO system")
    c, info = lapack.dgbtrs(lu, kl, ku, rhs, piv)
    if info != 0:
        raise MincoError(f"banded solve failed (info={info})")
    T = np.asarray(T, dtype=float).reshape(-1)
    coeffs = c.reshape(T.shape[0], 2 * s, -1)
    return Trajectory(s=s, coeffs=coeffs, durations=T, _lu=(lu, piv, kl, ku))


def dense_system(q, T, bc_start, bc_end, s: int) -> tuple[NDArray, NDArray]:
    """Dense copy of the same system, for cross-checks."""
    ab, rhs, kl, ku = assemble(q, T, bc_start, bc_end, s)
    n = ab.shape[1]
    A = np.zeros((n, n))
    for j in range(n):
        for i in range(max(0, j - ku), min(n, j + kl + 1)):
            A[i, j] = ab[kl + ku + i - j, j]
    return A, rhs


def propagate_gradient(
    traj: Trajectory, dK_dc: ArrayLike, dK_dT_direct: ArrayLike
) -> tuple[NDArray, NDArray]:
    """Pull a gradient w.r.t. the coefficients back to (q, T).

    Returns ``dK_dq`` (D x (M-1)) and the total ``dK_dT`` (length M).
    """
    if traj._lu is None:
        raise MincoError("trajectory was not produced by construct")
    M, n2, D = traj.coeffs.shape
    s = traj.s
    G = np.asarray(dK_dc, dtype=float)
    dT = np.asarray(dK_dT_direct, dtype=float).reshape(-1)
    if G.shape != traj.coeffs.shape or dT.shape != (M,):
        raise MincoError("gradient shapes do not match the trajectory")
    lu, piv, kl, ku = traj._lu
    lam, info = lapack.dgbtrs(lu, kl, ku, G.reshape(M * n2, D), piv, trans=1)
    if info != 0:
        raise MincoError(f"adjoint solve failed (info={info})")

    Z = traj.end_derivatives()  # (M, 2s, D)
    dT = dT.copy()
    if M > 1:
        L = lam[s : s + n2 * (M - 1)].reshape(M - 1, n2, D)
        cont = (L[:, : n2 - 1] * Z[:-1, 1:n2]).sum(axis=(1, 2))
        interp = (L[:, n2 - 1] * Z[:-1, 1]).sum(axis=1)
        dT[:-1] -= cont + interp
        dq = L[:, n2 - 1].T.copy()
    else:
        dq = np.zeros((D, 0))
    L_end = lam[M * n2 - s :]
    dT[-1] -= float(np.vdot(L_end, Z[-1, 1 : s + 1]))
    return dq, dT
