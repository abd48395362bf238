"""Flat-output maps: full state and body wrench from z = (p, sigma) and its derivatives."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import rotation
from .minco import Trajectory

GRAVITY = np.array([0.0, 0.0, -9.8])

PROFILE_HEADER = (
    "t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz,ax,ay,az,"
    "fbx,fby,fbz,taux,tauy,tauz,vnorm,anorm,wnorm"
).split(",")


@dataclass(frozen=True)
class InertiaParams:
    m: float = 2.0
    J_b: NDArray = field(default_factory=lambda: np.diag([0.03, 0.03, 0.05]))
    g: NDArray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self) -> None:
        J = np.asarray(self.J_b, dtype=float)
        if J.shape != (3, 3) or np.max(np.abs(J - J.T)) > 1e-12:
            raise ValueError("J_b must be a symmetric 3x3 matrix")
        if np.min(np.linalg.eigvalsh(J)) <= 0:
            raise ValueError("J_b must be positive definite")
        if self.m <= 0:
            raise ValueError("mass must be positive")
        object.__setattr__(self, "J_b", J)
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float))

    @property
    def J_b_inv(self) -> NDArray:
        return np.linalg.inv(self.J_b)


@dataclass
class FullState:
    """Position, attitude, linear and world-frame angular velocity (batched allowed)."""

    p: NDArray
    Q: NDArray
    v: NDArray
    omega: NDArray

    @property
    def R(self) -> NDArray:
        return rotation.rotmat_from_quat(self.Q)

    @property
    def omega_b(self) -> NDArray:
        return np.einsum("...ji,...j->...i", self.R, self.omega)

    def copy(self) -> FullState:
        return FullState(self.p.copy(), self.Q.copy(), self.v.copy(), self.omega.copy())


@dataclass
class ControlInput:
    f_b: NDArray
    tau_b: NDArray


def state_map(z: ArrayLike, z_dot: ArrayLike) -> FullState:
    z = np.asarray(z, dtype=float)
    zd = np.asarray(z_dot, dtype=float)
    Q = rotation.quat_from_rotvec(z[..., 3:])
    omega = rotation.angular_velocity(z[..., 3:], zd[..., 3:])
    return FullState(p=z[..., :3].copy(), Q=Q, v=zd[..., :3].copy(), omega=omega)


def input_map(z: ArrayLike, z_dot: ArrayLike, z_ddot: ArrayLike, params: InertiaParams) -> ControlInput:
    """Newton-Euler wrench in the body frame.

    With omega_b = R^T omega, the body torque R^T (omega x J omega + J omega_dot)
    reduces to omega_b x J_b omega_b + J_b R^T omega_dot.
    """
    z = np.asarray(z, dtype=float)
    zd = np.asarray(z_dot, dtype=float)
    zdd = np.asarray(z_ddot, dtype=float)
    sig, sd, sdd = z[..., 3:], zd[..., 3:], zdd[..., 3:]
    R = rotation.rotmat_from_rotvec(sig)
    Rt = np.swapaxes(R, -1, -2)
    omega = rotation.angular_velocity(sig, sd)
    omega_dot = rotation.angular_acceleration(sig, sd, sdd)
    f_b = params.m * np.einsum("...ij,...j->...i", Rt, zdd[..., :3] - params.g)
    w_b = np.einsum("...ij,...j->...i", Rt, omega)
    wd_b = np.einsum("...ij,...j->...i", Rt, omega_dot)
    Jw = w_b @ params.J_b.T
    tau_b = rotation.cross(w_b, Jw) + wd_b @ params.J_b.T
    return ControlInput(f_b=f_b, tau_b=tau_b)


def profile_times(total: float, dt: float) -> NDArray:
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = int(np.floor(total / dt + 1e-9)) + 1
    return dt * np.arange(n)


def sample_profile(traj: Trajectory, dt: float, params: InertiaParams) -> dict[str, NDArray]:
    """Columns of :data:`PROFILE_HEADER` sampled at t = 0, dt, ..., <= total duration."""
    t = np.minimum(profile_times(traj.total_duration, dt), traj.total_duration)
    z, zd, zdd = (traj.eval(t, k) for k in range(3))
    st = state_map(z, zd)
    u = input_map(z, zd, zdd, params)
    a = zdd[:, :3]
    cols = [t[:, None], st.p, st.Q, st.v, st.omega, a, u.f_b, u.tau_b]
    norms = [np.linalg.norm(x, axis=1)[:, None] for x in (st.v, a, st.omega)]
    table = np.hstack(cols + norms)
    return {name: table[:, i] for i, name in enumerate(PROFILE_HEADER)}


def write_profile_csv(profile: dict[str, NDArray], path: str | Path) -> None:
    rows = np.column_stack([profile[h] for h in PROFILE_HEADER])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_HEADER)
        for r in rows:
            w.writerow([f"{x:.9g}" for x in r])
