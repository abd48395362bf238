"""Rigid-body simulation and cascade PID tracking at the wrench level.

Position loop: ``v_sp = K_Pp e_p``, then a PID on ``e_v = v_sp - v`` plus a
feed-forward on the reference velocity.  Attitude loop: the quaternion
error ``Q_ref (x) Q^-1`` maps to a body-rate setpoint, then a PID on the
rate error plus a feed-forward on the reference body rate.  The resulting
accelerations are turned into a body wrench which is applied directly
(no rotor allocation).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import rotation
from .flatness import ControlInput, FullState, InertiaParams, input_map, state_map
from .minco import Trajectory

logger = logging.getLogger(__name__)


def _vec(x) -> NDArray:
    a = np.asarray(x, dtype=float)
    return np.full(3, float(a)) if a.ndim == 0 else a.reshape(3)


@dataclass
class Gains:
    """Diagonal gains as 3-vectors (scalars broadcast)."""

    K_Pp: NDArray = 3.0
    K_Pv: NDArray = 6.0
    K_Iv: NDArray = 0.0
    K_Dv: NDArray = 0.0
    K_Fv: NDArray = 6.0
    K_PQ: NDArray = 6.0
    K_Pw: NDArray = 12.0
    K_Iw: NDArray = 0.0
    K_Dw: NDArray = 0.0
    K_Fw: NDArray = 12.0
    d_com: NDArray = 0.0
    i_limit_v: float = 2.0
    i_limit_w: float = 2.0

    def __post_init__(self) -> None:
        for f in fields(self):
            if f.name.startswith("K_") or f.name == "d_com":
                v = _vec(getattr(self, f.name))
                if f.name != "d_com" and np.any(v < 0):
                    raise ValueError(f"gain {f.name} must be nonnegative")
                setattr(self, f.name, v)

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_json(cls, obj: dict) -> Gains:
        names = {f.name for f in fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise KeyError(f"unknown gain keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class PIDState:
    integral: NDArray = field(default_factory=lambda: np.zeros(3))
    prev_error: NDArray | None = None
    prev_raw: NDArray | None = None


@dataclass
class ControllerState:
    vel: PIDState = field(default_factory=PIDState)
    rate: PIDState = field(default_factory=PIDState)


def _pid(e: NDArray, st: PIDState, kp, ki, kd, limit: float, dt: float) -> NDArray:
    """PID with trapezoidal integral, clamped integrator and backward-difference derivative."""
    prev = e if st.prev_error is None else st.prev_error
    st.integral = np.clip(st.integral + 0.5 * dt * (e + prev), -limit, limit)
    deriv = (e - prev) / dt
    st.prev_error = e.copy()
    return kp * e + ki * st.integral + kd * deriv


def outer_position_control(
    p_ref: NDArray, p_fdb: NDArray, v_ref: NDArray, v_fdb: NDArray, state: ControllerState, gains: Gains, dt: float
) -> NDArray:
    if dt <= 0:
        raise ValueError("dt must be positive")
    v_sp = gains.K_Pp * (np.asarray(p_ref) - p_fdb)
    e_v = v_sp - v_fdb
    return _pid(e_v, state.vel, gains.K_Pv, gains.K_Iv, gains.K_Dv, gains.i_limit_v, dt) + gains.K_Fv * v_ref


def rate_setpoint(Q_ref: NDArray, Q_fdb: NDArray, gains: Gains) -> NDArray:
    """Body-rate setpoint from the quaternion error, shortest way round."""
    e = rotation.quat_multiply(Q_ref, rotation.quat_conjugate(Q_fdb))
    sign = 1.0 if e[0] >= 0.0 else -1.0
    # e_vec lives in the world frame; rotate it into the body frame
    e_vec_b = rotation.rotmat_from_quat(Q_fdb).T @ e[1:]
    return sign * gains.K_PQ * e_vec_b


def attitude_rate_control(
    Q_ref: NDArray, Q_fdb: NDArray, w_b_ref: NDArray, w_b_fdb: NDArray, state: ControllerState, gains: Gains, dt: float
) -> NDArray:
    if dt <= 0:
        raise ValueError("dt must be positive")
    e_w = rate_setpoint(Q_ref, Q_fdb, gains) - w_b_fdb
    return _pid(e_w, state.rate, gains.K_Pw, gains.K_Iw, gains.K_Dw, gains.i_limit_w, dt) + gains.K_Fw * w_b_ref


def wrench_command(
    a_sp: NDArray, wdot_b_sp: NDArray, Q_fdb: NDArray, w_b_fdb: NDArray, params: InertiaParams, gains: Gains
) -> ControlInput:
    R = rotation.rotmat_from_quat(Q_fdb)
    f_b = params.m * R.T @ (np.asarray(a_sp) - params.g)
    Jw = params.J_b @ w_b_fdb
    tau_b = params.J_b @ wdot_b_sp + rotation.cross(gains.d_com, f_b) + rotation.cross(w_b_fdb, Jw)
    return ControlInput(f_b=f_b, tau_b=tau_b)


# --- dynamics -----------------------------------------------------------------

def _rotmat(Q: NDArray) -> NDArray:
    w, x, y, z = Q
    return np.array([
        [w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z],
    ])


def _deriv(x: NDArray, f_b: NDArray, tau_b: NDArray, params: InertiaParams, J_inv: NDArray) -> NDArray:
    """x = [p, v, Q, omega_b]; body-frame Euler equations, Q_dot = Q (x) [0, omega_b] / 2."""
    qw, qx, qy, qz = x[6:10]
    wx, wy, wz = w_b = x[10:13]
    out = np.empty(13)
    out[0:3] = x[3:6]
    out[3:6] = params.g + _rotmat(x[6:10]) @ f_b / params.m
    out[6:10] = 0.5 * np.array([
        -qx * wx - qy * wy - qz * wz,
        qw * wx + qy * wz - qz * wy,
        qw * wy + qz * wx - qx * wz,
        qw * wz + qx * wy - qy * wx,
    ])
    Jw = params.J_b @ w_b
    gyro = np.array([wy * Jw[2] - wz * Jw[1], wz * Jw[0] - wx * Jw[2], wx * Jw[1] - wy * Jw[0]])
    out[10:13] = J_inv @ (tau_b - gyro)
    return out


def _pack(state: FullState) -> NDArray:
    return np.concatenate([state.p, state.v, state.Q, state.omega_b])


def _unpack(x: NDArray) -> FullState:
    Q = x[6:10] / np.linalg.norm(x[6:10])
    omega = rotation.rotmat_from_quat(Q) @ x[10:13]
    return FullState(p=x[0:3].copy(), Q=Q, v=x[3:6].copy(), omega=omega)


def rk4_step(x: NDArray, u_at, params: InertiaParams, J_inv: NDArray, t: float, dt: float) -> NDArray:
    u0, um, u1 = u_at(t), u_at(t + 0.5 * dt), u_at(t + dt)
    k1 = _deriv(x, u0.f_b, u0.tau_b, params, J_inv)
    k2 = _deriv(x + 0.5 * dt * k1, um.f_b, um.tau_b, params, J_inv)
    k3 = _deriv(x + 0.5 * dt * k2, um.f_b, um.tau_b, params, J_inv)
    k4 = _deriv(x + dt * k3, u1.f_b, u1.tau_b, params, J_inv)
    x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    x[6:10] /= np.linalg.norm(x[6:10])
    return x


def rigid_body_step(state: FullState, u: ControlInput, params: InertiaParams, dt: float) -> FullState:
    """One RK4 step with the wrench held constant; the quaternion is renormalized."""
    if not 0 < dt <= 1e-2:
        raise ValueError("dt must lie in (0, 0.01]")
    x = rk4_step(_pack(state), lambda _t: u, params, params.J_b_inv, 0.0, dt)
    return _unpack(x)


def simulate_open_loop(state0: FullState, u_of_t, params: InertiaParams, dt: float, t_end: float) -> tuple[NDArray, list[FullState]]:
    """Integrate under a time-varying wrench ``u_of_t(t)`` (evaluated at RK4 stage times)."""
    n = int(np.floor(t_end / dt + 1e-9))
    x = _pack(state0)
    J_inv = params.J_b_inv
    times, states = [0.0], [state0.copy()]
    for k in range(n):
        x = rk4_step(x, u_of_t, params, J_inv, k * dt, dt)
        times.append((k + 1) * dt)
        states.append(_unpack(x))
    return np.array(times), states


def replay_open_loop(traj: Trajectory, params: InertiaParams, dt: float, t_end: float) -> tuple[NDArray, NDArray, NDArray]:
    """Feed the flatness wrench of ``traj`` to the simulator without feedback.

    Returns sample times, position error norms and geodesic attitude errors.
    """
    t_end = min(t_end, traj.total_duration)
    n = int(np.floor(t_end / dt + 1e-9))
    # wrench on the half-step grid, so RK4 stages read exact values
    th = np.minimum(0.5 * dt * np.arange(2 * n + 1), traj.total_duration)
    u = input_map(traj.eval(th, 0), traj.eval(th, 1), traj.eval(th, 2), params)
    lookup = lambda t: ControlInput(u.f_b[int(round(2 * t / dt))], u.tau_b[int(round(2 * t / dt))])  # noqa: E731
    ref = state_map(traj.eval(th[::2], 0), traj.eval(th[::2], 1))
    times, states = simulate_open_loop(
        FullState(ref.p[0], ref.Q[0], ref.v[0], ref.omega[0]), lookup, params, dt, t_end
    )
    p = np.array([s.p for s in states])
    R = rotation.rotmat_from_quat(np.array([s.Q for s in states]))
    e_att = rotation.geodesic_angle(rotation.rotmat_from_quat(ref.Q), R)
    return times, np.linalg.norm(p - ref.p, axis=1), e_att


# --- closed loop ----------------------------------------------------------------

class TrackingDivergence(RuntimeError):
    def __init__(self, message: str, log: TrackingLog):
        super().__init__(message)
        self.log = log


@dataclass
class TrackingLog:
    t: NDArray
    p_ref: NDArray
    Q_ref: NDArray
    p: NDArray
    Q: NDArray
    e_p: NDArray
    e_att: NDArray
    f_b: NDArray
    tau_b: NDArray
    quat_norm_err: float = 0.0

    @property
    def rms_position_error(self) -> float:
        return float(np.sqrt(np.mean(np.sum(self.e_p**2, axis=1))))

    @property
    def max_attitude_error(self) -> float:
        return float(np.max(self.e_att)) if len(self.e_att) else 0.0

    def write_csv(self, path: str | Path) -> None:
        header = (
            ["t", "px_ref", "py_ref", "pz_ref", "qw_ref", "qx_ref", "qy_ref", "qz_ref"]
            + ["px", "py", "pz", "qw", "qx", "qy", "qz", "ex", "ey", "ez", "e_att"]
            + ["fbx", "fby", "fbz", "taux", "tauy", "tauz"]
        )
        rows = np.column_stack(
            [self.t, self.p_ref, self.Q_ref, self.p, self.Q, self.e_p, self.e_att, self.f_b, self.tau_b]
        )
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([f"{x:.9g}" for x in r])


def reference_states(traj: Trajectory, t: NDArray) -> FullState:
    t = np.minimum(t, traj.total_duration)
    return state_map(traj.eval(t, 0), traj.eval(t, 1))


def track(
    traj: Trajectory,
    gains: Gains,
    params: InertiaParams,
    dt: float = 1e-3,
    init: FullState | None = None,
    t_end: float | None = None,
    divergence: float = 1.0,
) -> TrackingLog:
    """Close the loop around ``traj``; the reference holds its final pose after the end."""
    if dt <= 0 or dt > 1e-2:
        raise ValueError("dt must lie in (0, 0.01]")
    t_end = traj.total_duration if t_end is None else t_end
    n = int(np.floor(t_end / dt + 1e-9)) + 1
    t = dt * np.arange(n)
    ref = reference_states(traj, t)
    R_ref = rotation.rotmat_from_quat(ref.Q)
    w_b_ref = np.einsum("nji,nj->ni", R_ref, ref.omega)
    state = FullState(ref.p[0].copy(), ref.Q[0].copy(), ref.v[0].copy(), ref.omega[0].copy()) if init is None else init.copy()

    x = _pack(state)
    J_inv = params.J_b_inv
    ctl = ControllerState()
    out = {k: np.zeros((n, d)) for k, d in (("p", 3), ("Q", 4), ("f", 3), ("tau", 3))}
    e_att = np.zeros(n)
    qn = 0.0
    for k in range(n):
        p, v, Q, w_b = x[0:3], x[3:6], x[6:10], x[10:13]
        a_sp = outer_position_control(ref.p[k], p, ref.v[k], v, ctl, gains, dt)
        wd_sp = attitude_rate_control(ref.Q[k], Q, w_b_ref[k], w_b, ctl, gains, dt)
        u = wrench_command(a_sp, wd_sp, Q, w_b, params, gains)
        out["p"][k], out["Q"][k], out["f"][k], out["tau"][k] = p, Q, u.f_b, u.tau_b
        e_att[k] = rotation.geodesic_angle(R_ref[k], rotation.rotmat_from_quat(Q))
        qn = max(qn, abs(np.linalg.norm(Q) - 1.0))
        if np.linalg.norm(ref.p[k] - p) > divergence or not np.all(np.isfinite(x)):
            log = _make_log(t[: k + 1], ref, out, e_att, k + 1, qn)
            raise TrackingDivergence(f"position error exceeded {divergence} m at t={t[k]:.3f}s", log)
        if k < n - 1:
            x = rk4_step(x, lambda _t, u=u: u, params, J_inv, t[k], dt)
    return _make_log(t, ref, out, e_att, n, qn)


def _make_log(t, ref: FullState, out, e_att, n, qn) -> TrackingLog:
    return TrackingLog(
        t=t[:n],
        p_ref=ref.p[:n],
        Q_ref=ref.Q[:n],
        p=out["p"][:n],
        Q=out["Q"][:n],
        e_p=ref.p[:n] - out["p"][:n],
        e_att=e_att[:n],
        f_b=out["f"][:n],
        tau_b=out["tau"][:n],
        quat_norm_err=qn,
    )
