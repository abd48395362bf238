"""Attitude algebra for the stereographic rotation parameterization.

A free vector ``sigma`` in R^3 maps to a Hamilton unit quaternion
``Q = [q_w, r]`` through the stereographic projection with the pole at
``[1, 0, 0, 0]``.  The identity rotation sits at ``sigma = 0`` where
``Q = [-1, 0, 0, 0]``.

Every function accepts a single vector or a batch stacked along leading
axes (``sigma.shape == (..., 3)``); the cost evaluation calls them on all
samples of a trajectory piece at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

_EYE = np.eye(3)


def hat(a: ArrayLike) -> NDArray:
    """Skew-symmetric matrix with ``hat(a) @ b == cross(a, b)``."""
    a = np.asarray(a, dtype=float)
    out = np.zeros(a.shape + (3,))
    out[..., 0, 1], out[..., 0, 2] = -a[..., 2], a[..., 1]
    out[..., 1, 0], out[..., 1, 2] = a[..., 2], -a[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -a[..., 1], a[..., 0]
    return out


def vee(m: ArrayLike) -> NDArray:
    """Inverse of :func:`hat`; antisymmetrizes first to strip round-off."""
    m = np.asarray(m, dtype=float)
    a = 0.5 * (m - np.swapaxes(m, -1, -2))
    return np.stack([a[..., 2, 1], a[..., 0, 2], a[..., 1, 0]], axis=-1)


def _bilinear_cross() -> NDArray:
    C = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        C[j, k, i], C[k, j, i] = 1.0, -1.0
    return C.reshape(9, 3)


_CROSS = _bilinear_cross()


def cross(a: NDArray, b: NDArray) -> NDArray:
    """Batched cross product over the last axis, as one bilinear map (cheap on small batches)."""
    ab = a[..., :, None] * b[..., None, :]
    return ab.reshape(ab.shape[:-2] + (9,)) @ _CROSS


def _check_finite(x: NDArray, name: str) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite")


def quat_from_rotvec(sigma: ArrayLike) -> NDArray:
    """Stereographic projection R^3 -> S^3 minus the pole [1, 0, 0, 0]."""
    sigma = np.asarray(sigma, dtype=float)
    _check_finite(sigma, "sigma")
    s2 = np.sum(sigma * sigma, axis=-1)
    den = s2 + 1.0
    qw = (s2 - 1.0) / den
    r = 2.0 * sigma / den[..., None]
    return np.concatenate([qw[..., None], r], axis=-1)


def rotvec_from_quat(q: ArrayLike) -> NDArray:
    """Inverse projection.

    Quaternions with ``q_w > 0`` are negated first so the representative on
    the far hemisphere from the pole is used; the result is then bounded by
    ``|sigma| <= 1``.
    """
    q = np.array(q, dtype=float)
    _check_finite(q, "Q")
    norm = np.linalg.norm(q, axis=-1)
    if np.any(np.abs(norm - 1.0) > 1e-9):
        raise ValueError("quaternion must have unit norm")
    flip = q[..., 0] > 0.0
    q = np.where(flip[..., None], -q, q)
    one_minus_w = 1.0 - q[..., 0]
    if np.any(np.abs(one_minus_w) <= 1e-9):
        raise ValueError("quaternion at the projection pole")
    return q[..., 1:] / one_minus_w[..., None]


def _quadratic_rotmat() -> NDArray:
    """Constant map from the products q_a q_b to the entries of R(q)."""
    C = np.zeros((4, 4, 3, 3))
    for a in range(4):
        e = np.zeros(4)
        e[a] = 1.0
        for b in range(4):
            f = np.zeros(4)
            f[b] = 1.0
            # polarization of the quadratic form R(q)
            C[a, b] = 0.25 * (_rotmat_direct(e + f) - _rotmat_direct(e - f))
    return C.reshape(16, 9)


def _rotmat_direct(q: NDArray) -> NDArray:
    w, r = q[0], q[1:]
    return (w * w - r @ r) * _EYE + 2.0 * np.outer(r, r) + 2.0 * w * hat(r)


_QUAD_R = _quadratic_rotmat()


def _rotmat(q: NDArray) -> NDArray:
    """R = (w^2 - r.r) I + 2 r r^T + 2 w hat(r) for q = [w, r] (homogeneous of degree 2)."""
    qq = q[..., :, None] * q[..., None, :]
    return (qq.reshape(qq.shape[:-2] + (16,)) @ _QUAD_R).reshape(q.shape[:-1] + (3, 3))


def rotmat_from_quat(q: ArrayLike) -> NDArray:
    return _rotmat(np.asarray(q, dtype=float))


def rotmat_from_rotvec(sigma: ArrayLike) -> NDArray:
    sigma = np.asarray(sigma, dtype=float)
    _check_finite(sigma, "sigma")
    s2 = np.sum(sigma * sigma, axis=-1, keepdims=True)
    # unnormalized quaternion (s2 - 1, 2 sigma); R scales with its squared norm (1 + s2)^2
    qh = np.concatenate([s2 - 1.0, 2.0 * sigma], axis=-1)
    return _rotmat(qh) / ((1.0 + s2) ** 2)[..., None]


def quat_multiply(a: ArrayLike, b: ArrayLike) -> NDArray:
    """Hamilton product a (x) b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, av = a[..., 0], a[..., 1:]
    bw, bv = b[..., 0], b[..., 1:]
    w = aw * bw - np.sum(av * bv, axis=-1)
    v = aw[..., None] * bv + bw[..., None] * av + cross(av, bv)
    return np.concatenate([w[..., None], v], axis=-1)


def quat_conjugate(q: ArrayLike) -> NDArray:
    q = np.array(q, dtype=float)
    q[..., 1:] *= -1.0
    return q


def quat_from_rotmat(R: ArrayLike) -> NDArray:
    """Unit quaternion with ``q_w >= 0`` (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    diag = np.diag(R)
    k = int(np.argmax([tr, *diag]))
    if k == 0:
        w = 0.5 * np.sqrt(1.0 + tr)
        q = [w, (R[2, 1] - R[1, 2]) / (4 * w), (R[0, 2] - R[2, 0]) / (4 * w), (R[1, 0] - R[0, 1]) / (4 * w)]
    else:
        i = k - 1
        j, m = (i + 1) % 3, (i + 2) % 3
        v = np.zeros(3)
        v[i] = 0.5 * np.sqrt(1.0 + R[i, i] - R[j, j] - R[m, m])
        v[j] = (R[j, i] + R[i, j]) / (4 * v[i])
        v[m] = (R[m, i] + R[i, m]) / (4 * v[i])
        w = (R[m, j] - R[j, m]) / (4 * v[i])
        q = [w, *v]
    q = np.asarray(q)
    return -q if q[0] < 0 else q


def quat_from_axis_angle(axis: ArrayLike, angle: float) -> NDArray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])


def geodesic_angle(R_a: ArrayLike, R_b: ArrayLike) -> NDArray:
    """Rotation angle of R_a^T R_b in radians."""
    R_a = np.asarray(R_a, dtype=float)
    R_b = np.asarray(R_b, dtype=float)
    tr = np.einsum("...ij,...ij->...", R_a, R_b)
    return np.arccos(np.clip(0.5 * (tr - 1.0), -1.0, 1.0))


# --- derivatives -----------------------------------------------------------

def _d2R_dQ2() -> NDArray:
    out = np.zeros((4, 4, 3, 3))
    out[0, 0] = 2.0 * _EYE
    for k in range(3):
        out[0, k + 1] = out[k + 1, 0] = 2.0 * hat(_EYE[k])
        for m in range(3):
            out[k + 1, m + 1] = 2.0 * (np.outer(_EYE[k], _EYE[m]) + np.outer(_EYE[m], _EYE[k]))
            if k == m:
                out[k + 1, m + 1] -= 2.0 * _EYE
    return out


# R is a quadratic form in Q, so its Hessian w.r.t. Q is constant
_D2R_DQ2 = _d2R_dQ2()
_D2R_DQ2_FLAT = np.ascontiguousarray(np.moveaxis(_D2R_DQ2, 1, 0).reshape(4, 36))


def _dR_dQ(q: NDArray) -> NDArray:
    """Partials of R with respect to the four quaternion entries, (..., 4, 3, 3)."""
    return np.einsum("abcd,...b->...acd", _D2R_DQ2, q)


def dR_dsigma(sigma: ArrayLike) -> NDArray:
    """dR/dsigma_i stacked along axis -3, shape (..., 3, 3, 3)."""
    sigma = np.asarray(sigma, dtype=float)
    q = quat_from_rotvec(sigma)
    dRdQ = (q @ _D2R_DQ2_FLAT).reshape(q.shape[:-1] + (4, 9))
    return (quat_jacobian(sigma) @ dRdQ).reshape(sigma.shape[:-1] + (3, 3, 3))


def quat_jacobian(sigma: NDArray) -> NDArray:
    """G with ``G[..., i, a] = dQ_a / dsigma_i``, shape (..., 3, 4)."""
    s2 = np.sum(sigma * sigma, axis=-1)
    den = (s2 + 1.0)[..., None, None]
    G = np.empty(sigma.shape[:-1] + (3, 4))
    G[..., :, 0] = 4.0 * sigma / den[..., 0] ** 2
    G[..., :, 1:] = 2.0 * _EYE / den - 4.0 * sigma[..., :, None] * sigma[..., None, :] / den**2
    return G


def quat_hessians(sigma: NDArray) -> NDArray:
    """H[..., a, i, k] = d^2 Q_a / dsigma_i dsigma_k, shape (..., 4, 3, 3)."""
    s2 = np.sum(sigma * sigma, axis=-1)
    den = (s2 + 1.0)[..., None, None]
    ss = sigma[..., :, None] * sigma[..., None, :]
    H = np.empty(sigma.shape[:-1] + (4, 3, 3))
    H[..., 0, :, :] = 4.0 * _EYE / den**2 - 16.0 * ss / den**3
    for j in range(3):
        sj = sigma[..., j, None, None]
        dj = _EYE[j]
        # delta_ij s_k + delta_ik s_j + delta_jk s_i
        sym = (
            dj[:, None] * sigma[..., None, :]
            + sj * _EYE
            + sigma[..., :, None] * dj[None, :]
        )
        H[..., j + 1, :, :] = -4.0 * sym / den**2 + 16.0 * sj * ss / den**3
    return H


def _u_apply(a: NDArray, b: NDArray) -> NDArray:
    """U(a) @ b with U(a) = [-a_vec, a_w I + hat(a_vec)]."""
    return -a[..., 1:] * b[..., 0, None] + a[..., 0, None] * b[..., 1:] + cross(a[..., 1:], b[..., 1:])


def u_matrix(q: NDArray) -> NDArray:
    q = np.asarray(q, dtype=float)
    U = np.empty(q.shape[:-1] + (3, 4))
    U[..., :, 0] = -q[..., 1:]
    U[..., :, 1:] = q[..., 0, None, None] * _EYE + hat(q[..., 1:])
    return U


@dataclass(frozen=True)
class AttitudeDerivatives:
    """Analytic partials of the attitude map at one sigma (or a batch).

    ``dR_dsigma[..., i]`` is dR/dsigma_i and ``d2R_dsigma2[..., i, j]`` the
    mixed second partial; both carry the 3x3 matrix in the trailing axes.
    """

    Q: NDArray
    R: NDArray
    G: NDArray
    U: NDArray
    H_alpha: NDArray
    dR_dsigma: NDArray
    d2R_dsigma2: NDArray


def attitude_derivatives(sigma: ArrayLike, second_order: bool = True) -> AttitudeDerivatives:
    sigma = np.asarray(sigma, dtype=float)
    _check_finite(sigma, "sigma")
    q = quat_from_rotvec(sigma)
    R = rotmat_from_quat(q)
    G = quat_jacobian(sigma)
    U = u_matrix(q)
    dRdQ = _dR_dQ(q)
    dR = np.einsum("...ia,...abc->...ibc", G, dRdQ)
    if second_order:
        H = quat_hessians(sigma)
        d2R = np.einsum("...ia,...jb,abcd->...ijcd", G, G, _D2R_DQ2)
        d2R = d2R + np.einsum("...aij,...acd->...ijcd", H, dRdQ)
    else:
        H = d2R = np.empty(0)
    return AttitudeDerivatives(Q=q, R=R, G=G, U=U, H_alpha=H, dR_dsigma=dR, d2R_dsigma2=d2R)


def angular_velocity(sigma: ArrayLike, sigma_dot: ArrayLike) -> NDArray:
    """World-frame angular velocity, omega = 2 U G^T sigma_dot."""
    sigma = np.asarray(sigma, dtype=float)
    sigma_dot = np.asarray(sigma_dot, dtype=float)
    _check_finite(sigma, "sigma")
    q = quat_from_rotvec(sigma)
    q_dot = np.einsum("...ia,...i->...a", quat_jacobian(sigma), sigma_dot)
    return 2.0 * _u_apply(q, q_dot)


def angular_velocity_from_rotmat(sigma: ArrayLike, sigma_dot: ArrayLike) -> NDArray:
    """Same quantity via vee(sum_i dR/dsigma_i sigma_dot_i R^T)."""
    d = attitude_derivatives(sigma, second_order=False)
    R_dot = np.einsum("...ibc,...i->...bc", d.dR_dsigma, np.asarray(sigma_dot, dtype=float))
    return vee(R_dot @ np.swapaxes(d.R, -1, -2))


def angular_acceleration(sigma: ArrayLike, sigma_dot: ArrayLike, sigma_ddot: ArrayLike) -> NDArray:
    """World-frame angular acceleration from the second derivative of R.

    hat(omega_dot) = R_ddot R^T + R_dot R_dot^T with
    R_ddot = sum_ij d2R/dsigma_i dsigma_j sd_i sd_j + sum_i dR/dsigma_i sdd_i.
    """
    sd = np.asarray(sigma_dot, dtype=float)
    sdd = np.asarray(sigma_ddot, dtype=float)
    d = attitude_derivatives(sigma)
    R_dot = np.einsum("...ibc,...i->...bc", d.dR_dsigma, sd)
    R_ddot = np.einsum("...ijbc,...i,...j->...bc", d.d2R_dsigma2, sd, sd)
    R_ddot = R_ddot + np.einsum("...ibc,...i->...bc", d.dR_dsigma, sdd)
    Rt = np.swapaxes(d.R, -1, -2)
    return vee(R_ddot @ Rt + R_dot @ np.swapaxes(R_dot, -1, -2))


def omega_partials(sigma: ArrayLike, sigma_dot: ArrayLike) -> tuple[NDArray, NDArray]:
    """Jacobians (domega/dsigma, domega/dsigma_dot), each (..., 3, 3).

    Entry ``[..., a, k]`` is the derivative of omega_a w.r.t. the k-th input.
    """
    sigma = np.asarray(sigma, dtype=float)
    sd = np.asarray(sigma_dot, dtype=float)
    q = quat_from_rotvec(sigma)
    G = quat_jacobian(sigma)
    H = quat_hessians(sigma)
    q_dot = np.einsum("...ia,...i->...a", G, sd)
    U = u_matrix(q)
    d_sd = 2.0 * np.einsum("...ba,...ia->...bi", U, G)
    # dQ_dot_a/dsigma_k = sum_i H[a, i, k] sd_i
    dqdot = np.einsum("...aik,...i->...ka", H, sd)
    d_s = 2.0 * (_u_apply(G, q_dot[..., None, :]) + np.einsum("...ba,...ka->...kb", U, dqdot))
    return np.swapaxes(d_s, -1, -2), d_sd


def omega_matrix(sigma: ArrayLike) -> NDArray:
    """A(sigma) with omega = A sigma_dot; equals domega/dsigma_dot.

    Expanding 2 U G^T gives A = 4 [(|s|^2 - 1) I - 2 s s^T + 2 hat(s)] / (1 + |s|^2)^2.
    """
    sigma = np.asarray(sigma, dtype=float)
    s2 = np.sum(sigma * sigma, axis=-1)[..., None, None]
    A = (s2 - 1.0) * _EYE - 2.0 * sigma[..., :, None] * sigma[..., None, :] + 2.0 * hat(sigma)
    return 4.0 * A / (1.0 + s2) ** 2


def omega_with_partials(sigma: ArrayLike, sigma_dot: ArrayLike) -> tuple[NDArray, NDArray, NDArray]:
    """omega and both Jacobians from the expanded form; same layout as :func:`omega_partials`."""
    s = np.asarray(sigma, dtype=float)
    sd = np.asarray(sigma_dot, dtype=float)
    s2 = np.sum(s * s, axis=-1)
    den = 1.0 + s2
    c = np.sum(s * sd, axis=-1)
    u = (s2 - 1.0)[..., None] * sd - 2.0 * c[..., None] * s + 2.0 * cross(s, sd)
    f = (4.0 / den**2)[..., None, None]
    omega = f[..., 0] * u
    A = f * ((s2 - 1.0)[..., None, None] * _EYE - 2.0 * s[..., :, None] * s[..., None, :] + 2.0 * hat(s))
    du = (
        2.0 * sd[..., :, None] * s[..., None, :]
        - 2.0 * s[..., :, None] * sd[..., None, :]
        - 2.0 * c[..., None, None] * _EYE
        - 2.0 * hat(sd)
    )
    d_s = f * du - (16.0 / den**3)[..., None, None] * u[..., :, None] * s[..., None, :]
    return omega, d_s, A
