import numpy as np
import pytest

from omavtraj import rotation
from omavtraj.flatness import (
    PROFILE_HEADER,
    InertiaParams,
    input_map,
    profile_times,
    sample_profile,
    state_map,
    write_profile_csv,
)
from omavtraj.minco import Trajectory, construct

PARAMS = InertiaParams()


def hover_traj(T=2.0):
    c = np.zeros((1, 8, 6))
    c[0, 0, :3] = [1.0, 2.0, 3.0]
    return Trajectory(4, c, np.array([T]))


def random_traj(rng, M=3):
    q = rng.normal(size=(6, M - 1)) * 0.5
    bs = np.zeros((4, 6))
    be = np.zeros((4, 6))
    be[0] = rng.normal(size=6) * 0.5
    return construct(q, rng.uniform(1.0, 2.0, M), bs, be, 4)


def test_hover_wrench():
    z = np.array([0, 0, 1.0, 0, 0, 0])
    u = input_map(z, np.zeros(6), np.zeros(6), PARAMS)
    np.testing.assert_allclose(u.f_b, [0, 0, 2.0 * 9.8])
    np.testing.assert_allclose(u.tau_b, 0.0, atol=1e-15)


def test_vertical_acceleration():
    zdd = np.array([0, 0, 1.2, 0, 0, 0])
    u = input_map(np.zeros(6), np.zeros(6), zdd, PARAMS)
    np.testing.assert_allclose(u.f_b, [0, 0, 22.0])


def test_state_map_roll_rate():
    st = state_map(np.zeros(6), np.array([0, 0, 0, 0.25, 0, 0]))
    np.testing.assert_allclose(st.omega, [-1.0, 0, 0], atol=1e-15)
    np.testing.assert_allclose(st.Q, [-1.0, 0, 0, 0])


def test_torque_vs_world_frame_newton_euler(rng):
    traj = random_traj(rng)
    t = np.linspace(0.1, traj.total_duration - 0.1, 25)
    z, zd, zdd = (traj.eval(t, k) for k in range(3))
    u = input_map(z, zd, zdd, PARAMS)
    h = 1e-5
    for j, tj in enumerate(t):
        w = lambda s: rotation.angular_velocity(traj.eval(s)[3:], traj.eval(s, 1)[3:])  # noqa: E731
        wdot = (w(tj + h) - w(tj - h)) / (2 * h)
        R = rotation.rotmat_from_rotvec(z[j, 3:])
        J = R @ PARAMS.J_b @ R.T
        om = w(tj)
        tau_world = J @ wdot + np.cross(om, J @ om)
        np.testing.assert_allclose(R.T @ tau_world, u.tau_b[j], atol=1e-6)
        f_world = PARAMS.m * (zdd[j, :3] - PARAMS.g)
        np.testing.assert_allclose(R @ u.f_b[j], f_world, atol=1e-10)


def test_profile_columns_and_grid(tmp_path, rng):
    traj = random_traj(rng)
    prof = sample_profile(traj, 0.01, PARAMS)
    assert list(prof) == PROFILE_HEADER
    n = int(np.floor(traj.total_duration / 0.01 + 1e-9)) + 1
    assert len(prof["t"]) == n
    np.testing.assert_allclose(prof["vnorm"], np.linalg.norm(np.c_[prof["vx"], prof["vy"], prof["vz"]], axis=1))
    path = tmp_path / "p.csv"
    write_profile_csv(prof, path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == PROFILE_HEADER
    assert len(lines) == n + 1 and all(len(l.split(",")) == len(PROFILE_HEADER) for l in lines)


def test_hover_profile_norms_zero():
    prof = sample_profile(hover_traj(), 0.1, PARAMS)
    for k in ("vnorm", "anorm", "wnorm"):
        assert np.all(prof[k] == 0.0)
    assert len(prof["t"]) == 21


def test_profile_times():
    np.testing.assert_allclose(profile_times(0.3, 0.1), [0, 0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        profile_times(1.0, 0.0)


def test_inertia_validation():
    with pytest.raises(ValueError):
        InertiaParams(m=-1.0)
    with pytest.raises(ValueError):
        InertiaParams(J_b=np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        InertiaParams(J_b=np.array([[1.0, 0.1, 0], [0, 1, 0], [0, 0, 1]]))
