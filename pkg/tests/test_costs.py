import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omavtraj import rotation
from omavtraj.costs import (
    Limits,
    PenaltyWeights,
    hinge_cubic,
    sampled_penalties,
    sampled_violations,
    smoothness_energy,
    total_cost,
)
from omavtraj.minco import Trajectory
from omavtraj.polytope import Polyhedron, VehicleShape

SCALE = np.array([1, 1, 0.5, 0.2, 0.05, 0.02, 0.01, 0.005])
LIM = Limits(0.6, 2.0, 0.5)
UNIT = PenaltyWeights(W_v=1.0, W_a=1.0, W_omega=1.0, W_c=1.0, k_rho=10.0, kappa=16)
BOX = Polyhedron.box([-0.8] * 3, [0.8] * 3)
SHAPE = VehicleShape.cuboid(0.4, 0.4, 0.2)


def random_traj(rng, M=3):
    c = rng.normal(size=(M, 8, 6)) * SCALE[None, :, None]
    return c, rng.uniform(0.8, 1.5, M)


def fd_gradient(f, c, T, h=1e-6):
    gc = np.zeros_like(c)
    for idx in np.ndindex(c.shape):
        e = np.zeros_like(c)
        e[idx] = h
        gc[idx] = (f(c + e, T) - f(c - e, T)) / (2 * h)
    gT = np.array([(f(c, T + h * e) - f(c, T - h * e)) / (2 * h) for e in np.eye(len(T))])
    return gc, gT


def direct_penalty(traj, lim, w, shape, polys):
    """Right-endpoint sum written out sample by sample (independent oracle)."""
    total = 0.0
    for i, (t0, T) in enumerate(zip(traj.knots[:-1], traj.durations)):
        for j in range(1, w.kappa + 1):
            local = j / w.kappa * T
            c = traj.coeffs[i]
            z = [sum(c[p] * np.prod(range(p - k + 1, p + 1)) * local ** (p - k) for p in range(k, 8)) for k in range(3)]
            v2 = z[1][:3] @ z[1][:3]
            a2 = z[2][:3] @ z[2][:3]
            om = rotation.angular_velocity(z[0][3:], z[1][3:])
            R = rotation.rotmat_from_rotvec(z[0][3:])
            P = polys[i]
            viol = (z[0][:3] + shape.vertices_body @ R.T) @ P.A.T - P.b
            phi = w.W_v * max(v2 - lim.v_max**2, 0) ** 3 + w.W_a * max(a2 - lim.a_max**2, 0) ** 3
            phi += w.W_omega * max(om @ om - lim.omega_max**2, 0) ** 3 + w.W_c * np.sum(np.maximum(viol, 0) ** 3)
            total += T / w.kappa * phi
    return total


def test_hinge():
    v, d = hinge_cubic(np.array([-1.0, 0.0, 2.0]))
    np.testing.assert_allclose(v, [0, 0, 8])
    np.testing.assert_allclose(d, [0, 0, 12])


@pytest.mark.parametrize("family", ["v", "a", "omega", "corridor"])
def test_penalty_gradients_vs_fd(rng, family):
    c, T = random_traj(rng)
    polys = [BOX] * 3

    def f(c, T):
        return sampled_penalties(Trajectory(4, c, T), LIM, UNIT, (family,), polys, SHAPE).value

    r = sampled_penalties(Trajectory(4, c, T), LIM, UNIT, (family,), polys, SHAPE)
    assert r.value > 0
    gc, gT = fd_gradient(f, c, T)
    got = np.concatenate([r.dC_dc.ravel(), r.dC_dT])
    want = np.concatenate([gc.ravel(), gT])
    assert np.linalg.norm(got - want) <= 1e-6 * np.linalg.norm(want)


def test_penalty_value_vs_direct_sum(rng):
    c, T = random_traj(rng)
    traj = Trajectory(4, c, T)
    polys = [BOX, Polyhedron.box([-0.6] * 3, [0.9] * 3), BOX]
    got = sampled_penalties(traj, LIM, UNIT, ("v", "a", "omega", "corridor"), polys, SHAPE).value
    assert got == pytest.approx(direct_penalty(traj, LIM, UNIT, SHAPE, polys), rel=1e-10)


def test_smoothness_gradient_vs_fd(rng):
    c, T = random_traj(rng)

    def f(c, T):
        return smoothness_energy(Trajectory(4, c, T), 10.0).value

    r = smoothness_energy(Trajectory(4, c, T), 10.0)
    gc, gT = fd_gradient(f, c, T)
    np.testing.assert_allclose(r.dC_dc, gc, rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(r.dC_dT, gT, rtol=1e-6, atol=1e-6)


def test_feasible_has_zero_penalty():
    c = np.zeros((2, 8, 6))
    traj = Trajectory(4, c, np.ones(2))
    r = sampled_penalties(traj, LIM, PenaltyWeights(), ("v", "a", "omega", "corridor"), [BOX, BOX], SHAPE)
    assert r.value == 0.0 and not np.any(r.dC_dc) and not np.any(r.dC_dT)
    tc = total_cost(traj, LIM, PenaltyWeights(), [BOX, BOX], SHAPE)
    assert tc.value == pytest.approx(20.0)
    assert sampled_violations(traj, LIM, [BOX, BOX], SHAPE)["corridor"] == 0.0


def test_validation():
    with pytest.raises(ValueError):
        Limits(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        PenaltyWeights(kappa=1)
    with pytest.raises(ValueError):
        PenaltyWeights(W_v=-1.0)
    traj = Trajectory(4, np.zeros((2, 8, 6)), np.ones(2))
    with pytest.raises(ValueError):
        sampled_penalties(traj, LIM, PenaltyWeights(), ("corridor",), [BOX], SHAPE)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_penalties_nonnegative(seed):
    rng = np.random.default_rng(seed)
    c, T = random_traj(rng, 2)
    r = sampled_penalties(Trajectory(4, 3 * c, T), LIM, PenaltyWeights(), ("v", "a", "omega", "corridor"), [BOX] * 2, SHAPE)
    assert r.value >= 0.0
