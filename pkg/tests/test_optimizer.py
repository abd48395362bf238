import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _problems import central_fd, two_box_problem
from omavtraj.corridor import Corridor
from omavtraj.costs import Limits
from omavtraj.lbfgs import LBFGSSettings
from omavtraj.optimizer import (
    TAU_MAX,
    DecisionVars,
    ProblemSpec,
    _xi_from_point,
    allocate_pieces,
    forward_qp,
    forward_T,
    initialize,
    objective,
    solve,
)
from omavtraj.polytope import Polyhedron, VehicleShape, contains

CUBE = Polyhedron.box(np.zeros(3), np.ones(3))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=8, max_size=8))
def test_forward_qp_stays_inside(xi):
    q, _ = forward_qp(np.array(xi), CUBE.vertices())
    assert contains(CUBE, q, 1e-12)


def test_forward_qp_jacobian(rng):
    V = CUBE.vertices()
    xi = rng.normal(size=len(V))
    _, J = forward_qp(xi, V)
    h = 1e-6
    fd = np.array([(forward_qp(xi + h * e, V)[0] - forward_qp(xi - h * e, V)[0]) / (2 * h) for e in np.eye(len(V))]).T
    np.testing.assert_allclose(J, fd, atol=1e-9)


def test_xi_from_point_reproduces_point(rng):
    V = CUBE.vertices()
    for _ in range(20):
        p = rng.uniform(0.05, 0.95, 3)
        q, _ = forward_qp(_xi_from_point(p, V), V)
        # 5% of the weight is spread uniformly, pulling slightly toward the centroid
        assert np.linalg.norm(q - p) <= 0.05 * np.linalg.norm(p - V.mean(axis=0)) + 1e-9


def test_tau_guard():
    T, dT = forward_T([0.0, np.log(2.0)])
    np.testing.assert_allclose(T, [1, 2])
    np.testing.assert_allclose(dT, T)
    with pytest.raises(FloatingPointError):
        forward_T([TAU_MAX + 1])
    with pytest.raises(FloatingPointError):
        forward_T([np.nan])


def test_allocation_counts():
    path = np.array([[0, 0, 0], [2.5, 0, 0], [2.5, 0.5, 0], [2.5, 0.5, 3.0]])
    polys = [Polyhedron.box(np.minimum(a, b) - 0.5, np.maximum(a, b) + 0.5) for a, b in zip(path[:-1], path[1:])]
    alloc = allocate_pieces(Corridor(polys, path), 1.0)
    assert alloc.M == 3 + 1 + 3
    np.testing.assert_array_equal(alloc.piece_poly, [0, 0, 0, 1, 2, 2, 2])
    assert len(alloc.waypoint_vertices) == alloc.M - 1
    # interior waypoints of a segment use its polytope, knots between segments the intersection
    for P, p in zip(alloc.waypoint_polys, alloc.waypoint_path):
        assert contains(P, p, 1e-9)


def test_pack_unpack_round_trip():
    prob, x = two_box_problem(0)
    v = DecisionVars.unpack(x, prob.alloc)
    np.testing.assert_array_equal(v.pack(), x)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_objective_gradient_vs_fd(seed):
    prob, x = two_box_problem(seed)
    f, g = prob(x)
    fd = central_fd(prob, x)
    assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(fd)
    v = DecisionVars.unpack(x, prob.alloc)
    f2, gv = objective(v, prob.spec, prob.alloc)
    assert f2 == f
    np.testing.assert_array_equal(gv.pack(), g)


def test_objective_out_of_guard_is_inf():
    prob, x = two_box_problem(0)
    x = x.copy()
    x[-1] = 100.0
    f, g = prob(x)
    assert f == np.inf


def _free_spec(**kw):
    path = np.array([[0, 0, 1.0], [2.0, 0, 1.0]])
    P = Polyhedron.box([-1.0, -1.5, -0.5], [3.0, 1.5, 2.5])
    return ProblemSpec(Corridor([P], path), VehicleShape.cuboid(0.6, 0.6, 0.2), path[0], path[1], **kw)


def test_solve_free_space_is_feasible():
    traj, rep = solve(_free_spec())
    assert rep.success and rep.M == 2
    np.testing.assert_allclose(traj.eval(0.0)[:3], [0, 0, 1], atol=1e-9)
    np.testing.assert_allclose(traj.eval(traj.total_duration)[:3], [2, 0, 1], atol=1e-9)
    lim = Limits()
    assert rep.violations["v"] <= 0.05 * lim.v_max
    assert rep.violations["corridor"] == 0.0


def test_solve_is_deterministic():
    a, ra = solve(_free_spec(seed=3))
    b, rb = solve(_free_spec(seed=3))
    np.testing.assert_array_equal(a.coeffs, b.coeffs)
    assert ra.N_iter == rb.N_iter


def test_solve_respects_iteration_budget():
    _, rep = solve(_free_spec(lbfgs=LBFGSSettings(max_iter=3)))
    assert rep.N_iter <= 3 and rep.reason in ("max_iter", "delta", "gradient")


def test_spec_validation():
    with pytest.raises(ValueError):
        _free_spec(d_piece=0.0)
    with pytest.raises(ValueError):
        _free_spec(xi_init="random")
