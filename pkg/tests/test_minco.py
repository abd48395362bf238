import json
from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import null_space

from omavtraj.costs import gram_matrices
from omavtraj.minco import MincoError, Trajectory, basis, construct, dense_system, propagate_gradient


def row(t, k, n):
    """Independent k-th derivative monomial row at t."""
    r = np.zeros(n)
    for p in range(k, n):
        r[p] = factorial(p) / factorial(p - k) * t**(p - k)
    return r


def constraint_matrix(T, s):
    """Interpolation, boundary and C^(s-1) rows for one flat dimension (test oracle)."""
    M, n2 = len(T), 2 * s
    rows = []
    def put(i, r):
        full = np.zeros(M * n2)
        full[i * n2 : (i + 1) * n2] = r
        return full
    for k in range(s):
        rows.append(put(0, row(0.0, k, n2)))
        rows.append(put(M - 1, row(T[-1], k, n2)))
    for i in range(M - 1):
        rows.append(put(i, row(T[i], 0, n2)))
        for k in range(s):
            rows.append(put(i, row(T[i], k, n2)) - put(i + 1, row(0.0, k, n2)))
    return np.array(rows)


def energy_quadrature(c, T, s):
    """int ||z^(s)||^2 by Gauss-Legendre, exact for these degrees."""
    x, w = np.polynomial.legendre.leggauss(2 * s + 2)
    E = 0.0
    for ci, Ti in zip(c, T):
        t = 0.5 * Ti * (x + 1)
        B = np.array([row(tt, s, 2 * s) for tt in t])
        E += 0.5 * Ti * np.sum(w * (B @ ci) ** 2)
    return E


def random_problem(rng, M, s, D=3):
    T = rng.uniform(0.5, 2.0, M)
    q = rng.normal(size=(D, M - 1))
    bs = rng.normal(size=(s, D))
    be = rng.normal(size=(s, D))
    return q, T, bs, be


@pytest.mark.parametrize("s", [2, 3, 4])
def test_contracts(rng, s):
    for M in (1, 2, 5, 9):
        q, T, bs, be = random_problem(rng, M, s)
        traj = construct(q, T, bs, be, s)
        Z = traj.end_derivatives()
        B0 = basis(np.zeros(M), 2 * s)
        Z0 = np.einsum("mkp,mpd->mkd", B0, traj.coeffs)
        scale = max(1.0, np.max(np.abs(Z)))
        assert np.max(np.abs(Z0[0, :s] - bs)) < 1e-9
        assert np.max(np.abs(Z[-1, :s] - be)) < 1e-9 * scale
        if M > 1:
            assert np.max(np.abs(Z[:-1, 0] - q.T)) < 1e-9 * scale
            jump = Z[:-1, : 2 * s - 1] - Z0[1:, : 2 * s - 1]
            assert np.max(np.abs(jump)) < 1e-8 * scale


@pytest.mark.parametrize("s", [2, 3, 4])
def test_banded_matches_dense(rng, s):
    for M in range(1, 11):
        q, T, bs, be = random_problem(rng, M, s)
        traj = construct(q, T, bs, be, s)
        A, b = dense_system(q, T, bs, be, s)
        c = np.linalg.solve(A, b).reshape(traj.coeffs.shape)
        assert np.max(np.abs(c - traj.coeffs)) < 1e-9 * max(1.0, np.max(np.abs(c)))


def test_bandwidth_bound(rng):
    for s in (2, 3, 4):
        q, T, bs, be = random_problem(rng, 6, s)
        A, _ = dense_system(q, T, bs, be, s)
        i, j = np.nonzero(A)
        assert np.max(np.abs(i - j)) <= 4 * s - 1


def test_energy_is_minimal_over_feasible_perturbations(rng):
    s, M = 4, 4
    q, T, bs, be = random_problem(rng, M, s, D=1)
    traj = construct(q, T, bs, be, s)
    c = traj.coeffs[:, :, 0]
    E0 = energy_quadrature(c, T, s)
    Nul = null_space(constraint_matrix(T, s))
    assert Nul.shape[1] > 0
    for _ in range(100):
        d = Nul @ rng.normal(size=Nul.shape[1]) * rng.uniform(1e-3, 1.0)
        assert E0 <= energy_quadrature(c + d.reshape(c.shape), T, s) + 1e-12 * E0


def test_gram_matches_quadrature(rng):
    T = rng.uniform(0.5, 2.0, 3)
    c = rng.normal(size=(3, 8))
    Q = gram_matrices(T, 4)
    assert np.einsum("mp,mpq,mq->", c, Q, c) == pytest.approx(energy_quadrature(c, T, 4), rel=1e-12)


def test_gradient_propagation_vs_fd(rng):
    s, M, D = 4, 4, 3
    q, T, bs, be = random_problem(rng, M, s, D)
    W = rng.normal(size=(M, 2 * s, D))
    wT = rng.normal(size=M)

    def K(q, T):
        traj = construct(q, T, bs, be, s)
        return float(np.sum(W * traj.coeffs) + wT @ T**2)

    traj = construct(q, T, bs, be, s)
    dq, dT = propagate_gradient(traj, W, 2 * wT * T)
    h = 1e-6
    for i in range(D):
        for j in range(M - 1):
            e = np.zeros_like(q)
            e[i, j] = h
            fd = (K(q + e, T) - K(q - e, T)) / (2 * h)
            assert dq[i, j] == pytest.approx(fd, rel=1e-6, abs=1e-6)
    for j in range(M):
        e = np.zeros(M)
        e[j] = h
        fd = (K(q, T + e) - K(q, T - e)) / (2 * h)
        assert dT[j] == pytest.approx(fd, rel=1e-6, abs=1e-6)


def test_rejects_bad_input(rng):
    q, T, bs, be = random_problem(rng, 3, 4)
    with pytest.raises(MincoError):
        construct(q, np.array([1.0, 0.0, 1.0]), bs, be, 4)
    with pytest.raises(MincoError):
        construct(q, T, bs[:2], be, 4)
    with pytest.raises(MincoError):
        construct(q, T, bs, be, 5)
    traj = Trajectory(4, np.zeros((1, 8, 3)), np.ones(1))
    with pytest.raises(MincoError):
        propagate_gradient(traj, np.zeros((1, 8, 3)), np.zeros(1))


def test_eval_and_locate(rng):
    q, T, bs, be = random_problem(rng, 3, 4)
    traj = construct(q, T, bs, be, 4)
    K = traj.knots
    idx, a = traj.locate(K)
    assert list(idx) == [0, 0, 1, 2]
    np.testing.assert_allclose(traj.eval(K[1:-1]), q.T, atol=1e-9)
    with pytest.raises(ValueError):
        traj.eval(K[-1] + 1.0)
    with pytest.raises(ValueError):
        traj.eval(0.0, 8)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_json_round_trip(M, seed):
    rng = np.random.default_rng(seed)
    q, T, bs, be = random_problem(rng, M, 4)
    traj = construct(q, T, bs, be, 4)
    text = json.dumps(traj.to_json())
    back = Trajectory.from_json(json.loads(text))
    assert json.dumps(back.to_json()) == text
    np.testing.assert_array_equal(back.coeffs, traj.coeffs)
