import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srpalign.errors import DataError, DimensionError
from srpalign.numerics import project_orthogonal, random_orthogonal
from srpalign.objectives import (
    INF,
    CovariancePair,
    PointPairs,
    Problem,
    RigidMotion,
    as_power,
    commutator_matrix,
    covariance_energy,
    energy_nonsym,
    energy_procrustes,
    energy_relaxed_orth,
    energy_relaxed_rigid,
    energy_robust,
    energy_squared,
    energy_translated,
    power_label,
    smoothed_hessian,
    smoothed_value_and_gradient,
)

seeds = st.integers(0, 2 ** 32 - 1)


def random_pairs(gen, d, n):
    return PointPairs(gen.standard_normal((d, n)), gen.standard_normal((d, n)))


def loop_relaxed(A, t, s, pts, p):
    """Per-pair reference written out term by term."""
    total = 0.0
    for i in range(pts.n):
        a = np.linalg.norm(A @ pts.P[:, i] - pts.Q[:, i] + t)
        b = np.linalg.norm(A.T @ pts.Q[:, i] - pts.P[:, i] + s)
        total += {1.0: (a + b) / 2, 2.0: math.sqrt((a * a + b * b) / 2), INF: max(a, b)}[p]
    return total


def test_power_parsing():
    assert as_power("inf") == INF and as_power(2) == 2.0 and as_power("1") == 1.0
    assert power_label(INF) == "inf" and power_label(2.0) == "2"
    with pytest.raises(ValueError):
        as_power(3)


def test_point_pairs_validation():
    with pytest.raises(DimensionError):
        PointPairs(np.zeros((2, 3)), np.zeros((3, 3)))
    with pytest.raises(DataError):
        PointPairs(np.array([[np.inf]]), np.array([[0.0]]))
    pts = PointPairs(np.ones((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        pts.P[0, 0] = 5.0


def test_rigid_motion_rejects_non_orthogonal():
    with pytest.raises(DataError):
        RigidMotion(np.diag([1.0, 2.0]), np.zeros(2))
    m = RigidMotion.identity(3)
    np.testing.assert_array_equal(m.apply(np.eye(3)), np.eye(3))


def test_robust_and_least_squares_energies(rng):
    pts = random_pairs(rng, 3, 9)
    m = RigidMotion(random_orthogonal(3, rng), rng.standard_normal(3))
    r = [np.linalg.norm(m.R @ pts.P[:, i] - pts.Q[:, i] + m.t) for i in range(9)]
    assert energy_robust(m, pts) == pytest.approx(sum(r))
    assert energy_procrustes(m, pts) == pytest.approx(sum(x * x for x in r))


@pytest.mark.parametrize("p", [1.0, 2.0, INF])
def test_relaxed_energy_matches_loop(rng, p):
    pts = random_pairs(rng, 4, 7)
    A, t, s = rng.standard_normal((4, 4)), rng.standard_normal(4), rng.standard_normal(4)
    assert energy_relaxed_rigid(A, t, s, pts, p) == pytest.approx(loop_relaxed(A, t, s, pts, p))
    z = np.zeros(4)
    assert energy_relaxed_orth(A, pts, p) == pytest.approx(loop_relaxed(A, z, z, pts, p))


def test_translated_energy(rng):
    pts = random_pairs(rng, 3, 6)
    A, p0, q0 = rng.standard_normal((3, 3)), rng.standard_normal(3), rng.standard_normal(3)
    shifted = PointPairs(pts.P - p0[:, None], pts.Q - q0[:, None])
    assert energy_translated(A, p0, q0, pts, 2) == pytest.approx(energy_relaxed_orth(A, shifted, 2))


def test_nonsym_and_squared_energies(rng):
    pts = random_pairs(rng, 3, 5)
    A, t = rng.standard_normal((3, 3)), rng.standard_normal(3)
    ref = sum(np.linalg.norm(A @ pts.P[:, i] + t - pts.Q[:, i]) for i in range(5))
    assert energy_nonsym(A, t, pts) == pytest.approx(ref)
    ref = sum(0.5 * (np.sum((A @ pts.P[:, i] - pts.Q[:, i]) ** 2)
                     + np.sum((A.T @ pts.Q[:, i] - pts.P[:, i]) ** 2)) for i in range(5))
    assert energy_squared(A, pts) == pytest.approx(ref)


@given(st.integers(1, 6), st.integers(1, 15), seeds)
def test_relaxed_energies_monotone_in_p(d, n, seed):
    gen = np.random.default_rng(seed)
    pts = random_pairs(gen, d, n)
    A, t, s = gen.standard_normal((d, d)), gen.standard_normal(d), gen.standard_normal(d)
    e1, e2, ei = (energy_relaxed_rigid(A, t, s, pts, p) for p in (1, 2, INF))
    assert e1 <= e2 + 1e-10 and e2 <= ei + 1e-10


@given(st.integers(1, 6), st.integers(1, 15), seeds)
def test_relaxation_is_exact_on_rigid_motions(d, n, seed):
    gen = np.random.default_rng(seed)
    pts = random_pairs(gen, d, n)
    R, t = random_orthogonal(d, gen), gen.standard_normal(d)
    e = energy_robust(RigidMotion(R, t), pts)
    for p in (1, 2, INF):
        assert energy_relaxed_rigid(R, t, -R.T @ t, pts, p) == pytest.approx(e, rel=1e-10, abs=1e-10)
        assert energy_relaxed_orth(R, pts, p) == pytest.approx(
            energy_robust(RigidMotion(R, np.zeros(d)), pts), rel=1e-10, abs=1e-10)


@given(st.integers(1, 5), st.integers(1, 12), seeds, st.sampled_from([2.0, INF]))
def test_projection_at_most_doubles_relaxed_energy(d, n, seed, p):
    gen = np.random.default_rng(seed)
    pts = random_pairs(gen, d, n)
    A = gen.standard_normal((d, d)) * gen.uniform(0.01, 4)
    R = RigidMotion(project_orthogonal(A), np.zeros(d))
    assert energy_robust(R, pts) <= 2 * energy_relaxed_orth(A, pts, p) + 1e-9


def test_covariance_pair_and_identity(rng):
    d = 5
    R = random_orthogonal(d, rng)
    Pt = rng.standard_normal((d, 40))
    Qt = (R @ Pt)[:, rng.permutation(40)]
    cov = CovariancePair.from_pools(Pt, Qt)
    np.testing.assert_allclose(cov.covP, Pt @ Pt.T / 40)
    assert covariance_energy(R, cov) <= 1e-12
    assert covariance_energy(np.eye(d), cov) > 1e-3
    assert cov.spectral_gap() == pytest.approx(
        max(abs(a - b) for a in cov.sigma for b in cov.tau))
    with pytest.raises(DataError):
        CovariancePair.from_pools(np.zeros((2, 0)), np.zeros((2, 3)))


def test_commutator_matrix_acts_on_row_major_vec(rng):
    cov = CovariancePair(rng.standard_normal((3, 3)), rng.standard_normal((3, 3)))
    A = rng.standard_normal((3, 3))
    L = commutator_matrix(cov)
    np.testing.assert_allclose(L @ A.ravel(), (A @ cov.covP - cov.covQ @ A).ravel(), atol=1e-12)


def test_problem_pack_unpack_and_sizes(rng):
    pts = random_pairs(rng, 3, 4)
    for kind, trans, size in (("sym", True, 15), ("sym", False, 9), ("nonsym", True, 12)):
        prob = Problem(pts, kind, 2, trans)
        assert prob.n_vars == size
        x = rng.standard_normal(size)
        A, t, s = prob.unpack(x)
        np.testing.assert_array_equal(prob.pack(A, t, s), x)
    with pytest.raises(DimensionError):
        Problem(pts).unpack(np.zeros(3))
    with pytest.raises(ValueError):
        Problem(pts, "cubic")


def _problems(gen):
    d, n = int(gen.integers(1, 4)), int(gen.integers(1, 9))
    pts = random_pairs(gen, d, n)
    cov = CovariancePair.from_pools(gen.standard_normal((d, 6)), gen.standard_normal((d, 6)))
    for kind, p in (("sym", 1.0), ("sym", 2.0), ("sym", INF), ("nonsym", 2.0), ("squared", 2.0)):
        for trans in (False, True):
            yield Problem(pts, kind, p, trans, cov, float(gen.uniform(0, 2)))


@given(seeds, st.floats(1e-4, 1.0))
def test_smoothing_gap_bounds(seed, eps):
    gen = np.random.default_rng(seed)
    for prob in _problems(gen):
        x = gen.standard_normal(prob.n_vars)
        fs, _ = smoothed_value_and_gradient(prob, x, eps)
        f = prob.value(x)
        tol = 1e-12 * (1 + abs(f))
        assert f - tol <= fs <= f + prob.smoothing_gap_bound(eps) + tol


def test_problem_value_matches_energies(rng):
    pts = random_pairs(rng, 3, 6)
    cov = CovariancePair.from_pools(rng.standard_normal((3, 5)), rng.standard_normal((3, 5)))
    A, t, s = rng.standard_normal((3, 3)), rng.standard_normal(3), rng.standard_normal(3)
    c = covariance_energy(A, cov)
    prob = Problem(pts, "sym", INF, True, cov, 0.5)
    assert prob.value(prob.pack(A, t, s)) == pytest.approx(
        energy_relaxed_rigid(A, t, s, pts, INF) + 0.5 * c)
    prob = Problem(pts, "nonsym", 2, True, cov, 0.5)
    assert prob.value(prob.pack(A, t)) == pytest.approx(energy_nonsym(A, t, pts) + 0.5 * c)
    prob = Problem(pts, "squared", 2, False, cov, 0.5)
    assert prob.value(prob.pack(A)) == pytest.approx(energy_squared(A, pts) + 0.5 * c * c)


def test_gradient_and_hessian_match_finite_differences(rng):
    h, eps = 1e-6, 0.05
    for prob in _problems(rng):
        x = rng.standard_normal(prob.n_vars)
        _, g = smoothed_value_and_gradient(prob, x, eps)
        H = smoothed_hessian(prob, x, eps)
        E = np.eye(prob.n_vars)
        fd_g = np.array([(smoothed_value_and_gradient(prob, x + h * e, eps)[0]
                          - smoothed_value_and_gradient(prob, x - h * e, eps)[0]) / (2 * h) for e in E])
        fd_H = np.array([(smoothed_value_and_gradient(prob, x + h * e, eps)[1]
                          - smoothed_value_and_gradient(prob, x - h * e, eps)[1]) / (2 * h) for e in E])
        np.testing.assert_allclose(g, fd_g, atol=1e-6)
        np.testing.assert_allclose(H, fd_H, atol=1e-5)
        np.testing.assert_allclose(H, H.T, atol=1e-12)


def test_smoothing_requires_positive_eps(rng):
    prob = Problem(random_pairs(rng, 2, 3))
    with pytest.raises(ValueError):
        smoothed_value_and_gradient(prob, np.zeros(4), 0.0)
