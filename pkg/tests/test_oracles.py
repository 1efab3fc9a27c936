import math

import numpy as np
import pytest

from srpalign.errors import DimensionError
from srpalign.numerics import geometric_median
from srpalign.objectives import PointPairs, RigidMotion, energy_robust
from srpalign.oracles import planar_orthogonal, planar_robust_optimum


def test_planar_matrices_are_orthogonal():
    for th in np.linspace(0, 6, 7):
        for refl in (False, True):
            R = planar_orthogonal(th, refl)
            np.testing.assert_allclose(R @ R.T, np.eye(2), atol=1e-15)
            assert round(np.linalg.det(R)) == (-1 if refl else 1)


def test_oracle_finds_exact_motion(rng):
    R = planar_orthogonal(1.234, True)
    t = np.array([0.3, -0.7])
    P = rng.standard_normal((2, 20))
    res = planar_robust_optimum(PointPairs(P, R @ P + t[:, None]))
    assert res.energy <= 1e-8
    np.testing.assert_allclose(res.motion.R, R, atol=1e-7)


def test_oracle_beats_dense_exact_scan(rng):
    P, Q = rng.standard_normal((2, 12)), rng.standard_normal((2, 12))
    pts = PointPairs(P, Q)
    res = planar_robust_optimum(pts, n_angles=500)
    best = math.inf
    for refl in (False, True):
        for th in np.linspace(0, 2 * math.pi, 4000, endpoint=False):
            R = planar_orthogonal(th, refl)
            t = geometric_median((Q - R @ P).T, tol=1e-12)
            best = min(best, energy_robust(RigidMotion(R, t), pts))
    assert res.energy <= best + 1e-9


def test_oracle_without_translation(rng):
    P, Q = rng.standard_normal((2, 10)), rng.standard_normal((2, 10))
    res = planar_robust_optimum(PointPairs(P, Q), translations=False, n_angles=800)
    np.testing.assert_array_equal(res.motion.t, 0)
    for refl in (False, True):
        for th in np.linspace(0, 2 * math.pi, 3000):
            m = RigidMotion(planar_orthogonal(th, refl), np.zeros(2))
            assert res.energy <= energy_robust(m, PointPairs(P, Q)) + 1e-9


def test_oracle_rejects_other_dimensions():
    with pytest.raises(DimensionError):
        planar_robust_optimum(PointPairs(np.zeros((3, 2)), np.zeros((3, 2))))
