import math

import numpy as np
import pytest

from srpalign.errors import DimensionError
from srpalign.numerics import random_orthogonal
from srpalign.objectives import PointPairs, RigidMotion
from srpalign.pipelines import srp_orth, srp_rigid
from srpalign.recovery import (
    NoiseParams,
    check_affine_dip,
    check_linear_dip,
    derive_seed,
    generate_instance,
    generate_semisupervised,
    make_affine_dip_instance,
    make_linear_dip_instance,
    recovery_metrics,
)
from srpalign.solvers import SolverConfig


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert len({derive_seed(0, d, k) for d in range(5) for k in range(5)}) == 25
    assert 0 <= derive_seed(7) < 2 ** 63


def test_noise_params_validation():
    for bad in ({"d": 0, "n_inliers": 1}, {"d": 2, "n_inliers": 0},
                {"d": 2, "n_inliers": 3, "sigma": -1.0}, {"d": 2.5, "n_inliers": 3}):
        with pytest.raises((ValueError, DimensionError)):
            NoiseParams(**bad)


def test_generator_layout_and_reproducibility():
    params = NoiseParams(4, 30, 10, 0.0, 0.3, 99)
    a, b = generate_instance(params), generate_instance(params)
    np.testing.assert_array_equal(a.pts.Q, b.pts.Q)
    assert a.pts.n == 40 and a.inlier_set.tolist() == list(range(30))
    R, t = a.truth.R, a.truth.t
    np.testing.assert_allclose(a.pts.Q[:, :30], R @ a.pts.P[:, :30] + t[:, None], atol=1e-14)
    assert np.min(np.linalg.norm(a.pts.Q[:, 30:] - R @ a.pts.P[:, 30:] - t[:, None], axis=0)) > 1e-3


def test_generator_second_moments():
    d, n, sigma, st = 5, 20000, 0.05, 0.3
    inst = generate_instance(NoiseParams(d, n, n, sigma, st, 3))
    P, Q, R0, t0 = inst.pts.P, inst.pts.Q, inst.truth.R, inst.truth.t
    xi = Q[:, :n] - R0 @ P[:, :n] - t0[:, None]
    assert np.mean(np.sum(P ** 2, 0)) == pytest.approx(1.0, rel=0.05)
    assert np.mean(np.sum(xi ** 2, 0)) == pytest.approx(sigma ** 2, rel=0.05)
    target = 1 + st ** 2 + sigma ** 2
    assert np.mean(np.sum(Q[:, n:] ** 2, 0)) == pytest.approx(target, rel=0.05)
    t_sq = [np.sum(generate_instance(NoiseParams(d, 1, 0, 0, st, s)).truth.t ** 2) for s in range(5000)]
    assert np.mean(t_sq) == pytest.approx(st ** 2, rel=0.05)


def test_semisupervised_generator():
    inst = generate_semisupervised(4, 6, 25, 5, 0.0, 11)
    R = inst.truth.R
    np.testing.assert_allclose(inst.pts.Q[:, :6], R @ inst.pts.P[:, :6], atol=1e-14)
    # mismatches pair pool points with a wrong partner
    mism = inst.pts.Q[:, 6:] - R @ inst.pts.P[:, 6:]
    assert np.min(np.linalg.norm(mism, axis=0)) > 1e-6
    # Q~ is a permutation of R P~
    RP = R @ inst.unpaired_P
    match = np.linalg.norm(RP[:, :, None] - inst.unpaired_Q[:, None, :], axis=0)
    assert np.all(match.min(axis=1) < 1e-12)
    assert not np.allclose(RP, inst.unpaired_Q)
    with pytest.raises(ValueError):
        generate_semisupervised(3, 2, 4, 5, 0.0, 0)


@pytest.mark.parametrize("d", [2, 5])
def test_constructed_instances_satisfy_dominance(d):
    lin = make_linear_dip_instance(d, 4 * d, seed=d)
    aff = make_affine_dip_instance(d, 2 * d, seed=d)
    assert lin.certificate > 0 and aff.certificate > 0
    assert check_linear_dip(lin.pts, lin.inlier_set, probes=300, refine_steps=100).holds_sampled
    assert check_affine_dip(aff.pts, aff.inlier_set, probes=300, refine_steps=100).holds_sampled


@pytest.mark.parametrize("d", [2, 5])
def test_dominance_implies_exact_recovery(d):
    lin = make_linear_dip_instance(d, 4 * d, seed=10 + d)
    aff = make_affine_dip_instance(d, 2 * d, seed=10 + d)
    for p in (1.0, 2.0, math.inf):
        assert recovery_metrics(srp_orth(lin.pts, SolverConfig(p=p)), lin.truth)[0] <= 1e-6
        rot, trans = recovery_metrics(srp_rigid(aff.pts, SolverConfig(p=p, use_translations=True)), aff.truth)
        assert rot <= 1e-6 and trans <= 1e-6


def test_dominance_violation_is_detected(rng):
    d = 3
    P = rng.standard_normal((d, 12))
    Q = rng.standard_normal((d, 12)) * 5
    R = random_orthogonal(d, rng)
    Q[:, :2] = R @ P[:, :2]
    rep = check_linear_dip(PointPairs(P, Q), [0, 1], probes=200, refine_steps=50)
    assert not rep.holds_sampled and rep.min_margin <= 0
    rep = check_affine_dip(PointPairs(P, Q), [0, 1], probes=200, refine_steps=50)
    assert not rep.holds_sampled


def test_recovery_metrics_conventions(rng):
    R = random_orthogonal(3, rng)
    truth = RigidMotion(R, np.array([0.0, 3.0, 4.0]))
    assert recovery_metrics(truth, truth) == (0.0, 0.0)
    off = RigidMotion(R, np.array([0.0, 3.0, 5.0]))
    assert recovery_metrics(off, truth)[1] == pytest.approx(0.2)
    zero = RigidMotion(R, np.zeros(3))
    assert recovery_metrics(off, zero)[1] == pytest.approx(math.sqrt(34))
    flip = RigidMotion(-R, np.zeros(3))
    assert recovery_metrics(flip, zero)[0] == pytest.approx(2.0)
    with pytest.raises(DimensionError):
        recovery_metrics(RigidMotion.identity(2), zero)
