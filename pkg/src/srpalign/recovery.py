"""Synthetic alignment instances, inlier-dominance checks and recovery metrics.

Instances follow a fixed scaling convention: point coordinates are
``N(0, 1/sqrt(d))`` so ``E|p|^2 = 1``, translation coordinates are
``N(0, sigma_t/sqrt(d))`` and noise coordinates ``N(0, sigma/sqrt(d))``
(second parameter is a standard deviation). Outlier targets are scaled so
every ``q_i`` has the same second moment ``1 + sigma_t^2 + sigma^2``.
"""
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import DataError, DimensionError
from .numerics import random_orthogonal, spectral_norm
from .objectives import PointPairs, RigidMotion


def derive_seed(*keys):
    """Independent 63-bit seed from a tuple of nonnegative integers."""
    ss = np.random.SeedSequence([int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class NoiseParams:
    """Generator settings for one synthetic instance."""

    d: int
    n_inliers: int
    n_outliers: int = 0
    sigma: float = 0.0
    sigma_t: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DimensionError(f"dimension must be a positive integer, got {self.d}")
        if self.n_inliers < 0 or self.n_outliers < 0:
            raise ValueError("counts must be nonnegative")
        if self.n_inliers + self.n_outliers < 1:
            raise ValueError("need at least one point pair")
        if self.sigma < 0 or self.sigma_t < 0:
            raise ValueError("noise levels must be nonnegative")


@dataclass(frozen=True)
class SyntheticInstance:
    """Point pairs with known ground truth.

    ``certificate`` is a positive lower bound on the inlier-dominance slack
    for instances built to satisfy it, else None.
    """

    pts: PointPairs
    truth: RigidMotion
    inlier_set: np.ndarray
    params: Optional[NoiseParams] = None
    certificate: Optional[float] = None


def generate_instance(params):
    """Ground-truth motion, noisy inliers (columns ``0..n_in-1``) and outliers."""
    d, n_in, n_out = int(params.d), params.n_inliers, params.n_outliers
    rng = np.random.default_rng(params.seed)
    sd = 1.0 / math.sqrt(d)
    R0 = random_orthogonal(d, rng)
    t0 = rng.normal(0.0, params.sigma_t * sd, size=d)
    P_in = rng.normal(0.0, sd, size=(d, n_in))
    noise = rng.normal(0.0, params.sigma * sd, size=(d, n_in))
    Q_in = R0 @ P_in + t0[:, None] + noise
    P_out = rng.normal(0.0, sd, size=(d, n_out))
    q_sd = math.sqrt(1.0 + params.sigma_t ** 2 + params.sigma ** 2) * sd
    Q_out = rng.normal(0.0, q_sd, size=(d, n_out))
    pts = PointPairs(np.hstack([P_in, P_out]), np.hstack([Q_in, Q_out]))
    return SyntheticInstance(pts, RigidMotion(R0, t0), np.arange(n_in), params)


class SemiSupervisedInstance(NamedTuple):
    pts: PointPairs
    unpaired_P: np.ndarray
    unpaired_Q: np.ndarray
    truth: RigidMotion
    inlier_set: np.ndarray


def generate_semisupervised(d, n, n_tilde, n_out, sigma, seed):
    """Few labelled pairs with mismatches plus two unordered corresponding pools.

    The ``n`` inlier pairs and the ``n_tilde`` pool pairs are generated with
    zero translation. Mismatch outliers pair ``P~[:, i]`` with ``Q~[:, j]``
    for random ``i != j``. The columns of ``Q~`` are then shuffled.
    """
    if n_out > n_tilde:
        raise ValueError("n_out cannot exceed the pool size")
    if n_out > 0 and n_tilde < 2:
        raise ValueError("mismatch outliers need a pool of at least two points")
    rng = np.random.default_rng(seed)
    sd = 1.0 / math.sqrt(d)
    R0 = random_orthogonal(d, rng)
    P = rng.normal(0.0, sd, size=(d, n))
    Q = R0 @ P + rng.normal(0.0, sigma * sd, size=(d, n))
    Pt = rng.normal(0.0, sd, size=(d, n_tilde))
    Qt = R0 @ Pt + rng.normal(0.0, sigma * sd, size=(d, n_tilde))
    i = rng.choice(n_tilde, size=n_out, replace=False)
    j = rng.integers(0, n_tilde - 1, size=n_out) if n_out else np.zeros(0, dtype=int)
    j = j + (j >= i)  # uniform over indices other than i
    pts = PointPairs(np.hstack([P, Pt[:, i]]), np.hstack([Q, Qt[:, j]]))
    Qt = Qt[:, rng.permutation(n_tilde)]
    return SemiSupervisedInstance(pts, Pt, Qt, RigidMotion(R0, np.zeros(d)), np.arange(n))


# ---------------------------------------------------------------------------
# dominance of inliers


@dataclass
class DipReport:
    """Sampled inlier-dominance check.

    A nonpositive ``min_margin`` certifies a violation at
    ``worst_direction``; a positive one is sampled evidence only.
    """

    holds_sampled: bool
    min_margin: float
    worst_direction: np.ndarray
    probes: int


def _split(pts, inlier_set):
    mask = np.zeros(pts.n, dtype=bool)
    idx = np.asarray(inlier_set, dtype=int).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= pts.n):
        raise DataError("inlier index out of range")
    mask[idx] = True
    return mask


def _lift(X, affine):
    return np.vstack([X, np.ones((1, X.shape[1]))]) if affine else X


def _side_margin(X, mask, z):
    v = z @ X
    a = np.abs(v)
    return a[mask].sum() - a[~mask].sum(), np.sign(v)


def _margin_and_subgradient(sides, mask, z):
    best = None
    for X in sides:
        m, sg = _side_margin(X, mask, z)
        if best is None or m < best[0]:
            w = np.where(mask, sg, -sg)
            best = (m, X @ w)
    return best


def _dip_check(pts, inlier_set, probes, refine_steps, seed, affine):
    if probes < 1:
        raise ValueError("need at least one probe")
    mask = _split(pts, inlier_set)
    sides = [_lift(pts.P, affine), _lift(pts.Q, affine)]
    k = pts.d + (1 if affine else 0)
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((probes, k))
    # coordinate probes; for the affine check the last one is (u, alpha) = (0, 1)
    Z = np.vstack([np.eye(k), Z])
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    margins = np.array([_margin_and_subgradient(sides, mask, z)[0] for z in Z])
    i = int(np.argmin(margins))
    best_m, best_z = float(margins[i]), Z[i].copy()

    # projected subgradient refinement on the unit sphere
    z = best_z.copy()
    scale = max(float(np.abs(np.hstack(sides)).sum()), 1e-300)
    for step in range(1, refine_steps + 1):
        m, g = _margin_and_subgradient(sides, mask, z)
        if m < best_m:
            best_m, best_z = float(m), z.copy()
        g = g - (g @ z) * z
        gn = np.linalg.norm(g)
        if gn <= 1e-15 * scale:
            break
        z = z - (0.5 / math.sqrt(step)) * g / gn
        z /= np.linalg.norm(z)
    m, _ = _margin_and_subgradient(sides, mask, z)
    if m < best_m:
        best_m, best_z = float(m), z.copy()
    return DipReport(best_m > 0, best_m, best_z, int(Z.shape[0]))


def check_linear_dip(pts, inlier_set, probes=2000, refine_steps=500, seed=0):
    """Sampled check of ``sum_I |<u,x_i>| > sum_out |<u,x_i>|`` for x in P and Q.

    Probes the coordinate axes plus ``probes`` random unit vectors, then
    refines the worst one by projected subgradient descent.
    """
    return _dip_check(pts, inlier_set, probes, refine_steps, seed, affine=False)


def check_affine_dip(pts, inlier_set, probes=2000, refine_steps=500, seed=0):
    """Sampled check of the affine dominance condition over ``(u, alpha)``.

    ``worst_direction`` has length ``d + 1`` with ``alpha`` last. The probe
    ``(0, 1)`` is always included, so ``|I| <= |I^C|`` is always detected.
    """
    return _dip_check(pts, inlier_set, probes, refine_steps, seed, affine=True)


def _axis_inliers(d, copies, c):
    E = np.hstack([c * np.eye(d), -c * np.eye(d)])
    return np.tile(E, (1, copies))


def make_linear_dip_instance(d, n_out, seed, copies=1, slack=1.5):
    """Orthogonal instance satisfying the linear dominance condition by construction.

    Inliers are ``copies`` replicas of ``+-c e_k`` with ``q = R0 p``, so the
    inlier sum along a unit ``u`` is ``2 copies c |u|_1 >= 2 copies c``.
    Outliers are Gaussian and ``c`` is chosen so that this exceeds the
    outlier sums ``sum |p_j|`` and ``sum |q_j|`` by the factor ``slack``.
    """
    if slack <= 1:
        raise ValueError("slack must exceed 1")
    rng = np.random.default_rng(seed)
    R0 = random_orthogonal(d, rng)
    P_out = rng.standard_normal((d, n_out))
    Q_out = rng.standard_normal((d, n_out))
    S = max(np.linalg.norm(P_out, axis=0).sum(), np.linalg.norm(Q_out, axis=0).sum(), 1.0)
    c = slack * S / (2 * copies)
    P_in = _axis_inliers(d, copies, c)
    pts = PointPairs(np.hstack([P_in, P_out]), np.hstack([R0 @ P_in, Q_out]))
    n_in = P_in.shape[1]
    cert = 2 * copies * c - max(np.linalg.norm(P_out, axis=0).sum(), np.linalg.norm(Q_out, axis=0).sum())
    return SyntheticInstance(pts, RigidMotion(R0, np.zeros(d)), np.arange(n_in), None, float(cert))


def make_affine_dip_instance(d, n_out, seed, copies=None, slack=1.5, t_scale=1.0):
    """Rigid instance satisfying the affine dominance condition by construction.

    With ``m`` replicas of ``+-c e_k`` the inlier sum along ``(u, alpha)`` is
    at least ``m c |u| + m d |alpha|``, while outliers contribute at most
    ``|u| S + n_out |alpha|`` with ``S`` the outlier mass measured from the
    inlier frame. Choosing ``m c > S`` and ``m d > n_out`` proves dominance.
    """
    if slack <= 1:
        raise ValueError("slack must exceed 1")
    rng = np.random.default_rng(seed)
    if copies is None:
        copies = n_out // d + 1
    if copies * d <= n_out:
        raise ValueError("need copies * d > n_out")
    R0 = random_orthogonal(d, rng)
    t0 = t_scale * rng.standard_normal(d)
    P_out = rng.standard_normal((d, n_out))
    Q_out = rng.standard_normal((d, n_out)) + t0[:, None]
    S = max(np.linalg.norm(P_out, axis=0).sum(),
            np.linalg.norm(Q_out - t0[:, None], axis=0).sum(), 1.0)
    c = slack * S / copies
    P_in = _axis_inliers(d, copies, c)
    Q_in = R0 @ P_in + t0[:, None]
    pts = PointPairs(np.hstack([P_in, P_out]), np.hstack([Q_in, Q_out]))
    n_in = P_in.shape[1]
    cert = min(copies * c - S, copies * d - n_out)
    return SyntheticInstance(pts, RigidMotion(R0, t0), np.arange(n_in), None, float(cert))


def recovery_metrics(result, truth):
    """``(|R - R0|_2, |t - t0| / |t0|)``; the second is ``|t|`` when ``t0 = 0``.

    ``result`` may be an alignment result (anything with ``.motion``) or a
    :class:`RigidMotion`.
    """
    motion = getattr(result, "motion", result)
    if motion.d != truth.d:
        raise DimensionError("motion and truth differ in dimension")
    rot_err = spectral_norm(motion.R - truth.R)
    tn = float(np.linalg.norm(truth.t))
    diff = float(np.linalg.norm(motion.t - truth.t))
    return rot_err, (diff / tn if tn > 0 else diff)
