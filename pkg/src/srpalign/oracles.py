"""Brute-force reference solvers used to validate the convex pipelines.

In the plane O(2) is two circles (rotations and reflections), so the
robust optimum can be found by scanning the angle and solving the
translation exactly at each candidate.
"""
import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .errors import DimensionError
from .numerics import geometric_median
from .objectives import RigidMotion, energy_robust


def planar_orthogonal(theta, reflect):
    """Rotation by ``theta``, or the reflection with the same first column."""
    c, s = math.cos(theta), math.sin(theta)
    if reflect:
        return np.array([[c, s], [s, -c]])
    return np.array([[c, -s], [s, c]])


def _batch_matrices(thetas, reflect):
    c, s = np.cos(thetas), np.sin(thetas)
    if reflect:
        return np.stack([np.stack([c, s], -1), np.stack([s, -c], -1)], -2)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def _batch_profile(pts, Rs, translations, iters):
    """Approximate ``min_t E(R, t)`` for a stack of ``R`` by batched Weiszfeld."""
    X = pts.Q[None] - Rs @ pts.P[None]  # (K, 2, n)
    x0, x1 = X[:, 0, :], X[:, 1, :]
    if not translations:
        return np.sqrt(x0 * x0 + x1 * x1).sum(axis=1)
    y0 = x0.mean(axis=1, keepdims=True)
    y1 = x1.mean(axis=1, keepdims=True)
    for _ in range(iters):
        a, b = x0 - y0, x1 - y1
        w = 1.0 / np.maximum(np.sqrt(a * a + b * b), 1e-12)
        ws = w.sum(axis=1, keepdims=True)
        y0 = (x0 * w).sum(axis=1, keepdims=True) / ws
        y1 = (x1 * w).sum(axis=1, keepdims=True) / ws
    a, b = x0 - y0, x1 - y1
    return np.sqrt(a * a + b * b).sum(axis=1)


def _profile(pts, theta, reflect, translations):
    R = planar_orthogonal(theta, reflect)
    t = geometric_median((pts.Q - R @ pts.P).T, tol=1e-13) if translations else np.zeros(2)
    m = RigidMotion(R, t)
    return energy_robust(m, pts), m


@dataclass
class OracleResult:
    energy: float
    motion: RigidMotion


def planar_robust_optimum(pts, translations=True, n_angles=10_000, refine=4, weiszfeld_iters=60):
    """Global minimum of the robust energy over O(2) (and ``t``).

    Scans ``n_angles`` rotation angles and the same number of reflections,
    solving ``t`` approximately per candidate, then polishes the ``refine``
    best grid cells of each family with a bounded scalar search using the
    exact geometric median.
    """
    if pts.d != 2:
        raise DimensionError("the planar oracle needs d = 2")
    thetas = 2.0 * math.pi * np.arange(n_angles) / n_angles
    h = 2.0 * math.pi / n_angles
    best = None
    for reflect in (False, True):
        vals = np.empty(n_angles)
        Rs = _batch_matrices(thetas, reflect)
        for lo in range(0, n_angles, 1000):
            vals[lo:lo + 1000] = _batch_profile(pts, Rs[lo:lo + 1000], translations, weiszfeld_iters)
        # local minima of the cyclic grid, best first
        is_min = (vals <= np.roll(vals, 1)) & (vals <= np.roll(vals, -1))
        cand = np.flatnonzero(is_min)
        cand = cand[np.argsort(vals[cand])][:refine]
        for k in cand:
            th = thetas[k]
            # search the offset from the grid angle: the bounded method's
            # tolerance has a term relative to |x|, which is small here
            res = scipy.optimize.minimize_scalar(
                lambda u: _profile(pts, th + u, reflect, translations)[0],
                bounds=(-h, h), method="bounded", options={"xatol": 1e-14})
            for a in (th + res.x, th):
                e, m = _profile(pts, a, reflect, translations)
                if best is None or e < best.energy:
                    best = OracleResult(e, m)
    return best
