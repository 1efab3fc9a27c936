"""Relax-and-project alignment pipelines and the least-squares baselines.

Every pipeline returns an :class:`AlignmentResult` holding a feasible rigid
motion, its robust energy and, when the method provides one, a certified
lower bound on the optimal robust energy.
"""
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DataError, DegenerateCovarianceError
from .numerics import geometric_median, project_orthogonal, svd
from .objectives import (
    INF,
    CovariancePair,
    Problem,
    RigidMotion,
    covariance_energy,
    energy_robust,
)
from .solvers import (
    SolveReport,
    SolverConfig,
    minimize_problem,
    solve_nonsym,
    solve_relaxation_orth,
    solve_relaxation_rigid,
    solve_with_covariance,
)

RATIO_FLOOR = 1e-12
TRANSLATION_TOL = 1e-10


@dataclass
class AlignmentResult:
    """Feasible motion, its energy, and the relaxation's lower bound.

    ``lower_bound`` is the relaxation objective minus the solver's certified
    gap. It and ``ratio`` are NaN for methods without a certified bound
    (least-squares baselines, the squared relaxation).
    """

    motion: RigidMotion
    achieved_energy: float
    lower_bound: float
    ratio: float
    method: str
    solve_report: Optional[SolveReport] = None

    @property
    def converged(self):
        return True if self.solve_report is None else self.solve_report.converged


def _result(motion, achieved, lower, method, report):
    ratio = achieved / max(lower, RATIO_FLOOR) if math.isfinite(lower) else math.nan
    return AlignmentResult(motion, float(achieved), float(lower), float(ratio), method, report)


def certified_lower_bound(report):
    """Largest certified lower bound on the relaxation optimum, or NaN.

    The relaxation optimum in turn bounds the robust energy of every rigid
    motion from below.
    """
    gap = report.certified_gap
    if not math.isfinite(gap):
        return math.nan
    return max(report.solution.objective - gap, 0.0)


def _method_tag(cfg):
    return {1.0: "srp1", 2.0: "srp2", INF: "srpinf"}[cfg.p]


def optimal_translation(R, pts):
    """Exact minimizer over ``t`` of ``sum_i ||R p_i - q_i + t||``."""
    return geometric_median((pts.Q - R @ pts.P).T, tol=TRANSLATION_TOL)


def srp_orth(pts, cfg):
    """Relax over all matrices, then project onto O(d); no translation."""
    rep = solve_relaxation_orth(pts, cfg)
    R = project_orthogonal(rep.solution.A)
    motion = RigidMotion(R, np.zeros(pts.d))
    return _result(motion, energy_robust(motion, pts), certified_lower_bound(rep),
                   _method_tag(cfg), rep)


def srp_rigid(pts, cfg):
    """Relax over ``(A, t, s)``, project ``A``, then re-solve ``t`` exactly."""
    rep = solve_relaxation_rigid(pts, cfg)
    R = project_orthogonal(rep.solution.A)
    motion = RigidMotion(R, optimal_translation(R, pts))
    return _result(motion, energy_robust(motion, pts), certified_lower_bound(rep),
                   _method_tag(cfg), rep)


def weighted_procrustes(pts, w=None, translation=True):
    """Closed-form minimizer of ``sum_i w_i ||R p_i - q_i + t||^2`` over O(d).

    No determinant correction is applied, so ``R`` may be a reflection.
    With ``translation=False`` the minimization is over ``R`` alone, ``t = 0``.
    """
    n = pts.n
    w = np.ones(n) if w is None else np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape != (n,):
        raise DataError(f"expected {n} weights, got {w.shape[0]}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise DataError("weights must be finite and nonnegative")
    W = w.sum()
    if W <= 0:
        raise DataError("weights sum to zero")
    pbar = pts.P @ w / W if translation else np.zeros(pts.d)
    qbar = pts.Q @ w / W if translation else np.zeros(pts.d)
    M = ((pts.Q - qbar[:, None]) * w) @ (pts.P - pbar[:, None]).T
    U, _, V = svd(M)
    R = U @ V.T
    return RigidMotion(R, qbar - R @ pbar)


def procrustes(pts, translation=True):
    """Least-squares baseline."""
    motion = weighted_procrustes(pts, translation=translation)
    return _result(motion, energy_robust(motion, pts), math.nan, "procrustes", None)


@dataclass
class IrlsTrace:
    """Energy after every IRLS candidate, accepted or not."""

    energies: list


def irls_rigid(pts, init=None, delta=None, max_iter=500, tol=1e-10, lower_bound=math.nan,
               method="irls", return_trace=False, translation=True):
    """Iteratively reweighted least squares for the robust energy.

    Weights are ``1 / max(r_i, delta)`` from the current residuals; each
    step is a weighted Procrustes solve. ``init=None`` starts from uniform
    weights. ``delta`` defaults to ``1e-7`` times the data scale. Stops when
    the energy decreases by a relative amount below ``tol``.
    ``translation=False`` keeps ``t = 0`` throughout.
    """
    if delta is None:
        delta = 1e-7 * pts.scale()
    if not delta > 0:
        raise ValueError("delta must be positive")
    motion = weighted_procrustes(pts, translation=translation) if init is None else init
    E = energy_robust(motion, pts)
    floor = 1e-14 * pts.scale() * pts.n
    energies = [E]
    for _ in range(max_iter):
        if E <= floor:
            break
        r = np.linalg.norm(motion.R @ pts.P - pts.Q + motion.t[:, None], axis=0)
        cand = weighted_procrustes(pts, 1.0 / np.maximum(r, delta), translation)
        En = energy_robust(cand, pts)
        energies.append(En)
        if En < E:
            motion, decrease, E = cand, E - En, En
        else:
            decrease = 0.0
        if decrease <= tol * E:
            break
    res = _result(motion, E, lower_bound, method, None)
    return (res, IrlsTrace(energies)) if return_trace else res


def srp2_irls(pts, cfg=None):
    """IRLS initialized from the SRP_2 rigid solution; keeps its lower bound."""
    cfg = cfg or SolverConfig(p=2, use_translations=True)
    start = srp_rigid(pts, replace(cfg, p=2.0, use_translations=True))
    res = irls_rigid(pts, init=start.motion, lower_bound=start.lower_bound, method="irls_srp2_init")
    res.solve_report = start.solve_report
    return res


def nonsym_rigid_pipeline(pts, cfg):
    """Relax the one-sided energy, project, and re-solve ``t`` exactly.

    Without ``cfg.use_translations`` the output translation is zero.
    """
    rep = solve_nonsym(pts, cfg)
    R = project_orthogonal(rep.solution.A)
    t = optimal_translation(R, pts) if cfg.use_translations else np.zeros(pts.d)
    motion = RigidMotion(R, t)
    return _result(motion, energy_robust(motion, pts), certified_lower_bound(rep),
                   "nonsym", rep)


def srp_squared(pts, cfg):
    """Project the minimizer of the symmetrized least-squares energy."""
    problem = Problem(pts, "squared", 2.0, cfg.use_translations)
    rep = minimize_problem(problem, cfg)
    R = project_orthogonal(rep.solution.A)
    t = optimal_translation(R, pts) if cfg.use_translations else np.zeros(pts.d)
    motion = RigidMotion(R, t)
    return _result(motion, energy_robust(motion, pts), math.nan, "srp_squared", rep)


SEMISUPERVISED_VARIANTS = ("srp_p", "nonsym", "squared")


def balancing_factor(variant, pts, cov, p=2.0):
    """Scale that makes the covariance penalty commensurate with the data term.

    Numerators per variant: ``sum (1/sqrt2) sqrt(|p|^2+|q|^2)`` for the
    symmetrized energy with ``p = 2``, ``sum max(|p|, |q|)`` for ``p = inf``,
    ``sum (|p| + |q|)/2`` for ``p = 1``, ``sum |p|`` for nonsym and
    ``sum (|p|^2+|q|^2)/2`` for squared. The denominator is
    ``max |sigma_i - tau_j|`` (squared for the squared variant).
    """
    if variant not in SEMISUPERVISED_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    gap = cov.spectral_gap()
    if gap <= 0:
        raise DegenerateCovarianceError(
            "balancing factor undefined: max |sigma_i - tau_j| is zero "
            "(covariance spectra of the unpaired pools coincide and are constant)")
    pn = np.linalg.norm(pts.P, axis=0)
    qn = np.linalg.norm(pts.Q, axis=0)
    if variant == "nonsym":
        return float(pn.sum() / gap)
    if variant == "squared":
        return float(0.5 * (pn ** 2 + qn ** 2).sum() / gap ** 2)
    p = Problem(pts, "sym", p).p
    if p == 2.0:
        num = np.sqrt(0.5 * (pn ** 2 + qn ** 2)).sum()
    elif p == INF:
        num = np.maximum(pn, qn).sum()
    else:
        num = 0.5 * (pn + qn).sum()
    return float(num / gap)


def srp_semisupervised(pts, unpaired_P, unpaired_Q, lambda_bar, variant="srp_p", cfg=None):
    """Orthogonal alignment regularized by the unpaired pools' covariances.

    ``lambda = lambda_bar * balancing_factor(...)``; the output translation
    is zero. ``achieved_energy`` is the regularized robust energy
    ``E(R) + lambda E_cov(R)`` for every variant.
    """
    if lambda_bar < 0:
        raise ValueError("lambda_bar must be nonnegative")
    cfg = cfg or SolverConfig()
    cov = CovariancePair.from_pools(unpaired_P, unpaired_Q)
    lam = float(lambda_bar) * balancing_factor(variant, pts, cov, cfg.p) if lambda_bar > 0 else 0.0
    cfg = replace(cfg, lam=lam, use_translations=False)
    rep = solve_with_covariance(pts, cov, cfg, variant)
    R = project_orthogonal(rep.solution.A)
    motion = RigidMotion(R, np.zeros(pts.d))
    achieved = energy_robust(motion, pts) + lam * covariance_energy(R, cov)
    lower = certified_lower_bound(rep) if variant != "squared" else math.nan
    tag = {"srp_p": _method_tag(cfg), "nonsym": "nonsym", "squared": "srp_squared"}[variant]
    return _result(motion, achieved, lower, tag, rep)
