"""Global minimization of the convex alignment relaxations.

All nonsmooth kinds are solved by smoothing continuation: each norm is
replaced by a pseudo-Huber surrogate of width ``eps``, the smooth convex
surrogate is minimized by damped Newton, and ``eps`` shrinks geometrically.
Stopping is certified by a duality gap: the per-term surrogate gradients
are projected onto the dual feasible set, which yields a lower bound on the
exact optimum. At a surrogate minimizer this gap is at most the smoothing
error ``(n + lambda) eps``. The squared kind is a quadratic and is solved in
closed form.
"""
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg
import scipy.optimize

from . import _kernels
from .errors import DataError
from .objectives import (
    INF,
    CovariancePair,
    PointPairs,
    Problem,
    RelaxedSolution,
    adjoint_operator,
    as_power,
    dual_objective,
    dual_variables,
    linear_operator,
    operator_gram,
    smoothed_hessian,
    smoothed_value_and_gradient,
)

# Above this many unknowns the dense Newton system is replaced by L-BFGS.
DENSE_NEWTON_LIMIT = 2500
ARMIJO_C = 1e-4


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``eps_init=None`` means ``1e-2`` times the median of
    ``sqrt(|p_i|^2 + |q_i|^2)``. ``init`` is ``"lstsq"`` (unconstrained
    linear fit, or zero when ``P`` is rank deficient) or ``"random"``
    (Gaussian start drawn from ``seed``).
    """

    p: float = 2.0
    rel_tol: float = 1e-8
    eps_init: Optional[float] = None
    eps_decay: float = 0.1
    eps_min: float = 1e-10
    max_outer: int = 12
    max_inner: int = 500
    lam: float = 0.0
    use_translations: bool = False
    seed: int = 0
    init: str = "lstsq"

    def __post_init__(self):
        object.__setattr__(self, "p", as_power(self.p))
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if not 0.0 < self.eps_decay < 1.0:
            raise ValueError("eps_decay must lie in (0, 1)")
        if not self.eps_min > 0:
            raise ValueError("eps_min must be positive")
        if self.eps_init is not None and not self.eps_min < self.eps_init:
            raise ValueError("eps_min must be smaller than eps_init")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be positive")
        if self.init not in ("lstsq", "random"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class SolveReport:
    """Outcome of one relaxation solve.

    ``trace`` holds the best exact objective after each smoothing stage and
    is nonincreasing. ``certified_gap`` bounds the exact suboptimality of the
    returned solution (dual certificate for Newton solves, smoothing error
    for quasi-Newton ones, 0 for closed-form ones).
    """

    solution: RelaxedSolution
    inner_iterations: int
    final_eps: float
    converged: bool
    wall_time: float
    trace: List[float] = field(default_factory=list)
    method: str = "newton"
    certified_gap: float = math.nan


def initial_point(problem, cfg):
    """Unconstrained least-squares start, or a seeded Gaussian one."""
    d = problem.d
    if cfg.init == "random":
        rng = np.random.default_rng(cfg.seed)
        return rng.standard_normal(problem.n_vars)
    P, Q = problem.pts.P, problem.pts.Q
    A = np.zeros((d, d))
    if P.shape[1] >= d and np.linalg.matrix_rank(P) == d:
        A = np.linalg.solve(P @ P.T, P @ Q.T).T
    return problem.pack(A)


def _cholesky_solve(H, g):
    """Solve ``H x = -g`` for symmetric positive semidefinite ``H``.

    Adds an escalating ridge when the factorization fails.
    """
    scale = float(np.max(np.abs(np.diag(H)))) or 1.0
    ridge = 0.0
    for _ in range(12):
        try:
            c = scipy.linalg.cho_factor(H + ridge * np.eye(H.shape[0]) if ridge else H,
                                        check_finite=False)
            step = scipy.linalg.cho_solve(c, -g, check_finite=False)
            if np.all(np.isfinite(step)):
                return step
        except np.linalg.LinAlgError:
            pass
        ridge = scale * 1e-14 if ridge == 0.0 else ridge * 100.0
    return -g / scale


class DualCertificate:
    """Certified lower bounds on the exact optimum of a problem.

    The Gram matrix of the residual map is factored once; each call projects
    the surrogate's per-term gradients onto the adjoint constraint by least
    squares and evaluates the weak-duality bound.
    """

    def __init__(self, problem):
        self.problem = problem
        K = operator_gram(problem)
        try:
            self._chol = scipy.linalg.cho_factor(K, check_finite=False)
            self._pinv = None
        except np.linalg.LinAlgError:
            w, V = np.linalg.eigh(K)
            keep = w > w[-1] * 1e-12
            self._chol = None
            self._pinv = (V[:, keep], 1.0 / w[keep])

    def _solve(self, g):
        if self._chol is not None:
            return scipy.linalg.cho_solve(self._chol, g, check_finite=False)
        V, inv = self._pinv
        return V @ (inv * (V.T @ g))

    def lower_bound(self, x, eps, dx=None):
        """Weak-duality bound from the surrogate gradients at ``x``.

        A Newton step ``dx`` moves the gradients to the linearized stage
        optimum first, which tightens the bound near convergence.
        """
        prob = self.problem
        Ya, Yb, Z = dual_variables(prob, x, eps, dx)
        g = adjoint_operator(prob, Ya, Yb, Z)
        dYa, dYb, dZ = linear_operator(prob, self._solve(g))
        Ya = Ya - dYa
        Yb = None if Yb is None else Yb - dYb
        Z = None if Z is None else Z - dZ
        return dual_objective(prob, Ya, Yb, Z)


def _newton_stage(problem, x, eps, target, max_inner, cert):
    """Damped Newton on the smoothed surrogate. Returns ``(x, f, iters, gap)``.

    Stops once the certified gap ``f_exact(x) - lower_bound`` is at most
    ``target``; ``gap`` is the certified gap of the returned ``x``.
    """
    f, g = smoothed_value_and_gradient(problem, x, eps)
    best_lb = -math.inf
    gap = math.inf
    for it in range(1, max_inner + 1):
        H = smoothed_hessian(problem, x, eps)
        dx = _cholesky_solve(H, g)
        # every bound is global, so the best one so far certifies the current x
        best_lb = max(best_lb, cert.lower_bound(x, eps), cert.lower_bound(x, eps, dx))
        gap = problem.value(x) - best_lb
        if gap <= target:
            return x, f, it - 1, gap
        slope = float(g @ dx)
        if slope >= 0:
            dx = -g
            slope = -float(g @ g)
        step = 1.0
        # below this the value cannot see the decrease, so the gradient norm decides
        noise = 64 * np.finfo(float).eps * (abs(f) + 1.0)
        gnorm = float(np.linalg.norm(g))
        while True:
            xn = x + step * dx
            fn, gn = smoothed_value_and_gradient(problem, xn, eps)
            if fn <= f + ARMIJO_C * step * slope:
                break
            if -slope <= noise and fn <= f + noise and np.linalg.norm(gn) < gnorm:
                break
            step *= 0.5
            if step < 1e-20:
                # no representable decrease left
                return x, f, it, gap
        x, f, g = xn, fn, gn
    best_lb = max(best_lb, cert.lower_bound(x, eps))
    return x, f, max_inner, problem.value(x) - best_lb


def _lbfgs_stage(problem, x, eps, target, max_inner, cert=None):
    """Quasi-Newton stage for problems too large for dense Newton.

    Uncertified: a successful run reports the smoothing error bound as its
    gap, a failed one reports inf.
    """
    res = scipy.optimize.minimize(
        lambda z: smoothed_value_and_gradient(problem, z, eps),
        x,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_inner * 20, "ftol": 1e-10, "gtol": 1e-12, "maxcor": 30},
    )
    gap = problem.smoothing_gap_bound(eps) if res.success else math.inf
    return res.x, float(res.fun), int(res.nit), gap


def _solve_quadratic(problem):
    """Exact minimizer of the squared kind via its normal equations."""
    x0 = np.zeros(problem.n_vars)
    _, g0 = smoothed_value_and_gradient(problem, x0, 1.0)
    H = smoothed_hessian(problem, x0, 1.0)
    x, *_ = np.linalg.lstsq(H, -g0, rcond=None)
    return x


def minimize_problem(problem, cfg, x0=None):
    """Minimize a :class:`Problem` to relative tolerance ``cfg.rel_tol``."""
    start = time.perf_counter()
    pts = problem.pts
    if problem.kind == "squared":
        x = _solve_quadratic(problem)
        f = problem.value(x)
        A, t, s = problem.unpack(x)
        sol = RelaxedSolution(A.copy(), t.copy(), s.copy(), f, problem.p)
        return SolveReport(sol, 1, 0.0, True, time.perf_counter() - start, [f], "normal-equations",
                           0.0)

    scale = pts.scale()
    eps = cfg.eps_init if cfg.eps_init is not None else 1e-2 * scale
    eps_min = min(cfg.eps_min, 0.5 * eps)
    x = initial_point(problem, cfg) if x0 is None else np.array(x0, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DataError("initial point is not finite")
    dense = problem.n_vars <= DENSE_NEWTON_LIMIT
    stage = _newton_stage if dense else _lbfgs_stage
    cert = DualCertificate(problem) if dense else None

    best_x = x.copy()
    best_f = problem.value(x)
    best_lb = -math.inf
    trace = []
    total = 0
    converged = False
    for _ in range(cfg.max_outer):
        final = eps <= eps_min * (1 + 1e-12)
        # a stage cannot certify much below its own smoothing error
        floor = 2.0 * problem.smoothing_gap_bound(eps)
        target = max(cfg.rel_tol * max(best_f, 0.0), floor)
        x, fs, iters, gap = stage(problem, x, eps, target, cfg.max_inner, cert)
        total += iters
        f_true = problem.value(x)
        if f_true <= best_f:
            best_f, best_x = f_true, x.copy()
        # every certified bound is global, so keep the largest
        best_lb = max(best_lb, f_true - gap)
        best_gap = best_f - best_lb
        trace.append(best_f)
        if best_gap <= cfg.rel_tol * max(best_f, 0.0):
            converged = True
            break
        if final:
            converged = best_gap <= max(cfg.rel_tol * max(best_f, 0.0), floor)
            break
        eps = max(eps * cfg.eps_decay, eps_min)
    A, t, s = problem.unpack(best_x)
    sol = RelaxedSolution(A.copy(), t.copy(), s.copy(), best_f, problem.p)
    return SolveReport(sol, total, eps, converged, time.perf_counter() - start, trace,
                       "newton" if dense else "lbfgs", best_gap)


def _problem(pts, cfg, kind, translations, cov=None):
    if not isinstance(pts, PointPairs):
        raise TypeError("pts must be a PointPairs")
    return Problem(pts, kind, cfg.p, translations, cov, cfg.lam if cov is not None else 0.0)


def solve_relaxation_orth(pts, cfg):
    """Minimize the symmetrized energy over ``A`` alone."""
    if cfg.use_translations:
        raise ValueError("solve_relaxation_orth requires use_translations=False")
    return minimize_problem(_problem(pts, cfg, "sym", False), cfg)


def solve_relaxation_rigid(pts, cfg):
    """Minimize the symmetrized energy over ``(A, t, s)``."""
    if not cfg.use_translations:
        raise ValueError("solve_relaxation_rigid requires use_translations=True")
    return minimize_problem(_problem(pts, cfg, "sym", True), cfg)


def solve_nonsym(pts, cfg):
    """Minimize ``sum_i ||A p_i + t - q_i||`` (``t`` only with translations)."""
    return minimize_problem(_problem(pts, cfg, "nonsym", cfg.use_translations), cfg)


VARIANTS = {"srp_p": "sym", "nonsym": "nonsym", "squared": "squared"}


def solve_with_covariance(pts, cov, cfg, variant="srp_p"):
    """Relaxation plus ``cfg.lam`` times the covariance commutator penalty.

    ``variant`` is ``"srp_p"`` (symmetrized energy with power ``cfg.p``),
    ``"nonsym"`` or ``"squared"`` (penalty squared, solved in closed form).
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if not isinstance(cov, CovariancePair):
        raise TypeError("cov must be a CovariancePair")
    problem = _problem(pts, cfg, VARIANTS[variant], cfg.use_translations, cov)
    return minimize_problem(problem, cfg)


def _kernel_codes(problem):
    mode = {"sym": _kernels.MODE_SYM, "nonsym": _kernels.MODE_NONSYM,
            "squared": _kernels.MODE_SQUARED}[problem.kind]
    pcode = {1.0: _kernels.P_ONE, 2.0: _kernels.P_TWO, INF: _kernels.P_INF}[problem.p]
    return mode, pcode


def subgradient_oracle(problem, budget=200_000, seed=0, x0=None, n_epochs=25, backend=None):
    """Best objective seen by restarted normalized subgradient descent.

    Independent of the smoothing machinery: it evaluates the exact
    nonsmooth objective and one subgradient per step. Steps within an epoch
    are ``h / sqrt(k)``; each epoch restarts from the best point with ``h``
    halved. Starts from a seeded Gaussian point unless ``x0`` is given.
    """
    kern = _kernels if backend is None else _kernels.get_backend(backend)
    d = problem.d
    mode, pcode = _kernel_codes(problem)
    if x0 is None:
        rng = np.random.default_rng(seed)
        x0 = rng.standard_normal(problem.n_vars) / math.sqrt(d)
    lam = problem.lam_eff
    if lam > 0:
        CP, CQ = problem.cov.covP, problem.cov.covQ
    else:
        CP = CQ = np.zeros((d, d))
    h0 = math.sqrt(d) + float(np.linalg.norm(x0)) + problem.pts.scale()
    epoch_len = max(1, int(budget) // n_epochs)
    f, _ = kern.subgradient_run(problem.pts.P, problem.pts.Q, mode, pcode,
                                problem.has_t, problem.has_s, CP, CQ, float(lam),
                                np.asarray(x0, dtype=np.float64), h0, n_epochs, epoch_len)
    return float(f)
