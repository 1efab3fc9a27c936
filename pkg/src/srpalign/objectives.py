"""Energy functions for robust, least-squares and relaxed alignment.

Point sets are stored column-wise: ``P`` and ``Q`` are ``d x n`` with the
i-th correspondence ``(P[:, i], Q[:, i])``. Relaxation variables are
flattened as ``[vec(A) (row-major), t, s]``; see :class:`Problem`.
"""
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg.blas

from .errors import DataError, DimensionError
from .numerics import as_matrix

INF = math.inf
NORM_POWERS = (1.0, 2.0, INF)


def as_power(p):
    """Normalize a norm power to one of ``1.0, 2.0, inf``."""
    if isinstance(p, str):
        p = p.strip().lower()
        p = INF if p in ("inf", "infinity", "∞") else float(p)
    p = float(p)
    if p not in NORM_POWERS:
        raise ValueError(f"norm power must be one of 1, 2, inf; got {p}")
    return p


def power_label(p):
    p = as_power(p)
    return "inf" if p == INF else str(int(p))


@dataclass(frozen=True)
class PointPairs:
    """Ordered correspondences ``q_i ~ R p_i + t`` stored as ``d x n`` arrays."""

    P: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        P = as_matrix(self.P, "P").copy()
        Q = as_matrix(self.Q, "Q").copy()
        if P.shape != Q.shape:
            raise DimensionError(f"P and Q shapes differ: {P.shape} vs {Q.shape}")
        if P.shape[1] < 1:
            raise DataError("need at least one point pair")
        P.setflags(write=False)
        Q.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)

    @property
    def d(self):
        return self.P.shape[0]

    @property
    def n(self):
        return self.P.shape[1]

    def translated(self, p0, q0):
        return PointPairs(self.P - np.reshape(p0, (-1, 1)), self.Q - np.reshape(q0, (-1, 1)))

    def subset(self, idx):
        return PointPairs(self.P[:, idx], self.Q[:, idx])

    def scale(self):
        """Median of ``sqrt(|p_i|^2 + |q_i|^2)``; a dimensionless data scale."""
        s = float(np.median(np.sqrt((self.P ** 2).sum(0) + (self.Q ** 2).sum(0))))
        return s if s > 0 else 1.0


@dataclass(frozen=True)
class RigidMotion:
    """Orthogonal map ``R`` and translation ``t``."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = as_matrix(self.R, "R")
        if R.shape[0] != R.shape[1]:
            raise DimensionError("R must be square")
        t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        if t.shape != (R.shape[0],):
            raise DimensionError(f"t has shape {t.shape}, expected ({R.shape[0]},)")
        if np.linalg.norm(R.T @ R - np.eye(R.shape[0])) > 1e-8:
            raise DataError("R is not orthogonal to 1e-8")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d), np.zeros(d))

    @property
    def d(self):
        return self.R.shape[0]

    def apply(self, X):
        return self.R @ X + self.t[:, None]


@dataclass
class RelaxedSolution:
    """A point ``(A, t, s)`` of a convex relaxation and its objective value."""

    A: np.ndarray
    t: np.ndarray
    s: np.ndarray
    objective: float
    p: float


@dataclass(frozen=True)
class CovariancePair:
    """Non-centered covariances of the unpaired pools and their spectra."""

    covP: np.ndarray
    covQ: np.ndarray
    sigma: np.ndarray = field(default=None)
    tau: np.ndarray = field(default=None)

    def __post_init__(self):
        cP = as_matrix(self.covP, "covP")
        cQ = as_matrix(self.covQ, "covQ")
        if cP.shape != cQ.shape or cP.shape[0] != cP.shape[1]:
            raise DimensionError("covariances must be square with equal shapes")
        object.__setattr__(self, "covP", cP)
        object.__setattr__(self, "covQ", cQ)
        if self.sigma is None:
            object.__setattr__(self, "sigma", np.linalg.svd(cP, compute_uv=False))
        if self.tau is None:
            object.__setattr__(self, "tau", np.linalg.svd(cQ, compute_uv=False))

    @classmethod
    def from_pools(cls, P_tilde, Q_tilde):
        """``cov(X) = X X^T / n_X`` for each pool (columns are points)."""
        Pt = as_matrix(P_tilde, "P_tilde")
        Qt = as_matrix(Q_tilde, "Q_tilde")
        if Pt.shape[0] != Qt.shape[0]:
            raise DimensionError("pools must share the dimension")
        if Pt.shape[1] == 0 or Qt.shape[1] == 0:
            raise DataError("unpaired pools must be nonempty")
        return cls(Pt @ Pt.T / Pt.shape[1], Qt @ Qt.T / Qt.shape[1])

    @property
    def d(self):
        return self.covP.shape[0]

    def spectral_gap(self):
        """``max_{i,j} |sigma_i - tau_j|``."""
        return float(np.max(np.abs(self.sigma[:, None] - self.tau[None, :])))


# ---------------------------------------------------------------------------
# plain evaluators


def _check_square(A, d):
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (d, d):
        raise DimensionError(f"matrix has shape {A.shape}, expected ({d}, {d})")
    return A


def _vec(v, d, name):
    v = np.zeros(d) if v is None else np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape != (d,):
        raise DimensionError(f"{name} has shape {v.shape}, expected ({d},)")
    return v


def _colnorms(X):
    return np.sqrt(np.einsum("ij,ij->j", X, X))


def forward_residuals(A, t, pts):
    return A @ pts.P - pts.Q + t[:, None]


def backward_residuals(A, s, pts):
    return A.T @ pts.Q - pts.P + s[:, None]


def _combine(na, nb, p):
    if p == 1.0:
        return 0.5 * (na + nb)
    if p == 2.0:
        return np.sqrt(0.5 * (na * na + nb * nb))
    return np.maximum(na, nb)


def energy_robust(m, pts):
    """``sum_i ||R p_i - q_i + t||``."""
    if m.d != pts.d:
        raise DimensionError("motion and points differ in dimension")
    return float(_colnorms(forward_residuals(m.R, m.t, pts)).sum())


def energy_procrustes(m, pts):
    """``sum_i ||R p_i - q_i + t||^2``."""
    if m.d != pts.d:
        raise DimensionError("motion and points differ in dimension")
    r = forward_residuals(m.R, m.t, pts)
    return float(np.sum(r * r))


def relaxed_terms(A, t, s, pts, p):
    """Per-pair terms of the symmetrized energy."""
    p = as_power(p)
    A = _check_square(A, pts.d)
    t = _vec(t, pts.d, "t")
    s = _vec(s, pts.d, "s")
    na = _colnorms(forward_residuals(A, t, pts))
    nb = _colnorms(backward_residuals(A, s, pts))
    return _combine(na, nb, p)


def energy_relaxed_orth(A, pts, p):
    """Symmetrized energy of ``A`` without translations.

    Each pair contributes the p-mean of ``||A p_i - q_i||`` and
    ``||A^T q_i - p_i||`` (the maximum for ``p = inf``).
    """
    return float(relaxed_terms(A, None, None, pts, p).sum())


def energy_relaxed_rigid(A, t, s, pts, p):
    """Symmetrized energy with forward shift ``t`` and backward shift ``s``."""
    return float(relaxed_terms(A, t, s, pts, p).sum())


def energy_translated(A, p0, q0, pts, p):
    """Symmetrized energy after shifting ``P`` by ``-p0`` and ``Q`` by ``-q0``."""
    return energy_relaxed_orth(A, pts.translated(_vec(p0, pts.d, "p0"), _vec(q0, pts.d, "q0")), p)


def energy_nonsym(A, t, pts):
    """One-sided relaxation ``sum_i ||A p_i + t - q_i||``."""
    A = _check_square(A, pts.d)
    return float(_colnorms(forward_residuals(A, _vec(t, pts.d, "t"), pts)).sum())


def energy_squared(A, pts):
    """``sum_i (||A p_i - q_i||^2 + ||A^T q_i - p_i||^2) / 2``."""
    A = _check_square(A, pts.d)
    ra = A @ pts.P - pts.Q
    rb = A.T @ pts.Q - pts.P
    return float(0.5 * (np.sum(ra * ra) + np.sum(rb * rb)))


def commutator(A, cov):
    return A @ cov.covP - cov.covQ @ A


def covariance_energy(A, cov):
    """``||A cov(P~) - cov(Q~) A||_F``."""
    A = _check_square(A, cov.d)
    return float(np.linalg.norm(commutator(A, cov)))


# ---------------------------------------------------------------------------
# problem description shared by the solvers


@dataclass(frozen=True)
class Problem:
    """A convex relaxation instance.

    ``kind`` is ``"sym"`` (symmetrized energy with power ``p``), ``"nonsym"``
    (one-sided sum of norms) or ``"squared"`` (symmetrized least squares).
    With ``translations`` the variables include ``t`` (and ``s`` unless
    nonsym). A covariance penalty ``lam * E_cov(A)`` is added when ``cov``
    is given; the squared kind uses ``lam * E_cov(A)^2``.
    """

    pts: PointPairs
    kind: str = "sym"
    p: float = 2.0
    translations: bool = False
    cov: Optional[CovariancePair] = None
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sym", "nonsym", "squared"):
            raise ValueError(f"unknown relaxation kind {self.kind!r}")
        object.__setattr__(self, "p", as_power(self.p))
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.cov is not None and self.cov.d != self.pts.d:
            raise DimensionError("covariance dimension does not match the points")

    @property
    def d(self):
        return self.pts.d

    @property
    def has_t(self):
        return self.translations

    @property
    def has_s(self):
        return self.translations and self.kind != "nonsym"

    @property
    def lam_eff(self):
        return self.lam if self.cov is not None else 0.0

    @property
    def n_vars(self):
        d = self.d
        return d * d + d * self.has_t + d * self.has_s

    def pack(self, A, t=None, s=None):
        d = self.d
        parts = [np.asarray(A, dtype=np.float64).reshape(d * d)]
        if self.has_t:
            parts.append(_vec(t, d, "t"))
        if self.has_s:
            parts.append(_vec(s, d, "s"))
        return np.concatenate(parts)

    def unpack(self, x):
        d = self.d
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_vars,):
            raise DimensionError(f"variable vector has shape {x.shape}, expected ({self.n_vars},)")
        A = x[: d * d].reshape(d, d)
        off = d * d
        t = np.zeros(d)
        s = np.zeros(d)
        if self.has_t:
            t = x[off:off + d]
            off += d
        if self.has_s:
            s = x[off:off + d]
        return A, t, s

    def value(self, x):
        """Exact (unsmoothed) objective."""
        A, t, s = self.unpack(x)
        pts = self.pts
        if self.kind == "nonsym":
            f = energy_nonsym(A, t, pts)
        elif self.kind == "squared":
            ra = forward_residuals(A, t, pts)
            rb = backward_residuals(A, s, pts)
            f = 0.5 * float(np.sum(ra * ra) + np.sum(rb * rb))
        else:
            f = energy_relaxed_rigid(A, t, s, pts, self.p)
        lam = self.lam_eff
        if lam > 0:
            c = covariance_energy(A, self.cov)
            f += lam * (c * c if self.kind == "squared" else c)
        return f

    @cached_property
    def commutator_operator(self):
        """``(L, L^T L)`` for the covariance commutator on ``vec(A)``."""
        Lm = commutator_matrix(self.cov)
        return Lm, Lm.T @ Lm

    def smoothing_gap_bound(self, eps):
        """Upper bound on (smoothed - exact) objective at any point."""
        if self.kind == "squared":
            return 0.0
        return eps * (self.pts.n + self.lam_eff)


def _term_parts(problem, Ra, Rb, eps, hessian):
    """Smoothed per-pair values, gradient coefficients and Hessian pieces.

    Returns ``(values, ca, cb, rank_ones)`` where the gradient of the i-th
    term is ``(ca_i a_i, cb_i b_i)`` and its Hessian is
    ``ca_i I (+) cb_i I + sum_r coef_ri w_ri w_ri^T`` with ``w = (wa, wb)``.
    """
    kind, p = problem.kind, problem.p
    n = Ra.shape[1]
    sa = np.einsum("ij,ij->j", Ra, Ra)
    rank_ones = []
    if kind == "squared":
        values = 0.5 * (sa + np.einsum("ij,ij->j", Rb, Rb))
        return values, np.ones(n), np.ones(n), rank_ones
    if kind == "nonsym":
        u = np.sqrt(sa + eps * eps)
        if hessian:
            rank_ones.append((Ra, None, -1.0 / u ** 3))
        return u, 1.0 / u, None, rank_ones
    sb = np.einsum("ij,ij->j", Rb, Rb)
    if p == 1.0:
        u = np.sqrt(sa + eps * eps)
        v = np.sqrt(sb + eps * eps)
        if hessian:
            rank_ones.append((Ra, None, -0.5 / u ** 3))
            rank_ones.append((None, Rb, -0.5 / v ** 3))
        return 0.5 * (u + v), 0.5 / u, 0.5 / v, rank_ones
    if p == 2.0:
        r = np.sqrt(0.5 * (sa + sb) + eps * eps)
        c = 0.5 / r
        if hessian:
            rank_ones.append((Ra, Rb, -0.25 / r ** 3))
        return r, c, c, rank_ones
    # p = inf: norms smoothed at eps/2, max smoothed at eps
    e2 = 0.25 * eps * eps
    u = np.sqrt(sa + e2)
    v = np.sqrt(sb + e2)
    diff = u - v
    D = np.sqrt(diff * diff + eps * eps)
    gu = 0.5 * (1.0 + diff / D)
    gv = 0.5 * (1.0 - diff / D)
    if hessian:
        # curvature on span{(a, 0), (0, b)} as a 2x2 form, diagonalized per term
        k = 0.5 * eps * eps / D ** 3
        m11 = k / (u * u) - gu / u ** 3
        m22 = k / (v * v) - gv / v ** 3
        m12 = -k / (u * v)
        theta = 0.5 * np.arctan2(2.0 * m12, m11 - m22)
        c, s = np.cos(theta), np.sin(theta)
        lam1 = m11 * c * c + 2.0 * m12 * s * c + m22 * s * s
        lam2 = m11 * s * s - 2.0 * m12 * s * c + m22 * c * c
        rank_ones.append((Ra * c, Rb * s, lam1))
        rank_ones.append((-Ra * s, Rb * c, lam2))
    return 0.5 * (u + v + D), gu / u, gv / v, rank_ones


def _residuals(problem, A, t, s):
    Ra = forward_residuals(A, t, problem.pts)
    Rb = None if problem.kind == "nonsym" else backward_residuals(A, s, problem.pts)
    return Ra, Rb


def smoothed_value_and_gradient(problem, x, eps):
    """Smoothed objective and its exact gradient.

    Norms become ``sqrt(||v||^2 + eps^2)`` and ``max{a, b}`` becomes
    ``(a + b + sqrt((a - b)^2 + eps^2)) / 2`` (with the inner norms smoothed
    at ``eps/2`` for ``p = inf``). The smoothed value exceeds the exact one
    by at most ``problem.smoothing_gap_bound(eps)``.
    """
    if not eps > 0:
        raise ValueError("smoothing scale eps must be positive")
    A, t, s = problem.unpack(x)
    P, Q = problem.pts.P, problem.pts.Q
    Ra, Rb = _residuals(problem, A, t, s)
    values, ca, cb, _ = _term_parts(problem, Ra, Rb, eps, hessian=False)
    f = float(values.sum())
    Ga = Ra * ca
    gA = Ga @ P.T
    Gb = None
    if cb is not None:
        Gb = Rb * cb
        gA += Q @ Gb.T
    lam = problem.lam_eff
    if lam > 0:
        cov = problem.cov
        L = commutator(A, cov)
        adj = L @ cov.covP.T - cov.covQ.T @ L
        nl2 = float(np.sum(L * L))
        if problem.kind == "squared":
            f += lam * nl2
            gA += 2.0 * lam * adj
        else:
            r = math.sqrt(nl2 + eps * eps)
            f += lam * r
            gA += (lam / r) * adj
    parts = [gA.ravel()]
    if problem.has_t:
        parts.append(Ga.sum(axis=1))
    if problem.has_s:
        parts.append(Gb.sum(axis=1))
    return f, np.concatenate(parts)


def commutator_matrix(cov):
    """Matrix of ``A -> A covP - covQ A`` acting on row-major ``vec(A)``."""
    d = cov.d
    I = np.eye(d)
    return np.kron(I, cov.covP.T) - np.kron(cov.covQ, I)


def _add_signed_gram(H, G, c):
    """``H += G^T diag(c) G`` using symmetric rank-k updates."""
    acc = np.zeros_like(H, order="F")
    for mask, sign in ((c > 0, 1.0), (c < 0, -1.0)):
        if not mask.any():
            continue
        Gs = G[mask] * np.sqrt(np.abs(c[mask]))[:, None]
        acc = scipy.linalg.blas.dsyrk(sign, Gs, beta=1.0, c=acc, trans=1, lower=0, overwrite_c=1)
    upper = np.triu(acc)
    H += upper + np.triu(acc, 1).T


def smoothed_hessian(problem, x, eps):
    """Exact Hessian of the smoothed objective (dense, ``n_vars`` square).

    Assembled from Kronecker blocks for the identity parts of each term plus
    a Gram product for the rank-one parts, so the cost is
    ``O(n d^4)`` rather than ``O(n d^6)``.
    """
    if not eps > 0 and problem.kind != "squared":
        raise ValueError("smoothing scale eps must be positive")
    eps = eps if eps > 0 else 1.0
    d = problem.d
    m = problem.n_vars
    A, t, s = problem.unpack(x)
    P, Q = problem.pts.P, problem.pts.Q
    n = P.shape[1]
    Ra, Rb = _residuals(problem, A, t, s)
    _, ca, cb, rank_ones = _term_parts(problem, Ra, Rb, eps, hessian=True)
    I = np.eye(d)
    H = np.zeros((m, m))
    dd = d * d
    toff = dd
    soff = dd + (d if problem.has_t else 0)

    # H4[i, k, j, l] is the (A_ik, A_jl) entry; splitting axes keeps a view
    H4 = H[:dd, :dd].reshape(d, d, d, d)
    X = (P * ca) @ P.T
    for i in range(d):
        H4[i, :, i, :] += X
    if cb is not None:
        Y = (Q * cb) @ Q.T
        for k in range(d):
            H4[:, k, :, k] += Y
    if problem.has_t:
        pa = (P * ca).sum(axis=1)
        blk = np.kron(I, pa[:, None])
        H[:dd, toff:toff + d] = blk
        H[toff:toff + d, :dd] = blk.T
        H[toff:toff + d, toff:toff + d] = ca.sum() * I
    if problem.has_s:
        qb = (Q * cb).sum(axis=1)
        blk = np.kron(qb[:, None], I)
        H[:dd, soff:soff + d] = blk
        H[soff:soff + d, :dd] = blk.T
        H[soff:soff + d, soff:soff + d] = cb.sum() * I

    rows = []
    coefs = []
    for wa, wb, coef in rank_ones:
        G = np.zeros((n, m))
        GA = np.zeros((n, d, d))
        if wa is not None:
            GA += np.einsum("ki,li->ikl", wa, P)
            if problem.has_t:
                G[:, toff:toff + d] = wa.T
        if wb is not None:
            GA += np.einsum("ki,li->ikl", Q, wb)
            if problem.has_s:
                G[:, soff:soff + d] = wb.T
        G[:, :dd] = GA.reshape(n, dd)
        rows.append(G)
        coefs.append(coef)
    if rows:
        G = np.vstack(rows)
        c = np.concatenate(coefs)
        _add_signed_gram(H, G, c)

    lam = problem.lam_eff
    if lam > 0:
        Lm, LtL = problem.commutator_operator
        if problem.kind == "squared":
            H[:dd, :dd] += 2.0 * lam * LtL
        else:
            ell = Lm @ A.reshape(dd)
            r = math.sqrt(float(ell @ ell) + eps * eps)
            g = Lm.T @ ell
            H[:dd, :dd] += (lam / r) * LtL - (lam / r ** 3) * np.outer(g, g)
    return H


# ---------------------------------------------------------------------------
# duality-gap certificate
#
# Each term is a norm N_i of an affine residual r_i(x) = M_i x + c_i and the
# penalty is lam ||L vec(A)||. For dual variables y_i with N_i^*(y_i) <= 1,
# z with ||z|| <= lam and sum_i M_i^T y_i + L^T z = 0, weak duality gives
# f(x') >= sum_i <y_i, c_i> for every x'. With c = (-q_i, -p_i) this is
# -sum_i (<ya_i, q_i> + <yb_i, p_i>).


def dual_variables(problem, x, eps, dx=None):
    """Per-term gradients of the smoothed objective, as ``(Ya, Yb, Z)``.

    With a step ``dx`` the gradients are linearized at ``x + dx`` through
    each term's Hessian. This is exact in residual space, so it stays
    accurate when ``x + dx`` rounds back to ``x``. ``Yb`` is None for the
    one-sided kind and ``Z`` (a ``d x d`` matrix) is None without a
    covariance penalty.
    """
    A, t, s = problem.unpack(x)
    Ra, Rb = _residuals(problem, A, t, s)
    _, ca, cb, rank_ones = _term_parts(problem, Ra, Rb, eps, hessian=dx is not None)
    Ya = Ra * ca
    Yb = None if cb is None else Rb * cb
    lam = problem.lam_eff
    L = commutator(A, problem.cov) if lam > 0 else None
    if dx is not None:
        dA, dB, dL = linear_operator(problem, dx)
        Ya = Ya + dA * ca
        if Yb is not None:
            Yb = Yb + dB * cb
        for wa, wb, coef in rank_ones:
            proj = np.zeros_like(coef)
            if wa is not None:
                proj += np.einsum("ij,ij->j", wa, dA)
            if wb is not None:
                proj += np.einsum("ij,ij->j", wb, dB)
            proj *= coef
            if wa is not None:
                Ya = Ya + wa * proj
            if wb is not None:
                Yb = Yb + wb * proj
    Z = None
    if lam > 0:
        u = math.sqrt(float(np.sum(L * L)) + eps * eps)
        Z = (lam / u) * L
        if dx is not None:
            Z = Z + (lam / u) * (dL - L * (float(np.sum(L * dL)) / (u * u)))
    return Ya, Yb, Z


def adjoint_operator(problem, Ya, Yb, Z):
    """``sum_i M_i^T y_i + L^T z`` in packed variable order."""
    P, Q = problem.pts.P, problem.pts.Q
    gA = Ya @ P.T
    if Yb is not None:
        gA += Q @ Yb.T
    if Z is not None:
        cov = problem.cov
        gA += Z @ cov.covP.T - cov.covQ.T @ Z
    parts = [gA.ravel()]
    if problem.has_t:
        parts.append(Ya.sum(axis=1))
    if problem.has_s:
        parts.append(Yb.sum(axis=1))
    return np.concatenate(parts)


def linear_operator(problem, v):
    """Linear part of the residual map applied to ``v``: ``(M_i v)_i, L v``."""
    VA, vt, vs = problem.unpack(v)
    P, Q = problem.pts.P, problem.pts.Q
    Ya = VA @ P + vt[:, None]
    Yb = None if problem.kind == "nonsym" else VA.T @ Q + vs[:, None]
    Z = commutator(VA, problem.cov) if problem.lam_eff > 0 else None
    return Ya, Yb, Z


def operator_gram(problem):
    """``sum_i M_i^T M_i + L^T L`` as a dense ``n_vars`` square matrix."""
    d, m, dd = problem.d, problem.n_vars, problem.d ** 2
    P, Q = problem.pts.P, problem.pts.Q
    n = P.shape[1]
    K = np.zeros((m, m))
    K4 = K[:dd, :dd].reshape(d, d, d, d)
    X = P @ P.T
    for i in range(d):
        K4[i, :, i, :] += X
    two_sided = problem.kind != "nonsym"
    if two_sided:
        Y = Q @ Q.T
        for k in range(d):
            K4[:, k, :, k] += Y
    off = dd
    if problem.has_t:
        blk = np.kron(np.eye(d), P.sum(axis=1)[:, None])
        K[:dd, off:off + d] = blk
        K[off:off + d, :dd] = blk.T
        K[off:off + d, off:off + d] = n * np.eye(d)
        off += d
    if problem.has_s:
        blk = np.kron(Q.sum(axis=1)[:, None], np.eye(d))
        K[:dd, off:off + d] = blk
        K[off:off + d, :dd] = blk.T
        K[off:off + d, off:off + d] = n * np.eye(d)
    if problem.lam_eff > 0:
        K[:dd, :dd] += problem.commutator_operator[1]
    return K


def _dual_norms(problem, Ya, Yb):
    na = _colnorms(Ya)
    if problem.kind == "nonsym":
        return na
    nb = _colnorms(Yb)
    if problem.p == 1.0:
        return 2.0 * np.maximum(na, nb)
    if problem.p == 2.0:
        return math.sqrt(2.0) * np.sqrt(na * na + nb * nb)
    return na + nb


def dual_objective(problem, Ya, Yb, Z):
    """Weak-duality lower bound from dual variables satisfying the adjoint constraint.

    The variables are first scaled into the dual-norm balls.
    """
    scale = float(np.max(_dual_norms(problem, Ya, Yb), initial=0.0))
    if Z is not None:
        scale = max(scale, float(np.linalg.norm(Z)) / problem.lam_eff)
    scale = max(scale, 1.0)
    P, Q = problem.pts.P, problem.pts.Q
    val = -float(np.sum(Ya * Q))
    if Yb is not None:
        val -= float(np.sum(Yb * P))
    return val / scale
