"""Pure numpy implementations of the hot loops.

These mirror ``_ckernels.pyx`` operation for operation and are used when
the compiled extension is missing or ``SRP_PURE_PYTHON`` is set.
"""
import numpy as np

ANCHOR_EPS = 1e-12

MODE_SYM = 0
MODE_NONSYM = 1
MODE_SQUARED = 2

P_ONE = 1
P_TWO = 2
P_INF = 3


def _anchor_check(X, w, k):
    diff = X[k] - X
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    far = dist > ANCHOR_EPS
    w0 = w[~far].sum()
    S = (w[far, None] * diff[far] / dist[far, None]).sum(axis=0)
    return np.sqrt(S @ S) <= w0


def geometric_median(X, w, tol, max_iter):
    """Weighted geometric median of the rows of ``X``.

    Returns ``(y, iterations)``. The first stage tests the best data point
    for subgradient optimality; otherwise Weiszfeld iterates from the
    weighted mean, with the Vardi-Zhang step when an iterate lands on a
    data point. Iteration stops once the duality gap is below
    ``tol * f(y)``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    n, d = X.shape
    if n == 1:
        return X[0].copy(), 0

    # objective at every data point, O(n^2 d)
    sq = np.einsum("ij,ij->i", X, X)
    G = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.maximum(G, 0.0, out=G)
    fvals = np.sqrt(G) @ w
    k = int(np.argmin(fvals))
    if _anchor_check(X, w, k):
        return X[k].copy(), 0

    W = w.sum()
    xbar = (w @ X) / W
    y = xbar.copy()
    it = 0
    while it < max_iter:
        it += 1
        diff = X - y
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        near = dist <= ANCHOR_EPS
        if near.any():
            far = ~near
            w0 = w[near].sum()
            inv = w[far] / dist[far]
            T = (inv @ X[far]) / inv.sum()
            R = inv @ diff[far]
            r = np.sqrt(R @ R)
            if r <= w0:
                return y, it
            y = (1.0 - w0 / r) * T + (w0 / r) * y
            continue
        inv = w / dist
        f = w @ dist
        R = inv @ diff
        lb = (f + R @ (y - xbar)) / (1.0 + np.sqrt(R @ R) / W)
        if f - lb <= tol * f:
            return y, it
        y = (inv @ X) / inv.sum()
    return y, it


def _objective_subgradient(x, P, Q, mode, pcode, use_t, use_s, CP, CQ, lam):
    d, n = P.shape
    A = x[: d * d].reshape(d, d)
    off = d * d
    t = x[off:off + d] if use_t else None
    off += d if use_t else 0
    s = x[off:off + d] if use_s else None

    Ra = A @ P - Q
    if t is not None:
        Ra = Ra + t[:, None]
    na = np.sqrt(np.einsum("ij,ij->j", Ra, Ra))
    if mode != MODE_NONSYM:
        Rb = A.T @ Q - P
        if s is not None:
            Rb = Rb + s[:, None]
        nb = np.sqrt(np.einsum("ij,ij->j", Rb, Rb))

    safe_a = np.where(na > 0.0, na, 1.0)
    if mode == MODE_NONSYM:
        f = na.sum()
        ca = np.where(na > 0.0, 1.0 / safe_a, 0.0)
        cb = None
    elif mode == MODE_SQUARED:
        f = 0.5 * (na @ na + nb @ nb)
        ca = np.ones(n)
        cb = np.ones(n)
    else:
        safe_b = np.where(nb > 0.0, nb, 1.0)
        if pcode == P_ONE:
            f = 0.5 * (na.sum() + nb.sum())
            ca = np.where(na > 0.0, 0.5 / safe_a, 0.0)
            cb = np.where(nb > 0.0, 0.5 / safe_b, 0.0)
        elif pcode == P_TWO:
            r = np.sqrt(0.5 * (na * na + nb * nb))
            f = r.sum()
            safe_r = np.where(r > 0.0, r, 1.0)
            ca = np.where(r > 0.0, 0.5 / safe_r, 0.0)
            cb = ca
        else:
            fwd = na >= nb
            f = np.where(fwd, na, nb).sum()
            ca = np.where(fwd & (na > 0.0), 1.0 / safe_a, 0.0)
            cb = np.where(~fwd & (nb > 0.0), 1.0 / safe_b, 0.0)

    Ga = Ra * ca
    gA = Ga @ P.T
    parts = []
    if cb is not None:
        Gb = Rb * cb
        gA = gA + Q @ Gb.T
    if lam > 0.0:
        L = A @ CP - CQ @ A
        nl = np.sqrt(np.sum(L * L))
        if mode == MODE_SQUARED:
            f += lam * nl * nl
            gA = gA + 2.0 * lam * (L @ CP.T - CQ.T @ L)
        else:
            f += lam * nl
            if nl > 0.0:
                gA = gA + (lam / nl) * (L @ CP.T - CQ.T @ L)
    parts.append(gA.ravel())
    if use_t:
        parts.append(Ga.sum(axis=1))
    if use_s:
        parts.append(Gb.sum(axis=1) if cb is not None else np.zeros(d))
    return f, np.concatenate(parts)


def subgradient_run(P, Q, mode, pcode, use_t, use_s, CP, CQ, lam, x0, h0,
                    n_epochs, epoch_len):
    """Restarted normalized subgradient descent.

    Each epoch takes ``epoch_len`` steps of length ``h / sqrt(k)`` along the
    normalized subgradient, then restarts from the best point seen with
    ``h`` halved. Returns ``(best_f, best_x)``.
    """
    P = np.ascontiguousarray(P, dtype=np.float64)
    Q = np.ascontiguousarray(Q, dtype=np.float64)
    x = np.array(x0, dtype=np.float64)
    best_f, g = _objective_subgradient(x, P, Q, mode, pcode, use_t, use_s,
                                       CP, CQ, lam)
    best_x = x.copy()
    h = h0
    for _ in range(n_epochs):
        x = best_x.copy()
        for k in range(1, epoch_len + 1):
            f, g = _objective_subgradient(x, P, Q, mode, pcode, use_t, use_s,
                                          CP, CQ, lam)
            if f < best_f:
                best_f = f
                best_x = x.copy()
            gn = np.sqrt(g @ g)
            if gn == 0.0:
                return best_f, best_x
            x = x - (h / np.sqrt(k)) / gn * g
        h *= 0.5
    f, _ = _objective_subgradient(x, P, Q, mode, pcode, use_t, use_s,
                                  CP, CQ, lam)
    if f < best_f:
        best_f, best_x = f, x.copy()
    return best_f, best_x
