import os
import subprocess
import sys

import numpy as np
import pytest

from srpalign import _kernels
from srpalign.objectives import CovariancePair, PointPairs, Problem
from srpalign.solvers import subgradient_oracle

compiled = pytest.mark.skipif(not _kernels.compiled_available(), reason="extension not built")


@compiled
@pytest.mark.parametrize("n,d", [(1, 3), (2, 1), (9, 2), (40, 5), (200, 12)])
def test_geometric_median_backends_agree(rng, n, d):
    X = rng.standard_normal((n, d))
    X[: n // 3] = X[0]
    w = rng.uniform(0.5, 2.0, n)
    py, _ = _kernels.get_backend("python").geometric_median(X, w, 1e-12, 10_000)
    cy, _ = _kernels.get_backend("cython").geometric_median(X, w, 1e-12, 10_000)
    np.testing.assert_allclose(py, cy, atol=1e-10)


@compiled
@pytest.mark.parametrize("kind,p,trans,with_cov", [
    ("sym", 1.0, True, False), ("sym", 2.0, True, False), ("sym", np.inf, False, True),
    ("nonsym", 2.0, True, False), ("nonsym", 2.0, False, True), ("squared", 2.0, False, True),
])
def test_subgradient_backends_agree(rng, kind, p, trans, with_cov):
    d, n = 3, 12
    pts = PointPairs(rng.standard_normal((d, n)), rng.standard_normal((d, n)))
    cov = CovariancePair.from_pools(rng.standard_normal((d, 8)), rng.standard_normal((d, 8))) \
        if with_cov else None
    prob = Problem(pts, kind, p, trans, cov, 0.8 if with_cov else 0.0)
    a = subgradient_oracle(prob, 3000, seed=4, backend="python")
    b = subgradient_oracle(prob, 3000, seed=4, backend="cython")
    assert a == pytest.approx(b, rel=1e-10, abs=1e-12)


def test_oracle_value_is_attained_objective(rng):
    d, n = 2, 10
    pts = PointPairs(rng.standard_normal((d, n)), rng.standard_normal((d, n)))
    prob = Problem(pts, "sym", 2.0, True)
    mode, pcode = _kernels.MODE_SYM, _kernels.P_TWO
    x0 = rng.standard_normal(prob.n_vars)
    f, x = _kernels.get_backend("python").subgradient_run(
        pts.P, pts.Q, mode, pcode, True, True, np.zeros((d, d)), np.zeros((d, d)), 0.0, x0, 1.0, 5, 200)
    assert f == pytest.approx(prob.value(x), rel=1e-12)
    assert f <= prob.value(x0)


def test_unknown_backend():
    with pytest.raises(ValueError):
        _kernels.get_backend("fortran")


def test_large_wide_medians_use_numpy_kernel(monkeypatch):
    calls = []
    real = _kernels._pykernels.geometric_median
    monkeypatch.setattr(_kernels._pykernels, "geometric_median",
                        lambda *a: calls.append(1) or real(*a))
    X = np.random.default_rng(0).standard_normal((800, 20))
    _kernels.geometric_median(X, np.ones(800), 1e-10, 1000)
    assert calls


def test_pure_python_switch():
    code = "import srpalign._kernels as k; print(k.BACKEND)"
    env = dict(os.environ, SRP_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "python"
