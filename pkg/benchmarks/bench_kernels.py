"""Compare the compiled kernels with the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N] [--csv out.csv]

Times the weighted geometric median and the restarted subgradient oracle on
both backends and reports the speedup and the largest output difference.
"""
import argparse
import csv
import sys
import time

import numpy as np

from srpalign._kernels import compiled_available, get_backend
from srpalign.objectives import PointPairs, Problem
from srpalign.solvers import subgradient_oracle


def _time(fn, repeats):
    best, out = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def geomedian_cases(rng):
    for n, d in ((50, 3), (500, 10), (5000, 30)):
        X = rng.standard_normal((n, d))
        X[: n // 5] = X[0]  # force the anchor test on a repeated point
        yield f"geomedian n={n} d={d}", X, np.ones(n)


def oracle_cases(rng):
    for d, n, p in ((2, 30, 2.0), (3, 60, float("inf")), (5, 100, 1.0)):
        P = rng.standard_normal((d, n))
        Q = rng.standard_normal((d, n))
        yield f"subgradient d={d} n={n} p={p:g}", Problem(PointPairs(P, Q), "sym", p, True)


def run(repeats, budget):
    rng = np.random.default_rng(0)
    rows = []
    backends = ["python"] + (["cython"] if compiled_available() else [])
    for name, X, w in geomedian_cases(rng):
        times, outs = {}, {}
        for b in backends:
            kern = get_backend(b)
            times[b], (outs[b], _) = _time(lambda: kern.geometric_median(X, w, 1e-12, 10_000), repeats)
        rows.append((name, times, outs))
    for name, prob in oracle_cases(rng):
        times, outs = {}, {}
        for b in backends:
            times[b], outs[b] = _time(lambda: subgradient_oracle(prob, budget, seed=1, backend=b), repeats)
        rows.append((name, times, outs))
    return backends, rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--budget", type=int, default=20_000, help="subgradient steps per oracle call")
    ap.add_argument("--csv", help="also write the table as CSV")
    args = ap.parse_args(argv)
    backends, rows = run(args.repeats, args.budget)
    if len(backends) == 1:
        print("compiled kernels unavailable; timing the numpy fallback only", file=sys.stderr)
    table = []
    for name, times, outs in rows:
        py = times["python"]
        cy = times.get("cython", float("nan"))
        diff = float(np.max(np.abs(np.asarray(outs["python"]) - np.asarray(outs["cython"])))) \
            if "cython" in outs else float("nan")
        table.append((name, py, cy, py / cy, diff))
    print(f"{'case':34s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, py, cy, sp, diff in table:
        print(f"{name:34s} {py:10.4f} {cy:10.4f} {sp:8.1f} {diff:10.2e}")
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["case", "python_s", "cython_s", "speedup", "max_abs_diff"])
            w.writerows(table)
    return 0


if __name__ == "__main__":
    sys.exit(main())
