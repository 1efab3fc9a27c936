"""Trial runner: generate instances, run every method, aggregate per cell."""
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

from ..objectives import INF, energy_robust
from ..pipelines import (
    irls_rigid,
    nonsym_rigid_pipeline,
    procrustes,
    srp_rigid,
    srp_semisupervised,
    srp_squared,
)
from ..recovery import (
    NoiseParams,
    derive_seed,
    generate_instance,
    generate_semisupervised,
    recovery_metrics,
)
from ..solvers import SolverConfig
from .io import write_rows

SUCCESS_ROT_ERR = 1e-5


@dataclass
class TrialRecord:
    """One (trial, method) row. NaN fields are written empty."""

    experiment_id: str
    trial: int
    d: int
    n_outliers: int
    method: str
    achieved_energy: float
    lower_bound: float
    ratio: float
    rot_err: float
    trans_err: float
    wall_time_s: float
    converged: bool


RECORD_FIELDS = tuple(f.name for f in fields(TrialRecord))
SUMMARY_FIELDS = ("experiment_id", "d", "n_outliers", "method", "rows",
                  "mean_achieved_energy", "mean_lower_bound", "mean_ratio", "max_ratio",
                  "mean_rot_err", "se_rot_err", "mean_trans_err", "se_trans_err",
                  "success_rate", "converged_rate")


def trial_seed(seed, d, n_out, trial):
    """Independent seed for one work item."""
    return derive_seed(seed, d, n_out, trial)


_P_OF = {"srp1": 1.0, "srp2": 2.0, "srpinf": INF, "lower_bound_2": 2.0, "lower_bound_inf": INF}


def _rigid_methods(spec, inst):
    pts = inst.pts
    cache = {}

    def srp(p):
        if p not in cache:
            cache[p] = srp_rigid(pts, SolverConfig(p=p, use_translations=True))
        return cache[p]

    for m in spec.methods:
        t0 = time.perf_counter()
        if m == "procrustes":
            res = procrustes(pts)
        elif m == "irls":
            res = irls_rigid(pts)
        elif m == "irls_srp2_init":
            start = srp(2.0)
            res = irls_rigid(pts, init=start.motion, lower_bound=start.lower_bound,
                             method="irls_srp2_init")
            res.solve_report = start.solve_report
        elif m in ("srp1", "srp2", "srpinf", "lower_bound_2", "lower_bound_inf"):
            res = srp(_P_OF[m])
        elif m == "nonsym":
            res = nonsym_rigid_pipeline(pts, SolverConfig(use_translations=True))
        elif m == "srp_squared":
            res = srp_squared(pts, SolverConfig(use_translations=True))
        else:  # ground_truth
            res = None
        yield m, res, time.perf_counter() - t0


def _semisupervised_methods(spec, inst):
    pts = inst.pts
    cache = {}

    def semi(variant, p=2.0):
        key = (variant, p)
        if key not in cache:
            cache[key] = srp_semisupervised(pts, inst.unpaired_P, inst.unpaired_Q, spec.lambda_bar,
                                            variant, SolverConfig(p=p))
        return cache[key]

    for m in spec.methods:
        t0 = time.perf_counter()
        if m == "procrustes":
            res = procrustes(pts, translation=False)
        elif m == "irls":
            res = irls_rigid(pts, translation=False)
        elif m == "irls_srp2_init":
            start = semi("srp_p", 2.0)
            res = irls_rigid(pts, init=start.motion, method="irls_srp2_init", translation=False)
            res.solve_report = start.solve_report
        elif m in _P_OF:
            res = semi("srp_p", _P_OF[m])
        elif m == "nonsym":
            res = semi("nonsym")
        elif m == "srp_squared":
            res = semi("squared")
        else:
            res = None
        yield m, res, time.perf_counter() - t0


def run_trial(spec, d, n_out, trial):
    """All method rows for one generated instance, in ``spec.methods`` order."""
    seed = trial_seed(spec.seed, d, n_out, trial)
    semisup = spec.kind == "semisupervised"
    if semisup:
        inst = generate_semisupervised(d, spec.n_inliers, spec.n_unpaired, n_out, spec.sigma, seed)
        runner = _semisupervised_methods
    else:
        sigma = 0.0 if spec.kind == "recovery_noiseless" else spec.sigma
        inst = generate_instance(NoiseParams(d, spec.n_inliers, n_out, sigma, spec.sigma_t, seed))
        runner = _rigid_methods
    rows = []
    nan = math.nan
    for m, res, wall in runner(spec, inst):
        wall = wall if spec.timing else nan
        if res is None:
            energy = energy_robust(inst.truth, inst.pts)
            rows.append(TrialRecord(spec.experiment_id, trial, d, n_out, m, energy, nan, nan,
                                    0.0, 0.0, wall, True))
            continue
        converged = res.converged
        if m.startswith("lower_bound"):
            rows.append(TrialRecord(spec.experiment_id, trial, d, n_out, m, nan, res.lower_bound,
                                    nan, nan, nan, wall, converged))
            continue
        rot_err, trans_err = recovery_metrics(res, inst.truth)
        energy = energy_robust(res.motion, inst.pts)
        # with a covariance penalty the relaxation bounds the regularized energy only
        lower = res.lower_bound if not (semisup and spec.lambda_bar > 0) else nan
        ratio = energy / max(lower, 1e-12) if math.isfinite(lower) else nan
        rows.append(TrialRecord(spec.experiment_id, trial, d, n_out, m, energy, lower, ratio,
                                rot_err, trans_err, wall, converged))
    return rows


def _run_item(args):
    spec, d, n_out, trial = args
    return run_trial(spec, d, n_out, trial)


def worker_count():
    """Workers from ``SRP_THREADS``: unset means serial, 0 means all cores."""
    raw = os.environ.get("SRP_THREADS", "").strip()
    if not raw:
        return 1
    n = int(raw)
    if n < 0:
        raise ValueError("SRP_THREADS must be nonnegative")
    return n if n > 0 else (os.cpu_count() or 1)


def run_experiment(spec, workers=None):
    """Rows sorted by ``(d, n_outliers, trial, method)`` plus per-cell summary."""
    items = [(spec, d, k, t) for d in spec.dims for k in spec.outlier_counts
             for t in range(spec.trials)]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_item, items))
    else:
        chunks = [_run_item(it) for it in items]
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r.d, r.n_outliers, r.trial, r.method))
    return rows, summarize(rows)


def _mean(vals):
    vals = [v for v in vals if math.isfinite(v)]
    return sum(vals) / len(vals) if vals else math.nan


def _stderr(vals):
    vals = [v for v in vals if math.isfinite(v)]
    if len(vals) < 2:
        return math.nan
    m = sum(vals) / len(vals)
    return math.sqrt(sum((v - m) ** 2 for v in vals) / (len(vals) - 1) / len(vals))


def summarize(rows):
    """Arithmetic means per ``(d, n_outliers, method)`` cell over finite values."""
    cells = {}
    for r in rows:
        cells.setdefault((r.d, r.n_outliers, r.method), []).append(r)
    out = []
    for (d, k, m), rs in sorted(cells.items()):
        rot = [r.rot_err for r in rs]
        ratios = [r.ratio for r in rs if math.isfinite(r.ratio)]
        finite_rot = [v for v in rot if math.isfinite(v)]
        out.append({
            "experiment_id": rs[0].experiment_id,
            "d": d,
            "n_outliers": k,
            "method": m,
            "rows": len(rs),
            "mean_achieved_energy": _mean([r.achieved_energy for r in rs]),
            "mean_lower_bound": _mean([r.lower_bound for r in rs]),
            "mean_ratio": _mean(ratios),
            "max_ratio": max(ratios) if ratios else math.nan,
            "mean_rot_err": _mean(rot),
            "se_rot_err": _stderr(rot),
            "mean_trans_err": _mean([r.trans_err for r in rs]),
            "se_trans_err": _stderr([r.trans_err for r in rs]),
            "success_rate": (sum(v <= SUCCESS_ROT_ERR for v in finite_rot) / len(finite_rot)
                             if finite_rot else math.nan),
            "converged_rate": sum(bool(r.converged) for r in rs) / len(rs),
        })
    return out


def summary_path(output_path):
    root, ext = os.path.splitext(output_path)
    return f"{root}_summary{ext or '.csv'}"


def write_results(fh, rows):
    write_rows(fh, RECORD_FIELDS, rows)


def write_summary(fh, summary):
    write_rows(fh, SUMMARY_FIELDS, summary)
