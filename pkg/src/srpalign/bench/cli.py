"""Command-line entry point: ``bench run | align | dipcheck``.

Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 solver
non-convergence, 4 a failed acceptance criterion.
"""
import argparse
import math
import os
import sys

import numpy as np

from ..errors import SrpError
from ..objectives import PointPairs, as_power, power_label
from ..pipelines import (
    irls_rigid,
    nonsym_rigid_pipeline,
    procrustes,
    srp2_irls,
    srp_orth,
    srp_rigid,
    srp_semisupervised,
    srp_squared,
)
from ..recovery import check_affine_dip, check_linear_dip
from ..solvers import SolverConfig
from .config import ConfigError, load_config
from .experiment import run_experiment, summary_path, write_results, write_summary
from .io import read_point_csv, write_rows

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGED, EXIT_FAILED = 0, 1, 2, 3, 4

ALIGN_METHODS = ("procrustes", "irls", "irls_srp2_init", "srp", "srp1", "srp2", "srpinf",
                 "nonsym", "srp_squared")
ACCEPTANCE_FIELDS = ("experiment_id", "criterion", "check", "observed", "relation", "bound",
                     "passed")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser():
    parser = _Parser(prog="bench", description="Robust point-set alignment benchmarks.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("--config", required=True, help="key = value experiment file")
    run.add_argument("--output", help="results CSV (overrides output_path)")
    run.add_argument("--quiet", action="store_true", help="no progress on standard error")

    align = sub.add_parser("align", help="align the point pairs of one CSV")
    align.add_argument("--input", required=True, help="point-set CSV")
    align.add_argument("--method", required=True, choices=ALIGN_METHODS)
    align.add_argument("--p", default="2", choices=("1", "2", "inf"),
                       help="relaxation power for --method srp (default 2)")
    align.add_argument("--lambda-bar", type=float, default=None,
                       help="covariance weight; uses the ptilde/qtilde pools")
    align.add_argument("--no-translation", action="store_true", help="fit R only, t = 0")

    dip = sub.add_parser("dipcheck", help="sampled inlier-dominance check")
    dip.add_argument("--input", required=True, help="point-set CSV")
    dip.add_argument("--inliers", required=True, help="indices, e.g. 0-9,12,15")
    dip.add_argument("--probes", type=int, default=2000)
    dip.add_argument("--seed", type=int, default=0)
    return parser


def parse_indices(text):
    """``"0-3,7"`` -> ``[0, 1, 2, 3, 7]``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ValueError
                out.extend(range(a, b + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise UsageError(f"bad index list entry {part!r}") from None
    if not out:
        raise UsageError("empty index list")
    return sorted(set(out))


def _err(msg):
    print(msg, file=sys.stderr)


def _cmd_run(args):
    overrides = {"output_path": args.output} if args.output else None
    try:
        spec = load_config(args.config, overrides)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {args.config}") from None
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
    # open every output before any solve so a bad path fails fast
    try:
        parent = os.path.dirname(spec.output_path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        out = open(spec.output_path, "w", newline="", encoding="utf-8")
        summ = None if spec.kind == "acceptance" else open(
            summary_path(spec.output_path), "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write output {spec.output_path}: {exc.strerror}") from None
    try:
        if spec.kind == "acceptance":
            from ..acceptance import run_criterion

            res = run_criterion(spec.criterion, spec.seed)
            rows = [{"experiment_id": spec.experiment_id, "criterion": res.number, "check": c.name,
                     "observed": c.observed, "relation": c.relation, "bound": c.bound,
                     "passed": c.passed} for c in res.checks]
            write_rows(out, ACCEPTANCE_FIELDS, rows)
            if not args.quiet:
                _err(res.line())
            return EXIT_OK if res.passed else EXIT_FAILED
        if not args.quiet:
            cells = len(spec.dims) * len(spec.outlier_counts)
            _err(f"running {spec.experiment_id}: {cells} cells x {spec.trials} trials x "
                 f"{len(spec.methods)} methods")
        rows, summary = run_experiment(spec)
        write_results(out, rows)
        write_summary(summ, summary)
    finally:
        out.close()
        if summ is not None:
            summ.close()
    bad = sum(not r.converged for r in rows)
    if bad:
        _err(f"{bad} of {len(rows)} rows did not converge")
        return EXIT_NONCONVERGED
    return EXIT_OK


def _align(args, data):
    if "p" not in data or "q" not in data:
        raise SrpError("input needs both p and q rows")
    pts = PointPairs(data["p"], data["q"])
    trans = not args.no_translation
    m = args.method
    p = {"srp1": 1.0, "srp2": 2.0, "srpinf": math.inf}.get(m, as_power(args.p))
    if args.lambda_bar is not None:
        if "ptilde" not in data or "qtilde" not in data:
            raise SrpError("--lambda-bar needs ptilde and qtilde rows")
        variant = {"nonsym": "nonsym", "srp_squared": "squared"}.get(m, "srp_p")
        if variant == "srp_p" and not m.startswith("srp"):
            raise UsageError(f"--lambda-bar is not supported with --method {m}")
        return srp_semisupervised(pts, data["ptilde"], data["qtilde"], args.lambda_bar, variant,
                                  SolverConfig(p=p))
    cfg = SolverConfig(p=p, use_translations=trans)
    if m == "procrustes":
        return procrustes(pts, translation=trans)
    if m == "irls":
        return irls_rigid(pts, translation=trans)
    if m == "irls_srp2_init":
        if not trans:
            start = srp_orth(pts, SolverConfig(p=2.0))
            res = irls_rigid(pts, init=start.motion, lower_bound=start.lower_bound,
                             method="irls_srp2_init", translation=False)
            res.solve_report = start.solve_report
            return res
        return srp2_irls(pts)
    if m == "nonsym":
        return nonsym_rigid_pipeline(pts, cfg)
    if m == "srp_squared":
        return srp_squared(pts, cfg)
    return srp_rigid(pts, cfg) if trans else srp_orth(pts, cfg)


def _fmt_matrix(M):
    return "\n".join("  " + " ".join(f"{v: .12g}" for v in row) for row in np.atleast_2d(M))


def _cmd_align(args):
    data = read_point_csv(args.input)
    res = _align(args, data)
    print(f"method: {res.method}" + (f" (p={power_label(as_power(args.p))})" if args.method == "srp" else ""))
    print("R:")
    print(_fmt_matrix(res.motion.R))
    print("t: " + " ".join(f"{v:.12g}" for v in res.motion.t))
    print(f"achieved_energy: {res.achieved_energy:.12g}")
    print(f"lower_bound: {'' if math.isnan(res.lower_bound) else f'{res.lower_bound:.12g}'}")
    print(f"ratio: {'' if math.isnan(res.ratio) else f'{res.ratio:.12g}'}")
    print(f"converged: {'true' if res.converged else 'false'}")
    if not res.converged:
        _err("solver did not converge")
        return EXIT_NONCONVERGED
    return EXIT_OK


def _cmd_dipcheck(args):
    data = read_point_csv(args.input)
    if "p" not in data or "q" not in data:
        raise SrpError("input needs both p and q rows")
    pts = PointPairs(data["p"], data["q"])
    idx = parse_indices(args.inliers)
    if idx[-1] >= pts.n:
        raise SrpError(f"inlier index {idx[-1]} out of range for {pts.n} pairs")
    for name, fn in (("linear", check_linear_dip), ("affine", check_affine_dip)):
        rep = fn(pts, np.array(idx), probes=args.probes, seed=args.seed)
        print(f"{name}: holds_sampled={'true' if rep.holds_sampled else 'false'} "
              f"min_margin={rep.min_margin:.12g} probes={rep.probes}")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "align": _cmd_align, "dipcheck": _cmd_dipcheck}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        _err(str(exc) if str(exc).startswith("usage") else f"{parser.format_usage()}bench: error: {exc}")
        return EXIT_USAGE
    except ConfigError as exc:
        _err(f"{parser.format_usage()}bench: config error: {exc}")
        return EXIT_USAGE
    except (SrpError, OSError, ValueError) as exc:
        _err(f"bench: error: {exc}")
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
