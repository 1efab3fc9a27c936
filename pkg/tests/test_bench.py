import csv
import io
import math
import os

import numpy as np
import pytest

from srpalign.bench import cli
from srpalign.bench.config import ConfigError, ExperimentSpec, load_config, parse_config
from srpalign.bench.experiment import (
    RECORD_FIELDS,
    SUMMARY_FIELDS,
    run_experiment,
    summary_path,
    worker_count,
    write_results,
)
from srpalign.bench.io import format_value, read_point_csv, read_rows, write_point_csv
from srpalign.errors import DataError
from srpalign.numerics import random_orthogonal

SMALL = """\
kind = recovery_noisy
dims = 2, 3
outlier_counts = 0, 5
trials = 2
methods = procrustes, irls, srp2, srpinf, lower_bound_2, ground_truth
sigma = 0.02
n_inliers = 12
seed = 5
"""


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


# -- config -----------------------------------------------------------------

def test_parse_config_fields():
    spec = parse_config(SMALL + "# comment\n\nlambda_bar = 0.1\ntiming = yes\n")
    assert spec.dims == (2, 3) and spec.outlier_counts == (0, 5) and spec.trials == 2
    assert spec.methods[0] == "procrustes" and spec.sigma == 0.02 and spec.timing
    assert spec.experiment_id == "recovery_noisy"


@pytest.mark.parametrize("text", [
    "kind = recovery_noisy\ncolour = red\n",
    "kind = recovery_noisy\ntrials = 3\ntrials = 4\n",
    "kind = recovery_noisy\ntrials = many\n",
    "trials = 3\n",
    "kind = nonsense\n",
    "kind = recovery_noisy\nmethods = srp3\n",
    "kind = recovery_noisy\nmethods = srp2, srp2\n",
    "kind = recovery_noisy\ntrials = 0\n",
    "kind = recovery_noisy\ndims = 0\n",
    "kind = recovery_noisy\nsigma = -1\n",
    "kind = recovery_noisy\njust words\n",
    "kind = semisupervised\noutlier_counts = 200\nn_unpaired = 100\n",
    "kind = acceptance\ncriterion = 13\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_config_with_override(tmp_path):
    path = write(tmp_path / "a.cfg", SMALL)
    assert load_config(path, {"output_path": "x.csv"}).output_path == "x.csv"


# -- csv --------------------------------------------------------------------

def test_point_csv_roundtrip(tmp_path, rng):
    arrays = {"p": rng.standard_normal((3, 4)), "q": rng.standard_normal((3, 4)),
              "ptilde": rng.standard_normal((3, 7))}
    path = str(tmp_path / "pts.csv")
    write_point_csv(path, arrays)
    back = read_point_csv(path)
    assert set(back) == {"p", "q", "ptilde"}
    for k in arrays:
        np.testing.assert_array_equal(back[k], arrays[k])


@pytest.mark.parametrize("body", [
    "kind,dim,idx,c0\np,1,0,1.0\n",
    "kind,dim,index,c0,c1\np,2,0,1.0\n",
    "kind,dim,index,c0\nz,1,0,1.0\n",
    "kind,dim,index,c0\np,2,0,1.0\n",
    "kind,dim,index,c0\np,1,0,nan\n",
    "kind,dim,index,c0\np,1,0,1,000\n",
    "kind,dim,index,c0\np,1,1,1.0\n",
    "kind,dim,index,c0\np,1,0,1.0\np,1,0,2.0\n",
    "",
])
def test_point_csv_errors(tmp_path, body):
    with pytest.raises(DataError):
        read_point_csv(write(tmp_path / "bad.csv", body))


def test_format_value():
    assert format_value(math.nan) == "" and format_value(None) == ""
    assert format_value(True) == "true" and format_value(0.1) == "0.1"
    assert float(format_value(1 / 3)) == 1 / 3


# -- experiment runner --------------------------------------------------------

@pytest.fixture(scope="module")
def small_run():
    return run_experiment(parse_config(SMALL), workers=1)


def test_rows_are_complete_and_ordered(small_run):
    rows, _ = small_run
    assert len(rows) == 2 * 2 * 2 * 6
    keys = [(r.d, r.n_outliers, r.trial, r.method) for r in rows]
    assert keys == sorted(keys)
    for r in rows:
        for f in ("achieved_energy", "lower_bound", "ratio", "rot_err", "trans_err"):
            v = getattr(r, f)
            assert math.isnan(v) or math.isfinite(v)


def test_energies_respect_the_trial_lower_bound(small_run):
    rows, _ = small_run
    bound = {(r.d, r.n_outliers, r.trial): r.lower_bound for r in rows if r.method == "lower_bound_2"}
    for r in rows:
        if math.isfinite(r.achieved_energy):
            lb = bound[(r.d, r.n_outliers, r.trial)]
            assert r.achieved_energy >= lb - 1e-6 * (1 + lb)


def test_summary_means_recompute(small_run):
    rows, summary = small_run
    for cell in summary:
        rs = [r for r in rows if (r.d, r.n_outliers, r.method) == (cell["d"], cell["n_outliers"], cell["method"])]
        assert cell["rows"] == len(rs)
        for field, col in (("achieved_energy", "mean_achieved_energy"), ("rot_err", "mean_rot_err"),
                           ("ratio", "mean_ratio")):
            vals = [getattr(r, field) for r in rs if math.isfinite(getattr(r, field))]
            if vals:
                assert cell[col] == pytest.approx(sum(vals) / len(vals), rel=1e-12)
            else:
                assert math.isnan(cell[col])


def test_parallel_run_matches_serial(small_run):
    rows, _ = small_run
    spec = parse_config(SMALL)
    par, _ = run_experiment(spec, workers=2)
    a, b = io.StringIO(), io.StringIO()
    write_results(a, rows)
    write_results(b, par)
    assert a.getvalue() == b.getvalue()


def test_worker_count(monkeypatch):
    monkeypatch.delenv("SRP_THREADS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("SRP_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("SRP_THREADS", "0")
    assert worker_count() >= 1


def test_noiseless_recovery_example():
    spec = ExperimentSpec("recovery_noiseless", dims=(10,), outlier_counts=(0,), trials=20,
                          methods=("srp2",), sigma=0.0, sigma_t=0.3, n_inliers=200, seed=21)
    _, summary = run_experiment(spec, workers=1)
    assert summary[0]["mean_rot_err"] <= 1e-5


def test_approximation_ratio_example():
    spec = ExperimentSpec("approximation_ratio", dims=(3, 7), outlier_counts=(0, 50), trials=25,
                          methods=("srp2",), sigma=0.02, sigma_t=0.3, n_inliers=200, seed=22)
    rows, summary = run_experiment(spec, workers=1)
    assert len(rows) == 100
    assert max(c["max_ratio"] for c in summary) <= math.sqrt(2)


@pytest.mark.slow
def test_semisupervised_symmetrized_beat_one_sided():
    spec = ExperimentSpec("semisupervised", dims=(30,), outlier_counts=(4,), trials=3,
                          methods=("srp2", "srpinf", "nonsym"), sigma=0.01, sigma_t=0.0,
                          n_inliers=16, n_unpaired=100, lambda_bar=0.2, seed=23)
    _, summary = run_experiment(spec, workers=1)
    err = {c["method"]: c["mean_rot_err"] for c in summary}
    assert err["srp2"] < err["nonsym"] and err["srpinf"] < err["nonsym"]


def test_semisupervised_rows_have_no_lower_bound_with_penalty():
    spec = ExperimentSpec("semisupervised", dims=(4,), outlier_counts=(1,), trials=1,
                          methods=("srp2", "procrustes"), n_inliers=5, n_unpaired=20, seed=1)
    rows, _ = run_experiment(spec, workers=1)
    assert all(math.isnan(r.lower_bound) for r in rows)


# -- command line -------------------------------------------------------------

def exact_csv(tmp_path, rng, d=3, n=10):
    R, t = random_orthogonal(d, rng), rng.standard_normal(d)
    P = rng.standard_normal((d, n))
    path = str(tmp_path / "exact.csv")
    write_point_csv(path, {"p": P, "q": R @ P + t[:, None]})
    return path


def test_cli_align_exact_fit(tmp_path, rng, capsys):
    path = exact_csv(tmp_path, rng)
    for method in ("srp2", "srpinf", "irls", "nonsym", "procrustes"):
        assert cli.main(["align", "--input", path, "--method", method]) == 0
        out = capsys.readouterr().out
        energy = float(next(l for l in out.splitlines() if l.startswith("achieved_energy")).split()[1])
        assert energy <= 1e-6
    assert cli.main(["align", "--input", path, "--method", "srp", "--p", "inf", "--no-translation"]) == 0


def test_cli_align_semisupervised(tmp_path, rng, capsys):
    d = 4
    R = random_orthogonal(d, rng)
    P, Pt = rng.standard_normal((d, 3)), rng.standard_normal((d, 30))
    path = str(tmp_path / "semi.csv")
    write_point_csv(path, {"p": P, "q": R @ P, "ptilde": Pt, "qtilde": (R @ Pt)[:, ::-1]})
    assert cli.main(["align", "--input", path, "--method", "srp2", "--lambda-bar", "0.2"]) == 0
    assert cli.main(["align", "--input", exact_csv(tmp_path, rng), "--method", "srp2",
                     "--lambda-bar", "0.2"]) == 2


def test_cli_usage_errors(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) == 1
    assert "usage" in capsys.readouterr().err
    assert cli.main([]) == 1
    assert cli.main(["align", "--input", "x.csv"]) == 1
    assert cli.main(["run", "--config", write(tmp_path / "bad.cfg", "kind = bogus\n")]) == 1
    assert cli.main(["dipcheck", "--input", "x.csv", "--inliers", "a-b"]) in (1, 2)


def test_cli_data_errors(tmp_path):
    bad = write(tmp_path / "bad.csv", "kind,dim,index,c0\np,1,0,oops\n")
    assert cli.main(["align", "--input", bad, "--method", "srp2"]) == 2
    assert cli.main(["align", "--input", str(tmp_path / "none.csv"), "--method", "srp2"]) == 2


def test_cli_unwritable_output_fails_before_solving(tmp_path, monkeypatch):
    cfg = write(tmp_path / "a.cfg", SMALL)
    monkeypatch.setattr(cli, "run_experiment", lambda *a, **k: pytest.fail("solved before I/O check"))
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["run", "--config", cfg, "--output", str(blocker / "out.csv"), "--quiet"]) == 2


def test_cli_nonconvergence_exit_code(tmp_path, rng, monkeypatch):
    from srpalign.pipelines import srp_rigid as real
    from srpalign.solvers import SolverConfig

    def stalled(pts, cfg):
        return real(pts, SolverConfig(p=cfg.p, use_translations=True, max_outer=1, eps_init=1.0))

    monkeypatch.setattr(cli, "srp_rigid", stalled)
    path = exact_csv(tmp_path, rng)
    write_point_csv(path, {"p": rng.standard_normal((3, 10)), "q": rng.standard_normal((3, 10))})
    assert cli.main(["align", "--input", path, "--method", "srp2"]) == 3


def test_cli_run_writes_results_and_summary(tmp_path):
    cfg = write(tmp_path / "a.cfg", SMALL)
    out = str(tmp_path / "sub" / "res.csv")
    assert cli.main(["run", "--config", cfg, "--output", out, "--quiet"]) == 0
    with open(out, newline="") as fh:
        assert next(csv.reader(fh)) == list(RECORD_FIELDS)
    assert len(read_rows(out)) == 48
    with open(summary_path(out), newline="") as fh:
        assert next(csv.reader(fh)) == list(SUMMARY_FIELDS)


def test_cli_run_is_byte_identical(tmp_path):
    cfg = write(tmp_path / "a.cfg", SMALL)
    blobs = []
    for name in ("one.csv", "two.csv"):
        out = str(tmp_path / name)
        assert cli.main(["run", "--config", cfg, "--output", out, "--quiet"]) == 0
        blobs.append((open(out, "rb").read(), open(summary_path(out), "rb").read()))
    assert blobs[0] == blobs[1]


def test_cli_acceptance_kind(tmp_path, monkeypatch):
    cfg = write(tmp_path / "c7.cfg", "kind = acceptance\ncriterion = 7\nseed = 1007\n")
    out = str(tmp_path / "c7.csv")
    assert cli.main(["run", "--config", cfg, "--output", out, "--quiet"]) == 0
    rows = read_rows(out)
    assert rows and all(r["passed"] == "true" for r in rows)
    from srpalign import acceptance

    def failing(number, seed=None):
        res = acceptance.CriterionResult(number, "forced")
        res.add("value", 2.0, 1.0)
        return res

    monkeypatch.setattr(acceptance, "run_criterion", failing)
    assert cli.main(["run", "--config", cfg, "--output", out, "--quiet"]) == 4


def test_cli_dipcheck(tmp_path, capsys):
    from srpalign.recovery import make_affine_dip_instance

    inst = make_affine_dip_instance(2, 3, seed=0)
    path = str(tmp_path / "dip.csv")
    write_point_csv(path, {"p": inst.pts.P, "q": inst.pts.Q})
    last = inst.inlier_set[-1]
    assert cli.main(["dipcheck", "--input", path, "--inliers", f"0-{last}", "--probes", "200"]) == 0
    out = capsys.readouterr().out
    assert "linear: holds_sampled=true" in out and "affine: holds_sampled=true" in out
    assert cli.main(["dipcheck", "--input", path, "--inliers", "99"]) == 2


def test_parse_indices():
    assert cli.parse_indices("0-3, 7,2") == [0, 1, 2, 3, 7]
    with pytest.raises(cli.UsageError):
        cli.parse_indices("5-1")


def test_module_entry_point(tmp_path, rng):
    import subprocess
    import sys

    path = exact_csv(tmp_path, rng)
    out = subprocess.run([sys.executable, "-m", "srpalign.bench", "align", "--input", path,
                          "--method", "srp2"], capture_output=True, text=True)
    assert out.returncode == 0 and "converged: true" in out.stdout
    assert os.path.exists(path)
