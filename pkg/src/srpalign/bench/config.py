"""Experiment configuration: flat ``key = value`` files.

Lines starting with ``#`` and blank lines are ignored. Lists are
comma-separated. Unknown or repeated keys are errors.
"""
from dataclasses import dataclass
from typing import Tuple

KINDS = ("approximation_ratio", "recovery_noiseless", "recovery_noisy", "semisupervised",
         "acceptance")
METHODS = ("procrustes", "irls", "irls_srp2_init", "srp1", "srp2", "srpinf", "nonsym",
           "srp_squared", "lower_bound_2", "lower_bound_inf", "ground_truth")
N_CRITERIA = 12


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentSpec:
    """One benchmark sweep over ``dims x outlier_counts x trials``.

    ``sigma``, ``sigma_t`` and ``n_inliers`` form the generator template.
    For the semi-supervised kind ``n_inliers`` is the number of labelled
    pairs and ``n_unpaired`` the pool size. The acceptance kind runs the
    numbered ``criterion`` check instead of a sweep. ``timing`` enables the
    wall-clock column, which is otherwise left empty so results are
    byte-reproducible.
    """

    kind: str
    dims: Tuple[int, ...] = (3,)
    outlier_counts: Tuple[int, ...] = (0,)
    trials: int = 50
    methods: Tuple[str, ...] = ("srp2",)
    sigma: float = 0.0
    sigma_t: float = 0.3
    n_inliers: int = 200
    n_unpaired: int = 100
    lambda_bar: float = 0.2
    seed: int = 0
    output_path: str = "results.csv"
    experiment_id: str = ""
    timing: bool = False
    criterion: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {', '.join(KINDS)}; got {self.kind!r}")
        if not self.experiment_id:
            object.__setattr__(self, "experiment_id", self.kind)
        if self.kind == "acceptance":
            if not 1 <= self.criterion <= N_CRITERIA:
                raise ConfigError(f"criterion must be in 1..{N_CRITERIA}")
            return
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method tags: {', '.join(bad)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must not repeat")
        if not self.dims or any(d < 1 for d in self.dims):
            raise ConfigError("dims must be positive")
        if not self.outlier_counts or any(k < 0 for k in self.outlier_counts):
            raise ConfigError("outlier counts must be nonnegative")
        if self.sigma < 0 or self.sigma_t < 0 or self.lambda_bar < 0:
            raise ConfigError("sigma, sigma_t and lambda_bar must be nonnegative")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.kind == "semisupervised":
            if max(self.outlier_counts) > self.n_unpaired:
                raise ConfigError("outlier counts cannot exceed n_unpaired")
            if self.n_inliers + min(self.outlier_counts) < 1:
                raise ConfigError("need at least one labelled pair")
        elif self.n_inliers + min(self.outlier_counts) < 1:
            raise ConfigError("need at least one point pair")


def _as_bool(text):
    v = text.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _as_int(text):
    return int(text.strip())


def _int_list(text):
    return tuple(_as_int(x) for x in text.split(",") if x.strip())


def _str_list(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


_PARSERS = {
    "kind": str.strip,
    "dims": _int_list,
    "outlier_counts": _int_list,
    "trials": _as_int,
    "methods": _str_list,
    "sigma": float,
    "sigma_t": float,
    "n_inliers": _as_int,
    "n_unpaired": _as_int,
    "lambda_bar": float,
    "seed": _as_int,
    "output_path": str.strip,
    "experiment_id": str.strip,
    "timing": _as_bool,
    "criterion": _as_int,
}


def parse_config(text, overrides=None):
    """Parse config text into an :class:`ExperimentSpec`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: key {key!r} given twice")
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    values.update(overrides or {})
    if "kind" not in values:
        raise ConfigError("missing required key 'kind'")
    return ExperimentSpec(**values)


def load_config(path, overrides=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), overrides)
