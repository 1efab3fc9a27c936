"""Robust point-set alignment by symmetrized convex relaxation and projection."""
from .errors import DataError, DegenerateCovarianceError, DimensionError, SrpError
from .numerics import geometric_median, project_orthogonal, random_orthogonal, svd
from .objectives import (
    INF,
    CovariancePair,
    PointPairs,
    Problem,
    RelaxedSolution,
    RigidMotion,
    covariance_energy,
    energy_nonsym,
    energy_procrustes,
    energy_relaxed_orth,
    energy_relaxed_rigid,
    energy_robust,
    energy_squared,
)
from .pipelines import (
    AlignmentResult,
    balancing_factor,
    irls_rigid,
    nonsym_rigid_pipeline,
    optimal_translation,
    procrustes,
    srp2_irls,
    srp_orth,
    srp_rigid,
    srp_semisupervised,
    srp_squared,
    weighted_procrustes,
)
from .recovery import (
    NoiseParams,
    check_affine_dip,
    check_linear_dip,
    generate_instance,
    generate_semisupervised,
    recovery_metrics,
)
from .solvers import (
    SolverConfig,
    SolveReport,
    minimize_problem,
    solve_nonsym,
    solve_relaxation_orth,
    solve_relaxation_rigid,
    solve_with_covariance,
    subgradient_oracle,
)

__version__ = "0.1.0"
