"""Deterministic simulator and verification toolkit for local gradient
descent with periodic model averaging on heterogeneous data.

Workflow: build an :class:`ObjectiveSuite` (random, synthetic, or from a
LIBSVM file via :mod:`localgd.libsvm_io`), presolve its minimizer with
:func:`solve_reference`, simulate with :func:`run_local_gd`, then feed the
instrumented trajectory to the ``check_*`` operations or plan budgets with
:func:`plan_communication`.  The ``localgd`` console script fronts the
same operations.
"""

from .errors import (
    ConvergenceError,
    DivergenceError,
    LocalGDError,
    ParseError,
    PreconditionError,
)
from .objectives import (
    LogisticL2,
    ObjectiveSuite,
    QuadraticShift,
    ReferenceSolution,
    bregman,
    compute_sigma2,
    estimate_smoothness,
    eval_grad,
    eval_value,
    make_suite,
    solve_reference,
)
from .libsvm_io import (
    PartitionSpec,
    SparseDataset,
    load_libsvm,
    parse_libsvm,
    partition_by_index,
    serialize_libsvm,
    shards_to_suite,
)
from .engine import (
    SyncSchedule,
    TrajectoryRecord,
    make_uniform_schedule,
    run_gd,
    run_local_gd,
)
from .theory import (
    CheckReport,
    PlannerResult,
    check_lemma1,
    check_lemma2,
    check_lemma3,
    check_lemma4,
    check_theorem1,
    corollary_bound,
    corollary_comm_steps,
    discretize_plan,
    make_sweep_instance,
    plan_communication,
    random_suite,
    run_instance_checks,
    standard_checks,
    theorem1_bound,
)
from .cli import (
    CostModel,
    ExperimentConfig,
    main,
    resolve_gamma,
    synthetic_logistic_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DivergenceError",
    "LocalGDError",
    "ParseError",
    "PreconditionError",
    "LogisticL2",
    "ObjectiveSuite",
    "QuadraticShift",
    "ReferenceSolution",
    "bregman",
    "compute_sigma2",
    "estimate_smoothness",
    "eval_grad",
    "eval_value",
    "make_suite",
    "solve_reference",
    "PartitionSpec",
    "SparseDataset",
    "load_libsvm",
    "parse_libsvm",
    "partition_by_index",
    "serialize_libsvm",
    "shards_to_suite",
    "SyncSchedule",
    "TrajectoryRecord",
    "make_uniform_schedule",
    "run_gd",
    "run_local_gd",
    "CheckReport",
    "PlannerResult",
    "check_lemma1",
    "check_lemma2",
    "check_lemma3",
    "check_lemma4",
    "check_theorem1",
    "corollary_bound",
    "corollary_comm_steps",
    "discretize_plan",
    "make_sweep_instance",
    "plan_communication",
    "random_suite",
    "run_instance_checks",
    "standard_checks",
    "theorem1_bound",
    "CostModel",
    "ExperimentConfig",
    "main",
    "resolve_gamma",
    "synthetic_logistic_dataset",
    "__version__",
]
