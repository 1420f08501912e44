"""Deterministic multi-worker distributed-SGD simulator.

Implements periodic model averaging (local SGD), an eager adaptive baseline,
and a lazily synchronized adaptive rule whose squared-gradient denominators
are averaged only at sync rounds, with exact communication accounting and
numerical verification of the method's convergence bound.
"""

from .analysis import (
    BoundInputs,
    avg_sq_grad_norm,
    bound_report,
    f_gap,
    lemma1_check,
    theorem_bound,
    theorem_bound_terms,
)
from .cluster import (
    CommLedger,
    RunResult,
    SyncSchedule,
    Trace,
    WorkerState,
    comm_summary,
    read_trace,
    run,
    step_rng,
    synchronize,
)
from .config import RunConfig, emit_config, load_config, parse_config
from .errors import ConfigError, InvariantViolation
from .optimizers import (
    AccumulatorState,
    StepParams,
    adaalter_local_step,
    adagrad_step,
    local_sgd_step,
    local_step_counter,
    scale_lr,
    warmup_lr,
)
from .problems import Problem, Shard, build_problem, finite_diff_gradient, partition_non_iid

__version__ = "0.1.0"

__all__ = [
    "AccumulatorState",
    "BoundInputs",
    "CommLedger",
    "ConfigError",
    "InvariantViolation",
    "Problem",
    "RunConfig",
    "RunResult",
    "Shard",
    "StepParams",
    "SyncSchedule",
    "Trace",
    "WorkerState",
    "adaalter_local_step",
    "adagrad_step",
    "avg_sq_grad_norm",
    "bound_report",
    "build_problem",
    "comm_summary",
    "emit_config",
    "f_gap",
    "finite_diff_gradient",
    "lemma1_check",
    "load_config",
    "local_sgd_step",
    "local_step_counter",
    "parse_config",
    "partition_non_iid",
    "read_trace",
    "run",
    "scale_lr",
    "step_rng",
    "synchronize",
    "theorem_bound",
    "theorem_bound_terms",
    "warmup_lr",
]
