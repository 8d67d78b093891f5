"""Multi-task optimization schemes, random task grouping, trajectory
exploration metrics, and convex-case convergence verification."""

from .params import (
    DimensionMismatchError,
    NonFiniteError,
    RngStream,
    as_params,
    axpy,
    l2_norm,
)
from .objectives import (
    Minibatch,
    QuadraticSuite,
    QuadraticTask,
    TaskObjective,
    TaskSuite,
    aggregated_gradient,
    aggregated_loss,
    finite_difference_check,
    five_task_suite,
    suite_constants,
    two_task_suite,
)
from .mlp import MLPSuite, init_mlp_params, synthetic_mlp_suite
from .optimizers import OptimizerRule, OptimizerState, apply, clone_state, fresh_state
from .schemes import (
    ConstantLR,
    Grouping,
    InverseTimeLR,
    SchemeConfig,
    grouped_step,
    io_step,
    ius_step,
    make_grouping,
    run,
    sus_step,
    theorem_schedule,
)
from .tracing import RunTrace, best_validation_point, covered_distances
from .verify import (
    BoundInputs,
    ScheduleError,
    estimate_grad_bound,
    fit_rate,
    theorem_bound,
    verify_lemma1,
    verify_lemma2,
    verify_theorem,
)

__version__ = "0.1.0"
