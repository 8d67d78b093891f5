"""Update schemes over a task suite: one shared aggregated step per minibatch,
alternating per-task steps through a shared optimizer, alternating steps with
one optimizer per task, and alternating steps over random balanced task
groups.

Grouping with one group reproduces the shared scheme exactly, and grouping
with one group per task reproduces the ungrouped alternating schemes exactly
(same seed, bit-identical trajectories). Groups are labeled canonically by
their smallest member so those equivalences hold at the bit level.
"""

from dataclasses import dataclass

import numpy as np

from . import optimizers
from .params import NonFiniteError, RngStream, as_params, axpy, l2_norm
from .tracing import RunTrace

__all__ = [
    "ConstantLR",
    "InverseTimeLR",
    "theorem_schedule",
    "SchemeConfig",
    "Grouping",
    "make_grouping",
    "sus_step",
    "ius_step",
    "io_step",
    "grouped_step",
    "run",
]

_SCHEMES = ("sus", "ius", "io")
_ORDER_POLICIES = ("round_robin", "fixed", "uniform_random")


@dataclass(frozen=True)
class ConstantLR:
    eta: float

    def at(self, t: int) -> float:
        return self.eta

    def describe(self) -> dict:
        return {"kind": "constant", "eta": self.eta}


@dataclass(frozen=True)
class InverseTimeLR:
    """eta_t = 2 / (mu * (offset + t)), the decaying schedule of the
    convex-case convergence bound; t counts multi-task steps from 1."""

    mu: float
    offset: float

    def at(self, t: int) -> float:
        return 2.0 / (self.mu * (self.offset + t))

    def describe(self) -> dict:
        return {"kind": "inverse_time", "mu": self.mu, "offset": self.offset}


def theorem_schedule(smoothness: float, strong_convexity: float) -> InverseTimeLR:
    """Smallest admissible offset, 2L/mu - 1, so the first step size is 1/L."""
    return InverseTimeLR(mu=strong_convexity, offset=2.0 * smoothness / strong_convexity - 1.0)


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str
    optimizer: optimizers.OptimizerRule
    lr: object
    n_groups: int | None = None
    task_order: str = "round_robin"
    fresh_minibatch_per_task: bool = False

    def __post_init__(self):
        if self.scheme not in _SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, expected one of {_SCHEMES}")
        if self.task_order not in _ORDER_POLICIES:
            raise ValueError(
                f"unknown task_order {self.task_order!r}, expected one of {_ORDER_POLICIES}"
            )
        if self.scheme == "sus" and self.n_groups not in (None, 1):
            raise ValueError("scheme 'sus' updates all tasks at once; n_groups must be 1 or omitted")

    def describe(self) -> dict:
        return {
            "scheme": self.scheme,
            "n_groups": self.n_groups,
            "task_order": self.task_order,
            "optimizer": {
                "kind": self.optimizer.kind,
                "beta": self.optimizer.beta,
                "beta1": self.optimizer.beta1,
                "beta2": self.optimizer.beta2,
                "eps": self.optimizer.eps,
            },
            "lr": self.lr.describe(),
            "fresh_minibatch_per_task": self.fresh_minibatch_per_task,
        }


@dataclass(frozen=True)
class Grouping:
    """Balanced partition of task indices; group l holds groups[l]."""

    groups: tuple

    @property
    def n_groups(self) -> int:
        return len(self.groups)


def make_grouping(n_tasks: int, n_groups: int, gen: np.random.Generator) -> Grouping:
    """Uniformly random balanced partition; sizes differ by at most one.

    Groups are relabeled by their smallest member, which makes singleton
    groupings coincide with task indices.
    """
    if not 1 <= n_groups <= n_tasks:
        raise ValueError(f"n_groups must be in [1, {n_tasks}], got {n_groups}")
    perm = gen.permutation(n_tasks)
    buckets = [sorted(int(x) for x in perm[i::n_groups]) for i in range(n_groups)]
    buckets.sort(key=lambda b: b[0])
    return Grouping(groups=tuple(tuple(b) for b in buckets))


def _unit_update(w, suite, unit, rule, state, eta, xi):
    """One individual update: descend the summed gradient of `unit`'s tasks,
    restricted to the coordinates those tasks may touch."""
    g = np.zeros_like(w)
    for k in unit:
        g += suite.tasks[k].gradient(w, xi)
    direction = optimizers.apply(rule, state, g)
    mask = suite.unit_mask(unit)
    if mask is not None:
        direction = np.where(mask, direction, 0.0)
    return axpy(w, direction, -eta)


def sus_step(w, suite, rule, state, eta, xi):
    """Shared update: one summed gradient, one optimizer application."""
    return _unit_update(w, suite, tuple(range(suite.n_tasks)), rule, state, eta, xi)


def ius_step(w, suite, rule, state, eta, xi, order):
    """Alternating per-task updates through one shared optimizer state; each
    gradient is evaluated at the freshly updated parameters."""
    for k in order:
        w = _unit_update(w, suite, (int(k),), rule, state, eta, xi)
    return w


def io_step(w, suite, rule, states, eta, xi, order):
    """Alternating per-task updates, each through its own optimizer state, so
    no task's moving average ever sees another task's gradients."""
    if len(states) != suite.n_tasks:
        raise ValueError(f"need one state per task ({suite.n_tasks}), got {len(states)}")
    for k in order:
        w = _unit_update(w, suite, (int(k),), rule, states[int(k)], eta, xi)
    return w


def grouped_step(w, suite, grouping, rule, states, eta, xi, order):
    """Alternating per-group updates; each group descends the sum of its
    members' gradients. One state means a shared optimizer, one state per
    group means individual optimizers."""
    if len(states) not in (1, grouping.n_groups):
        raise ValueError(
            f"need 1 or {grouping.n_groups} optimizer states, got {len(states)}"
        )
    for l in order:
        state = states[0] if len(states) == 1 else states[int(l)]
        w = _unit_update(w, suite, grouping.groups[int(l)], rule, state, eta, xi)
    return w


def _sample_order(policy: str, n_units: int, gen: np.random.Generator) -> np.ndarray:
    if policy == "round_robin":
        return gen.permutation(n_units)
    if policy == "fixed":
        return np.arange(n_units)
    return np.array([gen.integers(n_units)])  # uniform_random: one unit per step


def _materialize_units(config: SchemeConfig, suite, seed: int):
    n = suite.n_tasks
    if config.n_groups is not None and not 1 <= config.n_groups <= n:
        raise ValueError(f"n_groups must be in [1, {n}], got {config.n_groups}")
    if config.scheme == "sus":
        units = [tuple(range(n))]
    elif config.n_groups is None or config.n_groups == n:
        units = [(k,) for k in range(n)]
    else:
        grouping = make_grouping(n, config.n_groups, RngStream(seed, "grouping").gen)
        units = list(grouping.groups)
    if config.scheme == "io":
        states = [optimizers.fresh_state(config.optimizer, suite.dim) for _ in units]
    else:
        states = [optimizers.fresh_state(config.optimizer, suite.dim)]
    return units, states


def run(
    config: SchemeConfig,
    suite,
    w0,
    n_steps: int,
    seed: int,
    validation_every: int = 1,
    snapshot_every: int = 0,
    extra_meta: dict | None = None,
) -> RunTrace:
    """Execute n_steps multi-task steps and record the trace.

    One minibatch is sampled per multi-task step and shared by every update
    within it (unless fresh_minibatch_per_task). Unit visitation order is
    re-sampled per step from a dedicated stream. Distances are accumulated per
    individual update over the shared parameter subspace. A non-finite loss or
    update aborts the run and records the reason.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    w = as_params(w0).copy()
    if w.size != suite.dim:
        raise ValueError(f"w0 dimension {w.size} != suite dimension {suite.dim}")
    units, states = _materialize_units(config, suite, seed)
    labels = ["+".join(str(k) for k in unit) for unit in units]
    rule = config.optimizer
    shared_mask = suite.shared_mask
    data_gen = RngStream(seed, "data").gen
    order_gen = RngStream(seed, "task-order").gen

    meta = {
        "seed": seed,
        "n_steps": n_steps,
        "n_tasks": suite.n_tasks,
        "n_units": len(units),
        "validation_every": validation_every,
        "snapshot_every": snapshot_every,
        "displacement_granularity": "per_individual_update",
    }
    meta.update(config.describe())
    if extra_meta:
        meta.update(extra_meta)
    trace = RunTrace(meta=meta)
    trace.w0 = w.copy()
    if snapshot_every:
        trace.snapshots.append((0, 0, w.copy()))

    def record_validation(step, current_w):
        with np.errstate(over="ignore", invalid="ignore"):
            task_losses = suite.validation_task_losses(current_w)
        if task_losses is None:
            return
        val = float(np.mean(task_losses))
        if not np.isfinite(val):
            raise NonFiniteError("validation loss is non-finite")
        trace.add_validation(step, val, task_losses)
        if trace.best_val_loss is None or val < trace.best_val_loss:
            trace.best_val_loss = val
            trace.best_val_step = step
            trace.w_best = current_w.copy()

    try:
        record_validation(0, w)
    except NonFiniteError as exc:
        trace.aborted = True
        trace.abort_reason = f"step 0: {exc}"
        trace.w_final = w.copy()
        trace.w_best = w.copy()
        trace.best_val_step = 0
        trace.final_states = [s.to_dict() for s in states]
        return trace

    for t in range(1, n_steps + 1):
        eta = config.lr.at(t)
        xi = None
        if not config.fresh_minibatch_per_task:
            xi = suite.sample_minibatch(data_gen)
        order = _sample_order(config.task_order, len(units), order_gen)
        try:
            for sub_i, u in enumerate(order):
                u = int(u)
                unit = units[u]
                state = states[0] if len(states) == 1 else states[u]
                if config.fresh_minibatch_per_task:
                    xi = suite.sample_minibatch(data_gen)
                with np.errstate(over="ignore", invalid="ignore"):
                    loss = sum(suite.tasks[k].value(w, xi) for k in unit)
                    if not np.isfinite(loss):
                        raise NonFiniteError(f"training loss for unit {labels[u]} is non-finite")
                    w_new = _unit_update(w, suite, unit, rule, state, eta, xi)
                step_vec = w_new - w
                if shared_mask is not None:
                    step_vec = step_vec[shared_mask]
                trace.add_row(t, labels[u], float(loss), l2_norm(step_vec))
                w = w_new
                if snapshot_every == 1:
                    trace.snapshots.append((t, sub_i, w.copy()))
        except NonFiniteError as exc:
            trace.aborted = True
            trace.abort_reason = f"step {t}: {exc}"
            break
        if validation_every and t % validation_every == 0:
            try:
                record_validation(t, w)
            except NonFiniteError as exc:
                trace.aborted = True
                trace.abort_reason = f"step {t}: {exc}"
                break
        if snapshot_every > 1 and t % snapshot_every == 0:
            trace.snapshots.append((t, len(order) - 1, w.copy()))

    trace.w_final = w.copy()
    if trace.w_best is None:
        # no validation support: measure at the endpoint
        trace.w_best = w.copy()
        trace.best_val_step = trace.n_steps_executed
    trace.final_states = [s.to_dict() for s in states]
    return trace
