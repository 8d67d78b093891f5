"""Run configuration: strict JSON schema with no silently-ignored keys.

Every config is validated before any compute; unknown keys and out-of-range
values are rejected with the offending field named, so two runs can only
differ when their configs visibly differ.
"""

import json

import numpy as np

from .mlp import MLPSuite, init_mlp_params, synthetic_mlp_suite
from .objectives import QuadraticSuite, QuadraticTask, five_task_suite, suite_constants, two_task_suite
from .optimizers import OptimizerRule
from .params import RngStream
from .schemes import ConstantLR, InverseTimeLR, SchemeConfig, theorem_schedule

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Invalid run configuration; the message names the field."""


def _require_keys(d: dict, path: str, allowed: set, required: set = frozenset()):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ConfigError(f"{path}: missing required keys {sorted(missing)}")


def _get_int(d, key, path, default=None, minimum=None):
    if key not in d:
        if default is None:
            raise ConfigError(f"{path}.{key}: required")
        return default
    v = d[key]
    if not isinstance(v, int) or isinstance(v, bool):
        raise ConfigError(f"{path}.{key}: expected integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}.{key}: must be >= {minimum}, got {v}")
    return v


def _get_number(d, key, path, default=None, minimum=None):
    if key not in d:
        if default is None:
            raise ConfigError(f"{path}.{key}: required")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: expected number, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}.{key}: must be >= {minimum}, got {v}")
    return float(v)


_PRESETS = {"two_task": two_task_suite, "five_task": five_task_suite}


def _build_objective(obj: dict):
    _require_keys(
        obj,
        "objective",
        {
            "family",
            "preset",
            "tasks",
            "n_tasks",
            "input_dim",
            "hidden",
            "batch_size",
            "dataset_seed",
            "target_terms",
            "val_size",
        },
        {"family"},
    )
    family = obj["family"]
    if family == "quadratic":
        if ("preset" in obj) == ("tasks" in obj):
            raise ConfigError("objective: quadratic family needs exactly one of 'preset' or 'tasks'")
        for key in ("n_tasks", "input_dim", "hidden", "batch_size", "dataset_seed", "target_terms", "val_size"):
            if key in obj:
                raise ConfigError(f"objective.{key}: not valid for the quadratic family")
        if "preset" in obj:
            if obj["preset"] not in _PRESETS:
                raise ConfigError(
                    f"objective.preset: unknown preset {obj['preset']!r}, expected one of {sorted(_PRESETS)}"
                )
            return _PRESETS[obj["preset"]]()
        tasks = obj["tasks"]
        if not isinstance(tasks, list) or not tasks:
            raise ConfigError("objective.tasks: expected a nonempty list")
        built = []
        for i, entry in enumerate(tasks):
            _require_keys(entry, f"objective.tasks[{i}]", {"matrix", "center", "noise_sigma"}, {"matrix", "center"})
            try:
                built.append(
                    QuadraticTask(i, entry["matrix"], entry["center"], float(entry.get("noise_sigma", 0.0)))
                )
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"objective.tasks[{i}]: {exc}") from exc
        return QuadraticSuite(built)
    if family == "mlp":
        for key in ("preset", "tasks"):
            if key in obj:
                raise ConfigError(f"objective.{key}: not valid for the mlp family")
        hidden = obj.get("hidden", [32, 32])
        if not isinstance(hidden, list) or not hidden or not all(isinstance(h, int) and h > 0 for h in hidden):
            raise ConfigError("objective.hidden: expected a nonempty list of positive integers")
        return synthetic_mlp_suite(
            n_tasks=_get_int(obj, "n_tasks", "objective", default=4, minimum=1),
            input_dim=_get_int(obj, "input_dim", "objective", default=2, minimum=1),
            hidden=tuple(hidden),
            batch_size=_get_int(obj, "batch_size", "objective", default=32, minimum=1),
            dataset_seed=_get_int(obj, "dataset_seed", "objective", default=7),
            target_terms=_get_int(obj, "target_terms", "objective", default=3, minimum=1),
            val_size=_get_int(obj, "val_size", "objective", default=128, minimum=1),
        )
    raise ConfigError(f"objective.family: unknown family {family!r}, expected 'quadratic' or 'mlp'")


def _build_optimizer(opt: dict, path: str) -> OptimizerRule:
    _require_keys(opt, path, {"kind", "beta", "beta1", "beta2", "eps"}, {"kind"})
    kind = opt["kind"]
    try:
        if kind == "sgd":
            _require_keys(opt, path, {"kind"})
            return OptimizerRule.sgd()
        if kind == "momentum":
            _require_keys(opt, path, {"kind", "beta"})
            return OptimizerRule.momentum(_get_number(opt, "beta", path, default=0.9))
        if kind == "adam":
            _require_keys(opt, path, {"kind", "beta1", "beta2", "eps"})
            return OptimizerRule.adam(
                _get_number(opt, "beta1", path, default=0.9),
                _get_number(opt, "beta2", path, default=0.999),
                _get_number(opt, "eps", path, default=1e-8),
            )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}.kind: unknown optimizer {kind!r}")


def _build_lr(lr: dict, path: str, suite):
    _require_keys(lr, path, {"kind", "eta", "mu", "offset"}, {"kind"})
    kind = lr["kind"]
    if kind == "constant":
        _require_keys(lr, path, {"kind", "eta"}, {"kind", "eta"})
        return ConstantLR(eta=_get_number(lr, "eta", path, minimum=0.0))
    if kind == "inverse_time":
        _require_keys(lr, path, {"kind", "mu", "offset"})
        if ("mu" in lr) != ("offset" in lr):
            raise ConfigError(f"{path}: inverse_time needs both 'mu' and 'offset', or neither")
        if "mu" in lr:
            return InverseTimeLR(mu=_get_number(lr, "mu", path), offset=_get_number(lr, "offset", path))
        if not isinstance(suite, QuadraticSuite):
            raise ConfigError(f"{path}: inverse_time without mu/offset needs a quadratic objective")
        consts = suite_constants(suite)
        return theorem_schedule(consts.smoothness, consts.strong_convexity)
    raise ConfigError(f"{path}.kind: unknown schedule {kind!r}")


def _build_scheme(sch: dict, path: str, suite) -> SchemeConfig:
    _require_keys(
        sch,
        path,
        {"kind", "n_groups", "task_order", "optimizer", "lr", "fresh_minibatch_per_task"},
        {"kind", "optimizer", "lr"},
    )
    kind = sch["kind"]
    if kind not in ("sus", "ius", "io"):
        raise ConfigError(f"{path}.kind: unknown scheme {kind!r}, expected 'sus', 'ius' or 'io'")
    n_groups = sch.get("n_groups")
    if n_groups is not None:
        if not isinstance(n_groups, int) or isinstance(n_groups, bool):
            raise ConfigError(f"{path}.n_groups: expected integer or null")
        if not 1 <= n_groups <= suite.n_tasks:
            raise ConfigError(
                f"{path}.n_groups: must be between 1 and {suite.n_tasks} (number of tasks), got {n_groups}"
            )
    task_order = sch.get("task_order", "round_robin")
    fresh = sch.get("fresh_minibatch_per_task", False)
    if not isinstance(fresh, bool):
        raise ConfigError(f"{path}.fresh_minibatch_per_task: expected boolean")
    try:
        return SchemeConfig(
            scheme=kind,
            optimizer=_build_optimizer(sch["optimizer"], f"{path}.optimizer"),
            lr=_build_lr(sch["lr"], f"{path}.lr", suite),
            n_groups=n_groups,
            task_order=task_order,
            fresh_minibatch_per_task=fresh,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


_VERIFY_DEFAULTS = {"T_list": [10, 100, 1000], "replicates": 200, "lemma_steps": 50, "lemma_replicates": 500}


class RunConfig:
    """Validated configuration plus the objects built from it."""

    def __init__(self, raw: dict):
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be an object")
        _require_keys(
            raw,
            "config",
            {
                "objective",
                "scheme",
                "schemes",
                "steps",
                "seeds",
                "validation_every",
                "snapshot_every",
                "w0",
                "verify",
            },
            {"objective"},
        )
        self.raw = raw
        self.suite = _build_objective(raw["objective"])

        if ("scheme" in raw) and ("schemes" in raw):
            raise ConfigError("config: give either 'scheme' or 'schemes', not both")
        if "scheme" in raw:
            self.schemes = [_build_scheme(raw["scheme"], "scheme", self.suite)]
        elif "schemes" in raw:
            entries = raw["schemes"]
            if not isinstance(entries, list) or not entries:
                raise ConfigError("schemes: expected a nonempty list")
            self.schemes = [
                _build_scheme(s, f"schemes[{i}]", self.suite) for i, s in enumerate(entries)
            ]
        else:
            self.schemes = []

        self.steps = _get_int(raw, "steps", "config", default=1, minimum=1)
        seeds = raw.get("seeds", [0])
        if not isinstance(seeds, list) or not seeds or not all(
            isinstance(s, int) and not isinstance(s, bool) for s in seeds
        ):
            raise ConfigError("config.seeds: expected a nonempty list of integers")
        self.seeds = list(seeds)
        self.validation_every = _get_int(raw, "validation_every", "config", default=1, minimum=1)
        self.snapshot_every = _get_int(raw, "snapshot_every", "config", default=0, minimum=0)

        self.w0 = None
        if "w0" in raw:
            if isinstance(self.suite, MLPSuite):
                raise ConfigError("config.w0: mlp objectives are initialized from the run seed")
            w0 = raw["w0"]
            if not isinstance(w0, list) or len(w0) != self.suite.dim:
                raise ConfigError(f"config.w0: expected a list of {self.suite.dim} numbers")
            self.w0 = np.asarray(w0, dtype=np.float64)

        verify = raw.get("verify", {})
        _require_keys(verify, "verify", set(_VERIFY_DEFAULTS))
        self.verify = dict(_VERIFY_DEFAULTS)
        for key in verify:
            self.verify[key] = verify[key]
        t_list = self.verify["T_list"]
        if not isinstance(t_list, list) or not t_list or not all(
            isinstance(t, int) and t >= 1 for t in t_list
        ):
            raise ConfigError("verify.T_list: expected a nonempty list of integers >= 1")
        for key in ("replicates", "lemma_steps", "lemma_replicates"):
            self.verify[key] = _get_int(self.verify, key, "verify", minimum=2)

    def initial_point(self, seed: int) -> np.ndarray:
        if isinstance(self.suite, MLPSuite):
            return init_mlp_params(self.suite, RngStream(seed, "init").gen)
        if self.w0 is not None:
            return self.w0.copy()
        return np.zeros(self.suite.dim)


def parse_config(raw: dict) -> RunConfig:
    return RunConfig(raw)


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    return RunConfig(raw)
