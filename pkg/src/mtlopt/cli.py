"""Command-line entry point: single runs, learning-rate sweeps, and
convergence verification, with reproducible seeds and structured outputs.

Exit codes: 0 success, 1 config error, 2 numerical abort, 3 verification
failure beyond statistical slack.
"""

import argparse
import concurrent.futures
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import schemes, verify as verify_mod
from .config import ConfigError, RunConfig, load_config
from .objectives import QuadraticSuite
from .tracing import covered_distances, write_trace_csv, write_trace_meta

RATE_SLOPE_RANGE = (-1.3, -0.7)

SWEEP_COLUMNS = ["eta", "scheme", "groups", "seed", "best_val_loss", "total_dist", "shortest_dist", "ratio"]


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "std": std}


def _execute(cfg: RunConfig, scheme_cfg, seed: int, eta=None):
    """One run; returns (trace, metrics dict)."""
    if eta is not None:
        scheme_cfg = replace(scheme_cfg, lr=schemes.ConstantLR(eta=eta))
    trace = schemes.run(
        scheme_cfg,
        cfg.suite,
        cfg.initial_point(seed),
        cfg.steps,
        seed,
        validation_every=cfg.validation_every,
        snapshot_every=cfg.snapshot_every,
        extra_meta={"config": cfg.raw},  # outputs must suffice to re-run
    )
    dist = covered_distances(trace, shared_mask=cfg.suite.shared_mask)
    metrics = {
        "seed": seed,
        "best_val_loss": trace.best_val_loss,
        "best_val_step": trace.best_val_step,
        "total": dist.total,
        "shortest": dist.shortest,
        "ratio": dist.ratio,
        "degenerate": dist.degenerate,
        "aborted": trace.aborted,
    }
    if trace.val_task_losses:
        metrics["per_task_best_val"] = np.stack(trace.val_task_losses).min(axis=0).tolist()
    return trace, metrics


def cmd_run(cfg: RunConfig, out_dir: Path, seed_offset: int = 0) -> int:
    if len(cfg.schemes) != 1:
        raise ConfigError("config: 'run' needs exactly one scheme")
    out_dir.mkdir(parents=True, exist_ok=True)
    per_seed = []
    aborted = False
    for seed in (s + seed_offset for s in cfg.seeds):
        trace, metrics = _execute(cfg, cfg.schemes[0], seed)
        write_trace_csv(trace, out_dir / f"trace_seed{seed}.csv")
        write_trace_meta(trace, out_dir / f"trace_seed{seed}.meta.json")
        per_seed.append(metrics)
        aborted = aborted or trace.aborted
        if trace.aborted:
            print(f"seed {seed}: aborted ({trace.abort_reason})", file=sys.stderr)
    summary = {
        "config": cfg.raw,
        "seed_offset": seed_offset,
        "per_seed": per_seed,
        "best_val_loss": _mean_std([m["best_val_loss"] for m in per_seed]),
        "total_dist": _mean_std([m["total"] for m in per_seed]),
        "shortest_dist": _mean_std([m["shortest"] for m in per_seed]),
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, sort_keys=True, indent=2)
        f.write("\n")
    print(f"wrote {len(per_seed)} trace(s) and summary.json to {out_dir}")
    return 2 if aborted else 0


def _sweep_cell(raw_config: dict, scheme_index: int, eta: float, seed: int) -> dict:
    """Worker for one sweep cell; rebuilt from plain data so it can cross a
    process boundary. Results depend only on (config, eta, seed)."""
    cfg = RunConfig(raw_config)
    trace, metrics = _execute(cfg, cfg.schemes[scheme_index], seed, eta=eta)
    return {
        "scheme_index": scheme_index,
        "eta": eta,
        "scheme": cfg.schemes[scheme_index].scheme,
        "groups": trace.meta["n_units"],
        "seed": seed,
        "best_val_loss": metrics["best_val_loss"],
        "total_dist": metrics["total"],
        "shortest_dist": metrics["shortest"],
        "ratio": metrics["ratio"],
        "per_task_best_val": metrics.get("per_task_best_val"),
        "aborted": metrics["aborted"],
    }


def _write_sweep_csv(path: Path, header_meta: dict, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# config: {json.dumps(header_meta, sort_keys=True)}\n")
        writer = csv.writer(f)
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in SWEEP_COLUMNS])


def _ordinal_ranks(values):
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    ranks[order] = np.arange(1, len(values) + 1)
    return ranks


def _sweep_summary(cfg: RunConfig, rows) -> dict:
    entries = []
    for i, scheme_cfg in enumerate(cfg.schemes):
        mine = [r for r in rows if r["scheme_index"] == i]
        etas = sorted({r["eta"] for r in mine})
        by_eta = {
            eta: _mean_std([r["best_val_loss"] for r in mine if r["eta"] == eta])["mean"]
            for eta in etas
        }
        best_eta = min(etas, key=lambda e: by_eta[e])
        best = [r for r in mine if r["eta"] == best_eta]
        entry = {
            "scheme": scheme_cfg.scheme,
            "groups": best[0]["groups"],
            "best_eta": best_eta,
            "best_val_loss": _mean_std([r["best_val_loss"] for r in best]),
            "total_dist": _mean_std([r["total_dist"] for r in best]),
            "shortest_dist": _mean_std([r["shortest_dist"] for r in best]),
            "ratio": _mean_std([r["ratio"] for r in best]),
        }
        if best[0].get("per_task_best_val") is not None:
            entry["per_task_best_val"] = np.mean(
                [r["per_task_best_val"] for r in best], axis=0
            ).tolist()
        entries.append(entry)
    # average rank over loss metrics (lower is better), mirroring summary tables
    if len(entries) > 1:
        metric_vectors = [[e["best_val_loss"]["mean"] for e in entries]]
        if all("per_task_best_val" in e for e in entries):
            n_tasks = len(entries[0]["per_task_best_val"])
            for k in range(n_tasks):
                metric_vectors.append([e["per_task_best_val"][k] for e in entries])
        rank_sum = np.zeros(len(entries))
        for vec in metric_vectors:
            rank_sum += _ordinal_ranks(vec)
        for e, r in zip(entries, rank_sum / len(metric_vectors)):
            e["avg_rank"] = float(r)
    return {"schemes": entries}


def cmd_sweep(cfg: RunConfig, etas, out_dir: Path, seed_offset: int = 0, workers: int = 1) -> int:
    if not cfg.schemes:
        raise ConfigError("config: 'sweep' needs 'scheme' or 'schemes'")
    if not etas:
        raise ConfigError("--etas: grid must be nonempty")
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = [
        (i, eta, seed + seed_offset)
        for i in range(len(cfg.schemes))
        for eta in etas
        for seed in cfg.seeds
    ]
    header_meta = {"config": cfg.raw, "etas": etas, "seed_offset": seed_offset}
    csv_path = out_dir / "sweep.csv"

    rows = []
    if workers <= 1:
        with open(csv_path, "w", newline="", encoding="utf-8") as f:
            f.write(f"# config: {json.dumps(header_meta, sort_keys=True)}\n")
            writer = csv.writer(f)
            writer.writerow(SWEEP_COLUMNS)
            for i, eta, seed in cells:
                row = _sweep_cell(cfg.raw, i, eta, seed)
                rows.append(row)
                writer.writerow(
                    [repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in SWEEP_COLUMNS]
                )
                f.flush()  # partial results survive interruption
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_sweep_cell, cfg.raw, i, eta, seed): (i, eta, seed) for i, eta, seed in cells}
            for fut in concurrent.futures.as_completed(futures):
                rows.append(fut.result())
    # deterministic final order regardless of completion order
    rows.sort(key=lambda r: (r["scheme_index"], r["eta"], r["seed"]))
    _write_sweep_csv(csv_path, header_meta, rows)

    summary = _sweep_summary(cfg, rows)
    summary["config"] = cfg.raw
    summary["etas"] = etas
    summary["seed_offset"] = seed_offset
    with open(out_dir / "sweep_summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, sort_keys=True, indent=2)
        f.write("\n")
    print(f"wrote {len(rows)} sweep rows to {csv_path}")
    if any(r["aborted"] for r in rows):
        print("some cells aborted on non-finite losses", file=sys.stderr)
        return 2
    return 0


def cmd_verify(cfg: RunConfig, out_dir: Path, seed_offset: int = 0) -> int:
    if not isinstance(cfg.suite, QuadraticSuite):
        raise ConfigError("objective.family: verification requires the quadratic family")
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = cfg.seeds[0] + seed_offset
    w0 = cfg.initial_point(seed)
    v = cfg.verify

    theorem = verify_mod.verify_theorem(cfg.suite, v["T_list"], v["replicates"], seed, w0)
    lemma1 = verify_mod.verify_lemma1(cfg.suite, v["lemma_steps"], v["lemma_replicates"], seed, w0)
    lemma2 = verify_mod.verify_lemma2(cfg.suite, v["lemma_steps"], v["lemma_replicates"], seed, w0)

    # Rate gate: stochastic suites must show the ~1/T decay; noise-free suites
    # contract at least that fast (or converge exactly), which also passes.
    lo, hi = RATE_SLOPE_RANGE
    stochastic = any(s > 0 for s in theorem["constants"]["sigmas"])
    estimates = [r["estimate"] for r in theorem["rows"]]
    if all(e <= 0.0 for e in estimates):
        slope = None
        rate_pass = True
        rate_note = "exact convergence (all gap estimates are zero)"
    else:
        slope = verify_mod.fit_rate(theorem)
        if stochastic:
            rate_pass = lo <= slope <= hi
            rate_note = f"slope {slope:.4f} in [{lo}, {hi}]"
        else:
            rate_pass = slope <= hi
            rate_note = f"slope {slope:.4f} <= {hi} (noise-free contraction regime)"

    for row in theorem["rows"]:
        status = "pass" if row["pass"] else "FAIL"
        print(
            f"bound T={row['T']:<5d} estimate={row['estimate']:.6g} "
            f"bound={row['bound']:.6g}  {status}"
        )
    n1 = sum(r["pass"] for r in lemma1["rows"])
    n2 = sum(r["pass"] for r in lemma2["rows"])
    print(f"contraction inequality: {n1}/{len(lemma1['rows'])} steps pass")
    print(f"selection-variance inequality: {n2}/{len(lemma2['rows'])} steps pass")
    print(f"rate: {rate_note}: {'pass' if rate_pass else 'FAIL'}")

    all_pass = theorem["all_pass"] and lemma1["all_pass"] and lemma2["all_pass"] and rate_pass
    report = {
        "config": cfg.raw,
        "seed": seed,
        "theorem": theorem,
        "lemma1": lemma1,
        "lemma2": lemma2,
        "rate_slope": slope,
        "rate_slope_range": list(RATE_SLOPE_RANGE),
        "rate_note": rate_note,
        "rate_pass": rate_pass,
        "all_pass": all_pass,
    }
    with open(out_dir / "verification.json", "w", encoding="utf-8") as f:
        json.dump(report, f, sort_keys=True, indent=2)
        f.write("\n")
    print(f"wrote {out_dir / 'verification.json'}")
    return 0 if all_pass else 3


def _parse_etas(text: str):
    try:
        etas = [float(x) for x in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"--etas: {exc}") from exc
    if any(e <= 0 for e in etas):
        raise ConfigError("--etas: learning rates must be positive")
    return etas


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtlopt",
        description="Multi-task optimization schemes: runs, learning-rate sweeps, and convergence verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="path to a JSON run config")
    common.add_argument("--out", default="mtlopt_out", help="output directory (default: mtlopt_out)")
    common.add_argument("--seed-offset", type=int, default=0, help="added to every configured seed")

    sub.add_parser("run", parents=[common], help="execute one run per seed")
    p_sweep = sub.add_parser("sweep", parents=[common], help="grid over learning rates x seeds x schemes")
    p_sweep.add_argument("--etas", required=True, help="comma- or space-separated learning rates")
    p_sweep.add_argument("--workers", type=int, default=1, help="parallel sweep cells (default 1)")
    sub.add_parser("verify", parents=[common], help="check the convergence bound and per-step inequalities")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out_dir = Path(args.out)
        if args.command == "run":
            return cmd_run(cfg, out_dir, args.seed_offset)
        if args.command == "sweep":
            return cmd_sweep(cfg, _parse_etas(args.etas), out_dir, args.seed_offset, args.workers)
        return cmd_verify(cfg, out_dir, args.seed_offset)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
