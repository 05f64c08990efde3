"""Iteration-count comparisons against a certified optimal objective value."""
from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from .adaptive import AdaptiveConfig, adaptive_solve
from .apm import apm_params, apm_solve
from .baselines import BaselineConfig, proportional_response_solve, tatonnement_solve
from .io import read_json, instance_from_dict, write_json, write_trace
from .market import MarketInstance, eval_F, price_bounds

ALGOS = ("apm", "tat", "pr")
RECORD_FIELDS = ("algo", "instance", "epsilon", "iterations", "wall_time", "final_gap",
                 "certified", "success")


@dataclass
class BenchRecord:
    algo: str
    instance: str
    epsilon: float
    iterations: int
    wall_time: float
    final_gap: float
    certified: bool
    success: bool


@dataclass(frozen=True)
class BenchOptions:
    epsilon: float = 1e-4
    max_iters: int = 5_000_000
    apm_continuation: bool = True
    tat_stepsize: float | None = None
    pr_stepsize: float = 1.0
    trace: bool = False


def reference_value(inst: MarketInstance, config: AdaptiveConfig | None = None):
    """Certified optimal objective value and the exact solve behind it."""
    ex = adaptive_solve(inst, config)
    return eval_F(inst, ex.mu_star), ex


def run_algo(inst: MarketInstance, algo: str, f_star: float, opts: BenchOptions):
    """Run one method until its objective gap is at most ``opts.epsilon``."""
    eps = opts.epsilon
    t0 = time.perf_counter()
    if algo == "apm":
        params = apm_params(inst, None, eps, max_iters=opts.max_iters)
        rep = apm_solve(inst, params, f_target=f_star + eps, trace=opts.trace,
                        continuation=opts.apm_continuation)
    elif algo == "tat":
        cfg = BaselineConfig("tat", opts.tat_stepsize, max_iters=opts.max_iters)
        rep = tatonnement_solve(inst, price_bounds(inst), cfg, eps, f_star, trace=opts.trace)
    elif algo == "pr":
        cfg = BaselineConfig("pr", opts.pr_stepsize, max_iters=opts.max_iters)
        rep = proportional_response_solve(inst, cfg, eps, f_star, trace=opts.trace)
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    return rep, time.perf_counter() - t0


def bench_instance(name: str, inst: MarketInstance, algos, opts: BenchOptions, trace_dir=None):
    f_star, ex = reference_value(inst)
    records = []
    for algo in algos:
        rep, wall = run_algo(inst, algo, f_star, opts)
        gap = rep.f_value - f_star
        records.append(BenchRecord(
            algo=algo, instance=name, epsilon=opts.epsilon, iterations=rep.iterations,
            wall_time=wall, final_gap=gap, certified=ex.certified,
            success=rep.status == "target" and gap <= opts.epsilon,
        ))
        if trace_dir is not None and rep.trace is not None:
            write_trace(Path(trace_dir) / f"{name}_{algo}.csv", rep.trace)
    return records, ex


def _cell(args):
    path, algos, opts, trace_dir = args
    d = read_json(path)
    recs, ex = bench_instance(Path(path).stem, instance_from_dict(d), algos, opts, trace_dir)
    meta = {"genspec": d.get("genspec"), "f_star_certified": ex.certified,
            "outer_iterations": ex.outer_iterations, "delta_star": ex.to_dict()["delta_star"]}
    return Path(path).stem, recs, meta


def run_bench(instances_dir, algos, opts: BenchOptions, out_csv, trace_dir=None, workers: int = 1):
    """Benchmark every ``*.json`` instance in ``instances_dir``.

    Writes the records to ``out_csv`` and per-instance metadata (including
    the generator settings) to ``out_csv`` + ``.meta.json``.
    """
    paths = sorted(Path(instances_dir).glob("*.json"))
    if not paths:
        raise FileNotFoundError(f"no instance files in {instances_dir}")
    algos = list(algos)
    for a in algos:
        if a not in ALGOS:
            raise ValueError(f"unknown algorithm {a!r}")
    if trace_dir is not None:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
        opts = BenchOptions(**{**asdict(opts), "trace": True})
    jobs = [(str(p), algos, opts, trace_dir) for p in paths]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_cell, jobs))
    else:
        results = [_cell(j) for j in jobs]
    records = [r for _, recs, _ in results for r in recs]
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([getattr(r, f) if not isinstance(getattr(r, f), float) else repr(getattr(r, f))
                        for f in RECORD_FIELDS])
    meta = {"options": asdict(opts), "instances": {name: m for name, _, m in results}}
    write_json(str(out_csv) + ".meta.json", meta)
    return records
