"""Command-line entry point: ``fisherce gen|solve|exact|certify|bench``."""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .adaptive import AdaptiveConfig, adaptive_solve
from .apm import apm_params, apm_solve, approx_allocation
from .baselines import BaselineConfig, proportional_response_solve, tatonnement_solve
from .bench import ALGOS, BenchOptions, reference_value, run_bench
from .certify import DEFAULT_TOL, exact_allocation, test_optimality
from .errors import FisherMarketError
from .generate import Dist, GenSpec, generate
from .io import read_instance, read_prices, write_instance, write_json, write_trace
from .market import Kind, eval_F, price_bounds

LINEAR_BOUND_NOTE = "linear upper price bound uses max(total budget, max valuation)"


def _emit(payload: dict, out: str | None):
    if out:
        write_json(out, payload)
    else:
        print(json.dumps(payload, indent=1, allow_nan=False))


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def cmd_gen(a):
    spec = GenSpec(a.kind, a.n, a.m, a.dist, a.seed, a.int_max)
    write_instance(a.out, generate(spec), spec.to_dict())
    return 0


def cmd_solve(a):
    inst = read_instance(a.instance)
    bounds = price_bounds(inst)
    meta = {"epsilon": a.eps, "p_lower": bounds.p_lower, "p_upper": bounds.p_upper}
    if inst.kind is Kind.LINEAR:
        meta["note"] = LINEAR_BOUND_NOTE
    if a.algo == "apm":
        params = apm_params(inst, bounds, a.eps, a.strict, max_iters=a.max_iters)
        rep = apm_solve(inst, params, trace=bool(a.trace), continuation=a.continuation)
        _, x = approx_allocation(inst, params, rep.mu_out)
        extra = {"allocation": x.tolist(), "stop_threshold": params.stop_threshold}
    else:
        f_star, ex = reference_value(inst)
        meta["f_star"] = f_star
        meta["f_star_certified"] = ex.certified
        if a.algo == "tat":
            cfg = BaselineConfig("tat", a.stepsize, max_iters=a.max_iters or 5_000_000)
            rep = tatonnement_solve(inst, bounds, cfg, a.eps, f_star, trace=bool(a.trace))
        else:
            cfg = BaselineConfig("pr", a.stepsize, max_iters=a.max_iters or 5_000_000)
            rep = proportional_response_solve(inst, cfg, a.eps, f_star, trace=bool(a.trace))
        extra = {"final_gap": rep.f_value - f_star}
    if a.trace:
        write_trace(a.trace, rep.trace)
    payload = {
        "algo": a.algo,
        "prices": rep.prices.tolist(),
        "mu": rep.mu_out.tolist(),
        "iterations": rep.iterations,
        "status": rep.status,
        "max_iters_exceeded": rep.max_iters_exceeded,
        "final_grad_norm": _clean(rep.final_grad_norm),
        "f_value": rep.f_value,
        "metadata": meta,
        **extra,
    }
    _emit(payload, a.out)
    return 0


def cmd_exact(a):
    inst = read_instance(a.instance)
    cfg = AdaptiveConfig(theta=a.theta, max_outer=a.max_outer, inner=a.inner, certify_tol=a.tol,
                         modulus=a.modulus, radius_ladder=not a.no_ladder, strict=a.strict)
    res = adaptive_solve(inst, cfg)
    payload = res.to_dict()
    payload["f_value"] = eval_F(inst, res.mu_star)
    _emit(payload, a.out)
    return 0 if res.certified else 3


def cmd_certify(a):
    inst = read_instance(a.instance)
    p = read_prices(a.prices)
    if p.shape != (inst.m,) or np.any(p <= 0):
        raise ValueError(f"need {inst.m} positive prices")
    mu = np.log(p)
    cert = test_optimality(inst, mu, a.tol)
    payload = {"certified": cert.optimal, "prices": p.tolist(), "certificate": cert.to_dict()}
    if cert.optimal:
        payload["allocation"] = exact_allocation(inst, cert, mu)[1].tolist()
    _emit(payload, a.out)
    return 0


def cmd_bench(a):
    algos = [s.strip() for s in a.algos.split(",") if s.strip()]
    opts = BenchOptions(epsilon=a.eps, max_iters=a.max_iters, apm_continuation=a.apm_mode == "continuation",
                        tat_stepsize=a.tat_stepsize, pr_stepsize=a.pr_stepsize)
    records = run_bench(a.instances, algos, opts, a.out, a.trace_dir, a.workers)
    print(json.dumps({"records": len(records), "out": a.out}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fisherce", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random instance (unit budgets)")
    g.add_argument("--kind", choices=[k.value for k in Kind], default="linear")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--dist", choices=[d.value for d in Dist], default="uniform",
                   help="uniform: U(0,1); integer: uniform on 1..INT_MAX; "
                        "exponential: rate 1; lognormal: log-mean 0, log-sd 1 (all are choices)")
    g.add_argument("--int-max", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="approximate equilibrium prices")
    s.add_argument("--algo", choices=ALGOS, default="apm")
    s.add_argument("--eps", type=float, default=1e-4)
    s.add_argument("--instance", required=True)
    s.add_argument("--trace", help="write a t,F,grad_norm CSV here")
    s.add_argument("--strict", action="store_true", help="reject epsilon above the theory cap")
    s.add_argument("--continuation", action="store_true", help="APM: halve the smoothing in stages")
    s.add_argument("--stepsize", type=float, help="baseline stepsize")
    s.add_argument("--max-iters", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("exact", help="certified exact equilibrium")
    e.add_argument("--instance", required=True)
    e.add_argument("--theta", type=float, default=0.25)
    e.add_argument("--inner", choices=["apm", "tat"], default="apm")
    e.add_argument("--max-outer", type=int, default=60)
    e.add_argument("--tol", type=float, default=DEFAULT_TOL)
    e.add_argument("--modulus", type=float, help="growth constant in the recovery radius")
    e.add_argument("--no-ladder", action="store_true", help="only try the default recovery radius")
    e.add_argument("--strict", action="store_true")
    e.add_argument("--out")
    e.set_defaults(func=cmd_exact)

    c = sub.add_parser("certify", help="test given prices for exact optimality")
    c.add_argument("--instance", required=True)
    c.add_argument("--prices", required=True, help='JSON with "prices" (or "mu") or a bare list')
    c.add_argument("--tol", type=float, default=DEFAULT_TOL)
    c.add_argument("--out")
    c.set_defaults(func=cmd_certify)

    b = sub.add_parser("bench", help="iteration counts to a given objective gap")
    b.add_argument("--instances", required=True, help="directory of instance JSON files")
    b.add_argument("--algos", default="apm,tat,pr")
    b.add_argument("--eps", type=float, default=1e-4)
    b.add_argument("--out", required=True)
    b.add_argument("--trace-dir")
    b.add_argument("--max-iters", type=int, default=5_000_000)
    b.add_argument("--apm-mode", choices=["continuation", "single"], default="continuation")
    b.add_argument("--tat-stepsize", type=float)
    b.add_argument("--pr-stepsize", type=float, default=1.0)
    b.add_argument("--workers", type=int, default=1)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FisherMarketError, ValueError, OSError, json.JSONDecodeError) as exc:
        code = getattr(exc, "code", None) or type(exc).__name__
        print(json.dumps({"error": code, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
