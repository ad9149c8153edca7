"""Command-line interface.

Subcommands: train, sweep-depth, ablate, exact, gradcheck, decomp-check,
bench. Certification subcommands exit nonzero when any check fails.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import kernels
from .agent import ErsacConfig
from .harness import (
    ABLATIONS,
    RunConfig,
    SweepSpec,
    fit_scaling,
    run_one,
    run_sweep,
    summarize_sweep,
)
from .klearning import (
    FiniteMixturePosterior,
    boltzmann_policy,
    check_assumption1,
    default_tau_grid,
    k_backup_star,
    dist,
    optimism,
    regret_decomposition,
    solve_tau,
)
from .mdp import DeepSeaSpec
from .replay import ReplayConfig, VTraceConfig


def _load_json(path):
    with open(path) as f:
        return json.load(f)


def _agent_config(doc: dict) -> ErsacConfig:
    fields = {f.name for f in dataclasses.fields(ErsacConfig)}
    kwargs = {k: v for k, v in doc.items() if k in fields}
    if "hidden" in kwargs:
        kwargs["hidden"] = tuple(kwargs["hidden"])
    return ErsacConfig(**kwargs)


def _replay_config(doc: dict | None) -> ReplayConfig | None:
    if doc is None:
        return None
    kwargs = dict(doc)
    vt = kwargs.pop("vtrace", None)
    cfg = ReplayConfig(**kwargs)
    if vt is not None:
        cfg.vtrace = VTraceConfig(**vt)
    return cfg


def _run_config(doc: dict, seed=None, out=None) -> RunConfig:
    env = DeepSeaSpec(**doc["env"])
    cfg = RunConfig(
        env=env,
        agent=_agent_config(doc.get("agent", {})),
        replay=_replay_config(doc.get("replay")),
        seed=doc.get("seed", 0) if seed is None else seed,
        budget=doc.get("budget", 10_000),
        solve_window=doc.get("solve_window", 100),
        solve_threshold=doc.get("solve_threshold"),
        out=out,
        stop_on_solve=doc.get("stop_on_solve", True),
    )
    return cfg


def cmd_train(args) -> int:
    doc = _load_json(args.config)
    out = os.path.join(args.out, "metrics.ndjson") if args.out else None
    cfg = _run_config(doc, seed=args.seed, out=out)
    res = run_one(cfg)
    print(f"depth={res.depth} seed={res.seed} episodes={res.episodes} "
          f"solved_at={res.solved_at} final_tau={res.final_tau:.6g} status={res.status}")
    return 0


def cmd_sweep_depth(args) -> int:
    doc = _load_json(args.config)
    template = _run_config(doc, out=None)
    if args.out:
        template.out = args.out
    spec = SweepSpec(
        depths=[int(d) for d in doc["depths"]],
        seeds=[int(s) for s in doc.get("seeds", range(10))],
        template=template,
        parallel=args.parallel,
    )
    results = run_sweep(spec)
    table = summarize_sweep(results)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "summary.csv"), "w") as f:
            f.write(table)
    print(table, end="")
    points = []
    for depth in spec.depths:
        solved = [r.solved_at for r in results if r.depth == depth and r.solved_at]
        if solved:
            points.append((depth, float(np.median(solved))))
    if len(points) >= 3:
        slope, intercept, resid = fit_scaling(points)
        print(f"scaling_slope={slope:.3f} intercept={intercept:.3f} residual={resid:.3f}")
    return 0


def cmd_ablate(args) -> int:
    doc = _load_json(args.config)
    template = _run_config(doc, out=None)
    suite = ABLATIONS[args.suite]
    seeds = [int(s) for s in doc.get("seeds", range(10))]
    table = suite(template, seeds, parallel=args.parallel)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, f"ablate_{args.suite}.csv"), "w") as f:
            f.write(table)
    print(table, end="")
    return 0


def cmd_exact(args) -> int:
    from .io import load_belief_or_posterior

    obj = load_belief_or_posterior(args.file)
    if isinstance(obj, FiniteMixturePosterior):
        posterior, belief = obj, obj.belief()
    else:
        posterior, belief = None, obj
    tau_star, value = solve_tau(belief)
    pi_star = boltzmann_policy(k_backup_star(belief, tau_star))
    print(f"tau_star={tau_star!r}")
    print(f"objective={value!r}")
    print(f"dist={dist(belief, pi_star, tau_star)!r}")
    if posterior is not None:
        grid = default_tau_grid()
        rd = regret_decomposition(posterior, pi_star, tau_star)
        print(f"optimism={rd.optimism!r}")
        print(f"regret={rd.regret!r}")
        print(f"bound_holds={str(rd.bound_holds).lower()}")
        print(f"assumption1={str(check_assumption1(posterior, grid)).lower()}")
    return 0


def cmd_gradcheck(args) -> int:
    from .certify import gradient_certification, sampled_policy_gradient_check

    results = gradient_certification(seed=args.seed)
    for r in results:
        print(r.line())
    z, _ = sampled_policy_gradient_check(seed=args.seed, n_traj=args.trajectories)
    ok = z <= 3.0
    print(f"gradcheck/sampled_policy_gradient: value={z:.3f} tol=3.0e+00 "
          f"{'PASS' if ok else 'FAIL'}")
    return 0 if ok and all(r.passed for r in results) else 1


def cmd_decomp_check(args) -> int:
    from .certify import decomposition_certification

    results = decomposition_certification(seed=args.seed, n_instances=args.n)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def cmd_bench(args) -> int:
    from .bench import format_benchmark, run_benchmark

    rows, agree = run_benchmark(depth=args.depth, train_episodes=args.episodes)
    print(f"active backend: {kernels.backend_name()}")
    print(format_benchmark(rows, agree))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ersac")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run one training configuration")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", default=None)
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("sweep-depth", help="depth x seed sweep with a summary table")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None)
    s.add_argument("--parallel", type=int, default=1)
    s.set_defaults(fn=cmd_sweep_depth)

    a = sub.add_parser("ablate", help="run an ablation suite")
    a.add_argument("suite", choices=sorted(ABLATIONS))
    a.add_argument("--config", required=True)
    a.add_argument("--out", default=None)
    a.add_argument("--parallel", type=int, default=1)
    a.set_defaults(fn=cmd_ablate)

    e = sub.add_parser("exact", help="solve the temperature game for a belief file")
    e.add_argument("file")
    e.set_defaults(fn=cmd_exact)

    g = sub.add_parser("gradcheck", help="finite-difference gradient certification")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--trajectories", type=int, default=100_000)
    g.set_defaults(fn=cmd_gradcheck)

    d = sub.add_parser("decomp-check", help="randomized decomposition certification")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--n", type=int, default=200)
    d.set_defaults(fn=cmd_decomp_check)

    b = sub.add_parser("bench", help="compare kernel backends")
    b.add_argument("--depth", type=int, default=12)
    b.add_argument("--episodes", type=int, default=200)
    b.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
