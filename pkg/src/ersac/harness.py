"""Experiment orchestration: single runs, depth sweeps, ablations, solve
detection, and scaling fits.

Metrics are line-delimited JSON records with sorted keys, so a (config,
seed) pair fully determines every emitted byte. Summaries are CSV tables.
"""
from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .agent import ErsacConfig, run_training
from .mdp import DeepSeaSpec, build_deep_sea, deep_sea_optimal_return
from .replay import ReplayBuffer, ReplayConfig, ReplayUpdater


@dataclass
class RunConfig:
    env: DeepSeaSpec
    agent: ErsacConfig = field(default_factory=ErsacConfig)
    replay: ReplayConfig | None = None
    seed: int = 0
    budget: int = 10_000
    solve_window: int = 100
    solve_threshold: float | None = None  # default 0.9 * optimal return
    out: str | None = None
    stop_on_solve: bool = True

    def __post_init__(self):
        if self.budget < 0 or self.solve_window < 1:
            raise ValueError("budget must be >= 0 and solve_window >= 1")
        if self.solve_threshold is None:
            self.solve_threshold = 0.9 * deep_sea_optimal_return(self.env)


@dataclass
class SweepSpec:
    depths: list[int]
    seeds: list[int]
    template: RunConfig
    parallel: int = 1

    def __post_init__(self):
        if any(d < 1 for d in self.depths) or list(self.depths) != sorted(set(self.depths)):
            raise ValueError("depths must be positive and strictly increasing")


@dataclass
class RunResult:
    depth: int
    seed: int
    episodes: int
    solved_at: int | None
    final_tau: float
    status: str = "ok"


def detect_solved(returns, window: int, threshold: float):
    """First episode t (1-based) with mean(returns[t-window+1 .. t]) >= threshold."""
    if window < 1:
        raise ValueError("window must be >= 1")
    n = len(returns)
    if n < window:
        return None
    arr = np.asarray(returns, dtype=np.float64)
    csum = np.concatenate(([0.0], np.cumsum(arr)))
    means = (csum[window:] - csum[:-window]) / window
    hits = np.nonzero(means >= threshold)[0]
    if len(hits) == 0:
        return None
    return int(hits[0]) + window


def _solve_stop(window, threshold):
    def stop(returns):
        if len(returns) < window:
            return False
        return float(np.mean(returns[-window:])) >= threshold
    return stop


def run_one(cfg: RunConfig) -> RunResult:
    """Execute a single training run; optionally writes metrics to cfg.out."""
    mdp = build_deep_sea(cfg.env)
    records = []
    sink = records.append
    stop = _solve_stop(cfg.solve_window, cfg.solve_threshold) if cfg.stop_on_solve else None

    if cfg.replay is not None:
        rng = np.random.default_rng(cfg.seed)
        from .agent import ErsacAgent
        agent = ErsacAgent(mdp, cfg.agent, rng)
        buffer = ReplayBuffer(cfg.replay.capacity, cfg.agent.ensemble_size,
                              cfg.replay.noise_var, cfg.replay.alpha)
        updater = ReplayUpdater(agent, buffer, cfg.replay)
        agent, returns = run_training(mdp, cfg.agent, cfg.seed, cfg.budget,
                                      sink=sink, stop_fn=stop, update=updater, agent=agent)
    else:
        agent, returns = run_training(mdp, cfg.agent, cfg.seed, cfg.budget,
                                      sink=sink, stop_fn=stop)

    solved = detect_solved(returns, cfg.solve_window, cfg.solve_threshold)
    if cfg.out:
        os.makedirs(os.path.dirname(cfg.out) or ".", exist_ok=True)
        with open(cfg.out, "w") as f:
            for rec in records:
                f.write(json.dumps(dataclasses.asdict(rec), sort_keys=True) + "\n")
    return RunResult(depth=cfg.env.depth, seed=cfg.seed, episodes=len(returns),
                     solved_at=solved, final_tau=agent.tau)


def _run_one_safe(cfg: RunConfig) -> RunResult:
    try:
        return run_one(cfg)
    except Exception as e:  # sweep must continue past individual failures
        return RunResult(depth=cfg.env.depth, seed=cfg.seed, episodes=0,
                         solved_at=None, final_tau=float("nan"), status=f"error: {e}")


def run_sweep(spec: SweepSpec) -> list[RunResult]:
    """Independent runs over depths x seeds; order of results is fixed."""
    cfgs = []
    for depth in spec.depths:
        for seed in spec.seeds:
            env = replace(spec.template.env, depth=depth)
            out = None
            if spec.template.out:
                out = os.path.join(spec.template.out, f"run_d{depth}_s{seed}.ndjson")
            cfgs.append(replace(spec.template, env=env, seed=seed, out=out))
    if spec.parallel > 1:
        with ProcessPoolExecutor(max_workers=spec.parallel) as pool:
            results = list(pool.map(_run_one_safe, cfgs))
    else:
        results = [_run_one_safe(c) for c in cfgs]
    return results


def summarize_sweep(results: list[RunResult]) -> str:
    """Per-depth solve rate and median solve episodes, as CSV."""
    lines = ["depth,n_seeds,n_solved,solve_rate,median_solve_episodes"]
    for depth in sorted({r.depth for r in results}):
        rs = [r for r in results if r.depth == depth]
        solved = [r.solved_at for r in rs if r.solved_at is not None]
        med = f"{float(np.median(solved)):.1f}" if solved else ""
        lines.append(f"{depth},{len(rs)},{len(solved)},{len(solved) / len(rs):.3f},{med}")
    return "\n".join(lines) + "\n"


def median_solve_episodes(results: list[RunResult], depth: int):
    solved = [r.solved_at for r in results if r.depth == depth and r.solved_at is not None]
    return float(np.median(solved)) if solved else None


def fit_scaling(points: list[tuple[int, float]]):
    """Least-squares fit of log(solve episodes) on log(depth).

    `points` are (depth, solve_episodes) with unsolved depths already
    excluded. Returns (slope, intercept, rms residual).
    """
    if len(points) < 3:
        raise ValueError("need at least 3 solved depths for a scaling fit")
    x = np.log([float(d) for d, _ in points])
    y = np.log([float(t) for _, t in points])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(slope), float(intercept), resid


# -- ablation suites ---------------------------------------------------------

def lambda_sweep(template: RunConfig, seeds, lambdas=(0.0, 0.4, 0.8), parallel=1):
    rows = []
    for lam in lambdas:
        cfg = replace(template, agent=replace(template.agent, td_lambda=lam))
        res = run_sweep(SweepSpec([template.env.depth], list(seeds), cfg, parallel))
        rows.append((lam, res))
    return _ablation_table("lambda", rows)


def rollout_sweep(template: RunConfig, seeds, rollouts=(1, 5, 25, 50), parallel=1):
    rows = []
    for n in rollouts:
        cfg = replace(template, agent=replace(template.agent, rollout=n))
        res = run_sweep(SweepSpec([template.env.depth], list(seeds), cfg, parallel))
        rows.append((n, res))
    return _ablation_table("rollout", rows)


def fixed_vs_learned_tau(template: RunConfig, seeds, taus=(0.1, 1.0, 10.0), parallel=1):
    rows = []
    for tau in taus:
        learned = replace(template, agent=replace(template.agent, mode="ersac", tau0=tau))
        res = run_sweep(SweepSpec([template.env.depth], list(seeds), learned, parallel))
        rows.append((f"learned_tau0={tau}", res))
        fixed = replace(template, agent=replace(template.agent, mode="ersac", tau0=tau,
                                                tau_lr=0.0))
        res = run_sweep(SweepSpec([template.env.depth], list(seeds), fixed, parallel))
        rows.append((f"fixed_tau={tau}", res))
    return _ablation_table("tau_mode", rows)


def replay_noise_onoff(template: RunConfig, seeds, noise_vars=(0.0, 0.1), parallel=1):
    rows = []
    base_replay = template.replay if template.replay is not None else ReplayConfig()
    for nv in noise_vars:
        cfg = replace(template, replay=replace(base_replay, noise_var=nv))
        res = run_sweep(SweepSpec([template.env.depth], list(seeds), cfg, parallel))
        rows.append((nv, res))
    return _ablation_table("replay_noise_var", rows)


ABLATIONS = {
    "lambda": lambda_sweep,
    "rollout": rollout_sweep,
    "tau": fixed_vs_learned_tau,
    "replay-noise": replay_noise_onoff,
}


def _ablation_table(param: str, rows) -> str:
    lines = [f"{param},n_seeds,n_solved,solve_rate,median_solve_episodes"]
    for value, results in rows:
        solved = [r.solved_at for r in results if r.solved_at is not None]
        med = f"{float(np.median(solved)):.1f}" if solved else ""
        lines.append(f"{value},{len(results)},{len(solved)},{len(solved) / len(results):.3f},{med}")
    return "\n".join(lines) + "\n"
