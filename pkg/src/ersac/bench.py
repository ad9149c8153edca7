"""Kernel backend benchmark: per-step acting forward, batched
forward/backward, and a short training run, timed for every available
backend. Also cross-checks that the backends agree numerically.
"""
from __future__ import annotations

import time

import numpy as np

from . import kernels
from .agent import ErsacAgent, ErsacConfig
from .mdp import DeepSeaSpec, build_deep_sea
from .nets import NetConfig, PolicyValueNet


def _timeit(fn, repeats):
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def run_benchmark(depth: int = 12, batch: int = 50, act_repeats: int = 2000,
                  batch_repeats: int = 200, train_episodes: int = 200):
    rng = np.random.default_rng(0)
    cfg = NetConfig(input_dim=depth * depth, num_actions=2)
    net = PolicyValueNet(cfg, rng)
    idx = rng.integers(0, cfg.input_dim, size=batch).astype(np.int64)
    adj_logits = rng.standard_normal((batch, 2))
    adj_value = rng.standard_normal(batch)
    adj_preds = rng.standard_normal((cfg.ensemble_size, batch, 2))

    rows = []
    outputs = {}
    for name in kernels.available_backends():
        mod = kernels.get_backend(name)
        pi = mod.act_policy(net.torso_w, net.torso_b, net.wp, net.bp, 3)
        hs, logits, value, preds = mod.forward_batch(
            net.torso_w, net.torso_b, net.wp, net.bp, net.wv, net.bv, net.wr, net.br, idx)
        grads = mod.backward_batch(net.torso_w, net.torso_b, net.wp, net.wv, net.wr,
                                   idx, hs, adj_logits, adj_value, adj_preds)
        outputs[name] = (pi, logits, value, preds, grads)

        t_act = _timeit(lambda: mod.act_policy(net.torso_w, net.torso_b, net.wp, net.bp, 3),
                        act_repeats)
        t_fwd = _timeit(lambda: mod.forward_batch(net.torso_w, net.torso_b, net.wp, net.bp,
                                                  net.wv, net.bv, net.wr, net.br, idx),
                        batch_repeats)
        t_bwd = _timeit(lambda: mod.backward_batch(net.torso_w, net.torso_b, net.wp, net.wv,
                                                   net.wr, idx, hs, adj_logits, adj_value,
                                                   adj_preds),
                        batch_repeats)
        rows.append({"backend": name, "act_us": t_act * 1e6, "forward_us": t_fwd * 1e6,
                     "backward_us": t_bwd * 1e6})

    # short end-to-end training comparison
    for row in rows:
        mod = kernels.get_backend(row["backend"])
        saved = (kernels.act_policy, kernels.forward_batch, kernels.backward_batch)
        kernels.act_policy, kernels.forward_batch, kernels.backward_batch = (
            mod.act_policy, mod.forward_batch, mod.backward_batch)
        try:
            mdp = build_deep_sea(DeepSeaSpec(depth=depth))
            agent = ErsacAgent(mdp, ErsacConfig(), np.random.default_rng(1))
            t0 = time.perf_counter()
            for _ in range(train_episodes):
                agent.run_episode()
            row["train_eps_per_s"] = train_episodes / (time.perf_counter() - t0)
        finally:
            kernels.act_policy, kernels.forward_batch, kernels.backward_batch = saved

    agree = None
    if len(outputs) == 2:
        a, b = outputs["python"], outputs["cython"]
        diffs = [np.max(np.abs(a[0] - b[0])), np.max(np.abs(a[1] - b[1])),
                 np.max(np.abs(a[2] - b[2])), np.max(np.abs(a[3] - b[3]))]
        for ga, gb in ((a[4], b[4]),):
            for block_a, block_b in zip(ga, gb):
                if isinstance(block_a, list):
                    for x, y in zip(block_a, block_b):
                        diffs.append(np.max(np.abs(x - y)))
                else:
                    diffs.append(np.max(np.abs(block_a - block_b)))
        agree = float(max(diffs))
    return rows, agree


def format_benchmark(rows, agree) -> str:
    lines = [f"{'backend':<8} {'act_us':>10} {'forward_us':>12} {'backward_us':>13} {'train_eps_per_s':>16}"]
    for r in rows:
        lines.append(f"{r['backend']:<8} {r['act_us']:>10.2f} {r['forward_us']:>12.2f} "
                     f"{r['backward_us']:>13.2f} {r.get('train_eps_per_s', float('nan')):>16.1f}")
    if len(rows) == 2:
        base = {r["backend"]: r for r in rows}
        speedup = base["python"]["act_us"] / base["cython"]["act_us"]
        lines.append(f"act speedup (cython vs python): {speedup:.1f}x")
    if agree is not None:
        lines.append(f"max cross-backend output difference: {agree:.3e}")
    return "\n".join(lines)
