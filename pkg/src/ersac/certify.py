"""Randomized certification suites: gradient checks against central finite
differences, and the regret-decomposition identities on mixture posteriors.

Both suites return lists of CheckResult; the CLI exits nonzero when any
check fails, and the acceptance tests assert on the same results.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import klearning as kl
from .agent import td_lambda_k_hat
from .instances import random_belief, random_mixture, random_policy
from .klearning import (
    boltzmann_policy,
    dist,
    k_backup_pi,
    k_backup_star,
    min_tau_optimism,
    occupancy,
    optimism,
    policy_value_components,
    regret_decomposition,
    solve_tau,
    strong_duality_gap,
)
from .mdp import exact_values_pi
from .nets import NetConfig, PolicyValueNet, grad_check, softmax_rows


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name}: value={self.value:.3e} tol={self.tol:.1e} {status}"


def _small_net(rng, input_dim=6, hidden=(8, 7), actions=3, heads=3):
    net = PolicyValueNet(
        NetConfig(input_dim=input_dim, num_actions=actions, hidden=hidden,
                  ensemble_size=heads, prior_scale=0.7, prior_hidden=5),
        rng,
    )
    # give the zero-initialized heads nontrivial values so gradients are generic
    net.wp += 0.4 * rng.standard_normal(net.wp.shape)
    net.bp += 0.1 * rng.standard_normal(net.bp.shape)
    net.wv += 0.4 * rng.standard_normal(net.wv.shape)
    net.bv += 0.1 * rng.standard_normal(net.bv.shape)
    net.wr += 0.3 * rng.standard_normal(net.wr.shape)
    net.br += 0.1 * rng.standard_normal(net.br.shape)
    return net


def gradient_certification(seed: int = 0, tol: float = 1e-4) -> list[CheckResult]:
    """Central-difference certification of every analytic gradient path."""
    rng = np.random.default_rng(seed)
    results = []

    # sanity of the checker itself on a quadratic
    coef = rng.standard_normal(5)
    x = rng.standard_normal(5)
    worst, _ = grad_check(lambda: float(coef @ (x * x)), [("x", x)],
                          [("x", 2.0 * coef * x)], h=1e-5)
    results.append(CheckResult("gradcheck/quadratic", worst, 1e-8, worst <= 1e-8))

    net = _small_net(rng)
    n = 5
    idx = rng.integers(0, net.cfg.input_dim, size=n).astype(np.int64)
    actions = rng.integers(0, net.cfg.num_actions, size=n)
    rows = np.arange(n)

    # composite adjoint-weighted head sum through the full backward pass
    adj_logits = rng.standard_normal((n, net.cfg.num_actions))
    adj_value = rng.standard_normal(n)
    adj_preds = rng.standard_normal((net.cfg.ensemble_size, n, net.cfg.num_actions))

    def f_composite():
        c = net.forward_batch(idx)
        return float((adj_logits * c.logits).sum() + (adj_value * c.value).sum()
                     + (adj_preds * c.preds).sum())

    cache = net.forward_batch(idx)
    g = net.backward_batch(cache, adj_logits, adj_value, adj_preds)
    worst, _ = grad_check(f_composite, net.param_blocks(), g.blocks(), h=1e-5)
    results.append(CheckResult("gradcheck/backward_composite", worst, tol, worst <= tol))

    # assembled policy loss: mean[log pi * adv_const + tau * H]
    tau = 0.7
    adv = rng.standard_normal(n)

    def f_policy():
        c = net.forward_batch(idx)
        ent = kl.entropy_rows(c.policy)
        return float(np.mean(c.log_policy[rows, actions] * adv + tau * ent))

    cache = net.forward_batch(idx)
    ent = kl.entropy_rows(cache.policy)
    coef_adv = adv / n
    adj_logits = coef_adv[:, None] * (-cache.policy)
    adj_logits[rows, actions] += coef_adv
    adj_logits += (tau / n) * (-cache.policy * (cache.log_policy + ent[:, None]))
    g = net.backward_batch(cache, adj_logits, np.zeros(n),
                           np.zeros_like(cache.preds))
    worst, _ = grad_check(f_policy, net.param_blocks(), g.blocks(), h=1e-5)
    results.append(CheckResult("gradcheck/policy_loss", worst, tol, worst <= tol))

    # value loss: mean[(J - U_const)^2]
    u_const = rng.standard_normal(n)

    def f_value():
        c = net.forward_batch(idx)
        return float(np.mean((c.value - u_const) ** 2))

    cache = net.forward_batch(idx)
    adj_value = 2.0 * (cache.value - u_const) / n
    g = net.backward_batch(cache, np.zeros((n, net.cfg.num_actions)), adj_value,
                           np.zeros_like(cache.preds))
    worst, _ = grad_check(f_value, net.param_blocks(), g.blocks(), h=1e-5)
    results.append(CheckResult("gradcheck/value_loss", worst, tol, worst <= tol))

    # reward-ensemble loss: mean over steps and heads of squared error
    targets = rng.standard_normal((net.cfg.ensemble_size, n))

    def f_reward():
        c = net.forward_batch(idx)
        taken = c.preds[:, rows, actions]
        return float(np.mean((taken - targets) ** 2))

    cache = net.forward_batch(idx)
    taken = cache.preds[:, rows, actions]
    adj_preds = np.zeros_like(cache.preds)
    adj_preds[:, rows, actions] = 2.0 * (taken - targets) / (n * net.cfg.ensemble_size)
    g = net.backward_batch(cache, np.zeros((n, net.cfg.num_actions)), np.zeros(n), adj_preds)
    worst, _ = grad_check(f_reward, net.param_blocks(), g.blocks(), h=1e-5)
    results.append(CheckResult("gradcheck/reward_loss", worst, tol, worst <= tol))

    # temperature loss derivative: d/dtau mean[sigma2/(2 tau) + tau * H_const]
    sigma2 = rng.uniform(0.1, 1.0, size=n)
    h_const = kl.entropy_rows(net.forward_batch(idx).policy)
    tau_arr = np.array([0.9])

    def f_tau():
        return float(np.mean(sigma2 / (2.0 * tau_arr[0]) + tau_arr[0] * h_const))

    g_tau = float(np.mean(h_const - sigma2 / (2.0 * tau_arr[0] ** 2)))
    worst, _ = grad_check(f_tau, [("tau", tau_arr)], [("tau", np.array([g_tau]))], h=1e-6)
    results.append(CheckResult("gradcheck/tau_loss", worst, tol, worst <= tol))

    return results


def sampled_policy_gradient_check(seed: int = 0, n_traj: int = 100_000):
    """Sampled policy gradient vs the exact Bellman-oracle gradient.

    A two-layer belief with a softmax-table policy: the exact side is
    central finite differences of E_rho J^pi over the table logits; the
    sampled side is the score-function estimator with unrolled soft-return
    targets over `n_traj` simulated trajectories. Returns
    (max componentwise |mean - exact| / standard error, details dict).
    """
    rng = np.random.default_rng(seed)
    sizes = [2, 3]
    A = 2
    belief = random_belief(rng, horizon=2, sizes=sizes, num_actions=A, sigma_max=0.5)
    theta = [0.3 * rng.standard_normal((n, A)) for n in sizes]
    tau = 0.8

    def policy_of(theta_list):
        return [softmax_rows(t)[0] for t in theta_list]

    def objective(theta_list):
        kt = k_backup_pi(belief, policy_of(theta_list), tau)
        return float(belief.initial_dist @ kt.J[0])

    # exact gradient by central differences over table parameters
    exact = [np.zeros_like(t) for t in theta]
    h = 1e-6
    for l, t in enumerate(theta):
        for i in range(t.shape[0]):
            for a in range(t.shape[1]):
                orig = t[i, a]
                t[i, a] = orig + h
                fp = objective(theta)
                t[i, a] = orig - h
                fm = objective(theta)
                t[i, a] = orig
                exact[l][i, a] = (fp - fm) / (2.0 * h)

    pi = policy_of(theta)
    logpi = [np.log(p) for p in pi]
    ents = [kl.entropy_rows(p) for p in pi]
    kt = k_backup_pi(belief, pi, tau)
    r_tau = kl.risk_seeking_reward(belief, tau)

    # vectorized trajectory simulation under the belief's mean kernels
    s0 = rng.choice(sizes[0], size=n_traj, p=belief.initial_dist)
    u = rng.random(n_traj)
    a0 = (u[:, None] >= np.cumsum(pi[0][s0], axis=1)).sum(axis=1)
    cum_p = np.cumsum(belief.mean_transitions[0], axis=-1)
    u = rng.random(n_traj)
    s1 = (u[:, None] >= cum_p[s0, a0]).sum(axis=1)
    u = rng.random(n_traj)
    a1 = (u[:, None] >= np.cumsum(pi[1][s1], axis=1)).sum(axis=1)

    k1 = r_tau[1][s1, a1]
    k0 = r_tau[0][s0, a0] + (k1 - tau * logpi[1][s1, a1])

    dim = sum(t.size for t in theta)
    est_sum = np.zeros(dim)
    est_sq = np.zeros(dim)
    offs = [0, theta[0].size]

    def accumulate(layer, states, actions, coefs):
        # per-trajectory contribution rows: coef * (e_a - pi) + tau * dH/dz
        contrib = np.zeros((n_traj, sizes[layer], A))
        rows = np.arange(n_traj)
        base = -pi[layer][states] * coefs[:, None]
        contrib[rows, states] += base
        contrib[rows, states, actions] += coefs
        dh = -pi[layer] * (logpi[layer] + ents[layer][:, None])
        contrib[rows, states] += tau * dh[states]
        return contrib.reshape(n_traj, -1)

    adv0 = k0 - kt.J[0][s0]
    adv1 = k1 - kt.J[1][s1]
    flat = np.concatenate(
        [accumulate(0, s0, a0, adv0), accumulate(1, s1, a1, adv1)], axis=1
    )
    est_sum = flat.sum(axis=0)
    est_sq = (flat * flat).sum(axis=0)

    mean = est_sum / n_traj
    var = est_sq / n_traj - mean * mean
    se = np.sqrt(np.maximum(var, 1e-30) / n_traj)
    exact_flat = np.concatenate([e.reshape(-1) for e in exact])
    z = np.abs(mean - exact_flat) / np.maximum(se, 1e-12)
    return float(z.max()), {"exact": exact_flat, "sampled": mean, "se": se}


def td_lambda_unrolled_check(seed: int = 0) -> float:
    """lambda=1, gamma=1 targets vs the brute-force unrolled soft return."""
    rng = np.random.default_rng(seed)
    n = 5
    r = rng.standard_normal(n)
    sigma2 = rng.uniform(0.0, 0.5, size=n)
    logpi = -rng.uniform(0.1, 2.0, size=n)
    value = rng.standard_normal(n)
    tau = 0.7
    khat = td_lambda_k_hat(r, sigma2, logpi, value, 0.0, True, tau, 1.0, 1.0)
    worst = 0.0
    for t in range(n):
        brute = sum(r[u] + sigma2[u] / (2 * tau) for u in range(t, n)) - tau * sum(
            logpi[u] for u in range(t + 1, n)
        )
        worst = max(worst, abs(khat[t] - brute))
    return worst


def decomposition_certification(seed: int = 0, n_instances: int = 200) -> list[CheckResult]:
    """Randomized Lemma/Theorem identity and bound certification."""
    rng = np.random.default_rng(seed)
    results = []

    # identity: Dist(pi, tau) == E_rho (J* - J^pi), both sides independent
    worst = 0.0
    for _ in range(n_instances):
        belief = random_belief(rng, horizon=int(rng.integers(2, 5)))
        pi = random_policy(rng, belief.layer_sizes, belief.num_actions)
        tau = float(np.exp(rng.uniform(np.log(0.05), np.log(20.0))))
        lhs = dist(belief, pi, tau)
        js = float(belief.initial_dist @ k_backup_star(belief, tau).J[0])
        jp = float(belief.initial_dist @ k_backup_pi(belief, pi, tau).J[0])
        worst = max(worst, abs(lhs - (js - jp)))
    results.append(CheckResult("decomp/kl_identity", worst, 1e-9, worst <= 1e-9))

    # single-episode bound on certified mixtures, at a random temperature
    tau_grid = kl.default_tau_grid()
    n_cert = 0
    worst_violation = -np.inf
    attempts = 0
    while n_cert < n_instances and attempts < 20 * n_instances:
        attempts += 1
        horizon = int(rng.integers(2, 5))
        post = random_mixture(rng, n_members=int(rng.integers(2, 5)), horizon=horizon)
        if not kl.check_assumption1(post, tau_grid):
            continue
        n_cert += 1
        pi = random_policy(rng, post.members[0].layer_sizes, post.members[0].num_actions)
        tau = float(rng.choice(tau_grid))
        rd = regret_decomposition(post, pi, tau)
        worst_violation = max(worst_violation, rd.regret - (rd.dist + rd.optimism))
    ok = n_cert >= n_instances and worst_violation <= 1e-9
    results.append(CheckResult("decomp/single_episode_bound", worst_violation, 1e-9, ok))

    # saddle-point form: regret(pi*) <= min_tau optimism(pi*, .) and duality gap
    worst_thm = -np.inf
    worst_gap = 0.0
    rng2 = np.random.default_rng(seed + 1)
    n_saddle = 0
    attempts = 0
    while n_saddle < n_instances and attempts < 20 * n_instances:
        attempts += 1
        post = random_mixture(rng2, n_members=int(rng2.integers(2, 4)),
                              horizon=int(rng2.integers(2, 4)))
        if not kl.check_assumption1(post, tau_grid):
            continue
        n_saddle += 1
        belief = post.belief()
        tau_star, _ = solve_tau(belief, 1e-4, 1e3, grid_points=48)
        pi_star = boltzmann_policy(k_backup_star(belief, tau_star))
        rd = regret_decomposition(post, pi_star, tau_star)
        a, b, c = policy_value_components(belief, pi_star)
        mean_v = post.mean_value_pi(pi_star)
        min_opt = a + np.sqrt(2.0 * b * c) - mean_v if b > 0 and c > 0 else a - mean_v
        worst_thm = max(worst_thm, rd.regret - (rd.dist + min_opt))
        _, _, gap = strong_duality_gap(belief, 1e-4, 1e3)
        worst_gap = max(worst_gap, abs(gap))
    ok = n_saddle >= n_instances and worst_thm <= 1e-9
    results.append(CheckResult("decomp/saddle_point_bound", worst_thm, 1e-9, ok))
    results.append(CheckResult("decomp/strong_duality_gap", worst_gap, 1e-6, worst_gap <= 1e-6))

    return results
