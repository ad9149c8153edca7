"""Online risk-seeking actor-critic, plus the vanilla and simple-optimism
baseline modes.

One update consumes a rollout segment (at most `rollout` environment steps,
truncated at episode ends). Policy and value move in one optimizer step:
ascent on the policy objective, descent on the value and reward-prediction
errors. The temperature moves by plain gradient descent on its own loss and
is clipped to stay positive.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .klearning import entropy_rows
from .mdp import TabularMDP, sample_categorical
from .nets import NetConfig, PolicyValueNet, make_optimizer, optimizer_step
from .uncertainty import CountUncertainty, VisitCounts

MODES = ("ersac", "vanilla", "simple_optimism")


@dataclass
class ErsacConfig:
    mode: str = "ersac"
    # network
    hidden: tuple = (64, 64)
    ensemble_size: int = 10
    prior_scale: float = 0.7
    prior_hidden: int = 16
    # estimator
    td_lambda: float = 0.8
    rollout: int = 50
    discount: float = 1.0
    # temperature
    tau0: float = 0.3
    tau_lr: float = 1e-2
    tau_min: float = 1e-4
    tau_max: float = 1e2
    # optimizer
    lr: float = 3e-3
    optimizer: str = "adam"
    entropy_in_policy_loss: bool = True
    reward_loss_coef: float = 1.0
    # uncertainty backend
    uncertainty: str = "ensemble"  # "ensemble" | "counts"
    count_scale: float = 1.0
    pseudo_count: float = 1.0
    # simple-optimism bonus weight
    optimism_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.tau0 <= 0 or self.tau_min <= 0:
            raise ValueError("temperatures must be positive")
        if not 0.0 <= self.td_lambda <= 1.0:
            raise ValueError("td_lambda must be in [0, 1]")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must be in (0, 1]")
        if self.rollout < 1:
            raise ValueError("rollout must be >= 1")


@dataclass
class Segment:
    """Contiguous steps from one episode (never crosses an episode end)."""

    idx: np.ndarray        # global one-hot state indices, (n,)
    layers: np.ndarray     # (n,)
    states: np.ndarray     # per-layer local state ids, (n,)
    actions: np.ndarray    # (n,)
    rewards: np.ndarray    # observed env rewards, (n,)
    behavior: np.ndarray   # behavior probabilities of the taken actions, (n,)
    tail_idx: int | None   # successor state index for bootstrap; None = terminal

    def __len__(self):
        return len(self.actions)


@dataclass
class UpdatePart:
    """One segment's contribution to a combined update."""

    segment: Segment
    zeta: np.ndarray | None = None      # (n, K) frozen target noise; None = zeros
    off_policy: bool = False            # apply importance corrections
    rho_bar: float = 1.0
    c_bar: float = 1.0
    slots: np.ndarray | None = None     # replay slots for priority write-back


@dataclass
class StepDiagnostics:
    loss_policy: float = 0.0
    loss_value: float = 0.0
    loss_tau: float = 0.0
    loss_reward: float = 0.0
    grad_tau: float = 0.0
    mean_entropy: float = 0.0
    mean_sigma2: float = 0.0
    n_steps: int = 0
    skipped: bool = False
    deltas: list = field(default_factory=list)  # per-part |soft TD errors|


def soft_value_targets(rewards, bonus, log_pi, value, tail_value, tail_terminal,
                       tau, gamma, lam, rho, c):
    """Shared soft-value recursion for on-policy and importance-corrected
    targets.

    rho/c are the clipped importance ratios (all ones on-policy; the
    on-policy estimator is this recursion at unit ratios, which makes the
    reduction identity exact at the bit level). Returns (khat, u, delta):
    khat are the K targets, u = khat - tau * log pi the soft-value samples
    the critic regresses on, delta the one-step soft TD errors.
    """
    n = len(rewards)
    u = np.empty(n)
    delta = np.empty(n)
    khat = np.empty(n)
    for t in range(n - 1, -1, -1):
        if t == n - 1:
            g = 0.0 if tail_terminal else gamma
            j_next = 0.0 if tail_terminal else tail_value
            u_next = j_next
        else:
            g = gamma
            j_next = value[t + 1]
            u_next = u[t + 1]
        core = rewards[t] + bonus[t] - tau * log_pi[t]
        u[t] = (1.0 - rho[t]) * value[t] + rho[t] * core + g * (
            (rho[t] - c[t] * lam) * j_next + (c[t] * lam) * u_next
        )
        delta[t] = core + g * j_next - value[t]
        khat[t] = u[t] + tau * log_pi[t]
    return khat, u, delta


def td_lambda_k_hat(rewards, sigma2, log_pi, value, tail_value, tail_terminal,
                    tau, gamma, lam):
    """On-policy K-value targets (the unit-ratio soft-value recursion)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    ones = np.ones(len(rewards))
    bonus = np.asarray(sigma2, dtype=np.float64) / (2.0 * tau)
    khat, _, _ = soft_value_targets(
        np.asarray(rewards, dtype=np.float64), bonus,
        np.asarray(log_pi, dtype=np.float64), np.asarray(value, dtype=np.float64),
        tail_value, tail_terminal, tau, gamma, lam, ones, ones,
    )
    return khat


class ErsacAgent:
    """Mutable training state: network, temperature, visit counts."""

    def __init__(self, mdp: TabularMDP, config: ErsacConfig, rng):
        self.mdp = mdp
        self.config = config
        self.rng = rng
        self.offsets = np.concatenate(([0], np.cumsum(mdp.layer_sizes)[:-1]))
        net_cfg = NetConfig(
            input_dim=mdp.total_states,
            num_actions=mdp.num_actions,
            hidden=tuple(config.hidden),
            ensemble_size=config.ensemble_size,
            prior_scale=config.prior_scale,
            prior_hidden=config.prior_hidden,
        )
        self.net = PolicyValueNet(net_cfg, rng)
        self.opt = make_optimizer(config.optimizer, config.lr)
        self._grad_scratch = np.empty_like(self.net.flat_params)
        self.tau = float(config.tau0)
        self.learn_tau = config.mode == "ersac"
        self.counts = VisitCounts(list(mdp.layer_sizes), mdp.num_actions)
        self.count_sigma = CountUncertainty(config.count_scale, self.counts, config.pseudo_count)
        self.episodes = 0
        self.updates = 0
        self.skipped_updates = 0

    # -- acting -------------------------------------------------------------
    def global_index(self, layer: int, state: int) -> int:
        return int(self.offsets[layer] + state)

    def policy_probs(self, layer: int, state: int) -> np.ndarray:
        return self.net.act_probs(self.global_index(layer, state))

    def run_episode(self, update=None):
        """Roll one episode, handing each completed segment to `update`.

        `update` defaults to the on-policy step. Returns (episode return,
        list of diagnostics, steps).
        """
        if update is None:
            update = self.step
        mdp = self.mdp
        rng = self.rng
        n_cap = self.config.rollout
        s = mdp.sample_initial(rng)
        buf_idx, buf_l, buf_s, buf_a, buf_r, buf_mu = [], [], [], [], [], []
        diags = []
        total = 0.0
        for l in range(mdp.horizon):
            gi = self.global_index(l, s)
            probs = self.net.act_probs(gi)
            a = sample_categorical(probs, rng.random())
            r = mdp.sample_reward(l, s, a, rng)
            total += r
            buf_idx.append(gi)
            buf_l.append(l)
            buf_s.append(s)
            buf_a.append(a)
            buf_r.append(r)
            buf_mu.append(float(probs[a]))
            last = l == mdp.horizon - 1
            if not last:
                s = mdp.sample_next(l, s, a, rng)
            if last or len(buf_a) == n_cap:
                tail = None if last else self.global_index(l + 1, s)
                seg = Segment(
                    idx=np.array(buf_idx, dtype=np.int64),
                    layers=np.array(buf_l, dtype=np.int64),
                    states=np.array(buf_s, dtype=np.int64),
                    actions=np.array(buf_a, dtype=np.int64),
                    rewards=np.array(buf_r, dtype=np.float64),
                    behavior=np.array(buf_mu, dtype=np.float64),
                    tail_idx=tail,
                )
                diags.append(update(seg))
                buf_idx, buf_l, buf_s, buf_a, buf_r, buf_mu = [], [], [], [], [], []
        self.episodes += 1
        return total, diags, mdp.horizon

    # -- updating -----------------------------------------------------------
    def step(self, segment: Segment) -> StepDiagnostics:
        """One on-policy update from a single segment."""
        return self.update_from_parts([UpdatePart(segment=segment)])

    def update_from_parts(self, parts: list[UpdatePart]) -> StepDiagnostics:
        cfg = self.config
        tau = self.tau
        k_heads = cfg.ensemble_size
        sizes = [len(p.segment) for p in parts]
        n_tot = int(sum(sizes))
        all_idx = np.concatenate([p.segment.idx for p in parts])
        tail_states = [p.segment.tail_idx for p in parts if p.segment.tail_idx is not None]
        fwd_idx = np.concatenate([all_idx, np.array(tail_states, dtype=np.int64)]) \
            if tail_states else all_idx
        cache = self.net.forward_batch(fwd_idx)
        values = cache.value[:n_tot]
        logpi_rows = cache.log_policy[:n_tot]
        pi_rows = cache.policy[:n_tot]
        preds = cache.preds[:, :n_tot, :]
        tail_values = cache.value[n_tot:]

        actions = np.concatenate([p.segment.actions for p in parts])
        rewards = np.concatenate([p.segment.rewards for p in parts])
        rows = np.arange(n_tot)
        logpi_a = logpi_rows[rows, actions]
        ent = entropy_rows(pi_rows)
        preds_taken = preds[:, rows, actions]  # (K, n)
        sigma2_ens = preds_taken.var(axis=0)

        if cfg.mode == "ersac":
            if cfg.uncertainty == "ensemble":
                sigma2 = sigma2_ens
            else:
                tabs = self.count_sigma.sigma2_tables()
                sigma2 = np.empty(n_tot)
                o = 0
                for p in parts:
                    seg = p.segment
                    sigma2[o:o + len(seg)] = tabs_lookup(tabs, seg)
                    o += len(seg)
            target_rewards = rewards
        elif cfg.mode == "simple_optimism":
            sigma2 = np.zeros(n_tot)
            target_rewards = rewards + cfg.optimism_scale * np.sqrt(sigma2_ens)
        else:  # vanilla
            sigma2 = np.zeros(n_tot)
            target_rewards = rewards

        bonus = sigma2 / (2.0 * tau)

        khat = np.empty(n_tot)
        u_targ = np.empty(n_tot)
        weights = np.ones(n_tot)
        deltas = []
        o = 0
        t_used = 0
        for p in parts:
            seg = p.segment
            n = len(seg)
            sl = slice(o, o + n)
            if seg.tail_idx is None:
                tail_v, tail_term = 0.0, True
            else:
                tail_v, tail_term = float(tail_values[t_used]), False
                t_used += 1
            if p.off_policy:
                ratio = np.exp(logpi_a[sl]) / seg.behavior
                rho = np.minimum(p.rho_bar, ratio)
                c = np.minimum(p.c_bar, ratio)
            else:
                rho = np.ones(n)
                c = np.ones(n)
            kh, ut, dl = soft_value_targets(
                target_rewards[sl], bonus[sl], logpi_a[sl], values[sl],
                tail_v, tail_term, tau, cfg.discount, cfg.td_lambda, rho, c,
            )
            khat[sl] = kh
            u_targ[sl] = ut
            weights[sl] = rho
            deltas.append(np.abs(dl))
            o += n

        adv = khat - values
        # policy head adjoints: ascent on  mean[w * logpi * sg(adv) + tau * H]
        coef = weights * adv / n_tot
        adj_logits = coef[:, None] * (-pi_rows)
        adj_logits[rows, actions] += coef
        if cfg.entropy_in_policy_loss:
            adj_logits += (tau / n_tot) * (-pi_rows * (logpi_rows + ent[:, None]))
        # value head: descent on mean[(J - sg(U))^2]
        adj_value = -(2.0 / n_tot) * (values - u_targ)
        # reward heads: descent on mean over steps and heads of squared error
        if len(parts) == 1 and parts[0].zeta is None:
            zeta = np.zeros((n_tot, k_heads))
        else:
            zeta = np.concatenate([
                p.zeta if p.zeta is not None else np.zeros((len(p.segment), k_heads))
                for p in parts
            ])
        head_targets = rewards[None, :] + zeta.T  # raw rewards, never the bonus
        head_err = preds_taken - head_targets
        adj_preds = np.zeros_like(cache.preds)
        adj_preds[:, rows, actions] = -cfg.reward_loss_coef * 2.0 * head_err / (n_tot * k_heads)

        diag = StepDiagnostics(
            loss_policy=float(np.mean(weights * logpi_a * adv + cfg.entropy_in_policy_loss * tau * ent)),
            loss_value=float(np.mean((values - u_targ) ** 2)),
            loss_tau=float(np.mean(bonus + tau * ent)),
            loss_reward=float(np.mean(head_err**2)),
            grad_tau=float(np.mean(ent - sigma2 / (2.0 * tau * tau))),
            mean_entropy=float(ent.mean()),
            mean_sigma2=float(sigma2.mean() if cfg.mode != "simple_optimism" else sigma2_ens.mean()),
            n_steps=n_tot,
            deltas=deltas,
        )

        if not (np.isfinite(khat).all() and np.isfinite(adj_logits).all()):
            diag.skipped = True
            self.skipped_updates += 1
            return diag

        grads = self.net.backward_batch(cache, _pad_rows(adj_logits, cache.value.shape[0]),
                                        _pad_vec(adj_value, cache.value.shape[0]),
                                        _pad_preds(adj_preds, cache.value.shape[0]))
        try:
            optimizer_step(self.net, grads, self.opt, scratch=self._grad_scratch)
        except ValueError:
            diag.skipped = True
            self.skipped_updates += 1
            return diag

        if self.learn_tau:
            self.tau = float(np.clip(tau - cfg.tau_lr * diag.grad_tau, cfg.tau_min, cfg.tau_max))

        for p in parts:
            seg = p.segment
            for l, s, a in zip(seg.layers, seg.states, seg.actions):
                self.counts.add(int(l), int(s), int(a))
        self.updates += 1
        return diag


def _pad_rows(adj, n_full):
    if adj.shape[0] == n_full:
        return adj
    out = np.zeros((n_full, adj.shape[1]))
    out[: adj.shape[0]] = adj
    return out


def _pad_vec(adj, n_full):
    if adj.shape[0] == n_full:
        return adj
    out = np.zeros(n_full)
    out[: adj.shape[0]] = adj
    return out


def _pad_preds(adj, n_full):
    if adj.shape[1] == n_full:
        return adj
    out = np.zeros((adj.shape[0], n_full, adj.shape[2]))
    out[:, : adj.shape[1], :] = adj
    return out


def tabs_lookup(tabs, seg: Segment) -> np.ndarray:
    out = np.empty(len(seg))
    for i, (l, s, a) in enumerate(zip(seg.layers, seg.states, seg.actions)):
        out[i] = tabs[int(l)][int(s), int(a)]
    return out


@dataclass
class EpisodeRecord:
    episode: int
    episode_return: float
    tau: float
    mean_entropy: float
    mean_sigma2: float
    loss_policy: float
    loss_value: float
    loss_tau: float
    loss_reward: float
    skipped: int


def run_training(mdp: TabularMDP, config: ErsacConfig, seed: int, budget: int,
                 sink=None, stop_fn=None, update=None, agent: ErsacAgent | None = None):
    """Train for up to `budget` episodes; returns (agent, returns list).

    `sink(record)` receives one EpisodeRecord per episode; `stop_fn(returns)`
    may end the run early (solve detection lives in the harness).
    """
    rng = np.random.default_rng(seed)
    if agent is None:
        agent = ErsacAgent(mdp, config, rng)
    returns = []
    for ep in range(budget):
        total, diags, _ = agent.run_episode(update=update)
        returns.append(total)
        if sink is not None:
            d = diags[-1] if diags else StepDiagnostics()
            sink(EpisodeRecord(
                episode=ep + 1, episode_return=total, tau=agent.tau,
                mean_entropy=d.mean_entropy, mean_sigma2=d.mean_sigma2,
                loss_policy=d.loss_policy, loss_value=d.loss_value,
                loss_tau=d.loss_tau, loss_reward=d.loss_reward,
                skipped=int(d.skipped),
            ))
        if stop_fn is not None and stop_fn(returns):
            break
    return agent, returns
