"""Epistemic uncertainty backends.

Two interchangeable signals: exact visitation-count decay for tabular
oracles, and disagreement across an ensemble of reward heads with frozen
randomized priors for the deep agent. The canonical signal is the standard
deviation; square it wherever a variance is needed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import NetConfig, PolicyValueNet, make_optimizer, optimizer_step


@dataclass
class VisitCounts:
    """Per-layer (s, a) visit counters."""

    layer_sizes: list[int]
    num_actions: int
    counts: list[np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.counts is None:
            self.counts = [np.zeros((n, self.num_actions), dtype=np.int64) for n in self.layer_sizes]

    def add(self, layer: int, state: int, action: int, k: int = 1):
        self.counts[layer][state, action] += k

    def n(self, layer: int, state: int, action: int) -> int:
        return int(self.counts[layer][state, action])


@dataclass
class CountUncertainty:
    """sigma^2(s, a) = base_scale^2 / (n(s, a) + pseudo_count)."""

    base_scale: float
    counts: VisitCounts
    pseudo_count: float = 1.0

    def __post_init__(self):
        if self.base_scale <= 0 or self.pseudo_count <= 0:
            raise ValueError("base_scale and pseudo_count must be positive")

    def sigma2(self, layer: int, state: int, action: int) -> float:
        n = self.counts.n(layer, state, action)
        return self.base_scale**2 / (n + self.pseudo_count)

    def sigma2_tables(self) -> list[np.ndarray]:
        return [
            self.base_scale**2 / (c.astype(np.float64) + self.pseudo_count)
            for c in self.counts.counts
        ]


def count_sigma2(cu: CountUncertainty, layer: int, state: int, action: int) -> float:
    return cu.sigma2(layer, state, action)


class RewardEnsemble:
    """Ensemble view over a PolicyValueNet's reward heads and priors.

    Predictions are g_k(s, a) + prior_scale * p_k(s, a); the uncertainty is
    the population variance of the K predictions. Updates take one gradient
    step of the mean (over heads) squared error toward per-head targets
    r + zeta_k; prior parameters never change.
    """

    def __init__(self, net: PolicyValueNet, optimizer: str = "sgd", step_size: float = 0.05):
        if net.cfg.ensemble_size < 2:
            raise ValueError("ensemble needs at least 2 heads")
        self.net = net
        self.opt = make_optimizer(optimizer, step_size)

    @property
    def size(self) -> int:
        return self.net.cfg.ensemble_size

    def predict(self, idx: int) -> np.ndarray:
        """All-head predictions at a state, shape (K, A)."""
        _, _, preds = self.net.forward(idx)
        return preds

    def predict_sa(self, idx: int, action: int) -> np.ndarray:
        return self.predict(idx)[:, action]

    def sigma2(self, idx: int, action: int) -> float:
        p = self.predict_sa(idx, action)
        return float(p.var())

    def sigma(self, idx: int, action: int) -> float:
        return float(np.sqrt(self.sigma2(idx, action)))

    def update(self, idx: np.ndarray, actions: np.ndarray, rewards: np.ndarray,
               zeta: np.ndarray, step_size: float | None = None):
        """One gradient step toward  r_i + zeta_{k,i}  at the taken actions.

        zeta has shape (n, K) (one noise component per head per sample).
        """
        idx = np.asarray(idx, dtype=np.int64)
        n = idx.shape[0]
        zeta = np.asarray(zeta, dtype=np.float64)
        if zeta.shape != (n, self.size):
            raise ValueError(f"zeta must have shape ({n}, {self.size}), got {zeta.shape}")
        cache = self.net.forward_batch(idx)
        taken = cache.preds[:, np.arange(n), actions]  # (K, n)
        targets = rewards[None, :] + zeta.T
        adj_preds = np.zeros_like(cache.preds)
        # descent on mean squared error: pass the negative gradient (the
        # optimizer adds), averaged over samples and heads
        adj_preds[:, np.arange(n), actions] = -2.0 * (taken - targets) / (n * self.size)
        adj_logits = np.zeros_like(cache.logits)
        adj_value = np.zeros_like(cache.value)
        grads = self.net.backward_batch(cache, adj_logits, adj_value, adj_preds)
        if step_size is not None:
            self.opt.lr = step_size
        optimizer_step(self.net, grads, self.opt)


def ensemble_predict(ens: RewardEnsemble, idx: int, action: int) -> np.ndarray:
    return ens.predict_sa(idx, action)


def ensemble_sigma2(ens: RewardEnsemble, idx: int, action: int) -> float:
    return ens.sigma2(idx, action)


def ensemble_update(ens: RewardEnsemble, idx, actions, rewards, zeta, step_size=None):
    ens.update(np.asarray(idx), np.asarray(actions), np.asarray(rewards), zeta, step_size)
