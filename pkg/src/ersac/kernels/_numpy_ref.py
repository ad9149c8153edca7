"""Pure-numpy implementations of the hot network kernels.

All functions operate on float64 arrays and mirror the signatures of the
compiled backend exactly. States enter as integer indices into a one-hot
basis, so the first torso layer is an embedding-row lookup instead of a
matmul.
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"


def act_policy(torso_w, torso_b, wp, bp, idx):
    """Policy distribution at a single one-hot state index.

    torso_w[0] has shape (input_dim, h1); subsequent layers (h_i, h_{i+1}).
    Returns the softmax over the policy logits, shape (A,).
    """
    h = np.tanh(torso_w[0][idx] + torso_b[0])
    for w, b in zip(torso_w[1:], torso_b[1:]):
        h = np.tanh(h @ w + b)
    z = h @ wp + bp
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def forward_batch(torso_w, torso_b, wp, bp, wv, bv, wr, br, idx):
    """Batched forward pass over state indices `idx` (shape (n,)).

    Returns (hs, logits, value, preds):
      hs      list of per-layer activations, each (n, h_j)
      logits  (n, A) policy logits
      value   (n,) state-value outputs
      preds   (K, n, A) trainable reward-head outputs (prior not included)
    """
    h = np.tanh(torso_w[0][idx] + torso_b[0])
    hs = [h]
    for w, b in zip(torso_w[1:], torso_b[1:]):
        h = np.tanh(h @ w + b)
        hs.append(h)
    logits = h @ wp + bp
    value = h @ wv + bv[0]
    preds = np.einsum("nh,kha->kna", h, wr) + br[:, None, :]
    return hs, logits, value, preds


def backward_batch(torso_w, torso_b, wp, wv, wr, idx, hs, adj_logits, adj_value, adj_preds):
    """Reverse-mode gradients of sum(adjoint * output) over all heads.

    `hs` is the activation list from forward_batch for the same `idx`.
    Returns (g_tw, g_tb, g_wp, g_bp, g_wv, g_bv, g_wr, g_br) with shapes
    matching the parameters. g_tw[0] accumulates one-hot rows via
    scatter-add over `idx`.
    """
    h_last = hs[-1]
    g_wp = h_last.T @ adj_logits
    g_bp = adj_logits.sum(axis=0)
    g_wv = h_last.T @ adj_value
    g_bv = np.array([adj_value.sum()])
    g_wr = np.einsum("nh,kna->kha", h_last, adj_preds)
    g_br = adj_preds.sum(axis=1)

    d_h = adj_logits @ wp.T + adj_value[:, None] * wv[None, :]
    d_h = d_h + np.einsum("kna,kha->nh", adj_preds, wr)

    g_tw = [None] * len(torso_w)
    g_tb = [None] * len(torso_b)
    for j in range(len(torso_w) - 1, 0, -1):
        delta = d_h * (1.0 - hs[j] ** 2)
        g_tw[j] = hs[j - 1].T @ delta
        g_tb[j] = delta.sum(axis=0)
        d_h = delta @ torso_w[j].T
    delta = d_h * (1.0 - hs[0] ** 2)
    g0 = np.zeros_like(torso_w[0])
    np.add.at(g0, idx, delta)
    g_tw[0] = g0
    g_tb[0] = delta.sum(axis=0)
    return g_tw, g_tb, g_wp, g_bp, g_wv, g_bv, g_wr, g_br
