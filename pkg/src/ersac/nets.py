"""Multilayer-perceptron policy/value/reward-ensemble network with manual
reverse-mode gradients.

The shared tanh torso feeds a softmax policy head, a scalar value head, and
K trainable reward heads (one output per action). Each reward head is paired
with a fixed random prior network evaluated on the raw one-hot input; prior
parameters never train. Because inputs are one-hot, prior networks are
evaluated once at construction into a lookup table.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import kernels


def orthogonal_init(rng, fan_in: int, fan_out: int, gain: float = 1.0) -> np.ndarray:
    """Orthogonal-style scaled init (sign-fixed QR for determinism)."""
    a = rng.standard_normal((max(fan_in, fan_out), min(fan_in, fan_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if fan_in < fan_out:
        q = q.T
    return gain * q[:fan_in, :fan_out].copy()


@dataclass
class NetConfig:
    input_dim: int
    num_actions: int
    hidden: tuple[int, ...] = (64, 64)
    ensemble_size: int = 10
    prior_scale: float = 1.0
    prior_hidden: int = 16


@dataclass
class ForwardCache:
    idx: np.ndarray
    hs: list[np.ndarray]
    logits: np.ndarray
    policy: np.ndarray
    log_policy: np.ndarray
    value: np.ndarray
    preds: np.ndarray  # (K, n, A), prior included


@dataclass
class GradientBundle:
    """Per-parameter accumulators aligned with the trainable blocks."""

    torso_w: list[np.ndarray]
    torso_b: list[np.ndarray]
    wp: np.ndarray
    bp: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wr: np.ndarray
    br: np.ndarray

    def blocks(self):
        out = []
        for i, (w, b) in enumerate(zip(self.torso_w, self.torso_b)):
            out.append((f"torso.{i}.w", w))
            out.append((f"torso.{i}.b", b))
        out += [("policy.w", self.wp), ("policy.b", self.bp), ("value.w", self.wv),
                ("value.b", self.bv), ("reward.w", self.wr), ("reward.b", self.br)]
        return out

    def flatten(self) -> np.ndarray:
        return np.concatenate([arr.ravel() for _, arr in self.blocks()])

    def flatten_into(self, out: np.ndarray) -> np.ndarray:
        off = 0
        for _, arr in self.blocks():
            n = arr.size
            out[off:off + n] = arr.ravel()
            off += n
        return out


def softmax_rows(logits: np.ndarray):
    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    e = np.exp(z)
    s = e.sum(axis=1, keepdims=True)
    pi = e / s
    logpi = z - np.log(s)
    return pi, logpi


class PolicyValueNet:
    """Trainable parameters plus frozen randomized priors.

    Trainable blocks are views into one contiguous buffer (`flat_params`),
    so optimizer updates are single vectorized operations.
    """

    def __init__(self, cfg: NetConfig, rng):
        self.cfg = cfg
        dims = [cfg.input_dim, *cfg.hidden]
        h = dims[-1]
        a = cfg.num_actions
        shapes = []
        for i in range(len(dims) - 1):
            shapes.append((f"torso.{i}.w", (dims[i], dims[i + 1])))
            shapes.append((f"torso.{i}.b", (dims[i + 1],)))
        shapes += [("policy.w", (h, a)), ("policy.b", (a,)), ("value.w", (h,)),
                   ("value.b", (1,)), ("reward.w", (cfg.ensemble_size, h, a)),
                   ("reward.b", (cfg.ensemble_size, a))]
        total = sum(int(np.prod(s)) for _, s in shapes)
        self.flat_params = np.zeros(total)
        views = {}
        off = 0
        for name, shape in shapes:
            n = int(np.prod(shape))
            views[name] = self.flat_params[off:off + n].reshape(shape)
            off += n
        self._block_shapes = shapes
        self.torso_w = [views[f"torso.{i}.w"] for i in range(len(dims) - 1)]
        self.torso_b = [views[f"torso.{i}.b"] for i in range(len(dims) - 1)]
        self.wp = views["policy.w"]
        self.bp = views["policy.b"]
        self.wv = views["value.w"]
        self.bv = views["value.b"]
        self.wr = views["reward.w"]
        self.br = views["reward.b"]
        for i in range(len(dims) - 1):
            self.torso_w[i][...] = orthogonal_init(rng, dims[i], dims[i + 1])
        self.prior_params = []
        tables = []
        for _ in range(cfg.ensemble_size):
            v1 = rng.standard_normal((cfg.input_dim, cfg.prior_hidden))
            c1 = rng.standard_normal(cfg.prior_hidden) * 0.5
            v2 = rng.standard_normal((cfg.prior_hidden, a)) / np.sqrt(cfg.prior_hidden)
            c2 = rng.standard_normal(a) * 0.1
            self.prior_params.append((v1, c1, v2, c2))
            tables.append(np.tanh(v1 + c1[None, :]) @ v2 + c2[None, :])
        self.prior_table = np.stack(tables)  # (K, input_dim, A)

    # -- forward -----------------------------------------------------------
    def act_probs(self, idx: int) -> np.ndarray:
        return kernels.act_policy(self.torso_w, self.torso_b, self.wp, self.bp, idx)

    def forward_batch(self, idx: np.ndarray) -> ForwardCache:
        idx = np.ascontiguousarray(idx, dtype=np.int64)
        hs, logits, value, preds = kernels.forward_batch(
            self.torso_w, self.torso_b, self.wp, self.bp, self.wv, self.bv,
            self.wr, self.br, idx,
        )
        pi, logpi = softmax_rows(logits)
        preds = preds + self.cfg.prior_scale * self.prior_table[:, idx, :]
        return ForwardCache(idx=idx, hs=hs, logits=logits, policy=pi,
                            log_policy=logpi, value=value, preds=preds)

    def forward(self, idx: int):
        """Single-state forward: (logits, value, (K, A) reward predictions)."""
        c = self.forward_batch(np.array([idx], dtype=np.int64))
        return c.logits[0], float(c.value[0]), c.preds[:, 0, :]

    # -- backward ----------------------------------------------------------
    def backward_batch(self, cache: ForwardCache, adj_logits, adj_value, adj_preds) -> GradientBundle:
        g = kernels.backward_batch(
            self.torso_w, self.torso_b, self.wp, self.wv, self.wr,
            cache.idx, cache.hs,
            np.ascontiguousarray(adj_logits), np.ascontiguousarray(adj_value),
            np.ascontiguousarray(adj_preds),
        )
        return GradientBundle(*g)

    def zero_grads(self) -> GradientBundle:
        return GradientBundle(
            [np.zeros_like(w) for w in self.torso_w],
            [np.zeros_like(b) for b in self.torso_b],
            np.zeros_like(self.wp), np.zeros_like(self.bp),
            np.zeros_like(self.wv), np.zeros_like(self.bv),
            np.zeros_like(self.wr), np.zeros_like(self.br),
        )

    # -- parameter plumbing --------------------------------------------------
    def param_blocks(self):
        out = []
        for i, (w, b) in enumerate(zip(self.torso_w, self.torso_b)):
            out.append((f"torso.{i}.w", w))
            out.append((f"torso.{i}.b", b))
        out += [("policy.w", self.wp), ("policy.b", self.bp), ("value.w", self.wv),
                ("value.b", self.bv), ("reward.w", self.wr), ("reward.b", self.br)]
        return out

    @property
    def num_params(self) -> int:
        trainable = sum(arr.size for _, arr in self.param_blocks())
        frozen = sum(sum(p.size for p in head) for head in self.prior_params)
        return trainable + frozen

    def prior_hash(self) -> str:
        h = hashlib.sha256()
        for head in self.prior_params:
            for p in head:
                h.update(p.tobytes())
        h.update(self.prior_table.tobytes())
        return h.hexdigest()

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {name: arr for name, arr in self.param_blocks()}
        for k, head in enumerate(self.prior_params):
            for j, p in enumerate(head):
                out[f"prior.{k}.{j}"] = p
        out["prior_table"] = self.prior_table
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        for name, arr in self.param_blocks():
            arr[...] = arrays[name]
        for k, head in enumerate(self.prior_params):
            for j, p in enumerate(head):
                p[...] = arrays[f"prior.{k}.{j}"]
        self.prior_table[...] = arrays["prior_table"]


# ---------------------------------------------------------------------------
# Optimizers over flat parameter vectors. Convention: step ADDS lr-scaled
# updates, so callers encode ascent/descent in the sign of the gradients.

class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: np.ndarray, grads: np.ndarray):
        params += self.lr * grads


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None
        self._s1 = None
        self._s2 = None

    def step(self, params: np.ndarray, grads: np.ndarray):
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
            self._s1 = np.empty_like(params)
            self._s2 = np.empty_like(params)
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        s1, s2 = self._s1, self._s2
        self.m *= self.beta1
        np.multiply(grads, 1.0 - self.beta1, out=s1)
        self.m += s1
        self.v *= self.beta2
        np.multiply(grads, grads, out=s1)
        s1 *= 1.0 - self.beta2
        self.v += s1
        np.divide(self.v, b2c, out=s1)
        np.sqrt(s1, out=s1)
        s1 += self.eps
        np.divide(self.m, s1, out=s2)
        s2 *= self.lr / b1c
        params += s2


def make_optimizer(kind: str, lr: float):
    if kind == "sgd":
        return Sgd(lr)
    if kind == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {kind!r}")


def optimizer_step(net: PolicyValueNet, grads: GradientBundle, opt,
                   scratch: np.ndarray | None = None) -> None:
    """Apply one update; rejects non-finite gradients."""
    if scratch is None:
        flat = grads.flatten()
    else:
        flat = grads.flatten_into(scratch)
    if not np.isfinite(flat).all():
        raise ValueError("non-finite gradient")
    opt.step(net.flat_params, flat)


# ---------------------------------------------------------------------------

def grad_check(f, blocks, analytic, h: float = 1e-5, abs_floor: float = 1e-6):
    """Central-difference certification of analytic gradients.

    `f()` evaluates the scalar objective at the current parameter values;
    `blocks` is a list of (name, array) parameters perturbed in place;
    `analytic` is the aligned list of (name, gradient array).
    Returns (max relative error, {block name: max relative error}).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    report = {}
    worst = 0.0
    for (name, p), (_, g) in zip(blocks, analytic):
        flat_p = p.reshape(-1)
        flat_g = np.asarray(g).reshape(-1)
        err = 0.0
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            fp = f()
            flat_p[i] = orig - h
            fm = f()
            flat_p[i] = orig
            fd = (fp - fm) / (2.0 * h)
            denom = max(abs(fd), abs(flat_g[i]), abs_floor)
            err = max(err, abs(fd - flat_g[i]) / denom)
        report[name] = err
        worst = max(worst, err)
    return worst, report
