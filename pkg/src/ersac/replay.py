"""Noise-augmented prioritized replay and importance-corrected targets.

Each stored transition carries a noise vector zeta drawn once at insertion;
replayed reward targets are r + zeta_k per ensemble head, so epistemic
uncertainty decays with the number of real observations rather than the
number of replay passes. Sampling draws segment starts proportional to
priority^alpha; segments run forward up to the rollout length, truncating
at episode ends.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agent import ErsacAgent, Segment, StepDiagnostics, UpdatePart, soft_value_targets

PRIORITY_EPS = 1e-6


@dataclass
class VTraceConfig:
    rho_bar: float = 1.0
    c_bar: float = 1.0

    def __post_init__(self):
        if not self.rho_bar >= self.c_bar > 0:
            raise ValueError("need rho_bar >= c_bar > 0")


@dataclass
class ReplayConfig:
    capacity: int = 100_000
    alpha: float = 1.0
    batch_size: int = 16
    offline_fraction: float = 0.97
    noise_var: float = 0.1
    vtrace: VTraceConfig = None

    def __post_init__(self):
        if not 0.0 <= self.offline_fraction <= 1.0:
            raise ValueError("offline_fraction must be in [0, 1]")
        if self.noise_var < 0:
            raise ValueError("noise_var must be nonnegative")
        if self.vtrace is None:
            self.vtrace = VTraceConfig()


@dataclass
class ReplayItem:
    """One stored transition (returned by lookups; storage is columnar)."""

    idx: int
    layer: int
    state: int
    action: int
    reward: float
    zeta: np.ndarray
    behavior: float
    episode_id: int
    step_id: int
    priority: float
    next_idx: int
    terminal: bool


class ReplayBuffer:
    """Ring buffer with proportional prioritized sampling of segments."""

    def __init__(self, capacity: int, ensemble_size: int, noise_var: float,
                 alpha: float = 1.0):
        if capacity < 1 or ensemble_size < 1:
            raise ValueError("capacity and ensemble_size must be >= 1")
        self.capacity = capacity
        self.k = ensemble_size
        self.noise_var = noise_var
        self.alpha = alpha
        self.size = 0
        self._head = 0  # next write slot
        self.idx = np.zeros(capacity, dtype=np.int64)
        self.layer = np.zeros(capacity, dtype=np.int64)
        self.state = np.zeros(capacity, dtype=np.int64)
        self.action = np.zeros(capacity, dtype=np.int64)
        self.reward = np.zeros(capacity)
        self.zeta = np.zeros((capacity, ensemble_size))
        self.behavior = np.zeros(capacity)
        self.episode_id = np.full(capacity, -1, dtype=np.int64)
        self.step_id = np.zeros(capacity, dtype=np.int64)
        self.priority = np.zeros(capacity)
        self.next_idx = np.zeros(capacity, dtype=np.int64)
        self.terminal = np.zeros(capacity, dtype=bool)

    def __len__(self):
        return self.size

    def push(self, idx, layer, state, action, reward, behavior, episode_id, step_id,
             next_idx, terminal, rng):
        """Store one transition with a fresh frozen noise vector."""
        slot = self._head
        if self.noise_var > 0:
            z = np.sqrt(self.noise_var) * rng.standard_normal(self.k)
        else:
            z = np.zeros(self.k)
        init_p = self.priority[: self.size].max() if self.size else 1.0
        self.idx[slot] = idx
        self.layer[slot] = layer
        self.state[slot] = state
        self.action[slot] = action
        self.reward[slot] = reward
        self.zeta[slot] = z
        self.behavior[slot] = behavior
        self.episode_id[slot] = episode_id
        self.step_id[slot] = step_id
        self.priority[slot] = init_p
        self.next_idx[slot] = next_idx
        self.terminal[slot] = terminal
        self._head = (self._head + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def push_segment(self, seg: Segment, episode_id: int, step0: int, rng):
        n = len(seg)
        for i in range(n):
            last = i == n - 1
            if last:
                nxt = -1 if seg.tail_idx is None else seg.tail_idx
                term = seg.tail_idx is None
            else:
                nxt = int(seg.idx[i + 1])
                term = False
            self.push(int(seg.idx[i]), int(seg.layers[i]), int(seg.states[i]),
                      int(seg.actions[i]), float(seg.rewards[i]), float(seg.behavior[i]),
                      episode_id, step0 + i, nxt, term, rng)

    def item(self, slot: int) -> ReplayItem:
        return ReplayItem(
            idx=int(self.idx[slot]), layer=int(self.layer[slot]), state=int(self.state[slot]),
            action=int(self.action[slot]), reward=float(self.reward[slot]),
            zeta=self.zeta[slot].copy(), behavior=float(self.behavior[slot]),
            episode_id=int(self.episode_id[slot]), step_id=int(self.step_id[slot]),
            priority=float(self.priority[slot]), next_idx=int(self.next_idx[slot]),
            terminal=bool(self.terminal[slot]),
        )

    def _order(self):
        """Live slots in insertion order (oldest first)."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self._head) % self.capacity

    def sample(self, n: int, segment_len: int, rng):
        """Draw `n` segment starts proportional to priority^alpha.

        Returns (segments, flag) where flag is True when fewer than `n`
        distinct items were available. Each segment is (slots, Segment,
        zeta (m, K)); slots index this buffer for priority write-back.
        """
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        short = self.size < n
        draws = min(n, self.size)
        order = self._order()
        p = self.priority[order] ** self.alpha
        total = p.sum()
        if total <= 0:
            probs = np.full(len(order), 1.0 / len(order))
        else:
            probs = p / total
        cum = np.cumsum(probs)
        out = []
        for _ in range(draws):
            u = rng.random()
            pos = int(np.searchsorted(cum, u, side="right"))
            pos = min(pos, len(order) - 1)
            out.append(self._segment_at(order, pos, segment_len))
        return out, short

    def _segment_at(self, order, pos, segment_len):
        slots = [order[pos]]
        ep = self.episode_id[order[pos]]
        while (
            len(slots) < segment_len
            and pos + len(slots) < len(order)
            and self.episode_id[order[pos + len(slots)]] == ep
            and self.step_id[order[pos + len(slots)]] == self.step_id[slots[-1]] + 1
        ):
            slots.append(order[pos + len(slots)])
        slots = np.asarray(slots, dtype=np.int64)
        last = slots[-1]
        seg = Segment(
            idx=self.idx[slots].copy(),
            layers=self.layer[slots].copy(),
            states=self.state[slots].copy(),
            actions=self.action[slots].copy(),
            rewards=self.reward[slots].copy(),
            behavior=self.behavior[slots].copy(),
            tail_idx=None if self.terminal[last] else int(self.next_idx[last]),
        )
        return slots, seg, self.zeta[slots].copy()

    def update_priorities(self, slots, td_errors):
        slots = np.asarray(slots, dtype=np.int64)
        if (slots < 0).any() or (slots >= self.capacity).any():
            raise IndexError("slot out of range")
        self.priority[slots] = np.abs(np.asarray(td_errors, dtype=np.float64)) + PRIORITY_EPS

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {
            name: getattr(self, name)
            for name in ("idx", "layer", "state", "action", "reward", "zeta", "behavior",
                         "episode_id", "step_id", "priority", "next_idx", "terminal")
        }
        out["meta"] = np.array([self.size, self._head, self.capacity, self.k], dtype=np.int64)
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        meta = arrays["meta"]
        if int(meta[2]) != self.capacity or int(meta[3]) != self.k:
            raise ValueError("buffer shape mismatch")
        self.size, self._head = int(meta[0]), int(meta[1])
        for name in ("idx", "layer", "state", "action", "reward", "zeta", "behavior",
                     "episode_id", "step_id", "priority", "next_idx", "terminal"):
            getattr(self, name)[...] = arrays[name]


def vtrace_k_targets(rewards, sigma2, log_pi, behavior, value, tail_value, tail_terminal,
                     tau, gamma, lam, vcfg: VTraceConfig):
    """Importance-corrected K targets for an off-policy segment.

    log_pi are current-policy log-probabilities of the stored actions and
    `behavior` the recorded probabilities. Returns (khat, rho, delta):
    targets, clipped policy-gradient weights, and soft TD errors.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    behavior = np.asarray(behavior, dtype=np.float64)
    if (behavior <= 0).any():
        raise ValueError("behavior probabilities must be positive")
    ratio = np.exp(np.asarray(log_pi, dtype=np.float64)) / behavior
    rho = np.minimum(vcfg.rho_bar, ratio)
    c = np.minimum(vcfg.c_bar, ratio)
    bonus = np.asarray(sigma2, dtype=np.float64) / (2.0 * tau)
    khat, _, delta = soft_value_targets(
        np.asarray(rewards, dtype=np.float64), bonus,
        np.asarray(log_pi, dtype=np.float64), np.asarray(value, dtype=np.float64),
        tail_value, tail_terminal, tau, gamma, lam, rho, c,
    )
    return khat, rho, delta


def offline_segment_count(cfg: ReplayConfig) -> int:
    """Offline segments per batch; at least one slot is kept online."""
    want = int(np.ceil(cfg.offline_fraction * cfg.batch_size))
    return min(want, cfg.batch_size - 1) if cfg.batch_size > 1 else 0


def mixed_step(agent: ErsacAgent, online_segment: Segment, buffer: ReplayBuffer,
               cfg: ReplayConfig, episode_id: int, step0: int, rng) -> StepDiagnostics:
    """One combined update from the fresh segment plus replayed segments.

    Replayed parts take the importance-corrected path with stored noisy
    reward targets; the fresh part takes the on-policy path. TD-error
    priorities are written back and the fresh segment is pushed afterwards.
    """
    parts = [UpdatePart(segment=online_segment)]
    n_off = offline_segment_count(cfg)
    if n_off > 0 and len(buffer) > 0:
        batch, _ = buffer.sample(n_off, agent.config.rollout, rng)
        for slots, seg, zeta in batch:
            parts.append(UpdatePart(
                segment=seg, zeta=zeta, off_policy=True,
                rho_bar=cfg.vtrace.rho_bar, c_bar=cfg.vtrace.c_bar, slots=slots,
            ))
    diag = agent.update_from_parts(parts)
    if not diag.skipped:
        for part, deltas in zip(parts, diag.deltas):
            if part.slots is not None:
                buffer.update_priorities(part.slots, deltas)
    buffer.push_segment(online_segment, episode_id, step0, rng)
    return diag


class ReplayUpdater:
    """Segment-update callable wiring mixed_step into a training run."""

    def __init__(self, agent: ErsacAgent, buffer: ReplayBuffer, cfg: ReplayConfig):
        self.agent = agent
        self.buffer = buffer
        self.cfg = cfg
        self._episode = -1
        self._offset = 0

    def __call__(self, seg: Segment) -> StepDiagnostics:
        ep = self.agent.episodes  # id of the episode in progress
        if ep != self._episode:
            self._episode, self._offset = ep, 0
        diag = mixed_step(self.agent, seg, self.buffer, self.cfg, ep, self._offset,
                          self.agent.rng)
        self._offset += len(seg)
        return diag
