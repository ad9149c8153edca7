"""Layered finite-horizon tabular MDPs, the DeepSea benchmark, episode
sampling, and exact value computation by backward induction.

Layer convention: layers are indexed 0..L-1; transitions `P[l]` map layer-l
state-action pairs to a distribution over layer-(l+1) states, so `P` has
L-1 kernels. The episode terminates after the layer-(L-1) action; values
bootstrap with zero beyond the horizon.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_ATOL = 1e-12


@dataclass
class TabularMDP:
    """Ground-truth layered MDP: kernels, mean rewards, initial distribution.

    transitions: list of L-1 arrays, transitions[l] has shape (n_l, A, n_{l+1})
    rewards:     list of L arrays, rewards[l] has shape (n_l, A)
    initial_dist: shape (n_0,)
    reward_noise_scale: std of additive normal noise on observed rewards
    """

    horizon: int
    layer_sizes: list[int]
    num_actions: int
    transitions: list[np.ndarray]
    rewards: list[np.ndarray]
    initial_dist: np.ndarray
    reward_noise_scale: float = 0.0

    def __post_init__(self):
        self.validate()
        self._cum_p = [np.cumsum(p, axis=-1) for p in self.transitions]
        self._cum_rho = np.cumsum(self.initial_dist)
        support = np.nonzero(self.initial_dist)[0]
        self._init_state = int(support[0]) if len(support) == 1 else None
        self.deterministic = all(
            np.all(np.max(p, axis=-1) > 1.0 - _ATOL) for p in self.transitions
        )
        if self.deterministic:
            self._next = [np.argmax(p, axis=-1) for p in self.transitions]
        else:
            self._next = None

    def validate(self):
        L = self.horizon
        if L < 1:
            raise ValueError("horizon must be >= 1")
        if len(self.layer_sizes) != L or len(self.rewards) != L:
            raise ValueError("layer_sizes and rewards must have one entry per layer")
        if len(self.transitions) != L - 1:
            raise ValueError("need exactly L-1 transition kernels")
        if self.reward_noise_scale < 0:
            raise ValueError("reward_noise_scale must be nonnegative")
        rho = np.asarray(self.initial_dist, dtype=np.float64)
        if rho.shape != (self.layer_sizes[0],) or abs(rho.sum() - 1.0) > _ATOL or (rho < 0).any():
            raise ValueError("initial_dist is not a distribution over layer-0 states")
        for l in range(L):
            if self.rewards[l].shape != (self.layer_sizes[l], self.num_actions):
                raise ValueError(f"rewards[{l}] has wrong shape")
        for l in range(L - 1):
            p = self.transitions[l]
            want = (self.layer_sizes[l], self.num_actions, self.layer_sizes[l + 1])
            if p.shape != want:
                raise ValueError(f"transitions[{l}] has shape {p.shape}, want {want}")
            if (p < 0).any() or np.abs(p.sum(axis=-1) - 1.0).max() > _ATOL:
                raise ValueError(f"transitions[{l}] rows are not distributions")

    @property
    def total_states(self) -> int:
        return int(sum(self.layer_sizes))

    def sample_initial(self, rng) -> int:
        if self._init_state is not None:
            return self._init_state
        return int(np.searchsorted(self._cum_rho, rng.random(), side="right"))

    def sample_next(self, layer: int, state: int, action: int, rng) -> int:
        if self.deterministic:
            return int(self._next[layer][state, action])
        u = rng.random()
        return int(np.searchsorted(self._cum_p[layer][state, action], u, side="right"))

    def sample_reward(self, layer: int, state: int, action: int, rng) -> float:
        r = float(self.rewards[layer][state, action])
        if self.reward_noise_scale > 0:
            r += self.reward_noise_scale * rng.standard_normal()
        return r


@dataclass
class TrajectoryStep:
    layer: int
    state: int
    action: int
    reward: float
    behavior_prob: float


@dataclass
class Trajectory:
    """One sampled episode; layers increase by one per step."""

    steps: list[TrajectoryStep] = field(default_factory=list)
    terminal: bool = True

    def __len__(self):
        return len(self.steps)

    @property
    def episode_return(self) -> float:
        return float(sum(s.reward for s in self.steps))


@dataclass
class DeepSeaSpec:
    """DeepSea construction parameters.

    Per-state action flipping prevents a constant-action agent from solving
    the task by luck; right moves cost `right_move_penalty` and the goal in
    the bottom-right corner pays `goal_reward` on the final right move.
    """

    depth: int
    flip_seed: int = 0
    right_move_penalty: float | None = None  # default 0.01 / depth
    goal_reward: float = 1.0

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.right_move_penalty is None:
            self.right_move_penalty = 0.01 / self.depth
        if self.right_move_penalty < 0:
            raise ValueError("penalty must be nonnegative")


def build_deep_sea(spec: DeepSeaSpec) -> TabularMDP:
    """Construct the DeepSea grid MDP.

    State (row, col) lives at layer `row` with local index `col`; the state
    one-hot index over the full depth x depth grid is row * depth + col.
    The raw action a in {0, 1} decodes to "right" iff a == flip[row, col].
    Right maps (row, col) -> (row+1, col+1), left -> (row+1, max(col-1, 0)).
    """
    L = spec.depth
    rng = np.random.default_rng(spec.flip_seed)
    flip = rng.integers(0, 2, size=(L, L))

    transitions = []
    rewards = []
    for row in range(L):
        r = np.zeros((L, 2))
        for col in range(L):
            a_right = int(flip[row, col])
            r[col, a_right] -= spec.right_move_penalty
            if row == L - 1 and col == L - 1:
                r[col, a_right] += spec.goal_reward
        rewards.append(r)
        if row < L - 1:
            p = np.zeros((L, 2, L))
            for col in range(L):
                a_right = int(flip[row, col])
                p[col, a_right, min(col + 1, L - 1)] = 1.0
                p[col, 1 - a_right, max(col - 1, 0)] = 1.0
            transitions.append(p)

    rho = np.zeros(L)
    rho[0] = 1.0
    return TabularMDP(
        horizon=L,
        layer_sizes=[L] * L,
        num_actions=2,
        transitions=transitions,
        rewards=rewards,
        initial_dist=rho,
    )


def deep_sea_right_actions(spec: DeepSeaSpec) -> np.ndarray:
    """The raw action meaning "right" for each (row, col) cell."""
    rng = np.random.default_rng(spec.flip_seed)
    return rng.integers(0, 2, size=(spec.depth, spec.depth))


def deep_sea_optimal_return(spec: DeepSeaSpec) -> float:
    return spec.goal_reward - spec.depth * spec.right_move_penalty


def sample_categorical(probs: np.ndarray, u: float) -> int:
    """Index i with cumulative probability bracketing u in [0, 1)."""
    acc = 0.0
    last = len(probs) - 1
    for i in range(last):
        acc += probs[i]
        if u < acc:
            return i
    return last


def sample_episode(mdp: TabularMDP, policy: list[np.ndarray], rng) -> Trajectory:
    """Roll one episode under a tabular policy (policy[l] shape (n_l, A))."""
    s = mdp.sample_initial(rng)
    steps = []
    for l in range(mdp.horizon):
        row = policy[l][s]
        a = sample_categorical(row, rng.random())
        r = mdp.sample_reward(l, s, a, rng)
        steps.append(TrajectoryStep(l, s, a, r, float(row[a])))
        if l < mdp.horizon - 1:
            s = mdp.sample_next(l, s, a, rng)
    return Trajectory(steps=steps, terminal=True)


def sample_returns_batch(mdp: TabularMDP, policy: list[np.ndarray], n: int, rng) -> np.ndarray:
    """Vectorized Monte-Carlo episode returns; independent oracle for V^pi."""
    states = rng.choice(mdp.layer_sizes[0], size=n, p=mdp.initial_dist)
    total = np.zeros(n)
    for l in range(mdp.horizon):
        rows = policy[l][states]
        u = rng.random(n)
        actions = (u[:, None] >= np.cumsum(rows, axis=1)).sum(axis=1)
        actions = np.minimum(actions, mdp.num_actions - 1)
        total += mdp.rewards[l][states, actions]
        if mdp.reward_noise_scale > 0:
            total += mdp.reward_noise_scale * rng.standard_normal(n)
        if l < mdp.horizon - 1:
            cum = mdp._cum_p[l][states, actions]
            u2 = rng.random(n)
            states = (u2[:, None] >= cum).sum(axis=1)
            states = np.minimum(states, mdp.layer_sizes[l + 1] - 1)
    return total


def exact_values_pi(mdp_or_fields, policy: list[np.ndarray]):
    """Backward induction of (Q^pi, V^pi) under mean rewards and kernels.

    Accepts a TabularMDP or any object with .horizon/.rewards/.transitions
    fields of the same layered shapes (e.g. a belief's mean fields).
    Returns (Q, V): lists of per-layer arrays.
    """
    m = mdp_or_fields
    L = m.horizon
    rewards = m.rewards if hasattr(m, "rewards") else m.mean_rewards
    transitions = m.transitions if hasattr(m, "transitions") else m.mean_transitions
    Q = [None] * L
    V = [None] * L
    for l in range(L - 1, -1, -1):
        q = rewards[l].astype(np.float64, copy=True)
        if l < L - 1:
            q += transitions[l] @ V[l + 1]
        Q[l] = q
        V[l] = np.einsum("sa,sa->s", policy[l], q)
    return Q, V


def exact_values_star(mdp_or_fields):
    """Backward induction of (Q*, V*, greedy policy); ties -> lowest action."""
    m = mdp_or_fields
    L = m.horizon
    rewards = m.rewards if hasattr(m, "rewards") else m.mean_rewards
    transitions = m.transitions if hasattr(m, "transitions") else m.mean_transitions
    Q = [None] * L
    V = [None] * L
    greedy = [None] * L
    for l in range(L - 1, -1, -1):
        q = rewards[l].astype(np.float64, copy=True)
        if l < L - 1:
            q += transitions[l] @ V[l + 1]
        Q[l] = q
        V[l] = q.max(axis=1)
        g = np.zeros_like(q)
        g[np.arange(q.shape[0]), q.argmax(axis=1)] = 1.0
        greedy[l] = g
    return Q, V, greedy


def expected_start_value(mdp: TabularMDP, v0: np.ndarray) -> float:
    return float(mdp.initial_dist @ v0)


def uniform_policy(mdp_like) -> list[np.ndarray]:
    a = mdp_like.num_actions
    return [np.full((n, a), 1.0 / a) for n in mdp_like.layer_sizes]


# ---------------------------------------------------------------------------
# Plain-text tabular serialization (golden-file friendly). Zero rewards and
# zero transition probabilities are implied and omitted.

def mdp_to_text(mdp: TabularMDP) -> str:
    lines = ["mdp v1"]
    lines.append(
        f"horizon {mdp.horizon} actions {mdp.num_actions} noise {float(mdp.reward_noise_scale)!r}"
    )
    lines.append("layers " + " ".join(str(n) for n in mdp.layer_sizes))
    for s, p in enumerate(mdp.initial_dist):
        if p != 0.0:
            lines.append(f"rho {s} {float(p)!r}")
    for l, r in enumerate(mdp.rewards):
        for s in range(r.shape[0]):
            for a in range(r.shape[1]):
                if r[s, a] != 0.0:
                    lines.append(f"r {l} {s} {a} {float(r[s, a])!r}")
    for l, p in enumerate(mdp.transitions):
        for s in range(p.shape[0]):
            for a in range(p.shape[1]):
                for s2 in range(p.shape[2]):
                    if p[s, a, s2] != 0.0:
                        lines.append(f"p {l} {s} {a} {s2} {float(p[s, a, s2])!r}")
    return "\n".join(lines) + "\n"


def mdp_from_text(text: str) -> TabularMDP:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if lines[0].strip() != "mdp v1":
        raise ValueError("not an mdp v1 file")
    head = lines[1].split()
    L, A, noise = int(head[1]), int(head[3]), float(head[5])
    sizes = [int(x) for x in lines[2].split()[1:]]
    rho = np.zeros(sizes[0])
    rewards = [np.zeros((sizes[l], A)) for l in range(L)]
    transitions = [np.zeros((sizes[l], A, sizes[l + 1])) for l in range(L - 1)]
    for ln in lines[3:]:
        parts = ln.split()
        if parts[0] == "rho":
            rho[int(parts[1])] = float(parts[2])
        elif parts[0] == "r":
            rewards[int(parts[1])][int(parts[2]), int(parts[3])] = float(parts[4])
        elif parts[0] == "p":
            transitions[int(parts[1])][int(parts[2]), int(parts[3]), int(parts[4])] = float(parts[5])
        else:
            raise ValueError(f"unknown row kind {parts[0]!r}")
    return TabularMDP(L, sizes, A, transitions, rewards, rho, noise)
