"""Exact tabular risk-seeking value computations.

Implements the K-Bellman backups over a belief (posterior summary), the
Boltzmann policy, the scalar game between the policy and the risk
temperature, and the regret-decomposition diagnostics that certify the
theory numerically on finite-mixture posteriors.

Entropy is in nats throughout; all tables are float64.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import TabularMDP, exact_values_pi, exact_values_star

TAU_FLOOR = 1e-6
TAU_CEIL = 1e6


def _require_tau(tau: float):
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")


@dataclass
class BeliefMDP:
    """Posterior summary: mean rewards/transitions plus per-(s,a) uncertainty."""

    horizon: int
    layer_sizes: list[int]
    num_actions: int
    mean_rewards: list[np.ndarray]
    mean_transitions: list[np.ndarray]
    sigma2: list[np.ndarray]
    initial_dist: np.ndarray

    def __post_init__(self):
        for l in range(self.horizon):
            if (np.asarray(self.sigma2[l]) < 0).any():
                raise ValueError("sigma2 must be nonnegative")
        for p in self.mean_transitions:
            if (p < 0).any() or np.abs(p.sum(axis=-1) - 1.0).max() > 1e-10:
                raise ValueError("mean transitions are not stochastic")

    @classmethod
    def from_mdp(cls, mdp: TabularMDP, sigma2) -> "BeliefMDP":
        return cls(
            horizon=mdp.horizon,
            layer_sizes=list(mdp.layer_sizes),
            num_actions=mdp.num_actions,
            mean_rewards=[r.copy() for r in mdp.rewards],
            mean_transitions=[p.copy() for p in mdp.transitions],
            sigma2=_broadcast_sigma2(sigma2, mdp.layer_sizes, mdp.num_actions),
            initial_dist=mdp.initial_dist.copy(),
        )


def _broadcast_sigma2(sigma2, layer_sizes, num_actions) -> list[np.ndarray]:
    if np.isscalar(sigma2):
        return [np.full((n, num_actions), float(sigma2)) for n in layer_sizes]
    return [np.asarray(s, dtype=np.float64) for s in sigma2]


@dataclass
class FiniteMixturePosterior:
    """Finite mixture of tabular MDPs with an attached uncertainty signal.

    Members must share the layered shape and the initial distribution; the
    mixture mean fields define the belief used by the K backups, while the
    members make posterior expectations of V^pi and V* exactly computable.
    """

    members: list[TabularMDP]
    weights: np.ndarray
    sigma2: list[np.ndarray]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if (w <= 0).any() or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        self.weights = w
        m0 = self.members[0]
        for m in self.members[1:]:
            if (
                m.horizon != m0.horizon
                or m.layer_sizes != m0.layer_sizes
                or m.num_actions != m0.num_actions
                or not np.allclose(m.initial_dist, m0.initial_dist, atol=1e-12)
            ):
                raise ValueError("mixture members must share shape and initial distribution")
        self.sigma2 = _broadcast_sigma2(self.sigma2, m0.layer_sizes, m0.num_actions)

    @property
    def horizon(self):
        return self.members[0].horizon

    def belief(self) -> BeliefMDP:
        m0 = self.members[0]
        w = self.weights
        r_bar = [
            sum(w[i] * m.rewards[l] for i, m in enumerate(self.members))
            for l in range(m0.horizon)
        ]
        p_bar = [
            sum(w[i] * m.transitions[l] for i, m in enumerate(self.members))
            for l in range(m0.horizon - 1)
        ]
        return BeliefMDP(
            horizon=m0.horizon,
            layer_sizes=list(m0.layer_sizes),
            num_actions=m0.num_actions,
            mean_rewards=r_bar,
            mean_transitions=p_bar,
            sigma2=[s.copy() for s in self.sigma2],
            initial_dist=m0.initial_dist.copy(),
        )

    def mean_value_pi(self, policy) -> float:
        """E over members of E_rho V^pi, each member evaluated exactly."""
        out = 0.0
        for w, m in zip(self.weights, self.members):
            _, v = exact_values_pi(m, policy)
            out += w * float(m.initial_dist @ v[0])
        return out

    def mean_value_star(self) -> float:
        out = 0.0
        for w, m in zip(self.weights, self.members):
            _, v, _ = exact_values_star(m)
            out += w * float(m.initial_dist @ v[0])
        return out


@dataclass
class KTable:
    """Risk-seeking value tables for one temperature."""

    K: list[np.ndarray]
    J: list[np.ndarray]
    tau: float


@dataclass
class RegretDecomposition:
    dist: float
    optimism: float
    regret: float
    bound_holds: bool


def certainty_equivalent(x, tau: float) -> float:
    """tau * log E exp(X / tau) for a normal summary (mu, var) or samples."""
    _require_tau(tau)
    if isinstance(x, tuple):
        mu, var = x
        if var < 0:
            raise ValueError("variance must be nonnegative")
        return float(mu + var / (2.0 * tau))
    arr = np.asarray(x, dtype=np.float64)
    z = arr / tau
    m = z.max()
    return float(tau * (m + np.log(np.mean(np.exp(z - m)))))


def risk_seeking_reward(belief: BeliefMDP, tau: float) -> list[np.ndarray]:
    """Mean reward plus the uncertainty bonus sigma^2 / (2 tau)."""
    _require_tau(tau)
    return [belief.mean_rewards[l] + belief.sigma2[l] / (2.0 * tau) for l in range(belief.horizon)]


def entropy(policy_row: np.ndarray) -> float:
    p = policy_row[policy_row > 0]
    return float(-(p * np.log(p)).sum())


def entropy_rows(policy: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(policy > 0, policy * np.log(np.where(policy > 0, policy, 1.0)), 0.0)
    return -t.sum(axis=1)


def k_backup_pi(belief: BeliefMDP, policy: list[np.ndarray], tau: float) -> KTable:
    """K^pi / J^pi backward induction with entropy regularization."""
    _require_tau(tau)
    r_tau = risk_seeking_reward(belief, tau)
    L = belief.horizon
    K = [None] * L
    J = [None] * L
    for l in range(L - 1, -1, -1):
        k = r_tau[l].copy()
        if l < L - 1:
            k += belief.mean_transitions[l] @ J[l + 1]
        K[l] = k
        J[l] = np.einsum("sa,sa->s", policy[l], k) + tau * entropy_rows(policy[l])
    return KTable(K=K, J=J, tau=tau)


def k_backup_star(belief: BeliefMDP, tau: float) -> KTable:
    """Optimal tables: J* is the tau-scaled logsumexp of K* over actions."""
    _require_tau(tau)
    r_tau = risk_seeking_reward(belief, tau)
    L = belief.horizon
    K = [None] * L
    J = [None] * L
    for l in range(L - 1, -1, -1):
        k = r_tau[l].copy()
        if l < L - 1:
            k += belief.mean_transitions[l] @ J[l + 1]
        K[l] = k
        m = k.max(axis=1)
        J[l] = m + tau * np.log(np.exp((k - m[:, None]) / tau).sum(axis=1))
    return KTable(K=K, J=J, tau=tau)


def boltzmann_policy(ktable: KTable) -> list[np.ndarray]:
    """pi(s, a) = exp((K - J) / tau); requires an optimal table."""
    out = []
    for k, j in zip(ktable.K, ktable.J):
        pi = np.exp((k - j[:, None]) / ktable.tau)
        if np.abs(pi.sum(axis=1) - 1.0).max() > 1e-8:
            raise ValueError("not an optimal K table: rows of exp((K-J)/tau) do not sum to 1")
        out.append(pi)
    return out


def occupancy(belief: BeliefMDP, policy: list[np.ndarray]) -> list[np.ndarray]:
    """Per-layer state distribution from rho through the mean transitions."""
    d = [belief.initial_dist.copy()]
    for l in range(belief.horizon - 1):
        flow = d[l][:, None] * policy[l]
        d.append(np.einsum("sa,sat->t", flow, belief.mean_transitions[l]))
    return d


def saddle_objective(belief: BeliefMDP, tau: float) -> float:
    """E_rho J*_1 at temperature tau."""
    kt = k_backup_star(belief, tau)
    return float(belief.initial_dist @ kt.J[0])


def policy_value_components(belief: BeliefMDP, policy: list[np.ndarray]):
    """Decompose E_rho J^pi_{1,tau} = A + B / (2 tau) + C tau.

    A is the mean-field expected return, B the occupancy-weighted total
    uncertainty, C the occupancy-weighted total entropy. Exact because the
    backup is linear in per-step rewards and entropy bonuses.
    """
    d = occupancy(belief, policy)
    a = b = c = 0.0
    for l in range(belief.horizon):
        flow = d[l][:, None] * policy[l]
        a += float((flow * belief.mean_rewards[l]).sum())
        b += float((flow * belief.sigma2[l]).sum())
        c += float(d[l] @ entropy_rows(policy[l]))
    return a, b, c


def min_tau_policy_value(
    belief: BeliefMDP, policy: list[np.ndarray], tau_lo: float = TAU_FLOOR, tau_hi: float = TAU_CEIL
):
    """Closed-form min over tau of E_rho J^pi_{1,tau} on [tau_lo, tau_hi]."""
    a, b, c = policy_value_components(belief, policy)
    if b <= 0.0:
        tau = tau_lo
    elif c <= 0.0:
        tau = tau_hi
    else:
        tau = float(np.clip(np.sqrt(b / (2.0 * c)), tau_lo, tau_hi))
    return tau, a + b / (2.0 * tau) + c * tau


def solve_tau(belief: BeliefMDP, tau_lo: float = TAU_FLOOR, tau_hi: float = TAU_CEIL,
              grid_points: int = 64, rel_tol: float = 1e-8):
    """Minimize the saddle objective over tau.

    A log-grid scan picks the bracket (guarding against non-unimodality),
    then golden-section search on log tau refines to relative tolerance.
    Returns (tau_star, objective value).
    """
    if not (0 < tau_lo < tau_hi):
        raise ValueError("need 0 < tau_lo < tau_hi")
    grid = np.exp(np.linspace(np.log(tau_lo), np.log(tau_hi), grid_points))
    vals = [saddle_objective(belief, t) for t in grid]
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid_points - 1)]

    f = lambda logt: saddle_objective(belief, float(np.exp(logt)))
    a, b = np.log(lo), np.log(hi)
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > rel_tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    logt = c if fc < fd else d
    tau = float(np.exp(logt))
    val = saddle_objective(belief, tau)
    # keep the best point seen anywhere (grid guards non-unimodality);
    # ties snap to the grid point, which pins boundary minima exactly
    if vals[i] <= val:
        tau, val = float(grid[i]), float(vals[i])
    return tau, float(val)


def tau_stationarity_residual(belief: BeliefMDP, tau: float) -> float:
    """Entropy-vs-bonus balance at the Boltzmann policy of `tau`.

    Zero at an interior saddle: occupancy-weighted entropy equals
    occupancy-weighted sigma^2 / (2 tau^2).
    """
    pi = boltzmann_policy(k_backup_star(belief, tau))
    _, b, c = policy_value_components(belief, pi)
    return float(c - b / (2.0 * tau * tau))


def dist(belief: BeliefMDP, policy: list[np.ndarray], tau: float) -> float:
    """tau-scaled expected KL from `policy` to the optimal Boltzmann policy,
    under the on-policy occupancy through the mean transitions."""
    _require_tau(tau)
    kt = k_backup_star(belief, tau)
    d = occupancy(belief, policy)
    total = 0.0
    for l in range(belief.horizon):
        log_star = (kt.K[l] - kt.J[l][:, None]) / tau
        p = policy[l]
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0, p * (np.log(np.where(p > 0, p, 1.0)) - log_star), 0.0)
        total += float(d[l] @ terms.sum(axis=1))
    return tau * total


def optimism(posterior: FiniteMixturePosterior, policy: list[np.ndarray], tau: float) -> float:
    """E_rho (J^pi_1 - E_posterior V^pi_1)."""
    _require_tau(tau)
    belief = posterior.belief()
    kt = k_backup_pi(belief, policy, tau)
    j = float(belief.initial_dist @ kt.J[0])
    return j - posterior.mean_value_pi(policy)


def min_tau_optimism(
    posterior: FiniteMixturePosterior,
    policy: list[np.ndarray],
    tau_grid: np.ndarray,
    belief: BeliefMDP | None = None,
    mean_v_pi: float | None = None,
):
    """Min over a tau grid of Optimism(pi, tau), via the affine-in-(1/tau, tau)
    decomposition of E_rho J^pi. Returns (tau, value)."""
    if belief is None:
        belief = posterior.belief()
    if mean_v_pi is None:
        mean_v_pi = posterior.mean_value_pi(policy)
    a, b, c = policy_value_components(belief, policy)
    vals = a + b / (2.0 * tau_grid) + c * tau_grid - mean_v_pi
    i = int(np.argmin(vals))
    return float(tau_grid[i]), float(vals[i])


def regret_decomposition(
    posterior: FiniteMixturePosterior, policy: list[np.ndarray], tau: float
) -> RegretDecomposition:
    """Bayesian single-episode regret and its Dist + Optimism bound at `tau`."""
    _require_tau(tau)
    regret = posterior.mean_value_star() - posterior.mean_value_pi(policy)
    belief = posterior.belief()
    d = dist(belief, policy, tau)
    o = optimism(posterior, policy, tau)
    return RegretDecomposition(
        dist=float(d),
        optimism=float(o),
        regret=float(regret),
        bound_holds=bool(regret <= d + o + 1e-9),
    )


def check_assumption1(posterior: FiniteMixturePosterior, tau_grid: np.ndarray) -> bool:
    """Certify E_rho J*_{1,tau} >= E_rho E_posterior V*_1 on every grid tau."""
    if len(tau_grid) == 0:
        raise ValueError("tau grid must be nonempty")
    belief = posterior.belief()
    target = posterior.mean_value_star()
    for tau in tau_grid:
        if saddle_objective(belief, float(tau)) < target - 1e-12:
            return False
    return True


def strong_duality_gap(belief: BeliefMDP, tau_lo: float = TAU_FLOOR, tau_hi: float = TAU_CEIL):
    """Runtime check of the two optimization orders over (policy, tau).

    min-max is solve_tau on the optimal-table objective; max-min is lower
    bounded by the inner tau-minimum at the saddle Boltzmann policy (closed
    form). Returns (minmax, maxmin_at_saddle_policy, gap >= 0 up to fp).
    """
    tau_star, minmax = solve_tau(belief, tau_lo, tau_hi)
    pi = boltzmann_policy(k_backup_star(belief, tau_star))
    _, maxmin = min_tau_policy_value(belief, pi, tau_lo, tau_hi)
    return minmax, maxmin, minmax - maxmin


def default_tau_grid(lo: float = 1e-4, hi: float = 1e2, points: int = 61) -> np.ndarray:
    return np.exp(np.linspace(np.log(lo), np.log(hi), points))


@dataclass
class OptimismAudit:
    per_episode: np.ndarray
    running_sum: np.ndarray
    exponent: float


def cumulative_optimism_audit(entries, tau_grid: np.ndarray) -> OptimismAudit:
    """Per-episode min-tau optimism along a run.

    `entries` yields (posterior, policy) pairs in episode order. The fitted
    exponent is the log-log regression slope of the running sum against the
    episode index, over the tail t >= max(10, N // 10).
    """
    mins = []
    for posterior, policy in entries:
        _, v = min_tau_optimism(posterior, policy, tau_grid)
        mins.append(v)
    per = np.asarray(mins, dtype=np.float64)
    run = np.cumsum(per)
    n = len(run)
    t0 = max(10, n // 10)
    t = np.arange(1, n + 1)
    mask = (t >= t0) & (run > 0)
    if mask.sum() < 2:
        expo = float("nan")
    else:
        x = np.log(t[mask])
        y = np.log(run[mask])
        expo = float(np.polyfit(x, y, 1)[0])
    return OptimismAudit(per_episode=per, running_sum=run, exponent=expo)
