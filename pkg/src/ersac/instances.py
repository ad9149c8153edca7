"""Random tabular instances for certification suites and tests."""
from __future__ import annotations

import numpy as np

from .klearning import BeliefMDP, FiniteMixturePosterior
from .mdp import TabularMDP


def random_layered_mdp(rng, horizon=3, sizes=None, num_actions=2, reward_range=(-1.0, 1.0),
                       noise=0.0) -> TabularMDP:
    if sizes is None:
        sizes = [int(rng.integers(2, 5)) for _ in range(horizon)]
    rewards = [
        rng.uniform(reward_range[0], reward_range[1], size=(sizes[l], num_actions))
        for l in range(horizon)
    ]
    transitions = [
        rng.dirichlet(np.ones(sizes[l + 1]), size=(sizes[l], num_actions))
        for l in range(horizon - 1)
    ]
    rho = rng.dirichlet(np.ones(sizes[0]))
    return TabularMDP(horizon, list(sizes), num_actions, transitions, rewards, rho, noise)


def random_policy(rng, layer_sizes, num_actions):
    return [rng.dirichlet(np.ones(num_actions), size=n) for n in layer_sizes]


def random_belief(rng, horizon=3, sizes=None, num_actions=2, sigma_max=1.0) -> BeliefMDP:
    mdp = random_layered_mdp(rng, horizon, sizes, num_actions)
    sigma2 = [rng.uniform(0.0, sigma_max, size=r.shape) for r in mdp.rewards]
    return BeliefMDP.from_mdp(mdp, sigma2)


def random_mixture(rng, n_members=3, horizon=3, sizes=None, num_actions=2,
                   sigma2=None) -> FiniteMixturePosterior:
    """Random mixture of reward/transition variants on a shared shape.

    With rewards bounded by 1 in magnitude, sigma = 2 * horizon certifies
    the optimistic upper bound on the instances used by the test suites.
    """
    if sizes is None:
        sizes = [int(rng.integers(2, 5)) for _ in range(horizon)]
    members = []
    rho = rng.dirichlet(np.ones(sizes[0]))
    for _ in range(n_members):
        m = random_layered_mdp(rng, horizon, sizes, num_actions)
        m = TabularMDP(horizon, list(sizes), num_actions, m.transitions, m.rewards, rho)
        members.append(m)
    w = rng.dirichlet(np.ones(n_members))
    if sigma2 is None:
        sigma2 = float((2 * horizon) ** 2)
    return FiniteMixturePosterior(members=members, weights=w, sigma2=sigma2)


def product_mixture(rng, horizon=3, options_per_layer=2, sizes=None, num_actions=2,
                    sigma2=0.0) -> FiniteMixturePosterior:
    """Layerwise-independent posterior: the full product of per-layer options.

    Each layer draws `options_per_layer` candidate (reward, kernel) pairs with
    independent weights; members enumerate the product, so posterior
    expectations factor across layers.
    """
    if sizes is None:
        sizes = [int(rng.integers(2, 4)) for _ in range(horizon)]
    rho = rng.dirichlet(np.ones(sizes[0]))
    layer_opts = []
    layer_w = []
    for l in range(horizon):
        opts = []
        for _ in range(options_per_layer):
            r = rng.uniform(-1.0, 1.0, size=(sizes[l], num_actions))
            p = (
                rng.dirichlet(np.ones(sizes[l + 1]), size=(sizes[l], num_actions))
                if l < horizon - 1 else None
            )
            opts.append((r, p))
        layer_opts.append(opts)
        layer_w.append(rng.dirichlet(np.ones(options_per_layer)))
    members = []
    weights = []
    combos = np.stack(np.meshgrid(*[np.arange(options_per_layer)] * horizon, indexing="ij"))
    combos = combos.reshape(horizon, -1).T
    for combo in combos:
        rewards = [layer_opts[l][combo[l]][0] for l in range(horizon)]
        transitions = [layer_opts[l][combo[l]][1] for l in range(horizon - 1)]
        members.append(TabularMDP(horizon, list(sizes), num_actions, transitions, rewards, rho))
        weights.append(float(np.prod([layer_w[l][combo[l]] for l in range(horizon)])))
    return FiniteMixturePosterior(members=members, weights=np.asarray(weights), sigma2=sigma2)


def two_arm_belief(r=(0.0, 0.0), sigma2=(1.0, 1.0)) -> BeliefMDP:
    """One state, one layer, two actions."""
    return BeliefMDP(
        horizon=1, layer_sizes=[1], num_actions=2,
        mean_rewards=[np.array([[r[0], r[1]]])],
        mean_transitions=[],
        sigma2=[np.array([[sigma2[0], sigma2[1]]])],
        initial_dist=np.array([1.0]),
    )
