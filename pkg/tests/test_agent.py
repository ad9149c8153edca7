import numpy as np
import pytest

from ersac.agent import (
    ErsacAgent,
    ErsacConfig,
    Segment,
    run_training,
    soft_value_targets,
    td_lambda_k_hat,
)
from ersac.certify import sampled_policy_gradient_check, td_lambda_unrolled_check
from ersac.klearning import entropy_rows
from ersac.mdp import DeepSeaSpec, build_deep_sea

LN2 = np.log(2.0)


def test_td_lambda_single_terminal_step():
    khat = td_lambda_k_hat([0.4], [0.5], [-0.7], [0.0], 0.0, True, 1.0, 1.0, 0.8)
    assert khat[0] == pytest.approx(0.4 + 0.25, abs=1e-15)


def test_td_lambda_zero_lambda_is_one_step_target():
    r = np.array([0.1, -0.2, 0.3])
    s2 = np.array([0.2, 0.0, 0.4])
    logpi = np.array([-0.5, -1.0, -0.25])
    value = np.array([1.0, 2.0, -1.0])
    tau, gamma = 0.5, 0.9
    khat = td_lambda_k_hat(r, s2, logpi, value, 0.0, True, tau, gamma, 0.0)
    want0 = r[0] + s2[0] / (2 * tau) + gamma * value[1]
    want1 = r[1] + s2[1] / (2 * tau) + gamma * value[2]
    want2 = r[2] + s2[2] / (2 * tau)
    assert np.allclose(khat, [want0, want1, want2], atol=1e-14)


def test_td_lambda_full_unroll_matches_brute_force():
    assert td_lambda_unrolled_check(seed=0) < 1e-12
    assert td_lambda_unrolled_check(seed=3) < 1e-12


def test_td_lambda_rejects_bad_tau():
    with pytest.raises(ValueError):
        td_lambda_k_hat([0.0], [0.0], [0.0], [0.0], 0.0, True, 0.0, 1.0, 0.5)


def test_td_lambda_truncation_bootstraps_on_value():
    r = np.array([0.0, 0.0])
    s2 = np.zeros(2)
    logpi = np.array([-0.3, -0.3])
    value = np.array([0.0, 0.0])
    khat = td_lambda_k_hat(r, s2, logpi, value, 5.0, False, 1.0, 1.0, 0.0)
    assert khat[1] == pytest.approx(5.0)
    khat1 = td_lambda_k_hat(r, s2, logpi, value, 5.0, False, 1.0, 1.0, 1.0)
    # with lambda=1 the tail also bootstraps on the critic's value
    assert khat1[1] == pytest.approx(5.0)


def test_tau_gradient_formula_value():
    # sigma2 = 1, tau = 1, uniform two-action policy: dL/dtau = ln 2 - 0.5
    mdp = build_deep_sea(DeepSeaSpec(depth=2))
    cfg = ErsacConfig(uncertainty="counts", count_scale=1.0, pseudo_count=1.0,
                      tau0=1.0, lr=0.0, tau_lr=0.0)
    agent = ErsacAgent(mdp, cfg, np.random.default_rng(0))
    _, diags, _ = agent.run_episode()
    d = diags[-1]
    assert d.mean_entropy == pytest.approx(LN2, abs=1e-12)
    assert d.grad_tau == pytest.approx(LN2 - 0.5, abs=1e-12)


def test_zero_learning_rates_leave_parameters_fixed():
    mdp = build_deep_sea(DeepSeaSpec(depth=4))
    cfg = ErsacConfig(lr=0.0, tau_lr=0.0)
    agent = ErsacAgent(mdp, cfg, np.random.default_rng(1))
    before = agent.net.flat_params.copy()
    tau0 = agent.tau
    for _ in range(3):
        agent.run_episode()
    assert np.array_equal(agent.net.flat_params, before)
    assert agent.tau == tau0
    assert agent.episodes == 3 and agent.updates == 3


def test_tau_decreases_when_entropy_dominates():
    mdp = build_deep_sea(DeepSeaSpec(depth=4))
    # vanishing uncertainty, so grad_tau ~ H > 0 and tau falls until clipped
    cfg = ErsacConfig(uncertainty="counts", count_scale=1e-6, tau0=0.5, tau_lr=0.05,
                      lr=0.0, tau_min=0.05)
    agent = ErsacAgent(mdp, cfg, np.random.default_rng(2))
    taus = [agent.tau]
    for _ in range(30):
        agent.run_episode()
        taus.append(agent.tau)
    assert all(b <= a + 1e-15 for a, b in zip(taus, taus[1:]))
    assert taus[-1] == pytest.approx(0.05, abs=1e-9)


def test_training_determinism_bitwise():
    def run(seed):
        mdp = build_deep_sea(DeepSeaSpec(depth=5))
        agent = ErsacAgent(mdp, ErsacConfig(), np.random.default_rng(seed))
        taus, rets = [], []
        for _ in range(40):
            total, _, _ = agent.run_episode()
            taus.append(agent.tau)
            rets.append(total)
        return np.array(taus), np.array(rets), agent.net.flat_params.copy()

    t1, r1, p1 = run(7)
    t2, r2, p2 = run(7)
    assert np.array_equal(t1, t2)
    assert np.array_equal(r1, r2)
    assert np.array_equal(p1, p2)


def test_ersac_with_zero_uncertainty_equals_entropy_regularized_a2c():
    """Code-path reduction: zero ensemble spread and fixed tau make the
    risk-seeking update bitwise identical to the plain entropy-regularized
    actor-critic update."""
    def agent_with(mode):
        mdp = build_deep_sea(DeepSeaSpec(depth=5))
        cfg = ErsacConfig(mode=mode, tau0=0.05, tau_lr=0.0, prior_scale=0.0)
        return ErsacAgent(mdp, cfg, np.random.default_rng(3))

    a = agent_with("ersac")    # ensemble variance is exactly 0 with zero priors
    b = agent_with("vanilla")  # explicit baseline path
    for _ in range(10):
        a.run_episode()
        b.run_episode()
    assert a.tau == b.tau
    assert np.array_equal(a.net.flat_params, b.net.flat_params)


def test_zero_advantage_entropy_off_leaves_policy_head_fixed():
    # lambda=0, zero rewards, zero value head: K-hat == J exactly, so with the
    # entropy term off the policy loss contributes no gradient at all, while
    # the value loss (stop-gradient target -tau log pi != 0) still trains J
    mdp = build_deep_sea(DeepSeaSpec(depth=4))
    cfg = ErsacConfig(entropy_in_policy_loss=False, lr=0.1, optimizer="sgd",
                      prior_scale=0.0, tau_lr=0.0, reward_loss_coef=0.0,
                      td_lambda=0.0)
    agent = ErsacAgent(mdp, cfg, np.random.default_rng(4))
    seg = Segment(
        idx=np.array([0, 5], dtype=np.int64), layers=np.array([0, 1]),
        states=np.array([0, 1]), actions=np.array([1, 0]),
        rewards=np.zeros(2), behavior=np.array([0.5, 0.5]),
        tail_idx=None,
    )
    agent.step(seg)
    assert np.abs(agent.net.wp).max() == 0.0
    assert np.abs(agent.net.bp).max() == 0.0
    assert np.abs(agent.net.wv).max() > 0.0


def test_nonfinite_loss_skips_update_and_continues():
    mdp = build_deep_sea(DeepSeaSpec(depth=3))
    agent = ErsacAgent(mdp, ErsacConfig(), np.random.default_rng(5))
    agent.net.wv[...] = np.nan
    total, diags, _ = agent.run_episode()
    assert any(d.skipped for d in diags)
    assert agent.skipped_updates >= 1
    # the run continues afterwards
    agent.net.wv[...] = 0.0
    agent.run_episode()


def test_segments_truncate_at_rollout_and_episode_end():
    mdp = build_deep_sea(DeepSeaSpec(depth=7))
    cfg = ErsacConfig(rollout=3, lr=0.0, tau_lr=0.0)
    agent = ErsacAgent(mdp, cfg, np.random.default_rng(6))
    seen = []
    agent.run_episode(update=lambda seg: seen.append(seg) or agent.step(seg))
    lengths = [len(s) for s in seen]
    assert lengths == [3, 3, 1]
    assert seen[-1].tail_idx is None
    assert seen[0].tail_idx is not None


def test_run_training_zero_budget():
    mdp = build_deep_sea(DeepSeaSpec(depth=3))
    agent, returns = run_training(mdp, ErsacConfig(), seed=0, budget=0)
    assert returns == []
    assert agent.episodes == 0


def test_run_training_emits_records_and_stops_on_solve():
    mdp = build_deep_sea(DeepSeaSpec(depth=3))
    records = []
    stop = lambda rets: len(rets) >= 5
    agent, returns = run_training(mdp, ErsacConfig(), seed=0, budget=50,
                                  sink=records.append, stop_fn=stop)
    assert len(returns) == 5
    assert [r.episode for r in records] == [1, 2, 3, 4, 5]
    assert records[0].tau > 0


def test_sampled_policy_gradient_matches_bellman_oracle():
    z, _ = sampled_policy_gradient_check(seed=0, n_traj=50_000)
    assert z <= 3.0


def test_mode_validation():
    with pytest.raises(ValueError):
        ErsacConfig(mode="nope")
    with pytest.raises(ValueError):
        ErsacConfig(tau0=0.0)
    with pytest.raises(ValueError):
        ErsacConfig(td_lambda=1.5)


def test_simple_optimism_augments_rewards_not_head_targets():
    mdp = build_deep_sea(DeepSeaSpec(depth=3))
    cfg = ErsacConfig(mode="simple_optimism", tau0=0.05, optimism_scale=2.0)
    agent = ErsacAgent(mdp, cfg, np.random.default_rng(8))
    total, diags, _ = agent.run_episode()
    d = diags[-1]
    assert not d.skipped
    assert d.mean_sigma2 > 0.0  # ensemble spread is measured even though unused in K-hat
    assert agent.learn_tau is False
