import numpy as np
import pytest

from ersac.nets import NetConfig, PolicyValueNet
from ersac.uncertainty import (
    CountUncertainty,
    RewardEnsemble,
    VisitCounts,
    count_sigma2,
    ensemble_predict,
    ensemble_sigma2,
    ensemble_update,
)


def make_ensemble(seed=0, heads=4, prior_scale=1.0):
    cfg = NetConfig(input_dim=6, num_actions=2, hidden=(8, 8), ensemble_size=heads,
                    prior_scale=prior_scale, prior_hidden=5)
    net = PolicyValueNet(cfg, np.random.default_rng(seed))
    return RewardEnsemble(net, optimizer="sgd", step_size=0.05)


# -- counts backend -----------------------------------------------------------

def test_count_sigma2_arithmetic():
    counts = VisitCounts([1], 1)
    cu = CountUncertainty(2.0, counts, pseudo_count=1.0)
    counts.counts[0][0, 0] = 3
    assert count_sigma2(cu, 0, 0, 0) == pytest.approx(1.0)


def test_count_sigma2_unvisited_uses_pseudo_count():
    cu = CountUncertainty(1.5, VisitCounts([2], 2), pseudo_count=1.0)
    assert count_sigma2(cu, 0, 1, 0) == pytest.approx(1.5**2)


def test_count_sigma2_monotone_and_halving():
    counts = VisitCounts([1], 1)
    cu = CountUncertainty(1.0, counts)
    vals = []
    for n in (0, 1, 5, 1000, 2000):
        counts.counts[0][0, 0] = n
        vals.append(cu.sigma2(0, 0, 0))
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[4] == pytest.approx(vals[3] / 2.0, rel=1e-3)


def test_count_uncertainty_rejects_bad_params():
    with pytest.raises(ValueError):
        CountUncertainty(0.0, VisitCounts([1], 1))
    with pytest.raises(ValueError):
        CountUncertainty(1.0, VisitCounts([1], 1), pseudo_count=0.0)


# -- ensemble backend ----------------------------------------------------------

def test_zero_prior_scale_identical_heads_agree():
    ens = make_ensemble(prior_scale=0.0)
    preds = ensemble_predict(ens, 2, 1)
    assert np.allclose(preds, preds[0])
    assert ensemble_sigma2(ens, 2, 1) == pytest.approx(0.0, abs=1e-30)


def test_fresh_ensemble_with_priors_disagrees():
    ens = make_ensemble(prior_scale=1.0)
    for idx in range(6):
        for a in range(2):
            assert ensemble_sigma2(ens, idx, a) > 0.0


def test_predictions_deterministic():
    ens = make_ensemble(seed=3)
    a = ensemble_predict(ens, 1, 0)
    b = ensemble_predict(ens, 1, 0)
    assert np.array_equal(a, b)


def test_variance_formula():
    ens = make_ensemble(seed=4, heads=2, prior_scale=1.0)
    # force predictions {0, 2} at (state 0, action 0): heads are zero-initialized
    ens.net.prior_table[0, 0, 0] = 0.0
    ens.net.prior_table[1, 0, 0] = 2.0
    assert ensemble_sigma2(ens, 0, 0) == pytest.approx(1.0)
    assert ens.sigma(0, 0) == pytest.approx(1.0)


def test_update_converges_to_reward_with_zero_noise():
    ens = make_ensemble(seed=5)
    idx = np.array([2], dtype=np.int64)
    act = np.array([1])
    r = np.array([0.7])
    zeta = np.zeros((1, ens.size))
    for _ in range(3000):
        ensemble_update(ens, idx, act, r, zeta, step_size=0.2)
    preds = ensemble_predict(ens, 2, 1)
    assert np.allclose(preds, 0.7, atol=1e-3)
    assert ensemble_sigma2(ens, 2, 1) < 1e-6


def test_update_with_noise_shrinks_variance_at_trained_input():
    rng = np.random.default_rng(6)
    ens = make_ensemble(seed=6)
    v0 = ensemble_sigma2(ens, 3, 0)
    idx = np.array([3], dtype=np.int64)
    act = np.array([0])
    r = np.array([0.5])
    for _ in range(10_000):
        zeta = np.sqrt(0.1) * rng.standard_normal((1, ens.size))
        ensemble_update(ens, idx, act, r, zeta, step_size=0.05)
    v1 = ensemble_sigma2(ens, 3, 0)
    assert v1 <= v0 / 10.0


def test_trained_input_variance_below_untrained_average():
    trained_vals, untrained_vals = [], []
    idx = np.array([1], dtype=np.int64)
    act = np.array([0])
    r = np.array([0.3])
    for seed in range(10):
        ens = make_ensemble(seed=seed)
        zeta = np.zeros((1, ens.size))
        for _ in range(500):
            ensemble_update(ens, idx, act, r, zeta, step_size=0.2)
        trained_vals.append(ensemble_sigma2(ens, 1, 0))
        untrained_vals.append(ensemble_sigma2(ens, 4, 1))
    assert np.mean(trained_vals) < np.mean(untrained_vals)


def test_priors_untouched_by_updates():
    ens = make_ensemble(seed=7)
    h0 = ens.net.prior_hash()
    zeta = np.zeros((2, ens.size))
    ensemble_update(ens, np.array([0, 1]), np.array([0, 1]), np.array([0.1, -0.2]), zeta)
    assert ens.net.prior_hash() == h0


def test_zero_step_size_is_noop():
    ens = make_ensemble(seed=8)
    before = ens.net.flat_params.copy()
    ensemble_update(ens, np.array([0]), np.array([0]), np.array([1.0]),
                    np.zeros((1, ens.size)), step_size=0.0)
    assert np.array_equal(ens.net.flat_params, before)


def test_zeta_dimension_mismatch_rejected():
    ens = make_ensemble(seed=9)
    with pytest.raises(ValueError):
        ensemble_update(ens, np.array([0]), np.array([0]), np.array([1.0]),
                        np.zeros((1, ens.size + 1)))


def test_ensemble_requires_two_heads():
    cfg = NetConfig(input_dim=4, num_actions=2, ensemble_size=1)
    net = PolicyValueNet(cfg, np.random.default_rng(0))
    with pytest.raises(ValueError):
        RewardEnsemble(net)
