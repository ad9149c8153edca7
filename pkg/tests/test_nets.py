import numpy as np
import pytest

from ersac.certify import gradient_certification
from ersac.nets import (
    Adam,
    NetConfig,
    PolicyValueNet,
    Sgd,
    grad_check,
    make_optimizer,
    optimizer_step,
    orthogonal_init,
    softmax_rows,
)


def make_net(seed=0, **kw):
    cfg = NetConfig(input_dim=kw.pop("input_dim", 9), num_actions=kw.pop("num_actions", 3),
                    hidden=kw.pop("hidden", (8, 7)), ensemble_size=kw.pop("ensemble_size", 4),
                    **kw)
    return PolicyValueNet(cfg, np.random.default_rng(seed))


def test_zero_initialized_heads_give_uniform_policy_and_zero_value():
    net = make_net()
    c = net.forward_batch(np.arange(5, dtype=np.int64))
    assert np.allclose(c.policy, 1.0 / 3.0, atol=1e-15)
    assert np.allclose(c.value, 0.0, atol=1e-15)


def test_forward_purity_and_determinism():
    net = make_net(seed=1)
    idx = np.array([2, 2, 5], dtype=np.int64)
    a = net.forward_batch(idx)
    b = net.forward_batch(idx)
    assert np.array_equal(a.logits, b.logits)
    assert np.array_equal(a.preds, b.preds)
    assert np.array_equal(a.logits[0], a.logits[1])  # identical inputs, identical rows


def test_single_state_forward_matches_batch():
    net = make_net(seed=2)
    net.wp += 0.3 * np.random.default_rng(3).standard_normal(net.wp.shape)
    logits, value, preds = net.forward(4)
    c = net.forward_batch(np.array([4], dtype=np.int64))
    assert np.array_equal(logits, c.logits[0])
    assert value == c.value[0]
    assert np.array_equal(preds, c.preds[:, 0, :])


def test_softmax_rows_sane_and_stable():
    rng = np.random.default_rng(4)
    z = rng.standard_normal((20, 5))
    pi, logpi = softmax_rows(z)
    assert np.abs(pi.sum(axis=1) - 1.0).max() < 1e-12
    assert np.allclose(np.exp(logpi), pi)

    huge = np.array([[1e4, -1e4, 0.0], [-1e4, -1e4, -1e4]])
    pi, logpi = softmax_rows(huge)
    assert np.isfinite(pi).all() and np.isfinite(logpi[pi > 0]).all()
    assert np.abs(pi.sum(axis=1) - 1.0).max() < 1e-12


def test_gradient_certification_suite():
    for r in gradient_certification(seed=0):
        assert r.passed, r.line()


def test_grad_check_detects_large_h():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(4)

    def f():
        return float(np.sum(np.sin(3.0 * x)))

    g = 3.0 * np.cos(3.0 * x)
    small, _ = grad_check(f, [("x", x)], [("x", g)], h=1e-5)
    big, _ = grad_check(f, [("x", x)], [("x", g)], h=0.1)
    assert small < 1e-8
    assert big > 10 * small


def test_grad_check_rejects_nonpositive_h():
    with pytest.raises(ValueError):
        grad_check(lambda: 0.0, [], [], h=0.0)


def test_prior_hash_constant_under_training():
    net = make_net(seed=6)
    h0 = net.prior_hash()
    opt = Adam(1e-2)
    rng = np.random.default_rng(7)
    for _ in range(5):
        idx = rng.integers(0, 9, size=4).astype(np.int64)
        cache = net.forward_batch(idx)
        g = net.backward_batch(cache, rng.standard_normal(cache.logits.shape),
                               rng.standard_normal(4), rng.standard_normal(cache.preds.shape))
        optimizer_step(net, g, opt)
    assert net.prior_hash() == h0
    assert not np.allclose(net.flat_params, 0.0)


def test_gradient_bundle_excludes_priors():
    net = make_net(seed=8)
    names = [name for name, _ in net.zero_grads().blocks()]
    assert all(not n.startswith("prior") for n in names)
    trainable = {name for name, _ in net.param_blocks()}
    assert trainable == set(names)


def test_optimizers_zero_grad_noop_and_determinism():
    for kind in ("sgd", "adam"):
        net = make_net(seed=9)
        before = net.flat_params.copy()
        optimizer_step(net, net.zero_grads(), make_optimizer(kind, 0.1))
        assert np.array_equal(net.flat_params, before)

    p1 = np.array([1.0, -2.0])
    p2 = p1.copy()
    g = np.array([0.3, 0.4])
    o1, o2 = Adam(1e-2), Adam(1e-2)
    o1.step(p1, g.copy())
    o2.step(p2, g.copy())
    assert np.array_equal(p1, p2)


def test_sgd_moves_by_plus_lr_times_grad():
    p = np.array([0.0])
    Sgd(0.1).step(p, np.array([1.0]))
    assert p[0] == pytest.approx(0.1, abs=1e-15)


def test_optimizer_step_rejects_nonfinite():
    net = make_net(seed=10)
    g = net.zero_grads()
    g.wp[0, 0] = np.nan
    with pytest.raises(ValueError):
        optimizer_step(net, g, Sgd(0.1))


def test_orthogonal_init_deterministic_and_orthogonal():
    a = orthogonal_init(np.random.default_rng(11), 16, 8)
    b = orthogonal_init(np.random.default_rng(11), 16, 8)
    assert np.array_equal(a, b)
    assert np.allclose(a.T @ a, np.eye(8), atol=1e-12)


def test_num_params_counts_trainable_and_priors():
    net = make_net()
    trainable = sum(arr.size for _, arr in net.param_blocks())
    frozen = sum(sum(p.size for p in head) for head in net.prior_params)
    assert net.num_params == trainable + frozen
    assert net.flat_params.size == trainable


def test_state_arrays_roundtrip():
    net = make_net(seed=12)
    net.wp += 0.5
    state = {k: v.copy() for k, v in net.state_arrays().items()}
    other = make_net(seed=99)
    other.load_state_arrays(state)
    assert np.array_equal(other.flat_params, net.flat_params)
    assert other.prior_hash() == net.prior_hash()
    idx = np.arange(4, dtype=np.int64)
    assert np.array_equal(other.forward_batch(idx).preds, net.forward_batch(idx).preds)
