import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

import oracles
from cotransport.sac import (
    Batch,
    Mlp,
    ReplayBuffer,
    SacAgent,
    SacConfig,
    Transition,
    load_checkpoint,
    mlp_eval_grad,
    policy_loss,
    policy_sample,
    q_loss,
    sac_update,
    value_loss,
)


def _const_net(sizes, value=0.0):
    net = Mlp(sizes, rng=np.random.default_rng(0))
    net.params = [np.full_like(p, value) for p in net.params]
    return net


def _batch(n=4, obs=3, act=1, seed=0, done=0.0):
    rng = np.random.default_rng(seed)
    return Batch(
        rng.standard_normal((n, obs)),
        rng.uniform(-1, 1, (n, act)),
        rng.uniform(-1, 1, (n, act)),
        rng.standard_normal(n),
        rng.standard_normal((n, obs)),
        np.full(n, done),
    )


# --- networks ---------------------------------------------------------------


def test_zero_network_outputs_zero():
    net = _const_net([3, 5, 2])
    np.testing.assert_array_equal(net(np.ones(3)), 0.0)


def test_linear_layer_closed_form():
    rng = np.random.default_rng(1)
    net = Mlp([3, 2], rng=rng)
    x = rng.standard_normal(3)
    y, grad = mlp_eval_grad(net, x)
    W, b = net.params
    np.testing.assert_allclose(y, x @ W + b)
    g_out = np.array([1.0, -2.0])
    (gW, gb), gx = grad(g_out)
    np.testing.assert_allclose(gW, np.outer(x, g_out))
    np.testing.assert_allclose(gb, g_out)
    np.testing.assert_allclose(gx, W @ g_out)


@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_two_layer_gradients_match_finite_differences(activation):
    rng = np.random.default_rng(2)
    net = Mlp([4, 6, 3], activation, rng=rng)
    x = rng.standard_normal(4)
    w = rng.standard_normal(3)
    _, grad = mlp_eval_grad(net, x)
    analytic, _ = grad(w)
    numeric = oracles.finite_difference(net, lambda: float(w @ net(x)))
    assert oracles.relative_error(oracles.flat(analytic), numeric) < 1e-5


def test_input_dimension_mismatch():
    with pytest.raises(ValueError):
        Mlp([3, 2])(np.ones(4))


def test_polyak_extremes_and_trailing():
    rng = np.random.default_rng(3)
    a, b = Mlp([2, 3, 1], rng=rng), Mlp([2, 3, 1], rng=rng)
    before = b.flat().copy()
    b.polyak_from(a, 0.0)
    np.testing.assert_array_equal(b.flat(), before)
    b.polyak_from(a, 1.0)
    np.testing.assert_array_equal(b.flat(), a.flat())
    c = Mlp([2, 3, 1], rng=rng)
    gaps = []
    for _ in range(20):
        c.polyak_from(a, 0.005)
        gaps.append(np.linalg.norm(c.flat() - a.flat()))
    assert all(x >= y for x, y in zip(gaps, gaps[1:]))


# --- policy -----------------------------------------------------------------


def test_policy_center_action_and_log_prob():
    pol = _const_net([2, 4, 2])
    a, logp = policy_sample(pol, np.zeros(2), noise=np.zeros(1))
    assert a[0] == 0.0
    assert logp == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-12)
    assert logp == pytest.approx(-0.9189, abs=1e-4)
    a_det, _ = policy_sample(pol, np.zeros(2))
    assert a_det[0] == 0.0


def test_policy_sample_is_deterministic_given_noise():
    pol = Mlp([3, 8, 4], rng=np.random.default_rng(4))
    s = np.ones(3)
    noise = np.random.default_rng(5).standard_normal(2)
    assert [x.tobytes() for x in policy_sample(pol, s, noise)] == [x.tobytes() for x in policy_sample(pol, s, noise)]


@pytest.mark.parametrize("mean,log_std,scale", [(0.0, 0.0, 1.0), (0.7, -0.5, 1.0), (-0.3, 0.4, 2.0)])
def test_log_prob_integrates_to_one(mean, log_std, scale):
    pol = _const_net([1, 2])
    pol.params[-1] = np.array([mean, log_std])

    def density(a):
        # invert a = scale * tanh(mean + std * eps) for the noise that produces it
        u = np.arctanh(a / scale)
        eps = (u - mean) / np.exp(log_std)
        _, logp = policy_sample(pol, np.zeros(1), noise=np.array([eps]), scale=scale)
        return float(np.exp(logp))

    total, _ = integrate.quad(density, -scale, scale, limit=200, points=[0.0])
    assert abs(total - 1.0) < 1e-3


def test_log_std_clamp_stops_gradient():
    pol = _const_net([1, 2])
    pol.params[-1] = np.array([0.0, 5.0])
    batch = _batch(3, obs=1)
    q = _const_net([2, 3, 1])
    _, g = policy_loss(pol, q, batch, 0.3, np.ones((3, 1)))
    assert g[-1][1] == 0.0


# --- losses -----------------------------------------------------------------


def test_value_loss_examples():
    pol = _const_net([3, 4, 2])
    q = _const_net([4, 4, 1])
    value = _const_net([3, 4, 1])
    batch = _batch(5)
    noise = np.zeros((5, 1))
    alpha = 0.3
    # Q = 0 and log_prob = -0.9189 at zero noise, so the target is alpha * 0.9189
    target = alpha * 0.5 * np.log(2 * np.pi)
    value.params[-1] = np.array([target])
    loss, _ = value_loss(value, q, pol, batch, alpha, noise)
    assert loss == pytest.approx(0.0, abs=1e-20)
    value.params[-1] = np.array([target + 1.0])
    loss, _ = value_loss(value, q, pol, batch, alpha, noise)
    assert loss == pytest.approx(0.5)


def test_q_loss_examples():
    q = _const_net([4, 4, 1])
    vbar = _const_net([3, 4, 1])
    vbar.params[-1] = np.array([2.0])
    batch = _batch(4, done=0.0)
    q.params[-1] = np.array([0.0])
    batch.r[:] = -0.99 * 2.0
    loss, _ = q_loss(q, vbar, batch, 0.99)
    assert loss == pytest.approx(0.0, abs=1e-20)
    terminal = _batch(4, done=1.0)
    terminal.r[:] = 0.0
    loss, _ = q_loss(q, vbar, terminal, 0.99)
    assert loss == pytest.approx(0.0, abs=1e-20)


def test_policy_loss_examples():
    rng = np.random.default_rng(6)
    pol = Mlp([3, 5, 2], rng=rng)
    q = _const_net([4, 4, 1], 0.0)
    q.params[-1] = np.array([3.0])
    batch = _batch(6)
    noise = rng.standard_normal((6, 1))
    _, g = policy_loss(pol, q, batch, 1e-300, noise)
    assert np.max(np.abs(oracles.flat(g))) < 1e-250
    losses = [policy_loss(pol, q, batch, a, noise)[0] + 3.0 for a in (0.1, 0.2, 0.4)]
    mean_logp = losses[0] / 0.1
    # linear in alpha; strictly increasing while the mean log-density is positive
    np.testing.assert_allclose(losses, [a * mean_logp for a in (0.1, 0.2, 0.4)], rtol=1e-10)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_loss_gradients_property(seed):
    errors = oracles.loss_gradient_errors(seed)
    assert max(errors.values()) < 1e-4


def test_twin_q_gradients():
    for seed in range(3):
        errors = oracles.loss_gradient_errors(seed, twin=True)
        assert max(errors.values()) < 1e-4


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_value_and_q_losses_non_negative(seed):
    p = oracles.random_problem(seed)
    lv, _ = value_loss(p["value"], p["q"], p["policy"], p["batch"], p["alpha"], p["noise"], p["scale"])
    lq, _ = q_loss(p["q"], p["target"], p["batch"], 0.99)
    assert lv >= 0 and lq >= 0


# --- replay -----------------------------------------------------------------


def _tr(i, obs=2, act=1):
    return Transition(np.full(obs, i), np.full(act, i), np.full(act, i), float(i), np.full(obs, i + 1), False)


def test_replay_ring_eviction():
    buf = ReplayBuffer(5, 2, 1)
    for i in range(6):
        buf.push(_tr(i))
    assert len(buf) == 5
    assert 0.0 not in buf.r
    np.testing.assert_array_equal(buf.oldest_first().r, [1, 2, 3, 4, 5])


def test_replay_seeded_sampling_and_errors():
    buf = ReplayBuffer(100, 2, 1)
    for i in range(50):
        buf.push(_tr(i))
    a = buf.sample_indices(32, np.random.default_rng(9))
    b = buf.sample_indices(32, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        buf.sample_indices(51, np.random.default_rng(0))
    with pytest.raises(ValueError):
        buf.push(Transition(np.zeros(2), np.zeros(1), np.zeros(1), np.nan, np.zeros(2), False))


def test_replay_sampling_is_uniform():
    buf = ReplayBuffer(50, 1, 1)
    for i in range(50):
        buf.push(_tr(i, obs=1))
    rng = np.random.default_rng(10)
    idx = np.concatenate([buf.sample_indices(50, rng) for _ in range(2000)])
    counts = np.bincount(idx, minlength=50)
    chi2 = float(np.sum((counts - 2000.0) ** 2 / 2000.0))
    dof = 49
    assert abs(chi2 - dof) < 3 * np.sqrt(2 * dof)
    assert stats.chisquare(counts).pvalue > 1e-3


# --- agent ------------------------------------------------------------------


def _warm_agent(**changes):
    cfg = oracles.sanity_config(warmup_steps=16, batch_size=16, **changes)
    agent = SacAgent(3, 2, [0.35, 5.0], cfg)
    rng = np.random.default_rng(0)
    for _ in range(40):
        a, unit = agent.random_action()
        agent.observe(Transition(rng.standard_normal(3), a, unit, float(rng.standard_normal()), rng.standard_normal(3), False))
    return agent


def test_update_polyak_extremes():
    agent = _warm_agent(polyak_tau=0.0)
    before = agent.target_value.flat().copy()
    agent.update()
    np.testing.assert_array_equal(agent.target_value.flat(), before)
    agent = _warm_agent(polyak_tau=1.0)
    agent.update()
    np.testing.assert_array_equal(agent.target_value.flat(), agent.value.flat())


def test_update_is_deterministic():
    reports = []
    for _ in range(2):
        agent = _warm_agent()
        reports.append([agent.update() for _ in range(5)])
    assert reports[0] == reports[1]


def test_actions_respect_scale():
    agent = _warm_agent()
    for det in (True, False):
        a, unit = agent.act(np.ones(3) * 100, deterministic=det)
        assert np.all(np.abs(unit) <= 1.0)
        np.testing.assert_allclose(a, unit * [0.35, 5.0])


def test_checkpoint_round_trip(tmp_path):
    agent = _warm_agent(twin_q=True)
    for _ in range(3):
        agent.update()
    path = tmp_path / "agent.npz"
    agent.save(path, include_replay=True)
    clone = load_checkpoint(path)
    for x, y in zip(
        [agent.value, agent.target_value, agent.policy, *agent.qs],
        [clone.value, clone.target_value, clone.policy, *clone.qs],
    ):
        assert x.flat().tobytes() == y.flat().tobytes()
    assert clone.config == agent.config
    assert clone.total_steps == agent.total_steps and clone.updates == agent.updates
    assert len(clone.replay) == len(agent.replay)
    # the restored learner continues exactly like the original
    assert agent.update() == clone.update()
    assert agent.policy.flat().tobytes() == clone.policy.flat().tobytes()


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "other.npz"
    np.savez(path, meta=np.array('{"format": "other"}'))
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_config_validation():
    for bad in (dict(gamma=1.0), dict(alpha=0.0), dict(batch_size=10, replay_capacity=5), dict(polyak_tau=2.0)):
        with pytest.raises(ValueError):
            SacConfig(**bad)


def test_nonfinite_loss_is_reported():
    from cotransport.sac import NonFiniteLoss

    agent = _warm_agent()
    agent.value.params[0][:] = np.nan
    with pytest.raises(NonFiniteLoss):
        sac_update(agent, agent.sample_batch())


@pytest.mark.slow
def test_bandit_sanity():
    assert abs(oracles.train_bandit()) < 0.1


@pytest.mark.slow
def test_point_mass_sanity():
    assert max(oracles.train_point_mass()) < 0.05
