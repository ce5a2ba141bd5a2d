"""TD3 machinery and the cascaded GCA actor."""

from dataclasses import replace

import numpy as np
import pytest

from wncs import nn
from wncs.drl import (Batch, GcaActor, ReplayBuffer, Td3Agent, Td3Config, _params, actor_gradients,
                      actor_update_partial, actor_update_vanilla, critic_gradients, critic_update,
                      embed_action, learning_cost, make_spec, select_action, soft_update, td_target, train)
from wncs.env import WncsEnv, make_world
from wncs.scheduling import csi_greedy

from gradcheck import fd_actor, fd_critic, perturb_params, rel_err

SMALL = Td3Config(hidden=(6, 5, 4), batch_size=8, warmup_steps=20, steps=10, episodes=3, buffer_size=500)


def make_agent(world, variant="gca", cfg=SMALL, seed=0, **spec_kw):
    cfg = replace(cfg, seed=seed)
    spec = make_spec(world, variant, cfg.full_p, **spec_kw)
    gain = None
    if spec.ctrl_mode == "lqr":
        from wncs.lqr import riccati_standard
        gain = riccati_standard(world.system, 0.99)
    return Td3Agent(spec, cfg, world, gain)


def random_batch(agent, B=5, seed=0):
    rng = np.random.default_rng(seed)
    spec = agent.spec
    a = rng.standard_normal((B, spec.action_dim))
    a[:, :spec.n_sched] = rng.uniform(0, 1, (B, spec.n_sched))
    return Batch(s=rng.standard_normal((B, spec.state_dim)), a=a, c=rng.uniform(0, 50, B),
                 s2=rng.standard_normal((B, spec.state_dim)),
                 mask=rng.integers(0, 2, (B, spec.N)).astype(float))


@pytest.mark.parametrize("variant", ["gca", "td3_priority", "td3_ctrl"])
@pytest.mark.parametrize("use_mask", [False, True])
def test_actor_gradient_finite_differences(tiny_world, variant, use_mask):
    agent = make_agent(tiny_world, variant, seed=3)
    perturb_params(agent, np.random.default_rng(1))
    batch = random_batch(agent, seed=2)
    mask = batch.mask if use_mask else None
    grads, _ = actor_gradients(agent, batch.s, mask)
    numeric = fd_actor(agent, batch.s, mask)
    assert rel_err(np.concatenate([g.ravel() for g in grads]),
                   np.concatenate([g.ravel() for g in numeric])) < 1e-4


def test_critic_gradient_finite_differences(tiny_world):
    agent = make_agent(tiny_world, seed=4)
    perturb_params(agent, np.random.default_rng(5))
    batch = random_batch(agent, seed=6)
    y = td_target(agent, batch, rng=np.random.default_rng(0))
    loss, grads = critic_gradients(agent.critic1, batch, y)
    assert rel_err(np.concatenate([g.ravel() for g in grads]), fd_critic(agent.critic1, batch, y)) < 1e-4


def test_all_ones_mask_is_vanilla(tiny_world):
    agent = make_agent(tiny_world, seed=7)
    s = random_batch(agent).s
    vanilla, _ = actor_gradients(agent, s, None)
    ones, _ = actor_gradients(agent, s, np.ones((s.shape[0], agent.spec.N)))
    for a, b in zip(vanilla, ones):
        assert np.array_equal(a, b)


def test_all_zero_mask_kills_control_path(tiny_world):
    agent = make_agent(tiny_world, seed=8)
    s = random_batch(agent).s
    grads, _ = actor_gradients(agent, s, np.zeros((s.shape[0], agent.spec.N)))
    n_trunk = len(agent.actor.trunk.params())
    n_sched = len(agent.actor.sched.params())
    ctrl_grads = grads[n_trunk + n_sched:]
    assert all(np.all(g == 0.0) for g in ctrl_grads)
    # the scheduling head still learns
    assert any(np.any(g != 0.0) for g in grads[n_trunk:n_trunk + n_sched])


def test_partial_update_requires_mask(tiny_world):
    agent = make_agent(tiny_world)
    b = random_batch(agent)
    b.mask = None
    with pytest.raises(ValueError):
        actor_update_partial(agent, b)


def test_constant_critic_gives_zero_actor_gradient(tiny_world):
    agent = make_agent(tiny_world, seed=9)
    for c in (agent.critic1, agent.critic2):
        c.layers[-1].W[:] = 0.0
        c.layers[-1].b[:] = 3.0
        c.version += 1
    before = [p.copy() for p in _params(agent.actor)]
    actor_update_vanilla(agent, random_batch(agent))
    assert all(np.array_equal(a, b) for a, b in zip(before, _params(agent.actor)))


def _abs_critic(in_dim):
    """Q(s, a) = -|a - 1| for the last input, exact with two ReLU units."""
    W1 = np.zeros((in_dim, 2))
    W1[-1] = [1.0, -1.0]
    return nn.DenseNet([nn.Dense(W1, np.array([-1.0, 1.0]), "relu"),
                        nn.Dense(np.array([[-1.0], [-1.0]]), np.zeros(1), "identity")])


def test_actor_climbs_toy_critic():
    world = make_world(1, 1, 1, 1, seed=0)
    cfg = replace(SMALL, lr=1e-2)
    agent = make_agent(world, "td3_ctrl", cfg=cfg)
    agent.critic1 = _abs_critic(agent.spec.state_dim + 1)
    agent.critic2 = _abs_critic(agent.spec.state_dim + 1)
    s = np.random.default_rng(0).standard_normal((16, agent.spec.state_dim))
    batch = Batch(s, np.zeros((16, 1)), np.zeros(16), s)
    for _ in range(600):
        actor_update_vanilla(agent, batch)
    (_, a), _ = agent.actor.forward(s)
    assert np.mean(np.abs(a - 1.0)) < 0.1


def test_td_target_beta_zero(tiny_world):
    cfg = replace(SMALL, beta=0.0, cost_scale=1.0, cost_transform="linear")
    agent = make_agent(tiny_world, cfg=cfg)
    b = random_batch(agent)
    assert np.array_equal(td_target(agent, b), -b.c)


def test_td_target_hand_values(tiny_world):
    cfg = replace(SMALL, beta=0.9, cost_scale=10.0, cost_transform="linear")
    agent = make_agent(tiny_world, cfg=cfg)
    for net, val in ((agent.target_critic1, 2.0), (agent.target_critic2, 3.0)):
        net.layers[-1].W[:] = 0.0
        net.layers[-1].b[:] = val
    b = random_batch(agent, B=2)
    b.c = np.array([5.0, 20.0])
    assert np.allclose(td_target(agent, b), [-0.5 + 0.9 * 2.0, -2.0 + 0.9 * 2.0])
    agent.cfg = replace(cfg, cost_transform="log")
    assert np.allclose(td_target(agent, b), [-np.log1p(0.5) + 1.8, -np.log1p(2.0) + 1.8])


def test_learning_cost_transforms():
    assert learning_cost(50.0, Td3Config(cost_scale=100.0, cost_transform="linear")) == 0.5
    assert learning_cost(50.0, Td3Config(cost_scale=100.0)) == pytest.approx(np.log(1.5))
    with pytest.raises(ValueError):
        learning_cost(50.0, Td3Config(cost_transform="sqrt"))


def test_identical_target_critics(tiny_world):
    agent = make_agent(tiny_world)
    agent.target_critic2 = agent.target_critic1.copy()
    b = random_batch(agent)
    y = td_target(agent, b, rng=np.random.default_rng(1))
    a2 = agent.target_actor.forward(b.s2)
    assert np.all(np.isfinite(y))


def test_zero_td_error_leaves_critic(tiny_world):
    agent = make_agent(tiny_world)
    b = random_batch(agent)
    q, _ = nn.forward(agent.critic1, np.concatenate([b.s, b.a], axis=1))
    q2, _ = nn.forward(agent.critic2, np.concatenate([b.s, b.a], axis=1))
    agent.critic2 = agent.critic1.copy()
    before = agent.critic1.get_flat()
    loss, grads = critic_gradients(agent.critic1, b, q[:, 0])
    assert loss == 0.0 and all(np.all(g == 0) for g in grads)
    critic_update(agent, b, y=q[:, 0])
    assert np.array_equal(agent.critic1.get_flat(), before)


def test_critics_differ_at_init(tiny_world):
    agent = make_agent(tiny_world)
    assert not np.array_equal(agent.critic1.get_flat(), agent.critic2.get_flat())
    assert not np.array_equal(agent.target_critic1.get_flat(), agent.target_critic2.get_flat())


def _all_params(agent):
    nets = agent.actor.nets + [agent.critic1, agent.critic2]
    tgts = agent.target_actor.nets + [agent.target_critic1, agent.target_critic2]
    return (np.concatenate([n.get_flat() for n in nets]), np.concatenate([n.get_flat() for n in tgts]))


def test_soft_update_extremes(tiny_world):
    agent = make_agent(tiny_world)
    main, tgt = _all_params(agent)
    soft_update(agent, 0.0)
    assert np.array_equal(_all_params(agent)[1], tgt)
    soft_update(agent, 1.0)
    assert np.array_equal(_all_params(agent)[1], main)


def test_soft_update_two_steps(tiny_world):
    agent = make_agent(tiny_world)
    main, tgt = _all_params(agent)
    soft_update(agent, 0.005)
    soft_update(agent, 0.005)
    expected = 0.995 ** 2 * tgt + (1 - 0.995 ** 2) * main
    assert np.allclose(_all_params(agent)[1], expected, rtol=0, atol=1e-14)


def test_soft_update_drift_bound(tiny_world):
    agent = make_agent(tiny_world)
    main, tgt = _all_params(agent)
    soft_update(agent)
    change = np.max(np.abs(_all_params(agent)[1] - tgt))
    assert change <= agent.cfg.tau * np.max(np.abs(main - tgt)) + 1e-15


def test_buffer_bounds_and_eviction():
    buf = ReplayBuffer(5, 1, 1, 1)
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        buf.sample(2, rng)
    for i in range(3):
        buf.add([i], [0], float(i), [i], [1])
    assert np.all(buf.indices(200, rng) < 3)
    for i in range(3, 8):
        buf.add([i], [0], float(i), [i], [1])
    assert buf.size == 5
    costs = set(buf.sample(500, rng).c.tolist())
    assert costs == {3.0, 4.0, 5.0, 6.0, 7.0}


def test_gca_sched_range_and_determinism(tiny_world):
    agent = make_agent(tiny_world)
    s = random_batch(agent).s * 10
    (a_com, a_ctrl), _ = agent.actor.forward(s)
    assert np.all((a_com > 0) & (a_com < 1))
    (b_com, b_ctrl), _ = agent.actor.forward(s)
    assert np.array_equal(a_ctrl, b_ctrl)


def test_cascade_carries_scheduling(tiny_world):
    wired = make_agent(tiny_world, seed=2)
    cut = make_agent(tiny_world, seed=2, cascade=False)
    s = random_batch(wired).s
    (_, u1), _ = wired.actor.forward(s)
    (_, u2), _ = cut.actor.forward(s)
    assert not np.allclose(u1, u2)


def _env_state(world, seed=0):
    env = WncsEnv(world)
    return env, env.reset(seed)


def test_embed_uniform_is_csi_greedy(world3):
    _, state = _env_state(world3)
    K, M, N, L = world3.dims
    assert np.array_equal(embed_action(np.full((M + N, L), 0.4), state.grid), csi_greedy(state.grid))


def test_embed_single_row(world3):
    _, state = _env_state(world3, 3)
    K, M, N, L = world3.dims
    a = np.zeros((M + N, L))
    a[4] = 1.0
    D = embed_action(a, state.grid)
    assert D.sum() == 1 and D[4, np.argmax(state.grid.G[:, 4])] == 1


def test_embed_brute_force(world3):
    from conftest import brute_force_matching
    from wncs.scheduling import allocation_weight
    rng = np.random.default_rng(0)
    env = WncsEnv(world3)
    for ep in range(20):
        state = env.reset(ep)
        a = rng.uniform(0, 1, (6, 3))
        D = embed_action(a, state.grid)
        w = a * state.grid.G.T
        assert allocation_weight(D, w) == pytest.approx(brute_force_matching(w), rel=1e-12)


def test_select_action_paths(tiny_world):
    agent = make_agent(tiny_world)
    _, state = _env_state(tiny_world)
    raw, D, u = select_action(agent, state, np.random.default_rng(0), explore=False)
    assert np.array_equal(raw, agent.act_raw(agent.encode(state))[0])
    quiet = make_agent(tiny_world, cfg=replace(SMALL, sigma_a=0.0))
    r1 = select_action(quiet, state, np.random.default_rng(0), explore=True)
    r2 = select_action(quiet, state, np.random.default_rng(0), explore=False)
    assert all(np.array_equal(a, b) for a, b in zip(r1, r2))
    noisy = select_action(agent, state, np.random.default_rng(1), explore=True)[0]
    assert np.all((noisy[:agent.spec.n_sched] >= 0) & (noisy[:agent.spec.n_sched] <= 1))


def test_select_action_lqr_variant(tiny_world):
    agent = make_agent(tiny_world, "td3_priority_lqr")
    _, state = _env_state(tiny_world)
    _, D, u = select_action(agent, state, np.random.default_rng(0), explore=False)
    assert np.array_equal(u, agent.lqr_gain.K_gain @ state.x_hat)


def test_zero_episodes(tiny_world):
    agent, log = train(tiny_world, replace(SMALL, episodes=0))
    assert log == [] and agent.total_steps == 0


def test_training_is_deterministic(tiny_world):
    _, a = train(tiny_world, SMALL)
    _, b = train(tiny_world, SMALL)
    assert repr(a) == repr(b) and len(a) == 3


def test_external_scheduler_required(tiny_world):
    with pytest.raises(ValueError):
        train(tiny_world, SMALL, "td3_ctrl")


@pytest.mark.parametrize("variant,sched", [("td3_ctrl", "round_robin"), ("td3_priority", None),
                                           ("td3_priority_lqr", None)])
def test_variants_train(tiny_world, variant, sched):
    gain = None
    if variant == "td3_priority_lqr":
        from wncs.lqr import riccati_standard
        gain = riccati_standard(tiny_world.system, 0.99)
    agent, log = train(tiny_world, SMALL, variant, scheduler=sched, lqr_gain=gain)
    assert len(log) == 3 and all(np.isfinite(r["cost"]) for r in log)
