"""TD3 and the graph-enhanced cascaded-actor (GCA) codesign agent.

Critics estimate negated discounted cost, so the actor ascends
min(Q1, Q2). The action fed to the critics is the continuous actor output
(scheduling weights and control values) before the discrete embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import nn
from .channel import validate_allocation
from .env import MdpState, World, WncsEnv, encode_state, state_dim
from .lqr import LqrGain, lqr_control
from .scheduling import Scheduler, max_weight_matching, priority_mapping

SCHED_MODES = ("mbgm", "priority", "external")
CTRL_MODES = ("actor", "lqr")


class TrainingDivergence(FloatingPointError):
    def __init__(self, msg, agent=None, episode=None):
        super().__init__(msg)
        self.agent = agent
        self.episode = episode


@dataclass
class Td3Config:
    episodes: int = 3000
    steps: int = 100
    beta: float = 0.99
    tau: float = 0.005
    batch_size: int = 64
    policy_delay: int = 2       # D1
    target_delay: int = 2       # D2
    sigma_a: float = math.sqrt(0.1)
    lr: float = 1e-3
    buffer_size: int = 100_000
    hidden: tuple = (300, 200, 100)
    clip: float = 1.0
    target_noise: float = 0.2
    target_noise_clip: float = 0.5
    warmup_steps: int = 1000
    cost_scale: float = 100.0
    cost_transform: str = "log"      # critics learn log1p(c / cost_scale); "linear": c / cost_scale
    x_scale: float = 10.0            # divisor for x_hat in the network input
    layer_norm: bool = True
    full_p: bool = False
    seed: int = 0


@dataclass
class AgentSpec:
    """Which actor, action embedding and controller an agent uses.

    ``gca``: cascaded dual-branch actor, CSI-weighted matching, partial
    policy gradients. ``td3_ctrl``: flat actor emitting controls only, an
    external scheduler picks channels. ``td3_priority``: flat actor whose
    device scores feed the priority mapping, plus controls.
    ``td3_priority_lqr``: priority scores only, standard LQR control.
    """

    M: int
    N: int
    L: int
    state_dim: int
    actor_kind: str = "gca"
    sched_mode: str = "mbgm"
    ctrl_mode: str = "actor"
    cascade: bool = True
    partial_gradient: bool = True

    @property
    def n_devices(self):
        return self.M + self.N

    @property
    def n_sched(self):
        return {"mbgm": self.n_devices * self.L, "priority": self.n_devices, "external": 0}[self.sched_mode]

    @property
    def n_ctrl(self):
        return self.N if self.ctrl_mode == "actor" else 0

    @property
    def action_dim(self):
        return self.n_sched + self.n_ctrl


VARIANTS = {
    "gca": dict(actor_kind="gca", sched_mode="mbgm", ctrl_mode="actor", partial_gradient=True),
    "td3_ctrl": dict(actor_kind="flat", sched_mode="external", ctrl_mode="actor", partial_gradient=False),
    "td3_priority": dict(actor_kind="flat", sched_mode="priority", ctrl_mode="actor", partial_gradient=False),
    "td3_priority_lqr": dict(actor_kind="flat", sched_mode="priority", ctrl_mode="lqr", partial_gradient=False),
}


def make_spec(world: World, variant="gca", full_p=False, **overrides) -> AgentSpec:
    K, M, N, L = world.dims
    kw = dict(VARIANTS[variant])
    kw.update(overrides)
    return AgentSpec(M=M, N=N, L=L, state_dim=state_dim(world, full_p), **kw)


class GcaActor:
    """Shared trunk, a sigmoid scheduling head, and a control head whose
    input is the trunk features concatenated with the scheduling output."""

    def __init__(self, spec: AgentSpec, hidden, rng, layer_norm=True):
        *trunk_sizes, head = hidden
        self.spec = spec
        self.cascade = spec.cascade
        self.trunk = nn.DenseNet.build([spec.state_dim, *trunk_sizes], rng, out_act="relu",
                                       layer_norm=layer_norm)
        # the trunk's last layer is hidden too: give it layer norm as well
        if layer_norm:
            last = self.trunk.layers[-1]
            last.alpha, last.delta = np.ones(last.b.size), np.zeros(last.b.size)
        feat = trunk_sizes[-1] if trunk_sizes else spec.state_dim
        self.sched = nn.DenseNet.build([feat, head, spec.n_sched], rng, out_act="sigmoid",
                                       layer_norm=layer_norm)
        self.ctrl = nn.DenseNet.build([feat + spec.n_sched, head, spec.n_ctrl], rng,
                                      out_act="identity", layer_norm=layer_norm)

    @property
    def nets(self):
        return [self.trunk, self.sched, self.ctrl]

    def forward(self, s):
        s = np.atleast_2d(s)
        h, c_trunk = nn.forward(self.trunk, s)
        a_com, c_sched = nn.forward(self.sched, h)
        wired = a_com if self.cascade else np.zeros_like(a_com)
        a_ctrl, c_ctrl = nn.forward(self.ctrl, np.concatenate([h, wired], axis=1))
        return (a_com, a_ctrl), (c_trunk, c_sched, c_ctrl, h.shape[1])

    def backward(self, cache, g_com, g_ctrl):
        c_trunk, c_sched, c_ctrl, feat = cache
        grads_ctrl, g_in = nn.backward(self.ctrl, c_ctrl, g_ctrl)
        g_h = g_in[:, :feat]
        g_com_total = g_com + (g_in[:, feat:] if self.cascade else 0.0)
        grads_sched, g_h2 = nn.backward(self.sched, c_sched, g_com_total)
        grads_trunk, _ = nn.backward(self.trunk, c_trunk, g_h + g_h2)
        return grads_trunk + grads_sched + grads_ctrl


class FlatActor:
    """One network; the first ``n_sched`` outputs pass through a sigmoid."""

    def __init__(self, spec: AgentSpec, hidden, rng, layer_norm=True):
        self.spec = spec
        self.net = nn.DenseNet.build([spec.state_dim, *hidden, spec.action_dim], rng,
                                     out_act="identity", layer_norm=layer_norm)

    @property
    def nets(self):
        return [self.net]

    def forward(self, s):
        out, cache = nn.forward(self.net, np.atleast_2d(s))
        k = self.spec.n_sched
        sched = expit(out[:, :k])
        return (sched, out[:, k:]), (cache, sched)

    def backward(self, cache, g_com, g_ctrl):
        c, sched = cache
        g = np.concatenate([g_com * sched * (1.0 - sched), g_ctrl], axis=1)
        grads, _ = nn.backward(self.net, c, g)
        return grads


def _params(model):
    return [p for net in model.nets for p in net.params()]


def _bump(model):
    for net in model.nets:
        net.version += 1


def _clone(model):
    twin = object.__new__(type(model))
    twin.__dict__.update(model.__dict__)
    if isinstance(model, GcaActor):
        twin.trunk, twin.sched, twin.ctrl = (n.copy() for n in model.nets)
    else:
        twin.net = model.net.copy()
    return twin


class ReplayBuffer:
    def __init__(self, capacity, s_dim, a_dim, n_act):
        self.capacity = capacity
        self.s = np.zeros((capacity, s_dim))
        self.a = np.zeros((capacity, a_dim))
        self.c = np.zeros(capacity)
        self.s2 = np.zeros((capacity, s_dim))
        self.mask = np.zeros((capacity, n_act))
        self.ptr = 0
        self.size = 0

    def add(self, s, a, c, s2, mask):
        i = self.ptr
        self.s[i], self.a[i], self.c[i], self.s2[i], self.mask[i] = s, a, c, s2, mask
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def indices(self, batch_size, rng):
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size, rng):
        idx = self.indices(batch_size, rng)
        return Batch(self.s[idx], self.a[idx], self.c[idx], self.s2[idx], self.mask[idx])


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    c: np.ndarray
    s2: np.ndarray
    mask: np.ndarray | None = None


class Td3Agent:
    def __init__(self, spec: AgentSpec, cfg: Td3Config, world: World, lqr_gain: LqrGain | None = None):
        if spec.sched_mode not in SCHED_MODES or spec.ctrl_mode not in CTRL_MODES:
            raise ValueError(f"bad agent spec {spec}")
        if spec.ctrl_mode == "lqr" and lqr_gain is None:
            raise ValueError("LQR control mode needs a gain")
        self.spec, self.cfg, self.world, self.lqr_gain = spec, cfg, world, lqr_gain
        seeds = np.random.SeedSequence([cfg.seed, 17]).spawn(6)
        r_actor, r_c1, r_c2, r_t1, r_t2, r_train = (np.random.default_rng(s) for s in seeds)
        Actor = GcaActor if spec.actor_kind == "gca" else FlatActor
        self.actor = Actor(spec, cfg.hidden, r_actor, cfg.layer_norm)
        self.target_actor = _clone(self.actor)
        c_sizes = [spec.state_dim + spec.action_dim, *cfg.hidden, 1]
        build = lambda r: nn.DenseNet.build(c_sizes, r, layer_norm=cfg.layer_norm)
        self.critic1, self.critic2 = build(r_c1), build(r_c2)
        self.target_critic1, self.target_critic2 = build(r_t1), build(r_t2)
        self.actor_opt = nn.AdamState.like(_params(self.actor), cfg.lr)
        self.critic1_opt = nn.AdamState.like(self.critic1.params(), cfg.lr)
        self.critic2_opt = nn.AdamState.like(self.critic2.params(), cfg.lr)
        self.rng = r_train
        self.buffer = ReplayBuffer(cfg.buffer_size, spec.state_dim, spec.action_dim, spec.N)
        self.total_steps = 0
        self.updates = 0
        self.episodes_done = 0
        self.scheduler = None       # external scheduler name, if any

    def encode(self, state: MdpState) -> np.ndarray:
        return encode_state(state, self.world, self.cfg.full_p, x_scale=self.cfg.x_scale)

    def act_raw(self, s):
        (a_com, a_ctrl), _ = self.actor.forward(s)
        return np.concatenate([a_com, a_ctrl], axis=1)


def embed_action(a_com, grid) -> np.ndarray:
    """CSI-weighted max-weight matching of a (devices x channels) weight matrix."""
    return max_weight_matching(np.asarray(a_com) * grid.G.T)


def _clip_sched(raw, n_sched):
    raw[..., :n_sched] = np.clip(raw[..., :n_sched], 0.0, 1.0)
    return raw


def select_action(agent: Td3Agent, state: MdpState, rng, explore=True, external_D=None, raw=None):
    """Returns (a_tilde, D, u_tx). ``raw`` overrides the actor output (warm-up)."""
    spec = agent.spec
    if raw is None:
        raw = agent.act_raw(agent.encode(state))[0]
        if explore and agent.cfg.sigma_a > 0:
            raw = _clip_sched(raw + rng.normal(0.0, agent.cfg.sigma_a, raw.shape), spec.n_sched)
    sched, ctrl = raw[:spec.n_sched], raw[spec.n_sched:]
    if spec.sched_mode == "mbgm":
        D = embed_action(sched.reshape(spec.n_devices, spec.L), state.grid)
    elif spec.sched_mode == "priority":
        D = priority_mapping(sched, state.grid)
    else:
        if external_D is None:
            raise ValueError("external scheduling mode needs an allocation")
        D = np.asarray(external_D)
    if not validate_allocation(D):
        raise AssertionError("embedded allocation violates the channel constraint")
    u = ctrl.copy() if spec.ctrl_mode == "actor" else lqr_control(agent.lqr_gain, state.x_hat)
    return raw, D, u


def _critic_input(s, a):
    return np.concatenate([s, a], axis=1)


def td_target(agent: Td3Agent, batch: Batch, rng=None) -> np.ndarray:
    """y = -c / cost_scale + beta * min_k Qhat_k(s', pihat(s') + clipped noise)."""
    cfg, spec = agent.cfg, agent.spec
    rng = agent.rng if rng is None else rng
    a2 = _target_raw(agent, batch.s2)
    if cfg.target_noise > 0:
        noise = np.clip(rng.normal(0.0, cfg.target_noise, a2.shape), -cfg.target_noise_clip, cfg.target_noise_clip)
        a2 = _clip_sched(a2 + noise, spec.n_sched)
    x = _critic_input(batch.s2, a2)
    q1, _ = nn.forward(agent.target_critic1, x)
    q2, _ = nn.forward(agent.target_critic2, x)
    return -learning_cost(batch.c, cfg) + cfg.beta * np.minimum(q1, q2)[:, 0]


def learning_cost(c, cfg: Td3Config):
    """Per-step cost as seen by the critics."""
    c = np.asarray(c, dtype=float) / cfg.cost_scale
    if cfg.cost_transform == "log":
        return np.log1p(c)
    if cfg.cost_transform == "linear":
        return c
    raise ValueError(f"unknown cost transform {cfg.cost_transform!r}")


def _target_raw(agent, s):
    (a_com, a_ctrl), _ = agent.target_actor.forward(s)
    return np.concatenate([a_com, a_ctrl], axis=1)


def critic_gradients(critic, batch: Batch, y):
    q, cache = nn.forward(critic, _critic_input(batch.s, batch.a))
    td = y - q[:, 0]
    loss = float(np.mean(td ** 2))
    grads, _ = nn.backward(critic, cache, (-2.0 * td / td.size)[:, None])
    return loss, grads


def critic_update(agent: Td3Agent, batch: Batch, y=None):
    """One clipped Adam step on each critic's mean squared TD error."""
    if y is None:
        y = td_target(agent, batch)
    losses = []
    for critic, opt in ((agent.critic1, agent.critic1_opt), (agent.critic2, agent.critic2_opt)):
        loss, grads = critic_gradients(critic, batch, y)
        nn.apply_adam(critic, nn.clip_global(grads, agent.cfg.clip), opt)
        losses.append(loss)
    return tuple(losses)


def actor_gradients(agent: Td3Agent, s, mask=None):
    """Gradients of -(1/B) sum_i min_k Q_k(s_i, pi(s_i)) w.r.t. actor parameters.

    With ``mask`` (B x N actuator-scheduled flags) the critic-to-action
    gradient of control outputs belonging to unscheduled actuators is
    zeroed before it enters the actor.
    """
    spec = agent.spec
    (a_com, a_ctrl), cache = agent.actor.forward(s)
    x = _critic_input(s, np.concatenate([a_com, a_ctrl], axis=1))
    q1, c1 = nn.forward(agent.critic1, x)
    q2, c2 = nn.forward(agent.critic2, x)
    B = s.shape[0]
    first = q1 <= q2
    _, g1 = nn.backward(agent.critic1, c1, np.where(first, -1.0 / B, 0.0))
    _, g2 = nn.backward(agent.critic2, c2, np.where(first, 0.0, -1.0 / B))
    g_a = (g1 + g2)[:, spec.state_dim:]
    g_com, g_ctrl = g_a[:, :spec.n_sched], g_a[:, spec.n_sched:]
    if mask is not None:
        g_ctrl = g_ctrl * mask
    objective = -float(np.mean(np.minimum(q1, q2)))
    return agent.actor.backward(cache, g_com, g_ctrl), objective


def _actor_step(agent, s, mask):
    grads, _ = actor_gradients(agent, s, mask)
    norm = nn.global_norm(grads)
    grads = nn.clip_global(grads, agent.cfg.clip)
    nn.adam_step(_params(agent.actor), grads, agent.actor_opt)
    _bump(agent.actor)
    return norm


def actor_update_vanilla(agent: Td3Agent, batch: Batch) -> float:
    return _actor_step(agent, batch.s, None)


def actor_update_partial(agent: Td3Agent, batch: Batch) -> float:
    if batch.mask is None:
        raise ValueError("partial policy gradient needs the actuator scheduling mask")
    return _actor_step(agent, batch.s, batch.mask)


def _blend(main_params, target_params, tau):
    for p, t in zip(main_params, target_params):
        t *= 1.0 - tau
        t += tau * p


def soft_update(agent: Td3Agent, tau=None):
    tau = agent.cfg.tau if tau is None else tau
    _blend(_params(agent.actor), _params(agent.target_actor), tau)
    _bump(agent.target_actor)
    for main, tgt in ((agent.critic1, agent.target_critic1), (agent.critic2, agent.target_critic2)):
        _blend(main.params(), tgt.params(), tau)
        tgt.version += 1


def learn_step(agent: Td3Agent) -> dict:
    """Critic step every call; actor every D1 calls; targets every D2 calls."""
    cfg = agent.cfg
    batch = agent.buffer.sample(cfg.batch_size, agent.rng)
    l1, l2 = critic_update(agent, batch)
    if not (math.isfinite(l1) and math.isfinite(l2)):
        raise TrainingDivergence("non-finite critic loss", agent)
    agent.updates += 1
    out = {"td_loss": 0.5 * (l1 + l2)}
    if agent.updates % cfg.policy_delay == 0 and agent.spec.n_sched + agent.spec.n_ctrl > 0:
        if agent.spec.partial_gradient and agent.spec.n_ctrl:
            out["actor_grad_norm"] = actor_update_partial(agent, batch)
        else:
            out["actor_grad_norm"] = actor_update_vanilla(agent, batch)
        if not math.isfinite(out["actor_grad_norm"]):
            raise TrainingDivergence("non-finite actor gradient", agent)
    if agent.updates % cfg.target_delay == 0:
        soft_update(agent)
    return out


def _warmup_raw(agent, rng):
    spec = agent.spec
    return np.concatenate([rng.uniform(0.0, 1.0, spec.n_sched), rng.standard_normal(spec.n_ctrl)])


def train(world: World, cfg: Td3Config, variant="gca", scheduler: str | None = None,
          lqr_gain: LqrGain | None = None, spec_overrides=None, progress=None, agent=None):
    """Run the training loop; returns (agent, log) with one log row per episode.

    Passing a restored ``agent`` continues its run from episode
    ``agent.episodes_done`` up to ``cfg.episodes``; the result is identical
    to an uninterrupted run.
    """
    if agent is None:
        spec = make_spec(world, variant, cfg.full_p, **(spec_overrides or {}))
        agent = Td3Agent(spec, cfg, world, lqr_gain)
    spec = agent.spec
    scheduler = agent.scheduler if scheduler is None else scheduler
    agent.scheduler = scheduler
    if spec.sched_mode == "external" and scheduler is None:
        raise ValueError("this variant needs an external scheduler")
    K, M, N, L = world.dims
    sched = Scheduler(scheduler, M, N, L) if spec.sched_mode == "external" else None
    env = WncsEnv(world)
    log = []
    for ep in range(agent.episodes_done, cfg.episodes):
        state = env.reset(seed=(cfg.seed, 1, ep))
        if sched is not None:
            sched.reset(env.policy_rng)
        s = agent.encode(state)
        total = disc = 0.0
        td_losses, grad_norms = [], []
        for t in range(cfg.steps):
            ext = sched.select(state.grid) if sched is not None else None
            warm = agent.total_steps < cfg.warmup_steps
            raw = _warmup_raw(agent, agent.rng) if warm else None
            a_tilde, D, u = select_action(agent, state, agent.rng, explore=True, external_D=ext, raw=raw)
            state, cost, info = env.step(D, u)
            if sched is not None:
                sched.observe(D, info["success"])
            s2 = agent.encode(state)
            mask = (D[M:].sum(axis=1) > 0).astype(float)
            agent.buffer.add(s, a_tilde, cost.total, s2, mask)
            agent.total_steps += 1
            total += cost.total
            disc += cfg.beta ** t * cost.total
            s = s2
            if not warm and agent.buffer.size >= cfg.batch_size:
                out = learn_step(agent)
                td_losses.append(out["td_loss"])
                if "actor_grad_norm" in out:
                    grad_norms.append(out["actor_grad_norm"])
        row = {
            "episode": ep,
            "cost": total,
            "discounted_cost": disc,
            "mean_td_loss": float(np.mean(td_losses)) if td_losses else float("nan"),
            "actor_grad_norm": float(np.mean(grad_norms)) if grad_norms else float("nan"),
        }
        if not math.isfinite(total):
            raise TrainingDivergence("non-finite episode cost", agent, ep)
        log.append(row)
        agent.episodes_done = ep + 1
        if progress is not None:
            progress(row)
    return agent, log


class AgentPolicy:
    """Greedy (noise-free) rollout policy for a trained agent."""

    def __init__(self, agent: Td3Agent, scheduler: str | None = None):
        self.agent = agent
        K, M, N, L = agent.world.dims
        scheduler = agent.scheduler if scheduler is None else scheduler
        self.sched = Scheduler(scheduler, M, N, L) if agent.spec.sched_mode == "external" else None

    def reset(self, rng):
        self.rng = rng
        if self.sched is not None:
            self.sched.reset(rng)

    def act(self, state: MdpState):
        ext = self.sched.select(state.grid) if self.sched is not None else None
        _, D, u = select_action(self.agent, state, self.rng, explore=False, external_D=ext)
        return D, u

    def observe(self, D, success):
        if self.sched is not None:
            self.sched.observe(D, success)
