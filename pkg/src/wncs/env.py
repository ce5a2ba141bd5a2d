"""The codesign MDP: one object per rollout that owns plant, channels and estimator.

Slot t proceeds as follows. The policy sees s(t) = (x_hat(t), P(t),
u_rx(t-1), G(t)), where x_hat(t), P(t) are predicted from the slot t-1
posterior. Given the allocation D(t) and u_tx(t):

1. packet outcomes are drawn from D(t) and G(t);
2. sensors measure the current state x(t); failed packets are masked;
3. the one-step cost uses x_hat(t), P(t) and the realized u_rx(t);
4. the mKF folds in the received measurements (posterior of x(t));
5. the plant advances to x(t+1) under u_rx(t) and saturates;
6. x_hat(t+1), P(t+1) are predicted and the channels transition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from .estimator import EstimatorState, initial_state, mkf_update, predict_current
from .plant import X_MAX, PlantState, SystemMatrices, apply_outcomes, measure, step_plant


@dataclass(eq=False)
class World:
    """Everything that defines an experiment's environment."""

    system: SystemMatrices
    channel: ch.ChannelModel
    budget: ch.LinkBudget = field(default_factory=ch.LinkBudget)

    @property
    def dims(self):
        return self.system.K, self.system.M, self.system.N, self.channel.L

    def __eq__(self, other):
        return (isinstance(other, World) and self.system == other.system
                and self.channel == other.channel and self.budget == other.budget)


def make_world(K, M, N, L, seed=0, eig_low=1.0, eig_high=1.1, gain_levels=ch.TABLE_GAINS,
               budget=None) -> World:
    from .plant import generate_system

    ss = np.random.SeedSequence(seed)
    s_sys, s_ch = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    return World(
        system=generate_system(K, M, N, eig_low, eig_high, rng_seed=s_sys),
        channel=ch.generate_channel_model(M, N, L, len(gain_levels), gain_levels, rng_seed=s_ch),
        budget=budget or ch.LinkBudget(),
    )


@dataclass
class MdpState:
    x_hat: np.ndarray
    P: np.ndarray
    u_rx_prev: np.ndarray
    grid: ch.ChannelGrid


@dataclass
class CostBreakdown:
    est_cost: float
    ctrl_cost: float
    state_cost: float

    @property
    def total(self) -> float:
        return self.est_cost + self.ctrl_cost + self.state_cost


def one_step_cost(sys: SystemMatrices, x_hat, P, u_rx) -> CostBreakdown:
    return CostBreakdown(
        est_cost=float(np.trace(sys.Q @ P)),
        ctrl_cost=float(u_rx @ sys.R @ u_rx),
        state_cost=float(x_hat @ sys.Q @ x_hat),
    )


def episode_rngs(seed):
    """Independent channel / plant / outcome / policy streams for one episode."""
    entropy = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    ss = np.random.SeedSequence([int(e) for e in entropy])
    return tuple(np.random.default_rng(s) for s in ss.spawn(4))


class WncsEnv:
    def __init__(self, world: World, x_max=X_MAX):
        self.world = world
        self.x_max = x_max
        self.t = 0

    @property
    def sys(self) -> SystemMatrices:
        return self.world.system

    def reset(self, seed=0) -> MdpState:
        self.channel_rng, self.plant_rng, self.outcome_rng, self.policy_rng = episode_rngs(seed)
        self.grid = ch.random_grid(self.world.channel, self.channel_rng)
        self.plant = PlantState(np.zeros(self.sys.K), 0)
        self.est: EstimatorState = initial_state(self.sys)
        self.x_hat, self.P = self.est.x_pred, self.est.p_pred
        self.u_prev = np.zeros(self.sys.N)
        self.t = 0
        return self.observe()

    def observe(self) -> MdpState:
        return MdpState(self.x_hat.copy(), self.P.copy(), self.u_prev.copy(), self.grid)

    def step(self, D, u_tx):
        sys = self.sys
        D = np.asarray(D)
        u_tx = np.asarray(u_tx, dtype=float)
        outcomes = ch.sample_outcomes(D, self.grid, self.world.budget, self.outcome_rng)
        y_tx = measure(sys, self.plant, self.plant_rng)
        u_rx, y_rx = apply_outcomes(u_tx, y_tx, outcomes)
        cost = one_step_cost(sys, self.x_hat, self.P, u_rx)

        self.est = mkf_update(sys, self.est, y_rx, outcomes.psi, self.u_prev)
        x_true = self.plant.x
        self.plant = step_plant(sys, self.plant, u_rx, self.plant_rng, self.x_max)
        self.x_hat, self.P = predict_current(sys, self.est, u_rx)
        self.u_prev = u_rx
        self.grid = ch.step_channels(self.world.channel, self.grid, self.channel_rng)
        self.t += 1
        info = {
            "success": outcomes.success,
            "outcomes": outcomes,
            "u_rx": u_rx,
            "x": x_true,
            "tr_p_est": float(np.trace(self.est.p_est)),
            "innovation_norm": self.est.innovation_norm,
        }
        return self.observe(), cost, info


def state_dim(world: World, full_p=False) -> int:
    K, M, N, L = world.dims
    p_dim = K * K if full_p else K + 1
    return K + p_dim + N + L * (M + N)


def encode_state(state: MdpState, world: World, full_p=False, x_scale=X_MAX) -> np.ndarray:
    """Flat network input.

    x_hat is divided by ``x_scale`` (the agents use 10, so that typical
    regulated states are O(1) next to the [0, 1] gain features), covariance
    entries pass
    through a signed log1p, u_rx is raw, and gains are mapped from log10
    scale onto [0, 1].
    """
    P = state.P
    if full_p:
        p_part = np.sign(P.ravel()) * np.log1p(np.abs(P.ravel()))
    else:
        p_part = np.log1p(np.append(np.diag(P), np.trace(P)))
    gains = world.channel.gains
    lo, hi = np.log10(gains[0]), np.log10(gains[-1])
    g = (np.log10(state.grid.G) - lo) / (hi - lo) if hi > lo else np.ones_like(state.grid.G)
    return np.concatenate([state.x_hat / x_scale, p_part, state.u_rx_prev, g.ravel()])
