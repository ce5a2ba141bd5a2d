"""Rollout evaluation and benchmark tables under common random numbers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .drl import AgentPolicy, Td3Agent, train
from .env import World, WncsEnv, make_world
from .lqr import ConvergenceError, LqrGain, estimate_loss_rates, lqr_control, riccati_modified, riccati_standard
from .scheduling import POLICIES, Scheduler

COLUMNS = ("scheduler", "controller", "est_cost", "ctrl_cost", "state_cost", "overall",
           "ci_halfwidth", "discounted", "episodes", "steps", "seed")


class SchedulerControllerPolicy:
    """A benchmark scheduler paired with zero input or a fixed LQR gain."""

    def __init__(self, world: World, scheduler: str, controller: LqrGain | None):
        K, M, N, L = world.dims
        self.sched = Scheduler(scheduler, M, N, L)
        self.gain = controller
        self.N = N

    def reset(self, rng):
        self.sched.reset(rng)

    def act(self, state):
        D = self.sched.select(state.grid)
        u = np.zeros(self.N) if self.gain is None else lqr_control(self.gain, state.x_hat)
        return D, u

    def observe(self, D, success):
        self.sched.observe(D, success)


@dataclass
class EvalReport:
    episode_costs: np.ndarray        # undiscounted per-episode sums
    discounted_costs: np.ndarray
    component_sums: dict             # per-episode mean of each component's episode sum
    component_slot_means: dict       # per-slot means
    episodes: int
    steps: int
    seed: int
    beta: float
    metadata: dict = field(default_factory=dict)

    @property
    def mean_cost(self) -> float:
        return float(np.mean(self.episode_costs))

    @property
    def ci_halfwidth(self) -> float:
        n = len(self.episode_costs)
        if n < 2:
            return float("nan")
        return float(1.96 * np.std(self.episode_costs, ddof=1) / np.sqrt(n))

    def to_dict(self) -> dict:
        return {
            "mean_cost": self.mean_cost,
            "ci_halfwidth": self.ci_halfwidth,
            "mean_discounted_cost": float(np.mean(self.discounted_costs)),
            "component_sums": self.component_sums,
            "component_slot_means": self.component_slot_means,
            "episode_costs": self.episode_costs.tolist(),
            "discounted_costs": self.discounted_costs.tolist(),
            "episodes": self.episodes, "steps": self.steps, "seed": self.seed, "beta": self.beta,
            "metadata": self.metadata,
        }


def evaluate(world: World, policy, episodes=100, steps=100, seed=0, beta=0.99, x_max=100.0,
             record=None) -> EvalReport:
    """Noise-free rollouts; episode ``e`` always sees the same random streams
    for a given ``seed``, whatever the policy. ``record`` (a list) receives
    per-slot rows when given."""
    env = WncsEnv(world, x_max=x_max)
    totals = np.zeros(episodes)
    disc = np.zeros(episodes)
    comps = np.zeros((episodes, 3))
    for ep in range(episodes):
        state = env.reset(seed=(seed, 2, ep))
        policy.reset(env.policy_rng)
        for t in range(steps):
            D, u = policy.act(state)
            state, cost, info = env.step(D, u)
            policy.observe(D, info["success"])
            c = cost.total
            totals[ep] += c
            disc[ep] += beta ** t * c
            comps[ep] += (cost.est_cost, cost.ctrl_cost, cost.state_cost)
            if record is not None:
                record.append({"episode": ep, "slot": t, "est_cost": cost.est_cost,
                               "ctrl_cost": cost.ctrl_cost, "state_cost": cost.state_cost,
                               "total": c, "tr_p_est": info["tr_p_est"],
                               "innovation_norm": info["innovation_norm"],
                               "allocation": ";".join(f"{d}:{l}" for d, l in zip(*np.nonzero(D)))})
    names = ("est_cost", "ctrl_cost", "state_cost")
    sums = {n: float(comps[:, i].mean()) for i, n in enumerate(names)}
    sums["overall"] = float(totals.mean())
    slot = {n: v / steps for n, v in sums.items()}
    return EvalReport(totals, disc, sums, slot, episodes, steps, seed, beta,
                      {"version": __version__})


def world_from_config(cfg: ExperimentConfig) -> World:
    return make_world(cfg.K, cfg.M, cfg.N, cfg.L, seed=cfg.world_seed, eig_low=cfg.eig_low,
                      eig_high=cfg.eig_high, gain_levels=cfg.gain_levels, budget=cfg.budget)


def build_policy(world: World, cfg: ExperimentConfig, scheduler: str, controller: str,
                 agents: dict | None = None, progress=None):
    """Policy for one (scheduler, controller) table row.

    Benchmark schedulers combine with ``zero``, ``standard_lqr``,
    ``modified_lqr`` or ``td3`` (a control-only TD3 trained against that
    scheduler). ``gca``/``gca`` is the cascaded codesign agent;
    ``td3_priority`` with ``standard_lqr`` or ``td3`` uses the priority
    mapping. Trained agents are cached in ``agents``.
    Raises ConvergenceError when a Riccati solve diverges.
    """
    agents = {} if agents is None else agents
    beta = cfg.td3.beta
    if scheduler in POLICIES:
        if controller == "zero":
            return SchedulerControllerPolicy(world, scheduler, None)
        if controller == "standard_lqr":
            return SchedulerControllerPolicy(world, scheduler, riccati_standard(world.system, beta))
        if controller == "modified_lqr":
            K, M, N, L = world.dims
            E = estimate_loss_rates(world, Scheduler(scheduler, M, N, L), cfg.loss_warmup_episodes,
                                    cfg.eval_steps, rng_seed=cfg.eval_seed + 7,
                                    include_starvation=cfg.include_starvation)
            return SchedulerControllerPolicy(world, scheduler, riccati_modified(world.system, beta, E))
        if controller == "td3":
            key = ("td3_ctrl", scheduler)
            if key not in agents:
                agents[key], _ = train(world, cfg.td3, "td3_ctrl", scheduler=scheduler, progress=progress)
            return AgentPolicy(agents[key], scheduler)
    elif scheduler == "gca" and controller in ("gca", "td3"):
        if "gca" not in agents:
            agents["gca"], _ = train(world, cfg.td3, "gca", progress=progress)
        return AgentPolicy(agents["gca"])
    elif scheduler == "td3_priority":
        if controller == "standard_lqr":
            key = "td3_priority_lqr"
            if key not in agents:
                agents[key], _ = train(world, cfg.td3, key, lqr_gain=riccati_standard(world.system, beta),
                                       progress=progress)
            return AgentPolicy(agents[key])
        if controller == "td3":
            if "td3_priority" not in agents:
                agents["td3_priority"], _ = train(world, cfg.td3, "td3_priority", progress=progress)
            return AgentPolicy(agents["td3_priority"])
    raise ValueError(f"unsupported pair ({scheduler}, {controller})")


def run_benchmark_suite(cfg: ExperimentConfig, world: World | None = None, pairs=None,
                        agents: dict | None = None, progress=None) -> list[dict]:
    """One row per configured pair, all evaluated on the same episode seeds.

    A pair whose Riccati recursion diverges is reported as "not converge".
    """
    world = world_from_config(cfg) if world is None else world
    pairs = cfg.pairs if pairs is None else pairs
    agents = {} if agents is None else agents
    rows = []
    for scheduler, controller in pairs:
        row = {"scheduler": scheduler, "controller": controller, "episodes": cfg.eval_episodes,
               "steps": cfg.eval_steps, "seed": cfg.eval_seed}
        try:
            policy = build_policy(world, cfg, scheduler, controller, agents, progress)
        except ConvergenceError:
            row.update({k: "not converge" for k in
                        ("est_cost", "ctrl_cost", "state_cost", "overall", "ci_halfwidth", "discounted")})
            rows.append(row)
            continue
        rep = evaluate(world, policy, cfg.eval_episodes, cfg.eval_steps, cfg.eval_seed,
                       cfg.td3.beta, cfg.x_max)
        row.update({
            "est_cost": rep.component_sums["est_cost"],
            "ctrl_cost": rep.component_sums["ctrl_cost"],
            "state_cost": rep.component_sums["state_cost"],
            "overall": rep.mean_cost,
            "ci_halfwidth": rep.ci_halfwidth,
            "discounted": float(np.mean(rep.discounted_costs)),
        })
        rows.append(row)
    return rows


TABLE_III_SCALES = ((4, 5, 6), (5, 5, 5), (8, 10, 12), (10, 10, 10), (12, 15, 18), (15, 15, 15), (20, 20, 20))


def parse_scales(text: str):
    """'4,5,6;5,5,5' -> [(L, N, M), ...]."""
    out = []
    for block in text.split(";"):
        block = block.strip()
        if block:
            L, N, M = (int(v) for v in block.split(","))
            out.append((L, N, M))
    return out


def run_sweep(cfg: ExperimentConfig, scales, progress=None):
    """Benchmark table per (L, N, M) scale with K = N."""
    from dataclasses import replace

    blocks = []
    for L, N, M in scales:
        scfg = replace(cfg, K=N, M=M, N=N, L=L)
        scfg.validate()
        rows = run_benchmark_suite(scfg, progress=progress)
        for r in rows:
            r["scale"] = f"({L},{N},{M})"
        blocks.append(((L, N, M), rows))
    return blocks
