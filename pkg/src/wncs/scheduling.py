"""Device-to-channel scheduling: exact max-weight matching and benchmark policies.

Allocations are binary (M+N) x L matrices; gain grids are L x (M+N).
The greedy policies resolve ties toward the lowest device index and then
the lowest channel index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channel import ChannelGrid

POLICIES = ("round_robin", "persistent", "aoi_greedy", "csi_greedy", "random")


def max_weight_matching(w) -> np.ndarray:
    """Exact max-weight device/channel matching for a (devices x channels) weight matrix.

    Uses the Hungarian-type solver in ``scipy.optimize``; pairs of zero
    weight are dropped from the returned allocation.
    """
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and non-negative")
    rows, cols = linear_sum_assignment(w, maximize=True)
    keep = w[rows, cols] > 0
    D = np.zeros(w.shape, dtype=np.int8)
    D[rows[keep], cols[keep]] = 1
    return D


def allocation_weight(D, w) -> float:
    return float((np.asarray(D) * np.asarray(w)).sum())


@dataclass
class SchedulerState:
    n_devices: int
    cursor: int = 0
    held: np.ndarray | None = None   # device index per channel, -1 if idle
    aoi: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.aoi is None:
            self.aoi = np.zeros(self.n_devices, dtype=np.int64)


def _from_holdings(held, n_devices) -> np.ndarray:
    D = np.zeros((n_devices, len(held)), dtype=np.int8)
    for ch, dev in enumerate(held):
        if dev >= 0:
            D[dev, ch] = 1
    return D


def round_robin(state: SchedulerState, M, N, L):
    n = M + N
    held = (state.cursor + np.arange(L)) % n
    new = SchedulerState(n, (state.cursor + 1) % n, state.held, state.aoi)
    return _from_holdings(held, n), new


def init_persistent(M, N, L, rng) -> SchedulerState:
    n = M + N
    state = SchedulerState(n)
    state.held = rng.choice(n, size=L, replace=False).astype(np.int64)
    return state


def persistent(state: SchedulerState, success, rng):
    """Failed devices keep their channel; channels of successful devices are
    handed to a uniformly drawn device that currently holds no channel.

    Devices that just succeeded are only eligible when no other device is
    waiting.
    """
    success = np.asarray(success).astype(bool)
    held = state.held.copy()
    n = state.n_devices
    released = [ch for ch, dev in enumerate(held) if dev >= 0 and success[dev]]
    just_done = {int(held[ch]) for ch in released}
    for ch in released:
        held[ch] = -1
    for ch in released:
        holding = set(int(d) for d in held if d >= 0)
        waiting = [d for d in range(n) if d not in holding and d not in just_done]
        if not waiting:
            waiting = [d for d in range(n) if d not in holding]
        held[ch] = waiting[rng.integers(len(waiting))]
    new = SchedulerState(n, state.cursor, held, state.aoi)
    return _from_holdings(held, n), new


def _greedy_by_rank(order, G) -> np.ndarray:
    """Devices in ``order`` each take their best remaining channel."""
    L, n = G.shape
    D = np.zeros((n, L), dtype=np.int8)
    free = np.ones(L, dtype=bool)
    for dev in order[:L]:
        gains = np.where(free, G[:, dev], -np.inf)
        ch = int(np.argmax(gains))
        D[dev, ch] = 1
        free[ch] = False
    return D


def _descending(scores) -> np.ndarray:
    return np.argsort(-np.asarray(scores, dtype=float), kind="stable")


def aoi_greedy(state: SchedulerState, grid: ChannelGrid) -> np.ndarray:
    return _greedy_by_rank(_descending(state.aoi), grid.G)


def priority_mapping(scores, grid: ChannelGrid) -> np.ndarray:
    return _greedy_by_rank(_descending(scores), grid.G)


def csi_greedy(grid: ChannelGrid) -> np.ndarray:
    return max_weight_matching(grid.G.T)


def random_schedule(M, N, L, rng) -> np.ndarray:
    devices = rng.choice(M + N, size=L, replace=False)
    return _from_holdings(devices, M + N)


def update_aoi(aoi, success) -> np.ndarray:
    success = np.asarray(success).astype(bool)
    return np.where(success, 0, np.asarray(aoi) + 1)


class Scheduler:
    """Stateful wrapper that runs one benchmark policy over a rollout."""

    def __init__(self, kind: str, M: int, N: int, L: int):
        if kind not in POLICIES:
            raise ValueError(f"unknown scheduler {kind!r}; choose from {POLICIES}")
        self.kind, self.M, self.N, self.L = kind, M, N, L
        self.rng = None
        self.state = SchedulerState(M + N)

    def reset(self, rng):
        self.rng = rng
        if self.kind == "persistent":
            self.state = init_persistent(self.M, self.N, self.L, rng)
        else:
            self.state = SchedulerState(self.M + self.N)

    def select(self, grid: ChannelGrid) -> np.ndarray:
        k = self.kind
        if k == "round_robin":
            D, self.state = round_robin(self.state, self.M, self.N, self.L)
            return D
        if k == "persistent":
            return _from_holdings(self.state.held, self.M + self.N)
        if k == "aoi_greedy":
            return aoi_greedy(self.state, grid)
        if k == "csi_greedy":
            return csi_greedy(grid)
        return random_schedule(self.M, self.N, self.L, self.rng)

    def observe(self, D, success):
        if self.kind == "persistent":
            _, self.state = persistent(self.state, success, self.rng)
        self.state.aoi = update_aoi(self.state.aoi, success)
