"""Markov block-fading channels and finite-blocklength packet errors.

Devices are indexed sensors first (0..M-1) then actuators (M..M+N-1).
Gain grids are L x (M+N); allocations are (M+N) x L binary matrices.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .plant import PacketOutcomes, ParameterError

TABLE_GAINS = tuple(10.0 ** -k for k in range(10, 0, -1))  # 1e-10 ... 1e-1
LOG2E = math.log2(math.e)


class ContractError(ValueError):
    """A caller violated an operation's precondition."""


@dataclass(frozen=True)
class LinkBudget:
    p_max_dbm: float = 23.0
    noise_dbm: float = -60.0
    bits: int = 400
    blocklength: int = 200

    def __post_init__(self):
        if self.blocklength < 1 or self.bits < 1:
            raise ParameterError("bits and blocklength must be >= 1")

    @property
    def rate(self) -> float:
        return self.bits / self.blocklength

    @property
    def snr_scale(self) -> float:
        """P_max / sigma^2 in linear units (both converted from dBm to mW)."""
        return 10.0 ** (self.p_max_dbm / 10.0) / 10.0 ** (self.noise_dbm / 10.0)


@dataclass(frozen=True, eq=False)
class ChannelModel:
    gains: np.ndarray        # (H,) strictly increasing
    transitions: np.ndarray  # (L, M+N, H, H) row-stochastic
    M: int
    N: int

    @property
    def L(self) -> int:
        return self.transitions.shape[0]

    @property
    def H(self) -> int:
        return self.gains.shape[0]

    def to_dict(self) -> dict:
        return {
            "M": self.M, "N": self.N, "L": self.L, "H": self.H,
            "gains": self.gains.tolist(),
            "transitions": self.transitions.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelModel":
        return cls(
            gains=np.array(d["gains"], dtype=float),
            transitions=np.array(d["transitions"], dtype=float),
            M=int(d["M"]), N=int(d["N"]),
        )

    def __eq__(self, other):
        if not isinstance(other, ChannelModel):
            return NotImplemented
        return (self.M, self.N) == (other.M, other.N) and np.array_equal(self.gains, other.gains) \
            and np.array_equal(self.transitions, other.transitions)


@dataclass
class ChannelGrid:
    state: np.ndarray  # (L, M+N) integer state indices
    G: np.ndarray      # (L, M+N) power gains
    n_sensors: int


def generate_channel_model(M, N, L, H=None, gain_levels=TABLE_GAINS, rng_seed=0) -> ChannelModel:
    gains = np.asarray(gain_levels, dtype=float)
    if H is None:
        H = gains.size
    if H < 1 or gains.size != H:
        raise ParameterError(f"H={H} does not match {gains.size} gain levels")
    if np.any(gains <= 0) or np.any(np.diff(gains) <= 0):
        raise ParameterError("gain levels must be positive and strictly increasing")
    if not (1 <= L <= M + N):
        raise ParameterError(f"need 1 <= L <= M+N, got L={L}, M+N={M + N}")
    rng = np.random.default_rng(rng_seed)
    raw = rng.uniform(0.0, 1.0, size=(L, M + N, H, H))
    trans = raw / raw.sum(axis=-1, keepdims=True)
    return ChannelModel(gains=gains, transitions=trans, M=M, N=N)


def grid_from_state(model: ChannelModel, state) -> ChannelGrid:
    state = np.asarray(state, dtype=np.int64)
    return ChannelGrid(state=state, G=model.gains[state], n_sensors=model.M)


def random_grid(model: ChannelModel, rng) -> ChannelGrid:
    """Uniform over the H states on every link."""
    return grid_from_state(model, rng.integers(0, model.H, size=(model.L, model.M + model.N)))


def step_channels(model: ChannelModel, grid: ChannelGrid, rng) -> ChannelGrid:
    L, D = grid.state.shape
    rows = model.transitions[np.arange(L)[:, None], np.arange(D)[None, :], grid.state]  # (L, D, H)
    cum = np.cumsum(rows, axis=-1)
    u = rng.uniform(size=(L, D))
    nxt = np.minimum((u[..., None] >= cum).sum(axis=-1), model.H - 1)
    return grid_from_state(model, nxt)


def snr(d, g, budget: LinkBudget):
    """Received SNR for a device with channel selector ``d`` over gains ``g``."""
    return float(np.dot(d, g)) * budget.snr_scale


def q_function(x):
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def decode_error_prob(gamma, budget: LinkBudget):
    """Normal-approximation block error rate, clamped to [0, 1].

    Vanishing dispersion (gamma -> 0) is resolved by comparing capacity
    with the code rate: no decoding below rate.
    """
    gamma = np.asarray(gamma, dtype=float)
    cap = np.log2(1.0 + gamma)
    disp = (1.0 - (1.0 + gamma) ** -2) * LOG2E ** 2
    scale = disp / budget.blocklength
    singular = scale < 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = (cap - budget.rate) / np.sqrt(np.where(singular, 1.0, scale))
    eps = np.where(singular, np.where(cap < budget.rate, 1.0, 0.0), q_function(arg))
    eps = np.clip(eps, 0.0, 1.0)
    return float(eps) if eps.ndim == 0 else eps


def validate_allocation(D) -> bool:
    D = np.asarray(D)
    if D.ndim != 2 or not np.all((D == 0) | (D == 1)):
        return False
    return bool(np.all(D.sum(axis=0) <= 1) and np.all(D.sum(axis=1) <= 1))


def device_error_probs(D, grid: ChannelGrid, budget: LinkBudget) -> np.ndarray:
    """Per-device decode error probability; 1 for unscheduled devices."""
    gamma = (np.asarray(D, dtype=float) * grid.G.T).sum(axis=1) * budget.snr_scale
    return decode_error_prob(gamma, budget)


def sample_outcomes(D, grid: ChannelGrid, budget: LinkBudget, rng) -> PacketOutcomes:
    if not validate_allocation(D):
        raise ContractError("allocation violates the one-device-per-channel constraint")
    scheduled = np.asarray(D).sum(axis=1) > 0
    eps = device_error_probs(D, grid, budget)
    u = rng.uniform(size=scheduled.size)  # one draw per device every slot
    ok = (scheduled & (u < 1.0 - eps)).astype(np.int8)
    M = grid.n_sensors
    return PacketOutcomes(psi=ok[:M], lam=ok[M:])


def count_discrete_actions(M, N, L) -> int:
    """Number of nonempty allocations of L channels to M+N devices."""
    if not (1 <= L <= M + N):
        raise ParameterError("need 1 <= L <= M+N")
    n = M + N
    return sum(math.comb(L, l) * math.perm(n, l) for l in range(1, L + 1))


def write_csi_trace(path, grids, n_sensors=None):
    """CSV rows (slot, device, channel, gain); device labels s<m>/a<n> are 1-based."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "device", "channel", "gain"])
        for t, grid in enumerate(grids):
            M = grid.n_sensors if n_sensors is None else n_sensors
            L, D = grid.G.shape
            for dev in range(D):
                label = f"s{dev + 1}" if dev < M else f"a{dev - M + 1}"
                for l in range(L):
                    w.writerow([t, label, l + 1, repr(float(grid.G[l, dev]))])
