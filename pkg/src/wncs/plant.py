"""Linear discrete-time plant with lossy sensing and actuation.

    x(t+1) = A x(t) + B u_rx(t) + w(t)
    y_tx(t) = C x(t) + v(t)
    u_rx(t) = Lambda(t) u_tx(t),   y_rx(t) = Psi(t) y_tx(t)

Every coordinate of the physical state is clamped to [-x_max, x_max]
after each transition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

X_MAX = 100.0


class ParameterError(ValueError):
    """Invalid dimensions, ranges or other construction arguments."""


class NumericalError(ArithmeticError):
    """Non-finite values entered a computation."""


@dataclass(frozen=True, eq=False)
class SystemMatrices:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    W: np.ndarray
    V: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        K, N, M = self.K, self.N, self.M
        shapes = {
            "A": (K, K), "B": (K, N), "C": (M, K),
            "W": (K, K), "V": (M, M), "Q": (K, K), "R": (N, N),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ParameterError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def K(self) -> int:
        return self.A.shape[0]

    @property
    def M(self) -> int:
        return self.C.shape[0]

    @property
    def N(self) -> int:
        return self.B.shape[1]

    def to_dict(self) -> dict:
        out = {"K": self.K, "M": self.M, "N": self.N}
        for name in "ABCWVQR":
            out[name] = getattr(self, name).tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SystemMatrices":
        K, M, N = int(d["K"]), int(d["M"]), int(d["N"])
        shapes = {"A": (K, K), "B": (K, N), "C": (M, K), "W": (K, K), "V": (M, M), "Q": (K, K), "R": (N, N)}
        mats = {k: np.array(d[k], dtype=float).reshape(s) for k, s in shapes.items()}
        return cls(**mats)

    def __eq__(self, other):
        if not isinstance(other, SystemMatrices):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in "ABCWVQR")


@dataclass
class PlantState:
    x: np.ndarray
    t: int = 0


@dataclass
class PacketOutcomes:
    """Per-device packet success flags (diagonals of Psi and Lambda)."""

    psi: np.ndarray
    lam: np.ndarray

    @property
    def success(self) -> np.ndarray:
        return np.concatenate([self.psi, self.lam])


def generate_system(K, M, N, eig_low=1.0, eig_high=1.1, rng_seed=0, max_cond=100.0) -> SystemMatrices:
    """Random unstable system with every |eigenvalue| of A in [eig_low, eig_high).

    A = S diag(lam) S^-1 with random signs on lam and a random similarity
    transform S whose condition number is at most ``max_cond``. B and C are
    standard normal; W, V, Q, R are identities.
    """
    if min(K, M, N) < 1:
        raise ParameterError("K, M, N must be positive")
    if not (1.0 <= eig_low < eig_high):
        raise ParameterError(f"need 1.0 <= eig_low < eig_high, got ({eig_low}, {eig_high})")
    rng = np.random.default_rng(rng_seed)
    mags = rng.uniform(eig_low, eig_high, size=K)
    # uniform() can return eig_low itself; keep the magnitude strictly inside
    mags = np.where(mags <= eig_low, np.nextafter(eig_low, eig_high), mags)
    signs = rng.choice([-1.0, 1.0], size=K)
    lam = mags * signs
    for _ in range(1000):
        S = rng.standard_normal((K, K))
        if np.linalg.cond(S) <= max_cond:
            break
    else:
        raise ParameterError("could not draw a well-conditioned similarity transform")
    A = S @ np.diag(lam) @ np.linalg.inv(S)
    B = rng.standard_normal((K, N))
    C = rng.standard_normal((M, K))
    return SystemMatrices(A=A, B=B, C=C, W=np.eye(K), V=np.eye(M), Q=np.eye(K), R=np.eye(N))


def noise_factor(cov: np.ndarray) -> np.ndarray:
    """Matrix F with F F^T = cov; handles semidefinite covariances."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, U = np.linalg.eigh((cov + cov.T) / 2)
        return U * np.sqrt(np.clip(w, 0.0, None))


def gaussian(cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # always consume len(cov) normals so common-random-number streams stay aligned
    z = rng.standard_normal(cov.shape[0])
    return noise_factor(cov) @ z


def saturate(x, x_max=X_MAX):
    return np.clip(x, -x_max, x_max)


def step_plant(sys: SystemMatrices, state: PlantState, u_rx, rng, x_max=X_MAX) -> PlantState:
    u_rx = np.asarray(u_rx, dtype=float)
    if not (np.all(np.isfinite(state.x)) and np.all(np.isfinite(u_rx))):
        raise NumericalError("non-finite plant state or input")
    w = gaussian(sys.W, rng)
    x_next = sys.A @ state.x + sys.B @ u_rx + w
    return PlantState(x=saturate(x_next, x_max), t=state.t + 1)


def measure(sys: SystemMatrices, state: PlantState, rng) -> np.ndarray:
    if not np.all(np.isfinite(state.x)):
        raise NumericalError("non-finite plant state")
    return sys.C @ state.x + gaussian(sys.V, rng)


def apply_outcomes(u_tx, y_tx, outcomes: PacketOutcomes):
    """Zero-input policy at failed actuators; masked measurements at failed sensors."""
    u_tx = np.asarray(u_tx, dtype=float)
    y_tx = np.asarray(y_tx, dtype=float)
    if u_tx.shape != outcomes.lam.shape or y_tx.shape != outcomes.psi.shape:
        raise ParameterError("outcome flags do not match signal dimensions")
    u_rx = np.where(outcomes.lam.astype(bool), u_tx, 0.0)
    y_rx = np.where(outcomes.psi.astype(bool), y_tx, 0.0)
    return u_rx, y_rx
