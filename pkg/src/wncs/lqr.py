"""Discounted LQR benchmarks for perfect and lossy actuation.

Both recursions start from S_0 = Q and iterate

    S <- beta A'SA + Q - beta^2 A'SB F (B'SB + R)^-1 F B'SA,

with F = I for the standard controller and F = (I - E)^(1/2) for the
packet-loss-aware one (E = diagonal actuator loss rates). The gain is
K = -beta (B'SB + R)^-1 B'SA in both cases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plant import ParameterError, SystemMatrices

TOL = 1e-10
MAX_ITER = 100_000
DIVERGENCE = 1e12


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual, iterations):
        super().__init__(f"{msg} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class LqrGain:
    K_gain: np.ndarray
    S_inf: np.ndarray
    variant: str
    iterations_used: int

    def to_dict(self):
        return {"variant": self.variant, "iterations_used": self.iterations_used,
                "K_gain": self.K_gain.tolist(), "S_inf": self.S_inf.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["K_gain"], dtype=float), np.array(d["S_inf"], dtype=float),
                   d["variant"], int(d["iterations_used"]))


def _riccati(sys: SystemMatrices, beta, loss_rates, tol, max_iter, variant) -> LqrGain:
    if not (0.0 < beta <= 1.0):
        raise ParameterError("beta must lie in (0, 1]")
    if tol <= 0:
        raise ParameterError("tol must be positive")
    A, B, Q, R = sys.A, sys.B, sys.Q, sys.R
    F = np.sqrt(1.0 - np.asarray(loss_rates, dtype=float))  # diagonal of (I - E)^(1/2)
    S = Q.copy()
    resid = np.inf
    for it in range(1, max_iter + 1):
        BtSA = B.T @ S @ A
        core = np.linalg.solve(B.T @ S @ B + R, F[:, None] * BtSA)
        S_new = beta * A.T @ S @ A + Q - beta ** 2 * (F[:, None] * BtSA).T @ core
        S_new = (S_new + S_new.T) / 2
        if not np.all(np.isfinite(S_new)) or np.max(np.abs(S_new)) > DIVERGENCE:
            raise ConvergenceError("Riccati recursion diverged", float(np.max(np.abs(S_new))), it)
        resid = float(np.max(np.abs(S_new - S)))
        S = S_new
        if resid < tol:
            K = -beta * np.linalg.solve(B.T @ S @ B + R, B.T @ S @ A)
            return LqrGain(K, S, variant, it)
    raise ConvergenceError("Riccati recursion did not converge", resid, max_iter)


def riccati_standard(sys: SystemMatrices, beta=1.0, tol=TOL, max_iter=MAX_ITER) -> LqrGain:
    return _riccati(sys, beta, np.zeros(sys.N), tol, max_iter, "standard")


def riccati_modified(sys: SystemMatrices, beta, E, tol=TOL, max_iter=MAX_ITER) -> LqrGain:
    """``E`` may be the N x N diagonal loss-rate matrix or its diagonal."""
    E = np.asarray(E, dtype=float)
    diag = np.diag(E) if E.ndim == 2 else E
    if E.ndim == 2 and np.any(E - np.diag(diag)):
        raise ParameterError("loss-rate matrix must be diagonal")
    if diag.shape != (sys.N,) or np.any(diag < 0) or np.any(diag > 1):
        raise ParameterError("loss rates must be N values in [0, 1]")
    return _riccati(sys, beta, diag, tol, max_iter, "modified")


def lqr_control(gain: LqrGain, x_pred) -> np.ndarray:
    return gain.K_gain @ np.asarray(x_pred, dtype=float)


def estimate_loss_rates(world, scheduler, warmup_episodes, steps=100, rng_seed=0,
                        include_starvation=True, x_max=None) -> np.ndarray:
    """Empirical per-actuator control packet loss rate under ``scheduler``.

    Rollouts use zero control input. With ``include_starvation`` unscheduled
    slots count as losses; otherwise only scheduled transmissions are counted.
    Returns the diagonal of E.
    """
    from .env import WncsEnv  # env depends on this module's siblings only

    if warmup_episodes < 1:
        raise ParameterError("warmup_episodes must be >= 1")
    env = WncsEnv(world, **({} if x_max is None else {"x_max": x_max}))
    N, M = world.system.N, world.system.M
    lost = np.zeros(N)
    attempts = np.zeros(N)
    zero = np.zeros(N)
    for ep in range(warmup_episodes):
        state = env.reset(seed=(rng_seed, ep))
        scheduler.reset(env.policy_rng)
        for _ in range(steps):
            D = scheduler.select(state.grid)
            state, _, info = env.step(D, zero)
            scheduler.observe(D, info["success"])
            scheduled = D[M:].sum(axis=1) > 0
            ok = info["success"][M:].astype(bool)
            if include_starvation:
                attempts += 1
                lost += ~ok
            else:
                attempts += scheduled
                lost += scheduled & ~ok
    rates = np.divide(lost, attempts, out=np.ones(N), where=attempts > 0)
    return np.clip(rates, 0.0, 1.0)
