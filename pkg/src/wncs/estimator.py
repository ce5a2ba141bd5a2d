"""Controller-side Kalman filtering with partially received measurements."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .plant import NumericalError, SystemMatrices

COND_LIMIT = 1e12
JITTER = 1e-9


@dataclass
class EstimatorState:
    """Posterior (x_est, p_est) of the last filtered slot and the prediction
    (x_pred, p_pred) that served as its prior."""

    x_est: np.ndarray
    p_est: np.ndarray
    x_pred: np.ndarray
    p_pred: np.ndarray
    jitter_count: int = field(default=0, compare=False)
    innovation_norm: float = field(default=0.0, compare=False)


def _sym(P):
    return (P + P.T) / 2


def initial_state(sys: SystemMatrices) -> EstimatorState:
    """x_est(-1) = 0 and P_est(-1) = W, with the matching prediction for slot 0."""
    x0 = np.zeros(sys.K)
    p0 = sys.W.copy()
    x_pred, p_pred = predict_current(sys, EstimatorState(x0, p0, x0, p0), np.zeros(sys.N))
    return EstimatorState(x_est=x0, p_est=p0, x_pred=x_pred, p_pred=p_pred)


def predict_current(sys: SystemMatrices, est: EstimatorState, u_rx_prev):
    x_pred = sys.A @ est.x_est + sys.B @ np.asarray(u_rx_prev, dtype=float)
    p_pred = _sym(sys.A @ est.p_est @ sys.A.T + sys.W)
    return x_pred, p_pred


def mkf_update(sys: SystemMatrices, est: EstimatorState, y_rx, psi, u_rx_prev) -> EstimatorState:
    """One modified-Kalman-filter step.

    Only rows of C (and the matching block of V) belonging to received
    sensors enter the update, which is the masked gain computation without
    inverting a singular innovation matrix.
    """
    x_prior, p_prior = predict_current(sys, est, u_rx_prev)
    rx = np.flatnonzero(np.asarray(psi))
    jitter_count = est.jitter_count
    if rx.size == 0:
        return EstimatorState(x_prior, p_prior, x_prior, p_prior, jitter_count, 0.0)

    C = sys.C[rx]
    S = _sym(C @ p_prior @ C.T + sys.V[np.ix_(rx, rx)])
    if not np.all(np.isfinite(S)):
        raise NumericalError("non-finite innovation covariance")
    if np.linalg.cond(S) > COND_LIMIT:
        S = S + JITTER * np.eye(rx.size)
        jitter_count += 1
    try:
        fac = cho_factor(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("innovation covariance is not positive definite") from exc
    innov = np.asarray(y_rx, dtype=float)[rx] - C @ x_prior
    PCt = p_prior @ C.T
    gain = cho_solve(fac, PCt.T).T  # P C^T S^-1
    x_post = x_prior + gain @ innov
    p_post = _sym((np.eye(sys.K) - gain @ C) @ p_prior)
    return EstimatorState(x_post, p_post, x_prior, p_prior, jitter_count, float(np.linalg.norm(innov)))
