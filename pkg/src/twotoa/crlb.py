"""Cramer-Rao lower bound of the two-way TOA ML estimator.

Under independent Gaussian measurement noise the Fisher information of the
state is J = Jac' W Jac with Jac the forward-model Jacobian at the true state
and W the inverse noise covariance.  The position RMSE floor is the root
trace of the position sub-block of J^-1, and three times that floor is the
success threshold used by the Monte-Carlo harness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import UnobservableGeometry
from .measurement import build_weights, forward_jacobian
from .model import Scenario

#: Noise floor substituted for exactly-zero sigmas so weights stay finite.
SIGMA_FLOOR = 1e-12

_MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class CrlbReport:
    fim: np.ndarray  # (2N+2, 2N+2) Fisher information
    covariance: np.ndarray  # its inverse
    pos_rmse_bound: float  # meters
    threshold: float  # meters, 3x the bound

    @property
    def dim(self) -> int:
        return (self.fim.shape[0] - 2) // 2


def compute_crlb(scenario: Scenario) -> CrlbReport:
    """Bound for one scenario, evaluated at the true state.

    Raises UnobservableGeometry when the information matrix is singular
    (too few anchors for the unknowns, or a degenerate layout).
    """
    m = scenario.n_anchors
    n = scenario.dim
    if 2 * m < 2 * n + 2:
        raise UnobservableGeometry(
            f"{2*m} measurements cannot observe {2*n+2} unknowns"
        )
    sigma_anchor = np.maximum(scenario.sigma_anchor, SIGMA_FLOOR)
    sigma_ud = max(scenario.sigma_ud, SIGMA_FLOOR)
    weights = build_weights(sigma_anchor, sigma_ud)
    jac = forward_jacobian(
        scenario.true_state(), scenario.anchor_positions(), scenario.schedule.delays
    )
    fim = jac.T @ (weights.diagonal[:, None] * jac)
    fim = 0.5 * (fim + fim.T)
    if np.linalg.cond(fim) > _MAX_CONDITION:
        raise UnobservableGeometry("Fisher information is numerically singular")
    cho = scipy.linalg.cho_factor(fim)
    covariance = scipy.linalg.cho_solve(cho, np.eye(fim.shape[0]))
    covariance = 0.5 * (covariance + covariance.T)
    pos_rmse_bound = float(np.sqrt(np.trace(covariance[:n, :n])))
    return CrlbReport(
        fim=fim,
        covariance=covariance,
        pos_rmse_bound=pos_rmse_bound,
        threshold=3.0 * pos_rmse_bound,
    )


def is_success(p_hat, p_true, threshold: float) -> bool:
    """Localization success: position error within the threshold (inclusive)."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    err = float(np.linalg.norm(np.asarray(p_hat, float) - np.asarray(p_true, float)))
    return err <= threshold
