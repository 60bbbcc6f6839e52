"""Weighted Gauss-Newton baseline for the two-way TOA ML problem.

Plain undamped iteration on the WLS cost, stopping on step norm or an
iteration cap of 10 so that failure statistics stay comparable with the
published iterative baseline.  No line search or global restarts: falling
into local minima from poor initializations is exactly the behaviour the
SDP relaxation is benchmarked against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CoincidentGeometry
from .measurement import TwoWayMeasurements, WeightMatrix, forward_jacobian, forward_model
from .model import Cube, StateVector

_MAX_CONDITION = 1e12
_DIVERGENCE_LIMIT = 1e12  # meters; iterates beyond this are hopeless


@dataclass(frozen=True, eq=False)
class GnReport:
    """One Gauss-Newton run: final state plus convergence diagnostics."""

    estimate: StateVector
    iterations: int
    converged: bool
    final_cost: float
    step_norm: float
    cost_history: tuple[float, ...] = field(default=())


def wls_cost(
    theta: StateVector, measurements: TwoWayMeasurements, weights: WeightMatrix, anchors
) -> float:
    """Weighted squared residual of the forward model at a state."""
    r = measurements.stacked() - forward_model(theta, anchors, measurements.delays)
    return float(r @ (weights.diagonal * r))


def random_init(bounds: Cube, rng_seed: int) -> StateVector:
    """Uninformed start: position uniform in the cube, clock and velocity zero."""
    rng = np.random.default_rng(rng_seed)
    p = bounds.sample(rng)
    zeros = np.zeros_like(p)
    return StateVector(position=p, clock_offset=0.0, clock_drift=0.0, velocity=zeros)


def gauss_newton(
    measurements: TwoWayMeasurements,
    weights: WeightMatrix,
    anchors,
    delays,
    init: StateVector,
    max_iter: int = 10,
    tol: float = 1e-6,
) -> GnReport:
    """Iterate theta <- theta + (J'WJ)^-1 J'W (gamma - h(theta)).

    Stops when the update norm drops below ``tol`` (in the mixed state units)
    or after ``max_iter`` steps.  A singular normal matrix or divergence ends
    the run as non-converged rather than raising; coincident geometry is
    retried once from a 1e-6 m perturbed iterate.
    """
    delays = np.asarray(delays, dtype=float)
    gamma = measurements.stacked()
    w = weights.diagonal
    theta = init.as_vector()
    dim = init.dim

    def cost_at(vec: np.ndarray) -> float:
        try:
            return wls_cost(StateVector.from_vector(vec), measurements, weights, anchors)
        except CoincidentGeometry:
            return np.inf

    costs = [cost_at(theta)]
    step_norm = np.inf
    converged = False
    perturbed = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        state = StateVector.from_vector(theta)
        try:
            jac = forward_jacobian(state, anchors, delays)
            resid = gamma - forward_model(state, anchors, delays)
        except CoincidentGeometry:
            if perturbed:
                break
            perturbed = True
            theta = theta.copy()
            theta[:dim] += 1e-6
            continue
        normal = jac.T @ (w[:, None] * jac)
        if np.linalg.cond(normal) > _MAX_CONDITION:
            break
        step = np.linalg.solve(normal, jac.T @ (w * resid))
        theta = theta + step
        if not np.all(np.isfinite(theta)) or np.linalg.norm(theta[:dim]) > _DIVERGENCE_LIMIT:
            theta = theta - step  # keep the last finite iterate
            break
        costs.append(cost_at(theta))
        step_norm = float(np.linalg.norm(step))
        if step_norm < tol:
            converged = True
            break

    return GnReport(
        estimate=StateVector.from_vector(theta),
        iterations=iterations,
        converged=converged,
        final_cost=costs[-1],
        step_norm=float(step_norm),
        cost_history=tuple(costs),
    )
