"""Two-way TOA forward model, noise simulation, Jacobian, and weights.

A round trip against anchor i yields two observations, both carried in
meters:

* request TOA  ``rho_i = ||q_i - p|| - clock_offset``  (measured at the
  anchor; the device clock being ahead makes the measurement smaller), and
* response TOA ``tau_i = ||q_i - p - v*dt_i|| + clock_offset + clock_drift*dt_i``
  (measured at the device after the reply delay dt_i, during which the device
  has moved and its clock has drifted).

Stacking order is always the M request rows first, then the M response rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoincidentGeometry, DimensionMismatch, NonPositiveSigma
from .model import Anchor, StateVector, Scenario

#: Geometry closer than this is rejected as degenerate (meters).
COINCIDENT_EPS = 1e-9


def anchor_array(anchors) -> np.ndarray:
    """Normalize a list of Anchor or an array-like into an (M, N) float array."""
    if len(anchors) and isinstance(anchors[0], Anchor):
        arr = np.array([a.position for a in anchors], dtype=float)
    else:
        arr = np.atleast_2d(np.asarray(anchors, dtype=float))
    if arr.ndim != 2:
        raise DimensionMismatch(f"anchors must form an (M, N) array, got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class TwoWayMeasurements:
    """One epoch of stacked two-way TOA measurements, in meters."""

    rho: np.ndarray  # (M,) request TOA
    tau: np.ndarray  # (M,) response TOA
    delays: np.ndarray  # (M,) reply delays, seconds
    sigma_anchor: np.ndarray  # (M,) request-side noise std, m
    sigma_ud: float  # response-side noise std, m

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        tau = np.asarray(self.tau, dtype=float)
        delays = np.asarray(self.delays, dtype=float)
        sig = np.asarray(self.sigma_anchor, dtype=float)
        if not (rho.shape == tau.shape == delays.shape == sig.shape) or rho.ndim != 1:
            raise DimensionMismatch("rho, tau, delays, sigma_anchor must share length M")
        if rho.size < 1:
            raise DimensionMismatch("need at least one measurement pair")
        for name, v in (("rho", rho), ("tau", tau), ("delays", delays), ("sigma", sig)):
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} has non-finite entries")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "sigma_anchor", sig)

    @property
    def n_anchors(self) -> int:
        return self.rho.size

    def stacked(self) -> np.ndarray:
        """The 2M-vector [rho; tau]."""
        return np.concatenate([self.rho, self.tau])


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Diagonal WLS weights: inverse noise variances, request block first."""

    diagonal: np.ndarray  # (2M,), 1/m^2

    def __post_init__(self):
        d = np.asarray(self.diagonal, dtype=float)
        if d.ndim != 1 or d.size % 2 != 0:
            raise DimensionMismatch("weight diagonal must have even length 2M")
        if np.any(d <= 0) or not np.all(np.isfinite(d)):
            raise NonPositiveSigma("weights must be finite and strictly positive")
        object.__setattr__(self, "diagonal", d)

    @property
    def n_anchors(self) -> int:
        return self.diagonal.size // 2

    @property
    def rho_block(self) -> np.ndarray:
        return self.diagonal[: self.n_anchors]

    @property
    def tau_block(self) -> np.ndarray:
        return self.diagonal[self.n_anchors :]


def build_weights(sigma_anchor, sigma_ud: float) -> WeightMatrix:
    """Weights [1/sigma_1^2 .. 1/sigma_M^2, 1/sigma^2 .. 1/sigma^2]."""
    sig = np.atleast_1d(np.asarray(sigma_anchor, dtype=float))
    if np.any(sig <= 0) or sigma_ud <= 0:
        raise NonPositiveSigma("all noise standard deviations must be > 0")
    return WeightMatrix(
        np.concatenate([1.0 / sig**2, np.full(sig.size, 1.0 / sigma_ud**2)])
    )


def request_toa_clean(q, state: "StateVector | object") -> float:
    """Noise-free request TOA in meters: range minus device clock offset."""
    q = np.asarray(q, dtype=float)
    r = float(np.linalg.norm(q - state.position))
    if r < COINCIDENT_EPS:
        raise CoincidentGeometry(f"anchor at {q} coincides with the device")
    return r - state.clock_offset


def response_toa_clean(q, state, delay: float) -> float:
    """Noise-free response TOA in meters, after the device moved for `delay` s."""
    if delay <= 0:
        raise ValueError("reply delay must be positive")
    q = np.asarray(q, dtype=float)
    displaced = state.position + state.velocity * delay
    r = float(np.linalg.norm(q - displaced))
    if r < COINCIDENT_EPS:
        raise CoincidentGeometry(f"anchor at {q} coincides with the displaced device")
    return r + state.clock_offset + state.clock_drift * delay


def forward_model(theta: StateVector, anchors, delays) -> np.ndarray:
    """Clean measurement vector (2M,) for a state: request rows then response rows."""
    q = anchor_array(anchors)
    delays = np.asarray(delays, dtype=float)
    if q.shape[0] != delays.size:
        raise DimensionMismatch("anchors and delays disagree on M")
    rho = np.array([request_toa_clean(qi, theta) for qi in q])
    tau = np.array(
        [response_toa_clean(qi, theta, dt) for qi, dt in zip(q, delays)]
    )
    return np.concatenate([rho, tau])


def forward_jacobian(theta: StateVector, anchors, delays) -> np.ndarray:
    """Analytic Jacobian of :func:`forward_model`, shape (2M, 2N+2).

    Column order matches the StateVector layout [position, clock_offset,
    clock_drift, velocity].  Request rows: -u_i on position, -1 on offset.
    Response rows: -u~_i on position, +1 on offset, dt_i on drift and
    -u~_i*dt_i on velocity, with u~_i the unit vector toward the displaced
    position.
    """
    q = anchor_array(anchors)
    delays = np.asarray(delays, dtype=float)
    m, n = q.shape
    if delays.size != m:
        raise DimensionMismatch("anchors and delays disagree on M")
    jac = np.zeros((2 * m, 2 * n + 2))
    for i in range(m):
        d = q[i] - theta.position
        r = np.linalg.norm(d)
        if r < COINCIDENT_EPS:
            raise CoincidentGeometry(f"anchor {i} coincides with the device")
        u = d / r
        jac[i, :n] = -u
        jac[i, n] = -1.0
        displaced = theta.position + theta.velocity * delays[i]
        d2 = q[i] - displaced
        r2 = np.linalg.norm(d2)
        if r2 < COINCIDENT_EPS:
            raise CoincidentGeometry(f"anchor {i} coincides with the displaced device")
        u2 = d2 / r2
        jac[m + i, :n] = -u2
        jac[m + i, n] = 1.0
        jac[m + i, n + 1] = delays[i]
        jac[m + i, n + 2 :] = -u2 * delays[i]
    return jac


def simulate(scenario: Scenario, rng_seed: int) -> TwoWayMeasurements:
    """Draw one epoch of noisy measurements from a scenario.

    The generator is PCG64 (numpy default) seeded with `rng_seed`; Gaussian
    draws use numpy's ziggurat standard normal.  Draw order is fixed: M
    request deviates first, then M response deviates, so a given seed yields
    bit-identical measurements on every platform.  Request noise is scaled by
    the per-anchor sigma, response noise by the common UD-side sigma, each
    entry independent.
    """
    rng = np.random.default_rng(rng_seed)
    clean = forward_model(scenario.true_state(), scenario.anchors, scenario.schedule.delays)
    m = scenario.n_anchors
    rho = clean[:m] + scenario.sigma_anchor * rng.standard_normal(m)
    tau = clean[m:] + scenario.sigma_ud * rng.standard_normal(m)
    return TwoWayMeasurements(
        rho=rho,
        tau=tau,
        delays=scenario.schedule.delays,
        sigma_anchor=scenario.sigma_anchor,
        sigma_ud=scenario.sigma_ud,
    )
