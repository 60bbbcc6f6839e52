"""Domain types and deterministic kinematic/clock propagation.

All time-of-arrival quantities are carried in range units: clock offsets in
meters (seconds times the propagation speed) and clock drifts in meters per
second.  This keeps measurement entries, estimator states and SDP variables
in the same well-conditioned scale (hundreds of meters rather than
microseconds).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m/s

#: Sanity bound on device speed; anything faster is almost surely a unit slip.
DEFAULT_MAX_SPEED = 1000.0  # m/s


def _vector(x, name: str, size: int | None = None) -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {v.shape}")
    if size is not None and v.size != size:
        raise ValueError(f"{name} must have length {size}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    v.flags.writeable = False
    return v


@dataclass(frozen=True, eq=False)
class Anchor:
    """Fixed node at a known position, synchronized to the common clock."""

    id: int
    position: np.ndarray  # (N,), meters

    def __post_init__(self):
        q = _vector(self.position, "anchor position")
        if q.size not in (2, 3):
            raise ValueError(f"anchor dimension must be 2 or 3, got {q.size}")
        object.__setattr__(self, "position", q)


@dataclass(frozen=True, eq=False)
class UdState:
    """User-device kinematic and clock state at one epoch.

    clock_offset is in meters (offset seconds x propagation speed) and
    clock_drift in meters/second.
    """

    position: np.ndarray  # (N,), m
    velocity: np.ndarray  # (N,), m/s
    clock_offset: float = 0.0  # m
    clock_drift: float = 0.0  # m/s
    max_speed: float = field(default=DEFAULT_MAX_SPEED, repr=False)

    def __post_init__(self):
        p = _vector(self.position, "position")
        v = _vector(self.velocity, "velocity", p.size)
        if not np.isfinite(self.clock_offset) or not np.isfinite(self.clock_drift):
            raise ValueError("clock state must be finite")
        speed = float(np.linalg.norm(v))
        if speed > self.max_speed:
            raise ValueError(
                f"speed {speed:.1f} m/s exceeds the {self.max_speed:.0f} m/s sanity "
                "bound; check units"
            )
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "velocity", v)

    @property
    def dim(self) -> int:
        return self.position.size


@dataclass(frozen=True, eq=False)
class Schedule:
    """Round-trip timing: request epoch and per-anchor reply delays (seconds)."""

    tx_time: float
    delays: np.ndarray  # (M,), s, all > 0

    def __post_init__(self):
        d = _vector(self.delays, "delays")
        if np.any(d <= 0):
            raise ValueError("reply delays must be strictly positive")
        if np.unique(d).size < 2:
            # A single distinct delay makes the clock drift unobservable.
            raise ValueError("schedule needs at least two distinct reply delays")
        object.__setattr__(self, "delays", d)

    def __len__(self) -> int:
        return self.delays.size


@dataclass(frozen=True, eq=False)
class Scenario:
    """Ground truth for simulation and bound computation.

    sigma_anchor holds the per-anchor request-side noise std dev and sigma_ud
    the common response-side std dev, both in meters.  Zero sigmas are allowed
    here (noise-free simulation); weight construction rejects them.
    """

    anchors: tuple[Anchor, ...]
    ud: UdState
    schedule: Schedule
    sigma_anchor: np.ndarray  # (M,), m
    sigma_ud: float  # m
    c: float = SPEED_OF_LIGHT  # m/s

    def __post_init__(self):
        anchors = tuple(self.anchors)
        if not anchors:
            raise ValueError("scenario needs at least one anchor")
        n = anchors[0].position.size
        if any(a.position.size != n for a in anchors):
            raise ValueError("anchors have inconsistent dimensions")
        if self.ud.dim != n:
            raise ValueError("device state dimension does not match anchors")
        m = len(anchors)
        if len(self.schedule) != m:
            raise ValueError("schedule length does not match anchor count")
        # 2M measurements must cover the 2N+2 unknowns.
        if 2 * m < 2 * n + 2:
            raise ValueError(f"{m} anchors give 2M={2*m} measurements < {2*n+2} unknowns")
        sig = _vector(self.sigma_anchor, "sigma_anchor", m)
        if np.any(sig < 0) or self.sigma_ud < 0:
            raise ValueError("noise standard deviations must be nonnegative")
        if self.c <= 0:
            raise ValueError("propagation speed must be positive")
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "sigma_anchor", sig)

    @property
    def n_anchors(self) -> int:
        return len(self.anchors)

    @property
    def dim(self) -> int:
        return self.ud.dim

    def anchor_positions(self) -> np.ndarray:
        """Anchor coordinates stacked into an (M, N) array."""
        return np.array([a.position for a in self.anchors])

    def true_state(self) -> "StateVector":
        return StateVector(
            position=self.ud.position,
            clock_offset=self.ud.clock_offset,
            clock_drift=self.ud.clock_drift,
            velocity=self.ud.velocity,
        )


@dataclass(frozen=True, eq=False)
class StateVector:
    """Estimator unknowns, flattened as [position, clock_offset, clock_drift, velocity].

    The flat layout (length 2N+2) is shared with the forward-model Jacobian.
    """

    position: np.ndarray  # (N,), m
    clock_offset: float  # m
    clock_drift: float  # m/s
    velocity: np.ndarray  # (N,), m/s

    def __post_init__(self):
        p = _vector(self.position, "position")
        v = _vector(self.velocity, "velocity", p.size)
        if not np.isfinite(self.clock_offset) or not np.isfinite(self.clock_drift):
            raise ValueError("clock entries must be finite")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "velocity", v)

    @property
    def dim(self) -> int:
        return self.position.size

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.position, [self.clock_offset, self.clock_drift], self.velocity]
        )

    @classmethod
    def from_vector(cls, theta: np.ndarray) -> "StateVector":
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 1 or theta.size % 2 != 0 or theta.size < 6:
            raise ValueError(f"state vector length must be 2N+2 >= 6, got {theta.size}")
        n = (theta.size - 2) // 2
        return cls(
            position=theta[:n],
            clock_offset=float(theta[n]),
            clock_drift=float(theta[n + 1]),
            velocity=theta[n + 2 :],
        )


@dataclass(frozen=True, eq=False)
class Cube:
    """Axis-aligned cube, used for anchor layouts and random initialization."""

    center: np.ndarray  # (N,)
    edge: float

    def __post_init__(self):
        c = _vector(self.center, "cube center")
        if self.edge < 0:
            raise ValueError("cube edge must be nonnegative")
        object.__setattr__(self, "center", c)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform draw from the cube interior."""
        half = self.edge / 2.0
        return self.center + rng.uniform(-half, half, size=self.center.size)

    def vertices(self) -> np.ndarray:
        """The 2^N corner points."""
        half = self.edge / 2.0
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=self.center.size)))
        return self.center + half * signs


def propagate_position(p, v, dt: float) -> np.ndarray:
    """Constant-velocity motion: position after dt seconds."""
    return np.asarray(p, dtype=float) + np.asarray(v, dtype=float) * dt


def propagate_clock(offset: float, drift: float, dt: float) -> float:
    """Constant-drift clock: offset (range units) after dt seconds."""
    return offset + drift * dt


def scenario_to_dict(scenario: Scenario) -> dict:
    """Plain-data form of a scenario (the on-disk configuration schema)."""
    return {
        "anchors": scenario.anchor_positions().tolist(),
        "ud": {
            "position": scenario.ud.position.tolist(),
            "velocity": scenario.ud.velocity.tolist(),
            "clock_offset_m": scenario.ud.clock_offset,
            "clock_drift_mps": scenario.ud.clock_drift,
        },
        "schedule": {
            "tx_time": scenario.schedule.tx_time,
            "delays": scenario.schedule.delays.tolist(),
        },
        "sigma_anchor": scenario.sigma_anchor.tolist(),
        "sigma_ud": scenario.sigma_ud,
        "c": scenario.c,
    }


def scenario_from_dict(data: dict) -> Scenario:
    """Inverse of :func:`scenario_to_dict`, with light schema validation."""
    try:
        anchors = tuple(
            Anchor(i, np.asarray(q, dtype=float)) for i, q in enumerate(data["anchors"])
        )
        ud = data["ud"]
        state = UdState(
            position=np.asarray(ud["position"], dtype=float),
            velocity=np.asarray(ud["velocity"], dtype=float),
            clock_offset=float(ud.get("clock_offset_m", 0.0)),
            clock_drift=float(ud.get("clock_drift_mps", 0.0)),
        )
        sched = data["schedule"]
        schedule = Schedule(
            tx_time=float(sched.get("tx_time", 0.0)),
            delays=np.asarray(sched["delays"], dtype=float),
        )
        sigma_anchor = np.asarray(data["sigma_anchor"], dtype=float)
        sigma_ud = float(data["sigma_ud"])
        c = float(data.get("c", SPEED_OF_LIGHT))
    except KeyError as missing:
        raise ValueError(f"scenario config is missing key {missing}") from None
    return Scenario(
        anchors=anchors,
        ud=state,
        schedule=schedule,
        sigma_anchor=sigma_anchor,
        sigma_ud=sigma_ud,
        c=c,
    )
