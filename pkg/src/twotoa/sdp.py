"""Convex relaxation of the moving-device two-way TOA WLS problem.

The nonconvex WLS cost is linear in the stacked vector

    g = [request ranges (M) | response ranges (M) | clock offset | clock drift]

through the model matrix A: clean measurements = A g.  Lifting G = g g' turns
the cost into a linear functional of (g, G); the range-geometry identities
pin the first 2M diagonal entries of G to affine functions of the position p,
the velocity v and the auxiliary squares

    pos_sq  = p'p,   vel_sq = v'v,   cross = 2 p'v,
    disp_sq_i = ||p + v dt_i||^2 = pos_sq + cross*dt_i + vel_sq*dt_i^2,

and the rank-one equalities are relaxed to PSD blocks

    [G g; g' 1],  [I p; p' pos_sq],  [I v; v' vel_sq],
    [I p+v; (p+v)' pos_sq+vel_sq+cross].

Two stationarity rows (zero WLS gradient in offset and drift) plus
nonnegativity of the range entries complete the program.  The builder works
in kilometer-scaled units internally (configurable) so the lifted block stays
O(1); extraction undoes the scaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conic import ConeLayout, ConicProgram, smat, svec
from .errors import DimensionMismatch
from .interior_point import IpmResult, IpmSettings, SolverStatus, solve
from .measurement import TwoWayMeasurements, WeightMatrix, anchor_array, build_weights
from .model import StateVector

#: Default internal length scale (meters) for solver conditioning.
DEFAULT_LENGTH_SCALE = 1e3

#: Default weight of the gram-trace term that picks the rank-one point on the
#: flat optimal face (see build_sdp).
DEFAULT_TRACE_PENALTY = 1e-9


def model_matrix(n_anchors: int, delays) -> np.ndarray:
    """Linear map from [ranges_req, ranges_resp, offset, drift] to clean TOA.

    Shape (2M, 2M+2): request rows subtract the offset, response rows add the
    offset plus delay-scaled drift.
    """
    m = int(n_anchors)
    if m < 1:
        raise DimensionMismatch("need at least one anchor")
    delays = np.asarray(delays, dtype=float)
    if delays.shape != (m,):
        raise DimensionMismatch(f"delays must have shape ({m},)")
    a = np.zeros((2 * m, 2 * m + 2))
    a[:m, :m] = np.eye(m)
    a[:m, 2 * m] = -1.0
    a[m:, m : 2 * m] = np.eye(m)
    a[m:, 2 * m] = 1.0
    a[m:, 2 * m + 1] = delays
    return a


def stationarity_constraints(
    measurements: TwoWayMeasurements, weights: WeightMatrix, model_mat: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Zero-gradient rows of the WLS cost in the clock offset and drift.

    Returns (coefficients, rhs) with coefficients of shape (2, 2M+2) acting on
    the stacked range/clock vector g, so that ``coefficients @ g = rhs`` holds
    at any WLS-stationary point.
    """
    m = measurements.n_anchors
    if model_mat.shape != (2 * m, 2 * m + 2):
        raise DimensionMismatch("model matrix does not match measurement count")
    if weights.n_anchors != m:
        raise DimensionMismatch("weights do not match measurement count")
    a_req = model_mat[:m]
    a_resp = model_mat[m:]
    w_req = weights.rho_block
    w_resp = weights.tau_block
    lam = measurements.delays
    coeffs = np.vstack(
        [
            a_req.T @ w_req - a_resp.T @ w_resp,
            a_resp.T @ (w_resp * lam),
        ]
    )
    rhs = np.array(
        [
            measurements.rho @ w_req - measurements.tau @ w_resp,
            measurements.tau @ (w_resp * lam),
        ]
    )
    return coeffs, rhs


@dataclass(frozen=True)
class SdpVariables:
    """Index map from named relaxation variables to the flat solver vector.

    Free segment order: position (N), velocity (N), pos_sq, vel_sq, cross,
    disp_sq (M), offset, drift [, response ranges (M) when only the request
    ranges are sign-constrained].  The nonnegative segment holds the range
    entries of g; PSD blocks follow in the order gram, pos, vel, sum.
    """

    n_anchors: int
    dim: int
    motion: str = "moving"
    nonneg_range: str = "all"

    def __post_init__(self):
        if self.motion not in ("moving", "stationary"):
            raise ValueError(f"unknown motion model {self.motion!r}")
        if self.nonneg_range not in ("all", "request"):
            raise ValueError(f"unknown nonneg_range {self.nonneg_range!r}")
        if self.n_anchors < 1 or self.dim not in (2, 3):
            raise ValueError("need M >= 1 anchors and dimension 2 or 3")

    # -- free segment ------------------------------------------------------
    def pos(self, j: int) -> int:
        return j

    def vel(self, j: int) -> int:
        return self.dim + j

    @property
    def pos_sq(self) -> int:
        return 2 * self.dim

    @property
    def vel_sq(self) -> int:
        return 2 * self.dim + 1

    @property
    def cross(self) -> int:
        return 2 * self.dim + 2

    def disp_sq(self, i: int) -> int:
        return 2 * self.dim + 3 + i

    @property
    def offset(self) -> int:
        return 2 * self.dim + 3 + self.n_anchors

    @property
    def drift(self) -> int:
        return 2 * self.dim + 4 + self.n_anchors

    @property
    def n_free(self) -> int:
        base = 2 * self.dim + 5 + self.n_anchors
        if self.nonneg_range == "request":
            base += self.n_anchors  # response ranges become free
        return base

    # -- range entries of g --------------------------------------------------
    @property
    def n_nonneg(self) -> int:
        return 2 * self.n_anchors if self.nonneg_range == "all" else self.n_anchors

    def range_entry(self, i: int) -> int:
        """Flat index of g_i for i < 2M (request block first)."""
        m = self.n_anchors
        if not 0 <= i < 2 * m:
            raise IndexError(f"range entry {i} out of bounds")
        if self.nonneg_range == "all" or i < m:
            return self.n_free + i
        return 2 * self.dim + 5 + m + (i - m)  # free response-range slot

    def g_entry(self, i: int) -> int:
        """Flat index of g_i for i < 2M+2 (ranges, then offset, then drift)."""
        m = self.n_anchors
        if i < 2 * m:
            return self.range_entry(i)
        if i == 2 * m:
            return self.offset
        if i == 2 * m + 1:
            return self.drift
        raise IndexError(f"g entry {i} out of bounds")

    # -- PSD blocks ----------------------------------------------------------
    @property
    def gram_order(self) -> int:
        return 2 * self.n_anchors + 3

    @property
    def psd_orders(self) -> tuple[int, ...]:
        if self.motion == "moving":
            return (self.gram_order, self.dim + 1, self.dim + 1, self.dim + 1)
        return (self.gram_order, self.dim + 1)

    @property
    def layout(self) -> ConeLayout:
        return ConeLayout(self.n_free, self.n_nonneg, self.psd_orders)

    def gram_entry(self, i: int, j: int) -> int:
        return self.layout.psd_entry_index(0, i, j)

    def pos_block_entry(self, i: int, j: int) -> int:
        return self.layout.psd_entry_index(1, i, j)

    def vel_block_entry(self, i: int, j: int) -> int:
        if self.motion != "moving":
            raise IndexError("stationary program has no velocity block")
        return self.layout.psd_entry_index(2, i, j)

    def sum_block_entry(self, i: int, j: int) -> int:
        if self.motion != "moving":
            raise IndexError("stationary program has no sum block")
        return self.layout.psd_entry_index(3, i, j)


@dataclass(frozen=True, eq=False)
class SdpProgram:
    """A built relaxation: canonical program plus the data to undo scaling."""

    conic: ConicProgram
    index: SdpVariables
    length_scale: float
    objective_scale: float  # multiply solver objective by this for 1/scale^2-weighted SI cost
    motion: str
    trace_penalty: float = 0.0

    def objective_si(self, x: np.ndarray) -> float:
        """Objective value of a solver point in SI weight units (m^2 * 1/m^2)."""
        return float(self.conic.objective @ x) * self.objective_scale


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Outcome of one relaxation solve."""

    estimate: StateVector
    status: SolverStatus
    duality_gap: float  # normalized objective units
    tightness: float  # second / first eigenvalue of the solved gram block
    wall_time: float
    iterations: int


def build_sdp(
    measurements: TwoWayMeasurements,
    weights: WeightMatrix,
    anchors,
    delays,
    motion: str = "moving",
    nonneg_range: str = "all",
    length_scale: float = DEFAULT_LENGTH_SCALE,
    trace_penalty: float = DEFAULT_TRACE_PENALTY,
) -> SdpProgram:
    """Assemble the mixed-cone relaxation for one measurement epoch.

    ``trace_penalty`` adds eps * tr(gram block) to the objective.  The WLS
    objective is blind to lifted components in the null space of the model
    matrix, so the optimal face is unbounded there; the penalty selects its
    minimum-trace (rank-one) point.  At zero noise that point is exactly the
    lifted truth, so the selection is bias-free there, and under noise the
    perturbation of the estimate is of order eps.  Set it to 0 for the bare
    relaxation.
    """
    q = anchor_array(anchors)
    m, n = q.shape
    delays = np.asarray(delays, dtype=float)
    if measurements.n_anchors != m or weights.n_anchors != m or delays.size != m:
        raise DimensionMismatch("measurements, weights, anchors, delays disagree on M")
    if 2 * m < 2 * n + 2:
        raise DimensionMismatch(f"{m} anchors cannot determine {2*n+2} unknowns")

    scale = float(length_scale)
    q_s = q / scale
    gamma_s = measurements.stacked() / scale
    meas_s = TwoWayMeasurements(
        rho=gamma_s[:m],
        tau=gamma_s[m:],
        delays=delays,
        sigma_anchor=measurements.sigma_anchor / scale,
        sigma_ud=measurements.sigma_ud / scale,
    )
    w_scaled = weights.diagonal * scale**2
    obj_scale = float(np.mean(w_scaled))
    w_n = WeightMatrix(w_scaled / obj_scale)

    idx = SdpVariables(n_anchors=m, dim=n, motion=motion, nonneg_range=nonneg_range)
    layout = idx.layout
    ntot = layout.n_total
    corner = idx.gram_order - 1  # index of the pinned 1 in the gram block

    a_model = model_matrix(m, delays)
    rows: list[np.ndarray] = []
    rhs: list[float] = []

    def add_row(row, value):
        rows.append(row)
        rhs.append(float(value))

    # Stationarity of the WLS cost in offset and drift.
    st_coeffs, st_rhs = stationarity_constraints(meas_s, w_n, a_model)
    for k in range(2):
        row = np.zeros(ntot)
        for i in range(2 * m + 2):
            row[idx.g_entry(i)] += st_coeffs[k, i]
        add_row(row, st_rhs[k])

    # Diagonal of the gram block equals the squared-range identity.
    sq2 = np.sqrt(2.0)
    for i in range(m):
        row = np.zeros(ntot)
        row[idx.gram_entry(i, i)] = 1.0
        row[[idx.pos(j) for j in range(n)]] += 2.0 * q_s[i]
        row[idx.pos_sq] -= 1.0
        add_row(row, q_s[i] @ q_s[i])
    for i in range(m):
        row = np.zeros(ntot)
        row[idx.gram_entry(m + i, m + i)] = 1.0
        row[[idx.pos(j) for j in range(n)]] += 2.0 * q_s[i]
        row[[idx.vel(j) for j in range(n)]] += 2.0 * delays[i] * q_s[i]
        row[idx.disp_sq(i)] -= 1.0
        add_row(row, q_s[i] @ q_s[i])

    # Displaced squared norms linked to pos_sq / cross / vel_sq.
    for i in range(m):
        row = np.zeros(ntot)
        row[idx.disp_sq(i)] = 1.0
        row[idx.pos_sq] -= 1.0
        row[idx.cross] -= delays[i]
        row[idx.vel_sq] -= delays[i] ** 2
        add_row(row, 0.0)

    # Last column of the gram block carries g itself.
    for i in range(2 * m + 2):
        row = np.zeros(ntot)
        row[idx.gram_entry(i, corner)] = 1.0 / sq2
        row[idx.g_entry(i)] -= 1.0
        add_row(row, 0.0)
    row = np.zeros(ntot)
    row[idx.gram_entry(corner, corner)] = 1.0
    add_row(row, 1.0)

    # Structured small blocks: identity pins, linear ties, squared corners.
    def small_block(entry, vec_index, corner_terms):
        for a in range(n):
            for bcol in range(a + 1):
                row = np.zeros(ntot)
                row[entry(a, bcol)] = 1.0 if a == bcol else 1.0 / sq2
                add_row(row, 1.0 if a == bcol else 0.0)
        for a in range(n):
            row = np.zeros(ntot)
            row[entry(n, a)] = 1.0 / sq2
            for var, coef in vec_index(a):
                row[var] -= coef
            add_row(row, 0.0)
        row = np.zeros(ntot)
        row[entry(n, n)] = 1.0
        for var, coef in corner_terms:
            row[var] -= coef
        add_row(row, 0.0)

    small_block(
        idx.pos_block_entry,
        lambda a: [(idx.pos(a), 1.0)],
        [(idx.pos_sq, 1.0)],
    )
    if motion == "moving":
        small_block(
            idx.vel_block_entry,
            lambda a: [(idx.vel(a), 1.0)],
            [(idx.vel_sq, 1.0)],
        )
        small_block(
            idx.sum_block_entry,
            lambda a: [(idx.pos(a), 1.0), (idx.vel(a), 1.0)],
            [(idx.pos_sq, 1.0), (idx.vel_sq, 1.0), (idx.cross, 1.0)],
        )
    else:
        for var in [idx.vel(j) for j in range(n)] + [idx.vel_sq, idx.cross]:
            row = np.zeros(ntot)
            row[var] = 1.0
            add_row(row, 0.0)

    # Objective: <A'WA, G> - 2 (A'W gamma)' g, constant gamma'W gamma dropped.
    c = np.zeros(ntot)
    gram_objective = np.zeros((idx.gram_order, idx.gram_order))
    gram_objective[: 2 * m + 2, : 2 * m + 2] = a_model.T @ (w_n.diagonal[:, None] * a_model)
    if trace_penalty:
        gram_objective += trace_penalty * np.eye(idx.gram_order)
    gram_slice = layout.psd_slices()[0]
    c[gram_slice] = svec(gram_objective)
    lin = -2.0 * a_model.T @ (w_n.diagonal * gamma_s)
    for i in range(2 * m + 2):
        c[idx.g_entry(i)] += lin[i]

    program = ConicProgram(
        layout=layout,
        objective=c,
        eq_matrix=np.array(rows),
        eq_rhs=np.array(rhs),
    )
    return SdpProgram(
        conic=program,
        index=idx,
        length_scale=scale,
        objective_scale=obj_scale,
        motion=motion,
        trace_penalty=trace_penalty,
    )


def extract_solution(sdp_program: SdpProgram, result: IpmResult) -> SolveReport:
    """Read the state estimate and relaxation diagnostics out of a solve."""
    idx = sdp_program.index
    scale = sdp_program.length_scale
    x = result.x
    n = idx.dim
    position = scale * np.array([x[idx.pos(j)] for j in range(n)])
    velocity = scale * np.array([x[idx.vel(j)] for j in range(n)])
    estimate = StateVector(
        position=position,
        clock_offset=scale * float(x[idx.offset]),
        clock_drift=scale * float(x[idx.drift]),
        velocity=velocity,
    )
    gram = smat(x[sdp_program.conic.layout.psd_slices()[0]], idx.gram_order)
    eigs = np.linalg.eigvalsh(gram)
    tightness = float(np.clip(eigs[-2] / eigs[-1], 0.0, 1.0)) if eigs[-1] > 0 else 1.0
    gap = float(
        sdp_program.conic.objective @ x - sdp_program.conic.eq_rhs @ result.y
    )
    return SolveReport(
        estimate=estimate,
        status=result.status,
        duality_gap=gap,
        tightness=tightness,
        wall_time=result.wall_time,
        iterations=result.iterations,
    )


def solve_sdp(
    measurements: TwoWayMeasurements,
    anchors,
    motion: str = "moving",
    weights: WeightMatrix | None = None,
    settings: IpmSettings | None = None,
    nonneg_range: str = "all",
    length_scale: float = DEFAULT_LENGTH_SCALE,
    trace_penalty: float = DEFAULT_TRACE_PENALTY,
) -> SolveReport:
    """Build and solve the relaxation for one epoch; convenience wrapper."""
    if weights is None:
        weights = build_weights(measurements.sigma_anchor, measurements.sigma_ud)
    program = build_sdp(
        measurements,
        weights,
        anchors,
        measurements.delays,
        motion=motion,
        nonneg_range=nonneg_range,
        length_scale=length_scale,
        trace_penalty=trace_penalty,
    )
    result = solve(program.conic, settings)
    return extract_solution(program, result)
