"""Two-way TOA localization of moving devices with clock drift.

Estimates position, velocity, clock offset and clock drift from round-trip
TOA measurements via a semidefinite relaxation solved by an in-package
interior-point conic solver, benchmarked against a Gauss-Newton baseline and
the Cramer-Rao lower bound.
"""

from .conic import ConeLayout, ConicProgram, parse_program, serialize_program
from .crlb import CrlbReport, compute_crlb, is_success
from .errors import (
    CoincidentGeometry,
    DimensionMismatch,
    NonPositiveSigma,
    SingularNormalMatrix,
    TwoTOAError,
    UnobservableGeometry,
)
from .gauss_newton import GnReport, gauss_newton, random_init, wls_cost
from .harness import (
    CampaignConfig,
    CampaignResult,
    CellResult,
    RunRecord,
    emit_results,
    run_campaign,
    run_speed_sweep,
)
from .interior_point import IpmResult, IpmSettings, SolverStatus, residuals, solve
from .measurement import (
    TwoWayMeasurements,
    WeightMatrix,
    build_weights,
    forward_jacobian,
    forward_model,
    request_toa_clean,
    response_toa_clean,
    simulate,
)
from .model import (
    SPEED_OF_LIGHT,
    Anchor,
    Cube,
    Scenario,
    Schedule,
    StateVector,
    UdState,
    propagate_clock,
    propagate_position,
    scenario_from_dict,
    scenario_to_dict,
)
from .sdp import (
    SdpProgram,
    SdpVariables,
    SolveReport,
    build_sdp,
    extract_solution,
    model_matrix,
    solve_sdp,
    stationarity_constraints,
)

__version__ = "0.1.0"
