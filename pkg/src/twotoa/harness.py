"""Seeded Monte-Carlo campaigns: Table-I style success rates and speed sweeps.

Reproducibility protocol: run k of a campaign derives three integer seeds from
the master seed s -- scenario draws use ``s + k``, measurement noise uses
``s + k + 10**9`` and the Gauss-Newton initialization uses ``s + k + 2 * 10**9``
-- so every method inside a run consumes bit-identical measurements, cells
reuse the same geometry across noise levels, and parallel execution cannot
change any number.  Scenario draw order is fixed: position, speed (unless the
cell pins it), yaw, elevation, clock offset, clock drift.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .crlb import compute_crlb, is_success
from .errors import TwoTOAError, UnobservableGeometry
from .gauss_newton import gauss_newton, random_init
from .interior_point import IpmSettings, SolverStatus
from .measurement import build_weights, simulate
from .model import SPEED_OF_LIGHT, Anchor, Cube, Scenario, Schedule, UdState
from .sdp import solve_sdp

NOISE_SEED_OFFSET = 10**9
INIT_SEED_OFFSET = 2 * 10**9

KNOWN_METHODS = ("sdp_m", "gauss_newton", "sdp_stationary")


@dataclass(frozen=True)
class CampaignConfig:
    """Geometry, priors and execution knobs of one Monte-Carlo campaign.

    Defaults reproduce the published experiment: eight anchors on the
    vertices of a 600 m cube, the device uniform in a concentric 700 m cube,
    reply delays of 10i ms, clock offset U(0, 20) microseconds, drift
    U(-10, 10) ppm, speed U(0, 60) m/s with uniform yaw/elevation, and four
    noise steps from 0.1 m to 10 m.
    """

    anchor_cube_edge: float = 600.0  # m
    ud_cube_edge: float = 700.0  # m
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    delay_step_ms: float = 10.0  # reply delay of anchor i is i * this
    clock_offset_range_us: tuple[float, float] = (0.0, 20.0)
    clock_drift_range_ppm: tuple[float, float] = (-10.0, 10.0)
    speed_range: tuple[float, float] = (0.0, 60.0)  # m/s
    noise_grid: tuple[float, ...] = (0.10, 0.46, 2.15, 10.0)  # m
    sweep_sigma: float = 0.10  # noise pinned during speed sweeps, m
    runs: int = 5000
    master_seed: int = 1
    methods: tuple[str, ...] = ("sdp_m", "gauss_newton")
    c: float = SPEED_OF_LIGHT
    workers: int = 1
    solver_max_iter: int = 50
    solver_tol_gap: float = 1e-10
    solver_tol_feas: float = 1e-7
    verbose_solver: bool = False

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("need at least one run per cell")
        if any(s <= 0 for s in self.noise_grid):
            raise ValueError("noise grid must be strictly positive")
        unknown = set(self.methods) - set(KNOWN_METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; pick from {KNOWN_METHODS}")

    def anchors(self) -> tuple[Anchor, ...]:
        cube = Cube(np.asarray(self.center, dtype=float), self.anchor_cube_edge)
        return tuple(Anchor(i, q) for i, q in enumerate(cube.vertices()))

    def ud_cube(self) -> Cube:
        return Cube(np.asarray(self.center, dtype=float), self.ud_cube_edge)

    def delays(self) -> np.ndarray:
        m = len(self.anchors())
        return self.delay_step_ms * 1e-3 * np.arange(1, m + 1)

    def solver_settings(self) -> IpmSettings:
        return IpmSettings(
            max_iter=self.solver_max_iter,
            tol_gap=self.solver_tol_gap,
            tol_feas=self.solver_tol_feas,
            verbose=self.verbose_solver,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown campaign config keys {sorted(unknown)}")
        coerced = {
            k: tuple(v) if isinstance(v, list) else v for k, v in data.items()
        }
        return cls(**coerced)


@dataclass(frozen=True)
class RunRecord:
    """One (run, method) outcome; the raw material behind every aggregate."""

    cell: str
    method: str
    run_index: int
    pos_error: float  # m; inf when the method produced no usable estimate
    success: bool
    crlb_bound: float  # m
    wall_ms: float
    status: str


@dataclass(frozen=True)
class CellResult:
    """Aggregates of one (cell, method) pair, CSV row layout."""

    cell: str
    method: str
    runs: int
    success_rate: float
    rmse_all: float
    rmse_success: float  # nan when no run succeeded
    crlb_rmse: float
    mean_ms: float
    seed: int


@dataclass(frozen=True)
class CampaignResult:
    cells: list[CellResult]
    run_records: list[RunRecord]


def sample_scenario(
    config: CampaignConfig,
    rng: np.random.Generator,
    sigma: float,
    speed: float | None = None,
) -> Scenario:
    """Draw one ground-truth scenario; draw order is part of the seed contract."""
    position = config.ud_cube().sample(rng)
    spd = rng.uniform(*config.speed_range) if speed is None else float(speed)
    yaw = rng.uniform(0.0, 2.0 * np.pi)
    elevation = rng.uniform(-np.pi / 2.0, np.pi / 2.0)
    velocity = spd * np.array(
        [
            np.cos(elevation) * np.cos(yaw),
            np.cos(elevation) * np.sin(yaw),
            np.sin(elevation),
        ]
    )
    offset = rng.uniform(*config.clock_offset_range_us) * 1e-6 * config.c
    drift = rng.uniform(*config.clock_drift_range_ppm) * 1e-6 * config.c
    return Scenario(
        anchors=config.anchors(),
        ud=UdState(position, velocity, offset, drift),
        schedule=Schedule(0.0, config.delays()),
        sigma_anchor=np.full(len(config.anchors()), sigma),
        sigma_ud=sigma,
        c=config.c,
    )


def _failure_records(config, cell, run_index, bound, reason) -> list[RunRecord]:
    return [
        RunRecord(cell, method, run_index, math.inf, False, bound, 0.0, reason)
        for method in config.methods
    ]


def _run_single(
    config: CampaignConfig, cell: str, sigma: float, speed: float | None, run_index: int
) -> list[RunRecord]:
    seed = config.master_seed + run_index
    rng = np.random.default_rng(seed)
    scenario = sample_scenario(config, rng, sigma, speed)
    try:
        bound = compute_crlb(scenario).pos_rmse_bound
    except UnobservableGeometry:
        return _failure_records(config, cell, run_index, math.nan, "unobservable")
    try:
        measurements = simulate(scenario, seed + NOISE_SEED_OFFSET)
    except TwoTOAError:
        return _failure_records(config, cell, run_index, bound, "degenerate")

    anchors = scenario.anchor_positions()
    threshold = 3.0 * bound
    records = []
    for method in config.methods:
        t0 = time.perf_counter()
        status = "error"
        estimate = None
        try:
            if method == "sdp_m" or method == "sdp_stationary":
                motion = "moving" if method == "sdp_m" else "stationary"
                report = solve_sdp(
                    measurements,
                    anchors,
                    motion=motion,
                    settings=config.solver_settings(),
                )
                estimate = report.estimate
                status = report.status.value
            elif method == "gauss_newton":
                weights = build_weights(measurements.sigma_anchor, measurements.sigma_ud)
                init = random_init(config.ud_cube(), seed + INIT_SEED_OFFSET)
                report = gauss_newton(
                    measurements, weights, anchors, scenario.schedule.delays, init
                )
                estimate = report.estimate
                status = "converged" if report.converged else "max_iter"
        except TwoTOAError:
            estimate = None
        wall_ms = (time.perf_counter() - t0) * 1e3
        if estimate is None or not np.all(np.isfinite(estimate.position)):
            err = math.inf
        else:
            err = float(np.linalg.norm(estimate.position - scenario.ud.position))
        records.append(
            RunRecord(
                cell=cell,
                method=method,
                run_index=run_index,
                pos_error=err,
                success=bool(np.isfinite(err)) and is_success(
                    estimate.position, scenario.ud.position, threshold
                ),
                crlb_bound=bound,
                wall_ms=wall_ms,
                status=status,
            )
        )
    return records


def _run_cell(
    config: CampaignConfig, cell: str, sigma: float, speed: float | None
) -> list[RunRecord]:
    if config.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = pool.map(
                _run_single,
                [config] * config.runs,
                [cell] * config.runs,
                [sigma] * config.runs,
                [speed] * config.runs,
                range(config.runs),
                chunksize=8,
            )
            nested = list(chunks)
    else:
        nested = [
            _run_single(config, cell, sigma, speed, k) for k in range(config.runs)
        ]
    return [rec for batch in nested for rec in batch]


def aggregate(records: list[RunRecord], seed: int) -> list[CellResult]:
    """Collapse per-run records into one row per (cell, method), input order."""
    keys: list[tuple[str, str]] = []
    for rec in records:
        if (rec.cell, rec.method) not in keys:
            keys.append((rec.cell, rec.method))
    out = []
    for cell, method in keys:
        grp = [r for r in records if r.cell == cell and r.method == method]
        errs = np.array([r.pos_error for r in grp])
        succ = np.array([r.success for r in grp])
        bounds = np.array([r.crlb_bound for r in grp])
        rmse_success = (
            float(np.sqrt(np.mean(errs[succ] ** 2))) if succ.any() else math.nan
        )
        out.append(
            CellResult(
                cell=cell,
                method=method,
                runs=len(grp),
                success_rate=float(np.mean(succ)),
                rmse_all=float(np.sqrt(np.mean(errs**2))),
                rmse_success=rmse_success,
                crlb_rmse=float(np.sqrt(np.mean(bounds**2))),
                mean_ms=float(np.mean([r.wall_ms for r in grp])),
                seed=seed,
            )
        )
    return out


def run_campaign(config: CampaignConfig) -> CampaignResult:
    """One row of cells per noise level; all enabled methods per cell."""
    records: list[RunRecord] = []
    for sigma in config.noise_grid:
        cell = f"sigma={sigma:.2f}"
        records.extend(_run_cell(config, cell, sigma, None))
    return CampaignResult(cells=aggregate(records, config.master_seed), run_records=records)


def run_speed_sweep(
    config: CampaignConfig,
    speeds,
    methods: tuple[str, ...] = ("sdp_m", "sdp_stationary"),
) -> CampaignResult:
    """Cells keyed by device speed at the pinned sweep noise level."""
    config = dataclasses.replace(config, methods=tuple(methods))
    records: list[RunRecord] = []
    for speed in speeds:
        cell = f"speed={float(speed):g}"
        records.extend(_run_cell(config, cell, config.sweep_sigma, float(speed)))
    return CampaignResult(cells=aggregate(records, config.master_seed), run_records=records)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

CSV_HEADER = "cell,method,runs,success_rate,rmse_all,rmse_success,crlb_rmse,mean_ms,seed"
RUN_CSV_HEADER = "cell,method,run,pos_error,success,crlb_bound,status,wall_ms"


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.10g}"


def render_results(cells: list[CellResult], include_timing: bool = False) -> str:
    """CSV text for cell aggregates.

    Timing is left blank unless requested: wall time is the one aggregate that
    cannot be a function of the seed, and the emitted file must be
    byte-identical across repeated runs of the same campaign.
    """
    lines = [CSV_HEADER]
    for r in cells:
        lines.append(
            ",".join(
                [
                    r.cell,
                    r.method,
                    str(r.runs),
                    _fmt(r.success_rate),
                    _fmt(r.rmse_all),
                    _fmt(r.rmse_success),
                    _fmt(r.crlb_rmse),
                    _fmt(r.mean_ms) if include_timing else "",
                    str(r.seed),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def render_summary(cells: list[CellResult]) -> str:
    """Text table mirroring the published success-rate layout."""
    methods: list[str] = []
    cells_order: list[str] = []
    for r in cells:
        if r.method not in methods:
            methods.append(r.method)
        if r.cell not in cells_order:
            cells_order.append(r.cell)
    by_key = {(r.cell, r.method): r for r in cells}
    width = max([len(m) for m in methods] + [12])
    lines = ["Success rate (%) and position RMSE (m) per cell", ""]
    header = f"{'cell':>14s}" + "".join(f"{m:>{width + 2}s}" for m in methods)
    lines.append(header)
    for cell in cells_order:
        rates = []
        for m in methods:
            r = by_key.get((cell, m))
            rates.append("-" if r is None else f"{100 * r.success_rate:.2f}%")
        lines.append(f"{cell:>14s}" + "".join(f"{s:>{width + 2}s}" for s in rates))
    lines.append("")
    header = f"{'cell':>14s}" + "".join(f"{m:>{width + 2}s}" for m in methods) + f"{'crlb':>{width + 2}s}"
    lines.append(header)
    for cell in cells_order:
        vals = []
        crlb = ""
        for m in methods:
            r = by_key.get((cell, m))
            vals.append("-" if r is None else f"{r.rmse_all:.4g}")
            if r is not None:
                crlb = f"{r.crlb_rmse:.4g}"
        lines.append(
            f"{cell:>14s}" + "".join(f"{s:>{width + 2}s}" for s in vals) + f"{crlb:>{width + 2}s}"
        )
    return "\n".join(lines) + "\n"


def render_run_records(records: list[RunRecord]) -> str:
    lines = [RUN_CSV_HEADER]
    for r in records:
        lines.append(
            ",".join(
                [
                    r.cell,
                    r.method,
                    str(r.run_index),
                    _fmt(r.pos_error),
                    "1" if r.success else "0",
                    _fmt(r.crlb_bound),
                    r.status,
                    _fmt(r.wall_ms),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def emit_results(
    cells: list[CellResult], path, include_timing: bool = False, summary: bool = True
) -> None:
    """Write the cell CSV and a human-readable summary sidecar."""
    from pathlib import Path

    path = Path(path)
    try:
        path.write_text(render_results(cells, include_timing=include_timing))
        if summary:
            path.with_suffix(path.suffix + ".summary.txt").write_text(
                render_summary(cells)
            )
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def emit_run_records(records: list[RunRecord], path) -> None:
    from pathlib import Path

    path = Path(path)
    try:
        path.write_text(render_run_records(records))
    except OSError as exc:
        raise OSError(f"cannot write per-run dump to {path}: {exc}") from exc


def parse_results(text: str) -> list[CellResult]:
    """Read back a cell CSV produced by :func:`render_results`."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("not a campaign results CSV")
    out = []
    for ln in lines[1:]:
        cell, method, runs, sr, ra, rs, cr, ms, seed = ln.split(",")
        out.append(
            CellResult(
                cell=cell,
                method=method,
                runs=int(runs),
                success_rate=float(sr),
                rmse_all=float(ra),
                rmse_success=float(rs),
                crlb_rmse=float(cr),
                mean_ms=float(ms) if ms else math.nan,
                seed=int(seed),
            )
        )
    return out
