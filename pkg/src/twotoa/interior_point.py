"""Primal-dual interior-point solver for small dense mixed-cone programs.

Solves  min c'x  s.t.  A x = b,  x in K  with K = R^nf x R+^nl x PSD blocks,
together with its dual, by an infeasible-start path-following iteration:

* Nesterov-Todd scaling of the nonnegative and PSD parts, so primal and dual
  map to the same scaled point lambda;
* Mehrotra predictor-corrector steps with a single KKT factorization per
  iteration;
* free variables kept natively in the (quasi-definite) KKT system

      [ 0    Af' ] [dx_f]   [ rd_f ]
      [ Af   S   ] [dy  ] = [ rp - Ac*W(d3 - W'(rd_c)) ],   S = Ac H Ac',

  which avoids the ill-conditioned split into differences of nonnegatives.

Everything is dense: the target workload has PSD blocks of order <= ~20 and
a few dozen equality rows, solved thousands of times in a Monte-Carlo loop.
All linear algebra is deterministic (no randomized pivoting), so identical
inputs yield bit-identical iterate sequences.
"""

from __future__ import annotations

import enum
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .conic import ConeLayout, ConicProgram, smat, svec, svec_identity
from .errors import DimensionMismatch

_STALL_STEP = 1e-10


class SolverStatus(enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITER = "max_iter"
    NUMERICAL_FAILURE = "numerical_failure"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class IpmSettings:
    """Interior-point termination and stepping controls."""

    max_iter: int = 50
    tol_gap: float = 1e-7  # relative complementarity gap
    tol_feas: float = 1e-7  # relative primal/dual infeasibility
    step_fraction: float = 0.98  # fraction of the step to the cone boundary
    verbose: bool = False
    record_iterates: bool = False

    def __post_init__(self):
        if not (0 < self.tol_gap <= 1e-2 and 0 < self.tol_feas <= 1e-2):
            raise ValueError("tolerances must lie in (0, 1e-2]")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class IterRecord:
    """State at the top of one iteration plus the step taken from it."""

    iteration: int
    primal_obj: float
    dual_obj: float
    gap: float
    rel_gap: float
    primal_infeas: float
    dual_infeas: float
    sigma: float | None = None
    step: float | None = None
    min_eig_x: float | None = None
    min_eig_s: float | None = None


@dataclass
class IpmResult:
    """Solver outcome: points, status and certificates of accuracy."""

    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    status: SolverStatus
    rel_gap: float
    primal_infeas: float
    dual_infeas: float
    iterations: int
    wall_time: float
    trace: list[IterRecord] = field(default_factory=list)
    message: str = ""


def residuals(program: ConicProgram, x, y, s) -> tuple[float, float, float]:
    """Standard KKT residuals of a primal-dual point.

    Returns (primal infeasibility, dual infeasibility, duality gap) with the
    infeasibilities relative to 1 + the norm of the corresponding data and the
    gap kept absolute: gap = c'x - b'y, which is linear in the primal point at
    a fixed dual.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    a, b, c = program.eq_matrix, program.eq_rhs, program.objective
    if x.shape != c.shape or s.shape != c.shape or y.shape != b.shape:
        raise DimensionMismatch("point does not match program dimensions")
    pinf = float(np.linalg.norm(a @ x - b) / (1.0 + np.linalg.norm(b)))
    dinf = float(np.linalg.norm(a.T @ y + s - c) / (1.0 + np.linalg.norm(c)))
    gap = float(c @ x - b @ y)
    return pinf, dinf, gap


def _presolve(
    a: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Drop linearly dependent equality rows; flag inconsistent ones.

    Returns (A, b, kept row indices, infeasible).  Kept rows preserve their
    original order.
    """
    m = a.shape[0]
    if m == 0:
        return a, b, np.arange(0), False
    # Fast path: a clean Cholesky of A A' certifies full row rank.
    gram = a @ a.T
    try:
        chol = np.linalg.cholesky(gram + 0.0)
        if np.min(np.diag(chol)) > 1e-7 * max(1.0, np.max(np.diag(chol))):
            return a, b, np.arange(m), False
    except np.linalg.LinAlgError:
        pass
    _, r, piv = scipy.linalg.qr(a.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(a.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank == m:
        return a, b, np.arange(m), False
    keep = np.sort(piv[:rank])
    drop = np.sort(piv[rank:])
    # Dependent rows must carry consistent right-hand sides.
    coef, *_ = np.linalg.lstsq(a[keep].T, a[drop].T, rcond=None)
    mismatch = np.abs(b[drop] - coef.T @ b[keep])
    scale = 1.0 + np.abs(b).max(initial=0.0)
    if np.any(mismatch > 1e-8 * scale):
        return a[keep], b[keep], keep, True
    warnings.warn(
        f"dropped {m - rank} linearly dependent equality row(s) during presolve",
        RuntimeWarning,
        stacklevel=3,
    )
    return a[keep], b[keep], keep, False


class _Scaling:
    """Nesterov-Todd scaling of the cone part at one iterate.

    For the nonnegative block w = sqrt(x/s); for each PSD block the factor r
    satisfies r^-1 X r^-T = r' S r = diag(lam), computed from the Cholesky
    factors of X and S and one SVD.  Cone-space vectors passed to the apply
    methods are the concatenation [nonneg | svec blocks].
    """

    def __init__(self, x: np.ndarray, s: np.ndarray, layout: ConeLayout):
        self.layout = layout
        nf = layout.n_free
        self.nonneg = slice(layout.nonneg_slice.start - nf, layout.nonneg_slice.stop - nf)
        self.blocks = [
            (k, slice(sl.start - nf, sl.stop - nf))
            for k, sl in zip(layout.psd_orders, layout.psd_slices())
        ]
        xl = x[layout.nonneg_slice]
        sl_ = s[layout.nonneg_slice]
        self.w = np.sqrt(xl / sl_)
        lam_parts = [np.sqrt(xl * sl_)]
        self.r: list[np.ndarray] = []
        self.rti: list[np.ndarray] = []
        self.lam_blocks: list[np.ndarray] = []
        for k, sl in zip(layout.psd_orders, layout.psd_slices()):
            xm = smat(x[sl], k)
            sm = smat(s[sl], k)
            l1 = np.linalg.cholesky(xm)
            l2 = np.linalg.cholesky(sm)
            u, sv, vt = np.linalg.svd(l2.T @ l1)
            isv = 1.0 / np.sqrt(sv)
            r = l1 @ (vt.T * isv)
            rti = l2 @ (u * isv)
            self.r.append(r)
            self.rti.append(rti)
            self.lam_blocks.append(sv)
            lam_mat = np.zeros((k, k))
            np.fill_diagonal(lam_mat, sv)
            lam_parts.append(svec(lam_mat))
        self.lam = np.concatenate(lam_parts)

    # -- cone-space linear operators -------------------------------------
    def apply_w(self, u: np.ndarray) -> np.ndarray:
        """x-side scaling: free of cone, maps scaled point to primal."""
        out = np.empty_like(u)
        out[self.nonneg] = self.w * u[self.nonneg]
        for (k, sl), r in zip(self.blocks, self.r):
            out[sl] = svec(r @ smat(u[sl], k) @ r.T)
        return out

    def apply_wt(self, u: np.ndarray) -> np.ndarray:
        """s-side scaling: maps a dual-side vector into scaled space."""
        out = np.empty_like(u)
        out[self.nonneg] = self.w * u[self.nonneg]
        for (k, sl), r in zip(self.blocks, self.r):
            out[sl] = svec(r.T @ smat(u[sl], k) @ r)
        return out

    def jprod_scaled(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Jordan product in scaled space: elementwise / symmetrized product."""
        out = np.empty_like(u)
        out[self.nonneg] = u[self.nonneg] * v[self.nonneg]
        for k, sl in self.blocks:
            um = smat(u[sl], k)
            vm = smat(v[sl], k)
            out[sl] = svec(0.5 * (um @ vm + vm @ um))
        return out

    def jdiv_lambda(self, u: np.ndarray) -> np.ndarray:
        """Solve lam o w = u for w (lam is diagonal in scaled space)."""
        out = np.empty_like(u)
        out[self.nonneg] = u[self.nonneg] / self.lam[self.nonneg]
        for (k, sl), lam in zip(self.blocks, self.lam_blocks):
            denom = 0.5 * np.add.outer(lam, lam)
            out[sl] = svec(smat(u[sl], k) / denom)
        return out

    def identity(self) -> np.ndarray:
        parts = [np.ones(self.nonneg.stop - self.nonneg.start)]
        parts += [svec_identity(k) for k, _ in self.blocks]
        return np.concatenate(parts)

    def max_step(self, d: np.ndarray) -> float:
        """Largest alpha with lam + alpha*d staying in the cone (scaled space)."""
        alpha = np.inf
        dl = d[self.nonneg]
        lam_l = self.lam[self.nonneg]
        neg = dl < 0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-lam_l[neg] / dl[neg])))
        for (k, sl), lam in zip(self.blocks, self.lam_blocks):
            scaled = smat(d[sl], k) / np.sqrt(np.outer(lam, lam))
            emin = float(np.linalg.eigvalsh(scaled)[0])
            if emin < 0:
                alpha = min(alpha, -1.0 / emin)
        return alpha


def _min_cone_eigs(x: np.ndarray, layout: ConeLayout) -> float:
    vals = [np.inf]
    if layout.n_nonneg:
        vals.append(float(np.min(x[layout.nonneg_slice])))
    for k, sl in zip(layout.psd_orders, layout.psd_slices()):
        vals.append(float(np.linalg.eigvalsh(smat(x[sl], k))[0]))
    return min(vals)


def _project_cone(x: np.ndarray, layout: ConeLayout) -> np.ndarray:
    """Clip tiny negative parts so the returned point is inside the cone."""
    out = x.copy()
    if layout.n_nonneg:
        out[layout.nonneg_slice] = np.maximum(out[layout.nonneg_slice], 0.0)
    for k, sl in zip(layout.psd_orders, layout.psd_slices()):
        mat = smat(out[sl], k)
        eigs, vecs = np.linalg.eigh(mat)
        if eigs[0] < 0:
            out[sl] = svec((vecs * np.maximum(eigs, 0.0)) @ vecs.T)
    return out


def solve(program: ConicProgram, settings: IpmSettings | None = None) -> IpmResult:
    """Run the predictor-corrector iteration on one program.

    The returned primal point is strictly feasible for the cone (iterates
    never touch the boundary; a final clip guards against round-off).  On
    ``MAX_ITER`` or ``NUMERICAL_FAILURE`` the best iterate seen so far is
    returned along with its residuals.
    """
    settings = settings or IpmSettings()
    lay = program.layout
    if lay.n_cone == 0:
        raise ValueError("program has no conic part; nothing for the barrier to do")
    t0 = time.perf_counter()

    a, b, kept_rows, presolve_infeasible = _presolve(program.eq_matrix, program.eq_rhs)
    c = program.objective
    n = lay.n_total
    m = a.shape[0]
    m_orig = program.n_eq
    nf = lay.n_free
    cone = slice(nf, n)
    af = a[:, :nf]
    an = a[:, lay.nonneg_slice]
    if nf and m and not np.all(np.any(af != 0.0, axis=0)):
        raise ValueError("every free variable must appear in an equality row")

    def finish(x, y, s, status, it, msg=""):
        y_full = np.zeros(m_orig)
        y_full[kept_rows] = y
        pinf, dinf, _ = residuals(program, x, y_full, s)
        gap = float(x[cone] @ s[cone])
        relgap = gap / (1.0 + abs(c @ x) + abs(b @ y)) if m else gap
        return IpmResult(
            x=_project_cone(x, lay),
            y=y_full,
            s=s,
            status=status,
            rel_gap=relgap,
            primal_infeas=pinf,
            dual_infeas=dinf,
            iterations=it,
            wall_time=time.perf_counter() - t0,
            trace=trace,
            message=msg,
        )

    trace: list[IterRecord] = []
    if presolve_infeasible:
        zero = np.zeros(n)
        return finish(zero, np.zeros(m), zero, SolverStatus.INFEASIBLE, 0,
                      "inconsistent dependent equality rows")

    # Pre-extract each PSD block of A as stacked symmetric matrices, and
    # cache the svec index/scale arrays per block.
    blocks = list(zip(lay.psd_orders, lay.psd_slices()))
    a_mats = [
        np.stack([smat(row, k) for row in a[:, sl]]) if m else np.zeros((0, k, k))
        for k, sl in blocks
    ]
    tril_cache = {}
    for k, _ in blocks:
        if k not in tril_cache:
            rows, cols = np.tril_indices(k)
            tril_cache[k] = (rows, cols, np.where(rows == cols, 1.0, np.sqrt(2.0)))

    # Identity-scaled interior start, magnitudes matched to the data norms.
    xi = max(1.0, float(np.abs(b).max(initial=0.0)))
    eta = max(1.0, float(np.abs(c).max(initial=0.0)))
    x = np.zeros(n)
    s = np.zeros(n)
    x[lay.nonneg_slice] = xi
    s[lay.nonneg_slice] = eta
    for k, sl in blocks:
        x[sl] = svec_identity(k) * xi
        s[sl] = svec_identity(k) * eta
    y = np.zeros(m)

    nu = lay.degree
    best = (x.copy(), y.copy(), s.copy())
    best_err = np.inf
    best_it = 0

    for it in range(settings.max_iter + 1):
        rp = b - a @ x
        rd = c - a.T @ y - s
        gap = float(x[cone] @ s[cone])
        pobj = float(c @ x)
        dobj = float(b @ y)
        pinf = float(np.linalg.norm(rp) / (1.0 + np.linalg.norm(b)))
        dinf = float(np.linalg.norm(rd) / (1.0 + np.linalg.norm(c)))
        relgap = gap / (1.0 + abs(pobj) + abs(dobj))

        rec = IterRecord(it, pobj, dobj, gap, relgap, pinf, dinf)
        if settings.record_iterates:
            rec.min_eig_x = _min_cone_eigs(x, lay)
            rec.min_eig_s = _min_cone_eigs(s, lay)
            trace.append(rec)
        if settings.verbose:
            print(f"ipm iter {it:3d}  gap {gap:10.3e}  relgap {relgap:9.2e}  "
                  f"pinf {pinf:9.2e}  dinf {dinf:9.2e}")

        err = max(pinf, dinf, relgap)
        if err < best_err:
            best = (x.copy(), y.copy(), s.copy())
            best_err = err
            best_it = it
        if pinf <= settings.tol_feas and dinf <= settings.tol_feas and relgap <= settings.tol_gap:
            return finish(x, y, s, SolverStatus.OPTIMAL, it)

        # Standard ray certificates of primal/dual infeasibility.
        by = float(b @ y)
        if by > 0 and np.linalg.norm(a.T @ y + s) <= settings.tol_feas * by:
            return finish(x, y, s, SolverStatus.INFEASIBLE, it,
                          "dual ray: primal problem infeasible")
        cx = float(c @ x)
        if cx < 0 and np.linalg.norm(a @ x) <= settings.tol_feas * (-cx):
            return finish(x, y, s, SolverStatus.INFEASIBLE, it,
                          "primal ray: dual problem infeasible (primal unbounded)")

        if it == settings.max_iter:
            return finish(*best, SolverStatus.MAX_ITER, best_it)

        try:
            scal = _Scaling(x, s, lay)
        except np.linalg.LinAlgError:
            return finish(*best, SolverStatus.NUMERICAL_FAILURE, best_it,
                          "cone factorization broke down")
        mu = gap / nu

        # Schur complement S = Ac H Ac' assembled from per-block factors.
        schur = np.zeros((m, m))
        if lay.n_nonneg:
            anw = an * scal.w
            schur += anw @ anw.T
        u_rows: list[np.ndarray] = []
        for (k, sl), mats, r in zip(blocks, a_mats, scal.r):
            t = (r.T @ mats) @ r  # (m, k, k)
            rows, cols, scale = tril_cache[k]
            u = t[:, rows, cols] * scale
            u_rows.append(u)
            schur += u @ u.T

        kkt = np.zeros((nf + m, nf + m))
        kkt[:nf, nf:] = af.T
        kkt[nf:, :nf] = af
        kkt[nf:, nf:] = schur
        lu = None
        for delta in (0.0, 1e-12 * (1.0 + np.abs(schur).max(initial=0.0))):
            kr = kkt.copy()
            if delta:
                kr[:nf, :nf] -= delta * np.eye(nf)
                kr[nf:, nf:] += delta * np.eye(m)
            try:
                lu = scipy.linalg.lu_factor(kr)
                break
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
                continue
        if lu is None:
            return finish(*best, SolverStatus.NUMERICAL_FAILURE, best_it,
                          "KKT factorization failed")

        rd_cone = rd[cone]
        wt_rd = scal.apply_wt(rd_cone)

        def direction(d3):
            v = d3 - wt_rd
            rhs_eq = rp.copy()
            if lay.n_nonneg:
                rhs_eq -= an @ (scal.w * v[scal.nonneg])
            for (k, sl), u in zip(scal.blocks, u_rows):
                # u rows are svec(r' M_i r); dot with svec(V) gives Ac W(v).
                vm = smat(v[sl], k)
                rows, cols, scale = tril_cache[k]
                rhs_eq -= u @ (vm[rows, cols] * scale)
            rhs = np.concatenate([rd[:nf], rhs_eq])
            sol = scipy.linalg.lu_solve(lu, rhs)
            # Iterative refinement: the KKT system turns severely
            # ill-conditioned near convergence and a few cheap passes buy
            # several digits in the extracted solution.
            rhs_scale = 1.0 + np.linalg.norm(rhs)
            for _ in range(3):
                resid = rhs - kkt @ sol
                if np.linalg.norm(resid) <= 1e-14 * rhs_scale:
                    break
                sol += scipy.linalg.lu_solve(lu, resid)
            dxf = sol[:nf]
            dy = sol[nf:]
            ds_c = rd_cone - a[:, cone].T @ dy
            dst = scal.apply_wt(ds_c)
            dxt = d3 - dst
            dx = np.concatenate([dxf, scal.apply_w(dxt)])
            return dx, dy, ds_c, dxt, dst

        # Predictor: pure affine step toward the solution.
        d3_aff = -scal.lam
        try:
            dx_a, dy_a, ds_a, dxt_a, dst_a = direction(d3_aff)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            return finish(*best, SolverStatus.NUMERICAL_FAILURE, best_it,
                          "affine direction solve failed")
        if not np.all(np.isfinite(dx_a)):
            return finish(*best, SolverStatus.NUMERICAL_FAILURE, best_it,
                          "affine direction not finite")
        alpha_aff = min(1.0, scal.max_step(dxt_a), scal.max_step(dst_a))
        gap_aff = float((scal.lam + alpha_aff * dxt_a) @ (scal.lam + alpha_aff * dst_a))
        sigma = min(1.0, max(0.0, gap_aff / gap)) ** 3

        # Corrector: recenters and compensates the second-order term.
        target = sigma * mu * scal.identity()
        target -= scal.jprod_scaled(scal.lam, scal.lam)
        target -= scal.jprod_scaled(dxt_a, dst_a)
        d3 = scal.jdiv_lambda(target)
        dx, dy, ds_c, dxt, dst = direction(d3)
        if not np.all(np.isfinite(dx)):
            return finish(*best, SolverStatus.NUMERICAL_FAILURE, best_it,
                          "combined direction not finite")

        alpha = min(
            1.0,
            settings.step_fraction * scal.max_step(dxt),
            settings.step_fraction * scal.max_step(dst),
        )
        rec.sigma = sigma
        rec.step = alpha
        if settings.verbose:
            print(f"          sigma {sigma:8.2e}  step {alpha:8.2e}")
        if alpha < _STALL_STEP:
            return finish(*best, SolverStatus.NUMERICAL_FAILURE, best_it,
                          "step length collapsed")
        x = x + alpha * dx
        y = y + alpha * dy
        s = s.copy()
        s[cone] += alpha * ds_c

    # Unreachable: the loop always returns.
    raise AssertionError("interior-point loop exited without a status")
