import numpy as np
import pytest
from numpy.testing import assert_allclose

from twotoa.conic import ConeLayout, ConicProgram, smat, svec, svec_identity
from twotoa.interior_point import (
    IpmSettings,
    SolverStatus,
    residuals,
    solve,
)


def make_program(layout, c, a, b):
    return ConicProgram(layout, np.asarray(c, float), np.asarray(a, float), np.asarray(b, float))


def constructed_program(rng):
    """Random mixed-cone program with a known optimum.

    Sample a strictly complementary primal-dual pair first, then back out the
    data (b = A x*, c = A'y* + s*), so (x*, y*, s*) is optimal by zero gap.
    """
    nf = int(rng.integers(0, 4))
    nl = int(rng.integers(0, 7))
    orders = tuple(int(rng.integers(2, 5)) for _ in range(rng.integers(0, 3)))
    if nl == 0 and not orders:
        nl = 3
    lay = ConeLayout(nf, nl, orders)
    n = lay.n_total
    m = int(rng.integers(max(1, nf + 1), max(nf + 2, n // 2 + 2)))
    x = np.zeros(n)
    s = np.zeros(n)
    x[lay.free_slice] = rng.normal(size=nf)
    xl = np.zeros(nl)
    sl = np.zeros(nl)
    for i in range(nl):
        if rng.random() < 0.5:
            xl[i] = rng.uniform(0.5, 2.0)
        else:
            sl[i] = rng.uniform(0.5, 2.0)
    x[lay.nonneg_slice] = xl
    s[lay.nonneg_slice] = sl
    for order, slc in zip(lay.psd_orders, lay.psd_slices()):
        basis, _ = np.linalg.qr(rng.normal(size=(order, order)))
        lam_x = np.zeros(order)
        lam_s = np.zeros(order)
        for j in range(order):
            if rng.random() < 0.5:
                lam_x[j] = rng.uniform(0.5, 2.0)
            else:
                lam_s[j] = rng.uniform(0.5, 2.0)
        if not lam_x.any():
            lam_x[0], lam_s[0] = 1.0, 0.0
        x[slc] = svec((basis * lam_x) @ basis.T)
        s[slc] = svec((basis * lam_s) @ basis.T)
    a = rng.normal(size=(m, n))
    y = rng.normal(size=m)
    prog = make_program(lay, a.T @ y + s, a, a @ x)
    return prog, (x, y, s), float(prog.objective @ x)


class TestSmallPrograms:
    def test_scalar_psd(self):
        prog = make_program(ConeLayout(0, 0, (1,)), [1.0], [[1.0]], [1.0])
        res = solve(prog)
        assert res.status is SolverStatus.OPTIMAL
        assert res.x[0] == pytest.approx(1.0, abs=1e-6)
        assert res.rel_gap < 1e-7

    def test_trace_bound(self):
        lay = ConeLayout(0, 0, (2,))
        a = np.zeros((2, 3))
        a[0, lay.psd_entry_index(0, 0, 0)] = 1.0
        a[1, lay.psd_entry_index(0, 1, 1)] = 1.0
        prog = make_program(lay, svec_identity(2), a, [1.0, 1.0])
        res = solve(prog)
        assert res.status is SolverStatus.OPTIMAL
        assert prog.objective @ res.x == pytest.approx(2.0, abs=1e-6)
        mat = smat(res.x, 2)
        assert abs(mat[0, 1]) <= 1.0 + 1e-8

    def test_infeasible_lp(self):
        prog = make_program(ConeLayout(0, 1, ()), [1.0], [[1.0]], [-1.0])
        res = solve(prog)
        assert res.status is SolverStatus.INFEASIBLE

    def test_unbounded_lp(self):
        prog = make_program(ConeLayout(1, 1, ()), [3.0, 1.0], [[1.0, 1.0]], [2.0])
        res = solve(prog)
        assert res.status is SolverStatus.INFEASIBLE

    def test_free_variable_must_be_constrained(self):
        prog = make_program(
            ConeLayout(1, 1, ()), [1.0, 1.0], [[0.0, 1.0]], [1.0]
        )
        with pytest.raises(ValueError, match="free variable"):
            solve(prog)

    def test_no_cone_rejected(self):
        prog = make_program(ConeLayout(2, 0, ()), [1.0, 0.0], [[1.0, 1.0]], [1.0])
        with pytest.raises(ValueError, match="conic"):
            solve(prog)


class TestConstructedOptima:
    def test_recovers_known_optimum(self):
        rng = np.random.default_rng(7)
        for _ in range(15):
            prog, _, opt = constructed_program(rng)
            res = solve(prog)
            assert res.status is SolverStatus.OPTIMAL
            err = abs(prog.objective @ res.x - opt) / (1 + abs(opt))
            assert err <= 1e-6
            assert res.rel_gap <= 1e-6
            assert prog.cone_membership_violation(res.x) <= 1e-8


class TestResiduals:
    def test_constructed_pair_is_exact(self):
        rng = np.random.default_rng(21)
        prog, (x, y, s), _ = constructed_program(rng)
        pinf, dinf, gap = residuals(prog, x, y, s)
        assert pinf <= 1e-10 and dinf <= 1e-10 and abs(gap) <= 1e-10

    def test_gap_linear_in_primal(self):
        # b = 0 makes the gap homogeneous: doubling x doubles c'x - b'y.
        lay = ConeLayout(0, 2, ())
        prog = make_program(lay, [1.0, 2.0], [[1.0, -1.0]], [0.0])
        x = np.array([1.0, 1.0])
        y = np.array([0.3])
        s = np.array([0.1, 0.2])
        _, _, gap1 = residuals(prog, x, y, s)
        _, _, gap2 = residuals(prog, 2 * x, y, s)
        assert gap2 == pytest.approx(2 * gap1, rel=1e-14)

    def test_loop_oracle(self):
        # Oracle: recompute every residual norm with explicit python loops.
        rng = np.random.default_rng(5)
        prog, _, _ = constructed_program(rng)
        n = prog.layout.n_total
        m = prog.n_eq
        x = rng.normal(size=n)
        y = rng.normal(size=m)
        s = rng.normal(size=n)
        pinf, dinf, gap = residuals(prog, x, y, s)
        a, b, c = prog.eq_matrix, prog.eq_rhs, prog.objective
        prim = [sum(a[i][j] * x[j] for j in range(n)) - b[i] for i in range(m)]
        dual = [
            sum(a[i][j] * y[i] for i in range(m)) + s[j] - c[j] for j in range(n)
        ]
        norm = lambda v: sum(t * t for t in v) ** 0.5
        bnorm = norm(b)
        cnorm = norm(c)
        assert pinf == pytest.approx(norm(prim) / (1 + bnorm), rel=1e-12)
        assert dinf == pytest.approx(norm(dual) / (1 + cnorm), rel=1e-12)
        want_gap = sum(c[j] * x[j] for j in range(n)) - sum(b[i] * y[i] for i in range(m))
        assert gap == pytest.approx(want_gap, rel=1e-12)


class TestIterateInvariants:
    def test_weak_duality_and_interiority(self):
        rng = np.random.default_rng(33)
        prog, _, _ = constructed_program(rng)
        res = solve(prog, IpmSettings(record_iterates=True))
        assert res.status is SolverStatus.OPTIMAL
        assert len(res.trace) >= 2
        for rec in res.trace:
            scale = 1.0 + abs(rec.primal_obj) + abs(rec.dual_obj)
            assert rec.gap >= -1e-8 * scale  # complementarity never negative
            assert rec.min_eig_x > 0.0
            assert rec.min_eig_s > 0.0

    def test_deterministic_iterates(self):
        rng = np.random.default_rng(11)
        prog, _, _ = constructed_program(rng)
        r1 = solve(prog, IpmSettings(record_iterates=True))
        r2 = solve(prog, IpmSettings(record_iterates=True))
        assert r1.x.tobytes() == r2.x.tobytes()
        assert r1.y.tobytes() == r2.y.tobytes()
        assert [t.gap for t in r1.trace] == [t.gap for t in r2.trace]
        assert [t.step for t in r1.trace] == [t.step for t in r2.trace]


class TestPresolve:
    def test_dependent_row_dropped_with_warning(self):
        lay = ConeLayout(0, 2, ())
        a = np.array([[1.0, 1.0], [2.0, 2.0]])
        prog = make_program(lay, [1.0, 2.0], a, [1.0, 2.0])
        with pytest.warns(RuntimeWarning, match="dependent"):
            res = solve(prog)
        assert res.status is SolverStatus.OPTIMAL
        assert prog.objective @ res.x == pytest.approx(1.0, abs=1e-6)
        assert res.y.shape == (2,)  # dual padded back to the original rows

    def test_inconsistent_dependent_rows_infeasible(self):
        lay = ConeLayout(0, 2, ())
        a = np.array([[1.0, 1.0], [2.0, 2.0]])
        prog = make_program(lay, [1.0, 2.0], a, [1.0, 3.0])
        res = solve(prog)
        assert res.status is SolverStatus.INFEASIBLE


def test_settings_validation():
    with pytest.raises(ValueError):
        IpmSettings(tol_gap=0.5)
    with pytest.raises(ValueError):
        IpmSettings(step_fraction=1.0)
    with pytest.raises(ValueError):
        IpmSettings(max_iter=0)


def test_max_iter_returns_best(table1_anchors=None):
    rng = np.random.default_rng(3)
    prog, _, _ = constructed_program(rng)
    res = solve(prog, IpmSettings(max_iter=2))
    assert res.status is SolverStatus.MAX_ITER
    assert np.all(np.isfinite(res.x))
    assert prog.cone_membership_violation(res.x) <= 1e-8
