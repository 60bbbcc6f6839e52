import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from twotoa.conic import (
    ConeLayout,
    ConicProgram,
    parse_program,
    serialize_program,
    smat,
    svec,
    svec_dim,
    svec_entry_index,
    svec_identity,
)
from twotoa.errors import DimensionMismatch


@settings(max_examples=100, deadline=None)
@given(order=st.integers(1, 8), seed=st.integers(0, 10_000))
def test_svec_roundtrip_and_inner_product(order, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(order, order))
    a = a + a.T
    b = rng.normal(size=(order, order))
    b = b + b.T
    assert_allclose(smat(svec(a), order), a, rtol=0, atol=1e-14)
    assert svec(a) @ svec(b) == pytest.approx(np.sum(a * b), rel=1e-12)


def test_svec_entry_index_covers_block():
    order = 5
    seen = set()
    for i in range(order):
        for j in range(i + 1):
            seen.add(svec_entry_index(order, i, j))
    assert seen == set(range(svec_dim(order)))
    assert svec_entry_index(order, 1, 3) == svec_entry_index(order, 3, 1)
    vec = np.arange(svec_dim(order), dtype=float)
    mat = smat(vec, order)
    k = svec_entry_index(order, 2, 2)
    assert mat[2, 2] == vec[k]


def test_layout_segments():
    lay = ConeLayout(3, 4, (2, 3))
    assert lay.n_total == 3 + 4 + 3 + 6
    assert lay.degree == 4 + 2 + 3
    assert lay.free_slice == slice(0, 3)
    assert lay.nonneg_slice == slice(3, 7)
    s1, s2 = lay.psd_slices()
    assert (s1.start, s1.stop) == (7, 10)
    assert (s2.start, s2.stop) == (10, 16)
    assert lay.psd_entry_index(1, 0, 0) == 10
    with pytest.raises(ValueError):
        ConeLayout(-1, 0, ())


def test_program_validation():
    lay = ConeLayout(0, 2, ())
    with pytest.raises(DimensionMismatch):
        ConicProgram(lay, np.zeros(3), np.zeros((1, 2)), np.zeros(1))
    with pytest.raises(DimensionMismatch):
        ConicProgram(lay, np.zeros(2), np.zeros((1, 2)), np.zeros(2))


def test_cone_membership_violation():
    lay = ConeLayout(1, 1, (2,))
    prog = ConicProgram(lay, np.zeros(lay.n_total), np.zeros((1, lay.n_total)), np.zeros(1))
    x = np.zeros(lay.n_total)
    x[1] = -0.25
    x[lay.psd_slices()[0]] = svec_identity(2)
    assert prog.cone_membership_violation(x) == pytest.approx(0.25)
    x[1] = 1.0
    assert prog.cone_membership_violation(x) == 0.0


def test_serialize_roundtrip_bit_exact():
    rng = np.random.default_rng(17)
    lay = ConeLayout(2, 3, (2, 4))
    n = lay.n_total
    a = rng.normal(size=(5, n))
    a[np.abs(a) < 0.7] = 0.0  # leave genuine sparsity
    prog = ConicProgram(lay, rng.normal(size=n), a, rng.normal(size=5))
    text = serialize_program(prog)
    back = parse_program(text)
    assert back.layout == prog.layout
    assert back.objective.tobytes() == prog.objective.tobytes()
    assert back.eq_matrix.tobytes() == prog.eq_matrix.tobytes()
    assert back.eq_rhs.tobytes() == prog.eq_rhs.tobytes()


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        parse_program("not a program")
