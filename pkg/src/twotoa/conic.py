"""Canonical mixed-cone program representation.

A program is ``minimize c'x  subject to  A x = b,  x in K`` where the
variable vector x is laid out as

    [ free block | nonnegative block | svec(S_1) | svec(S_2) | ... ]

and each PSD block S_k is stored in scaled lower-triangular vectorization
(svec): column-major lower triangle with off-diagonal entries multiplied by
sqrt(2), so that <X, Y> = svec(X)'svec(Y) is the plain Euclidean dot product.
"""

from __future__ import annotations

import functools
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch

SQRT2 = float(np.sqrt(2.0))


def svec_dim(order: int) -> int:
    """Length of the scaled vectorization of a symmetric matrix of this order."""
    return order * (order + 1) // 2


@functools.lru_cache(maxsize=None)
def _svec_tables(order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cols, rows = np.triu_indices(order)  # upper triangle by rows == lower by cols
    rows.flags.writeable = False
    cols.flags.writeable = False
    scale = np.where(rows == cols, 1.0, SQRT2)
    scale.flags.writeable = False
    return rows, cols, scale


def svec_indices(order: int) -> tuple[np.ndarray, np.ndarray]:
    """(row, col) index arrays of the lower triangle in svec storage order."""
    rows, cols, _ = _svec_tables(order)
    return rows, cols


def svec_scale(order: int) -> np.ndarray:
    """Per-entry svec scaling: 1 on the diagonal, sqrt(2) off it."""
    return _svec_tables(order)[2]


def svec(mat: np.ndarray) -> np.ndarray:
    """Scaled vectorization of a symmetric matrix."""
    mat = np.asarray(mat, dtype=float)
    rows, cols, scale = _svec_tables(mat.shape[0])
    return mat[rows, cols] * scale


def smat(vec: np.ndarray, order: int) -> np.ndarray:
    """Inverse of :func:`svec`."""
    vec = np.asarray(vec, dtype=float)
    if vec.size != svec_dim(order):
        raise DimensionMismatch(f"svec length {vec.size} does not match order {order}")
    rows, cols, scale = _svec_tables(order)
    entries = vec / scale
    out = np.zeros((order, order))
    out[rows, cols] = entries
    out[cols, rows] = entries
    return out


def svec_entry_index(order: int, i: int, j: int) -> int:
    """Position of matrix entry (i, j) inside the svec of a given order."""
    if not (0 <= i < order and 0 <= j < order):
        raise IndexError(f"entry ({i}, {j}) outside order-{order} block")
    if i < j:
        i, j = j, i
    # Column j starts after the first j columns of the lower triangle.
    return j * order - j * (j - 1) // 2 + (i - j)


def svec_identity(order: int) -> np.ndarray:
    """svec of the identity matrix."""
    return svec(np.eye(order))


@dataclass(frozen=True)
class ConeLayout:
    """Sizes of the free, nonnegative and PSD segments of the variable vector."""

    n_free: int = 0
    n_nonneg: int = 0
    psd_orders: tuple[int, ...] = ()

    def __post_init__(self):
        if self.n_free < 0 or self.n_nonneg < 0 or any(k <= 0 for k in self.psd_orders):
            raise ValueError("segment sizes must be nonnegative, PSD orders positive")
        object.__setattr__(self, "psd_orders", tuple(int(k) for k in self.psd_orders))

    @property
    def n_psd(self) -> int:
        return sum(svec_dim(k) for k in self.psd_orders)

    @property
    def n_cone(self) -> int:
        """Length of the conic (nonnegative + PSD) part."""
        return self.n_nonneg + self.n_psd

    @property
    def n_total(self) -> int:
        return self.n_free + self.n_cone

    @property
    def degree(self) -> int:
        """Barrier degree: one per nonnegative entry plus each PSD order."""
        return self.n_nonneg + sum(self.psd_orders)

    @property
    def free_slice(self) -> slice:
        return slice(0, self.n_free)

    @property
    def nonneg_slice(self) -> slice:
        return slice(self.n_free, self.n_free + self.n_nonneg)

    def psd_slices(self) -> list[slice]:
        out = []
        start = self.n_free + self.n_nonneg
        for k in self.psd_orders:
            out.append(slice(start, start + svec_dim(k)))
            start += svec_dim(k)
        return out

    def psd_entry_index(self, block: int, i: int, j: int) -> int:
        """Flat variable index of entry (i, j) of a PSD block."""
        return self.psd_slices()[block].start + svec_entry_index(
            self.psd_orders[block], i, j
        )


@dataclass(frozen=True, eq=False)
class ConicProgram:
    """Dense data of one mixed-cone program: min c'x s.t. A x = b, x in K."""

    layout: ConeLayout
    objective: np.ndarray  # c, (n,)
    eq_matrix: np.ndarray  # A, (m, n)
    eq_rhs: np.ndarray  # b, (m,)

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float)
        a = np.atleast_2d(np.asarray(self.eq_matrix, dtype=float))
        b = np.atleast_1d(np.asarray(self.eq_rhs, dtype=float))
        n = self.layout.n_total
        if c.shape != (n,):
            raise DimensionMismatch(f"objective length {c.shape} != layout size {n}")
        if a.shape[1] != n:
            raise DimensionMismatch(f"constraint matrix has {a.shape[1]} cols, need {n}")
        if b.shape != (a.shape[0],):
            raise DimensionMismatch("rhs length does not match constraint rows")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "eq_matrix", a)
        object.__setattr__(self, "eq_rhs", b)

    @property
    def n_eq(self) -> int:
        return self.eq_rhs.size

    def cone_membership_violation(self, x: np.ndarray) -> float:
        """Worst violation of the cone constraints at a point (0 if inside)."""
        lay = self.layout
        worst = 0.0
        if lay.n_nonneg:
            worst = max(worst, float(-(x[lay.nonneg_slice].min(initial=np.inf))))
        for order, sl in zip(lay.psd_orders, lay.psd_slices()):
            eigs = np.linalg.eigvalsh(smat(x[sl], order))
            worst = max(worst, float(-eigs[0]))
        return max(worst, 0.0)


def serialize_program(program: ConicProgram) -> str:
    """Text form of a program (triplet constraint matrix), for offline debugging.

    Format, one record per line::

        conic-program v1
        free <n_free>
        nonneg <n_nonneg>
        psd <order> ... (omitted when there is no PSD block)
        objective <nnz> followed by "<index> <value>" lines
        rhs <m> followed by "<row> <value>" lines (nonzeros only)
        triplets <nnz> followed by "<row> <col> <value>" lines
        end
    """
    buf = io.StringIO()
    lay = program.layout
    buf.write("conic-program v1\n")
    buf.write(f"free {lay.n_free}\n")
    buf.write(f"nonneg {lay.n_nonneg}\n")
    if lay.psd_orders:
        buf.write("psd " + " ".join(str(k) for k in lay.psd_orders) + "\n")
    c = program.objective
    nz = np.nonzero(c)[0]
    buf.write(f"objective {nz.size}\n")
    for i in nz:
        buf.write(f"{i} {float(c[i])!r}\n")
    b = program.eq_rhs
    nzb = np.nonzero(b)[0]
    buf.write(f"rhs {b.size} {nzb.size}\n")
    for i in nzb:
        buf.write(f"{i} {float(b[i])!r}\n")
    rows, cols = np.nonzero(program.eq_matrix)
    buf.write(f"triplets {rows.size}\n")
    for r, cidx in zip(rows, cols):
        buf.write(f"{r} {cidx} {float(program.eq_matrix[r, cidx])!r}\n")
    buf.write("end\n")
    return buf.getvalue()


def parse_program(text: str) -> ConicProgram:
    """Parse the output of :func:`serialize_program`."""
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    it = iter(lines)
    if next(it) != "conic-program v1":
        raise ValueError("not a conic-program v1 stream")
    n_free = n_nonneg = 0
    psd: tuple[int, ...] = ()
    c = b = None
    trips: list[tuple[int, int, float]] = []
    m = 0
    for line in it:
        head, *rest = line.split()
        if head == "free":
            n_free = int(rest[0])
        elif head == "nonneg":
            n_nonneg = int(rest[0])
        elif head == "psd":
            psd = tuple(int(k) for k in rest)
        elif head == "objective":
            layout = ConeLayout(n_free, n_nonneg, psd)
            c = np.zeros(layout.n_total)
            for _ in range(int(rest[0])):
                i, v = next(it).split()
                c[int(i)] = float(v)
        elif head == "rhs":
            m = int(rest[0])
            b = np.zeros(m)
            for _ in range(int(rest[1])):
                i, v = next(it).split()
                b[int(i)] = float(v)
        elif head == "triplets":
            for _ in range(int(rest[0])):
                r, cc, v = next(it).split()
                trips.append((int(r), int(cc), float(v)))
        elif head == "end":
            break
        else:
            raise ValueError(f"unknown record {head!r}")
    if c is None or b is None:
        raise ValueError("stream is missing the objective or rhs record")
    layout = ConeLayout(n_free, n_nonneg, psd)
    a = np.zeros((m, layout.n_total))
    for r, cc, v in trips:
        a[r, cc] = v
    return ConicProgram(layout=layout, objective=c, eq_matrix=a, eq_rhs=b)
