"""Exact rational linear algebra.

Dense matrices over Python's Fraction type.  Dimensions in this domain are
small (dozens at most), so the code favors clarity and exactness over
asymptotics: no floating point appears anywhere.

Bases returned by operations here (nullspace, pushout) are normalized to
reduced row echelon form with no zero rows, so two bases span the same space
iff they are structurally equal.  The empty basis is a 0-row matrix that
still remembers its column count.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple, Union

QQ = Fraction

Scalar = Union[int, Fraction]


def _qq(x: Scalar) -> QQ:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(frozen=True)
class RationalVector:
    """Fixed-length vector over the rationals."""

    entries: Tuple[QQ, ...]

    def __init__(self, entries: Iterable[Scalar]):
        object.__setattr__(self, 'entries', tuple(_qq(x) for x in entries))

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> QQ:
        return self.entries[i]

    def __iter__(self):
        return iter(self.entries)

    def __add__(self, other: 'RationalVector') -> 'RationalVector':
        if len(self) != len(other):
            raise ValueError("vector length mismatch")
        return RationalVector(a + b for a, b in zip(self.entries, other.entries))

    def __sub__(self, other: 'RationalVector') -> 'RationalVector':
        if len(self) != len(other):
            raise ValueError("vector length mismatch")
        return RationalVector(a - b for a, b in zip(self.entries, other.entries))

    def __neg__(self) -> 'RationalVector':
        return RationalVector(-a for a in self.entries)

    def scale(self, c: Scalar) -> 'RationalVector':
        c = _qq(c)
        return RationalVector(c * a for a in self.entries)

    def dot(self, other: 'RationalVector') -> QQ:
        if len(self) != len(other):
            raise ValueError("vector length mismatch")
        return sum((a * b for a, b in zip(self.entries, other.entries)), QQ(0))

    def is_zero(self) -> bool:
        return all(a == 0 for a in self.entries)

    @staticmethod
    def zero(n: int) -> 'RationalVector':
        return RationalVector([QQ(0)] * n)

    @staticmethod
    def unit(i: int, n: int) -> 'RationalVector':
        return RationalVector([QQ(1) if j == i else QQ(0) for j in range(n)])

    def __str__(self) -> str:
        return "(" + ", ".join(str(a) for a in self.entries) + ")"


@dataclass(frozen=True)
class RationalMatrix:
    """Dense row-major matrix over the rationals.

    0xN and Nx0 matrices are representable; they carry their column/row
    counts so empty bases keep their ambient dimension.
    """

    rows: int
    cols: int
    entries: Tuple[QQ, ...]

    def __init__(self, rows: int, cols: int, entries: Iterable[Scalar]):
        entries = tuple(_qq(x) for x in entries)
        if len(entries) != rows * cols:
            raise ValueError(
                "entry count %d does not match %dx%d" % (len(entries), rows, cols))
        object.__setattr__(self, 'rows', rows)
        object.__setattr__(self, 'cols', cols)
        object.__setattr__(self, 'entries', entries)

    @staticmethod
    def from_rows(rows: Sequence[Sequence[Scalar]], cols: Optional[int] = None) -> 'RationalMatrix':
        rows = [list(r) for r in rows]
        if rows:
            width = len(rows[0])
            if cols is not None and cols != width:
                raise ValueError("explicit cols disagrees with row length")
            if any(len(r) != width for r in rows):
                raise ValueError("ragged rows")
            cols = width
        elif cols is None:
            raise ValueError("0-row matrix needs an explicit column count")
        flat = [x for r in rows for x in r]
        return RationalMatrix(len(rows), cols, flat)

    @staticmethod
    def identity(n: int) -> 'RationalMatrix':
        return RationalMatrix(
            n, n, [QQ(1) if i == j else QQ(0) for i in range(n) for j in range(n)])

    @staticmethod
    def zero(rows: int, cols: int) -> 'RationalMatrix':
        return RationalMatrix(rows, cols, [QQ(0)] * (rows * cols))

    def __getitem__(self, ij: Tuple[int, int]) -> QQ:
        i, j = ij
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise IndexError((i, j))
        return self.entries[i * self.cols + j]

    def row(self, i: int) -> RationalVector:
        return RationalVector(self.entries[i * self.cols:(i + 1) * self.cols])

    def row_list(self) -> List[RationalVector]:
        return [self.row(i) for i in range(self.rows)]

    def column(self, j: int) -> RationalVector:
        return RationalVector(self.entries[i * self.cols + j] for i in range(self.rows))

    def transpose(self) -> 'RationalMatrix':
        return RationalMatrix(
            self.cols, self.rows,
            [self.entries[i * self.cols + j]
             for j in range(self.cols) for i in range(self.rows)])

    def mul_vector(self, v: RationalVector) -> RationalVector:
        if len(v) != self.cols:
            raise ValueError("dimension mismatch")
        return RationalVector(self.row(i).dot(v) for i in range(self.rows))

    def __mul__(self, other: 'RationalMatrix') -> 'RationalMatrix':
        if self.cols != other.rows:
            raise ValueError(
                "cannot multiply %dx%d by %dx%d"
                % (self.rows, self.cols, other.rows, other.cols))
        out = []
        for i in range(self.rows):
            for j in range(other.cols):
                acc = QQ(0)
                for k in range(self.cols):
                    acc += self[i, k] * other[k, j]
                out.append(acc)
        return RationalMatrix(self.rows, other.cols, out)

    def __neg__(self) -> 'RationalMatrix':
        return RationalMatrix(self.rows, self.cols, [-x for x in self.entries])

    def stack(self, other: 'RationalMatrix') -> 'RationalMatrix':
        """Vertical concatenation."""
        if self.cols != other.cols:
            raise ValueError("column count mismatch")
        return RationalMatrix(
            self.rows + other.rows, self.cols, self.entries + other.entries)

    def hstack(self, other: 'RationalMatrix') -> 'RationalMatrix':
        if self.rows != other.rows:
            raise ValueError("row count mismatch")
        out = []
        for i in range(self.rows):
            out.extend(self.entries[i * self.cols:(i + 1) * self.cols])
            out.extend(other.entries[i * other.cols:(i + 1) * other.cols])
        return RationalMatrix(self.rows, self.cols + other.cols, out)

    def select_columns(self, js: Sequence[int]) -> 'RationalMatrix':
        out = []
        for i in range(self.rows):
            for j in js:
                out.append(self[i, j])
        return RationalMatrix(self.rows, len(js), out)

    def select_rows(self, idxs: Sequence[int]) -> 'RationalMatrix':
        out = []
        for i in idxs:
            out.extend(self.entries[i * self.cols:(i + 1) * self.cols])
        return RationalMatrix(len(idxs), self.cols, out)

    def is_zero(self) -> bool:
        return all(x == 0 for x in self.entries)

    def __str__(self) -> str:
        if self.rows == 0:
            return "[0x%d]" % self.cols
        lines = []
        for i in range(self.rows):
            lines.append("[" + " ".join(str(self[i, j]) for j in range(self.cols)) + "]")
        return "\n".join(lines)


def rref(m: RationalMatrix) -> Tuple[RationalMatrix, List[int]]:
    """Reduced row echelon form with zero rows dropped.

    Returns (rref matrix, pivot column indices); the result has rank(m) rows.
    """
    work = [list(m.row(i).entries) for i in range(m.rows)]
    pivots: List[int] = []
    r = 0
    for col in range(m.cols):
        pivot_row = None
        for i in range(r, len(work)):
            if work[i][col] != 0:
                pivot_row = i
                break
        if pivot_row is None:
            continue
        work[r], work[pivot_row] = work[pivot_row], work[r]
        inv = QQ(1) / work[r][col]
        work[r] = [x * inv for x in work[r]]
        for i in range(len(work)):
            if i != r and work[i][col] != 0:
                factor = work[i][col]
                work[i] = [a - factor * b for a, b in zip(work[i], work[r])]
        pivots.append(col)
        r += 1
        if r == len(work):
            break
    return RationalMatrix.from_rows(work[:r], cols=m.cols), pivots


def rank(m: RationalMatrix) -> int:
    return rref(m)[0].rows


def nullspace(m: RationalMatrix) -> RationalMatrix:
    """Basis (in rref normal form) of the right kernel { v : m v = 0 }."""
    reduced, pivots = rref(m)
    free_cols = [j for j in range(m.cols) if j not in pivots]
    basis = []
    for j in free_cols:
        v = [QQ(0)] * m.cols
        v[j] = QQ(1)
        for i, pc in enumerate(pivots):
            v[pc] = -reduced[i, j]
        basis.append(v)
    raw = RationalMatrix.from_rows(basis, cols=m.cols)
    return rref(raw)[0]


def left_nullspace(m: RationalMatrix) -> RationalMatrix:
    """Basis (rref) of { t : t m = 0 }."""
    return nullspace(m.transpose())


def pushout(s1: RationalMatrix, s2: RationalMatrix) -> Tuple[RationalMatrix, RationalMatrix]:
    """Basis of the pairs (t1, t2) with t1 s1 = t2 s2.

    Computed as the left nullspace of the stacked matrix [s1; -s2]; the
    combined (t1 | t2) rows are returned in rref normal form, split back
    into a k x rows(s1) and a k x rows(s2) pair.
    """
    if s1.cols != s2.cols:
        raise ValueError("pushout requires equal column counts")
    stacked = s1.stack(-s2)
    combined = left_nullspace(stacked)
    t1 = combined.select_columns(range(s1.rows))
    t2 = combined.select_columns(range(s1.rows, s1.rows + s2.rows))
    return t1, t2


def in_rowspace(v: RationalVector, m: RationalMatrix) -> Optional[RationalVector]:
    """Solve t m = v; returns t, or None when v is outside the rowspace.

    When m's rows are linearly independent the solution is unique; otherwise
    an arbitrary solution (free coordinates zero) is returned.
    """
    if len(v) != m.cols:
        raise ValueError("dimension mismatch")
    # Solve m^T t^T = v^T by reducing the augmented system.
    augmented = m.transpose().hstack(
        RationalMatrix(m.cols, 1, list(v.entries)))
    reduced, pivots = rref(augmented)
    if m.rows in pivots:
        return None  # inconsistent: pivot in the augmented column
    t = [QQ(0)] * m.rows
    for i, pc in enumerate(pivots):
        t[pc] = reduced[i, m.rows]
    return RationalVector(t)
