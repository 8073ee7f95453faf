"""Exact rational linear algebra.

Everything downstream (trace dimensions, law counts, canonical bases) is an
integer-valued rank question, so nothing here touches floating point.

Two entry styles are provided:

* :class:`RatMatrix` with :func:`rank`, :func:`rref` and :func:`nullspace`
  for small dense matrices. :func:`rank` uses Bareiss fraction-free
  elimination on an integer-scaled copy, choosing the pivot of largest
  absolute value in each column.
* :func:`sparse_rref`, :func:`sparse_rank` and :func:`sparse_nullspace` for
  the large, very sparse systems produced by flattening polynomial vector
  fields or polynomial constraint equations. Rows are ``{column: value}``
  dicts and elimination is carried out on primitive integer rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd, lcm
from numbers import Rational as _RationalABC
from typing import Iterable, Mapping, Sequence

Rational = Fraction
SparseRow = Mapping[int, "int | Fraction"]

__all__ = [
    "Rational",
    "RatMatrix",
    "canon",
    "rank",
    "rref",
    "nullspace",
    "sparse_rref",
    "sparse_rank",
    "sparse_nullspace",
    "primitive",
]


def canon(x) -> int | Fraction:
    """Return ``x`` as an ``int`` when integral, else as a reduced Fraction.

    Fractions are always reduced with a positive denominator, so this is the
    canonical form used for every stored coefficient.
    """
    if isinstance(x, int):
        return x
    if isinstance(x, Fraction):
        return x.numerator if x.denominator == 1 else x
    if isinstance(x, _RationalABC):
        f = Fraction(x.numerator, x.denominator)
        return f.numerator if f.denominator == 1 else f
    if isinstance(x, str):
        return canon(Fraction(x))
    raise TypeError(f"not an exact rational: {x!r}")


def _den(x) -> int:
    return x.denominator if isinstance(x, Fraction) else 1


def _to_int_row(values: Sequence) -> list[int]:
    m = 1
    for v in values:
        if isinstance(v, Fraction):
            m = lcm(m, v.denominator)
    if m == 1:
        return [int(v) for v in values]
    return [int(v * m) for v in values]


@dataclass(frozen=True)
class RatMatrix:
    """Dense row-major matrix of exact rationals."""

    rows: int
    cols: int
    entries: tuple

    def __post_init__(self):
        if len(self.entries) != self.rows * self.cols:
            raise ValueError(
                f"entries length {len(self.entries)} != {self.rows}x{self.cols}"
            )

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence], cols: int | None = None) -> "RatMatrix":
        rows = [list(r) for r in rows]
        if cols is None:
            cols = len(rows[0]) if rows else 0
        for r in rows:
            if len(r) != cols:
                raise ValueError("ragged rows")
        entries = tuple(canon(v) for r in rows for v in r)
        return cls(len(rows), cols, entries)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "RatMatrix":
        return cls(rows, cols, (0,) * (rows * cols))

    @classmethod
    def identity(cls, n: int) -> "RatMatrix":
        return cls(n, n, tuple(int(i == j) for i in range(n) for j in range(n)))

    def __getitem__(self, ij: tuple[int, int]):
        i, j = ij
        return self.entries[i * self.cols + j]

    def row(self, i: int) -> tuple:
        return self.entries[i * self.cols:(i + 1) * self.cols]

    def to_rows(self) -> list[list]:
        return [list(self.row(i)) for i in range(self.rows)]

    def transpose(self) -> "RatMatrix":
        return RatMatrix(
            self.cols,
            self.rows,
            tuple(self[i, j] for j in range(self.cols) for i in range(self.rows)),
        )

    def matvec(self, v: Sequence) -> list:
        if len(v) != self.cols:
            raise ValueError("dimension mismatch")
        return [canon(sum(a * b for a, b in zip(self.row(i), v))) for i in range(self.rows)]


def _bareiss_rank(a: list[list[int]]) -> int:
    """Rank of an integer matrix; ``a`` is destroyed."""
    if not a:
        return 0
    nrows, ncols = len(a), len(a[0])
    r = 0
    prev = 1
    for c in range(ncols):
        if r == nrows:
            break
        piv, best = -1, 0
        for i in range(r, nrows):
            v = abs(a[i][c])
            if v > best:
                piv, best = i, v
        if piv < 0:
            continue
        if piv != r:
            a[r], a[piv] = a[piv], a[r]
        prow = a[r]
        p = prow[c]
        for i in range(r + 1, nrows):
            row = a[i]
            f = row[c]
            if f == 0:
                if p != prev:
                    for j in range(c + 1, ncols):
                        row[j] = row[j] * p // prev
                continue
            for j in range(c + 1, ncols):
                row[j] = (p * row[j] - f * prow[j]) // prev
            row[c] = 0
        prev = p
        r += 1
    return r


def rank(m: RatMatrix) -> int:
    """Exact rank over the rationals (0 for empty matrices)."""
    if m.rows == 0 or m.cols == 0:
        return 0
    # orient so the elimination runs over the shorter dimension
    if m.rows > m.cols:
        m = m.transpose()
    a = [_to_int_row(m.row(i)) for i in range(m.rows)]
    return _bareiss_rank(a)


def rank_of_rows(rows: Sequence[Sequence]) -> int:
    """Rank of a matrix given as a list of rows of rationals."""
    rows = [list(r) for r in rows if any(v != 0 for v in r)]
    if not rows:
        return 0
    if len(rows) > len(rows[0]):
        rows = [list(c) for c in zip(*rows)]
    return _bareiss_rank([_to_int_row(r) for r in rows])


def rref(m: RatMatrix) -> RatMatrix:
    """Reduced row echelon form; zero rows are kept at the bottom."""
    reduced = sparse_rref(
        ({j: v for j, v in enumerate(m.row(i)) if v != 0} for i in range(m.rows)),
        m.cols,
    )
    out = []
    for r in reduced:
        dense = [0] * m.cols
        for j, v in r.items():
            dense[j] = v
        out.append(dense)
    out.extend([0] * m.cols for _ in range(m.rows - len(reduced)))
    return RatMatrix.from_rows(out, m.cols)


def nullspace(m: RatMatrix) -> list[list[int]]:
    """Basis of the right kernel.

    Vectors are primitive integer vectors with positive leading entry, and
    together they form a reduced echelon basis of the kernel (up to the
    per-row integer scaling).
    """
    rows = ({j: v for j, v in enumerate(m.row(i)) if v != 0} for i in range(m.rows))
    out = []
    for vec in sparse_nullspace(rows, m.cols):
        dense = [0] * m.cols
        for j, v in vec.items():
            dense[j] = v
        out.append(dense)
    return out


# -- sparse engine --------------------------------------------------------


def primitive(row: Mapping[int, int]) -> dict[int, int]:
    """Divide an integer row by its content; leading entry made positive."""
    g = 0
    for v in row.values():
        g = gcd(g, v)
        if g == 1:
            break
    if g == 0:
        return {}
    lead = row[min(row)]
    if lead < 0:
        g = -g
    if g == 1:
        return dict(row)
    return {k: v // g for k, v in row.items()}


def _int_sparse(row: SparseRow) -> dict[int, int]:
    m = 1
    for v in row.values():
        if isinstance(v, Fraction):
            m = lcm(m, v.denominator)
    if m == 1:
        return {k: int(v) for k, v in row.items() if v != 0}
    return {k: int(v * m) for k, v in row.items() if v != 0}


def _eliminate(row: dict[int, int], prow: dict[int, int], col: int) -> dict[int, int]:
    """Cancel ``col`` in ``row`` using ``prow`` (both integer rows)."""
    a = prow[col]
    b = row[col]
    g = gcd(a, b)
    ma, mb = a // g, b // g
    if ma != 1:
        if ma == -1:
            out = {k: -v for k, v in row.items()}
        else:
            out = {k: v * ma for k, v in row.items()}
    else:
        out = dict(row)
    for k, v in prow.items():
        nv = out.get(k, 0) - mb * v
        if nv:
            out[k] = nv
        else:
            out.pop(k, None)
    return out


class _Echelon:
    """Incremental integer row echelon form keyed by pivot column."""

    def __init__(self):
        self.pivots: dict[int, dict[int, int]] = {}

    def reduce(self, row: dict[int, int]) -> dict[int, int]:
        pivots = self.pivots
        last = -1
        while row:
            cands = [k for k in row if k > last and k in pivots]
            if not cands:
                break
            c = min(cands)
            row = _eliminate(row, pivots[c], c)
            last = c
        return primitive(row) if row else row

    def add(self, row: SparseRow) -> bool:
        """Insert a row; return True if it increased the rank."""
        r = self.reduce(_int_sparse(row))
        if not r:
            return False
        self.pivots[min(r)] = r
        return True

    def contains(self, row: SparseRow) -> bool:
        return not self.reduce(_int_sparse(row))

    @property
    def rank(self) -> int:
        return len(self.pivots)

    def reduced_rows(self) -> list[dict[int, Fraction | int]]:
        """Fully reduced rows with leading coefficient 1, sorted by pivot."""
        cols = sorted(self.pivots)
        done: dict[int, dict[int, int]] = {}
        for c in reversed(cols):
            row = self.pivots[c]
            hits = [k for k in row if k != c and k in done]
            for k in sorted(hits):
                if k in row:
                    row = _eliminate(row, done[k], k)
            done[c] = primitive(row)
        out = []
        for c in cols:
            row = done[c]
            lead = row[c]
            out.append({k: canon(Fraction(v, lead)) for k, v in sorted(row.items())})
        return out


def sparse_rank(rows: Iterable[SparseRow]) -> int:
    ech = _Echelon()
    for r in rows:
        ech.add(r)
    return ech.rank


def sparse_rref(rows: Iterable[SparseRow], ncols: int | None = None) -> list[dict]:
    """Nonzero rows of the reduced row echelon form, ordered by pivot column.

    ``ncols`` is accepted for symmetry with the dense API; columns are the
    integer keys of the rows and need not be contiguous.
    """
    ech = _Echelon()
    for r in rows:
        ech.add(r)
    return ech.reduced_rows()


def sparse_nullspace(
    rows: Iterable[SparseRow], ncols: int, normalize: str = "integer"
) -> list[dict]:
    """Kernel basis of a sparse system in ``ncols`` unknowns.

    The basis is the reduced echelon basis of the kernel. With
    ``normalize="integer"`` each vector is rescaled to a primitive integer
    vector with positive leading entry; ``"rref"`` keeps leading entries 1.
    """
    if normalize not in ("integer", "rref"):
        raise ValueError(f"unknown normalization {normalize!r}")
    reduced = sparse_rref(rows, ncols)
    pivot_of = {min(r): r for r in reduced}
    free = [j for j in range(ncols) if j not in pivot_of]
    if not free:
        return []
    # kernel vector for free column f: e_f - sum_p R[p, f] e_p
    by_free: dict[int, dict[int, Fraction | int]] = {f: {f: 1} for f in free}
    for p, r in pivot_of.items():
        for j, v in r.items():
            if j != p:
                by_free[j][p] = -v
    kernel = sparse_rref(by_free.values(), ncols)
    if normalize == "rref":
        return kernel
    return [primitive(_int_sparse(v)) for v in kernel]
