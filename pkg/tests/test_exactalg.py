from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings, strategies as st

from conslaw.exactalg import (
    RatMatrix,
    canon,
    nullspace,
    primitive,
    rank,
    rank_of_rows,
    rref,
    sparse_nullspace,
    sparse_rank,
    sparse_rref,
)

small = st.integers(min_value=-6, max_value=6)
rat = st.builds(Fraction, small, st.integers(min_value=1, max_value=4))


@st.composite
def matrices(draw, max_rows=6, max_cols=6, elems=small):
    r = draw(st.integers(min_value=1, max_value=max_rows))
    c = draw(st.integers(min_value=1, max_value=max_cols))
    return [[draw(elems) for _ in range(c)] for _ in range(r)]


@st.composite
def low_rank(draw):
    # product of thin factors forces rank deficiency
    r = draw(st.integers(1, 6))
    c = draw(st.integers(1, 6))
    k = draw(st.integers(1, 3))
    a = [[draw(small) for _ in range(k)] for _ in range(r)]
    b = [[draw(small) for _ in range(c)] for _ in range(k)]
    return [[sum(a[i][t] * b[t][j] for t in range(k)) for j in range(c)] for i in range(r)]


def mat_mul_vec(rows, v):
    return [sum(Fraction(a) * b for a, b in zip(row, v)) for row in rows]


class TestCanon:
    def test_integral_fraction_becomes_int(self):
        assert canon(Fraction(6, 3)) == 2
        assert type(canon(Fraction(6, 3))) is int

    def test_reduced(self):
        assert canon(Fraction(4, -6)) == Fraction(-2, 3)
        assert canon("3/9") == Fraction(1, 3)

    def test_rejects_float(self):
        with pytest.raises(TypeError):
            canon(0.5)


class TestDenseExamples:
    def test_rank_one(self):
        m = RatMatrix.from_rows([[1, 2], [2, 4]])
        assert rank(m) == 1
        assert nullspace(m) == [[2, -1]]
        assert rref(m).entries == (1, 2, 0, 0)

    def test_identity(self):
        assert rank(RatMatrix.identity(4)) == 4
        assert nullspace(RatMatrix.identity(3)) == []

    def test_empty_and_zero(self):
        assert rank(RatMatrix.zeros(0, 3)) == 0
        assert rank(RatMatrix.zeros(3, 3)) == 0
        assert len(nullspace(RatMatrix.zeros(2, 3))) == 3

    def test_rational_entries(self):
        m = RatMatrix.from_rows([[Fraction(1, 2), Fraction(1, 3)], [3, 2]])
        assert rank(m) == 1

    def test_ragged_rejected(self):
        with pytest.raises(ValueError):
            RatMatrix.from_rows([[1, 2], [3]])

    def test_transpose_and_matvec(self):
        m = RatMatrix.from_rows([[1, 2, 3], [4, 5, 6]])
        assert m.transpose().to_rows() == [[1, 4], [2, 5], [3, 6]]
        assert m.matvec([1, 0, -1]) == [-2, -2]


class TestAgainstSympy:
    @settings(max_examples=150, deadline=None)
    @given(st.one_of(matrices(), low_rank()))
    def test_rank(self, rows):
        assert rank(RatMatrix.from_rows(rows)) == sympy.Matrix(rows).rank()
        assert rank_of_rows(rows) == sympy.Matrix(rows).rank()

    @settings(max_examples=100, deadline=None)
    @given(st.one_of(matrices(elems=rat), low_rank()))
    def test_rref(self, rows):
        ours = rref(RatMatrix.from_rows(rows)).to_rows()
        ref, _ = sympy.Matrix(rows).rref()
        theirs = [[Fraction(int(x.p), int(x.q)) for x in ref.row(i)] for i in range(ref.rows)]
        assert ours == theirs


class TestProperties:
    @settings(max_examples=150, deadline=None)
    @given(st.one_of(matrices(), low_rank()))
    def test_rank_nullity(self, rows):
        m = RatMatrix.from_rows(rows)
        ker = nullspace(m)
        assert rank(m) + len(ker) == m.cols
        for v in ker:
            assert all(x == 0 for x in mat_mul_vec(rows, v))
        assert rank_of_rows(ker) == len(ker)

    @settings(max_examples=100, deadline=None)
    @given(matrices(elems=rat))
    def test_rref_idempotent(self, rows):
        once = rref(RatMatrix.from_rows(rows))
        assert rref(once) == once

    @settings(max_examples=100, deadline=None)
    @given(matrices())
    def test_transpose_rank(self, rows):
        m = RatMatrix.from_rows(rows)
        assert rank(m) == rank(m.transpose())

    @settings(max_examples=100, deadline=None)
    @given(matrices())
    def test_nullspace_primitive(self, rows):
        from math import gcd
        for v in nullspace(RatMatrix.from_rows(rows)):
            nz = [x for x in v if x]
            g = 0
            for x in nz:
                g = gcd(g, x)
            assert g == 1 and nz[0] > 0


class TestSparse:
    def test_primitive(self):
        assert primitive({2: -4, 5: 6}) == {2: 2, 5: -3}
        assert primitive({}) == {}

    def test_noncontiguous_columns(self):
        rows = [{10: 1, 20: 2}, {10: 2, 20: 4}, {30: 1}]
        assert sparse_rank(rows) == 2
        assert sparse_rref(rows) == [{10: 1, 20: 2}, {30: 1}]

    def test_nullspace_normalizations(self):
        rows = [{0: 2, 1: 3}]
        assert sparse_nullspace(rows, 2) == [{0: 3, 1: -2}]
        assert sparse_nullspace(rows, 2, normalize="rref") == [{0: 1, 1: Fraction(-2, 3)}]
        with pytest.raises(ValueError):
            sparse_nullspace(rows, 2, normalize="bogus")

    @settings(max_examples=100, deadline=None)
    @given(st.one_of(matrices(), low_rank()))
    def test_sparse_matches_dense(self, rows):
        sp = [{j: v for j, v in enumerate(r) if v} for r in rows]
        assert sparse_rank(sp) == rank_of_rows(rows)
        dense_ker = nullspace(RatMatrix.from_rows(rows))
        sparse_ker = sparse_nullspace(sp, len(rows[0]))
        as_dense = [[v.get(j, 0) for j in range(len(rows[0]))] for v in sparse_ker]
        assert as_dense == dense_ker
