from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from errors import BudgetExceeded, InvalidParameters, ShapeMismatch
from exact_algebra import (
    BUDGET_ENV,
    DEFAULT_BUDGET,
    DenseMatrix,
    FactoredMatrix,
    FieldSpec,
    append_rank_one,
    check_budget,
    entry_budget,
    hamming_distance,
    materialize,
    rank,
)
from oracles import small_rank


def test_parse_field_names():
    assert FieldSpec.parse("F3") == FieldSpec.prime(3)
    assert FieldSpec.parse("GF7") == FieldSpec.prime(7)
    assert FieldSpec.parse("Q") == FieldSpec.rationals()
    assert FieldSpec.parse("F3").label == "F3"
    assert FieldSpec.parse("q").label == "Q"


@pytest.mark.parametrize("text", ["F4", "F1", "R", "F", "GF2x"])
def test_parse_rejects_bad_fields(text):
    with pytest.raises(InvalidParameters):
        FieldSpec.parse(text)


def test_modulus_must_stay_below_2_61():
    FieldSpec.prime(2**61 - 1)
    with pytest.raises(InvalidParameters):
        FieldSpec.prime(2**61 + 1)


def test_scalar_reduces_fractions(f3, q):
    assert f3.scalar(Fraction(1, 2)) == 2
    assert f3.scalar(-1) == 2
    assert q.scalar(Fraction(2, 4)) == Fraction(1, 2)
    with pytest.raises(InvalidParameters):
        f3.scalar(Fraction(1, 3))


def test_inverse(f3, q):
    assert f3.inverse(2) == 2
    assert q.inverse(Fraction(2, 3)) == Fraction(3, 2)
    with pytest.raises(ZeroDivisionError):
        f3.inverse(0)


def test_characteristic_two_is_rejected_for_hadamard_work(f2, f3):
    with pytest.raises(InvalidParameters):
        f2.require_odd_characteristic("H_n")
    f3.require_odd_characteristic("H_n")


def test_array_dtypes(f3, f_mersenne31, q):
    assert f3.array([[1, -1]]).dtype == np.int64
    assert f_mersenne31.array([[1]]).dtype == np.int64
    assert FieldSpec.prime(2**61 - 1).array([[1]]).dtype == object
    rational = q.array([[1, 2]])
    assert isinstance(rational[0, 0], Fraction)
    assert f3.array([[Fraction(1, 2)]])[0, 0] == 2


def test_matmul_int64_chunks_do_not_overflow(f_mersenne31):
    p = f_mersenne31.p
    a = f_mersenne31.array(np.full((1, 5), p - 1, dtype=np.int64))
    b = f_mersenne31.array(np.full((5, 1), p - 1, dtype=np.int64))
    assert f_mersenne31.matmul(a, b)[0, 0] == 5


def test_matmul_object_modulus():
    field = FieldSpec.prime(2**61 - 1)
    p = field.p
    a = field.array(np.array([[p - 1, 2]], dtype=object))
    b = field.array(np.array([[p - 1], [3]], dtype=object))
    assert field.matmul(a, b)[0, 0] == 7


def test_matmul_shape_mismatch(f3):
    with pytest.raises(ShapeMismatch):
        f3.matmul(f3.zeros((2, 3)), f3.zeros((2, 3)))


def test_rank_small_examples(f3, f2, q):
    assert rank(DenseMatrix.from_rows([[1, 1], [1, -1]], f3)) == 2
    assert rank(DenseMatrix.from_rows([[1, 1], [1, -1]], f2)) == 1
    assert rank(DenseMatrix.from_rows([[1, 2], [2, 4]], q)) == 1
    assert rank(DenseMatrix.from_rows([[Fraction(1, 2), 1], [1, 3]], q)) == 2
    assert rank(DenseMatrix.zeros(3, 4, f3)) == 0


def test_rank_of_empty_matrix_is_an_error(f3):
    with pytest.raises(ShapeMismatch):
        rank(DenseMatrix(f3.zeros((0, 3)), f3))


matrices_mod5 = st.integers(1, 4).flatmap(
    lambda rows: st.integers(1, 4).flatmap(
        lambda cols: st.lists(
            st.lists(st.integers(0, 4), min_size=cols, max_size=cols), min_size=rows, max_size=rows
        )
    )
)


@given(matrices_mod5)
def test_rank_mod_p_agrees_with_plain_elimination(rows):
    field = FieldSpec.prime(5)
    M = DenseMatrix.from_rows(rows, field)
    flat = tuple(v for row in rows for v in row)
    assert rank(M) == small_rank(flat, len(rows), len(rows[0]), 5)


rational_matrices = st.integers(1, 4).flatmap(
    lambda cols: st.lists(
        st.lists(st.fractions(min_value=-3, max_value=3, max_denominator=4), min_size=cols, max_size=cols),
        min_size=1,
        max_size=4,
    )
)


@settings(max_examples=50)
@given(rational_matrices)
def test_rank_over_q_agrees_with_sympy(rows):
    M = DenseMatrix.from_rows(rows, FieldSpec.rationals())
    expected = sympy.Matrix([[sympy.Rational(v.numerator, v.denominator) for v in row] for row in rows]).rank()
    assert rank(M) == expected


def test_factored_matrix_views(f3):
    left = f3.array([[1, 0], [1, 1], [0, 2]])
    right = f3.array([[1, 2, 0, 1], [0, 1, 1, 2]])
    F = FactoredMatrix(left, right, f3)
    dense = materialize(F)
    assert dense.to_rows() == [[1, 2, 0, 1], [1, 0, 1, 0], [0, 2, 2, 1]]
    assert F.entry(2, 3) == 1
    assert F.row(1).tolist() == [1, 0, 1, 0]
    assert F.column(1).tolist() == [2, 0, 2]
    assert F.block([0, 2], [1, 3]).tolist() == [[2, 1], [2, 1]]
    assert materialize(F.select([2, 2], [0])).to_rows() == [[0], [0]]
    assert materialize(F.scaled(2)).to_rows() == [[2, 1, 0, 2], [2, 0, 2, 0], [0, 1, 1, 2]]
    assert F.plus(F).num_terms == 4
    assert materialize(F.plus(F)).equals(materialize(F.scaled(2)))


def test_factored_matrix_rejects_bad_factors(f3):
    with pytest.raises(ShapeMismatch):
        FactoredMatrix(f3.zeros((2, 2)), f3.zeros((3, 2)), f3)
    F = FactoredMatrix.empty(2, 3, f3)
    with pytest.raises(ShapeMismatch):
        append_rank_one(F, [1, 1, 1], [1, 1, 1])


def test_from_terms_builds_the_sum_of_outer_products(q):
    F = FactoredMatrix.from_terms(2, 2, [([1, 0], [1, 1]), ([0, 1], [Fraction(1, 2), 0])], q)
    assert F.num_terms == 2
    assert materialize(F).to_rows() == [[1, 1], [Fraction(1, 2), 0]]


def test_hamming_distance(f3, q):
    a = DenseMatrix.from_rows([[1, 2], [0, 1]], f3)
    b = DenseMatrix.from_rows([[1, 0], [0, 2]], f3)
    assert hamming_distance(a, b) == 2
    with pytest.raises(ShapeMismatch):
        hamming_distance(a, DenseMatrix.from_rows([[1, 2], [0, 1]], q))


def test_dense_matrix_serialization(q):
    M = DenseMatrix.from_rows([[Fraction(1, 2), 3], [0, Fraction(-2, 3)]], q)
    data = M.to_json()
    assert data["entries"] == ["1/2", "3", "0", "-2/3"]
    assert DenseMatrix.from_json(data).equals(M)
    assert DenseMatrix.from_csv(M.to_csv(), q).equals(M)


def test_from_json_checks_entry_count(f3):
    data = DenseMatrix.identity(2, f3).to_json()
    data["entries"] = data["entries"][:3]
    with pytest.raises(ShapeMismatch):
        DenseMatrix.from_json(data)


def test_entry_budget_from_environment():
    assert entry_budget({}) == DEFAULT_BUDGET
    assert entry_budget({BUDGET_ENV: " 1000 "}) == 1000
    for bad in ("0", "-5", "lots"):
        with pytest.raises(InvalidParameters):
            entry_budget({BUDGET_ENV: bad})


def test_materialize_respects_the_budget(f3):
    F = FactoredMatrix.empty(64, 64, f3)
    with pytest.raises(BudgetExceeded, match=BUDGET_ENV):
        materialize(F, budget=1000)
    check_budget(1000, "exactly at the limit", budget=1000)


@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 3), st.data())
def test_rank_of_a_factored_matrix_is_at_most_its_term_count(rows, cols, terms, data):
    field = FieldSpec.prime(5)
    entries = st.integers(0, 4)
    left = data.draw(st.lists(st.lists(entries, min_size=terms, max_size=terms), min_size=rows, max_size=rows))
    right = data.draw(st.lists(st.lists(entries, min_size=cols, max_size=cols), min_size=terms, max_size=terms))
    F = FactoredMatrix(field.array(left), field.array(right), field)
    assert rank(materialize(F)) <= F.num_terms


@given(matrices_mod5, st.data())
def test_rank_ignores_permutations_and_transposition(rows, data):
    field = FieldSpec.prime(5)
    M = DenseMatrix.from_rows(rows, field)
    row_order = data.draw(st.permutations(range(len(rows))))
    col_order = data.draw(st.permutations(range(len(rows[0]))))
    shuffled = DenseMatrix.from_rows([[rows[i][j] for j in col_order] for i in row_order], field)
    assert rank(shuffled) == rank(M)
    assert rank(M.transpose()) == rank(M)


@given(st.integers(1, 4), st.integers(1, 4), st.data())
def test_hamming_distance_is_a_metric(rows, cols, data):
    field = FieldSpec.prime(3)
    shaped = st.lists(st.lists(st.integers(0, 2), min_size=cols, max_size=cols), min_size=rows, max_size=rows)
    a, b, c = (DenseMatrix.from_rows(data.draw(shaped), field) for _ in range(3))
    assert hamming_distance(a, a) == 0
    assert hamming_distance(a, b) == hamming_distance(b, a)
    assert hamming_distance(a, c) <= hamming_distance(a, b) + hamming_distance(b, c)
    assert (hamming_distance(a, b) == 0) == a.equals(b)


integer_matrices = st.integers(1, 4).flatmap(
    lambda cols: st.lists(
        st.lists(st.integers(-3, 3), min_size=cols, max_size=cols), min_size=1, max_size=4
    )
)


@given(integer_matrices)
def test_fraction_free_rank_matches_rank_mod_primes(rows):
    over_q = rank(DenseMatrix.from_rows(rows, FieldSpec.rationals()))
    # every minor is at most 4! * 3**4 in absolute value, far below 2**31 - 1
    assert rank(DenseMatrix.from_rows(rows, FieldSpec.prime(2**31 - 1))) == over_q
    assert rank(DenseMatrix.from_rows(rows, FieldSpec.prime(3))) <= over_q
