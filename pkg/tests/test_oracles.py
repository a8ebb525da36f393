from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from errors import BudgetExceeded, InvalidParameters, ShapeMismatch
from exact_algebra import DenseMatrix, FieldSpec, hamming_distance, materialize, rank
from hadamard import HadamardSpec, materialize_hadamard
from oracles import (
    OracleBudget,
    batched_rank,
    brute_force_rigidity,
    cross_validate,
    min_rank_profile,
    min_rank_within,
    rigidity_profile,
    small_rank,
)
from rigidity import NonRigidityParams, high_error_nonrigidity, valiant_nonrigidity

F2 = FieldSpec.prime(2)
F3 = FieldSpec.prime(3)


def test_rigidity_of_h1():
    H = materialize_hadamard(HadamardSpec(1, F3))
    assert brute_force_rigidity(H, 1) == 1
    assert brute_force_rigidity(H, 2) == 0
    assert brute_force_rigidity(H, 0) == 4
    assert rigidity_profile(H) == [4, 1, 0]


def test_min_rank_profile_of_h1():
    H = materialize_hadamard(HadamardSpec(1, F3))
    assert min_rank_profile(H) == [2, 1, 1, 1, 0]
    assert min_rank_within(H, 1) == 1
    assert min_rank_within(H, 0) == 2
    with pytest.raises(InvalidParameters):
        min_rank_within(H, -1)


def test_cross_validate_every_binary_3x3_matrix():
    for values in product((0, 1), repeat=9):
        M = DenseMatrix.from_rows([values[0:3], values[3:6], values[6:9]], F2)
        report = cross_validate(M)
        assert report.ok, report.violations
        assert report.min_ranks[0] == rank(M)
        assert report.rigidity[rank(M)] == 0


def test_oracles_refuse_large_inputs():
    with pytest.raises(BudgetExceeded):
        brute_force_rigidity(DenseMatrix.zeros(6, 6, F2), 1)
    with pytest.raises(BudgetExceeded):
        brute_force_rigidity(DenseMatrix.zeros(5, 5, F3), 1)
    with pytest.raises(BudgetExceeded):
        min_rank_profile(DenseMatrix.zeros(4, 4, F3), budget=OracleBudget(max_enumeration=100))


def test_oracles_need_a_prime_field():
    with pytest.raises(InvalidParameters):
        brute_force_rigidity(DenseMatrix.from_rows([[Fraction(1, 2)]], FieldSpec.rationals()), 0)
    with pytest.raises(InvalidParameters):
        OracleBudget(max_enumeration=0)


def test_cross_validate_needs_entries():
    with pytest.raises(ShapeMismatch):
        cross_validate(DenseMatrix(F3.zeros((0, 2)), F3))


@given(st.lists(st.integers(0, 4), min_size=9, max_size=9))
def test_small_rank_agrees_with_exact_rank(values):
    M = DenseMatrix.from_rows([values[0:3], values[3:6], values[6:9]], FieldSpec.prime(5))
    assert small_rank(tuple(values), 3, 3, 5) == rank(M)


VALIANT_SMALL = [
    NonRigidityParams.full_window(1, F3),
    NonRigidityParams.build(1, Fraction(1, 4), F3),
    NonRigidityParams.full_window(2, F3),
    NonRigidityParams.build(2, Fraction(1, 4), F3),
]


@pytest.mark.parametrize("params", VALIANT_SMALL, ids=lambda p: f"n{p.n}-k{p.k_offset}-r{p.r_points}")
def test_valiant_is_consistent_with_the_oracle(params):
    corrected, report = valiant_nonrigidity(params)
    H = materialize_hadamard(HadamardSpec(params.n, F3))
    assert hamming_distance(materialize(corrected), H) == report.total_diffs
    assert brute_force_rigidity(H, report.realized_rank) <= report.total_diffs


@pytest.mark.parametrize("seed", range(4))
def test_high_error_on_h2_is_consistent_with_the_oracle(seed):
    factored, report = high_error_nonrigidity(2, 2, seed, with_rank=True)
    H = materialize_hadamard(HadamardSpec(2, F3))
    # report.total_diffs edits reach rank realized_rank, so the oracle can do at least as well
    assert min_rank_within(H, report.total_diffs) <= report.realized_rank


@given(st.integers(1, 4), st.integers(1, 4), st.sampled_from([2, 3, 7]), st.data())
def test_batched_rank_agrees_with_small_rank(rows, cols, p, data):
    stack = data.draw(
        st.lists(st.lists(st.integers(0, p - 1), min_size=rows * cols, max_size=rows * cols), min_size=1, max_size=8)
    )
    ranks = batched_rank(np.array(stack, dtype=np.int64).reshape(-1, rows, cols), p)
    assert ranks.tolist() == [small_rank(tuple(entries), rows, cols, p) for entries in stack]


def test_rigidity_of_h2_agrees_with_the_edit_oracle():
    H = materialize_hadamard(HadamardSpec(2, F3))
    report = cross_validate(H)
    assert report.ok, report.violations
    assert report.rigidity[4] == 0
    assert report.rigidity[3] == 1
    # the six -1 entries of H_2 sit outside an all-ones rank-1 matrix
    assert report.rigidity[1] <= 6
    assert report.rigidity[0] == 16
    assert report.min_ranks[16] == 0
