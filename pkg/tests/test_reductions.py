import dataclasses
import json
from fractions import Fraction

import numpy as np
import pytest

from errors import InvalidParameters, ShapeMismatch
from exact_algebra import FieldSpec, hamming_distance, materialize
from hadamard import HadamardSpec, materialize_hadamard
from polynomials import multilinear_extension
from prob_rank import eq_sampler, estimate_error
from reductions import (
    exact_factorization,
    function_oracle,
    ip2_rsr,
    planted_errors,
    protocol_bits,
    protocol_trace,
    rigidity_to_prob_rank,
    rsr_prob_rank,
    rsr_term_count,
    shift_factors,
    simulate_protocol,
    write_trace,
)

F3 = FieldSpec.prime(3)


def _planted_hadamard(n, positions, field=F3):
    H = materialize_hadamard(HadamardSpec(n, field))
    return H, planted_errors(H, positions)


def test_planted_errors_change_exactly_the_listed_entries():
    H, corrupted = _planted_hadamard(2, [(0, 0), (1, 3), (3, 2)])
    assert hamming_distance(H, corrupted) == 3
    assert corrupted.entry(0, 0) == 2


def test_exact_factorization_reproduces_the_matrix():
    H, _ = _planted_hadamard(2, [])
    F = exact_factorization(H)
    assert F.num_terms == 4
    assert materialize(F).equals(H)


def test_shifting_an_exact_factorization_keeps_it_exact():
    H, _ = _planted_hadamard(2, [])
    F = exact_factorization(H)
    for x in range(4):
        for y in range(4):
            assert materialize(shift_factors(F, x, y)).equals(H)


def test_shift_moves_errors_by_xor():
    H, corrupted = _planted_hadamard(3, [(1, 6)])
    shifted = materialize(shift_factors(exact_factorization(corrupted), 5, 2))
    wrong = np.argwhere(shifted.entries != H.entries).tolist()
    assert wrong == [[1 ^ 5, 6 ^ 2]]


def test_uniform_shift_spreads_planted_errors_exactly(q):
    for field in (F3, q):
        H, corrupted = _planted_hadamard(3, [(0, 0), (2, 5), (7, 7)], field)
        sampler = rigidity_to_prob_rank(exact_factorization(corrupted))
        assert sampler.claimed_error == Fraction(3, 64)
        report = estimate_error(sampler, mode="exhaustive")
        assert report.trials == 64
        assert np.all(report.counts == 3)
        assert report.max_error == report.mean_error == Fraction(3, 64)


def test_rigidity_to_prob_rank_needs_a_square_power_of_two():
    F = exact_factorization(materialize_hadamard(HadamardSpec(1, F3)))
    with pytest.raises(ShapeMismatch):
        rigidity_to_prob_rank(F.select([0, 1, 0], [0, 1, 0]))


def test_rigidity_to_prob_rank_over_budget_needs_a_claim():
    H, corrupted = _planted_hadamard(3, [(0, 0)])
    F = exact_factorization(corrupted)
    with pytest.raises(InvalidParameters):
        rigidity_to_prob_rank(F, budget=10)
    sampler = rigidity_to_prob_rank(F, claimed_error=Fraction(1, 64), budget=10)
    assert sampler.claimed_error == Fraction(1, 64)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_ip2_self_reduction_invariants(n):
    assert ip2_rsr(n).check_invariants()


def test_broken_self_reduction_is_detected():
    rsr = dataclasses.replace(ip2_rsr(2), g_table=(0,) * 16)
    with pytest.raises(InvalidParameters):
        rsr.check_invariants()
    with pytest.raises(InvalidParameters):
        dataclasses.replace(ip2_rsr(2), g_table=(0, 1))


def test_sample_queries_reconstruct_ip2():
    rsr = ip2_rsr(3)
    g = multilinear_extension(rsr.g_table, F3)
    for x, y, rand in [(3, 5, (1, 2)), (7, 7, (0, 0)), (6, 1, (4, 3))]:
        queries = rsr.sample_queries(x, y, rand)
        answers = [int(rsr.function(np.int64(a), np.int64(b))) for a, b in queries]
        code = int("".join(map(str, answers)), 2)
        assert rsr.g_table[code] == int(rsr.function(np.int64(x), np.int64(y)))
    assert g.num_monomials == 15


def test_rsr_term_count_matches_the_sampler():
    rsr = ip2_rsr(2)
    matrix = function_oracle(rsr, F3).dense()
    sampler = rsr_prob_rank(rsr, exact_factorization(matrix))
    poly = multilinear_extension(rsr.g_table, F3)
    assert sampler.claimed_rank == rsr_term_count(poly, 4) == 5**4 - 1
    assert sampler.claimed_rank <= (rsr.k * 4) ** rsr.k
    report = estimate_error(sampler, mode="exhaustive")
    assert report.max_error == 0
    assert report.max_terms == sampler.claimed_rank


def test_rsr_error_is_at_most_k_times_the_planted_rate():
    rsr = ip2_rsr(3)
    matrix = function_oracle(rsr, F3).dense()
    corrupted = planted_errors(matrix, [(0, 1), (4, 4), (6, 3)])
    sampler = rsr_prob_rank(rsr, exact_factorization(corrupted))
    assert sampler.claimed_error == 4 * Fraction(3, 64)
    report = estimate_error(sampler, mode="exhaustive")
    assert report.max_error <= sampler.claimed_error


def test_rsr_checks_dimensions():
    matrix = function_oracle(ip2_rsr(2), F3).dense()
    with pytest.raises(ShapeMismatch):
        rsr_prob_rank(ip2_rsr(3), exact_factorization(matrix))


def test_protocol_bits():
    assert [protocol_bits(r) for r in (0, 1, 2, 3, 4, 7, 8)] == [0, 1, 2, 2, 3, 3, 4]


def test_protocol_answers_the_sampled_entry():
    sampler = eq_sampler(3, Fraction(1, 4))
    for seed in range(5):
        sample = sampler.sample(seed)
        for x in range(8):
            for y in range(8):
                result = simulate_protocol(sampler, x, y, seed)
                assert result.bits == 3
                assert result.answer == sample.entry(x, y)


def test_protocol_rejects_inputs_outside_the_matrix():
    with pytest.raises(ShapeMismatch):
        simulate_protocol(eq_sampler(2, Fraction(1, 2)), 4, 0, seed=0)


def test_trace_is_written_as_json_lines(tmp_path):
    sampler = eq_sampler(2, Fraction(1, 2))
    results = protocol_trace(sampler, [(0, 0), (1, 2)], seeds=[3, 4])
    assert len(results) == 4
    path = tmp_path / "trace.jsonl"
    write_trace(results, path)
    lines = path.read_text().splitlines()
    assert [json.loads(line) for line in lines] == [r.to_json() for r in results]
    assert json.loads(lines[0])["x"] == 0 and json.loads(lines[0])["answer"] == 1
