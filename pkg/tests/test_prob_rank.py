import dataclasses
import json
from fractions import Fraction

import numpy as np
import pytest

from errors import InvalidParameters, InvariantViolation
from exact_algebra import FieldSpec, materialize
from prob_rank import (
    DepthTwoLTFCircuit,
    LTFSpec,
    earliest_indices,
    eq_sampler,
    estimate_error,
    hoeffding_radius,
    ip2_threshold_circuit,
    leq_sampler,
    ltf_ltf_sign_sampler,
    ltf_sampler,
)

F3 = FieldSpec.prime(3)


def test_eq_sampler_exact_error_by_enumeration():
    sampler = eq_sampler(3, Fraction(1, 4))
    assert sampler.claimed_rank == 4
    assert sampler.claimed_error == Fraction(1, 4)
    report = estimate_error(sampler, mode="exhaustive")
    assert report.trials == 64
    assert report.radius == 0
    assert report.max_terms == 4
    off_diagonal = ~np.eye(8, dtype=bool)
    assert np.all(report.counts[off_diagonal] * 4 == report.trials)
    assert np.all(np.diag(report.counts) == 0)
    assert report.error_at(0, 1) == Fraction(1, 4)
    assert report.within_claim()


def test_eq_sampler_values_are_zero_or_one():
    sampler = eq_sampler(4, Fraction(1, 8))
    values = materialize(sampler.sample(11)).entries
    assert set(np.unique(values).tolist()) <= {0, 1}
    assert np.all(np.diag(values) == 1)


@pytest.mark.parametrize("strict", [False, True])
def test_leq_sampler_exhaustive_error_is_within_claim(strict):
    sampler = leq_sampler(2, Fraction(1, 2), strict=strict)
    report = estimate_error(sampler, mode="exhaustive")
    assert report.max_error <= sampler.claimed_error
    assert report.max_terms <= sampler.claimed_rank
    assert sampler.label.startswith("lt(" if strict else "leq(")


def test_leq_sampler_rank_accounting():
    sampler = leq_sampler(4, Fraction(1, 4))
    # four hashed prefixes (lengths 1, 2, 3 and the full equality), k = 5 hashes each
    assert sampler.claimed_rank == 1 + 4 * 32
    strict = leq_sampler(4, Fraction(1, 4), strict=True)
    assert strict.claimed_rank == 1 + 3 * 16


def test_leq_sampler_monte_carlo():
    sampler = leq_sampler(3, Fraction(1, 4))
    report = estimate_error(sampler, trials=200, seed=5)
    assert report.trials == 200
    assert report.within_claim()


def test_estimation_is_independent_of_jobs():
    sampler = leq_sampler(3, Fraction(1, 4))
    serial = estimate_error(sampler, trials=40, seed=9, jobs=1)
    threaded = estimate_error(sampler, trials=40, seed=9, jobs=4)
    assert np.array_equal(serial.counts, threaded.counts)
    assert serial.to_json() == threaded.to_json()


def test_estimation_rejects_bad_modes():
    sampler = eq_sampler(2, Fraction(1, 2))
    with pytest.raises(InvalidParameters):
        estimate_error(sampler, mode="quasi")
    with pytest.raises(InvalidParameters):
        estimate_error(sampler, trials=0)
    without_domain = dataclasses.replace(sampler, domain=None)
    with pytest.raises(InvalidParameters):
        estimate_error(without_domain, mode="exhaustive")


def test_sampler_rejects_draws_over_its_claimed_rank():
    sampler = dataclasses.replace(eq_sampler(2, Fraction(1, 4)), claimed_rank=2)
    with pytest.raises(InvariantViolation):
        sampler.sample(0)


@pytest.mark.parametrize("eps", [0, 1, Fraction(3, 2)])
def test_samplers_reject_eps_outside_unit_interval(eps):
    with pytest.raises(InvalidParameters):
        eq_sampler(2, eps)
    with pytest.raises(InvalidParameters):
        leq_sampler(2, eps)


def test_earliest_indices_preserve_order_and_ties():
    alpha, beta = earliest_indices([3, 1], [1, 5])
    assert alpha.tolist() == [2, 0]
    assert beta.tolist() == [0, 3]


def test_ltf_table():
    spec = LTFSpec((1, 2), (1, -1), 1)
    table = spec.table()
    for x in range(4):
        for y in range(4):
            x1, x2 = x >> 1, x & 1
            y1, y2 = y >> 1, y & 1
            assert table[x, y] == (x1 + 2 * x2 + y1 - y2 >= 1)
    assert LTFSpec.from_json(spec.to_json()) == spec


def test_ltf_sampler_error():
    spec = LTFSpec((1, 1), (1, 1), 2)
    sampler = ltf_sampler(spec, Fraction(1, 2))
    assert sampler.rows == sampler.cols == 4
    report = estimate_error(sampler, trials=300, seed=2)
    assert report.within_claim()


def test_ip2_threshold_circuit_computes_inner_product():
    table = ip2_threshold_circuit().table()
    idx = np.arange(4)
    ip2 = np.bitwise_count(idx[:, None] & idx[None, :]) & 1
    assert np.array_equal(table, ip2 == 1)


def test_circuit_serialization_and_scaling(tmp_path):
    circuit = ip2_threshold_circuit()
    path = tmp_path / "ip2.json"
    path.write_text(json.dumps(circuit.to_json()))
    assert DepthTwoLTFCircuit.load(path) == circuit
    assert np.array_equal(circuit.scaled(3).table(), circuit.table())
    with pytest.raises(InvalidParameters):
        circuit.scaled(-1)


def test_sign_sampler_agreement():
    circuit = ip2_threshold_circuit()
    sampler = ltf_ltf_sign_sampler(circuit, Fraction(1, 5))
    gate_rank = ltf_sampler(circuit.gates[0], Fraction(1, 15), FieldSpec.rationals()).claimed_rank
    assert sampler.claimed_rank == 3 * gate_rank + 1
    assert sampler.claimed_error <= Fraction(1, 5)
    assert sampler.sign_mode
    report = estimate_error(sampler, trials=300, seed=4)
    assert report.max_terms <= sampler.claimed_rank
    assert float(1 - report.max_error) >= 0.8 - report.radius


def test_sign_sampler_needs_rationals():
    with pytest.raises(InvalidParameters):
        ltf_ltf_sign_sampler(ip2_threshold_circuit(), Fraction(1, 5), F3)


def test_hoeffding_radius_shrinks_with_trials():
    assert hoeffding_radius(16, 16, 100) > hoeffding_radius(16, 16, 400)
    assert hoeffding_radius(16, 16, 400) == pytest.approx(hoeffding_radius(16, 16, 100) / 2)


def test_sign_statistics_survive_positive_rescaling():
    circuit = ip2_threshold_circuit()
    base = ltf_ltf_sign_sampler(circuit, Fraction(1, 5))
    rescaled = ltf_ltf_sign_sampler(circuit.scaled(7), Fraction(1, 5))
    assert rescaled.claimed_rank == base.claimed_rank
    first = estimate_error(base, trials=60, seed=8)
    second = estimate_error(rescaled, trials=60, seed=8)
    assert np.array_equal(first.counts, second.counts)
    assert first.max_error == second.max_error
