"""
Samplers for probabilistic-rank constructions: equality, less-or-equal, linear
threshold functions and the sign representation of depth-two threshold circuits.

A sampler splits a draw in two steps. draw(seed) picks the randomness (a small
hashable value such as a tuple of subset masks) and build(randomness) turns it
into a FactoredMatrix. Samplers with a small randomness space also enumerate
it, which gives exact error rates.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from math import log, prod, sqrt
from typing import Callable, Hashable, Iterable

import numpy as np

from counters import DisagreementCounter, derive_seed
from errors import InvalidParameters, InvariantViolation, ShapeMismatch
from exact_algebra import FactoredMatrix, FieldSpec, check_budget
from hadamard import EntryOracle
from rigidity import as_fraction

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 1e-6


@dataclass(frozen=True, eq=False)
class ProbMatrixSampler:
    """
    A distribution over FactoredMatrix values that should agree with the target
    at every entry with probability at least 1 - claimed_error.

    In sign mode the target is 0/1 and a sampled value v predicts 1 iff v <= 0
    (v < 0 when zero_is_true is off).
    """

    label: str
    rows: int
    cols: int
    field: FieldSpec
    draw: Callable[[int], Hashable]
    build: Callable[[Hashable], FactoredMatrix]
    target: EntryOracle
    claimed_rank: int
    claimed_error: Fraction
    sign_mode: bool = False
    zero_is_true: bool = True
    domain: Callable[[], Iterable[Hashable]] | None = None
    domain_size: int | None = None

    def sample(self, seed):
        return self.sample_from(self.draw(seed))

    def sample_from(self, randomness):
        factored = self.build(randomness)
        if (factored.rows, factored.cols) != (self.rows, self.cols):
            raise InvariantViolation(
                f"{self.label} built a {factored.rows}x{factored.cols} matrix, expected {self.rows}x{self.cols}"
            )
        if factored.num_terms > self.claimed_rank:
            raise InvariantViolation(
                f"{self.label} drew {factored.num_terms} terms, over its claimed rank {self.claimed_rank}"
            )
        return factored

    def predict(self, values):
        """Sampled values read as answers: the values themselves, or 0/1 predictions in sign mode."""
        if not self.sign_mode:
            return values
        if self.zero_is_true:
            return np.asarray(values <= 0, dtype=bool)
        return np.asarray(values < 0, dtype=bool)

    def mismatch(self, factored, budget=None):
        """Boolean matrix of entries where one sampled matrix disagrees with the target."""
        check_budget(self.rows * self.cols, f"comparing a {self.rows}x{self.cols} sample", budget)
        values = self.field.matmul(factored.left, factored.right)
        expected = self.target.dense(budget).entries
        if self.sign_mode:
            return self.predict(values) != (expected == 1)
        return values != expected


def _hash_count(eps):
    """Smallest k with 2**-k <= eps."""
    k = 0
    while (1 << k) * eps < 1:
        k += 1
    return k


def _one_hot(codes, width, field):
    out = np.zeros((len(codes), width), dtype=np.int64)
    out[np.arange(len(codes)), codes] = 1
    return field.from_bits(out)


def _hash_codes(values, masks):
    """k parity hashes of each value, packed into a k-bit code (first mask is the top bit)."""
    codes = np.zeros(len(values), dtype=np.int64)
    for mask in masks:
        codes = (codes << 1) | (np.bitwise_count(values & mask).astype(np.int64) & 1)
    return codes


def _eq_blocks(row_values, col_values, masks, field):
    """Left / right blocks of the hashed equality sum over all 2**k codes."""
    width = 1 << len(masks)
    left = _one_hot(_hash_codes(row_values, masks), width, field)
    right = _one_hot(_hash_codes(col_values, masks), width, field).T
    return left, np.ascontiguousarray(right)


def _check_eps(eps, upper=1):
    eps = as_fraction(eps)
    if not 0 < eps < upper:
        raise InvalidParameters(f"eps must lie in (0, {upper}), got {eps}")
    return eps


def eq_oracle(size, field):
    return EntryOracle(size, size, field, lambda i, j: field.from_bits(i == j))


def eq_sampler(n, eps, field=FieldSpec.prime(3)):
    """
    Equality on n bits: EQ(x, y) is the product over k random subsets S of
    [<S, x> = <S, y> mod 2], expanded over all 2**k joint hash codes. Diagonal
    entries are always right; off-diagonal ones err with probability exactly 2**-k.
    """
    eps = _check_eps(eps)
    if n < 0:
        raise InvalidParameters(f"n must be non-negative, got {n}")
    k = _hash_count(eps)
    size = 1 << n
    idx = np.arange(size, dtype=np.int64)

    def draw(seed):
        rng = np.random.default_rng(seed)
        return tuple(int(m) for m in rng.integers(0, size, size=k))

    def build(masks):
        left, right = _eq_blocks(idx, idx, masks, field)
        return FactoredMatrix(left, right, field)

    return ProbMatrixSampler(
        label=f"eq(n={n})",
        rows=size,
        cols=size,
        field=field,
        draw=draw,
        build=build,
        target=eq_oracle(size, field),
        claimed_rank=1 << k,
        claimed_error=Fraction(1, 1 << k),
        domain=lambda: product(range(size), repeat=k),
        domain_size=size ** k,
    )


def leq_oracle(n, field):
    size = 1 << n
    return EntryOracle(size, size, field, lambda i, j: field.from_bits(i <= j))


def leq_sampler(n, eps, field=FieldSpec.prime(3), strict=False):
    """
    [x <= y] for n-bit integers (bit 0 most significant):

        sum over i of (1 - x_i) * y_i * EQ(x_<i, y_<i)  +  EQ(x, y)

    Each equality on a non-empty prefix is an independent hashed sampler; the
    empty prefix is exactly 1. With strict=True the final EQ(x, y) term is
    dropped and the result is [x < y].
    """
    eps = _check_eps(eps)
    if n < 1:
        raise InvalidParameters(f"n must be positive, got {n}")
    # union bound over the n prefix events, plus the equality event when not strict
    k = _hash_count(eps / (n if strict else n + 1))
    size = 1 << n
    idx = np.arange(size, dtype=np.int64)
    # Prefix lengths of the hashed equality factors, in term order.
    prefixes = list(range(1, n)) + ([] if strict else [n])

    def draw(seed):
        rng = np.random.default_rng(seed)
        return tuple(
            tuple(int(m) for m in rng.integers(0, 1 << length, size=k)) for length in prefixes
        )

    def build(randomness):
        lefts, rights = [], []
        for i in range(n):
            shift = n - 1 - i
            x_zero = field.from_bits(1 - ((idx >> shift) & 1))
            y_one = field.from_bits((idx >> shift) & 1)
            if i == 0:
                lefts.append(x_zero[:, None])
                rights.append(y_one[None, :])
                continue
            prefix = idx >> (n - i)
            left, right = _eq_blocks(prefix, prefix, randomness[i - 1], field)
            lefts.append(field.reduce(left * x_zero[:, None]))
            rights.append(field.reduce(right * y_one[None, :]))
        if not strict:
            left, right = _eq_blocks(idx, idx, randomness[-1], field)
            lefts.append(left)
            rights.append(right)
        return FactoredMatrix(np.hstack(lefts), np.vstack(rights), field)

    target = (
        EntryOracle(size, size, field, lambda i, j: field.from_bits(i < j))
        if strict
        else leq_oracle(n, field)
    )
    mask_domains = [range(1 << length) for length in prefixes]
    return ProbMatrixSampler(
        label=f"{'lt' if strict else 'leq'}(n={n})",
        rows=size,
        cols=size,
        field=field,
        draw=draw,
        build=build,
        target=target,
        claimed_rank=1 + len(prefixes) * (1 << k),
        claimed_error=Fraction(len(prefixes), 1 << k),
        domain=lambda: product(*(product(d, repeat=k) for d in mask_domains)),
        domain_size=prod(len(d) ** k for d in mask_domains),
    )


@dataclass(frozen=True)
class LTFSpec:
    """[sum_i v_i x_i + sum_i w_i y_i >= k] with integer weights."""

    x_weights: tuple[int, ...]
    y_weights: tuple[int, ...]
    threshold: int

    def __post_init__(self):
        if len(self.x_weights) != len(self.y_weights):
            raise ShapeMismatch("x and y weight vectors must have the same length")
        if not all(isinstance(v, (int, np.integer)) for v in (*self.x_weights, *self.y_weights, self.threshold)):
            raise InvalidParameters("LTF weights and threshold must be integers")

    @property
    def n(self):
        return len(self.x_weights)

    def _linear(self, weights):
        idx = np.arange(1 << self.n, dtype=np.int64)
        total = np.zeros(1 << self.n, dtype=object)
        for i, w in enumerate(weights):
            total = total + ((idx >> (self.n - 1 - i)) & 1).astype(object) * int(w)
        return total

    def row_values(self):
        """a(x) = -sum v_i x_i, so that the gate fires iff a(x) <= b(y)."""
        return -self._linear(self.x_weights)

    def col_values(self):
        """b(y) = sum w_i y_i - k."""
        return self._linear(self.y_weights) - self.threshold

    def table(self):
        a = self.row_values()
        b = self.col_values()
        return np.asarray(a[:, None] <= b[None, :], dtype=bool)

    def to_json(self):
        return {
            "x_weights": list(self.x_weights),
            "y_weights": list(self.y_weights),
            "threshold": self.threshold,
        }

    @classmethod
    def from_json(cls, data):
        return cls(tuple(data["x_weights"]), tuple(data["y_weights"]), int(data["threshold"]))


def earliest_indices(a_values, b_values):
    """
    Rank every a- and b-value by the earliest position of its value in the
    sorted list of all values. Equal values share an index, so
    a <= b iff index(a) <= index(b).
    """
    merged = sorted([*a_values, *b_values])
    first = {}
    for position, value in enumerate(merged):
        first.setdefault(value, position)
    return (
        np.array([first[v] for v in a_values], dtype=np.int64),
        np.array([first[v] for v in b_values], dtype=np.int64),
    )


def _table_oracle(table, field):
    rows, cols = table.shape
    return EntryOracle(rows, cols, field, lambda i, j: field.from_bits(table[i, j]))


def ltf_sampler(spec, eps, field=FieldSpec.prime(3), budget=None):
    """LEQ on (n+1)-bit earliest indices, with rows and columns re-indexed by alpha and beta."""
    n = spec.n
    check_budget(2 << n, "indexing the threshold values", budget)
    alpha, beta = earliest_indices(list(spec.row_values()), list(spec.col_values()))
    leq = leq_sampler(n + 1, eps, field)
    size = 1 << n

    def build(randomness):
        return leq.build(randomness).select(alpha, beta)

    return ProbMatrixSampler(
        label=f"ltf(n={n})",
        rows=size,
        cols=size,
        field=field,
        draw=leq.draw,
        build=build,
        target=_table_oracle(spec.table(), field),
        claimed_rank=leq.claimed_rank,
        claimed_error=leq.claimed_error,
        domain=leq.domain,
        domain_size=leq.domain_size,
    )


@dataclass(frozen=True)
class DepthTwoLTFCircuit:
    """[sum_i top_weights[i] * gate_i(x, y) <= top_threshold] over LTF gates."""

    gates: tuple[LTFSpec, ...]
    top_weights: tuple[int, ...]
    top_threshold: int

    def __post_init__(self):
        if not self.gates:
            raise InvalidParameters("a depth-two circuit needs at least one gate")
        if len(self.top_weights) != len(self.gates):
            raise ShapeMismatch(f"{len(self.top_weights)} top weights for {len(self.gates)} gates")
        if len({g.n for g in self.gates}) != 1:
            raise ShapeMismatch("all gates must read the same number of bits")

    @property
    def n(self):
        return self.gates[0].n

    def table(self):
        total = sum(int(w) * g.table().astype(np.int64) for w, g in zip(self.top_weights, self.gates))
        return total <= self.top_threshold

    def scaled(self, factor):
        """Same circuit with top weights and threshold multiplied by a positive integer."""
        if factor <= 0:
            raise InvalidParameters("only positive scaling preserves the circuit")
        return DepthTwoLTFCircuit(
            self.gates, tuple(factor * w for w in self.top_weights), factor * self.top_threshold
        )

    def to_json(self):
        return {
            "gates": [g.to_json() for g in self.gates],
            "top_weights": list(self.top_weights),
            "top_threshold": self.top_threshold,
        }

    @classmethod
    def from_json(cls, data):
        return cls(
            tuple(LTFSpec.from_json(g) for g in data["gates"]),
            tuple(int(w) for w in data["top_weights"]),
            int(data["top_threshold"]),
        )

    @classmethod
    def load(cls, path):
        with open(path, "r") as file:
            return cls.from_json(json.load(file))


def ip2_threshold_circuit():
    """
    Inner product mod 2 on 2+2 bits as a depth-two threshold circuit:
    g1 = [x1 + y1 >= 2], g2 = [x2 + y2 >= 2], g3 = [x1 + y1 + x2 + y2 >= 4] and
    IP2 = g1 + g2 - 2 g3, so IP2 = 1 iff -g1 - g2 + 2 g3 <= -1.
    """
    gates = (
        LTFSpec((1, 0), (1, 0), 2),
        LTFSpec((0, 1), (0, 1), 2),
        LTFSpec((1, 1), (1, 1), 4),
    )
    return DepthTwoLTFCircuit(gates, (-1, -1, 2), -1)


def ltf_ltf_sign_sampler(circuit, eps, field=None, zero_is_true=True, budget=None):
    """
    Q = -k * J + sum_i w_i * P_i with P_i an independent LTF sampler of error
    eps / s for gate i, and J the all-ones matrix. Q <= 0 predicts the circuit's
    output 1.
    """
    field = field or FieldSpec.rationals()
    if field.is_prime:
        raise InvalidParameters("sign representations need the rational field")
    eps = _check_eps(eps)
    s = len(circuit.gates)
    gate_samplers = [ltf_sampler(g, eps / s, field, budget) for g in circuit.gates]
    size = 1 << circuit.n

    def draw(seed):
        return tuple(g.draw(derive_seed(seed, "gate", i)) for i, g in enumerate(gate_samplers))

    def build(randomness):
        shift = FactoredMatrix(
            field.array(np.full((size, 1), -circuit.top_threshold, dtype=np.int64)),
            field.ones((1, size)),
            field,
        )
        total = shift
        for weight, sampler, rand in zip(circuit.top_weights, gate_samplers, randomness):
            total = total.plus(sampler.build(rand).scaled(weight))
        return total

    domain_size = prod(g.domain_size for g in gate_samplers)
    return ProbMatrixSampler(
        label=f"ltf-ltf-sign(n={circuit.n}, s={s})",
        rows=size,
        cols=size,
        field=field,
        draw=draw,
        build=build,
        target=_table_oracle(circuit.table(), field),
        claimed_rank=sum(g.claimed_rank for g in gate_samplers) + 1,
        claimed_error=sum((g.claimed_error for g in gate_samplers), Fraction(0)),
        sign_mode=True,
        zero_is_true=zero_is_true,
        domain=lambda: product(*(g.domain() for g in gate_samplers)),
        domain_size=domain_size,
    )


def hoeffding_radius(rows, cols, trials, delta=DEFAULT_DELTA):
    """Half-width that holds at every entry simultaneously with probability 1 - delta."""
    return sqrt(log(2 * rows * cols / delta) / (2 * trials))


@dataclass(frozen=True, eq=False)
class ErrorReport:
    label: str
    mode: str
    trials: int
    counts: np.ndarray
    claimed_rank: int
    claimed_error: Fraction
    max_terms: int
    radius: float
    delta: float

    def error_at(self, i, j):
        return Fraction(int(self.counts[i, j]), self.trials)

    @property
    def max_error(self):
        return Fraction(int(self.counts.max()), self.trials)

    @property
    def mean_error(self):
        return Fraction(int(self.counts.sum()), self.trials * self.counts.size)

    def within_claim(self):
        """Every entry's error is at most the claimed error plus the confidence radius."""
        return float(self.max_error) <= float(self.claimed_error) + self.radius

    def to_json(self, include_entries=False):
        data = {
            "label": self.label,
            "mode": self.mode,
            "trials": self.trials,
            "claimed_rank": self.claimed_rank,
            "claimed_error": str(self.claimed_error),
            "max_terms": self.max_terms,
            "max_error": str(self.max_error),
            "mean_error": str(self.mean_error),
            "hoeffding_radius": self.radius,
            "delta": self.delta,
        }
        if include_entries:
            data["counts"] = self.counts.tolist()
        return data


def estimate_error(sampler, mode="monte-carlo", trials=1000, seed=0, delta=DEFAULT_DELTA, budget=None, jobs=1):
    """
    Per-entry disagreement frequencies of a sampler.

    Exhaustive mode walks the whole randomness domain, so frequencies are exact
    and the radius is 0. Monte-Carlo mode draws `trials` samples with seeds
    derived from `seed`; the result does not depend on `jobs`.
    """
    if mode == "exhaustive":
        if sampler.domain is None:
            raise InvalidParameters(f"{sampler.label} does not enumerate its randomness")
        check_budget(
            sampler.rows * sampler.cols * sampler.domain_size,
            f"exhaustive error estimation over {sampler.domain_size} draws",
            budget,
        )
        randomness = list(sampler.domain())
    elif mode == "monte-carlo":
        if trials < 1:
            raise InvalidParameters(f"trials must be positive, got {trials}")
        randomness = [sampler.draw(derive_seed(seed, "trial", i)) for i in range(trials)]
    else:
        raise InvalidParameters(f"unknown estimation mode {mode!r}")

    def one(rand):
        factored = sampler.sample_from(rand)
        return sampler.mismatch(factored, budget), factored.num_terms

    counter = DisagreementCounter(sampler.rows, sampler.cols)
    max_terms = 0
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = pool.map(one, randomness)
            for mismatch, terms in results:
                counter.add_sample(mismatch)
                max_terms = max(max_terms, terms)
    else:
        for rand in randomness:
            mismatch, terms = one(rand)
            counter.add_sample(mismatch)
            max_terms = max(max_terms, terms)

    radius = 0.0 if mode == "exhaustive" else hoeffding_radius(sampler.rows, sampler.cols, counter.trials, delta)
    logger.info("%s: %d %s draws, %r", sampler.label, counter.trials, mode, counter)
    return ErrorReport(
        label=sampler.label,
        mode=mode,
        trials=counter.trials,
        counts=counter.counts,
        claimed_rank=sampler.claimed_rank,
        claimed_error=sampler.claimed_error,
        max_terms=max_terms,
        radius=radius,
        delta=delta,
    )
