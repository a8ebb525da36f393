"""
From rigidity to probabilistic rank, and from probabilistic rank to protocols.

* shift_factors / rigidity_to_prob_rank: a low-rank approximation of H_n,
  translated by a random (x, y), errs at every entry with probability equal to
  its overall error rate.
* RSRSpec / rsr_prob_rank: the same idea for any function with a
  non-adaptive random self-reduction.
* simulate_protocol: Alice holds a row of the left factor and Bob a column of
  the right factor; one field element settles the entry.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Callable, Hashable, Iterable

import numpy as np

from errors import BudgetExceeded, InvalidParameters, ShapeMismatch
from exact_algebra import DenseMatrix, FactoredMatrix, check_budget, hamming_distance, materialize
from hadamard import EntryOracle, HadamardSpec, hadamard_oracle
from polynomials import multilinear_extension
from prob_rank import ProbMatrixSampler

logger = logging.getLogger(__name__)


def _cube_size(F):
    if F.rows != F.cols or F.rows < 1 or F.rows & (F.rows - 1):
        raise ShapeMismatch(f"expected a 2**n x 2**n matrix, got {F.rows}x{F.cols}")
    return F.rows.bit_length() - 1


def shift_factors(F, x, y):
    """
    Translate a factorization by (x, y):

        left'[u]     = (-1)**(<x, y> + <u, y>) * left[u XOR x]
        right'[:, v] = (-1)**<v, x> * right[:, v XOR y]

    Since H_n[u, v] = (-1)**(<x, y> + <u, y> + <x, v>) * H_n[u XOR x, v XOR y],
    the translated matrix errs at (u, v) exactly where the original errs at
    (u XOR x, v XOR y). The term count is unchanged.
    """
    n = _cube_size(F)
    F.field.require_odd_characteristic("shifting a Hadamard approximation")
    size = 1 << n
    if not (0 <= x < size and 0 <= y < size):
        raise ShapeMismatch(f"shift ({x}, {y}) out of range for n = {n}")
    field = F.field
    idx = np.arange(size, dtype=np.int64)
    row_signs = field.signs(np.bitwise_count(idx & y) + np.bitwise_count(np.int64(x & y)))
    col_signs = field.signs(np.bitwise_count(idx & x))
    left = field.reduce(F.left[idx ^ x] * row_signs[:, None])
    right = field.reduce(F.right[:, idx ^ y] * col_signs[None, :])
    return FactoredMatrix(left, right, field)


def _normalized_error(F, target, budget):
    try:
        dense = materialize(F, budget)
        expected = target.dense(budget)
    except BudgetExceeded:
        return None
    return Fraction(hamming_distance(dense, expected), F.rows * F.cols)


def rigidity_to_prob_rank(F, claimed_error=None, budget=None):
    """
    Sampler drawing a uniform shift (x, y) and returning shift_factors(F, x, y).
    Every entry errs with probability hamming_distance(F, H_n) / 4**n.
    """
    n = _cube_size(F)
    target = hadamard_oracle(HadamardSpec(n, F.field))
    measured = _normalized_error(F, target, budget)
    if measured is None and claimed_error is None:
        raise InvalidParameters("F is too large to measure; pass claimed_error")
    size = 1 << n

    def draw(seed):
        rng = np.random.default_rng(seed)
        x, y = rng.integers(0, size, size=2)
        return int(x), int(y)

    return ProbMatrixSampler(
        label=f"hadamard-shift(n={n})",
        rows=size,
        cols=size,
        field=F.field,
        draw=draw,
        build=lambda shift: shift_factors(F, *shift),
        target=target,
        claimed_rank=F.num_terms,
        claimed_error=measured if measured is not None else Fraction(claimed_error),
        domain=lambda: product(range(size), repeat=2),
        domain_size=size * size,
    )


@dataclass(frozen=True, eq=False)
class RSRSpec:
    """
    A non-adaptive k-query random self-reduction of a 0/1 function f on n+n bits.

    x_queries(x_idx, rand) and y_queries(y_idx, rand) return k index arrays each,
    so every query row depends on x only and every query column on y only.
    g_table holds g on all 2**k answer patterns, the first query's answer being
    the most significant bit.
    """

    label: str
    n: int
    k: int
    function: Callable[[np.ndarray, np.ndarray], np.ndarray]
    x_queries: Callable[[np.ndarray, Hashable], list]
    y_queries: Callable[[np.ndarray, Hashable], list]
    g_table: tuple[int, ...]
    draw: Callable[[int], Hashable]
    domain: Callable[[], Iterable[Hashable]]
    domain_size: int

    def __post_init__(self):
        if len(self.g_table) != 1 << self.k:
            raise InvalidParameters(f"g needs {1 << self.k} values for {self.k} queries, got {len(self.g_table)}")

    def sample_queries(self, x, y, rand):
        xs = self.x_queries(np.asarray([x], dtype=np.int64), rand)
        ys = self.y_queries(np.asarray([y], dtype=np.int64), rand)
        return [(int(a[0]), int(b[0])) for a, b in zip(xs, ys)]

    def check_invariants(self, budget=None):
        """
        Enumerate every input pair and every randomness value. Raises
        InvalidParameters if some query is not uniform on {0,1}^n (rows or
        columns) or if g fails to reconstruct f.
        """
        size = 1 << self.n
        check_budget(size * size * self.domain_size, f"checking {self.label}", budget)
        idx = np.arange(size, dtype=np.int64)
        g = np.asarray(self.g_table, dtype=np.int64)
        expected = np.asarray(self.function(idx[:, None], idx[None, :]), dtype=np.int64)
        row_hits = np.zeros((self.k, size, size), dtype=np.int64)
        col_hits = np.zeros((self.k, size, size), dtype=np.int64)
        for rand in self.domain():
            xs = self.x_queries(idx, rand)
            ys = self.y_queries(idx, rand)
            code = np.zeros((size, size), dtype=np.int64)
            for i, (xq, yq) in enumerate(zip(xs, ys)):
                row_hits[i, idx, xq] += 1
                col_hits[i, idx, yq] += 1
                answers = np.asarray(self.function(xq[:, None], yq[None, :]), dtype=np.int64)
                code = (code << 1) | answers
            if np.any(g[code] != expected):
                raise InvalidParameters(f"{self.label}: g does not reconstruct f for randomness {rand}")
        share = self.domain_size // size
        if self.domain_size % size or np.any(row_hits != share) or np.any(col_hits != share):
            raise InvalidParameters(f"{self.label}: some query is not uniformly distributed")
        return True


def ip2_function(i, j):
    return np.bitwise_count(i & j).astype(np.int64) & 1


def ip2_rsr(n):
    """
    Four queries from a random pair (x', y'):
    (x+x', y+y'), (x+x', y'), (x', y+y'), (x', y') with + meaning XOR, and g = XOR.
    """
    size = 1 << n

    def x_queries(x, rand):
        xr, _ = rand
        return [x ^ xr, x ^ xr, np.full_like(x, xr), np.full_like(x, xr)]

    def y_queries(y, rand):
        _, yr = rand
        return [y ^ yr, np.full_like(y, yr), y ^ yr, np.full_like(y, yr)]

    def draw(seed):
        rng = np.random.default_rng(seed)
        xr, yr = rng.integers(0, size, size=2)
        return int(xr), int(yr)

    return RSRSpec(
        label=f"ip2-rsr(n={n})",
        n=n,
        k=4,
        function=ip2_function,
        x_queries=x_queries,
        y_queries=y_queries,
        g_table=tuple(bin(code).count("1") & 1 for code in range(16)),
        draw=draw,
        domain=lambda: product(range(size), repeat=2),
        domain_size=size * size,
    )


def function_oracle(rsr, field):
    size = 1 << rsr.n
    return EntryOracle(size, size, field, lambda i, j: field.from_bits(rsr.function(i, j)))


def rsr_term_count(poly, r):
    """Terms of the expanded composition: each monomial over S contributes r**|S|."""
    return sum(r ** m.degree for m in poly.monomials)


def rsr_prob_rank(rsr, F, claimed_error=None, budget=None):
    """
    Compose the multilinear extension P of g with z_i = <A[x_i], B[:, y_i]>.
    A monomial c * prod_{i in S} z_i expands into r**|S| rank-one terms, one per
    choice of factor index j_i for each i in S:

        left[x]  = c * prod_i A[x_i(x), j_i]
        right[y] = prod_i B[j_i, y_i(y)]

    Each entry errs with probability at most k times the normalized error of A B.
    """
    n = _cube_size(F)
    if n != rsr.n:
        raise ShapeMismatch(f"factorization is over {n} bits, the self-reduction over {rsr.n}")
    field = F.field
    poly = multilinear_extension(rsr.g_table, field)
    r = F.num_terms
    terms = rsr_term_count(poly, r)
    size = 1 << n
    check_budget(2 * size * max(terms, 1), f"expanding {terms} self-reduction terms", budget)
    target = function_oracle(rsr, field)
    measured = _normalized_error(F, target, budget)
    if measured is None and claimed_error is None:
        raise InvalidParameters("F is too large to measure; pass claimed_error")
    error = rsr.k * measured if measured is not None else Fraction(claimed_error)
    idx = np.arange(size, dtype=np.int64)
    logger.debug("%s: %d monomials in g, %d terms for r=%d", rsr.label, poly.num_monomials, terms, r)

    def build(rand):
        xs = rsr.x_queries(idx, rand)
        ys = rsr.y_queries(idx, rand)
        lefts, rights = [], []
        for mono in poly.monomials:
            left = field.array(np.full((size, 1), mono.coeff, dtype=object))
            right = field.ones((1, size))
            for i in mono.vars:
                a = F.left[xs[i]]
                b = F.right[:, ys[i]]
                left = field.reduce((left[:, :, None] * a[:, None, :]).reshape(size, -1))
                right = field.reduce((right[:, None, :] * b[None, :, :]).reshape(-1, size))
            lefts.append(left)
            rights.append(right)
        if not lefts:
            return FactoredMatrix.empty(size, size, field)
        return FactoredMatrix(np.hstack(lefts), np.vstack(rights), field)

    return ProbMatrixSampler(
        label=f"rsr({rsr.label}, r={r})",
        rows=size,
        cols=size,
        field=field,
        draw=rsr.draw,
        build=build,
        target=target,
        claimed_rank=terms,
        claimed_error=error,
        domain=rsr.domain,
        domain_size=rsr.domain_size,
    )


@dataclass(frozen=True)
class ProtocolResult:
    x: int
    y: int
    seed: int
    answer: int | Fraction | bool
    bits: int

    def to_json(self):
        answer = self.answer
        if isinstance(answer, (bool, np.bool_)):
            answer = int(answer)
        elif isinstance(answer, Fraction):
            answer = str(answer)
        return {"x": self.x, "y": self.y, "seed": self.seed, "answer": answer, "bits": self.bits}


def protocol_bits(claimed_rank):
    """ceil(log2(r + 1)): enough bits to send one of r + 1 messages."""
    return int(claimed_rank).bit_length()


def simulate_protocol(sampler, x, y, seed):
    """
    Public-coin protocol: both parties draw the same matrix from the seed, Alice
    keeps her row of the left factor and Bob his column of the right factor,
    and the answer is their inner product (or its sign in sign mode).
    """
    if not (0 <= x < sampler.rows and 0 <= y < sampler.cols):
        raise ShapeMismatch(f"inputs ({x}, {y}) outside a {sampler.rows}x{sampler.cols} matrix")
    factored = sampler.sample(seed)
    alice = factored.left[x:x + 1]
    bob = factored.right[:, y:y + 1]
    value = sampler.field.matmul(alice, bob)
    answer = sampler.predict(value)[0, 0]
    if sampler.sign_mode:
        answer = bool(answer)
    elif sampler.field.is_prime:
        answer = int(answer)
    else:
        answer = Fraction(answer)
    return ProtocolResult(x, y, seed, answer, protocol_bits(sampler.claimed_rank))


def protocol_trace(sampler, pairs, seeds):
    """Run the protocol on every (x, y) pair for every seed."""
    return [simulate_protocol(sampler, x, y, seed) for seed in seeds for x, y in pairs]


def write_trace(results, path):
    """JSON lines, one object per protocol run."""
    with open(path, "w") as file:
        for result in results:
            file.write(json.dumps(result.to_json(), sort_keys=True) + "\n")


def planted_errors(matrix, positions):
    """Copy of a dense matrix with each listed entry replaced by a different field value."""
    entries = matrix.entries.copy()
    field = matrix.field
    for i, j in positions:
        entries[i, j] = field.scalar(entries[i, j] + 1)
    return DenseMatrix(entries, field)


def exact_factorization(matrix):
    """left = matrix, right = identity: a factorization with as many terms as columns."""
    field = matrix.field
    return FactoredMatrix(matrix.entries.copy(), field.from_bits(np.eye(matrix.cols, dtype=np.int64)), field)
