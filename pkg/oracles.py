"""
Brute-force ground truth for tiny matrices over prime fields.

Two independent strategies:
  - brute_force_rigidity streams every matrix of the same shape and ranks only
    those closer than the running minimum;
  - min_rank_within walks every way of editing at most t entries.
cross_validate checks that the two agree with each other.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field as dataclass_field
from functools import lru_cache
from itertools import combinations, product
from math import comb

import numpy as np

from errors import BudgetExceeded, InvalidParameters, ShapeMismatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleBudget:
    max_enumeration: int = 1 << 26
    max_dim: int = 5

    def __post_init__(self):
        if self.max_enumeration < 1 or self.max_dim < 1:
            raise InvalidParameters("oracle budgets must be positive")


DEFAULT_ORACLE_BUDGET = OracleBudget()
CHUNK = 1 << 16


@lru_cache(maxsize=1 << 20)
def small_rank(entries, rows, cols, p):
    """Rank mod p of a small row-major matrix given as a tuple."""
    a = [list(entries[i * cols:(i + 1) * cols]) for i in range(rows)]
    rank = 0
    for col in range(cols):
        pivot = next((i for i in range(rank, rows) if a[i][col] % p), None)
        if pivot is None:
            continue
        a[rank], a[pivot] = a[pivot], a[rank]
        inv = pow(a[rank][col], -1, p)
        a[rank] = [v * inv % p for v in a[rank]]
        for i in range(rank + 1, rows):
            factor = a[i][col] % p
            if factor:
                a[i] = [(v - factor * w) % p for v, w in zip(a[i], a[rank])]
        rank += 1
        if rank == rows:
            break
    return rank


def batched_rank(stack, p):
    """
    Rank mod p of every matrix in a (batch, rows, cols) stack. Rows below the
    pivot become lead * row - factor * pivot_row, so no inverses are needed and
    every intermediate stays below p**2.
    """
    a = np.array(stack, dtype=np.int64) % p
    batch, rows, cols = a.shape
    ranks = np.zeros(batch, dtype=np.int64)
    row_ids = np.arange(rows)
    for col in range(cols):
        open_rows = (a[:, :, col] != 0) & (row_ids[None, :] >= ranks[:, None])
        has_pivot = open_rows.any(axis=1)
        if not has_pivot.any():
            continue
        b = np.flatnonzero(has_pivot)
        top = ranks[b]
        pivot = open_rows[b].argmax(axis=1)
        pivot_rows = a[b, pivot].copy()
        a[b, pivot] = a[b, top]
        a[b, top] = pivot_rows
        factor = np.where(row_ids[None, :] > top[:, None], a[b, :, col], 0)
        lead = pivot_rows[:, col]
        a[b] = (a[b] * lead[:, None, None] - factor[:, :, None] * pivot_rows[:, None, :]) % p
        ranks[b] += 1
    return ranks


def _check_matrix(M, budget):
    if not M.field.is_prime:
        raise InvalidParameters("brute-force oracles need a prime field")
    if max(M.rows, M.cols) > budget.max_dim:
        raise BudgetExceeded(f"{M.rows}x{M.cols} exceeds the oracle dimension limit {budget.max_dim}")
    if M.field.p >= 1 << 31:
        raise InvalidParameters(f"brute-force oracles need p < 2**31, got {M.field.p}")


def _entries(M):
    return tuple(int(v) for v in M.entries.flat)


def _candidates(size, p, count):
    """Every matrix with `size` entries over F_p, row-major, in chunks of CHUNK."""
    powers = p ** np.arange(size - 1, -1, -1, dtype=np.int64)
    for start in range(0, count, CHUNK):
        k = np.arange(start, min(start + CHUNK, count), dtype=np.int64)
        yield (k[:, None] // powers[None, :]) % p


def _rigidity_scan(M, wanted, budget):
    """Distance from M to the nearest matrix of rank <= r, for every r in `wanted`."""
    _check_matrix(M, budget)
    p = M.field.p
    size = M.rows * M.cols
    count = p ** size
    if count > budget.max_enumeration:
        raise BudgetExceeded(f"{count} candidate matrices exceed the enumeration budget {budget.max_enumeration}")
    base = _entries(M)
    target = np.asarray(base, dtype=np.int64)
    base_rank = small_rank(base, M.rows, M.cols, p)
    nnz = int(np.count_nonzero(target))
    # the zero matrix is the only rank-0 candidate
    best = {r: 0 if r >= base_rank else nnz for r in wanted}
    open_ranks = [r for r in best if 0 < r < base_rank]
    scanned = 0
    for chunk in _candidates(size, p, count):
        # one changed entry moves the rank by at most one
        if not open_ranks or all(best[r] == base_rank - r for r in open_ranks):
            break
        distance = np.count_nonzero(chunk != target, axis=1)
        keep = distance < max(best[r] for r in open_ranks)
        if not keep.any():
            continue
        distance = distance[keep]
        ranks = batched_rank(chunk[keep].reshape(-1, M.rows, M.cols), p)
        scanned += len(ranks)
        for r in open_ranks:
            hit = distance[ranks <= r]
            if hit.size:
                best[r] = min(best[r], int(hit.min()))
    logger.debug("ranked %d of %d candidate %dx%d matrices over F%d", scanned, count, M.rows, M.cols, p)
    return best


def brute_force_rigidity(M, r, budget=DEFAULT_ORACLE_BUDGET):
    """Fewest entries of M to change so that the rank drops to at most r."""
    r = max(r, 0)
    return _rigidity_scan(M, [r], budget)[r]


def rigidity_profile(M, budget=DEFAULT_ORACLE_BUDGET):
    """brute_force_rigidity for every r = 0 .. min(rows, cols) in one enumeration."""
    top = min(M.rows, M.cols)
    best = _rigidity_scan(M, range(top + 1), budget)
    return [best[r] for r in range(top + 1)]


def _edit_count(size, t, p):
    return sum(comb(size, s) * (p - 1) ** s for s in range(t + 1))


def _edited(base, s, p):
    """Every matrix differing from `base` in exactly s entries, in chunks of about CHUNK."""
    start = np.asarray(base, dtype=np.int64)
    pending, held = [], 0
    for positions in combinations(range(len(base)), s):
        choices = [[v for v in range(p) if v != base[i]] for i in positions]
        values = np.array(list(product(*choices)), dtype=np.int64).reshape(-1, s)
        edited = np.repeat(start[None, :], len(values), axis=0)
        edited[:, list(positions)] = values
        pending.append(edited)
        held += len(values)
        if held >= CHUNK:
            yield np.concatenate(pending)
            pending, held = [], 0
    if pending:
        yield np.concatenate(pending)


def min_rank_profile(M, t_max=None, budget=DEFAULT_ORACLE_BUDGET):
    """Smallest rank reachable with at most t edits, for every t = 0 .. t_max."""
    _check_matrix(M, budget)
    p = M.field.p
    size = M.rows * M.cols
    t_max = size if t_max is None else min(t_max, size)
    if t_max < 0:
        raise InvalidParameters(f"edit budget must be non-negative, got {t_max}")
    edits = _edit_count(size, t_max, p)
    if edits > budget.max_enumeration:
        raise BudgetExceeded(f"{edits} edit patterns exceed the enumeration budget {budget.max_enumeration}")
    base = _entries(M)
    nnz = sum(1 for v in base if v)
    best = [small_rank(base, M.rows, M.cols, p)]
    for s in range(1, t_max + 1):
        if s >= nnz:
            best.append(0)
            continue
        lowest = best[-1]
        floor = max(best[-1] - 1, 1)
        if lowest > floor:
            for batch in _edited(base, s, p):
                lowest = min(lowest, int(batched_rank(batch.reshape(-1, M.rows, M.cols), p).min()))
                if lowest == floor:
                    break
        best.append(lowest)
    return best


def min_rank_within(M, t, budget=DEFAULT_ORACLE_BUDGET):
    """Smallest rank reachable by changing at most t entries of M."""
    if t < 0:
        raise InvalidParameters(f"edit budget must be non-negative, got {t}")
    return min_rank_profile(M, t, budget)[-1]


@dataclass(frozen=True)
class ConsistencyReport:
    rigidity: list[int]
    min_ranks: list[int]
    violations: list[str] = dataclass_field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def to_json(self):
        return {
            "rigidity": self.rigidity,
            "min_ranks": self.min_ranks,
            "violations": self.violations,
        }


def cross_validate(M, budget=DEFAULT_ORACLE_BUDGET):
    """
    Check that both oracles describe the same trade-off: rigidity at the rank
    reachable with t edits is at most t, the rank reachable with R(r) edits is at
    most r, and both profiles are non-increasing.
    """
    if M.rows == 0 or M.cols == 0:
        raise ShapeMismatch("cross validation needs a nonempty matrix")
    rigidity = rigidity_profile(M, budget)
    min_ranks = min_rank_profile(M, None, budget)
    violations = []
    for t, reachable in enumerate(min_ranks):
        if rigidity[reachable] > t:
            violations.append(f"R({reachable}) = {rigidity[reachable]} > {t} although {t} edits reach rank {reachable}")
    for r, cost in enumerate(rigidity):
        if min_ranks[cost] > r:
            violations.append(f"{cost} edits reach only rank {min_ranks[cost]} > {r}")
    for name, values in (("rigidity", rigidity), ("min-rank", min_ranks)):
        if any(b > a for a, b in zip(values, values[1:])):
            violations.append(f"{name} profile is not non-increasing: {values}")
    if violations:
        logger.warning("oracle disagreement on %r: %s", M, violations)
    return ConsistencyReport(rigidity, min_ranks, violations)
