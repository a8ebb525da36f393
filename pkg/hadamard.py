"""
The Walsh-Hadamard family H_n, weight windows, overlap counting and
row/column correction of low-rank approximations.

Rows and columns of a 2**n x 2**n matrix are indexed by the integer value of an
n-bit vector, variable 0 being the most significant bit.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from math import ceil, comb, floor

import numpy as np

from errors import InvalidParameters, ShapeMismatch
from exact_algebra import DenseMatrix, FactoredMatrix, FieldSpec, append_terms, check_budget

logger = logging.getLogger(__name__)


def bits(index, n):
    """The n-bit vector of an index, most significant bit first."""
    if not 0 <= index < (1 << n):
        raise ShapeMismatch(f"index {index} does not fit in {n} bits")
    return tuple((index >> (n - 1 - i)) & 1 for i in range(n))


def index_of(vector):
    index = 0
    for b in vector:
        if b not in (0, 1):
            raise InvalidParameters(f"bit vectors hold 0/1 values, got {b!r}")
        index = (index << 1) | int(b)
    return index


def weights(n):
    """Hamming weight of every index 0 .. 2**n - 1."""
    return np.bitwise_count(np.arange(1 << n, dtype=np.int64)).astype(np.int64)


@dataclass(frozen=True)
class HadamardSpec:
    n: int
    field: FieldSpec

    def __post_init__(self):
        if self.n < 0:
            raise InvalidParameters(f"n must be non-negative, got {self.n}")
        self.field.require_odd_characteristic("the Walsh-Hadamard matrix")

    @property
    def size(self):
        return 1 << self.n


@dataclass(frozen=True)
class WeightWindow:
    lo: int
    hi: int

    def __post_init__(self):
        if not 0 <= self.lo <= self.hi:
            raise InvalidParameters(f"weight window needs 0 <= lo <= hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def full(cls, n):
        return cls(0, n)

    @classmethod
    def around(cls, n, eps):
        """[(1/2 - eps) n, (1/2 + eps) n] rounded outward and clamped to [0, n]."""
        eps = Fraction(eps)
        half = Fraction(1, 2)
        return cls(max(0, floor((half - eps) * n)), min(n, ceil((half + eps) * n)))

    @property
    def width(self):
        return self.hi - self.lo + 1

    def contains(self, w):
        """Membership test; works elementwise on arrays of weights."""
        return (w >= self.lo) & (w <= self.hi)

    def weights(self):
        return range(self.lo, self.hi + 1)

    def to_json(self):
        return {"lo": self.lo, "hi": self.hi}


class EntryOracle:
    """
    A matrix given by a vectorized entry function fn(row_idx, col_idx) that
    broadcasts over index arrays and returns canonical field values.
    """

    def __init__(self, rows, cols, field, fn):
        self.rows = rows
        self.cols = cols
        self.field = field
        self.fn = fn

    def __call__(self, i, j):
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise ShapeMismatch(f"entry ({i}, {j}) outside a {self.rows}x{self.cols} matrix")
        value = self.fn(np.asarray([i], dtype=np.int64), np.asarray([j], dtype=np.int64))[0]
        return int(value) if self.field.is_prime else Fraction(value)

    def block(self, row_idx, col_idx):
        row_idx = np.asarray(row_idx, dtype=np.int64)
        col_idx = np.asarray(col_idx, dtype=np.int64)
        return self.fn(row_idx[:, None], col_idx[None, :])

    def row(self, i):
        return self.block([i], np.arange(self.cols))[0]

    def column(self, j):
        return self.block(np.arange(self.rows), [j])[:, 0]

    def dense(self, budget=None):
        check_budget(self.rows * self.cols, f"materializing a {self.rows}x{self.cols} target", budget)
        return DenseMatrix(self.block(np.arange(self.rows), np.arange(self.cols)), self.field)

    def __repr__(self):
        return f"EntryOracle({self.rows}x{self.cols} over {self.field.label})"


def hadamard_entry(x, y, field):
    """(-1)**<x, y> in the field."""
    if len(x) != len(y):
        raise ShapeMismatch(f"bit vectors of lengths {len(x)} and {len(y)}")
    overlap = sum(int(a) & int(b) for a, b in zip(x, y))
    return field.scalar(-1 if overlap % 2 else 1)


def hadamard_oracle(spec):
    field = spec.field

    def entries(row_idx, col_idx):
        return field.signs(np.bitwise_count(row_idx & col_idx))

    return EntryOracle(spec.size, spec.size, field, entries)


def materialize_hadamard(spec, budget=None):
    return hadamard_oracle(spec).dense(budget)


def out_of_window_indices(n, window):
    """Indices whose Hamming weight falls outside the window, in increasing order."""
    return np.flatnonzero(~window.contains(weights(n))).tolist()


def _checked_indices(indices, limit, what):
    unique = list(dict.fromkeys(int(i) for i in indices))
    for i in unique:
        if not 0 <= i < limit:
            raise ShapeMismatch(f"{what} index {i} out of range [0, {limit})")
    return np.asarray(unique, dtype=np.int64)


def correct_rows_columns(F, target, bad_rows, bad_cols):
    """
    Make F agree with the target on every listed row and column.

    Each bad column c gets the term (target[:, c] - F[:, c]) (x) e_c, then each
    bad row r gets e_r (x) (target[r, :] - F'[r, :]) computed against the
    column-corrected F'. One term per distinct listed line.
    """
    if (F.rows, F.cols) != (target.rows, target.cols):
        raise ShapeMismatch(f"factored {F.rows}x{F.cols} vs target {target.rows}x{target.cols}")
    field = F.field
    cols = _checked_indices(bad_cols, F.cols, "column")
    rows = _checked_indices(bad_rows, F.rows, "row")
    all_rows = np.arange(F.rows)
    all_cols = np.arange(F.cols)

    if cols.size:
        residual = field.reduce(target.block(all_rows, cols) - F.block(all_rows, cols))
        selector = field.zeros((cols.size, F.cols))
        selector[np.arange(cols.size), cols] = 1
        F = append_terms(F, residual, selector)
    if rows.size:
        residual = field.reduce(target.block(rows, all_cols) - F.block(rows, all_cols))
        selector = field.zeros((F.rows, rows.size))
        selector[rows, np.arange(rows.size)] = 1
        F = append_terms(F, selector, residual)
    logger.debug("corrected %d rows and %d columns", rows.size, cols.size)
    return F


def overlap_count(n, x_weight, s, window):
    """Number of y with |y| in the window and exactly s ones shared with a fixed x of weight x_weight."""
    if s < 0 or s > x_weight:
        return 0
    return sum(
        comb(x_weight, s) * comb(n - x_weight, k - s)
        for k in window.weights()
        if 0 <= k - s <= n - x_weight
    )


def low_ip_count(x, b, window):
    """
    Number of y with |y| in the window and <x, y> <= b, by the double sum
    over weights k and overlaps s of C(|x|, s) * C(n - |x|, k - s).
    """
    n = len(x)
    x_weight = sum(int(v) for v in x)
    return low_ip_count_by_weight(n, x_weight, b, window)


def low_ip_count_by_weight(n, x_weight, b, window):
    return sum(overlap_count(n, x_weight, s, window) for s in range(0, min(b, x_weight) + 1))
