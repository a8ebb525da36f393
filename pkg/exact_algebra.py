"""
Exact scalars and matrices over prime fields F_p and the rationals Q.

Prime-field data lives in numpy arrays of canonical residues in [0, p): int64
when p < 2**31 (so that a product of two residues fits in 64 bits), object
arrays of Python ints otherwise. Rational data lives in object arrays of
fractions.Fraction. Nothing in here ever touches floating point.
"""
from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass
from fractions import Fraction
from math import lcm

import numpy as np
import sympy

from errors import BudgetExceeded, InvalidParameters, ShapeMismatch

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 1 << 28
BUDGET_ENV = "RIGIDLAB_BUDGET"

_MAX_MODULUS = 1 << 61
_INT64_MODULUS = 1 << 31
_INT64_MAX = (1 << 63) - 1

_to_fraction = np.frompyfunc(Fraction, 1, 1)


def entry_budget(env=None):
    """Return the materialization budget in scalar entries ($RIGIDLAB_BUDGET or 2**28)."""
    raw = (os.environ if env is None else env).get(BUDGET_ENV, "").strip()
    if not raw:
        return DEFAULT_BUDGET
    try:
        value = int(raw)
    except ValueError:
        raise InvalidParameters(f"{BUDGET_ENV} must be a positive integer, got {raw!r}") from None
    if value <= 0:
        raise InvalidParameters(f"{BUDGET_ENV} must be a positive integer, got {raw!r}")
    return value


def check_budget(entries, what, budget=None):
    limit = entry_budget() if budget is None else budget
    if entries > limit:
        raise BudgetExceeded(
            f"{what} needs {entries} scalar entries, over the budget of {limit} "
            f"(raise it with {BUDGET_ENV})"
        )


@dataclass(frozen=True)
class FieldSpec:
    """An exact field: F_p for a prime p < 2**61, or the rationals."""

    kind: str
    p: int | None = None

    def __post_init__(self):
        if self.kind == "prime":
            if (
                not isinstance(self.p, int)
                or self.p < 2
                or self.p >= _MAX_MODULUS
                or not sympy.isprime(self.p)
            ):
                raise InvalidParameters(f"field modulus must be a prime below 2**61, got {self.p!r}")
        elif self.kind == "rational":
            if self.p is not None:
                raise InvalidParameters("the rational field takes no modulus")
        else:
            raise InvalidParameters(f"unknown field kind {self.kind!r}")

    @classmethod
    def prime(cls, p):
        return cls("prime", int(p))

    @classmethod
    def rationals(cls):
        return cls("rational")

    @classmethod
    def parse(cls, text):
        """Parse a field name such as "F3", "GF7", "p=5" or "Q"."""
        label = text.strip()
        if label.upper() in ("Q", "QQ", "RATIONAL", "RATIONALS"):
            return cls.rationals()
        for prefix in ("GF", "F", "P="):
            if label.upper().startswith(prefix):
                digits = label[len(prefix):]
                if digits.isdigit():
                    return cls.prime(int(digits))
        raise InvalidParameters(f"cannot parse field {text!r}; use e.g. F3 or Q")

    @property
    def is_prime(self):
        return self.kind == "prime"

    @property
    def characteristic(self):
        return self.p if self.is_prime else 0

    @property
    def label(self):
        return f"F{self.p}" if self.is_prime else "Q"

    @property
    def dtype(self):
        if self.is_prime and self.p < _INT64_MODULUS:
            return np.int64
        return object

    def require_odd_characteristic(self, what):
        if self.characteristic == 2:
            raise InvalidParameters(
                f"{what} needs a field of characteristic other than 2: over F2, -1 == 1 "
                "and H_n degenerates to the rank-one all-ones matrix"
            )

    # scalars

    def scalar(self, value):
        """Coerce an int or Fraction into this field."""
        if self.is_prime:
            if isinstance(value, Fraction):
                if value.denominator % self.p == 0:
                    raise InvalidParameters(f"{value} has no image in {self.label}")
                return value.numerator * pow(value.denominator, -1, self.p) % self.p
            return int(value) % self.p
        return Fraction(value)

    def inverse(self, value):
        if value == 0:
            raise ZeroDivisionError(f"0 has no inverse in {self.label}")
        if self.is_prime:
            return pow(int(value), -1, self.p)
        return 1 / Fraction(value)

    def format_scalar(self, value):
        """JSON/CSV representation: residues as ints, rationals as "num/den" strings."""
        if self.is_prime:
            return int(value)
        return str(Fraction(value))

    def parse_scalar(self, text):
        if isinstance(text, int):
            return self.scalar(text)
        return self.scalar(Fraction(str(text).strip()))

    # arrays

    def array(self, values):
        """Coerce nested sequences / arrays of ints or Fractions into a canonical field array."""
        raw = np.asarray(values, dtype=object) if not isinstance(values, np.ndarray) else values
        if self.is_prime:
            if raw.dtype != object:
                return np.mod(raw.astype(np.int64), self.p).astype(self.dtype)
            if raw.size and any(isinstance(v, Fraction) for v in raw.flat):
                reduced = np.frompyfunc(self.scalar, 1, 1)(raw)
            else:
                reduced = np.mod(raw, self.p)
            return np.asarray(reduced, dtype=object).astype(self.dtype)
        if raw.dtype != object:
            # astype(object) yields Python ints, so Fractions never wrap fixed-width numpy ints
            raw = raw.astype(np.int64).astype(object)
        return np.asarray(_to_fraction(raw), dtype=object).reshape(raw.shape)

    def reduce(self, arr):
        """Bring the result of integer arithmetic back to canonical form."""
        if self.is_prime:
            return np.mod(arr, self.p).astype(self.dtype)
        if arr.dtype != object or (arr.size and not isinstance(arr.flat[0], Fraction)):
            return self.array(arr)
        return arr

    def zeros(self, shape):
        if self.dtype is object:
            return np.full(shape, 0 if self.is_prime else Fraction(0), dtype=object)
        return np.zeros(shape, dtype=np.int64)

    def ones(self, shape):
        if self.dtype is object:
            return np.full(shape, 1 if self.is_prime else Fraction(1), dtype=object)
        return np.ones(shape, dtype=np.int64)

    def from_bits(self, bits):
        """Map a 0/1 integer array into the field."""
        return self.array(np.asarray(bits, dtype=np.int64))

    def signs(self, parity):
        """Map a 0/1 parity array to (-1)**parity in the field."""
        parity = np.asarray(parity, dtype=np.int64) & 1
        return self.array(1 - 2 * parity)

    def matmul(self, a, b):
        """Exact product of two field arrays."""
        if a.shape[-1] != b.shape[0]:
            raise ShapeMismatch(f"cannot multiply {a.shape} by {b.shape}")
        if not self.is_prime:
            return self.reduce(np.asarray(a @ b, dtype=object))
        if self.dtype is object:
            return np.mod(a @ b, self.p).astype(object)
        inner = a.shape[-1]
        chunk = max(1, _INT64_MAX // max(1, (self.p - 1) ** 2))
        out = np.zeros(a.shape[:-1] + b.shape[1:], dtype=np.int64)
        for start in range(0, inner, chunk):
            out = (out + (a[..., start:start + chunk] @ b[start:start + chunk]) % self.p) % self.p
        return out

    def to_json(self):
        return {"kind": self.kind, "p": self.p} if self.is_prime else {"kind": self.kind}

    @classmethod
    def from_json(cls, data):
        if data["kind"] == "prime":
            return cls.prime(data["p"])
        return cls(data["kind"])


def _python_scalar(field, value):
    return int(value) if field.is_prime else Fraction(value)


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    entries: np.ndarray
    field: FieldSpec

    def __post_init__(self):
        if self.entries.ndim != 2:
            raise ShapeMismatch(f"a matrix needs 2-D entries, got shape {self.entries.shape}")

    @classmethod
    def from_rows(cls, rows, field):
        entries = field.array(rows)
        if entries.ndim != 2:
            raise ShapeMismatch("rows must all have the same length")
        return cls(entries, field)

    @classmethod
    def zeros(cls, rows, cols, field):
        return cls(field.zeros((rows, cols)), field)

    @classmethod
    def ones(cls, rows, cols, field):
        return cls(field.ones((rows, cols)), field)

    @classmethod
    def identity(cls, size, field):
        return cls(field.from_bits(np.eye(size, dtype=np.int64)), field)

    @property
    def rows(self):
        return self.entries.shape[0]

    @property
    def cols(self):
        return self.entries.shape[1]

    @property
    def shape(self):
        return self.entries.shape

    def entry(self, i, j):
        return _python_scalar(self.field, self.entries[i, j])

    def to_rows(self):
        return [[_python_scalar(self.field, v) for v in row] for row in self.entries]

    def transpose(self):
        return DenseMatrix(self.entries.T.copy(), self.field)

    def equals(self, other):
        return (
            self.field == other.field
            and self.shape == other.shape
            and bool(np.all(self.entries == other.entries))
        )

    def to_json(self):
        return {
            "rows": self.rows,
            "cols": self.cols,
            "field": self.field.to_json(),
            "entries": [self.field.format_scalar(v) for v in self.entries.flat],
        }

    @classmethod
    def from_json(cls, data):
        field = FieldSpec.from_json(data["field"])
        rows, cols = data["rows"], data["cols"]
        values = [field.parse_scalar(v) for v in data["entries"]]
        if len(values) != rows * cols:
            raise ShapeMismatch(f"expected {rows * cols} entries, got {len(values)}")
        entries = field.array(np.array(values, dtype=object).reshape(rows, cols))
        return cls(entries, field)

    def to_csv(self):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        for row in self.entries:
            writer.writerow([self.field.format_scalar(v) for v in row])
        return buffer.getvalue()

    @classmethod
    def from_csv(cls, text, field):
        rows = [
            [field.parse_scalar(cell) for cell in row]
            for row in csv.reader(io.StringIO(text))
            if row
        ]
        return cls.from_rows(rows, field)

    def __repr__(self):
        return f"DenseMatrix({self.rows}x{self.cols} over {self.field.label})"


@dataclass(frozen=True, eq=False)
class FactoredMatrix:
    """
    A matrix kept as left @ right, i.e. the sum over k of the outer products
    left[:, k] (x) right[k, :]. The dense value is only built by materialize().
    """

    left: np.ndarray
    right: np.ndarray
    field: FieldSpec

    def __post_init__(self):
        if self.left.ndim != 2 or self.right.ndim != 2:
            raise ShapeMismatch("factors must be 2-D")
        if self.left.shape[1] != self.right.shape[0]:
            raise ShapeMismatch(
                f"left factor has {self.left.shape[1]} terms, right factor has {self.right.shape[0]}"
            )

    @classmethod
    def empty(cls, rows, cols, field):
        return cls(field.zeros((rows, 0)), field.zeros((0, cols)), field)

    @classmethod
    def from_terms(cls, rows, cols, terms, field):
        factored = cls.empty(rows, cols, field)
        for left, right in terms:
            factored = append_rank_one(factored, left, right)
        return factored

    @property
    def rows(self):
        return self.left.shape[0]

    @property
    def cols(self):
        return self.right.shape[1]

    @property
    def num_terms(self):
        return self.left.shape[1]

    @property
    def terms(self):
        return [(self.left[:, k], self.right[k, :]) for k in range(self.num_terms)]

    def entry(self, i, j):
        return _python_scalar(self.field, self.field.matmul(self.left[i:i + 1], self.right[:, j:j + 1])[0, 0])

    def row(self, i):
        return self.field.matmul(self.left[i:i + 1], self.right)[0]

    def column(self, j):
        return self.field.matmul(self.left, self.right[:, j:j + 1])[:, 0]

    def block(self, row_idx, col_idx):
        """Dense values of the sub-matrix on the given row and column indices."""
        return self.field.matmul(self.left[row_idx], self.right[:, col_idx])

    def select(self, row_idx, col_idx):
        """Re-index rows and columns without materializing (rows/cols may repeat)."""
        return FactoredMatrix(self.left[row_idx], self.right[:, col_idx], self.field)

    def scaled(self, factor):
        factor = self.field.scalar(factor)
        return FactoredMatrix(self.field.reduce(self.left * factor), self.right, self.field)

    def plus(self, other):
        """Sum of two factored matrices: the term lists are concatenated."""
        if (self.rows, self.cols) != (other.rows, other.cols) or self.field != other.field:
            raise ShapeMismatch("cannot add factored matrices of different shape or field")
        return FactoredMatrix(
            np.hstack([self.left, other.left]), np.vstack([self.right, other.right]), self.field
        )

    def __repr__(self):
        return f"FactoredMatrix({self.rows}x{self.cols}, {self.num_terms} terms over {self.field.label})"


def rank(M):
    """Exact rank of a dense matrix over its field."""
    if M.rows == 0 or M.cols == 0:
        raise ShapeMismatch("rank needs a nonempty matrix")
    if M.field.is_prime:
        return _rank_mod_p(M.entries, M.field.p)
    return _rank_fraction_free(M.entries)


def _rank_mod_p(entries, p):
    a = entries.copy()
    rows, cols = a.shape
    rank_ = 0
    for col in range(cols):
        if rank_ == rows:
            break
        nonzero = np.flatnonzero(a[rank_:, col])
        if nonzero.size == 0:
            continue
        pivot = rank_ + nonzero[0]
        if pivot != rank_:
            a[[rank_, pivot]] = a[[pivot, rank_]]
        inv = pow(int(a[rank_, col]), -1, p)
        a[rank_, col:] = (a[rank_, col:] * inv) % p
        below = rank_ + 1 + np.flatnonzero(a[rank_ + 1:, col])
        if below.size:
            factors = a[below, col]
            a[below, col:] = (a[below, col:] - np.outer(factors, a[rank_, col:])) % p
        rank_ += 1
    return rank_


def _rank_fraction_free(entries):
    # Bareiss elimination on the integer matrix obtained by clearing each row's denominators.
    rows, cols = entries.shape
    a = np.empty((rows, cols), dtype=object)
    for i in range(rows):
        scale = lcm(*(Fraction(v).denominator for v in entries[i]))
        a[i] = [int(Fraction(v) * scale) for v in entries[i]]
    previous = 1
    rank_ = 0
    for col in range(cols):
        if rank_ == rows:
            break
        nonzero = [i for i in range(rank_, rows) if a[i, col] != 0]
        if not nonzero:
            continue
        pivot = nonzero[0]
        if pivot != rank_:
            a[[rank_, pivot]] = a[[pivot, rank_]]
        lead = a[rank_, col]
        if rank_ + 1 < rows:
            lower = a[rank_ + 1:, col:]
            a[rank_ + 1:, col:] = (lead * lower - np.outer(a[rank_ + 1:, col], a[rank_, col:])) // previous
        previous = lead
        rank_ += 1
    return rank_


def hamming_distance(M, N):
    """Number of positions where two matrices of equal shape and field differ."""
    if M.shape != N.shape:
        raise ShapeMismatch(f"shapes differ: {M.shape} vs {N.shape}")
    if M.field != N.field:
        raise ShapeMismatch(f"fields differ: {M.field.label} vs {N.field.label}")
    return int(np.count_nonzero(M.entries != N.entries))


def materialize(F, budget=None):
    check_budget(F.rows * F.cols, f"materializing a {F.rows}x{F.cols} matrix", budget)
    return DenseMatrix(F.field.matmul(F.left, F.right), F.field)


def append_rank_one(F, left, right):
    """Return F plus the outer product left (x) right (one more term)."""
    left = F.field.array(left)
    right = F.field.array(right)
    if left.shape != (F.rows,) or right.shape != (F.cols,):
        raise ShapeMismatch(
            f"rank-one term {left.shape} x {right.shape} does not fit a {F.rows}x{F.cols} matrix"
        )
    return append_terms(F, left[:, None], right[None, :])


def append_terms(F, left_block, right_block):
    """Return F plus left_block @ right_block, appended term by term."""
    left_block = F.field.array(left_block)
    right_block = F.field.array(right_block)
    if left_block.ndim != 2 or right_block.ndim != 2:
        raise ShapeMismatch("term blocks must be 2-D")
    if left_block.shape[0] != F.rows or right_block.shape[1] != F.cols:
        raise ShapeMismatch(
            f"term block {left_block.shape} x {right_block.shape} does not fit a {F.rows}x{F.cols} matrix"
        )
    if left_block.shape[1] != right_block.shape[0]:
        raise ShapeMismatch("term blocks disagree on the number of terms")
    return FactoredMatrix(
        np.hstack([F.left, left_block]), np.vstack([F.right, right_block]), F.field
    )
