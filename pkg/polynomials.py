"""
Sparse multilinear polynomials and the bridge from polynomials to low-rank matrices.

Variables are 0-based. A 0/1 point of n variables is also addressed by its
integer index with variable 0 as the most significant bit, so variable i is
bit (n - 1 - i) of the index.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import comb

import numpy as np

from errors import InvalidParameters, InvariantViolation, ShapeMismatch
from exact_algebra import FactoredMatrix, FieldSpec, check_budget

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Monomial:
    vars: tuple[int, ...]
    coeff: int | Fraction

    def __post_init__(self):
        if any(a >= b for a, b in zip(self.vars, self.vars[1:])):
            raise InvalidParameters(f"monomial variables must be strictly increasing, got {self.vars}")

    @property
    def degree(self):
        return len(self.vars)


@dataclass(frozen=True)
class SparseMultilinearPoly:
    n_vars: int
    monomials: tuple[Monomial, ...]
    field: FieldSpec

    @classmethod
    def from_terms(cls, n_vars, terms, field):
        """
        Build a polynomial from (variables, coefficient) pairs or a dict of them.
        Repeated variables collapse (v*v = v on 0/1 points), equal variable sets
        are merged and zero coefficients are dropped.
        """
        items = terms.items() if isinstance(terms, dict) else terms
        merged = defaultdict(int)
        for variables, coeff in items:
            key = tuple(sorted(set(variables)))
            if key and (key[0] < 0 or key[-1] >= n_vars):
                raise ShapeMismatch(f"variables {key} out of range for {n_vars} variables")
            merged[key] += field.scalar(coeff)
        monomials = []
        for key in sorted(merged, key=lambda vs: (len(vs), vs)):
            coeff = field.scalar(merged[key])
            if coeff != 0:
                monomials.append(Monomial(key, coeff))
        return cls(n_vars, tuple(monomials), field)

    @classmethod
    def constant(cls, n_vars, value, field):
        return cls.from_terms(n_vars, [((), value)], field)

    @property
    def num_monomials(self):
        return len(self.monomials)

    @property
    def degree(self):
        return max((m.degree for m in self.monomials), default=0)

    def as_dict(self):
        return {m.vars: m.coeff for m in self.monomials}

    def scaled(self, factor):
        factor = self.field.scalar(factor)
        return SparseMultilinearPoly.from_terms(
            self.n_vars, [(m.vars, m.coeff * factor) for m in self.monomials], self.field
        )

    def plus(self, other):
        if other.n_vars != self.n_vars or other.field != self.field:
            raise ShapeMismatch("cannot add polynomials over different variables or fields")
        return SparseMultilinearPoly.from_terms(
            self.n_vars,
            [(m.vars, m.coeff) for m in self.monomials] + [(m.vars, m.coeff) for m in other.monomials],
            self.field,
        )

    def to_json(self):
        return {
            "n_vars": self.n_vars,
            "field": self.field.to_json(),
            "monomials": [
                {"vars": list(m.vars), "coeff": str(m.coeff)} for m in self.monomials
            ],
        }

    @classmethod
    def from_json(cls, data):
        field = FieldSpec.from_json(data["field"])
        return cls.from_terms(
            data["n_vars"],
            [(tuple(m["vars"]), field.parse_scalar(m["coeff"])) for m in data["monomials"]],
            field,
        )


@dataclass(frozen=True)
class WeightInterpolant:
    """
    P(w) = sum_j coeffs[j] * C(w, j), built so that P(k + i) = targets[i - 1]
    for i = 1..r. On a 0/1 point z, C(|z|, j) is the elementary symmetric
    polynomial e_j(z), which is how the interpolant becomes a multilinear polynomial.
    """

    k: int
    r: int
    coeffs: tuple[int, ...]

    @property
    def degree(self):
        nonzero = [j for j, a in enumerate(self.coeffs) if a != 0]
        return nonzero[-1] if nonzero else 0

    def value_at(self, w):
        return sum(a * comb(w, j) for j, a in enumerate(self.coeffs))

    def to_json(self):
        return {"k": self.k, "r": self.r, "coeffs": [str(a) for a in self.coeffs]}


def _binom(m, j):
    # C(m, j) for any integer m, including negative m.
    if j < 0:
        return 0
    if m >= 0:
        return comb(m, j)
    return (-1) ** j * comb(j - m - 1, j)


def _forward_differences(values):
    diffs = []
    row = list(values)
    while row:
        diffs.append(row[0])
        row = [b - a for a, b in zip(row, row[1:])]
    return diffs


def weight_interpolant(k, targets):
    """
    Integer-coefficient interpolant through (k+1, c_1), ..., (k+r, c_r) in the
    binomial basis C(w, j). The anchor k may be -1 (first point at weight 0).
    """
    targets = [int(c) for c in targets]
    r = len(targets)
    if r < 1:
        raise InvalidParameters("weight_interpolant needs at least one target")
    if k < -1:
        raise InvalidParameters(f"offset k must be >= -1, got {k}")
    anchored = _forward_differences(targets)
    at_origin = [
        sum(d * _binom(w - k - 1, j) for j, d in enumerate(anchored)) for w in range(r)
    ]
    interpolant = WeightInterpolant(k, r, tuple(_forward_differences(at_origin)))
    for i, c in enumerate(targets, start=1):
        if interpolant.value_at(k + i) != c:
            raise InvariantViolation(f"interpolant misses target {c} at weight {k + i}")
    return interpolant


def interpolant_to_poly(W, n, field, budget=None):
    """Expand sum_j a_j * e_j(z_1..z_n) with coefficients reduced into the field."""
    if n < W.r - 1:
        raise InvalidParameters(f"{n} variables cannot carry a degree-{W.r - 1} interpolant")
    used = [(j, field.scalar(a)) for j, a in enumerate(W.coeffs)]
    used = [(j, c) for j, c in used if c != 0]
    check_budget(sum(comb(n, j) for j, _ in used), "expanding the weight interpolant", budget)
    monomials = tuple(
        Monomial(variables, c) for j, c in used for variables in combinations(range(n), j)
    )
    logger.debug("interpolant over %d variables expanded to %d monomials", n, len(monomials))
    return SparseMultilinearPoly(n, monomials, field)


def evaluate(P, point):
    """Evaluate at a 0/1 point: each monomial contributes its coefficient iff all its variables are 1."""
    point = [int(v) for v in point]
    if len(point) != P.n_vars:
        raise ShapeMismatch(f"point has {len(point)} coordinates, polynomial has {P.n_vars} variables")
    total = sum(m.coeff for m in P.monomials if all(point[v] for v in m.vars))
    return P.field.scalar(total)


def _mask(variables, n, offset=0):
    mask = 0
    for v in variables:
        mask |= 1 << (n - 1 - (v - offset))
    return mask


def truth_table(P, budget=None):
    """Values of P on all 2**n_vars points, as a field array indexed MSB-first."""
    size = 1 << P.n_vars
    check_budget(size, "tabulating a polynomial", budget)
    idx = np.arange(size, dtype=np.int64)
    table = P.field.zeros(size)
    for m in P.monomials:
        mask = _mask(m.vars, P.n_vars)
        table = P.field.reduce(table + P.field.from_bits((idx & mask) == mask) * m.coeff)
    return table


def substitute_gates(P, gates, n):
    """
    Replace each z_g by the monomial of gate g over 2n variables (x then y).
    gates[g] is a pair (x_vars, y_vars) of 0-based input indices.
    """
    if len(gates) != P.n_vars:
        raise ShapeMismatch(f"{len(gates)} gates for a polynomial in {P.n_vars} variables")
    terms = []
    for m in P.monomials:
        variables = set()
        for g in m.vars:
            x_vars, y_vars = gates[g]
            variables.update(x_vars)
            variables.update(n + j for j in y_vars)
        terms.append((variables, m.coeff))
    return SparseMultilinearPoly.from_terms(2 * n, terms, P.field)


def substitute_products(P):
    """z_i -> x_i * y_i. The monomial count is unchanged."""
    n = P.n_vars
    return substitute_gates(P, [((i,), (i,)) for i in range(n)], n)


def shifted_substitute(P, shift):
    """P(z XOR shift), using z_i XOR 1 = 1 - z_i on 0/1 points."""
    shift = [int(b) for b in shift]
    if len(shift) != P.n_vars:
        raise ShapeMismatch(f"shift has {len(shift)} coordinates, polynomial has {P.n_vars} variables")
    terms = []
    for m in P.monomials:
        flipped = [v for v in m.vars if shift[v]]
        kept = [v for v in m.vars if not shift[v]]
        for size in range(len(flipped) + 1):
            sign = -1 if size % 2 else 1
            for chosen in combinations(flipped, size):
                terms.append((kept + list(chosen), m.coeff * sign))
    return SparseMultilinearPoly.from_terms(P.n_vars, terms, P.field)


def poly_to_factored(P, budget=None):
    """
    One outer-product term per monomial of P(x, y): the left vector is the
    monomial's x-part on every x, the right vector its coefficient times the
    y-part on every y.
    """
    if P.n_vars % 2:
        raise InvalidParameters(f"a polynomial over x and y needs an even variable count, got {P.n_vars}")
    n = P.n_vars // 2
    size = 1 << n
    m = P.num_monomials
    check_budget(2 * size * max(m, 1), f"factoring a {m}-monomial polynomial over 2^{n} points", budget)
    field = P.field
    x_masks = np.array(
        [_mask([v for v in mono.vars if v < n], n) for mono in P.monomials], dtype=np.int64
    )
    y_masks = np.array(
        [_mask([v for v in mono.vars if v >= n], n, offset=n) for mono in P.monomials], dtype=np.int64
    )
    coeffs = field.array(np.array([mono.coeff for mono in P.monomials], dtype=object))
    idx = np.arange(size, dtype=np.int64)
    left = field.from_bits((idx[:, None] & x_masks[None, :]) == x_masks[None, :])
    right_bits = field.from_bits((idx[None, :] & y_masks[:, None]) == y_masks[:, None])
    right = field.reduce(right_bits * coeffs[:, None])
    return FactoredMatrix(left, right, field)


def multilinear_extension(table, field):
    """The unique multilinear polynomial agreeing with a table of 2**k values (Moebius inversion)."""
    values = list(table)
    size = len(values)
    if size == 0 or size & (size - 1):
        raise InvalidParameters(f"table length must be a power of two, got {size}")
    k = size.bit_length() - 1
    coeffs = [field.scalar(v) for v in values]
    for b in range(k):
        bit = 1 << b
        for mask in range(size):
            if mask & bit:
                coeffs[mask] = field.scalar(coeffs[mask] - coeffs[mask ^ bit])
    terms = [
        (tuple(i for i in range(k) if mask >> (k - 1 - i) & 1), c)
        for mask, c in enumerate(coeffs)
    ]
    return SparseMultilinearPoly.from_terms(k, terms, field)
