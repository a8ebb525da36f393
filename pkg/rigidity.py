"""
Non-rigidity constructions for the Walsh-Hadamard matrix and SYM of AND matrices.

Three pipelines share one shape: build an interpolating polynomial on a weight
window, substitute gate monomials (x_i * y_i for the inner product), factor it
into one rank-one term per monomial, optionally correct whole rows and columns,
then count how many entries still differ from the target.

* valiant_nonrigidity: low error rate, every row changed in few places.
* high_error_nonrigidity: a randomly shifted window, error at most 1/r per entry.
* sym_and_nonrigidity / sym_and_circuit_nonrigidity: any symmetric outer function.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field as dataclass_field
from fractions import Fraction
from math import ceil, comb, floor, log, sqrt

import numpy as np
import sympy

from errors import BudgetExceeded, InvalidParameters, InvariantViolation, ShapeMismatch
from exact_algebra import FieldSpec, check_budget, materialize, rank
from hadamard import (
    EntryOracle,
    HadamardSpec,
    WeightWindow,
    correct_rows_columns,
    hadamard_oracle,
    low_ip_count_by_weight,
    out_of_window_indices,
    overlap_count,
)
from polynomials import (
    SparseMultilinearPoly,
    WeightInterpolant,
    interpolant_to_poly,
    poly_to_factored,
    shifted_substitute,
    substitute_gates,
    substitute_products,
    weight_interpolant,
)

logger = logging.getLogger(__name__)

DEFAULT_FIELD = FieldSpec.prime(3)


def as_fraction(value):
    """Exact rational from an int, Fraction, decimal string or float (floats via their shortest repr)."""
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


@dataclass(frozen=True)
class SymmetricFunctionSpec:
    """A symmetric function of n bits, given by its integer value at each Hamming weight."""

    n: int
    values: tuple[int, ...]
    name: str = "custom"

    def __post_init__(self):
        if self.n < 0:
            raise InvalidParameters(f"n must be non-negative, got {self.n}")
        if len(self.values) != self.n + 1:
            raise ShapeMismatch(f"a symmetric function of {self.n} bits needs {self.n + 1} values")
        if not all(isinstance(v, (int, np.integer)) for v in self.values):
            raise InvalidParameters("symmetric function values must be integers")

    @classmethod
    def parity(cls, n):
        return cls(n, tuple((-1) ** w for w in range(n + 1)), "parity")

    @classmethod
    def majority(cls, n):
        return cls(n, tuple(int(2 * w > n) for w in range(n + 1)), "majority")

    @classmethod
    def constant(cls, n, value=1):
        return cls(n, (int(value),) * (n + 1), "constant")

    @classmethod
    def threshold(cls, n, t):
        return cls(n, tuple(int(w >= t) for w in range(n + 1)), f"threshold{t}")

    @classmethod
    def from_name(cls, name, n):
        """parity, majority, constant, and, or, or thresholdT."""
        key = name.strip().lower()
        if key == "parity":
            return cls.parity(n)
        if key == "majority":
            return cls.majority(n)
        if key == "constant":
            return cls.constant(n)
        if key == "and":
            return cls.threshold(n, n)
        if key == "or":
            return cls.threshold(n, 1)
        if key.startswith("threshold") and key[len("threshold"):].isdigit():
            return cls.threshold(n, int(key[len("threshold"):]))
        raise InvalidParameters(f"unknown symmetric function {name!r}")

    def parity_affine_form(self, field):
        """
        (d, c) with f(w) = d + c * (-1)**w in the field, or None when f has no
        such form. Needs an odd characteristic.
        """
        field.require_odd_characteristic("a parity-affine decomposition")
        v0 = field.scalar(self.values[0])
        v1 = field.scalar(self.values[1]) if self.n >= 1 else v0
        half = field.inverse(field.scalar(2))
        d = field.scalar((v0 + v1) * half)
        c = field.scalar((v0 - v1) * half)
        for w, v in enumerate(self.values):
            if field.scalar(d + c * (-1) ** w) != field.scalar(v):
                return None
        return d, c

    def to_json(self):
        return {"n": self.n, "name": self.name, "values": list(self.values)}


@dataclass(frozen=True)
class SymAndCircuit:
    """
    f(g_1(x, y), ..., g_s(x, y)) with f symmetric and each g an AND of some
    x-variables and some y-variables (0-based indices into n-bit inputs).
    """

    n: int
    gates: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    function: SymmetricFunctionSpec

    def __post_init__(self):
        if self.function.n != len(self.gates):
            raise ShapeMismatch(f"{len(self.gates)} gates feed a function of {self.function.n} bits")
        for x_vars, y_vars in self.gates:
            for v in (*x_vars, *y_vars):
                if not 0 <= v < self.n:
                    raise ShapeMismatch(f"gate variable {v} out of range for {self.n}-bit inputs")

    @classmethod
    def from_function(cls, function):
        """The matrix IP_f: gate i is x_i AND y_i."""
        gates = tuple(((i,), (i,)) for i in range(function.n))
        return cls(function.n, gates, function)

    @property
    def num_gates(self):
        return len(self.gates)

    def _masks(self, side):
        return [sum(1 << (self.n - 1 - v) for v in gate[side]) for gate in self.gates]

    def satisfied(self, row_idx, col_idx):
        """Number of satisfied gates at every (row, col) pair, broadcasting over index arrays."""
        count = np.zeros(np.broadcast_shapes(np.shape(row_idx), np.shape(col_idx)), dtype=np.int64)
        for xm, ym in zip(self._masks(0), self._masks(1)):
            count += ((row_idx & xm) == xm) & ((col_idx & ym) == ym)
        return count

    def oracle(self, field):
        table = field.array(np.asarray(self.function.values, dtype=object))
        size = 1 << self.n
        return EntryOracle(size, size, field, lambda i, j: table[self.satisfied(i, j)])

    def weight_distribution(self, budget=None):
        """How many of the 4**n input pairs satisfy exactly w gates, for w = 0..s."""
        s = self.num_gates
        if self.gates == tuple(((i,), (i,)) for i in range(s)):
            # bits s..n-1 feed no gate and take any of 4 values per pair
            free = 4 ** (self.n - s)
            return [comb(s, w) * 3 ** (s - w) * free for w in range(s + 1)]
        size = 1 << self.n
        check_budget(size * size, "counting satisfied gates", budget)
        idx = np.arange(size, dtype=np.int64)
        counts = np.bincount(self.satisfied(idx[:, None], idx[None, :]).ravel(), minlength=s + 1)
        return [int(c) for c in counts]

    def to_json(self):
        return {
            "n": self.n,
            "gates": [{"x": list(x), "y": list(y)} for x, y in self.gates],
            "function": self.function.to_json(),
        }

    @classmethod
    def from_json(cls, data):
        fn = data["function"]
        function = SymmetricFunctionSpec(fn["n"], tuple(fn["values"]), fn.get("name", "custom"))
        gates = tuple((tuple(g["x"]), tuple(g["y"])) for g in data["gates"])
        return cls(data["n"], gates, function)


@dataclass(frozen=True)
class NonRigidityParams:
    n: int
    eps: Fraction
    k_offset: int
    r_points: int
    window: WeightWindow
    field: FieldSpec

    def __post_init__(self):
        if self.n < 1:
            raise InvalidParameters(f"n must be positive, got {self.n}")
        if not 0 < self.eps <= Fraction(1, 2):
            raise InvalidParameters(f"eps must lie in (0, 1/2), got {self.eps}")
        if self.k_offset < -1 or self.r_points < 1:
            raise InvalidParameters(
                f"need k_offset >= -1 and r_points >= 1, got {self.k_offset}, {self.r_points}"
            )
        if self.k_offset + self.r_points > self.n:
            raise InvalidParameters(
                f"k_offset + r_points = {self.k_offset + self.r_points} exceeds n = {self.n}"
            )
        if self.window.hi > self.n:
            raise InvalidParameters(f"window [{self.window.lo}, {self.window.hi}] exceeds n = {self.n}")

    @classmethod
    def build(cls, n, eps, field=DEFAULT_FIELD, k_offset=None, r_points=None, window=None):
        """
        Defaults: k = ceil(2 eps n) - 1, r = floor((1/2 - eps) n) + 1 and the
        window [(1/2 - eps) n, (1/2 + eps) n] rounded outward.
        """
        eps = as_fraction(eps)
        if not 0 < eps < Fraction(1, 2):
            raise InvalidParameters(f"eps must lie in (0, 1/2), got {eps}")
        if k_offset is None:
            k_offset = ceil(2 * eps * n) - 1
        if r_points is None:
            r_points = floor((Fraction(1, 2) - eps) * n) + 1
        if window is None:
            window = WeightWindow.around(n, eps)
        return cls(n, eps, k_offset, r_points, window, field)

    @classmethod
    def full_window(cls, n, field=DEFAULT_FIELD):
        """Interpolate on every overlap 0..n with no corrections; the result is exact."""
        return cls(n, Fraction(1, 2), -1, n + 1, WeightWindow.full(n), field)

    @property
    def interpolation_range(self):
        return self.k_offset + 1, self.k_offset + self.r_points

    def to_json(self):
        return {
            "n": self.n,
            "eps": str(self.eps),
            "k_offset": self.k_offset,
            "r_points": self.r_points,
            "window": self.window.to_json(),
            "field": self.field.label,
        }


@dataclass(frozen=True)
class RigidityReport:
    pipeline: str
    n: int
    field: FieldSpec
    params: dict
    monomials: int
    corrections: int
    claimed_rank_bound: int
    per_row_diff_bound: int | None = None
    predicted_total_diffs: int | None = None
    predicted_max_row_diffs: int | None = None
    realized_rank: int | None = None
    total_diffs: int | None = None
    row_diffs: tuple[int, ...] | None = dataclass_field(default=None, repr=False)

    @property
    def max_row_diffs(self):
        if self.row_diffs is None:
            return None
        return max(self.row_diffs, default=0)

    @property
    def diff_fraction(self):
        if self.total_diffs is None:
            return None
        return Fraction(self.total_diffs, 4 ** self.n)

    @property
    def materialized(self):
        return self.total_diffs is not None

    def check(self):
        """Raise InvariantViolation if a measured value breaks its claimed bound."""
        if self.realized_rank is not None and self.realized_rank > self.claimed_rank_bound:
            raise InvariantViolation(
                f"realized rank {self.realized_rank} exceeds the claimed bound {self.claimed_rank_bound}"
            )
        if self.per_row_diff_bound is not None and self.max_row_diffs is not None:
            if self.max_row_diffs > self.per_row_diff_bound:
                raise InvariantViolation(
                    f"a row has {self.max_row_diffs} diffs, over the bound {self.per_row_diff_bound}"
                )
        if self.predicted_total_diffs is not None and self.total_diffs is not None:
            if self.total_diffs != self.predicted_total_diffs:
                raise InvariantViolation(
                    f"measured {self.total_diffs} diffs, predicted {self.predicted_total_diffs}"
                )
        if self.predicted_max_row_diffs is not None and self.max_row_diffs is not None:
            if self.max_row_diffs != self.predicted_max_row_diffs:
                raise InvariantViolation(
                    f"measured a maximum of {self.max_row_diffs} diffs per row, "
                    f"predicted {self.predicted_max_row_diffs}"
                )
        return self

    def to_json(self, include_rows=False):
        data = {
            "pipeline": self.pipeline,
            "n": self.n,
            "field": self.field.label,
            "params": self.params,
            "monomials": self.monomials,
            "corrections": self.corrections,
            "claimed_rank_bound": self.claimed_rank_bound,
            "per_row_diff_bound": self.per_row_diff_bound,
            "predicted_total_diffs": self.predicted_total_diffs,
            "predicted_max_row_diffs": self.predicted_max_row_diffs,
            "realized_rank": self.realized_rank,
            "total_diffs": self.total_diffs,
            "max_row_diffs": self.max_row_diffs,
            "diff_fraction": None if self.diff_fraction is None else str(self.diff_fraction),
        }
        if include_rows and self.row_diffs is not None:
            data["row_diffs"] = list(self.row_diffs)
        return data


def diff_histogram(report):
    """Rows grouped by their number of modified entries: sorted (diffs, row count) pairs."""
    if report.row_diffs is None:
        return []
    return sorted(Counter(report.row_diffs).items())


def _measure(F, target, budget, with_rank):
    """Dense comparison against the target; (None, None, None) when the matrices are over budget."""
    try:
        dense = materialize(F, budget)
        expected = target.dense(budget)
    except BudgetExceeded as exc:
        logger.info("skipping materialization: %s", exc)
        return None, None, None
    mismatch = dense.entries != expected.entries
    row_diffs = tuple(int(c) for c in np.count_nonzero(mismatch, axis=1))
    realized = rank(dense) if with_rank else None
    return realized, int(np.count_nonzero(mismatch)), row_diffs


def _misses(field, interpolant, values):
    """Weights w at which the interpolant, read in the field, differs from values[w]."""
    return [
        field.scalar(interpolant.value_at(w)) != field.scalar(v) for w, v in enumerate(values)
    ]


def window_poly(params, function, budget=None):
    """
    Polynomial over x, y agreeing with function(<x, y>) whenever the overlap lies
    in the interpolation range [k_offset + 1, k_offset + r_points].
    """
    if function.n != params.n:
        raise ShapeMismatch(f"function of {function.n} bits for n = {params.n}")
    lo, hi = params.interpolation_range
    interpolant = weight_interpolant(params.k_offset, function.values[lo:hi + 1])
    poly = substitute_products(interpolant_to_poly(interpolant, params.n, params.field, budget))
    logger.debug("window polynomial on overlaps [%d, %d]: %d monomials", lo, hi, poly.num_monomials)
    return poly, interpolant


def ip2_window_poly(params, budget=None):
    """Polynomial equal to (-1)**<x, y> on overlaps in the interpolation range."""
    params.field.require_odd_characteristic("the inner-product window polynomial")
    poly, _ = window_poly(params, SymmetricFunctionSpec.parity(params.n), budget)
    return poly


def valiant_nonrigidity(params, function=None, budget=None, with_rank=True):
    """
    Low-error pipeline. The window polynomial is exact on in-window pairs whose
    overlap lies in the interpolation range; every out-of-window row and column is
    then replaced wholesale. Only in-window pairs can still differ.

    Without a function the target is H_n; otherwise it is the matrix
    f(|x AND y|) of the given symmetric function.
    """
    n, field, window = params.n, params.field, params.window
    if function is None:
        spec = HadamardSpec(n, field)
        function = SymmetricFunctionSpec.parity(n)
        target = hadamard_oracle(spec)
        label = "valiant"
    else:
        target = SymAndCircuit.from_function(function).oracle(field)
        label = f"valiant-{function.name}"

    poly, interpolant = window_poly(params, function, budget)
    factored = poly_to_factored(poly, budget)
    bad = out_of_window_indices(n, window)
    corrected = correct_rows_columns(factored, target, bad, bad)

    misses = _misses(field, interpolant, function.values)
    last = params.k_offset + params.r_points
    bounds, exact = {}, {}
    for w in window.weights():
        overflow = sum(overlap_count(n, w, s, window) for s in range(last + 1, w + 1))
        bounds[w] = low_ip_count_by_weight(n, w, params.k_offset, window) + overflow
        exact[w] = sum(overlap_count(n, w, s, window) for s in range(w + 1) if misses[s])

    realized, total, row_diffs = _measure(corrected, target, budget, with_rank)
    report = RigidityReport(
        pipeline=label,
        n=n,
        field=field,
        params=params.to_json(),
        monomials=poly.num_monomials,
        corrections=2 * len(bad),
        claimed_rank_bound=poly.num_monomials + 2 * len(bad),
        per_row_diff_bound=max(bounds.values(), default=0),
        predicted_total_diffs=sum(comb(n, w) * exact[w] for w in window.weights()),
        predicted_max_row_diffs=max(exact.values(), default=0),
        realized_rank=realized,
        total_diffs=total,
        row_diffs=row_diffs,
    ).check()
    logger.info(
        "%s n=%d: %d monomials + %d corrections, %s diffs",
        label, n, report.monomials, report.corrections, report.total_diffs,
    )
    return corrected, report


@dataclass(frozen=True)
class ShiftedWindowSample:
    """One draw of the randomly shifted parity interpolant."""

    poly: SparseMultilinearPoly
    shift: tuple[int, ...]
    window: WeightWindow
    half_width: int
    interpolant: WeightInterpolant

    def to_json(self):
        return {
            "shift": "".join(str(b) for b in self.shift),
            "window": self.window.to_json(),
            "half_width": self.half_width,
        }


def hoeffding_half_width(n, eps):
    """Smallest integer t with 2 exp(-2 t**2 / n) <= eps, decided exactly."""
    eps = as_fraction(eps)
    bound = sympy.log(sympy.Rational(2 * eps.denominator, eps.numerator))

    def enough(t):
        # 2 t**2 / n >= ln(2 / eps), compared symbolically
        return bool(sympy.Rational(2 * t * t, n) >= bound)

    t = ceil(sqrt(n * log(2 / float(eps)) / 2))
    while t > 0 and enough(t - 1):
        t -= 1
    while not enough(t):
        t += 1
    return t


def sample_parity_poly(n, eps, seed, field=DEFAULT_FIELD, budget=None):
    """
    Draw a shift s and interpolate (-1)**w on [n/2 - t, n/2 + t]. The returned
    polynomial is (-1)**|s| * Q(z XOR s): it equals (-1)**|z| whenever |z XOR s|
    lands in the window, which for any fixed z fails with probability <= eps.
    """
    eps = as_fraction(eps)
    if not 0 < eps <= 1:
        raise InvalidParameters(f"eps must lie in (0, 1], got {eps}")
    if n < 1:
        raise InvalidParameters(f"n must be positive, got {n}")
    field.require_odd_characteristic("the parity interpolant")
    t = hoeffding_half_width(n, eps)
    window = WeightWindow(max(0, (n - 2 * t) // 2), min(n, -(-(n + 2 * t) // 2)))
    rng = np.random.default_rng(seed)
    shift = tuple(int(b) for b in rng.integers(0, 2, size=n))
    interpolant = weight_interpolant(
        window.lo - 1, [(-1) ** w for w in window.weights()]
    )
    centred = interpolant_to_poly(interpolant, n, field, budget)
    poly = shifted_substitute(centred, shift).scaled((-1) ** sum(shift))
    logger.debug("parity sample: t=%d window=%s shift=%s", t, window, shift)
    return ShiftedWindowSample(poly, shift, window, t, interpolant)


def parity_prob_poly(n, eps, seed, field=DEFAULT_FIELD, budget=None):
    return sample_parity_poly(n, eps, seed, field, budget).poly


def _shift_mode_predicted(n, sample, field):
    # Pairs with z = x AND y occur 3**(n - |z|) times; z with i ones inside the
    # shift's support and j outside has |z XOR s| = |s| - i + j.
    misses = _misses(field, sample.interpolant, SymmetricFunctionSpec.parity(n).values)
    m = sum(sample.shift)
    return sum(
        comb(m, i) * comb(n - m, j) * 3 ** (n - i - j)
        for i in range(m + 1)
        for j in range(n - m + 1)
        if misses[m - i + j]
    )


def shortest_mass_window(distribution, eps):
    """Shortest window (smallest lo on ties) holding at least a 1 - eps share of the distribution."""
    total = sum(distribution)
    need = (1 - as_fraction(eps)) * total
    s = len(distribution) - 1
    for width in range(1, s + 2):
        for lo in range(0, s - width + 2):
            if sum(distribution[lo:lo + width]) >= need:
                return WeightWindow(lo, lo + width - 1)
    return WeightWindow(0, s)


def _symmetric_pipeline(circuit, r_target, seed, field, budget, label, with_rank):
    s = circuit.num_gates
    n = circuit.n
    if not 1 <= r_target <= 4 ** n:
        raise InvalidParameters(f"r_target must lie in [1, 4**{n}], got {r_target}")
    if s < 1:
        raise InvalidParameters("the circuit needs at least one gate")
    field.require_odd_characteristic("the symmetric pipelines")
    eps = Fraction(1, r_target)
    function = circuit.function
    form = function.parity_affine_form(field)
    params = {"n": n, "gates": s, "r_target": r_target, "eps": str(eps), "seed": seed,
              "function": function.name}
    identity_gates = circuit.gates == tuple(((i,), (i,)) for i in range(s))

    if form is not None:
        d, c = form
        sample = sample_parity_poly(s, eps, seed, field, budget)
        inner = sample.poly.scaled(c).plus(SparseMultilinearPoly.constant(s, d, field))
        params.update(mode="shift", degree_bound=2 * sample.half_width + 1, **sample.to_json())
        predicted = None
        if identity_gates:
            predicted = 0 if c == 0 else _shift_mode_predicted(s, sample, field) * 4 ** (n - s)
        monomial_bound = sum(comb(s, j) for j in range(min(s, 2 * sample.half_width + 1) + 1))
    else:
        distribution = circuit.weight_distribution(budget)
        window = shortest_mass_window(distribution, eps)
        interpolant = weight_interpolant(window.lo - 1, function.values[window.lo:window.hi + 1])
        inner = interpolant_to_poly(interpolant, s, field, budget)
        misses = _misses(field, interpolant, function.values)
        predicted = sum(count for w, count in enumerate(distribution) if misses[w])
        params.update(mode="window", window=window.to_json())
        monomial_bound = sum(comb(s, j) for j in range(window.width))

    poly = substitute_gates(inner, list(circuit.gates), n)
    if poly.num_monomials > monomial_bound:
        raise InvariantViolation(f"{poly.num_monomials} monomials, over the bound {monomial_bound}")
    params["monomial_bound"] = monomial_bound
    factored = poly_to_factored(poly, budget)
    if label == "high-error":
        target = hadamard_oracle(HadamardSpec(n, field))
    else:
        target = circuit.oracle(field)
    realized, total, row_diffs = _measure(factored, target, budget, with_rank)
    report = RigidityReport(
        pipeline=label,
        n=n,
        field=field,
        params=params,
        monomials=poly.num_monomials,
        corrections=0,
        claimed_rank_bound=poly.num_monomials,
        predicted_total_diffs=predicted,
        realized_rank=realized,
        total_diffs=total,
        row_diffs=row_diffs,
    ).check()
    logger.info("%s n=%d seed=%s: %d monomials, %s diffs", label, n, seed, report.monomials, total)
    return factored, report


def high_error_nonrigidity(n, r_target, seed, field=DEFAULT_FIELD, budget=None, with_rank=False):
    """
    Change at most about 4**n / r_target entries of H_n (in expectation over the
    seed, and per entry with probability <= 1 / r_target) to reach the rank of
    the sampled polynomial's monomial count.
    """
    circuit = SymAndCircuit.from_function(SymmetricFunctionSpec.parity(n))
    return _symmetric_pipeline(circuit, r_target, seed, field, budget, "high-error", with_rank)


def sym_and_nonrigidity(spec, r_target, seed, field=DEFAULT_FIELD, budget=None, with_rank=False):
    """
    The matrix f(|x AND y|) for a symmetric f. Parity-affine f (including parity
    and constants) goes through the random shift, with a per-entry error bound of
    1 / r_target. Any other f gets the deterministic window covering a 1 - 1/r_target
    share of input pairs, so the total diff fraction is at most 1 / r_target.
    """
    circuit = SymAndCircuit.from_function(spec)
    return _symmetric_pipeline(circuit, r_target, seed, field, budget, "sym-and", with_rank)


def sym_and_circuit_nonrigidity(circuit, r_target, seed, field=DEFAULT_FIELD, budget=None, with_rank=False):
    return _symmetric_pipeline(circuit, r_target, seed, field, budget, "sym-and-circuit", with_rank)
