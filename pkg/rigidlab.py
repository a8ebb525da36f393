#!/usr/bin/env python
"""
Seeded, reproducible rigidity and probabilistic-rank experiments.

    ./rigidlab.py valiant --n 10 --eps 0.2 --field F3 --seed 1 --out valiant.json
    ./rigidlab.py high-error --n 8 --rank-target 4 --trials 50 --format csv
    ./rigidlab.py oracle --n 1 --field F3 --rank-target 1

Exit codes: 0 success, 2 usage error, 3 budget exceeded, 4 internal invariant violated.
"""
import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field
from fractions import Fraction
from math import ceil

import numpy as np

from counters import DisagreementCounter, derive_seed
from errors import BudgetExceeded, InvalidParameters, InvariantViolation, ShapeMismatch
from exact_algebra import BUDGET_ENV, DenseMatrix, FieldSpec, entry_budget, materialize, rank
from hadamard import HadamardSpec, hadamard_oracle, materialize_hadamard
from oracles import brute_force_rigidity, cross_validate, min_rank_within
from prob_rank import (
    DEFAULT_DELTA,
    DepthTwoLTFCircuit,
    LTFSpec,
    eq_sampler,
    estimate_error,
    ip2_threshold_circuit,
    leq_sampler,
    ltf_ltf_sign_sampler,
    ltf_sampler,
)
from reductions import (
    exact_factorization,
    function_oracle,
    ip2_rsr,
    planted_errors,
    protocol_bits,
    rigidity_to_prob_rank,
    rsr_prob_rank,
    simulate_protocol,
)
from rigidity import (
    NonRigidityParams,
    SymAndCircuit,
    SymmetricFunctionSpec,
    as_fraction,
    diff_histogram,
    high_error_nonrigidity,
    sym_and_nonrigidity,
    valiant_nonrigidity,
)

__version__ = "0.1.0"
SCHEMA_VERSION = 1

EXIT_USAGE = 2
EXIT_BUDGET = 3
EXIT_INVARIANT = 4

COMMANDS = (
    "hadamard",
    "valiant",
    "high-error",
    "sym-and",
    "prob-rank",
    "equivalence",
    "rsr",
    "protocol",
    "oracle",
)
SAMPLERS = ("eq", "leq", "lt", "ltf", "ltf-ltf")

logger = logging.getLogger("rigidlab")


def rigidlab_wrapper(func):
    """
    Wrapper function turning library errors into one-line diagnostics and exit codes.
    :param func: Function to wrap.
    """

    def wrapped_function(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (InvalidParameters, ShapeMismatch) as e:
            print(f"rigidlab: error: {e}", file=sys.stderr)
            return EXIT_USAGE
        except BudgetExceeded as e:
            print(f"rigidlab: budget exceeded: {e}", file=sys.stderr)
            return EXIT_BUDGET
        except InvariantViolation as e:
            print(f"rigidlab: internal invariant violated: {e}", file=sys.stderr)
            return EXIT_INVARIANT

    return wrapped_function


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    n: int | None
    field: FieldSpec
    eps: Fraction | None
    rank_target: int | None
    seed: int
    trials: int
    out: str | None
    format: str
    budget: int
    jobs: int = 1
    delta: float = DEFAULT_DELTA
    timing: bool = False
    verbose: bool = False
    function: str | None = None
    sampler: str = "eq"
    circuit: str | None = None
    mode: str | None = None
    errors: int = 3
    k_offset: int | None = None
    r_points: int | None = None
    full_window: bool = False
    matrix: str | None = None
    edits: int | None = None

    def to_json(self):
        """Echo of the settings that determine the payload."""
        return {
            "command": self.command,
            "n": self.n,
            "field": self.field.label,
            "eps": None if self.eps is None else str(self.eps),
            "rank_target": self.rank_target,
            "seed": self.seed,
            "trials": self.trials,
            "delta": self.delta,
            "function": self.function,
            "sampler": self.sampler,
            "circuit": self.circuit,
            "mode": self.mode,
            "errors": self.errors,
            "k_offset": self.k_offset,
            "r_points": self.r_points,
            "full_window": self.full_window,
            "matrix": self.matrix,
            "edits": self.edits,
        }


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    payload: dict
    csv_header: list = dataclass_field(default_factory=list)
    csv_rows: list = dataclass_field(default_factory=list)
    wall_time: float | None = None

    def to_json(self):
        data = {
            "schema_version": SCHEMA_VERSION,
            "version": __version__,
            "config": self.config.to_json(),
            "payload": self.payload,
        }
        if self.wall_time is not None:
            data["wall_time"] = round(self.wall_time, 3)
        return data


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rigidlab",
        description="Construct and check low-rank approximations of Hadamard and circuit matrices.",
    )
    parser.add_argument("command", choices=COMMANDS, help="Experiment to run")
    parser.add_argument("--n", type=int, default=None, help="Bits per input half")
    parser.add_argument("--eps", type=str, default=None, help="Error parameter, e.g. 0.2 or 1/5")
    parser.add_argument("--rank-target", type=int, default=None, help="r for the high-error pipelines, rank bound for oracle")
    parser.add_argument("--field", type=str, default="F3", help="F<p> for a prime p, or Q")
    parser.add_argument("--seed", type=int, default=0, help="Root seed; sub-seeds are derived from it")
    parser.add_argument("--trials", type=int, default=None, help="Monte-Carlo draws or seeds")
    parser.add_argument("--out", type=str, default=None, help="Report path (stdout when omitted)")
    parser.add_argument("--format", choices=("json", "csv"), default="json", help="Report format")
    parser.add_argument("--jobs", type=int, default=1, help="Worker threads; results do not depend on it")
    parser.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="Confidence parameter of Hoeffding radii")
    parser.add_argument("--function", type=str, default=None, help="Symmetric function: H_n (parity) for valiant, majority for sym-and")
    parser.add_argument("--sampler", choices=SAMPLERS, default="eq", help="Sampler for prob-rank / protocol")
    parser.add_argument("--circuit", type=str, default=None, help="JSON file with an LTF or depth-two LTF circuit")
    parser.add_argument("--mode", choices=("exhaustive", "monte-carlo"), default=None, help="Error estimation mode")
    parser.add_argument("--errors", type=int, default=3, help="Planted errors for equivalence / rsr")
    parser.add_argument("--k-offset", type=int, default=None, help="Override the interpolation offset")
    parser.add_argument("--r-points", type=int, default=None, help="Override the interpolation point count")
    parser.add_argument("--full-window", action="store_true", help="Interpolate on every overlap (exact)")
    parser.add_argument("--matrix", type=str, default=None, help="Oracle input matrix (JSON envelope or CSV)")
    parser.add_argument("--edits", type=int, default=None, help="Edit budget t for the oracle")
    parser.add_argument("--timing", action="store_true", help="Record wall time in the report")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    return parser


def _require(condition, message):
    if not condition:
        raise InvalidParameters(message)


def parse_config(argv, env=None):
    """Parse and validate the command line; argparse itself exits with code 2 on unknown flags."""
    args = build_parser().parse_args(argv)
    env = os.environ if env is None else env
    field = FieldSpec.parse(args.field)
    eps = None
    if args.eps is not None:
        try:
            eps = as_fraction(args.eps)
        except (ValueError, ZeroDivisionError):
            raise InvalidParameters(f"cannot parse --eps {args.eps!r}") from None

    command = args.command
    if command != "oracle" or args.matrix is None:
        _require(args.n is not None, f"{command} needs --n")
        _require(args.n >= (0 if command == "oracle" else 1), f"--n must be positive, got {args.n}")
    if command == "valiant":
        if not args.full_window:
            _require(eps is not None, "valiant needs --eps (or --full-window)")
            _require(0 < eps < Fraction(1, 2), f"valiant needs --eps in (0, 1/2), got {eps}")
    if command in ("high-error", "sym-and"):
        _require(args.rank_target is not None or eps is not None, f"{command} needs --rank-target or --eps")
        if eps is not None:
            _require(0 < eps <= 1, f"--eps must lie in (0, 1], got {eps}")
    if command in ("prob-rank", "protocol"):
        _require(eps is not None, f"{command} needs --eps")
        _require(0 < eps < 1, f"--eps must lie in (0, 1), got {eps}")
    if command == "oracle":
        _require(field.is_prime, "the oracle needs a prime field")
    _require(args.jobs >= 1, "--jobs must be at least 1")
    _require(0 < args.delta < 1, "--delta must lie in (0, 1)")
    _require(args.errors >= 0, "--errors must be non-negative")
    if args.trials is not None:
        _require(args.trials >= 1, "--trials must be positive")

    rank_target = args.rank_target
    if command in ("high-error", "sym-and") and rank_target is None:
        rank_target = ceil(1 / eps)
    default_trials = {"high-error": 1, "sym-and": 1, "protocol": 20}.get(command, 1000)
    default_mode = "exhaustive" if command == "equivalence" else "monte-carlo"

    return ExperimentConfig(
        command=command,
        n=args.n,
        field=field,
        eps=eps,
        rank_target=rank_target,
        seed=args.seed,
        trials=args.trials or default_trials,
        out=args.out,
        format=args.format,
        budget=entry_budget(env),
        jobs=args.jobs,
        delta=args.delta,
        timing=args.timing,
        verbose=args.verbose,
        function=args.function,
        sampler=args.sampler,
        circuit=args.circuit,
        mode=args.mode or default_mode,
        errors=args.errors,
        k_offset=args.k_offset,
        r_points=args.r_points,
        full_window=args.full_window,
        matrix=args.matrix,
        edits=args.edits,
    )


def _parallel_map(fn, items, jobs):
    """Order-preserving map, threaded when jobs > 1."""
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _entry_rows(report):
    rows = []
    for (i, j), count in np.ndenumerate(report.counts):
        rows.append([i, j, int(count), report.trials])
    return rows


def run_hadamard(config):
    spec = HadamardSpec(config.n, config.field)
    matrix = materialize_hadamard(spec, config.budget)
    payload = {"n": config.n, "field": config.field.label, "rank": rank(matrix)}
    if config.n <= 6:
        payload["matrix"] = matrix.to_json()
    header = ["row"] + [str(j) for j in range(matrix.cols)]
    rows = [[i] + [config.field.format_scalar(v) for v in row] for i, row in enumerate(matrix.entries)]
    return payload, header, rows


def run_valiant(config):
    if config.full_window:
        params = NonRigidityParams.full_window(config.n, config.field)
    else:
        params = NonRigidityParams.build(
            config.n, config.eps, config.field, k_offset=config.k_offset, r_points=config.r_points
        )
    function = None
    if config.function not in (None, "parity"):
        function = SymmetricFunctionSpec.from_name(config.function, config.n)
    _, report = valiant_nonrigidity(params, function, config.budget)
    histogram = diff_histogram(report)
    payload = report.to_json()
    payload["row_diff_histogram"] = [[d, c] for d, c in histogram]
    return payload, ["row_diffs", "rows"], [[d, c] for d, c in histogram]


def _seeded_runs(config, label, pipeline, target):
    seeds = [derive_seed(config.seed, label, i) for i in range(config.trials)]

    def one(seed):
        factored, report = pipeline(seed)
        mismatch = None
        if report.materialized:
            mismatch = materialize(factored, config.budget).entries != target.dense(config.budget).entries
        return seed, report, mismatch

    results = _parallel_map(one, seeds, config.jobs)
    counter = None
    runs = []
    for seed, report, mismatch in results:
        runs.append({
            "seed": seed,
            "monomials": report.monomials,
            "total_diffs": report.total_diffs,
            "params": report.params,
        })
        if mismatch is not None:
            counter = counter or DisagreementCounter(*mismatch.shape)
            counter.add_sample(mismatch)
    measured = [r["total_diffs"] for r in runs if r["total_diffs"] is not None]
    payload = {
        "n": config.n,
        "field": config.field.label,
        "rank_target": config.rank_target,
        "runs": runs,
        "max_monomials": max(r["monomials"] for r in runs),
        "mean_diffs": str(Fraction(sum(measured), len(measured))) if measured else None,
        "max_entry_error": str(Fraction(counter.max_count(), counter.trials)) if counter else None,
    }
    rows = [[r["seed"], r["monomials"], r["total_diffs"]] for r in runs]
    return payload, ["seed", "monomials", "total_diffs"], rows


def run_high_error(config):
    target = hadamard_oracle(HadamardSpec(config.n, config.field))

    def pipeline(seed):
        return high_error_nonrigidity(config.n, config.rank_target, seed, config.field, config.budget)

    return _seeded_runs(config, "high-error", pipeline, target)


def run_sym_and(config):
    spec = SymmetricFunctionSpec.from_name(config.function or "majority", config.n)
    target = SymAndCircuit.from_function(spec).oracle(config.field)

    def pipeline(seed):
        return sym_and_nonrigidity(spec, config.rank_target, seed, config.field, config.budget)

    payload, header, rows = _seeded_runs(config, "sym-and", pipeline, target)
    payload["function"] = spec.to_json()
    return payload, header, rows


def _load_json(path):
    with open(path, "r") as file:
        return json.load(file)


def make_sampler(config):
    kind = config.sampler
    if kind == "eq":
        return eq_sampler(config.n, config.eps, config.field)
    if kind in ("leq", "lt"):
        return leq_sampler(config.n, config.eps, config.field, strict=kind == "lt")
    if kind == "ltf":
        if config.circuit:
            spec = LTFSpec.from_json(_load_json(config.circuit))
        else:
            spec = LTFSpec((1,) * config.n, (1,) * config.n, config.n)
        return ltf_sampler(spec, config.eps, config.field, config.budget)
    circuit = DepthTwoLTFCircuit.load(config.circuit) if config.circuit else ip2_threshold_circuit()
    if circuit.n != config.n:
        raise InvalidParameters(f"the circuit reads {circuit.n} bits per side, --n is {config.n}")
    field = config.field if not config.field.is_prime else FieldSpec.rationals()
    return ltf_ltf_sign_sampler(circuit, config.eps, field, budget=config.budget)


def _error_payload(config, sampler):
    report = estimate_error(
        sampler, config.mode, config.trials, config.seed, config.delta, config.budget, config.jobs
    )
    payload = report.to_json()
    payload["within_claim"] = report.within_claim()
    payload["min_error"] = str(Fraction(int(report.counts.min()), report.trials))
    return payload, report


def run_prob_rank(config):
    sampler = make_sampler(config)
    payload, report = _error_payload(config, sampler)
    return payload, ["row", "col", "errors", "trials"], _entry_rows(report)


def _planted(matrix, count, seed):
    if count > matrix.rows * matrix.cols:
        raise InvalidParameters(f"cannot plant {count} errors in {matrix.rows * matrix.cols} entries")
    rng = np.random.default_rng(derive_seed(seed, "planted"))
    flat = rng.choice(matrix.rows * matrix.cols, size=count, replace=False)
    positions = sorted((int(k) // matrix.cols, int(k) % matrix.cols) for k in flat)
    return planted_errors(matrix, positions), positions


def run_equivalence(config):
    matrix = materialize_hadamard(HadamardSpec(config.n, config.field), config.budget)
    corrupted, positions = _planted(matrix, config.errors, config.seed)
    sampler = rigidity_to_prob_rank(exact_factorization(corrupted), budget=config.budget)
    payload, report = _error_payload(config, sampler)
    payload["planted"] = [list(p) for p in positions]
    payload["expected_error"] = str(Fraction(config.errors, matrix.rows * matrix.cols))
    return payload, ["row", "col", "errors", "trials"], _entry_rows(report)


def run_rsr(config):
    rsr = ip2_rsr(config.n)
    rsr.check_invariants(config.budget)
    matrix = function_oracle(rsr, config.field).dense(config.budget)
    corrupted, positions = _planted(matrix, config.errors, config.seed)
    sampler = rsr_prob_rank(rsr, exact_factorization(corrupted), budget=config.budget)
    payload, report = _error_payload(config, sampler)
    payload["planted"] = [list(p) for p in positions]
    payload["terms"] = sampler.claimed_rank
    return payload, ["row", "col", "errors", "trials"], _entry_rows(report)


def run_protocol(config):
    sampler = make_sampler(config)
    rng = np.random.default_rng(derive_seed(config.seed, "protocol"))
    runs, consistent, correct = [], True, 0
    for i in range(config.trials):
        x = int(rng.integers(0, sampler.rows))
        y = int(rng.integers(0, sampler.cols))
        seed = derive_seed(config.seed, "protocol-run", i)
        result = simulate_protocol(sampler, x, y, seed)
        # both parties rebuild the same matrix from the public seed
        consistent &= simulate_protocol(sampler, x, y, seed) == result
        expected = sampler.target(x, y)
        correct += result.answer == (expected == 1) if sampler.sign_mode else result.answer == expected
        runs.append(result.to_json())
    payload = {
        "sampler": sampler.label,
        "claimed_rank": sampler.claimed_rank,
        "claimed_error": str(sampler.claimed_error),
        "bits": protocol_bits(sampler.claimed_rank),
        "consistent": consistent,
        "correct": int(correct),
        "runs": runs,
    }
    rows = [[r["x"], r["y"], r["seed"], r["answer"], r["bits"]] for r in runs]
    return payload, ["x", "y", "seed", "answer", "bits"], rows


def _load_matrix(config):
    if config.matrix is None:
        return materialize_hadamard(HadamardSpec(config.n, config.field))
    with open(config.matrix, "r") as file:
        text = file.read()
    if config.matrix.lower().endswith(".json"):
        return DenseMatrix.from_json(json.loads(text))
    return DenseMatrix.from_csv(text, config.field)


def run_oracle(config):
    matrix = _load_matrix(config)
    payload = {"rows": matrix.rows, "cols": matrix.cols, "field": matrix.field.label}
    rows = []
    if config.rank_target is None and config.edits is None:
        consistency = cross_validate(matrix)
        payload.update(consistency.to_json())
        rows += [["rigidity", r, v] for r, v in enumerate(consistency.rigidity)]
        rows += [["min_rank", t, v] for t, v in enumerate(consistency.min_ranks)]
    if config.rank_target is not None:
        payload["value"] = brute_force_rigidity(matrix, config.rank_target)
        rows.append(["rigidity", config.rank_target, payload["value"]])
    if config.edits is not None:
        payload["min_rank"] = min_rank_within(matrix, config.edits)
        rows.append(["min_rank", config.edits, payload["min_rank"]])
    return payload, ["kind", "index", "value"], rows


RUNNERS = {
    "hadamard": run_hadamard,
    "valiant": run_valiant,
    "high-error": run_high_error,
    "sym-and": run_sym_and,
    "prob-rank": run_prob_rank,
    "equivalence": run_equivalence,
    "rsr": run_rsr,
    "protocol": run_protocol,
    "oracle": run_oracle,
}


def run(config):
    """Dispatch to the command's runner; the payload depends on the config only."""
    start = time.perf_counter()
    payload, header, rows = RUNNERS[config.command](config)
    wall_time = time.perf_counter() - start if config.timing else None
    return ExperimentReport(config, payload, header, rows, wall_time)


def render_report(report, fmt):
    if fmt == "json":
        return json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n"
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(report.csv_header)
    writer.writerows(report.csv_rows)
    return buffer.getvalue()


def emit_report(report, path, fmt):
    """Write the report atomically (temporary file + rename), or to stdout without a path."""
    text = render_report(report, fmt)
    if path is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    handle, temp_path = tempfile.mkstemp(prefix=".rigidlab-", dir=directory)
    try:
        with os.fdopen(handle, "w") as file:
            file.write(text)
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.unlink(temp_path)
        raise
    print(f"Report written: {path}")


@rigidlab_wrapper
def main(argv=None, env=None):
    """
    Main function: parse the command line, run the experiment and write its report.
    """
    config = parse_config(argv, env)
    logging.basicConfig(
        level=logging.DEBUG if config.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    logger.debug("config %s, budget %d (%s)", config.to_json(), config.budget, BUDGET_ENV)
    report = run(config)
    emit_report(report, config.out, config.format)
    return 0


if __name__ == "__main__":
    sys.exit(main())
