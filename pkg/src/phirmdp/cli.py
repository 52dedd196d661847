"""Command-line front end: ``project``, ``vi``, ``bench`` and ``gen``.

Exit codes: 0 success, 1 usage or input error, 2 infeasible projection,
3 value iteration did not converge (or failed its cross-check).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import statistics
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bellman, instancegen, oracle, projections
from .core import DivergenceKind, InstanceError, Status, read_instance, read_query, write_instance

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NO_CONVERGENCE = 0, 1, 2, 3

PROJECTION_SIZES = (1000, 1500, 2000, 2500, 3000)
BELLMAN_SIZES = (100, 150, 200, 250, 300)
CSV_FIELDS = ("divergence", "operation", "S", "A", "solver", "trials", "mean_ms", "std_ms", "p50_ms", "seed", "tol")
# largest sizes the brute-force oracles accept
ORACLE_LIMIT = {"projection": oracle.MAX_GRID_STATES, "bellman": 3}
ORACLE_GRID = 1 / 100


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for infeasibility here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class BenchRecord:
    divergence: str
    operation: str
    S: int
    A: int
    solver: str
    trials: int
    mean_ms: float
    std_ms: float
    p50_ms: float
    seed: int
    tol: float

    def row(self) -> dict:
        d = asdict(self)
        for key in ("mean_ms", "std_ms", "p50_ms"):
            d[key] = f"{d[key]:.6f}"
        d["tol"] = repr(float(self.tol))
        return d


def _kind(value: str) -> DivergenceKind:
    try:
        return DivergenceKind.parse(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _sizes(value: str) -> list[int]:
    try:
        sizes = [int(x) for x in value.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {value!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("sizes must be positive integers")
    return sizes


def _positive(value: str) -> float:
    try:
        x = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {value!r}") from None
    if not x > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return x


def _emit(text: str, stream=None):
    (stream or sys.stdout).write(text if text.endswith("\n") else text + "\n")


# project ---------------------------------------------------------------------


def cmd_project(args) -> int:
    kind = args.div
    if args.instance:
        try:
            query = read_query(Path(args.instance).read_bytes())
        except (OSError, InstanceError) as exc:
            _emit(f"error: {exc}", sys.stderr)
            return EXIT_USAGE
        if args.delta is not None:
            query = type(query)(query.nominal, query.cost, query.threshold, args.delta)
        source = {"instance": args.instance}
    else:
        if args.states is None or args.states < 2:
            _emit("error: --random needs --states N with N >= 2", sys.stderr)
            return EXIT_USAGE
        query = instancegen.random_projection_instance(args.states, args.seed, args.delta or 1e-6)
        source = instancegen.generator_metadata(args.seed, states=args.states)

    t0 = time.perf_counter()
    res = projections.project(kind, query)
    elapsed = (time.perf_counter() - t0) * 1e3

    report = {"divergence": kind.value, "states": query.size, "delta": query.delta, **res.to_dict()}
    report["elapsed_ms"] = elapsed
    report["source"] = source
    if args.json:
        _emit(json.dumps(report))
    else:
        _emit(f"divergence   {kind.value}")
        _emit(f"states       {query.size}")
        _emit(f"status       {res.status.value}")
        _emit(f"value        [{res.lower!r}, {res.upper!r}]")
        _emit(f"alpha        {res.alpha!r}")
        _emit(f"iterations   {res.iterations}")
        _emit(f"elapsed_ms   {elapsed:.3f}")
    return EXIT_INFEASIBLE if res.status is Status.INFEASIBLE else EXIT_OK


# vi --------------------------------------------------------------------------


def _write_policy(path: str, pi: np.ndarray) -> None:
    doc = {"states": int(pi.shape[0]), "actions": int(pi.shape[1]), "policy": [float(x) for x in pi.ravel()]}
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def cmd_vi(args) -> int:
    try:
        inst = read_instance(Path(args.instance).read_bytes())
    except (OSError, InstanceError) as exc:
        _emit(f"error: {exc}", sys.stderr)
        return EXIT_USAGE
    report = bellman.robust_value_iteration(inst, args.epsilon, args.max_iters)
    v = report.values
    out = {
        "states": inst.n_states,
        "actions": inst.n_actions,
        "divergence": inst.kind.value,
        "kappa": inst.kappa,
        "discount": inst.discount,
        "epsilon": args.epsilon,
        "converged": report.converged,
        "iterations": report.iterations,
        "residual": report.residual,
        "v_min": float(v.min()),
        "v_max": float(v.max()),
        "v_mean": float(v.mean()),
    }
    if inst.initial_dist is not None:
        out["initial_value"] = float(inst.initial_dist @ v)
    if args.json_values:
        out["values"] = [float(x) for x in v]

    ok = report.converged
    if args.cross_check:
        classic = bellman.classical_value_iteration(inst, args.epsilon, args.max_iters)
        if inst.kappa == 0:
            gap = float(np.max(np.abs(classic.values - v)))
            passed = gap <= args.epsilon
        else:
            # the robust value can only be lower than the nominal one
            gap = float(np.max(v - classic.values))
            passed = gap <= args.epsilon
        out["cross_check"] = {"gap": gap, "passed": passed}
        ok = ok and passed

    if args.policy_out:
        pi = bellman.extract_policy(inst, v, args.epsilon)
        try:
            _write_policy(args.policy_out, pi)
        except OSError as exc:
            _emit(f"error: cannot write policy: {exc}", sys.stderr)
            return EXIT_USAGE
        out["policy_out"] = args.policy_out

    if args.json:
        _emit(json.dumps(out))
    else:
        for key, val in out.items():
            _emit(f"{key:<14}{val}")
    if not report.converged:
        _emit(f"warning: no convergence after {report.iterations} iterations", sys.stderr)
    return EXIT_OK if ok else EXIT_NO_CONVERGENCE


# bench -----------------------------------------------------------------------


def _seed_for(seed: int, S: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, S, trial])


def _projection_trial(kind, S, seed, trial, solver, tol):
    query = instancegen.random_projection_instance(S, _seed_for(seed, S, trial), tol)
    if solver == "oracle":
        return lambda: oracle.oracle_project_grid(kind, query, ORACLE_GRID)
    return lambda: projections.project(kind, query)


def _bellman_trial(kind, S, seed, trial, solver, tol):
    inst = instancegen.random_rmdp(S, S, _seed_for(seed, S, trial), kind=kind)
    v = np.zeros(S)
    if solver == "oracle":
        return lambda: [oracle.oracle_bellman(inst, v, s, tol) for s in range(S)]
    return lambda: bellman.robust_bellman(inst, v, tol)


def run_bench(op, kinds, sizes, trials, seed, tol, with_oracle=False, clock=time.perf_counter):
    """Time the solvers; one untimed warm-up per configuration, then ``trials`` timed runs."""
    make = _projection_trial if op == "projection" else _bellman_trial
    solvers = ["fast", "oracle"] if with_oracle else ["fast"]
    records = []
    for kind in kinds:
        for S in sizes:
            A = S if op == "bellman" else 1
            for solver in solvers:
                make(kind, S, seed, 0, solver, tol)()
                times = []
                for trial in range(trials):
                    call = make(kind, S, seed, trial, solver, tol)
                    t0 = clock()
                    call()
                    times.append((clock() - t0) * 1e3)
                records.append(
                    BenchRecord(
                        kind.value, op, S, A, solver, trials,
                        statistics.fmean(times), statistics.pstdev(times), statistics.median(times),
                        seed, tol,
                    )
                )
    return records


def records_csv(records: Sequence[BenchRecord]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def cmd_bench(args) -> int:
    op = args.op
    sizes = args.sizes or list(PROJECTION_SIZES if op == "projection" else BELLMAN_SIZES)
    if args.oracle and max(sizes) > ORACLE_LIMIT[op]:
        _emit(
            f"error: --oracle needs sizes <= {ORACLE_LIMIT[op]} for {op} (brute force grows exponentially)",
            sys.stderr,
        )
        return EXIT_USAGE
    tol = args.tol if args.tol is not None else (1e-6 if op == "projection" else 1e-3)
    _emit(f"# rng={instancegen.RNG_ID} seed={args.seed}", sys.stderr)
    records = run_bench(op, args.div, sizes, args.trials, args.seed, tol, args.oracle)
    text = records_csv(records)
    if args.out:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            _emit(f"error: {exc}", sys.stderr)
            return EXIT_USAGE
    else:
        sys.stdout.write(text)
    return EXIT_OK


# gen -------------------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.states < 2:
        _emit("error: --states must be at least 2", sys.stderr)
        return EXIT_USAGE
    if args.actions < 1:
        _emit("error: --actions must be at least 1", sys.stderr)
        return EXIT_USAGE
    if not 0 < args.discount < 1:
        _emit("error: --discount must lie in (0, 1)", sys.stderr)
        return EXIT_USAGE
    inst = instancegen.random_rmdp(args.states, args.actions, args.seed, args.discount, args.div)
    try:
        Path(args.out).write_bytes(write_instance(inst))
    except OSError as exc:
        _emit(f"error: cannot write {args.out}: {exc}", sys.stderr)
        return EXIT_USAGE
    meta = instancegen.generator_metadata(
        args.seed,
        states=args.states,
        actions=args.actions,
        divergence=inst.kind.value,
        discount=inst.discount,
        kappa=inst.kappa,
        rewards="uniform(0,1)",
        out=args.out,
    )
    _emit(json.dumps(meta))
    return EXIT_OK


# wiring ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phirmdp", description="Robust MDPs with phi-divergence budgets.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pr = sub.add_parser("project", help="solve one projection")
    pr.add_argument("--div", type=_kind, required=True, help="kl, burg, variation or chi2")
    src = pr.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", help="query JSON with nominal, cost, threshold[, delta]")
    src.add_argument("--random", action="store_true", help="draw a random query")
    pr.add_argument("--states", type=int)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--delta", type=_positive)
    pr.add_argument("--json", action="store_true")
    pr.set_defaults(func=cmd_project)

    vi = sub.add_parser("vi", help="robust value iteration on an instance file")
    vi.add_argument("--instance", required=True)
    vi.add_argument("--epsilon", type=_positive, default=1e-3)
    vi.add_argument("--max-iters", type=int, default=10_000)
    vi.add_argument("--policy-out")
    vi.add_argument("--json", action="store_true")
    vi.add_argument("--values", dest="json_values", action="store_true", help="include the full value vector")
    vi.add_argument("--cross-check", action="store_true", help="compare against classical value iteration")
    vi.set_defaults(func=cmd_vi)

    be = sub.add_parser("bench", help="time the solvers on random instances, CSV output")
    be.add_argument("--op", choices=("projection", "bellman"), default="projection")
    be.add_argument("--div", type=lambda s: [_kind(x) for x in s.split(",")], default=[DivergenceKind.KL])
    be.add_argument("--sizes", type=_sizes)
    be.add_argument("--trials", type=int, default=50)
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--tol", type=_positive, help="delta for projections, epsilon for Bellman updates")
    be.add_argument("--oracle", action="store_true", help="also time the brute-force oracle (small sizes only)")
    be.add_argument("--out")
    be.set_defaults(func=cmd_bench)

    ge = sub.add_parser("gen", help="write a random instance file")
    ge.add_argument("--states", type=int, required=True)
    ge.add_argument("--actions", type=int, required=True)
    ge.add_argument("--seed", type=int, default=0)
    ge.add_argument("--div", type=_kind, default=DivergenceKind.KL)
    ge.add_argument("--discount", type=float, default=instancegen.DEFAULT_DISCOUNT)
    ge.add_argument("--out", required=True)
    ge.set_defaults(func=cmd_gen)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "trials", 1) < 1:
        _emit("error: --trials must be at least 1", sys.stderr)
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
