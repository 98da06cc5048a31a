"""Command-line interface: ``holireg {fit, detect-mc, synth, bench}``.

Exit codes: 0 success, 2 parse or configuration error, 3 numeric failure
(singular matrices, missing degrees of freedom), 4 budget exhausted without
a solution, 5 infeasible model.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .detection import (
    DEFAULT_DELTA,
    DEFAULT_EPSILON,
    PlantedSpec,
    emit_cut,
    evaluate_detection,
    iterative_mc,
    small_eigenvectors,
    synth_generate,
)
from .exceptions import (
    DegreesOfFreedomError,
    HoliregError,
    ParameterError,
    ParseError,
    SingularMatrixError,
    StructuralError,
    UndefinedCorrelationError,
)
from .holistic import DEFAULT_RHO, HolisticProblem, _Setup, tune
from .io import dump_report, read_csv, split_target, write_csv
from .mio import BUDGET, INFEASIBLE, NO_SOLUTION
from .significance import DEFAULT_ALPHA, DEFAULT_BOOTSTRAP

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC, EXIT_BUDGET, EXIT_INFEASIBLE = 0, 2, 3, 4, 5
BENCH_EPSILON = 1.0
FIT_TIME_LIMIT = 10.0
INTERCEPT_NAME = "(intercept)"


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _positive(kind):
    def parse(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"expected a positive value, got {text!r}")
        return v
    return parse


def build_parser():
    parser = argparse.ArgumentParser(prog="holireg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--threads", type=_positive(int), default=1,
                        help="worker count; runs are executed single-threaded")
    common.add_argument("--omit-timing", action="store_true",
                        help="leave wall-clock fields out so reports are reproducible byte for byte")

    detect = argparse.ArgumentParser(add_help=False)
    detect.add_argument("--epsilon", type=_positive(float), default=None)
    detect.add_argument("--delta", type=_positive(float), default=DEFAULT_DELTA)

    design = argparse.ArgumentParser(add_help=False)
    design.add_argument("--input", required=True)
    design.add_argument("--intercept", action="store_true")
    design.add_argument("--standardize", action="store_true")

    planted = argparse.ArgumentParser(add_help=False)
    planted.add_argument("--n", type=_positive(int), default=200)
    planted.add_argument("--p", type=_positive(int), default=30)
    planted.add_argument("--mr3", type=int, default=2)
    planted.add_argument("--mr4", type=int, default=1)
    planted.add_argument("--mr4plus", type=int, default=0)
    planted.add_argument("--noise", type=float, default=0.01,
                         help="standard deviation of the noise added to every entry")

    p_fit = sub.add_parser("fit", parents=[common, detect, design],
                           help="tune and fit a holistic regression model")
    p_fit.add_argument("--target", required=True)
    p_fit.add_argument("--k-grid", type=_int_list, default=None)
    p_fit.add_argument("--gamma-grid", type=_float_list, default=None)
    p_fit.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p_fit.add_argument("--rho", type=float, default=DEFAULT_RHO)
    p_fit.add_argument("--time-limit", type=_positive(float), default=FIT_TIME_LIMIT,
                       help="seconds per solve")
    p_fit.add_argument("--node-limit", type=_positive(int), default=None,
                       help="nodes per solve")
    p_fit.add_argument("--bootstrap", type=_positive(int), default=DEFAULT_BOOTSTRAP)

    p_det = sub.add_parser("detect-mc", parents=[common, detect, design],
                           help="find multicollinear relations among CSV columns")
    p_det.add_argument("--target", default=None, help="column to leave out")

    p_syn = sub.add_parser("synth", parents=[common, planted],
                           help="write a design with planted relations as CSV")
    p_syn.add_argument("--relations", default=None,
                       help="also write the planted relations as a JSON report")

    p_bench = sub.add_parser("bench", parents=[common, detect, planted],
                             help="detection benchmark on planted instances")
    p_bench.add_argument("--instances", type=int, default=10)
    p_bench.add_argument("--time-limit", type=_positive(float), default=None,
                         help="total seconds for the benchmark")
    return parser


def _config(args):
    cfg = {k: v for k, v in vars(args).items() if k not in ("out",)}
    cfg["out"] = args.out
    return cfg


def _timing(args, **fields):
    return {} if args.omit_timing else fields


def cmd_detect_mc(args):
    names, data = read_csv(args.input)
    if args.target is not None:
        names, data, _ = split_target(names, data, args.target)
    args.epsilon = DEFAULT_EPSILON if args.epsilon is None else args.epsilon
    t0 = time.perf_counter()
    space = small_eigenvectors(data, args.epsilon, add_intercept=args.intercept,
                               standardize=args.standardize)
    relations = iterative_mc(space, args.delta)
    elapsed = time.perf_counter() - t0
    cols = names + ([INTERCEPT_NAME] if args.intercept else [])
    report = dict(
        command="detect-mc", config=_config(args),
        eigen=dict(dim=space.dim, small_values=space.values,
                   smallest_kept=float(space.complement_values.min())
                   if space.complement_values.size else None),
        relations=[dict(support=[cols[j] for j in r.support], indices=list(r.support),
                        coefficients={cols[j]: float(r.coefficients[j]) for j in r.support},
                        rayleigh=r.rayleigh, off_support_mass=r.off_support_mass)
                   for r in relations],
        cuts=[str(emit_cut(r)) for r in relations],
        **_timing(args, time=elapsed))
    dump_report(report, args.out)
    return EXIT_OK


def cmd_synth(args):
    spec = PlantedSpec.from_counts(args.mr3, args.mr4, args.mr4plus, args.noise, args.seed)
    X, supports = synth_generate(args.n, args.p, spec)
    names = [f"x{j}" for j in range(args.p)]
    if args.out is None:
        raise ParseError("synth needs --out for the CSV file")
    write_csv(args.out, names, X)
    if args.relations is not None:
        dump_report(dict(command="synth", config=_config(args),
                         planted=[dict(support=[names[j] for j in s], indices=list(s))
                                  for s in supports]), args.relations)
    return EXIT_OK


def cmd_bench(args):
    args.epsilon = BENCH_EPSILON if args.epsilon is None else args.epsilon
    if args.instances < 0:
        raise ParameterError("instances must be nonnegative")
    seeds = np.random.SeedSequence(args.seed).generate_state(args.instances) \
        if args.instances else []
    runs = []
    status = "complete"
    start = time.perf_counter()
    for i, s in enumerate(seeds):
        if args.time_limit is not None and time.perf_counter() - start > args.time_limit:
            status = BUDGET
            break
        spec = PlantedSpec.from_counts(args.mr3, args.mr4, args.mr4plus, args.noise, int(s))
        X, planted = synth_generate(args.n, args.p, spec)
        t0 = time.perf_counter()
        found = iterative_mc(small_eigenvectors(X, args.epsilon), args.delta)
        elapsed = time.perf_counter() - t0
        acc, fpr = evaluate_detection([r.support for r in found], planted)
        runs.append(dict(instance=i, seed=int(s), acc=acc, fpr=fpr,
                         planted=[list(p) for p in planted],
                         found=[list(r.support) for r in found], **_timing(args, time=elapsed)))
    summary = dict(instances=len(runs), status=status)
    if runs:
        summary.update(mean_acc=float(np.mean([r["acc"] for r in runs])),
                       mean_fpr=float(np.mean([r["fpr"] for r in runs])))
        if not args.omit_timing:
            summary["mean_time"] = float(np.mean([r["time"] for r in runs]))
    dump_report(dict(command="bench", config=_config(args), summary=summary, runs=runs),
                 args.out)
    return EXIT_BUDGET if status == BUDGET else EXIT_OK


def cmd_fit(args):
    names, data = read_csv(args.input)
    names, X, y = split_target(names, data, args.target)
    args.epsilon = DEFAULT_EPSILON if args.epsilon is None else args.epsilon
    prob = HolisticProblem(X, y, k_grid=args.k_grid, gamma_grid=args.gamma_grid,
                           alpha=args.alpha, rho=args.rho, epsilon=args.epsilon,
                           delta=args.delta, fit_intercept=args.intercept,
                           standardize=args.standardize, seed=args.seed,
                           time_limit=args.time_limit, node_limit=args.node_limit,
                           bootstrap_samples=args.bootstrap)
    setup = _Setup(prob)
    if prob.k_grid is None:
        prob.k_grid = setup.default_k_grid()
    if prob.gamma_grid is None:
        prob.gamma_grid = setup.default_gamma_grid()
    args.k_grid, args.gamma_grid = list(prob.k_grid), list(prob.gamma_grid)
    res = tune(prob, setup)
    cols = names + ([INTERCEPT_NAME] if args.intercept else [])
    stats = res.statistics if res.statistics is not None else np.full(len(cols), np.nan)
    table = [dict(name=cols[j], selected=bool(res.z[j]), coefficient=float(res.beta[j]),
                  statistic=float(stats[j])) for j in range(len(cols))]
    report = dict(
        command="fit", config=_config(args),
        result=dict(status=res.status, support=[cols[j] for j in res.support],
                    k=res.k, support_size=res.support_size, gamma=res.gamma,
                    test_mse=res.test_mse, validation_mse=res.validation_mse,
                    significance=res.significance, ma=res.ma, objective=res.objective,
                    lower_bound=res.lower_bound, nodes=res.nodes, lazy_rounds=res.lazy_rounds,
                    solves=res.solves, bootstrap_skipped=res.bootstrap_skipped,
                    **_timing(args, time_total=res.time_total,
                              time_detection=res.time_detection)),
        coefficients=table,
        relations=[[cols[j] for j in s] for s in res.relations],
        cuts=[[cols[j] for j in c] for c in res.cuts],
        pairs=[[cols[i], cols[j]] for i, j in res.pairs])
    dump_report(report, args.out)
    if res.status == INFEASIBLE:
        return EXIT_INFEASIBLE
    if res.status == NO_SOLUTION:
        return EXIT_BUDGET
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "detect-mc": cmd_detect_mc, "synth": cmd_synth, "bench": cmd_bench}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ParseError, StructuralError, ParameterError) as exc:
        print(f"holireg: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (SingularMatrixError, DegreesOfFreedomError, UndefinedCorrelationError,
            ArithmeticError) as exc:
        print(f"holireg: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HoliregError as exc:
        print(f"holireg: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
