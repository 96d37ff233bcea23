"""Command-line front end.

Subcommands:
  run <config>            execute an experiment config and emit reports
  table <csv...> --tol    iterations-to-accuracy table from saved curves
  range <operator-spec>   numerical-range boundary as theta,re,im rows

Config keys can be overridden with ``--section.key value`` pairs, e.g.
``nlacc run exp.cfg --algorithm.iterations 500``. Exit codes: 0 on
success, 2 on configuration errors, 3 on numerical aborts.
"""

from __future__ import annotations

import argparse
import glob
import sys

import numpy as np

from . import bench, numrange
from .drivers import NonFiniteIterate
from .problems import synthetic_quadratic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _split_overrides(extra):
    if len(extra) % 2 != 0:
        raise bench.ConfigError(f"dangling override token {extra[-1]!r}")
    overrides = {}
    for flag, value in zip(extra[::2], extra[1::2]):
        if not flag.startswith("--"):
            raise bench.ConfigError(f"expected --section.key, got {flag!r}")
        overrides[flag[2:]] = value
    return overrides


def _cmd_run(args, extra):
    config = bench.load_config(args.config, _split_overrides(extra))
    result = bench.run_experiment(config)
    out_dir = args.out or config.output["dir"]
    written = bench.emit_reports([result], {}, out_dir)
    for path in written:
        print(path)
    tols = config.tolerances
    if tols:
        opt = bench.reference_optimum(config)
        table = bench.tolerance_table({result.log.name: result.log}, tols,
                                      opt_value=opt)
        print(bench.format_table(table, tols, [result.log.name]), end="")
    return EXIT_OK


def _cmd_table(args, extra):
    if extra:
        raise bench.ConfigError(f"unexpected arguments: {extra}")
    paths = []
    for pattern in args.curves:
        matched = sorted(glob.glob(pattern))
        paths.extend(matched if matched else [pattern])
    if not paths:
        raise bench.ConfigError("no curve files given")
    logs = {}
    for path in paths:
        log = bench.read_log_csv(path, name=path)
        logs[path] = log
    tols = [float(t) for t in args.tol.split(",")]
    table = bench.tolerance_table(logs, tols)
    print(bench.format_table(table, tols, list(logs)), end="")
    return EXIT_OK


def _parse_operator_spec(spec):
    if ":" not in spec:
        raise bench.ConfigError("operator spec must look like kind:key=val,...")
    kind, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        if "=" not in item:
            raise bench.ConfigError(f"bad operator parameter {item!r}")
        key, _, raw = item.partition("=")
        try:
            params[key] = float(raw)
        except ValueError:
            raise bench.ConfigError(f"bad numeric value {raw!r}") from None
    d = int(params.pop("d", 5))
    seed = int(params.pop("seed", 0))
    if kind == "nesterov":
        ratio = params.pop("ratio", 4.0)
        if params:
            raise bench.ConfigError(f"unknown nesterov parameters {sorted(params)}")
        rng = np.random.default_rng(seed)
        lam_max = 1.0 - 1.0 / ratio
        spectrum = np.linspace(0.0, lam_max, d) if d > 1 else np.array([lam_max])
        beta = numrange.nesterov_momentum(ratio)
        return numrange.nesterov_operator(spectrum, beta).matrix
    if kind == "cp":
        n = int(params.pop("n", d))
        sigma = params.pop("sigma", 1.0)
        tau = params.pop("tau", 1.0)
        mu = params.pop("mu", 0.1)
        if params:
            raise bench.ConfigError(f"unknown cp parameters {sorted(params)}")
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((n, d))
        A /= np.linalg.norm(A, 2)
        return numrange.cp_operator(A, sigma, tau, mu).matrix
    if kind == "gradient":
        condition = params.pop("condition", 10.0)
        if params:
            raise bench.ConfigError(f"unknown gradient parameters {sorted(params)}")
        prob = synthetic_quadratic(d, condition, seed=seed)
        return np.eye(d) - prob.A / prob.L
    raise bench.ConfigError(f"unknown operator kind {kind!r}")


def _cmd_range(args, extra):
    if extra:
        raise bench.ConfigError(f"unexpected arguments: {extra}")
    G = _parse_operator_spec(args.spec)
    if args.power > 1:
        G = np.linalg.matrix_power(G, args.power)
    boundary = numrange.boundary_points(G, args.angles)
    if args.out:
        numrange.write_boundary_csv(boundary, args.out)
        print(args.out)
    else:
        sys.stdout.write("theta,re,im\n")
        for theta, re, im in boundary.csv_rows():
            sys.stdout.write(f"{theta:.17g},{re:.17g},{im:.17g}\n")
    print(f"# max_real = {boundary.max_real:.12g} "
          f"feasible = {numrange.acceleration_feasible(boundary)}",
          file=sys.stderr)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nlacc", description="convergence acceleration toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.set_defaults(func=_cmd_run)

    p_table = sub.add_parser("table", help="iterations-to-accuracy table")
    p_table.add_argument("curves", nargs="+", help="convergence CSVs or globs")
    p_table.add_argument("--tol", default="1e-2,1e-4,1e-6")
    p_table.set_defaults(func=_cmd_table)

    p_range = sub.add_parser("range", help="numerical-range boundary CSV")
    p_range.add_argument("spec", help="kind:key=val,... "
                         "(nesterov:d=5,ratio=4 | cp:d=5,sigma=1,tau=1,mu=0.1"
                         " | gradient:d=5,condition=10)")
    p_range.add_argument("--angles", type=int, default=None)
    p_range.add_argument("--power", type=int, default=1)
    p_range.add_argument("--out", default=None)
    p_range.set_defaults(func=_cmd_range)
    return parser


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        return args.func(args, extra)
    except bench.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteIterate as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
