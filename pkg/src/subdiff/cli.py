"""Command-line entry point: ``python -m subdiff`` or the ``subdiff`` script.

Exit codes: 0 success, 1 usage error, 2 assumption violation, 3 numeric failure.
"""

import argparse
from fractions import Fraction
import json
import math
import os
import sys

from .coefficients import get_coefficients, rate_from_metadata
from .diagnostics import (
    MomentQuery,
    TestFunction,
    exit_probability_bracket,
    probe_exp_moment,
)
from .errors import (
    AssumptionViolation,
    DomainError,
    FitError,
    MissingDerivative,
    NumericOverflow,
    ResolutionError,
    SimulationLimit,
    UnsupportedOrder,
)
from .harness import ExperimentConfig, emit_report, render_report, run_convergence
from .noise import NoiseStream, SubordinatorSpec
from .schemes import SUBORDINATOR_CHANNEL, SchemeConfig, simulate_solution
from .time_change import simulate_time_change

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ASSUMPTION = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments, which collides with our code for
    # assumption violations
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _subordinator_args(p, beta_default=0.8):
    p.add_argument("--family", default="stable", choices=["stable", "tempered_stable", "gamma"])
    p.add_argument("--beta", type=float, default=beta_default)
    p.add_argument("--kappa", type=float, default=1.0)


def _make_spec(args):
    if args.family == "stable":
        return SubordinatorSpec.stable(args.beta)
    if args.family == "tempered_stable":
        return SubordinatorSpec.tempered_stable(args.beta, args.kappa)
    return SubordinatorSpec.gamma()


def build_parser():
    parser = _Parser(prog="subdiff", description="SDEs driven by time-changed Brownian motion")
    parser.add_argument("--seed", type=int, default=None, help="master seed (falls back to $SUBDIFF_SEED, then 0)")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for path loops")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="one path; per-step CSV to stdout or --out")
    p.add_argument("--sde", default="ex1")
    p.add_argument("--scheme", default="em")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--compensator", default="inner", choices=["inner", "outer"])
    p.add_argument("--delta", type=float, default=2.0**-10)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--x0", type=float, default=1.0)
    p.add_argument("--path-index", type=int, default=0)
    p.add_argument("--out", default=None)
    _subordinator_args(p)

    p = sub.add_parser("convergence", help="strong-error table and fitted order")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--format", default="csv", choices=["csv", "json", "svg"])

    p = sub.add_parser("moments", help="exponential-moment classifier and Monte Carlo probe")
    _subordinator_args(p)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--kind", default="exp_of_power", choices=["exp_of_power", "power", "inverse_power"])
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=2.0**-12)

    p = sub.add_parser("rate", help="theoretical strong order and admissible beta range")
    p.add_argument("--scheme", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--qtilde", type=float, default=None)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--additive", action="store_true")

    p = sub.add_parser("exit-bracket", help="bracket for the one-sided exit probability")
    _subordinator_args(p)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--delta", type=float, default=2.0**-12)
    return parser


def _resolve_seed(seed):
    if seed is not None:
        return seed
    env = os.environ.get("SUBDIFF_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"SUBDIFF_SEED must be an integer, got {env!r}")


def _cmd_simulate(args, seed):
    coeffs = get_coefficients(args.sde)
    scheme = SchemeConfig(args.scheme, gamma=args.gamma, milstein_compensator=args.compensator)
    stream = NoiseStream(seed, args.path_index)
    path = simulate_time_change(_make_spec(args), args.delta, args.T, stream.substream(SUBORDINATOR_CHANNEL))
    sol = simulate_solution(coeffs, scheme, path, noise=stream, x0=args.x0)
    if args.out is None:
        sol.write_csv(sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            sol.write_csv(fh)


def _cmd_convergence(args, seed, threads):
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config!r}: {exc.strerror}")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {args.config!r} is not valid JSON: {exc}")
    if args.seed_given:
        raw["seed"] = seed
    config = ExperimentConfig.from_dict(raw, seed=seed)
    report = run_convergence(config, threads=threads)
    if report.slope is None:
        sys.stderr.write(report.diagnostic + "\n")
    if args.out is None:
        sys.stdout.write(render_report(report, args.format))
    else:
        emit_report(report, args.format, args.out)
    if report.slope is None:
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_moments(args, seed):
    spec = _make_spec(args)
    tf = TestFunction(args.kind, args.p, args.scale)
    query = MomentQuery(spec, args.t, tf, args.samples)
    verdict = query.classify()
    out = {"query": query.to_dict(), "classifier_verdict": verdict.value}
    if tf.kind != "inverse_power":
        probe = probe_exp_moment(query, NoiseStream(seed).generator, delta=args.delta)
        out["probe_hint"] = probe.verdict_hint.value
        # overflowed means are reported as the string "inf" to keep the output strict JSON
        out["running_means"] = {
            k: (v if math.isfinite(v) else "inf") for k, v in probe.to_dict()["running_means"].items()
        }
        out["max_share"] = probe.max_share
    bracket = exit_probability_bracket(
        spec, args.t, args.samples, NoiseStream(seed, 1).generator, delta=args.delta
    )
    out["bracket"] = {k: (v if math.isfinite(v) else None) for k, v in bracket.to_dict().items()}
    print(json.dumps(out, indent=2, sort_keys=True, allow_nan=False))


def _cmd_rate(args):
    info = rate_from_metadata(
        args.scheme, args.beta, q=args.q, q_tilde=args.qtilde, theta=args.theta,
        gamma=args.gamma, additive=args.additive,
    )
    lo, hi = info.required_beta_range
    print(f"order {info.order:g}")
    print(f"valid range ({_frac(lo)},{_frac(hi)})")
    print("VALID" if info.beta_valid else "OUT_OF_RANGE")
    print(f"result: {info.basis}")
    return EXIT_OK if info.beta_valid else EXIT_ASSUMPTION


def _frac(x):
    f = Fraction(x).limit_denominator(1000)
    if abs(float(f) - x) < 1e-12:
        return str(f)
    return f"{x:.6g}"


def _cmd_exit_bracket(args, seed):
    b = exit_probability_bracket(_make_spec(args), args.T, args.samples, NoiseStream(seed).generator, delta=args.delta)
    print(json.dumps({"bracket": b.to_dict()}, indent=2, sort_keys=True))


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        args.seed_given = args.seed is not None
        seed = _resolve_seed(args.seed)
        if args.command == "simulate":
            _cmd_simulate(args, seed)
            return EXIT_OK
        if args.command == "convergence":
            return _cmd_convergence(args, seed, args.threads)
        if args.command == "moments":
            _cmd_moments(args, seed)
            return EXIT_OK
        if args.command == "rate":
            return _cmd_rate(args)
        _cmd_exit_bracket(args, seed)
        return EXIT_OK
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except (AssumptionViolation, MissingDerivative) as exc:
        sys.stderr.write(f"assumption violation: {exc}\n")
        return EXIT_ASSUMPTION
    except (NumericOverflow, FitError, ResolutionError, SimulationLimit) as exc:
        sys.stderr.write(f"numeric failure: {exc}\n")
        return EXIT_NUMERIC
    except (DomainError, UnsupportedOrder) as exc:
        sys.stderr.write(f"invalid input: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE


def main():
    sys.exit(cli_main())
