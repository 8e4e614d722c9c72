"""Command-line entry point: ``fit``, ``experiment`` and ``example``.

Errors are written to stderr as one JSON object and mapped to exit codes
2 (usage), 3 (input data), 4 (numerical) and 5 (convergence).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .data import read_csv
from .errors import NumericalError, RKHSBayesError, UsageError
from .kernel import factor, gram, parse_kernel
from .loss import calibrated_absolute, parse_loss

log = logging.getLogger("rkhsbayes")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v >= 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return v


def _methods(text):
    return tuple(m.strip() for m in text.split(",") if m.strip())


def _add_chain_flags(p):
    g = p.add_argument_group("chain (l1-bayes)")
    g.add_argument("--chain-length", type=_positive_int, default=20_000)
    g.add_argument("--burn-in", type=float, default=0.2, help="burn-in fraction")
    g.add_argument("--prop-lambda", type=_nonneg_float, default=30.0, help="0 freezes lambda")
    g.add_argument("--prop-tau", type=_nonneg_float, default=0.003, help="0 freezes tau")
    g.add_argument("--no-adapt", action="store_true", help="keep proposal scales fixed during burn-in")
    g.add_argument("--lambda-moves", type=int, default=0, help="extra lambda-only moves per iteration")
    g.add_argument("--seed", type=int, default=None, help="master seed (random if omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rkhsbayes", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="{fit,experiment,example}")
    sub.required = True

    fit = sub.add_parser("fit", help="fit a kernel estimate to x,y data")
    fit.add_argument("--config", help="JSON file with flag values (flags win)")
    fit.add_argument("--data", help="input CSV with header x,y (required)")
    fit.add_argument("--out", help="output CSV x,fhat (stdout if omitted)")
    fit.add_argument("--kernel", default="cubic-spline-shifted", help="cubic-spline-shifted | rbf:<width> | linear")
    fit.add_argument("--loss", default="l2", help="l2 | l1 | vapnik:<eps> | huber:<delta>")
    fit.add_argument("--gamma", type=_positive_float, help="regularization; required unless --method is given")
    fit.add_argument("--sigma2", type=_positive_float, help="noise variance for --method")
    fit.add_argument("--method", choices=("l2-oml", "l1-bayes"), help="choose gamma from the data")
    fit.add_argument("--grid", type=_positive_int, default=200, help="query points on [0, 1]")
    fit.add_argument("--estimator", choices=("map", "minvar"), default="map")
    _add_chain_flags(fit)

    exp = sub.add_parser("experiment", help="Monte Carlo comparison on exp(sin 8x)")
    exp.add_argument("--config", help="JSON file with flag values (flags win)")
    exp.add_argument("--runs", type=_positive_int, default=30)
    exp.add_argument("--outliers", action="store_true")
    exp.add_argument("--methods", type=_methods, default=("l2-oml", "l1-bayes"))
    exp.add_argument("--out", help="output CSV run,method,rel_error (stdout if omitted)")
    exp.add_argument("--noise-variance", type=_nonneg_float, default=0.09)
    exp.add_argument("--sigma2-override", type=_positive_float, help="noise variance given to the estimators")
    exp.add_argument("--estimator", choices=("map", "minvar"), default="map")
    exp.add_argument("--jobs", type=_positive_int, default=1)
    _add_chain_flags(exp)

    sub.add_parser("example", help="verify the single-measurement absolute-loss example")
    return parser


@dataclass
class CliConfig:
    command: str
    options: dict = field(default_factory=dict)
    verbose: bool = False


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _load_config_file(path, sub):
    try:
        with open(path) as fh:
            values = json.load(fh)
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"--config: {path} is not valid JSON: {exc}") from None
    if not isinstance(values, dict):
        raise UsageError("--config: top level must be an object")
    known = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    out = {}
    for key, val in values.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise UsageError(f"--config: unknown key {key!r}")
        action = known[dest]
        if action.type is not None and not isinstance(val, bool):
            val = action.type(val if isinstance(val, str) else str(val))
        out[dest] = val
    return out


def parse(argv) -> CliConfig:
    parser = build_parser()
    ns = parser.parse_args(argv)
    opts = vars(ns)
    command = opts.pop("command")
    verbose = opts.pop("verbose")
    path = opts.pop("config", None)
    if path is not None:
        sub = _subparser(parser, command)
        try:
            sub.set_defaults(**_load_config_file(path, sub))
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"--config: {exc}") from None
        opts = vars(sub.parse_args(argv[argv.index(command) + 1 :]))
        opts.pop("config", None)
    if command == "fit":
        if not opts.get("data"):
            raise UsageError("the following argument is required: --data")
        if opts.get("gamma") is None and opts.get("method") is None:
            raise UsageError("fit needs --gamma or --method")
        if opts.get("method") and opts.get("sigma2") is None:
            raise UsageError("--method needs --sigma2")
    if command == "experiment":
        from .experiment import METHODS

        bad = [m for m in opts["methods"] if m not in METHODS]
        if bad or not opts["methods"]:
            raise UsageError(f"--methods: unknown {bad}; choose from {','.join(METHODS)}")
    if "burn_in" in opts and not 0.0 <= opts["burn_in"] < 1.0:
        raise UsageError("--burn-in must lie in [0, 1)")
    return CliConfig(command, opts, verbose)


def _effective_seed(opts):
    seed = opts.get("seed")
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1, np.uint64)[0] >> np.uint64(1))
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _chain_config(opts, seed):
    from .mcmc import ChainConfig

    return ChainConfig(
        length=opts["chain_length"],
        burn_in=opts["burn_in"],
        prop_lambda=opts["prop_lambda"],
        prop_tau=opts["prop_tau"],
        seed=seed,
        adapt=not opts["no_adapt"],
        lambda_moves=opts["lambda_moves"],
    )


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        from .errors import InputError

        raise InputError(f"cannot write {path}: {exc.strerror}") from None


def _cmd_fit(opts):
    from .gauss import oml_lambda
    from .mcmc import min_variance_function, min_variance_g, posterior_lambda, run_chain
    from .solver import evaluate, solve_general, solve_quadratic

    data = read_csv(opts["data"])
    spec = parse_kernel(opts["kernel"])
    g = gram(spec, data.x)
    if np.unique(data.x).size < data.x.size and factor(g).jitter > 0:
        raise NumericalError(
            "training Gram matrix is singular: duplicated x locations",
            {"n": int(data.x.size), "distinct": int(np.unique(data.x).size)},
        )
    grid = np.linspace(0.0, 1.0, opts["grid"]) if opts["grid"] > 1 else np.array([0.0])
    summary = {"kernel": str(spec)}
    method = opts["method"]
    if method is None:
        loss = parse_loss(opts["loss"])
        gamma = opts["gamma"]
        est = solve_quadratic(g, data.y, gamma) if loss.kind == "quadratic" else solve_general(g, data.y, loss, gamma)
        fhat = evaluate(est, grid)
        summary.update(loss=opts["loss"], gamma=gamma)
    elif method == "l2-oml":
        sigma2 = opts["sigma2"]
        oml = oml_lambda(g, data.y, sigma2)
        gamma = sigma2 / oml.lam
        fhat = evaluate(solve_quadratic(g, data.y, gamma), grid)
        summary.update(method=method, lam=oml.lam, gamma=gamma, at_boundary=bool(oml.at_boundary))
    else:
        sigma2 = opts["sigma2"]
        seed = _effective_seed(opts)
        chain = run_chain(_chain_config(opts, seed), g, data.y, sigma2)
        lam = posterior_lambda(chain)
        gamma = sigma2 / lam.mean
        skipped = 0
        if opts["estimator"] == "map":
            est = solve_general(g, data.y, calibrated_absolute(math.sqrt(sigma2)), gamma)
            fhat = evaluate(est, grid)
        else:
            mv = min_variance_g(chain, g, data.y)
            skipped = mv.skipped
            fhat = min_variance_function(mv.gbar, g, spec, data.x, grid)
        summary.update(
            method=method,
            seed=seed,
            gamma=gamma,
            chain={
                "lambda_mean": lam.mean,
                "lambda_ci": list(lam.ci),
                "acceptance": chain.acceptance,
                "ess": chain.ess,
                "skipped": skipped,
            },
        )
    rows = "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(grid, np.atleast_1d(fhat)))
    _emit("x,fhat\n" + rows, opts["out"])
    print(json.dumps(summary), file=sys.stdout if opts["out"] else sys.stderr)
    return 0


def _cmd_experiment(opts):
    import tempfile
    from pathlib import Path

    from . import experiment as ex

    seed = _effective_seed(opts)
    config = ex.ExperimentConfig(
        runs=opts["runs"],
        noise_variance=opts["noise_variance"],
        outliers=opts["outliers"],
        methods=opts["methods"],
        seed=seed,
        chain=_chain_config(opts, seed),
        sigma2_override=opts["sigma2_override"],
        estimator=opts["estimator"],
        jobs=opts["jobs"],
    )
    report = ex.run(config)
    summary = {"seed": seed, "summary": report.summary(), "failures": len(report.failures)}
    if opts["out"]:
        ex.export(report, opts["out"])
        print(json.dumps(summary))
    else:
        with tempfile.TemporaryDirectory() as tmp:
            csv_path = Path(tmp) / "report.csv"
            ex.export(report, csv_path)
            sys.stdout.write(csv_path.read_text())
        print(json.dumps(summary), file=sys.stderr)
    return 0


def _cmd_example(opts):
    from .oracle import example_check

    r = example_check()
    out = {
        "f_hat": r.f_hat,
        "E_f_given_y": r.E_f_given_y,
        "difference": r.difference,
        "identity_residual": r.identity_residual,
    }
    print(json.dumps(out))
    return 0


COMMANDS = {"fit": _cmd_fit, "experiment": _cmd_experiment, "example": _cmd_example}


def _report(exc):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
    diag = getattr(exc, "diagnostics", None)
    if diag:
        payload["diagnostics"] = diag
    print(json.dumps(payload, default=str), file=sys.stderr)
    return exc.exit_code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        config = parse(argv)
    except UsageError as exc:
        return _report(exc)
    if config.verbose:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(name)s: %(message)s")
    try:
        return COMMANDS[config.command](config.options)
    except RKHSBayesError as exc:
        return _report(exc)


if __name__ == "__main__":
    sys.exit(main())
