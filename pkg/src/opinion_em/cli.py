"""Command line: ``opinion-em {generate,fit,select,evaluate}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""
import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .em import FitConfig, FitError, NumericalError, fit
from .generator import GenConfig, generate_trace
from .io import (DataError, fit_to_dict, latent_from_dict, read_anchors, read_json, read_trace,
                 truth_to_dict, write_json, write_trace)
from .metrics import evaluate
from .model import SCENARIO_LATITUDES, MacroParams, Scenario, scenario
from .selection import model_select

EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4
THREADS_ENV = "OPINION_EM_THREADS"

logger = logging.getLogger("opinion_em")


class UsageError(ValueError):
    pass


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {value}")
    return value


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (np.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"expected a finite number > 0, got {value}")
    return value


def _latitude(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0.0 <= value <= 2.0:
        raise argparse.ArgumentTypeError(f"latitude must lie in [0, 2], got {value}")
    return value


def _add_macro_flags(parser, with_latitudes=True):
    group = parser.add_argument_group("macro parameters")
    if with_latitudes:
        group.add_argument("--eps-plus", type=_latitude, help="latitude of acceptance")
        group.add_argument("--eps-minus", type=_latitude, help="latitude of contrast")
    group.add_argument("--mu-plus", type=_positive_float, default=0.1)
    group.add_argument("--mu-minus", type=_positive_float, default=0.1)
    group.add_argument("--rho-g", type=_positive_float, default=8.0,
                       help="interaction sigmoid steepness")
    group.add_argument("--rho-z", type=_positive_float, default=16.0,
                       help="action sigmoid steepness")
    group.add_argument("--hard-latitudes", action="store_true",
                       help="near-step sigmoids (rho_g = rho_z = 1e4)")


def _add_fit_flags(parser):
    group = parser.add_argument_group("estimation")
    group.add_argument("--epochs", type=_positive_int, default=2)
    group.add_argument("--restarts", type=_positive_int, default=4)
    group.add_argument("--lr-actions", type=_positive_float, default=1e-3)
    group.add_argument("--lr-interactions", type=_positive_float, default=1e-4)
    group.add_argument("--inner-iterations", type=_positive_int, default=FitConfig.inner_iterations)
    group.add_argument("--tol", type=_positive_float, default=1e-4, help="inner-loop convergence tolerance")
    group.add_argument("--seed", type=int, default=0)
    group.add_argument("--anchors", type=Path, help="TSV with columns a, w")
    group.add_argument("--sigma-prior", action="store_true", help="Beta(8, 8) prior on sigma")
    group.add_argument("--normalized-posterior", action="store_true",
                       help="use Bayes-normalized sign posteriors in the M-step")
    group.add_argument("--threads", type=_positive_int,
                       help=f"parallel workers (default: ${THREADS_ENV} or CPU count)")


def build_parser():
    parser = argparse.ArgumentParser(prog="opinion-em", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic trace and its ground truth")
    gen.add_argument("--scenario", default="balanced", help=", ".join(SCENARIO_LATITUDES))
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, required=True)
    gen.add_argument("--actors", type=_positive_int, default=30)
    gen.add_argument("--actions", type=_positive_int, default=20)
    gen.add_argument("--timesteps", type=_positive_int, default=10)
    gen.add_argument("--interactions-per-step", type=_positive_int, default=3)
    gen.add_argument("--actions-per-step", type=_positive_int, default=15)
    _add_macro_flags(gen, with_latitudes=False)

    fit_p = sub.add_parser("fit", help="estimate opinions, actions and signs")
    fit_p.add_argument("--trace", type=Path, required=True, help="trace directory")
    fit_p.add_argument("--out", type=Path, required=True)
    fit_p.add_argument("--scenario", help="latitude preset; --eps-plus/--eps-minus override it")
    _add_macro_flags(fit_p)
    _add_fit_flags(fit_p)

    sel = sub.add_parser("select", help="rank scenarios by fitted likelihood")
    sel.add_argument("--trace", type=Path, required=True)
    sel.add_argument("--out", type=Path, required=True)
    sel.add_argument("--candidates", default=",".join(SCENARIO_LATITUDES),
                     help="comma-separated scenario names")
    _add_macro_flags(sel, with_latitudes=False)
    _add_fit_flags(sel)

    ev = sub.add_parser("evaluate", help="score a fit against ground truth")
    ev.add_argument("--trace", type=Path, required=True)
    ev.add_argument("--fit", type=Path, required=True, help="fit.json")
    ev.add_argument("--truth", type=Path, required=True, help="ground_truth.json")
    ev.add_argument("--out", type=Path, required=True)
    ev.add_argument("--seed", type=int, default=0, help="seed for negative sampling")
    return parser


def _threads(args):
    if args.threads:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return _positive_int(env)
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"${THREADS_ENV}: {exc}") from None
    return os.cpu_count() or 1


def _macro(args, eps_plus, eps_minus):
    try:
        params = MacroParams(eps_plus, eps_minus, args.mu_plus, args.mu_minus, args.rho_g, args.rho_z)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return params.hardened() if args.hard_latitudes else params


def _scenario(name, **overrides):
    try:
        return scenario(name, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _fit_config(args, trace):
    anchors = read_anchors(args.anchors, trace) if args.anchors else {}
    return FitConfig(epochs=args.epochs, restarts=args.restarts, lr_actions=args.lr_actions,
                     lr_interactions=args.lr_interactions, inner_iterations=args.inner_iterations,
                     convergence_tol=args.tol, seed=args.seed, anchors=anchors,
                     sigma_prior_enabled=args.sigma_prior,
                     normalized_posterior=args.normalized_posterior)


def _manifest(command, config, inputs, outputs, seed):
    return {"command": command, "config": config, "inputs": [str(p) for p in inputs],
            "outputs": [str(p) for p in outputs], "seed": seed, "version": __version__}


def _fit_config_dict(cfg):
    out = dict(vars(cfg))
    out["sigma_prior_params"] = list(cfg.sigma_prior_params)
    return out


def cmd_generate(args):
    sc = _scenario(args.scenario, mu_plus=args.mu_plus, mu_minus=args.mu_minus,
                   rho_g=args.rho_g, rho_z=args.rho_z)
    config = GenConfig(num_actors=args.actors, num_actions=args.actions,
                       num_timesteps=args.timesteps,
                       interactions_per_actor_per_step=args.interactions_per_step,
                       actions_per_actor_per_step=args.actions_per_step, scenario=sc,
                       seed=args.seed, hard_latitudes=args.hard_latitudes)
    trace, truth = generate_trace(config)
    outputs = write_trace(trace, args.out)
    write_json(args.out / "ground_truth.json", truth_to_dict(trace, truth, config.params))
    outputs += [args.out / "ground_truth.json", args.out / "manifest.json"]
    resolved = {k: v for k, v in vars(config).items() if k != "scenario"}
    resolved.update(scenario=sc.name, params=vars(config.params))
    write_json(args.out / "manifest.json", _manifest("generate", resolved, [], outputs, args.seed))


def _fit_params(args):
    eps_plus, eps_minus = args.eps_plus, args.eps_minus
    if args.scenario:
        preset = _scenario(args.scenario).params
        eps_plus = preset.eps_plus if eps_plus is None else eps_plus
        eps_minus = preset.eps_minus if eps_minus is None else eps_minus
    if eps_plus is None or eps_minus is None:
        raise UsageError("give --scenario or both --eps-plus and --eps-minus")
    return _macro(args, eps_plus, eps_minus)


def cmd_fit(args):
    params = _fit_params(args)
    threads = _threads(args)
    trace = read_trace(args.trace)
    config = _fit_config(args, trace)
    result = fit(trace, params, config, n_jobs=min(threads, config.restarts))
    args.out.mkdir(parents=True, exist_ok=True)
    write_json(args.out / "fit.json", fit_to_dict(trace, result, params))
    resolved = {"params": vars(params), "fit": _fit_config_dict(config), "scenario": args.scenario}
    inputs = [args.trace] + ([args.anchors] if args.anchors else [])
    write_json(args.out / "manifest.json",
               _manifest("fit", resolved, inputs, [args.out / "fit.json", args.out / "manifest.json"],
                         args.seed))


def cmd_select(args):
    names = [n.strip() for n in args.candidates.split(",") if n.strip()]
    if not names:
        raise UsageError("--candidates is empty")
    candidates = []
    for name in names:
        sc = _scenario(name, mu_plus=args.mu_plus, mu_minus=args.mu_minus,
                       rho_g=args.rho_g, rho_z=args.rho_z)
        if args.hard_latitudes:
            sc = Scenario(sc.name, sc.params.hardened())
        candidates.append(sc)
    threads = _threads(args)
    trace = read_trace(args.trace)
    config = _fit_config(args, trace)
    report = model_select(trace, candidates, config, n_jobs=min(threads, len(candidates)))
    if report.chosen is None:
        raise FitError("every candidate scenario failed to fit")
    args.out.mkdir(parents=True, exist_ok=True)
    write_json(args.out / "selection.json", report.to_dict())
    resolved = {"candidates": names, "fit": _fit_config_dict(config),
                "params": {k: getattr(args, k) for k in ("mu_plus", "mu_minus", "rho_g", "rho_z",
                                                         "hard_latitudes")}}
    write_json(args.out / "manifest.json",
               _manifest("select", resolved, [args.trace],
                         [args.out / "selection.json", args.out / "manifest.json"], args.seed))


def cmd_evaluate(args):
    trace = read_trace(args.trace)
    fit_payload = read_json(args.fit)
    truth_payload = read_json(args.truth)
    estimated = latent_from_dict(trace, fit_payload, str(args.fit))
    truth = latent_from_dict(trace, truth_payload, str(args.truth))
    try:
        params = MacroParams(**fit_payload["params"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{args.fit}: bad or missing 'params' ({exc})") from None
    report = evaluate(trace, estimated, truth, params, np.random.default_rng(args.seed))
    args.out.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload["f1_positive_class"] = "+1"
    write_json(args.out / "eval.json", payload)
    write_json(args.out / "manifest.json",
               _manifest("evaluate", {"params": vars(params)}, [args.trace, args.fit, args.truth],
                         [args.out / "eval.json", args.out / "manifest.json"], args.seed))


COMMANDS = {"generate": cmd_generate, "fit": cmd_fit, "select": cmd_select, "evaluate": cmd_evaluate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except DataError as exc:
        print(f"opinion-em: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FitError, NumericalError) as exc:
        print(f"opinion-em: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"opinion-em: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
