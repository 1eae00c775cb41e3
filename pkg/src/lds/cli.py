"""Command line front end: ``lds <kind> [flags]`` and ``lds run --config c.json``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import LDSError, SchemaError
from .experiments import (
    EXIT_USAGE,
    dumps,
    exit_code,
    exit_code_for_error,
    ingest_samples,
    kms_demo_config,
    run_experiment,
)
from .measures import Alphabet


def _json_arg(text: str):
    """Inline JSON, or a path to a JSON file."""
    path = Path(text)
    if path.exists() and not path.is_dir():
        text = path.read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON (or an existing file): {exc}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _data(path: str, model: dict) -> list:
    return ingest_samples(path, Alphabet(tuple(model["alphabet"])))


def _config_from_args(args) -> dict:
    kind = args.command
    if kind == "run":
        return _json_arg(args.config)
    if kind == "cramer":
        params = {"distribution": _json_arg(args.dist), "gamma": args.gamma, "n": args.n,
                  "tilt": args.tilt, "slack_constant": args.slack}
        if args.reps:
            params["replications"] = args.reps
    elif kind == "sanov":
        params = {"mu": _json_arg(args.mu), "gamma": _json_arg(args.gamma), "n": args.n,
                  "mode": args.mode, "slack_constant": args.slack}
        if args.reps:
            params["replications"] = args.reps
    elif kind == "escort":
        model = _json_arg(args.model)
        params = {"model": model, "data": _data(args.data, model), "emit": args.emit.split(",")}
    elif kind == "waic":
        model = _json_arg(args.model)
        params = {"model": model, "data": _data(args.data, model)}
        if args.truth:
            params["truth"] = _json_arg(args.truth)
    elif kind == "select":
        models = [_json_arg(m) for m in args.models.split(",")]
        params = {"models": models, "data": _data(args.data, models[0]), "criterion": args.criterion}
    elif kind == "asymptotics":
        params = {"model": _json_arg(args.model), "truth": _json_arg(args.truth), "n": args.n,
                  "replications": args.reps}
        if args.lambda_expected is not None:
            params["lambda_expected"] = args.lambda_expected
        if args.m_expected is not None:
            params["m_expected"] = args.m_expected
    elif kind == "stein":
        params = {"psi": _json_arg(args.psi), "phi": _json_arg(args.phi), "eps": args.eps, "n": args.n,
                  "constant": args.constant}
    else:
        raise SchemaError(f"unknown command {kind!r}")
    return {"kind": kind, "seed": args.seed, "params": params}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lds", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="write the report here instead of stdout")

    p = sub.add_parser("run", help="run a JSON experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")

    p = sub.add_parser("cramer", help="Cramér sandwich for a sample mean")
    p.add_argument("--dist", required=True, help='e.g. \'{"bernoulli": 0.5}\'')
    p.add_argument("--gamma", required=True, help='e.g. "[0.7,1]"')
    p.add_argument("--n", type=_int_list, required=True)
    p.add_argument("--reps", type=int)
    p.add_argument("--tilt", action="store_true")
    p.add_argument("--slack", type=float, default=1.0)
    common(p)

    p = sub.add_parser("sanov", help="Sanov sandwich for an empirical measure")
    p.add_argument("--mu", required=True)
    p.add_argument("--gamma", required=True)
    p.add_argument("--n", type=_int_list, required=True)
    p.add_argument("--mode", choices=("central", "generic"), default="central")
    p.add_argument("--reps", type=int)
    p.add_argument("--slack", type=float, default=1.0)
    common(p)

    p = sub.add_parser("escort", help="escort posterior, predictive and partition function")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--emit", default="predictive,state,F_n")
    common(p)

    p = sub.add_parser("waic", help="WAIC and Bayes losses")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--truth")
    common(p)

    p = sub.add_parser("select", help="rank models by WAIC or AIC")
    p.add_argument("--models", required=True, help="comma-separated model files")
    p.add_argument("--data", required=True)
    p.add_argument("--criterion", choices=("waic", "aic"), default="waic")
    common(p)

    p = sub.add_parser("asymptotics", help="stochastic-complexity slope from replications")
    p.add_argument("--model", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--n", type=_int_list, required=True)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--lambda-expected", type=float)
    p.add_argument("--m-expected", type=int)
    common(p)

    p = sub.add_parser("stein", help="Neyman-Pearson error exponent")
    p.add_argument("--psi", required=True)
    p.add_argument("--phi", required=True)
    p.add_argument("--eps", type=_float_list, default=[0.05, 0.5, 0.95])
    p.add_argument("--n", type=_int_list, required=True)
    p.add_argument("--constant", type=float, default=2.0)
    common(p)

    p = sub.add_parser("demo", help="emit (or run) the KMS mixed-state demo config")
    p.add_argument("name", choices=("kms",))
    p.add_argument("--kind", choices=("escort", "waic", "select"), default="escort")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--run", action="store_true", help="run the config instead of printing it")
    common(p)
    return parser


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    try:
        if args.command == "demo":
            config = kms_demo_config(args.kind, args.n, args.seed)
            if not args.run:
                _emit(dumps(config), args.out)
                return 0
        else:
            config = _config_from_args(args)
        report = run_experiment(config)
    except (LDSError, OSError) as exc:
        print(f"lds: error: {exc}", file=sys.stderr)
        return exit_code_for_error(exc) if isinstance(exc, LDSError) else EXIT_USAGE
    _emit(dumps(report), args.out or config.get("output"))
    return exit_code(report)


if __name__ == "__main__":
    sys.exit(main())
