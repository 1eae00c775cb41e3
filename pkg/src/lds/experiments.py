"""Experiment configs, sample ingestion, dispatch and JSON reports."""

from __future__ import annotations

import copy
import datetime as _dt
import json
import math
import re
from fractions import Fraction
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import __version__
from ._parallel import derive_seed
from .cramer import ScalarDistribution, cramer_bound_check
from .errors import CapacityError, LDSError, ParseError, SchemaError, StructuralError
from .escort import ParametricModel, escort_posterior, escort_predictive_state, partition_function
from .families import KMS_TRUE_CENTER, kms_family, kms_truth
from .intervals import IntervalSet
from .measures import Alphabet, DiscreteMeasure
from .sanov import constraint_from_json, sanov_bound_check
from .selection import (
    TruthSpec,
    bayes_losses,
    functional_variance,
    optimal_parameter,
    select_model,
    stochastic_complexity_asymptotics,
    waic,
)
from .stein import HypothesisPair, np_optimal_beta, stein_exponent_check

KINDS = ("cramer", "sanov", "escort", "waic", "select", "asymptotics", "stein")

EXIT_OK, EXIT_ASSERTION, EXIT_USAGE, EXIT_CAPACITY = 0, 1, 2, 3

_NONNEG = {"type": "number", "minimum": 0}
_N_LIST = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}
_MEASURE = {
    "type": "object",
    "required": ["labels", "weights"],
    "properties": {"labels": {"type": "array", "minItems": 1}, "weights": {"type": "array", "items": _NONNEG}},
}
_MODEL = {
    "type": "object",
    "required": ["alphabet", "m", "theta_grid"],
    "properties": {
        "name": {"type": "string"},
        "alphabet": {"type": "array", "minItems": 1},
        "m": {"type": "array", "items": _NONNEG},
        "beta": {"type": "number", "exclusiveMinimum": 0},
        "dim": {"type": ["integer", "null"], "minimum": 0},
        "theta_grid": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["theta", "prior", "density"],
                "properties": {
                    "theta": {"type": ["array", "number"]},
                    "prior": _NONNEG,
                    "density": {"type": "array", "items": _NONNEG},
                },
            },
        },
    },
}
_TRUTH = {
    "type": "object",
    "required": ["q"],
    "properties": {"q": {"type": "array", "items": _NONNEG}, "seed": {"type": "integer", "minimum": 0}},
}
_DATA = {
    "oneOf": [
        {"type": "array", "minItems": 1},
        {
            "type": "object",
            "required": ["truth", "n"],
            "properties": {"truth": _TRUTH, "n": {"type": "integer", "minimum": 1}},
        },
    ]
}
_EPS = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}

PARAM_SCHEMAS = {
    "cramer": {
        "type": "object",
        "required": ["distribution", "gamma", "n"],
        "properties": {
            "distribution": {
                "type": "object",
                "properties": {
                    "atoms": {
                        "type": "array",
                        "minItems": 1,
                        "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                  "prefixItems": [{"type": "number"}, _NONNEG]},
                    },
                    "values": {"type": "array", "items": {"type": "number"}},
                    "probs": {"type": "array", "items": _NONNEG},
                    "bernoulli": {"type": "number", "minimum": 0, "maximum": 1},
                },
            },
            "gamma": {"type": ["string", "array"]},
            "n": _N_LIST,
            "replications": {"type": ["integer", "null"], "minimum": 1},
            "tilt": {"type": "boolean"},
            "slack_constant": _NONNEG,
        },
    },
    "sanov": {
        "type": "object",
        "required": ["mu", "gamma", "n"],
        "properties": {
            "mu": _MEASURE,
            "gamma": {"type": "object", "required": ["kind"]},
            "n": _N_LIST,
            "mode": {"enum": ["central", "generic"]},
            "replications": {"type": ["integer", "null"], "minimum": 1},
            "slack_constant": _NONNEG,
        },
    },
    "escort": {
        "type": "object",
        "required": ["model", "data"],
        "properties": {
            "model": _MODEL,
            "data": _DATA,
            "emit": {"type": "array", "items": {"enum": ["posterior", "predictive", "state", "F_n"]}},
            "p0": {"type": "array", "items": _NONNEG},
        },
    },
    "waic": {
        "type": "object",
        "required": ["model", "data"],
        "properties": {"model": _MODEL, "data": _DATA, "truth": _TRUTH},
    },
    "select": {
        "type": "object",
        "required": ["models", "data"],
        "properties": {
            "models": {"type": "array", "items": _MODEL, "minItems": 1},
            "data": _DATA,
            "criterion": {"enum": ["waic", "aic"]},
            "truth": _TRUTH,
        },
    },
    "asymptotics": {
        "type": "object",
        "required": ["model", "truth", "n", "replications"],
        "properties": {
            "model": _MODEL,
            "truth": _TRUTH,
            "n": _N_LIST,
            "replications": {"type": "integer", "minimum": 2},
            "lambda_expected": {"type": ["number", "null"]},
            "m_expected": {"type": ["integer", "null"], "minimum": 1},
        },
    },
    "stein": {
        "type": "object",
        "required": ["psi", "phi", "eps", "n"],
        "properties": {
            "psi": _MEASURE,
            "phi": _MEASURE,
            "eps": {"oneOf": [_EPS, {"type": "array", "items": _EPS, "minItems": 1}]},
            "n": _N_LIST,
            "constant": {"type": "number", "exclusiveMinimum": 0},
        },
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["kind", "params"],
    "properties": {
        "kind": {"enum": list(KINDS)},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "params": {"type": "object"},
        "output": {"type": ["string", "null"]},
    },
}


def validate_config(config: Any) -> dict:
    """Schema check of the envelope and the kind-specific parameters."""
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
        jsonschema.validate(config["params"], PARAM_SCHEMAS[config["kind"]])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"invalid config at {where}: {exc.message}") from None
    return config


# --- ingestion ------------------------------------------------------------------

_HEADER = re.compile(r"#\s*alphabet\s*:\s*(.*)$", re.IGNORECASE)


def ingest_samples(path, alphabet=None, real: bool = False) -> list:
    """Read one sample per line.

    An optional first line ``# alphabet: a,b,c`` declares the labels when
    ``alphabet`` is not passed.  Labels are returned as the alphabet's own
    objects; with ``real=True`` values are parsed as decimals instead.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    samples = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _HEADER.match(line)
            if m and alphabet is None and not real:
                alphabet = Alphabet(tuple(s.strip() for s in m.group(1).split(",") if s.strip()))
            continue
        if "," in line:
            raise ParseError(f"expected one sample per line, got {line!r}", lineno)
        if real:
            try:
                value = float(line)
            except ValueError:
                raise ParseError(f"not a decimal number: {line!r}", lineno) from None
            if not math.isfinite(value):
                raise ParseError(f"non-finite value {line!r}", lineno)
            samples.append(value)
        elif alphabet is not None:
            if not isinstance(alphabet, Alphabet):
                alphabet = Alphabet(tuple(alphabet))
            try:
                samples.append(alphabet.labels[alphabet.index(line)])
            except StructuralError as exc:
                raise StructuralError(f"line {lineno}: {exc}") from None
        else:
            samples.append(line)
    if not samples:
        raise ParseError(f"no samples in {path}")
    return samples


# --- JSON helpers ---------------------------------------------------------------


def jsonable(obj):
    """Plain-JSON copy: numpy scalars and arrays unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False)


# --- dispatch -------------------------------------------------------------------


def _data_labels(model: ParametricModel, spec, seed: int) -> list:
    if isinstance(spec, dict):
        truth = TruthSpec.from_json(spec["truth"]).check(model)
        rng = np.random.default_rng(derive_seed(seed, "data"))
        idx = truth.sample(model, int(spec["n"]), rng)
        return [model.alphabet.labels[i] for i in idx]
    return [model.alphabet.labels[model.alphabet.index(x)] for x in spec]


def _run_cramer(p, seed):
    dist = ScalarDistribution.from_json(p["distribution"])
    gamma = IntervalSet.from_json(p["gamma"])
    rep = cramer_bound_check(
        dist, gamma, p["n"], slack_constant=p.get("slack_constant", 1.0),
        replications=p.get("replications"), seed=seed, tilt=p.get("tilt", False),
    )
    return rep.to_json(), {"chernoff_upper_bound": rep.upper_ok, "asymptotic_lower_bound": rep.lower_ok}


def _run_sanov(p, seed):
    mu = DiscreteMeasure.from_json(p["mu"])
    gamma = constraint_from_json(p["gamma"])
    rep = sanov_bound_check(
        mu, gamma, p["n"], p.get("mode", "central"), slack_constant=p.get("slack_constant", 1.0),
        replications=p.get("replications"), seed=seed,
    )
    checks = {"types_upper_bound": rep.upper_ok, "asymptotic_lower_bound": rep.lower_ok}
    if rep.bridge is not None:
        checks["relative_entropy_bridge"] = rep.bridge["equal"]
    return rep.to_json(), checks


def _run_escort(p, seed):
    model = ParametricModel.from_json(p["model"])
    data = _data_labels(model, p["data"], seed)
    emit = p.get("emit", ["predictive", "state", "F_n"])
    post = escort_posterior(model, data)
    pred = post.predictive()
    state = escort_predictive_state(model, data)
    barycenter = (post.weights @ model.density) * model.m
    out = {"n": post.n}
    if "posterior" in emit:
        out["posterior"] = post.weights
    if "predictive" in emit:
        out["predictive"] = pred
    if "state" in emit:
        out["state"] = state.to_json()
    if "F_n" in emit:
        out["partition"] = partition_function(model, data, p.get("p0")).to_json()
    checks = {
        "predictive_normalized": abs(float(pred @ model.m) - 1.0) <= 1e-10,
        "predictive_state_identity": bool(np.max(np.abs(state.weights - barycenter)) <= 1e-14),
    }
    return out, checks


def _run_waic(p, seed):
    model = ParametricModel.from_json(p["model"])
    data = _data_labels(model, p["data"], seed)
    truth = TruthSpec.from_json(p["truth"]) if "truth" in p else None
    losses = bayes_losses(model, data, truth)
    v = functional_variance(model, data)
    w = losses.L_bt + model.beta / losses.n * v
    out = {"n": losses.n, "beta": model.beta, "L_bt": losses.L_bt, "V": v, "WAIC": w}
    checks = {"waic_identity": waic(model, data) == w, "variance_nonnegative": v >= 0}
    if truth is not None:
        out.update(losses.to_json())
        res = losses.identity_residuals
        checks["relative_entropy_bridge"] = abs(res["bridge"]) <= 1e-12
        checks["loss_identities"] = abs(res["generalization"]) <= 1e-12 and abs(res["training"]) <= 1e-12
    else:
        out["generalization"] = "unavailable without a truth specification"
    return out, checks


def _run_select(p, seed):
    models = [ParametricModel.from_json(m) for m in p["models"]]
    data = _data_labels(models[0], p["data"], seed)
    truth = TruthSpec.from_json(p["truth"]) if "truth" in p else None
    rep = select_model(models, data, p.get("criterion", "waic"), truth)
    return rep.to_json(), {}


def _run_asymptotics(p, seed):
    model = ParametricModel.from_json(p["model"])
    truth = TruthSpec.from_json(p["truth"])
    rep = stochastic_complexity_asymptotics(
        model, truth, p["n"], p["replications"], seed, p.get("lambda_expected"), p.get("m_expected"),
    )
    out = rep.to_json()
    out["optimal"] = optimal_parameter(model, truth).to_json()
    checks = {}
    if rep.z_score is not None:
        checks["lambda_within_3se"] = abs(rep.z_score) <= 3.0
    return out, checks


def _run_stein(p, seed):
    psi = DiscreteMeasure.from_json(p["psi"])
    phi = DiscreteMeasure.from_json(p["phi"])
    pair = HypothesisPair(psi, phi)
    eps = p["eps"]
    eps_list = [eps] if isinstance(eps, (int, float)) else list(eps)
    rep = stein_exponent_check(pair, eps_list, p["n"], p.get("constant", 2.0))
    exact = all(
        abs(np_optimal_beta(pair, n, e).alpha - e) <= 1e-12 for n in p["n"] for e in eps_list
    )
    return rep.to_json(), {"exponent_bound": rep.ok, "alpha_exact": exact}


_RUNNERS = {
    "cramer": _run_cramer,
    "sanov": _run_sanov,
    "escort": _run_escort,
    "waic": _run_waic,
    "select": _run_select,
    "asymptotics": _run_asymptotics,
    "stein": _run_stein,
}


def run_experiment(config: dict) -> dict:
    """Validate, dispatch and wrap the results in a report.

    The ``results`` and ``assertions`` entries depend only on the config
    (including its seed); ``provenance`` carries the timestamp.
    """
    config = validate_config(copy.deepcopy(config))
    seed = int(config.get("seed", 0))
    results, checks = _RUNNERS[config["kind"]](config["params"], seed)
    checks = {k: bool(v) for k, v in checks.items()}
    return {
        "config": config,
        "results": jsonable(results),
        "assertions": checks,
        "ok": all(checks.values()),
        "provenance": {
            "engine_version": __version__,
            "seed": seed,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        },
    }


def exit_code(report: dict) -> int:
    return EXIT_OK if report["ok"] else EXIT_ASSERTION


def exit_code_for_error(exc: BaseException) -> int:
    if isinstance(exc, CapacityError):
        return EXIT_CAPACITY
    if isinstance(exc, LDSError):
        return EXIT_USAGE
    raise exc


# --- demo -----------------------------------------------------------------------


def kms_demo_config(kind: str = "escort", n: int = 200, seed: int = 2024) -> dict:
    """Ready-to-run config on the KMS bump-mixture family.

    ``escort`` and ``waic`` use the family containing the true mixed state;
    ``select`` adds a second family whose parameter grid excludes the
    truth's neighborhood.
    """
    model = kms_family()
    truth = kms_truth()
    data = {"truth": truth.to_json(), "n": int(n)}
    if kind == "escort":
        params = {"model": model.to_json(), "data": data, "emit": ["posterior", "predictive", "state", "F_n"]}
    elif kind == "waic":
        params = {"model": model.to_json(), "data": data, "truth": truth.to_json()}
    elif kind == "select":
        excluded = kms_family(exclude=(KMS_TRUE_CENTER, 0.75), name="kms_excluded")
        params = {"models": [model.to_json(), excluded.to_json()], "data": data, "criterion": "waic",
                  "truth": truth.to_json()}
    else:
        raise StructuralError(f"the KMS demo supports escort, waic and select, not {kind!r}")
    return {"kind": kind, "seed": int(seed), "params": params}
