"""Experiment configuration: schema, validation, defaults, and builders.

A config is one JSON object describing one experiment run: the model
(dimension, cutoff, covariance), the integrator, optional path damping, a
seed root, and experiment-specific parameters.  The contract is strict:
unknown keys are rejected everywhere, kind-specific requirements are
enforced with explicit messages, and ``resolve_config`` materializes every
default so the copy written next to the artifacts is self-contained -- a
report number must be reproducible from that one file plus the package.

``resolve_config`` is idempotent and ``canonical_json`` is deterministic
(sorted keys, fixed indentation, no timestamps), which is what makes rerun
artifacts byte-identical for the same seed root.

Test functions, states, and witnesses are described declaratively:

* factor: ``{"kind": "tanh"|"cos"|"poly"|"bump", "slot": i, ...}`` where
  ``slot`` indexes the function's ``entries`` tuple;
* function: ``{"entries": [...], "terms": [{"weight": w, "factors": [...]}]}``;
* state: ``{"kind": "zero"|"mode"|"random"|"coeffs", ...}``;
* witness: ``{"label": ..., "components": [{"function": ..., "frac": p}]}``.
"""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path
from typing import Any

import numpy as np
from jsonschema import Draft202012Validator

from .basis import (
    BasisSpec,
    CovarianceError,
    CovarianceSpec,
    SpectralField,
    entry_index,
    enumerate_basis,
    mode_field,
    random_field,
)
from .cylinder import (
    CylindricalFunction,
    bump_factor,
    cos_factor,
    cyl_function,
    poly_factor,
    tanh_factor,
)
from .engine import DampingSpec, IntegratorConfig, NoiseStreams, SimulationError
from .martingale import Witness

__all__ = [
    "ConfigError",
    "EXPERIMENT_KINDS",
    "IDENTITY_KINDS",
    "LEMMA_KINDS",
    "build_basis",
    "build_covariance",
    "build_damping",
    "build_function",
    "build_integrator",
    "build_state",
    "build_streams",
    "build_witness",
    "canonical_json",
    "load_config",
    "resolve_config",
    "validate_config",
]

CONFIG_VERSION = 1

EXPERIMENT_KINDS = (
    "simulate",
    "semigroup",
    "identity-check",
    "martingale-test",
    "lemma-validate",
    "uniqueness-crosscheck",
)

IDENTITY_KINDS = (
    "duhamel",
    "resolvent-identity",
    "chapman-kolmogorov",
    "ps-duhamel",
    "mild-formula",
    "resolvent-suite",
)

LEMMA_KINDS = ("l1", "l2", "p31", "bilinear")

DAMPING_KINDS = (
    "quadratic-enstrophy",
    "quartic-enstrophy",
    "sixth-h1",
    "energy-h1",
)


class ConfigError(ValueError):
    """The configuration is malformed or semantically invalid."""


# ---------------------------------------------------------------------------
# Schemas


_FACTOR_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["tanh", "cos", "poly", "bump"]},
        "slot": {"type": "integer", "minimum": 0},
        "coefs": {
            "type": "array", "items": {"type": "number"}, "minItems": 1,
        },
        "omega": {"type": "number"},
        "theta": {"type": "number"},
        "center": {"type": "number"},
        "width": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["kind", "slot"],
    "additionalProperties": False,
}

_FUNCTION_SCHEMA = {
    "type": "object",
    "properties": {
        "entries": {
            "type": "array",
            "items": {"type": "integer", "minimum": 0},
            "minItems": 1,
        },
        "terms": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "weight": {"type": "number"},
                    "factors": {"type": "array", "items": _FACTOR_SCHEMA},
                },
                "required": ["weight", "factors"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["entries", "terms"],
    "additionalProperties": False,
}

_STATE_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["zero", "mode", "random", "coeffs"]},
        "wavevector": {"type": "array", "items": {"type": "integer"}},
        "amplitude": {"type": "number"},
        "pol": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "decay": {"type": "number"},
        "norm": {"type": "number", "exclusiveMinimum": 0},
        "norm_order": {"type": "number"},
        "values": {"type": "array", "items": {"type": "number"}},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_WITNESS_SCHEMA = {
    "type": "object",
    "properties": {
        "label": {"type": "string", "minLength": 1},
        "components": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "function": _FUNCTION_SCHEMA,
                    "frac": {"type": "number"},
                },
                "required": ["function", "frac"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["label", "components"],
    "additionalProperties": False,
}

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_COUNT = {"type": "integer", "minimum": 1}
_NUM_ARRAY = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_POS_ARRAY = {"type": "array", "items": _POSITIVE, "minItems": 1}
_CUTOFFS = {
    "type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1,
}

_PARAMS_SCHEMAS: dict[str, dict] = {
    "simulate": {
        "type": "object",
        "properties": {
            "initial_state": _STATE_SCHEMA,
            "n_paths": _COUNT,
            "record_times": {"type": "array", "items": _NONNEG},
            "record_coords": {
                "type": "array", "items": {"type": "integer", "minimum": 0},
            },
            "record_bilinear": {"type": "boolean"},
            "hit_radii": {"type": "array", "items": _POSITIVE},
            "freeze_radius": {"type": ["number", "null"]},
            "n_trajectories": {"type": "integer", "minimum": 0},
            "use_drift": {"type": "boolean"},
        },
        "required": ["initial_state"],
        "additionalProperties": False,
    },
    "semigroup": {
        "type": "object",
        "properties": {
            "target": {"enum": ["transition", "ou", "resolvent"]},
            "function": _FUNCTION_SCHEMA,
            "initial_state": _STATE_SCHEMA,
            "t": _NONNEG,
            "lam": _POSITIVE,
            "n_paths": _COUNT,
            "stop_radius": {"type": ["number", "null"]},
            "t_max": _POSITIVE,
            "n_nodes": _COUNT,
            "tol": _POSITIVE,
        },
        "required": ["target", "function", "initial_state"],
        "additionalProperties": False,
    },
    "identity-check": {
        "type": "object",
        "properties": {
            "identity": {"enum": list(IDENTITY_KINDS)},
            "function": _FUNCTION_SCHEMA,
            "initial_state": _STATE_SCHEMA,
            "initial_states": {
                "type": "array", "items": _STATE_SCHEMA, "minItems": 1,
            },
            "t": _POSITIVE,
            "s": _POSITIVE,
            "t1": _NONNEG,
            "t2": _POSITIVE,
            "lam": _POSITIVE,
            "mu": _POSITIVE,
            "K": _POSITIVE,
            "lams": _POS_ARRAY,
            "n_paths": _COUNT,
            "n_direct": _COUNT,
            "n_outer": _COUNT,
            "n_inner": _COUNT,
            "n_ou": _COUNT,
            "n_nodes": _COUNT,
            "inner_nodes": _COUNT,
            "t_max": {
                "anyOf": [{"type": "null"}, _POSITIVE],
            },
            "tol": _POSITIVE,
            "const_tol": _POSITIVE,
            "budget_steps": _COUNT,
            "fd_h": {"anyOf": [{"type": "null"}, _POSITIVE]},
        },
        "required": ["identity", "function"],
        "additionalProperties": False,
    },
    "martingale-test": {
        "type": "object",
        "properties": {
            "function": _FUNCTION_SCHEMA,
            "pairs": {
                "type": "array",
                "items": {
                    "type": "array",
                    "items": _NONNEG,
                    "minItems": 2,
                    "maxItems": 2,
                },
                "minItems": 1,
            },
            "initial_state": _STATE_SCHEMA,
            "witnesses": {
                "type": ["array", "null"], "items": _WITNESS_SCHEMA,
            },
            "n_paths": _COUNT,
            "z_threshold": _POSITIVE,
            "freeze_radius": {"type": ["number", "null"]},
        },
        "required": ["function", "pairs", "initial_state"],
        "additionalProperties": False,
    },
    "lemma-validate": {
        "type": "object",
        "properties": {
            "which": {"enum": list(LEMMA_KINDS)},
            "ladder": _POS_ARRAY,
            "powers": {
                "type": "array", "items": {"enum": [2, 4, 6]}, "minItems": 1,
            },
            "c_tilde": {
                "anyOf": [_POSITIVE, {"const": "auto"}],
            },
            "t_final": _POSITIVE,
            "n_paths": _COUNT,
            "decay": {"type": "number"},
            "seed": {"type": "integer", "minimum": 0},
            "use_drift": {"type": "boolean"},
            "initial_state": _STATE_SCHEMA,
            "cutoffs": _CUTOFFS,
            "eps": _POSITIVE,
            "k": {"type": "integer", "minimum": 1},
            "decays": _NUM_ARRAY,
            "n_fields": _COUNT,
            "stability_factor": _POSITIVE,
        },
        "required": ["which"],
        "additionalProperties": False,
    },
    "uniqueness-crosscheck": {
        "type": "object",
        "properties": {
            "functions": {
                "type": "array", "items": _FUNCTION_SCHEMA, "minItems": 1,
            },
            "initial_state": _STATE_SCHEMA,
            "t_grid": _POS_ARRAY,
            "lam_grid": _POS_ARRAY,
            "scheme_b": {"enum": ["exponential-euler", "euler-maruyama"]},
            "dt_b": _POSITIVE,
            "cutoff_b": {"type": "integer", "minimum": 1},
            "n_paths": _COUNT,
            "pilot_frac": {
                "type": "number", "exclusiveMinimum": 0, "maximum": 1,
            },
            "lap_tol": _POSITIVE,
        },
        "required": ["functions", "initial_state", "t_grid", "lam_grid"],
        "additionalProperties": False,
    },
}

_TOP_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "config_version": {"const": CONFIG_VERSION},
        "experiment": {"enum": list(EXPERIMENT_KINDS)},
        "dimension": {"enum": [2, 3]},
        "cutoff": {"type": "integer", "minimum": 1},
        "covariance": {
            "type": "object",
            "properties": {
                "alpha": {"type": "number"},
                "sigma": _NONNEG,
                "g": _POSITIVE,
                "r": {"type": "number"},
            },
            "required": ["alpha"],
            "additionalProperties": False,
        },
        "integrator": {
            "type": "object",
            "properties": {
                "scheme": {"enum": ["exponential-euler", "euler-maruyama"]},
                "dt": _POSITIVE,
                "t_final": _NONNEG,
                "route": {"enum": ["auto", "direct", "fft"]},
                "block_paths": {"type": ["integer", "null"], "minimum": 1},
            },
            "required": ["dt"],
            "additionalProperties": False,
        },
        "damping": {
            "anyOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "properties": {
                        "kind": {"enum": list(DAMPING_KINDS)},
                        "coefficient": _POSITIVE,
                    },
                    "required": ["kind", "coefficient"],
                    "additionalProperties": False,
                },
            ],
        },
        "seed_root": {"type": "integer", "minimum": 0},
        "workers": {"type": ["integer", "null"], "minimum": 1},
        "output_dir": {"type": ["string", "null"]},
        "params": {"type": "object"},
    },
    "required": [
        "experiment", "dimension", "cutoff", "covariance", "integrator",
        "seed_root", "params",
    ],
    "additionalProperties": False,
}

_TOP_VALIDATOR = Draft202012Validator(_TOP_SCHEMA)
_PARAMS_VALIDATORS = {
    name: Draft202012Validator(schema)
    for name, schema in _PARAMS_SCHEMAS.items()
}


def _schema_errors(validator: Draft202012Validator, obj: Any, where: str):
    for err in sorted(validator.iter_errors(obj), key=lambda e: list(e.path)):
        path = "/".join(str(p) for p in err.path)
        loc = f"{where}/{path}" if path else where
        yield f"{loc}: {err.message}"


# Per-identity knob contract: required keys beyond (identity, function) and
# the full set a given identity is allowed to carry.  A knob that the
# identity would silently ignore is rejected -- every key in a config must
# be live.
_IDENTITY_KEYS: dict[str, tuple[set[str], set[str]]] = {
    "duhamel": (
        {"initial_state", "t1", "t2"},
        {"initial_state", "t1", "t2", "n_paths", "n_nodes"},
    ),
    "resolvent-identity": (
        {"initial_state", "lam", "mu"},
        {
            "initial_state", "lam", "mu", "n_outer", "n_inner", "t_max",
            "n_nodes", "inner_nodes", "tol",
        },
    ),
    "chapman-kolmogorov": (
        {"initial_state", "t", "s"},
        {"initial_state", "t", "s", "n_direct", "n_outer", "n_inner"},
    ),
    "ps-duhamel": (
        {"initial_state", "t", "K"},
        {
            "initial_state", "t", "K", "n_outer", "n_inner", "n_nodes",
            "budget_steps",
        },
    ),
    "mild-formula": (
        {"initial_state", "t"},
        {
            "initial_state", "t", "n_direct", "n_ou", "n_inner", "n_nodes",
            "fd_h",
        },
    ),
    "resolvent-suite": (
        {"initial_states"},
        {
            "initial_states", "lams", "n_paths", "const_tol", "t_max",
            "n_nodes", "tol",
        },
    ),
}

_LEMMA_KEYS: dict[str, tuple[set[str], set[str]]] = {
    "l1": (
        set(),
        {"ladder", "t_final", "n_paths", "decay", "seed", "use_drift"},
    ),
    "l2": (
        {"c_tilde"},
        {
            "c_tilde", "powers", "ladder", "t_final", "n_paths", "decay",
            "seed", "use_drift",
        },
    ),
    "p31": (
        {"initial_state"},
        {"initial_state", "cutoffs", "eps", "k", "t_final", "n_paths",
         "use_drift"},
    ),
    "bilinear": (
        set(),
        {"cutoffs", "decays", "n_fields", "seed", "stability_factor"},
    ),
}

_STATE_KEYS: dict[str, tuple[set[str], set[str]]] = {
    "zero": (set(), set()),
    "mode": ({"wavevector"}, {"wavevector", "amplitude", "pol"}),
    "random": ({"seed"}, {"seed", "decay", "norm", "norm_order"}),
    "coeffs": ({"values"}, {"values"}),
}

_FACTOR_KEYS: dict[str, set[str]] = {
    "tanh": {"coefs"},
    "poly": {"coefs"},
    "cos": {"omega", "theta"},
    "bump": {"center", "width"},
}

_FACTOR_REQUIRED: dict[str, set[str]] = {
    "tanh": {"coefs"},
    "poly": {"coefs"},
    "cos": {"omega"},
    "bump": {"center", "width"},
}


def _check_keys(
    obj: dict, kind: str, required: set[str], allowed: set[str],
    discriminator: str, where: str,
) -> None:
    present = set(obj) - {discriminator}
    missing = required - present
    if missing:
        raise ConfigError(
            f"{where}: {discriminator}={kind!r} requires "
            f"{sorted(missing)}"
        )
    extra = present - allowed
    if extra:
        raise ConfigError(
            f"{where}: {sorted(extra)} not applicable to "
            f"{discriminator}={kind!r}"
        )


def _validate_factor(spec: dict, where: str) -> None:
    kind = spec["kind"]
    _check_keys(
        spec, kind, _FACTOR_REQUIRED[kind], _FACTOR_KEYS[kind] | {"slot"},
        "kind", where,
    )


def _validate_function(spec: dict, where: str) -> None:
    n_slots = len(spec["entries"])
    if len(set(spec["entries"])) != n_slots:
        raise ConfigError(f"{where}: duplicate entries")
    for i, term in enumerate(spec["terms"]):
        seen = set()
        for j, fac in enumerate(term["factors"]):
            _validate_factor(fac, f"{where}/terms/{i}/factors/{j}")
            if fac["slot"] >= n_slots:
                raise ConfigError(
                    f"{where}/terms/{i}/factors/{j}: slot {fac['slot']} out "
                    f"of range for {n_slots} entries"
                )
            if fac["slot"] in seen:
                raise ConfigError(
                    f"{where}/terms/{i}: duplicate slot {fac['slot']}"
                )
            seen.add(fac["slot"])


def _validate_state(spec: dict, where: str) -> None:
    kind = spec["kind"]
    required, allowed = _STATE_KEYS[kind]
    _check_keys(spec, kind, required, allowed, "kind", where)


def _iter_params_objects(experiment: str, params: dict):
    """Yield (kind, spec, where) for every function/state/witness spec."""
    def walk(key: str, value):
        if key in ("function",):
            yield "function", value, f"params/{key}"
        elif key == "functions":
            for i, v in enumerate(value):
                yield "function", v, f"params/functions/{i}"
        elif key in ("initial_state",):
            yield "state", value, f"params/{key}"
        elif key == "initial_states":
            for i, v in enumerate(value):
                yield "state", v, f"params/initial_states/{i}"
        elif key == "witnesses" and value is not None:
            for i, w in enumerate(value):
                yield "witness", w, f"params/witnesses/{i}"

    for key, value in params.items():
        yield from walk(key, value)


def validate_config(cfg: Any) -> None:
    """Schema-validate plus kind-specific cross checks.  Raises ConfigError."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    errors = list(_schema_errors(_TOP_VALIDATOR, cfg, "config"))
    if errors:
        raise ConfigError("; ".join(errors[:4]))
    experiment = cfg["experiment"]
    params = cfg["params"]
    errors = list(
        _schema_errors(_PARAMS_VALIDATORS[experiment], params, "params")
    )
    if errors:
        raise ConfigError("; ".join(errors[:4]))

    if experiment == "identity-check":
        identity = params["identity"]
        required, allowed = _IDENTITY_KEYS[identity]
        _check_keys(
            params, identity, required, allowed | {"function"},
            "identity", "params",
        )
        if identity == "duhamel" and params["t2"] <= params["t1"]:
            raise ConfigError("params: duhamel needs t1 < t2")
        if identity == "chapman-kolmogorov" and params["s"] >= params["t"]:
            raise ConfigError("params: chapman-kolmogorov needs s < t")
    elif experiment == "lemma-validate":
        which = params["which"]
        required, allowed = _LEMMA_KEYS[which]
        _check_keys(params, which, required, allowed, "which", "params")
    elif experiment == "semigroup":
        target = params["target"]
        if target in ("transition", "ou") and "t" not in params:
            raise ConfigError(f"params: target={target!r} requires 't'")
        if target == "resolvent" and "lam" not in params:
            raise ConfigError("params: target='resolvent' requires 'lam'")
        if target == "ou":
            for key in ("stop_radius", "t_max", "n_nodes", "tol"):
                if key in params:
                    raise ConfigError(
                        f"params: {key!r} not applicable to target='ou'"
                    )
        if target == "transition":
            for key in ("lam", "t_max", "n_nodes", "tol"):
                if key in params:
                    raise ConfigError(
                        f"params: {key!r} not applicable to "
                        "target='transition'"
                    )
        if target == "resolvent":
            for key in ("t", "stop_radius"):
                if key in params:
                    raise ConfigError(
                        f"params: {key!r} not applicable to "
                        "target='resolvent'"
                    )
    elif experiment == "martingale-test":
        for i, (s, t) in enumerate(params["pairs"]):
            if s >= t:
                raise ConfigError(
                    f"params/pairs/{i}: need s < t, got [{s}, {t}]"
                )

    for kind, spec, where in _iter_params_objects(experiment, params):
        if kind == "function":
            _validate_function(spec, where)
        elif kind == "state":
            _validate_state(spec, where)
        else:
            for i, comp in enumerate(spec["components"]):
                _validate_function(
                    comp["function"], f"{where}/components/{i}/function"
                )


# ---------------------------------------------------------------------------
# Defaults


_COV_DEFAULTS = {
    2: {"sigma": 1.0, "g": 0.25, "r": 1.25},
    3: {"sigma": 1.0, "g": 0.1, "r": 1.4},
}

_INTEGRATOR_DEFAULTS = {
    "scheme": "exponential-euler",
    "t_final": 0.0,
    "route": "auto",
    "block_paths": None,
}

_PARAMS_DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {
        "n_paths": 1,
        "record_coords": [],
        "record_bilinear": False,
        "hit_radii": [],
        "freeze_radius": None,
        "n_trajectories": 4,
        "use_drift": True,
    },
    "semigroup": {"n_paths": 10_000},
    "identity-check": {},
    "martingale-test": {
        "witnesses": None, "n_paths": 10_000, "z_threshold": 3.0,
        "freeze_radius": None,
    },
    "lemma-validate": {},
    "uniqueness-crosscheck": {"n_paths": 4000, "pilot_frac": 0.25},
}

_LEMMA_DEFAULTS: dict[str, dict[str, Any]] = {
    "l1": {
        "ladder": [1.0, 2.0, 4.0, 8.0], "t_final": 1.0, "n_paths": 10_000,
        "decay": 1.5, "seed": 0, "use_drift": True,
    },
    "l2": {
        "ladder": [1.0, 2.0, 4.0, 8.0], "powers": [2, 4, 6], "t_final": 1.0,
        "n_paths": 10_000, "decay": 1.5, "seed": 0, "use_drift": True,
    },
    "p31": {
        "eps": 0.1, "k": 4, "t_final": 0.5, "n_paths": 10_000,
        "use_drift": True,
    },
    "bilinear": {
        "cutoffs": [8, 16, 32], "decays": [0.5, 1.0, 1.5, 2.0],
        "n_fields": 200, "seed": 0, "stability_factor": 2.0,
    },
}

_STATE_DEFAULTS: dict[str, dict[str, Any]] = {
    "mode": {"amplitude": 1.0, "pol": 0},
    "random": {"decay": 1.0, "norm_order": 0.0},
}


def _fill(target: dict, defaults: dict) -> None:
    for key, value in defaults.items():
        target.setdefault(key, copy.deepcopy(value))


def _resolve_state(spec: dict) -> None:
    _fill(spec, _STATE_DEFAULTS.get(spec["kind"], {}))


def resolve_config(cfg: dict) -> dict:
    """Validate and return a deep copy with every default materialized."""
    validate_config(cfg)
    out = copy.deepcopy(cfg)
    out["config_version"] = CONFIG_VERSION
    _fill(out, {"damping": None, "workers": None, "output_dir": None})
    _fill(out["covariance"], _COV_DEFAULTS[out["dimension"]])
    _fill(out["integrator"], _INTEGRATOR_DEFAULTS)
    params = out["params"]
    _fill(params, _PARAMS_DEFAULTS[out["experiment"]])
    experiment = out["experiment"]
    if experiment == "simulate":
        t_final = out["integrator"]["t_final"]
        params.setdefault(
            "record_times", [t_final] if t_final > 0 else []
        )
    elif experiment == "identity-check":
        identity = params["identity"]
        if identity == "duhamel":
            _fill(params, {"n_paths": 20_000, "n_nodes": 9})
        elif identity == "resolvent-identity":
            _fill(params, {
                "n_outer": 1500, "n_inner": 16, "t_max": None,
                "n_nodes": 21, "inner_nodes": 17, "tol": 2e-3,
            })
        elif identity == "chapman-kolmogorov":
            _fill(params, {
                "n_direct": 20_000, "n_outer": 2000, "n_inner": 16,
            })
        elif identity == "ps-duhamel":
            _fill(params, {
                "n_outer": 1000, "n_inner": 12, "n_nodes": 6,
                "budget_steps": 10_000_000,
            })
        elif identity == "mild-formula":
            _fill(params, {
                "n_direct": 200_000, "n_ou": 128, "n_inner": 48,
                "n_nodes": 6, "fd_h": None,
            })
        else:  # resolvent-suite
            _fill(params, {
                "lams": [1.0, 4.0, 16.0, 64.0], "n_paths": 4000,
                "const_tol": 0.01, "t_max": None, "n_nodes": 129,
                "tol": 1e-3,
            })
    elif experiment == "lemma-validate":
        which = params["which"]
        defaults = dict(_LEMMA_DEFAULTS[which])
        if which == "p31":
            defaults["cutoffs"] = (
                [8, 16, 32, 64] if out["dimension"] == 2 else [2, 4, 8]
            )
        _fill(params, defaults)
    elif experiment == "uniqueness-crosscheck":
        _fill(params, {
            "scheme_b": (
                "euler-maruyama"
                if out["integrator"]["scheme"] == "exponential-euler"
                else "exponential-euler"
            ),
            "dt_b": out["integrator"]["dt"],
            "cutoff_b": out["cutoff"],
            "lap_tol": 5e-3,
        })
    for kind, spec, _ in _iter_params_objects(experiment, params):
        if kind == "state":
            _resolve_state(spec)
    validate_config(out)
    return out


def canonical_json(obj: Any) -> str:
    """Deterministic serialization: sorted keys, two-space indent."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def load_config(path: str | Path) -> dict:
    """Read, validate, and resolve a config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return resolve_config(raw)


# ---------------------------------------------------------------------------
# Builders


def build_basis(cfg: dict, cutoff: int | None = None) -> BasisSpec:
    return enumerate_basis(
        cfg["dimension"], cfg["cutoff"] if cutoff is None else cutoff
    )


def build_covariance(cfg: dict) -> CovarianceSpec:
    c = cfg["covariance"]
    try:
        cov = CovarianceSpec(
            alpha=c["alpha"], sigma=c.get("sigma", 1.0),
            g=c.get("g", 0.25), r=c.get("r", 1.25),
        )
        cov.validate_window(cfg["dimension"])
    except CovarianceError as exc:
        raise ConfigError(f"covariance: {exc}") from exc
    return cov


def build_integrator(cfg: dict) -> IntegratorConfig:
    i = cfg["integrator"]
    try:
        return IntegratorConfig(
            dt=i["dt"],
            scheme=i.get("scheme", "exponential-euler"),
            route=i.get("route", "auto"),
            block_paths=i.get("block_paths"),
        )
    except SimulationError as exc:
        raise ConfigError(f"integrator: {exc}") from exc


def build_damping(cfg: dict) -> DampingSpec | None:
    d = cfg.get("damping")
    if d is None:
        return None
    try:
        return DampingSpec(d["kind"], d["coefficient"])
    except SimulationError as exc:
        raise ConfigError(f"damping: {exc}") from exc


def build_streams(cfg: dict) -> NoiseStreams:
    return NoiseStreams(cfg["seed_root"])


def build_state(spec: dict, basis: BasisSpec) -> SpectralField:
    kind = spec["kind"]
    if kind == "zero":
        return SpectralField.zeros(basis)
    if kind == "mode":
        k = tuple(spec["wavevector"])
        if len(k) != basis.d:
            raise ConfigError(
                f"state: wavevector {k} has wrong dimension for d={basis.d}"
            )
        try:
            entry_index(basis, k, spec.get("pol", 0))
        except (KeyError, ValueError, IndexError) as exc:
            raise ConfigError(f"state: {exc}") from exc
        return mode_field(
            basis, k, amplitude=spec.get("amplitude", 1.0),
            pol=spec.get("pol", 0),
        )
    if kind == "random":
        rng = np.random.default_rng(spec["seed"])
        return random_field(
            basis, rng, decay=spec.get("decay", 1.0),
            norm=spec.get("norm"), norm_order=spec.get("norm_order", 0.0),
        )
    values = np.asarray(spec["values"], dtype=np.float64)
    if values.shape != (basis.m,):
        raise ConfigError(
            f"state: coeffs length {values.size} != basis size {basis.m}"
        )
    return SpectralField(basis, values)


def _build_factor(spec: dict):
    kind = spec["kind"]
    if kind == "tanh":
        return tanh_factor(spec["coefs"])
    if kind == "poly":
        return poly_factor(spec["coefs"])
    if kind == "cos":
        return cos_factor(spec["omega"], spec.get("theta", 0.0))
    return bump_factor(spec["center"], spec["width"])


def build_function(spec: dict, basis: BasisSpec) -> CylindricalFunction:
    entries = spec["entries"]
    for e in entries:
        if e >= basis.m:
            raise ConfigError(
                f"function: entry {e} out of range for basis size {basis.m}"
            )
    terms = [
        (
            term["weight"],
            {f["slot"]: _build_factor(f) for f in term["factors"]},
        )
        for term in spec["terms"]
    ]
    try:
        return cyl_function(entries, terms)
    except ValueError as exc:
        raise ConfigError(f"function: {exc}") from exc


def build_witness(spec: dict, basis: BasisSpec) -> Witness:
    components = tuple(
        (build_function(c["function"], basis), c["frac"])
        for c in spec["components"]
    )
    try:
        return Witness(spec["label"], components)
    except ValueError as exc:
        raise ConfigError(f"witness {spec['label']!r}: {exc}") from exc
