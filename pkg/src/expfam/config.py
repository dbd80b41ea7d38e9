"""JSON configuration files.

Every file carries a top-level ``schema`` field naming what it describes:

* ``expfam.experiment/1`` -> :class:`~expfam.experiments.ExperimentConfig`
* ``expfam.solver/1``     -> :class:`~expfam.solver.SolverConfig`
* ``expfam.family/1``     -> family spec dict (``kind``, ``p``, optional ``design``)

Unknown keys are rejected.  Parsed objects expose ``to_dict`` (or are
dicts) so the resolved configuration, defaults included, can be echoed back.
"""
from __future__ import annotations

import json
from typing import Any, Union

from .errors import ParseError, ValidationError
from .experiments import ExperimentConfig, LambdaRule
from .families import FAMILY_KINDS
from .solver import SolverConfig

SCHEMA_EXPERIMENT = "expfam.experiment/1"
SCHEMA_SOLVER = "expfam.solver/1"
SCHEMA_FAMILY = "expfam.family/1"
SCHEMAS = (SCHEMA_EXPERIMENT, SCHEMA_SOLVER, SCHEMA_FAMILY)

_DESIGN_KEYS = {
    "fixed": {"type", "generator", "pool_size", "seed", "matrix"},
    "truncated-gaussian": {"type", "bound", "mc_samples", "seed"},
}


def _field(obj: dict, key: str, path: str, kind, default: Any = ..., allow_none=False):
    """Fetch ``obj[key]`` converted to ``kind``; ParseError names the field path."""
    where = f"{path}.{key}" if path and key else (path or key)
    if key not in obj:
        if default is ...:
            raise ParseError("required field is missing", where)
        return default
    value = obj[key]
    if value is None and allow_none:
        return None
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, (int, float)) or float(value) != int(value):
                raise TypeError
            return int(value)
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if kind is str:
            if not isinstance(value, str):
                raise TypeError
            return value
        if kind is dict:
            if not isinstance(value, dict):
                raise TypeError
            return value
    except (TypeError, ValueError, OverflowError):
        pass
    else:
        raise AssertionError(f"unsupported field kind {kind}")
    raise ParseError(f"expected {kind.__name__}, got {json.dumps(value)}", where)


def _no_extra(obj: dict, allowed, path: str):
    extra = sorted(set(obj) - set(allowed))
    if extra:
        where = f"{path}.{extra[0]}" if path else extra[0]
        raise ParseError("unknown field", where)


def parse_family(obj: dict, path: str = "family", require_p: bool = True) -> dict:
    """Validate a family spec and return it with defaults filled in."""
    if not isinstance(obj, dict):
        raise ParseError("expected an object", path)
    _no_extra(obj, {"kind", "p", "design", "schema"}, path)
    kind = _field(obj, "kind", path, str)
    if kind not in FAMILY_KINDS:
        raise ValidationError(f"{path}.kind must be one of {FAMILY_KINDS}, got {kind!r}")
    out = {"kind": kind}
    if "p" in obj or require_p:
        p = _field(obj, "p", path, int)
        if p < 1:
            raise ValidationError(f"{path}.p must be >= 1")
        out["p"] = p
    if kind.endswith("-glm"):
        design = obj.get("design", {"type": "fixed"})
        dpath = f"{path}.design"
        if not isinstance(design, dict):
            raise ParseError("expected an object", dpath)
        dtype = _field(design, "type", dpath, str, "fixed")
        if dtype not in _DESIGN_KEYS:
            raise ValidationError(f"{dpath}.type must be one of {tuple(_DESIGN_KEYS)}")
        _no_extra(design, _DESIGN_KEYS[dtype], dpath)
        if dtype == "fixed":
            if "matrix" in design:
                d = {"type": "fixed", "matrix": design["matrix"]}
            else:
                d = {
                    "type": "fixed",
                    "generator": _field(design, "generator", dpath, str, "rademacher"),
                    "pool_size": _field(design, "pool_size", dpath, int, 20000),
                    "seed": _field(design, "seed", dpath, int, 0),
                }
                if d["generator"] not in ("rademacher", "gaussian"):
                    raise ValidationError(f"{dpath}.generator must be 'rademacher' or 'gaussian'")
                if d["pool_size"] < 1:
                    raise ValidationError(f"{dpath}.pool_size must be >= 1")
        else:
            d = {
                "type": dtype,
                "bound": _field(design, "bound", dpath, float),
                "mc_samples": _field(design, "mc_samples", dpath, int, 20000),
                "seed": _field(design, "seed", dpath, int, 0),
            }
            if not d["bound"] > 0:
                raise ValidationError(f"{dpath}.bound must be > 0")
        out["design"] = d
    elif "design" in obj:
        raise ParseError(f"family {kind!r} takes no design", f"{path}.design")
    return out


def parse_solver(obj: dict, path: str = "solver", require_lambda: bool = False) -> SolverConfig:
    if not isinstance(obj, dict):
        raise ParseError("expected an object", path)
    _no_extra(obj, {"lambda", "max_iters", "tol_kkt", "shrink", "step0", "accelerate", "schema"}, path)
    lam = _field(obj, "lambda", path, float, ... if require_lambda else 0.0)
    return SolverConfig(
        lam,
        max_iters=_field(obj, "max_iters", path, int, 10000),
        tol_kkt=_field(obj, "tol_kkt", path, float, 1e-6),
        shrink=_field(obj, "shrink", path, float, 0.5),
        step0=_field(obj, "step0", path, float, 1.0),
        accelerate=_field(obj, "accelerate", path, bool, False),
    )


def _parse_lambda_rule(obj, path="lambda_rule") -> LambdaRule:
    if isinstance(obj, str):
        return LambdaRule(obj)
    if not isinstance(obj, dict):
        raise ParseError("expected a string or an object", path)
    _no_extra(obj, {"kind", "value"}, path)
    return LambdaRule(_field(obj, "kind", path, str), _field(obj, "value", path, float, 0.0))


_EXPERIMENT_KEYS = {
    "schema", "family", "p", "s", "n", "n_grid", "signal_magnitude", "sigma", "delta", "trials",
    "seed", "lambda_rule", "solver", "re_budget", "alpha_k_max", "alpha_directions", "contamination",
}


def parse_experiment(obj: dict) -> ExperimentConfig:
    _no_extra(obj, _EXPERIMENT_KEYS, "")
    family = parse_family(_field(obj, "family", "", dict), require_p=False)
    p = _field(obj, "p", "", int)
    if "p" in family and family["p"] != p:
        raise ValidationError(f"family.p={family['p']} differs from p={p}")
    family.pop("p", None)
    if "n" in obj and "n_grid" in obj:
        raise ParseError("give either 'n' or 'n_grid', not both", "n_grid")
    if "n_grid" in obj:
        grid = obj["n_grid"]
        if not isinstance(grid, list) or not grid:
            raise ParseError("expected a nonempty list of integers", "n_grid")
        n_grid = tuple(_field({"": v}, "", f"n_grid[{i}]", int) for i, v in enumerate(grid))
    else:
        n_grid = (_field(obj, "n", "", int),)
    solver = parse_solver(obj.get("solver", {"accelerate": True}))
    if solver.lam != 0.0:
        raise ParseError("lambda is set by lambda_rule, not by the solver block", "solver.lambda")
    return ExperimentConfig(
        family=family,
        p=p,
        s=_field(obj, "s", "", int),
        n_grid=n_grid,
        signal_magnitude=_field(obj, "signal_magnitude", "", float, None, allow_none=True),
        sigma=_field(obj, "sigma", "", float, None, allow_none=True),
        delta=_field(obj, "delta", "", float, 0.05),
        trials=_field(obj, "trials", "", int, 50),
        seed=_field(obj, "seed", "", int, 0),
        lambda_rule=_parse_lambda_rule(obj.get("lambda_rule", "corollary")),
        solver=solver,
        re_budget=_field(obj, "re_budget", "", int, 500),
        alpha_k_max=_field(obj, "alpha_k_max", "", int, 8),
        alpha_directions=_field(obj, "alpha_directions", "", int, 200),
        contamination=_field(obj, "contamination", "", float, 0.0),
    )


def loads(text: str) -> dict:
    """Parse JSON text into an object, mapping syntax errors to ParseError(line:col)."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from None
    if not isinstance(obj, dict):
        raise ParseError("top level must be an object", "line 1")
    return obj


def parse_config_obj(obj: dict) -> Union[ExperimentConfig, SolverConfig, dict]:
    schema = _field(obj, "schema", "", str)
    if schema == SCHEMA_EXPERIMENT:
        return parse_experiment(obj)
    if schema == SCHEMA_SOLVER:
        return parse_solver(obj, path="")
    if schema == SCHEMA_FAMILY:
        return parse_family(obj, path="")
    raise ParseError(f"unknown schema {schema!r}; expected one of {SCHEMAS}", "schema")


def parse_config(path) -> Union[ExperimentConfig, SolverConfig, dict]:
    """Read and validate a JSON config file.

    Raises
    ------
    ParseError
        Malformed JSON (with line and column) or a bad field (with its path).
    ValidationError
        A well-formed value violating an invariant, e.g. ``s ≤ p``.
    OSError
        The file cannot be read.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config_obj(loads(text))


def config_to_dict(cfg) -> dict:
    """Resolved form of a parsed config, with ``schema`` and all defaults."""
    if isinstance(cfg, ExperimentConfig):
        return {"schema": SCHEMA_EXPERIMENT, **cfg.to_dict()}
    if isinstance(cfg, SolverConfig):
        return {"schema": SCHEMA_SOLVER, **cfg.to_dict()}
    if isinstance(cfg, dict):
        return {"schema": SCHEMA_FAMILY, **cfg}
    raise ValidationError(f"not a config object: {type(cfg).__name__}")

