"""JSON configuration files for systems and chains."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .expr import ExprError
from .models import chain_from_config
from .ode import DEFAULT_ATOL, DEFAULT_RTOL
from .orbit import NEWTON_TOL
from .system import ManifoldChain, SlowFastSystem, from_expressions

_IDENT = {"type": "string", "pattern": r"^[A-Za-z_][A-Za-z0-9_]*$"}
_EXPRS = {"type": "array", "items": {"type": "string"}, "minItems": 1}
_BOUND = {"type": ["number", "null"]}

SCHEMA = {
    "type": "object",
    "required": ["n", "m", "slow_vars", "fast_vars", "f", "g", "z_bounds", "chain"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "n": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 1},
        "slow_vars": {"type": "array", "items": _IDENT, "minItems": 1},
        "fast_vars": {"type": "array", "items": _IDENT, "minItems": 1},
        "params": {"type": "object", "additionalProperties": {"type": "number"}},
        "f": _EXPRS,
        "g": _EXPRS,
        "h": _EXPRS,
        "z_bounds": {"type": "array", "minItems": 1,
                     "items": {"type": "array", "items": _BOUND, "minItems": 2, "maxItems": 2}},
        "chain": {
            "type": "object",
            "required": ["legs"],
            "additionalProperties": False,
            "properties": {"legs": {
                "type": "array", "minItems": 1,
                "items": {
                    "type": "object",
                    "required": ["z", "j_in", "a_guess"],
                    "additionalProperties": False,
                    "properties": {
                        "z": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                        "j_in": {"type": "integer", "minimum": 1},
                        "a_guess": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                    },
                },
            }},
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number", "exclusiveMinimum": 0} for k in ("rtol", "atol", "newton")},
        },
    },
}


class ConfigError(ValueError):
    def __init__(self, pointer, message):
        self.pointer = pointer or "/"
        super().__init__(f"{self.pointer}: {message}")


@dataclass
class Config:
    raw: dict
    system: SlowFastSystem
    chain: ManifoldChain
    rtol: float
    atol: float
    newton: float

    @property
    def name(self):
        return self.raw.get("name", "")


def _pointer(parts):
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def validate(raw) -> None:
    """Raise :class:`ConfigError` naming the JSON pointer of the first problem."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: (len(e.path), list(map(str, e.path))))
    if errors:
        e = errors[0]
        path = list(e.absolute_path)
        if e.validator == "required" and isinstance(e.instance, dict):
            missing = [k for k in e.validator_value if k not in e.instance]
            if missing:
                raise ConfigError(_pointer(path + [missing[0]]), "required property is missing")
        raise ConfigError(_pointer(path), e.message)
    n, m = raw["n"], raw["m"]
    for key, size in (("slow_vars", n), ("fast_vars", m), ("f", n), ("g", m), ("h", n), ("z_bounds", m)):
        if key in raw and len(raw[key]) != size:
            raise ConfigError(f"/{key}", f"expected {size} entries, got {len(raw[key])}")
    for i, leg in enumerate(raw["chain"]["legs"]):
        base = f"/chain/legs/{i}"
        if len(leg["z"]) != m:
            raise ConfigError(base + "/z", f"expected {m} entries")
        if len(leg["a_guess"]) != n:
            raise ConfigError(base + "/a_guess", f"expected {n} entries")
        if leg["j_in"] > m:
            raise ConfigError(base + "/j_in", f"must be between 1 and {m}")


def system_from_config(raw) -> SlowFastSystem:
    validate(raw)
    for key in ("f", "g", "h"):
        for i, src in enumerate(raw.get(key, [])):
            try:
                _check_expr(src, raw)
            except ExprError as e:
                raise ConfigError(f"/{key}/{i}", str(e)) from None
    try:
        return from_expressions(raw["n"], raw["m"], raw["slow_vars"], raw["fast_vars"], raw.get("params", {}),
                                raw["f"], raw["g"], raw.get("h"), [tuple(b) for b in raw["z_bounds"]],
                                raw.get("name", ""))
    except ExprError as e:
        raise ConfigError("/", str(e)) from None
    except ValueError as e:
        raise ConfigError("/z_bounds" if "bounds" in str(e) else "/", str(e)) from None


def _check_expr(src, raw):
    from .expr import Expr
    e = Expr(src)
    known = set(raw["slow_vars"]) | set(raw["fast_vars"]) | set(raw.get("params", {})) | {"eps"}
    bad = e.names - known
    if bad:
        raise ExprError(f"unknown names {sorted(bad)}")


def load_config(source) -> Config:
    """Load and validate a config from a path, JSON text or a dict."""
    if isinstance(source, dict):
        raw = json.loads(json.dumps(source))
    else:
        text = Path(source).read_text(encoding="utf-8") if not str(source).lstrip().startswith("{") else source
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("/", f"invalid JSON: {e}") from None
    system = system_from_config(raw)
    chain = chain_from_config(raw)
    tol = raw.get("tolerances", {})
    return Config(raw, system, chain, tol.get("rtol", DEFAULT_RTOL), tol.get("atol", DEFAULT_ATOL),
                  tol.get("newton", NEWTON_TOL))


def dump_config(raw) -> str:
    return json.dumps(raw, indent=2) + "\n"
