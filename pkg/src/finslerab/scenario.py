"""Scenario files: JSON schema, validation and conversion to runtime objects."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ConfigError, FinslerError
from .expr import ScalarField
from .family import Domain, FamilyParams, StructureData, polynomial_fields

SCENARIO_SCHEMA_VERSION = "1.0"

CHECK_NAMES = (
    "structure",
    "positivity",
    "s_curvature",
    "einstein",
    "closed_form_K",
    "r00",
    "killing",
    "scalar_flag",
    "proof_chain",
    "closed_form_consistency",
)

DEFAULT_TOLERANCES = {
    "structure": 1e-8,
    "positivity": 0.0,
    "s_curvature": 1e-7,
    "einstein": 1e-6,
    "closed_form_K": 1e-6,
    "r00": 1e-8,
    "killing": 1e-8,
    "scalar_flag": 1e-6,
    "proof_chain": 1e-6,
    "closed_form_consistency": 1e-8,
}

_expr = {"type": "string", "minLength": 1}
_pair = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "finslerab scenario",
    "type": "object",
    "additionalProperties": False,
    "required": ["params", "structure"],
    "properties": {
        "schema_version": {"const": SCENARIO_SCHEMA_VERSION},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "params": {
            "type": "object",
            "additionalProperties": False,
            "required": ["k1", "k2"],
            "properties": {
                "k1": {"type": "number"},
                "k2": {"type": "number"},
                "eps": {"enum": [1, -1]},
            },
        },
        "structure": {
            "type": "object",
            "additionalProperties": False,
            "required": ["B"],
            "properties": {
                "B": _expr,
                "u": _expr,
                "v": _expr,
                "f_poly": {"type": "array", "items": _pair, "minItems": 1},
            },
            "oneOf": [{"required": ["f_poly"], "not": {"anyOf": [{"required": ["u"]}, {"required": ["v"]}]}},
                      {"required": ["u", "v"], "not": {"required": ["f_poly"]}}],
        },
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "box": {"type": "array", "items": _pair, "minItems": 2, "maxItems": 2},
                "exclusions": {"type": "array", "items": _expr},
            },
        },
        "sampling": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["random", "grid"]},
                "count": {"type": "integer", "minimum": 1},
                "grid": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
                "seed": {"type": "integer", "minimum": 0},
                "directions": {"type": "integer", "minimum": 1},
                "random_directions": {"type": "integer", "minimum": 0},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {name: {"type": "number", "minimum": 0} for name in CHECK_NAMES},
        },
        "checks": {"type": "array", "items": {"enum": list(CHECK_NAMES)}, "uniqueItems": True},
    },
}


@dataclass(frozen=True)
class Sampling:
    mode: str = "random"
    count: int = 200
    grid: tuple[int, int] = (10, 10)
    seed: int = 0
    directions: int = 16
    random_directions: int = 8


@dataclass(frozen=True)
class Scenario:
    params: FamilyParams
    structure: StructureData
    sampling: Sampling = field(default_factory=Sampling)
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    checks: tuple[str, ...] = CHECK_NAMES
    name: str = ""
    source: dict = field(default_factory=dict, repr=False)

    def with_seed(self, seed: int) -> "Scenario":
        s = self.sampling
        sampling = Sampling(s.mode, s.count, s.grid, int(seed), s.directions, s.random_directions)
        return Scenario(self.params, self.structure, sampling, self.tolerances, self.checks, self.name, self.source)


def scenario_from_dict(doc: dict, name: str = "") -> Scenario:
    """Validate ``doc`` against the schema and build a Scenario (ConfigError on any problem)."""
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"scenario invalid at {where}: {exc.message}") from None
    try:
        pr = doc["params"]
        params = FamilyParams(float(pr["k1"]), float(pr["k2"]), int(pr.get("eps", 1)))
        st = doc["structure"]
        if "f_poly" in st:
            u, v = polynomial_fields(st["f_poly"])
        else:
            u, v = st["u"], st["v"]
        dm = doc.get("domain", {})
        box = tuple(tuple(float(c) for c in iv) for iv in dm.get("box", [[-1, 1], [-1, 1]]))
        for lo, hi in box:
            if not lo < hi:
                raise ConfigError(f"empty domain interval [{lo}, {hi}]")
        domain = Domain(box, tuple(ScalarField.from_text(e) for e in dm.get("exclusions", [])))
        structure = StructureData(
            ScalarField.from_text(u), ScalarField.from_text(v), ScalarField.from_text(st["B"]), domain
        )
    except ConfigError:
        raise
    except (FinslerError, ValueError) as exc:
        raise ConfigError(f"scenario invalid: {exc}") from None
    sm = doc.get("sampling", {})
    d = Sampling()
    sampling = Sampling(
        sm.get("mode", d.mode),
        int(sm.get("count", d.count)),
        tuple(sm.get("grid", d.grid)),
        int(sm.get("seed", d.seed)),
        int(sm.get("directions", d.directions)),
        int(sm.get("random_directions", d.random_directions)),
    )
    tolerances = dict(DEFAULT_TOLERANCES)
    tolerances.update({k: float(v) for k, v in doc.get("tolerances", {}).items()})
    checks = tuple(c for c in CHECK_NAMES if c in doc.get("checks", CHECK_NAMES))
    return Scenario(params, structure, sampling, tolerances, checks, doc.get("name", name), doc)


def load_scenario(path) -> Scenario:
    """Read a scenario file; malformed JSON is reported with its byte offset."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not UTF-8 (byte offset {exc.start})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ConfigError(
            f"{path}: malformed JSON at byte offset {offset} (line {exc.lineno}, column {exc.colno}): {exc.msg}"
        ) from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return scenario_from_dict(doc, name=path.stem)


def bundled_scenarios() -> dict[str, Path]:
    """Name -> path of the scenario files shipped with the package."""
    root = resources.files("finslerab") / "scenarios"
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}
