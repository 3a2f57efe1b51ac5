"""Grammar-constrained scenario search space: parsing, sampling, normalization, constraints."""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .constants import CONSTRAINT_TOL, SAMPLE_MAX_ATTEMPTS

logger = logging.getLogger(__name__)

RESERVED_KEYS = ("name", "map_id", "ego_route", "center_transforms", "customized_constraints")
_INDEX_PATTERN = re.compile(r"\[(\d+)\]")


class SchemaError(ValueError):
    """Raised when a scenario schema document is inconsistent."""


class ConstraintUnsatisfiable(RuntimeError):
    """Raised when rejection sampling cannot satisfy the linear constraints."""


@dataclass(frozen=True)
class Distribution:
    kind: str = "uniform"
    mean: Optional[float] = None
    variance: float = 0.0


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str
    min: float
    max: float
    distribution: Optional[Distribution] = None

    @property
    def changeable(self) -> bool:
        return self.max > self.min

    @property
    def discrete(self) -> bool:
        return self.kind == "discrete"

    @property
    def effective_mean(self) -> float:
        if self.distribution is not None and self.distribution.mean is not None:
            return float(self.distribution.mean)
        return 0.5 * (self.min + self.max)


@dataclass(frozen=True)
class LinearConstraint:
    """Encodes ``sum(coefficients[i] * x[labels[i]]) <= value``."""

    coefficients: tuple[float, ...]
    labels: tuple[str, ...]
    value: float


@dataclass(frozen=True)
class CenterTransform:
    kind: str
    ratio: float = 0.0
    x: float = 0.0
    y: float = 0.0


@dataclass(frozen=True)
class SearchSpaceSchema:
    """The logical scenario: ordered fields, linear constraints, map and ego route."""

    fields: tuple[FieldSpec, ...]
    constraints: tuple[LinearConstraint, ...] = ()
    center_transforms: dict[str, CenterTransform] = field(default_factory=dict)
    map_id: str = "straight_road"
    ego_route: tuple[tuple[float, float], ...] = ()
    name: str = "scenario"

    def __hash__(self) -> int:
        return hash((self.name, self.map_id, self.fields, self.constraints, self.ego_route))

    @property
    def dim(self) -> int:
        return len(self.fields)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.fields]

    @property
    def lower(self) -> np.ndarray:
        return np.array([f.min for f in self.fields], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([f.max for f in self.fields], dtype=float)

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def discrete_mask(self) -> np.ndarray:
        return np.array([f.discrete for f in self.fields], dtype=bool)

    @property
    def changeable_mask(self) -> np.ndarray:
        return np.array([f.changeable for f in self.fields], dtype=bool)

    @property
    def n_changeable(self) -> int:
        return int(self.changeable_mask.sum())

    def index(self, name: str) -> int:
        for i, spec in enumerate(self.fields):
            if spec.name == name:
                return i
        raise KeyError(name)

    def as_dict(self, v: np.ndarray) -> dict[str, float]:
        return {spec.name: float(val) for spec, val in zip(self.fields, v)}

    def constraint_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(W, b)`` so that the constraints read ``W @ x <= b``."""
        W = np.zeros((len(self.constraints), self.dim))
        b = np.zeros(len(self.constraints))
        for j, con in enumerate(self.constraints):
            for coef, label in zip(con.coefficients, con.labels):
                W[j, self.index(label)] += coef
            b[j] = con.value
        return W, b


# === Parsing ===


def normalize_label(label: str) -> str:
    """Map ``vehicle[0].x`` style labels onto flattened field paths (``vehicle_0.x``)."""
    return _INDEX_PATTERN.sub(r"_\1", label.strip())


def _parse_distribution(raw: Any, name: str) -> Optional[Distribution]:
    if raw is None:
        return None
    if not isinstance(raw, (list, tuple)) or not raw:
        raise SchemaError(f"{name}: distribution must be [kind, mean, variance]")
    kind = str(raw[0]).lower()
    if kind == "uniform":
        return Distribution("uniform")
    if kind != "normal":
        raise SchemaError(f"{name}: unsupported distribution {raw[0]!r}")
    if len(raw) != 3:
        raise SchemaError(f"{name}: normal distribution needs (normal, mean, variance)")
    mean = None if raw[1] is None else float(raw[1])
    variance = float(raw[2])
    if variance < 0:
        raise SchemaError(f"{name}: negative variance {variance}")
    return Distribution("normal", mean, variance)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_leaf(node: Any) -> bool:
    if isinstance(node, dict):
        return "range" in node
    return isinstance(node, (list, tuple)) and len(node) in (2, 3) and all(
        _is_number(v) for v in node[:2]
    )


def _parse_leaf(name: str, node: Any) -> FieldSpec:
    if isinstance(node, dict):
        rng = node["range"]
        kind = node.get("kind", "continuous")
        dist = _parse_distribution(node.get("distribution"), name)
    else:
        rng = node[:2]
        kind = "continuous"
        dist = _parse_distribution(node[2], name) if len(node) == 3 else None
    if kind not in ("continuous", "discrete"):
        raise SchemaError(f"{name}: unknown kind {kind!r}")
    if not (isinstance(rng, (list, tuple)) and len(rng) == 2 and all(_is_number(v) for v in rng)):
        raise SchemaError(f"{name}: range must be [min, max]")
    lo, hi = float(rng[0]), float(rng[1])
    if lo > hi:
        raise SchemaError(f"{name}: malformed range, min {lo} > max {hi}")
    if kind == "discrete" and not (lo.is_integer() and hi.is_integer()):
        raise SchemaError(f"{name}: discrete field needs integer bounds, got [{lo}, {hi}]")
    return FieldSpec(name, kind, lo, hi, dist)


def _flatten(prefix: str, node: Any, out: list[FieldSpec]) -> None:
    if _is_leaf(node):
        out.append(_parse_leaf(prefix, node))
        return
    if not isinstance(node, dict):
        raise SchemaError(f"{prefix}: expected an object or a [min, max] range")
    for key, child in node.items():
        _flatten(f"{prefix}.{key}" if prefix else key, child, out)


def _parse_center(key: str, raw: Any) -> CenterTransform:
    if isinstance(raw, dict) and len(raw) == 1:
        kind, value = next(iter(raw.items()))
    elif isinstance(raw, (list, tuple)) and len(raw) >= 2:
        kind, value = raw[0], raw[1:] if len(raw) > 2 else raw[1]
    else:
        raise SchemaError(f"center transform {key!r} must be {{kind: value}}")
    if kind == "waypoint_ratio":
        ratio = float(value)
        if not 0.0 <= ratio <= 1.0:
            raise SchemaError(f"center transform {key!r}: ratio {ratio} outside [0, 1]")
        return CenterTransform("waypoint_ratio", ratio=ratio)
    if kind == "absolute":
        x, y = (float(v) for v in value)
        return CenterTransform("absolute", x=x, y=y)
    raise SchemaError(f"center transform {key!r}: unknown kind {kind!r}")


def parse_schema(document: str) -> SearchSpaceSchema:
    """Parse a JSON scenario document into a flattened, validated search space."""
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"schema is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError("schema document must be a JSON object")

    fields: list[FieldSpec] = []
    for key, node in data.items():
        if key in RESERVED_KEYS:
            continue
        _flatten(key, node, fields)
    names = [f.name for f in fields]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate field paths in schema")

    constraints = []
    for i, raw in enumerate(data.get("customized_constraints", [])):
        coefs = tuple(float(c) for c in raw["coefficients"])
        labels = tuple(normalize_label(lbl) for lbl in raw["labels"])
        if len(coefs) != len(labels):
            raise SchemaError(f"constraint {i}: coefficients and labels differ in length")
        for lbl in labels:
            if lbl not in names:
                raise SchemaError(f"constraint {i}: label {lbl!r} is not a declared field")
        constraints.append(LinearConstraint(coefs, labels, float(raw["value"])))

    centers = {
        key: _parse_center(key, raw) for key, raw in data.get("center_transforms", {}).items()
    }
    route = tuple((float(p[0]), float(p[1])) for p in data.get("ego_route", []))
    if route and len(route) < 2:
        raise SchemaError("ego_route needs at least a start and a destination")

    schema = SearchSpaceSchema(
        fields=tuple(fields),
        constraints=tuple(constraints),
        center_transforms=centers,
        map_id=str(data.get("map_id", "straight_road")),
        ego_route=route,
        name=str(data.get("name", "scenario")),
    )
    logger.debug(
        "parsed schema %s: %d fields (%d changeable), %d constraints",
        schema.name,
        schema.dim,
        schema.n_changeable,
        len(constraints),
    )
    return schema


def load_schema(path: str | Path) -> SearchSpaceSchema:
    """Read a UTF-8 schema file."""
    return parse_schema(Path(path).read_text(encoding="utf-8"))


# === Vectors ===


def repair(v: np.ndarray, schema: SearchSpaceSchema) -> np.ndarray:
    """Round discrete entries and clip everything to the box."""
    out = np.array(v, dtype=float, copy=True)
    mask = schema.discrete_mask
    out[..., mask] = np.round(out[..., mask])
    return np.clip(out, schema.lower, schema.upper)


def check_constraints(v: np.ndarray, schema: SearchSpaceSchema) -> list[tuple[int, float]]:
    """Return ``(index, slack)`` for every violated constraint; slack is ``lhs - value``."""
    if not schema.constraints:
        return []
    W, b = schema.constraint_matrix()
    slack = W @ np.asarray(v, dtype=float) - b
    return [(j, float(s)) for j, s in enumerate(slack) if s > CONSTRAINT_TOL]


def is_feasible(v: np.ndarray, schema: SearchSpaceSchema) -> bool:
    v = np.asarray(v, dtype=float)
    if np.any(v < schema.lower) or np.any(v > schema.upper):
        return False
    disc = v[schema.discrete_mask]
    if np.any(disc != np.round(disc)):
        return False
    return not check_constraints(v, schema)


def normalize(v: np.ndarray, schema: SearchSpaceSchema) -> np.ndarray:
    """Map raw values into the unit box; fields with ``min == max`` map to 0."""
    span = schema.span
    safe = np.where(span > 0, span, 1.0)
    out = (np.asarray(v, dtype=float) - schema.lower) / safe
    return np.where(span > 0, out, 0.0)


def denormalize(u: np.ndarray, schema: SearchSpaceSchema) -> np.ndarray:
    return schema.lower + np.asarray(u, dtype=float) * schema.span


def normalized_constraints(schema: SearchSpaceSchema) -> tuple[np.ndarray, np.ndarray]:
    """Constraints in unit-box coordinates: ``A @ u <= c``."""
    W, b = schema.constraint_matrix()
    return W * schema.span, b - W @ schema.lower


# === Sampling ===


def _draw(schema: SearchSpaceSchema, rng: np.random.Generator) -> np.ndarray:
    # fixed draw count per attempt: one uniform and one normal variate per field
    u = rng.random(schema.dim)
    z = rng.standard_normal(schema.dim)
    out = np.empty(schema.dim)
    for i, spec in enumerate(schema.fields):
        lo, hi = spec.min, spec.max
        if spec.distribution is not None and spec.distribution.kind == "normal":
            value = spec.effective_mean + math.sqrt(spec.distribution.variance) * z[i]
        elif spec.discrete:
            value = (lo - 0.5) + u[i] * (hi - lo + 1.0)
        else:
            value = lo + u[i] * (hi - lo)
        if spec.discrete:
            value = round(value)
        out[i] = min(max(value, lo), hi)
    return out


def sample(
    schema: SearchSpaceSchema,
    rng: np.random.Generator,
    max_attempts: int = SAMPLE_MAX_ATTEMPTS,
) -> np.ndarray:
    """Draw one feasible scenario vector by whole-vector rejection sampling."""
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    for _ in range(max_attempts):
        v = _draw(schema, rng)
        if not check_constraints(v, schema):
            return v
    raise ConstraintUnsatisfiable(
        f"{schema.name}: no feasible vector after {max_attempts} attempts"
    )


def sample_many(
    schema: SearchSpaceSchema,
    rng: np.random.Generator,
    n: int,
    max_attempts: int = SAMPLE_MAX_ATTEMPTS,
) -> np.ndarray:
    if n <= 0:
        return np.empty((0, schema.dim))
    return np.stack([sample(schema, rng, max_attempts) for _ in range(n)])
