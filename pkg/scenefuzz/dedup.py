"""Unique-violation predicate and the archive of unique violations."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .constants import TH1, TH2
from .grammar import SearchSpaceSchema
from .objectives import ObjectiveVector

logger = logging.getLogger(__name__)

VIOLATION_KINDS = ("collision", "out_of_road")


@dataclass(frozen=True)
class UniquenessParams:
    th1: float = TH1
    th2: float = TH2

    def __post_init__(self) -> None:
        for name in ("th1", "th2"):
            value = getattr(self, name)
            if not 0.0 < value <= 100.0:
                raise ValueError(f"{name} must be in (0, 100], got {value}")


def required_differences(n_changeable: int, th1: float) -> int:
    """Least number of differing changeable fields for two violations to be distinct."""
    # round first: 0.1 * 20 is 2.0000000000000004 in binary floating point
    return max(1, math.ceil(round(th1 * n_changeable / 100.0, 9)))


def count_differences(
    v: np.ndarray, others: np.ndarray, schema: SearchSpaceSchema, th2: float
) -> np.ndarray:
    """Number of changeable fields on which ``v`` differs from each row of ``others``."""
    others = np.atleast_2d(np.asarray(others, dtype=float))
    if others.size == 0:
        return np.zeros(0, dtype=int)
    v = np.asarray(v, dtype=float)
    changeable = schema.changeable_mask
    discrete = schema.discrete_mask
    span = np.where(changeable, schema.span, 1.0)
    continuous_diff = np.abs(others - v) / span >= th2 / 100.0
    discrete_diff = np.round(others) != np.round(v)
    differ = np.where(discrete, discrete_diff, continuous_diff) & changeable
    return differ.sum(axis=1)


def fields_differ(a: np.ndarray, b: np.ndarray, schema: SearchSpaceSchema, th2: float) -> int:
    return int(count_differences(a, np.asarray(b)[None, :], schema, th2)[0])


def _distinct_from_all(
    v: np.ndarray, others: np.ndarray, schema: SearchSpaceSchema, params: UniquenessParams
) -> bool:
    if len(others) == 0:
        return True
    need = required_differences(schema.n_changeable, params.th1)
    return bool(np.all(count_differences(v, others, schema, params.th2) >= need))


@dataclass
class ArchiveEntry:
    vector: np.ndarray
    kind: str
    objectives: Optional[ObjectiveVector] = None
    generation: int = 0
    sim_index: int = -1
    stage: str = "search"

    def to_dict(self) -> dict[str, Any]:
        return {
            "vector": [float(x) for x in self.vector],
            "kind": self.kind,
            "objectives": None if self.objectives is None else self.objectives.to_dict(),
            "generation": self.generation,
            "sim_index": self.sim_index,
            "stage": self.stage,
        }


class ViolationArchive:
    """Insert-ordered set of unique violations; the first of two similar violations wins."""

    def __init__(self, schema: SearchSpaceSchema, params: Optional[UniquenessParams] = None):
        self.schema = schema
        self.params = params or UniquenessParams()
        self.entries: list[ArchiveEntry] = []
        self._matrix: dict[Optional[str], np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def vectors(self, kind: Optional[str] = None) -> np.ndarray:
        if kind not in self._matrix:
            rows = [e.vector for e in self.entries if kind is None or e.kind == kind]
            self._matrix[kind] = (
                np.array(rows, dtype=float) if rows else np.empty((0, self.schema.dim))
            )
        return self._matrix[kind]

    def count(self, kind: Optional[str] = None) -> int:
        return len(self.vectors(kind))

    def is_unique(self, v: np.ndarray, kind: Optional[str] = None) -> bool:
        """Unique against same-kind entries; ``kind=None`` checks against every entry."""
        return _distinct_from_all(v, self.vectors(kind), self.schema, self.params)

    def add(
        self,
        v: np.ndarray,
        kind: str,
        objectives: Optional[ObjectiveVector] = None,
        generation: int = 0,
        sim_index: int = -1,
        stage: str = "search",
    ) -> bool:
        """Insert a violation if it is unique; return whether it was inserted."""
        if kind not in VIOLATION_KINDS:
            raise ValueError(f"unknown violation kind {kind!r}")
        if not self.is_unique(v, kind):
            return False
        entry = ArchiveEntry(
            np.array(v, dtype=float), kind, objectives, generation, sim_index, stage
        )
        self.entries.append(entry)
        self._matrix.clear()
        logger.debug("archived %s violation #%d (sim %d)", kind, len(self.entries), sim_index)
        return True

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": self.schema.name,
            "th1": self.params.th1,
            "th2": self.params.th2,
            "entries": [e.to_dict() for e in self.entries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str, schema: SearchSpaceSchema) -> "ViolationArchive":
        """Rebuild an archive; entries are restored verbatim without re-checking uniqueness."""
        data = json.loads(text)
        archive = cls(schema, UniquenessParams(data["th1"], data["th2"]))
        for raw in data["entries"]:
            obj = raw.get("objectives")
            archive.entries.append(
                ArchiveEntry(
                    np.asarray(raw["vector"], dtype=float),
                    raw["kind"],
                    None if obj is None else ObjectiveVector.from_dict(obj),
                    int(raw.get("generation", 0)),
                    int(raw.get("sim_index", -1)),
                    raw.get("stage", "search"),
                )
            )
        return archive


def is_unique(v: np.ndarray, kind: str, archive: ViolationArchive) -> bool:
    return archive.is_unique(v, kind)


def filter_similar(
    candidates: Sequence[np.ndarray] | np.ndarray,
    archive: Optional[ViolationArchive],
    pending: Sequence[np.ndarray] | np.ndarray = (),
    *,
    schema: Optional[SearchSpaceSchema] = None,
    params: Optional[UniquenessParams] = None,
) -> list[int]:
    """Indices of candidates distinct from every archived violation and from each other.

    Candidates are also compared with ``pending`` (already accepted candidates) and with
    the ones retained earlier in this call, so the first of two similar candidates wins.
    """
    if archive is not None:
        schema, params = archive.schema, archive.params
    if schema is None:
        raise ValueError("filter_similar needs an archive or a schema")
    params = params or UniquenessParams()
    archived = archive.vectors() if archive is not None else np.empty((0, schema.dim))
    kept = [np.asarray(p, dtype=float) for p in pending]
    retained: list[int] = []
    for i, c in enumerate(candidates):
        c = np.asarray(c, dtype=float)
        if not _distinct_from_all(c, archived, schema, params):
            continue
        if kept and not _distinct_from_all(c, np.array(kept), schema, params):
            continue
        kept.append(c)
        retained.append(i)
    return retained


def unique_count_among(
    vectors: Iterable[np.ndarray],
    kinds: Iterable[str],
    schema: SearchSpaceSchema,
    params: Optional[UniquenessParams] = None,
) -> int:
    """Greedy unique count of a violation stream, in stream order."""
    archive = ViolationArchive(schema, params)
    return sum(archive.add(v, k) for v, k in zip(vectors, kinds))


def sweep_thresholds(
    stream: Sequence[tuple[np.ndarray, str]],
    schema: SearchSpaceSchema,
    th2_values: Sequence[float],
    th1_values: Sequence[float],
) -> list[dict[str, float]]:
    """Replay one violation stream through the predicate for every ``(th2, th1)`` pair."""
    vectors = [np.asarray(v, dtype=float) for v, _ in stream]
    kinds = [k for _, k in stream]
    cells = []
    for th2 in th2_values:
        for th1 in th1_values:
            count = unique_count_among(vectors, kinds, schema, UniquenessParams(th1, th2))
            cells.append({"th2": float(th2), "th1": float(th1), "count": count})
    return cells
