"""Unique-violation counts, counts-vs-simulations curves and pairwise method statistics."""

from __future__ import annotations

import itertools
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np
from scipy.stats import mannwhitneyu

from ..constants import BOOTSTRAP_RESAMPLES
from ..dedup import UniquenessParams, unique_count_among
from ..evaluation import RunRecord
from ..grammar import SearchSpaceSchema

SEED_STAGES = ("seed", "pretrain")
MAGNITUDE_LEVELS = (0.147, 0.33, 0.474)
MAGNITUDE_LABELS = ("negligible", "small", "medium", "large")


def wilcoxon_rank_sum(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided rank-sum p-value, normal approximation with tie and continuity correction."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 3 or b.size < 3:
        raise ValueError("rank-sum test needs at least 3 values per sample")
    pooled = np.concatenate([a, b])
    if np.all(pooled == pooled[0]):
        return 1.0
    result = mannwhitneyu(a, b, use_continuity=True, alternative="two-sided", method="asymptotic")
    return float(min(1.0, max(0.0, result.pvalue)))


def _a12(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # a, b: (..., n) and (..., m); pair counts over the last two axes
    greater = (a[..., :, None] > b[..., None, :]).sum(axis=(-2, -1))
    equal = (a[..., :, None] == b[..., None, :]).sum(axis=(-2, -1))
    return (greater + 0.5 * equal) / (a.shape[-1] * b.shape[-1])


def a12_magnitude(a12: float) -> str:
    return MAGNITUDE_LABELS[bisect_left(MAGNITUDE_LEVELS, abs(2.0 * (a12 - 0.5)))]


@dataclass(frozen=True)
class EffectSize:
    a12: float
    ci_low: float
    ci_high: float
    magnitude: str


def vargha_delaney_a12(
    a: Sequence[float],
    b: Sequence[float],
    *,
    resamples: int = BOOTSTRAP_RESAMPLES,
    confidence: float = 0.90,
    rng: Optional[np.random.Generator] = None,
) -> EffectSize:
    """A12 by pair counting, with a percentile-bootstrap interval clamped to [0, 1]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("A12 needs non-empty samples")
    estimate = float(_a12(a, b))
    rng = rng or np.random.default_rng(0)
    ia = rng.integers(a.size, size=(resamples, a.size))
    ib = rng.integers(b.size, size=(resamples, b.size))
    boot = _a12(a[ia], b[ib])
    tail = 100.0 * (1.0 - confidence) / 2.0
    low, high = np.percentile(boot, [tail, 100.0 - tail])
    return EffectSize(
        estimate,
        float(min(1.0, max(0.0, low))),
        float(min(1.0, max(0.0, high))),
        a12_magnitude(estimate),
    )


# === Per-run metrics ===


def search_records(records: Sequence[RunRecord], accounting: str) -> list[RunRecord]:
    """Records counted against the budget under an accounting mode."""
    if accounting == "include_seed_stage":
        return list(records)
    if accounting == "exclude_seed_stage":
        return [r for r in records if r.stage not in SEED_STAGES]
    raise ValueError(f"unknown accounting mode {accounting!r}")


def unique_curve(records: Sequence[RunRecord], accounting: str) -> np.ndarray:
    """Cumulative unique violations after each counted simulation (non-decreasing)."""
    flags = [r.unique_flag for r in search_records(records, accounting)]
    return np.cumsum(np.asarray(flags, dtype=int))


def unique_count(records: Sequence[RunRecord], accounting: str) -> int:
    curve = unique_curve(records, accounting)
    return int(curve[-1]) if curve.size else 0


def reports_archive(method: str) -> bool:
    return "-UN" in method


def unique_percentage(
    records: Sequence[RunRecord],
    archive_entries: Sequence[dict[str, Any]],
    method: str,
    schema: SearchSpaceSchema,
    params: UniquenessParams,
) -> Optional[float]:
    """Share of reported violations that are mutually unique, in percent.

    Archive-based methods report their archive; the others report every violating
    simulation. ``None`` when nothing was reported.
    """
    if reports_archive(method):
        reported = [(np.asarray(e["vector"]), e["kind"]) for e in archive_entries]
    else:
        reported = [(np.asarray(r.vector), r.violation_kind) for r in records if r.violation_kind]
    if not reported:
        return None
    vectors, kinds = zip(*reported)
    return 100.0 * unique_count_among(vectors, kinds, schema, params) / len(reported)


# === Method comparison ===


@dataclass
class StatsReport:
    counts: dict[str, list[int]] = field(default_factory=dict)
    unique_percentage: dict[str, Optional[float]] = field(default_factory=dict)
    comparisons: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "counts": self.counts,
            "unique_percentage": self.unique_percentage,
            "comparisons": self.comparisons,
        }


def compare_methods(
    counts: dict[str, list[int]],
    unique_pct: Optional[dict[str, Optional[float]]] = None,
    *,
    resamples: int = BOOTSTRAP_RESAMPLES,
    rng: Optional[np.random.Generator] = None,
) -> StatsReport:
    """Pairwise rank-sum p-values and A12 effect sizes between every two methods."""
    report = StatsReport(dict(counts), dict(unique_pct or {}))
    for first, second in itertools.combinations(counts, 2):
        a, b = counts[first], counts[second]
        p_value = wilcoxon_rank_sum(a, b) if min(len(a), len(b)) >= 3 else None
        effect = vargha_delaney_a12(a, b, resamples=resamples, rng=rng)
        report.comparisons.append(
            {
                "a": first,
                "b": second,
                "mean_a": float(np.mean(a)),
                "mean_b": float(np.mean(b)),
                "p_value": p_value,
                "a12": effect.a12,
                "ci": [effect.ci_low, effect.ci_high],
                "magnitude": effect.magnitude,
            }
        )
    return report
