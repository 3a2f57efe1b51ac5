"""Non-dominated sorting, crowding distance and NSGA-II survival (all objectives minimized)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ParetoRanking:
    fronts: list[list[int]]
    crowding: np.ndarray
    rank: np.ndarray


def dominates(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(a <= b) and np.any(a < b))


def crowding_distance(objectives: np.ndarray, front: list[int]) -> np.ndarray:
    """Crowding distance of the members of one front, in ``front`` order.

    Boundary points of every objective get ``inf``; objectives with zero range add nothing.
    """
    F = np.asarray(objectives, dtype=float)[front]
    n, m = F.shape
    distance = np.zeros(n)
    if n <= 2:
        distance[:] = np.inf
        return distance
    for j in range(m):
        order = np.argsort(F[:, j], kind="stable")
        values = F[order, j]
        distance[order[0]] = distance[order[-1]] = np.inf
        span = values[-1] - values[0]
        if span <= 0:
            continue
        distance[order[1:-1]] += (values[2:] - values[:-2]) / span
    return distance


def nondominated_sort(objectives: np.ndarray) -> ParetoRanking:
    """Fast non-dominated sort; ``fronts[0]`` is the non-dominated set."""
    F = np.asarray(objectives, dtype=float)
    n = len(F)
    if n == 0:
        return ParetoRanking([], np.empty(0), np.empty(0, dtype=int))
    # pairwise dominance matrix: D[i, j] is True when i dominates j
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    D = le & lt
    count = D.sum(axis=0)
    rank = np.full(n, -1, dtype=int)
    fronts: list[list[int]] = []
    current = [i for i in range(n) if count[i] == 0]
    while current:
        for i in current:
            rank[i] = len(fronts)
        fronts.append(current)
        nxt = []
        for p in current:
            for q in np.flatnonzero(D[p]):
                count[q] -= 1
                if count[q] == 0:
                    nxt.append(int(q))
        current = sorted(nxt)

    crowding = np.zeros(n)
    for front in fronts:
        crowding[front] = crowding_distance(F, front)
    return ParetoRanking(fronts, crowding, rank)


def nsga2_survival(objectives: np.ndarray, n: int) -> np.ndarray:
    """Indices of the ``n`` survivors: whole fronts first, then the least crowded of the last."""
    ranking = nondominated_sort(objectives)
    chosen: list[int] = []
    for front in ranking.fronts:
        if len(chosen) + len(front) <= n:
            chosen.extend(front)
            continue
        order = np.argsort(-ranking.crowding[front], kind="stable")
        chosen.extend(front[i] for i in order[: n - len(chosen)])
        break
    return np.array(chosen, dtype=int)


def crowded_tournament(
    ranking: ParetoRanking, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Binary tournament on (front rank, -crowding)."""
    size = len(ranking.rank)
    a = rng.integers(size, size=n)
    b = rng.integers(size, size=n)
    better_b = (ranking.rank[b] < ranking.rank[a]) | (
        (ranking.rank[b] == ranking.rank[a]) & (ranking.crowding[b] > ranking.crowding[a])
    )
    return np.where(better_b, b, a)
