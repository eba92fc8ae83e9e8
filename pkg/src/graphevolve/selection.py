"""Pareto ranking, novelty and quality-diversity survivor selection.

Selection pressure combines layered non-dominated sorting (all six fitness
components, maximization) with a novelty bonus measured against an archive
of non-dominated candidates, so the search keeps both good and different
graphs alive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, LengthMismatch, PoolTooSmall
from .metrics import N_COMPONENTS, FitnessVector
from .rng import generator


@dataclass(frozen=True)
class SelectionParams:
    """Rank pressure and novelty weight for the selection softmax."""

    alpha_sel: float = 2.0
    beta_nov: float = 0.1
    default_novelty: float = 1.0  # cold-start novelty against an empty archive

    def __post_init__(self):
        if self.alpha_sel < 0 or self.beta_nov < 0:
            raise ValueError("selection parameters must be non-negative")


@dataclass(frozen=True)
class ArchiveEntry:
    fitness: tuple[float, ...]
    descriptor: tuple[float, ...]
    graph_id: str


@dataclass
class QdArchive:
    """Bounded archive of mutually non-dominated candidates.

    Inserting a dominated candidate is a no-op; inserting a dominating one
    evicts everything it dominates. Over capacity, the entry with the lowest
    novelty relative to the rest of the archive goes first.
    """

    capacity: int = 256
    k: int = 5
    entries: list[ArchiveEntry] = field(default_factory=list)

    def insert(self, entry: ArchiveEntry) -> bool:
        fit = np.asarray(entry.fitness, dtype=float)
        for existing in self.entries:
            other = np.asarray(existing.fitness, dtype=float)
            if _dominates(other, fit):
                return False
            # exact duplicates would pile up across generations
            if entry.fitness == existing.fitness and entry.descriptor == existing.descriptor:
                return False
        self.entries = [
            e for e in self.entries if not _dominates(fit, np.asarray(e.fitness, dtype=float))
        ]
        self.entries.append(entry)
        while len(self.entries) > self.capacity:
            self._evict_least_novel()
        return True

    def _evict_least_novel(self):
        vecs = np.asarray([e.descriptor for e in self.entries], dtype=float)
        dists = np.linalg.norm(vecs[:, None, :] - vecs[None, :, :], axis=2)
        np.fill_diagonal(dists, np.inf)
        k = min(self.k, len(self.entries) - 1)
        nearest = np.sort(dists, axis=1)[:, :k]
        novelty_scores = nearest.mean(axis=1)
        # deterministic tie-break on graph id
        order = sorted(range(len(self.entries)), key=lambda i: (novelty_scores[i], self.entries[i].graph_id))
        del self.entries[order[0]]

    def dump(self) -> list[dict]:
        return [
            {
                "graph_id": e.graph_id,
                "fitness": list(e.fitness),
                "descriptor": list(e.descriptor),
            }
            for e in self.entries
        ]


def _dominates(a: np.ndarray, b: np.ndarray) -> bool:
    """Strict Pareto dominance under maximization: all >=, at least one >."""
    return bool(np.all(a >= b) and np.any(a > b))


def pareto_ranks(fitnesses: Sequence[FitnessVector | Sequence[float]]) -> list[int]:
    """Layered non-dominated sorting; rank 0 is the non-dominated front.

    Deb-style bookkeeping: one pass of pairwise comparisons fills the
    dominated sets and domination counts, then fronts peel off in waves.
    Output order matches input order.
    """
    mat = _fitness_matrix(fitnesses)
    n = mat.shape[0]
    ranks = [0] * n
    if n == 0:
        return ranks

    # vectorized pairwise dominance: dom[i, j] means i dominates j
    ge = np.all(mat[:, None, :] >= mat[None, :, :], axis=2)
    gt = np.any(mat[:, None, :] > mat[None, :, :], axis=2)
    dom = ge & gt

    counts = dom.sum(axis=0)
    front = np.nonzero(counts == 0)[0]
    rank = 0
    remaining = counts.copy()
    while front.size:
        for i in front:
            ranks[int(i)] = rank
        remaining[front] = -1
        for i in front:
            remaining[dom[i]] -= 1
        front = np.nonzero(remaining == 0)[0]
        rank += 1
    return ranks


def _fitness_matrix(fitnesses: Sequence[FitnessVector | Sequence[float]]) -> np.ndarray:
    rows = []
    for f in fitnesses:
        vec = f.as_array() if isinstance(f, FitnessVector) else np.asarray(f, dtype=float)
        if vec.shape != (N_COMPONENTS,):
            raise DimensionMismatch(f"fitness vector of shape {vec.shape}, expected ({N_COMPONENTS},)")
        rows.append(vec)
    return np.asarray(rows) if rows else np.empty((0, N_COMPONENTS))


def novelty(
    candidate: Sequence[float],
    archive: QdArchive,
    default: float = 1.0,
) -> float:
    """Mean Euclidean distance to the k nearest archive descriptors.

    A smaller archive averages over everything it has; an empty archive
    yields the configured cold-start default instead of failing.
    """
    if not archive.entries:
        return default
    cand = np.asarray(candidate, dtype=float)
    vecs = np.asarray([e.descriptor for e in archive.entries], dtype=float)
    dists = np.linalg.norm(vecs - cand[None, :], axis=1)
    k = min(archive.k, len(archive.entries))
    nearest = np.sort(dists)[:k]
    return float(nearest.mean())


def inv_rank(rank: int) -> float:
    """Rank pressure term: maps rank 0 to 1 and decays smoothly."""
    return 1.0 / (1.0 + rank)


def selection_probabilities(
    ranks: Sequence[int],
    novelties: Sequence[float],
    params: SelectionParams,
) -> np.ndarray:
    """Softmax of alpha * inv_rank + beta * novelty, max-subtracted."""
    if len(ranks) != len(novelties):
        raise LengthMismatch(f"{len(ranks)} ranks vs {len(novelties)} novelties")
    logits = np.asarray(
        [params.alpha_sel * inv_rank(r) + params.beta_nov * nov for r, nov in zip(ranks, novelties)]
    )
    logits -= logits.max()
    exps = np.exp(logits)
    return exps / exps.sum()


def sample_without_replacement(probs: np.ndarray, n: int, seed: int) -> list[int]:
    """Draw n distinct indices, renormalizing after each draw."""
    rng = generator("select", seed)
    remaining = probs.astype(float).copy()
    chosen: list[int] = []
    for _ in range(n):
        total = remaining.sum()
        cum = np.cumsum(remaining / total)
        u = rng.random()
        idx = int(np.searchsorted(cum, u, side="right"))
        idx = min(idx, len(remaining) - 1)
        # skip over already-drawn zero-probability slots, deterministically
        while remaining[idx] == 0.0:
            idx = (idx + 1) % len(remaining)
        chosen.append(idx)
        remaining[idx] = 0.0
    return chosen


def select_qd(
    pool: Sequence[tuple[object, FitnessVector, Sequence[float]]],
    n: int,
    params: SelectionParams,
    archive: QdArchive,
    seed: int,
) -> tuple[list, QdArchive]:
    """Pick n survivors from (graph, fitness, descriptor) triples.

    Novelty is measured against the incoming archive; afterwards every pool
    member is offered to the archive, which keeps only non-dominated entries.
    Returns the survivors (pool objects) and the updated archive.
    """
    if len(pool) < n:
        raise PoolTooSmall(f"pool of {len(pool)} cannot fill population of {n}")

    fitnesses = [f for _, f, _ in pool]
    ranks = pareto_ranks(fitnesses)
    novelties = [novelty(d, archive, params.default_novelty) for _, _, d in pool]

    if len(pool) == n:
        survivors = [g for g, _, _ in pool]
    else:
        probs = selection_probabilities(ranks, novelties, params)
        picked = sample_without_replacement(probs, n, seed)
        survivors = [pool[i][0] for i in picked]

    for graph, fitness, descriptor in pool:
        graph_id = getattr(graph, "graph_id", "")
        archive.insert(
            ArchiveEntry(tuple(fitness.components), tuple(float(x) for x in descriptor), graph_id)
        )
    return survivors, archive
