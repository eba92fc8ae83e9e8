"""Raw metrics, normalization and the six-component fitness vector.

Component order is fixed: task success, inverted latency, security,
business KPI, doc freshness, build reproducibility. All functions here are
pure and safe for unrestricted concurrent use.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyInput, WeightsOffSimplex

FITNESS_COMPONENTS = ("U", "P", "S", "B", "D", "C")
N_COMPONENTS = 6

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class NormalizationBounds:
    """Min-max latency bounds in milliseconds; clamping handles outliers."""

    p_min: float = 100.0
    p_max: float = 500.0

    def __post_init__(self):
        if not self.p_min < self.p_max:
            raise ValueError(f"p_min ({self.p_min}) must be < p_max ({self.p_max})")


@dataclass(frozen=True)
class RawMetrics:
    """Unnormalized metric readings for one candidate graph."""

    U: float  # task success rate, [0, 1]
    P: float  # p95 latency in ms, > 0
    S: float  # static security score, [0, 1]
    B: float  # business KPI delta, [0, 1]
    D: float  # doc freshness, [0, 1]
    C: float  # build reproducibility, [0, 1]

    def __post_init__(self):
        for name in ("U", "P", "S", "B", "D", "C"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"raw metric {name} not finite: {value!r}")
        if self.P <= 0:
            raise ValueError(f"latency must be positive, got {self.P}")
        for name in ("U", "S", "B", "D", "C"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"raw metric {name} out of [0,1]: {value}")


@dataclass(frozen=True)
class FitnessVector:
    """Normalized 6-vector [U, 1-P_norm, S, B, D, C], each in [0, 1]."""

    components: tuple[float, ...]
    raw: RawMetrics | None = None

    def __post_init__(self):
        if len(self.components) != N_COMPONENTS:
            raise ValueError(f"fitness vector needs {N_COMPONENTS} components")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.components, dtype=float)

    def __getitem__(self, i: int) -> float:
        return self.components[i]


def normalize_latency(p_ms: float, bounds: NormalizationBounds) -> float:
    """Clamped min-max normalization of a latency reading."""
    x = (p_ms - bounds.p_min) / (bounds.p_max - bounds.p_min)
    return min(1.0, max(0.0, x))


def fitness_vector(raw: RawMetrics, bounds: NormalizationBounds) -> FitnessVector:
    return FitnessVector(
        (
            raw.U,
            1.0 - normalize_latency(raw.P, bounds),
            raw.S,
            raw.B,
            raw.D,
            raw.C,
        ),
        raw=raw,
    )


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, classic O(len(a)*len(b)) table."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def rouge_l(reference: Sequence[str], candidate: Sequence[str]) -> float:
    """LCS F-measure between two token sequences; 0 when either is empty."""
    if not reference or not candidate:
        return 0.0
    lcs = lcs_length(reference, candidate)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return 2.0 * precision * recall / (precision + recall)


def tokenize(text: str) -> list[str]:
    """Whitespace split, case-folded; the one tokenization used everywhere."""
    return text.lower().split()


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    va = np.asarray(a, dtype=float)
    vb = np.asarray(b, dtype=float)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(va @ vb) / (na * nb)


def freshness(
    doc_ref_tokens: Sequence[str],
    doc_cand_tokens: Sequence[str],
    emb_ref: Sequence[float],
    emb_cand: Sequence[float],
    blend: float = 0.5,
) -> float:
    """Blend of ROUGE-L and (non-negative) embedding cosine similarity."""
    r = rouge_l(doc_ref_tokens, doc_cand_tokens)
    c = max(0.0, cosine(emb_ref, emb_cand))
    return blend * r + (1.0 - blend) * c


def reproducibility(hashes: Sequence[str]) -> float:
    """Fraction of rebuilds producing the modal hash.

    Modal counting is order-invariant; ties pick the lexicographically
    smallest modal hash, which leaves the count unchanged.
    """
    if not hashes:
        raise EmptyInput("reproducibility needs at least one rebuild hash")
    counts = Counter(hashes)
    _, count = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return count / len(hashes)


def aggregate_utility(fitness: FitnessVector, weights: Sequence[float]) -> float:
    """Scalarized utility w . F for weights on the probability simplex."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (N_COMPONENTS,):
        raise WeightsOffSimplex(f"expected {N_COMPONENTS} weights, got shape {w.shape}")
    if np.any(w < -SIMPLEX_TOL) or abs(float(w.sum()) - 1.0) > SIMPLEX_TOL:
        raise WeightsOffSimplex(f"weights not on simplex: sum={float(w.sum())!r}")
    return float(w @ fitness.as_array())


def discounted_return(utilities: Sequence[float], gamma: float) -> float:
    """Sum of gamma^t * u_t over the utility sequence."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma out of [0,1]: {gamma}")
    total = 0.0
    factor = 1.0
    for u in utilities:
        total += factor * u
        factor *= gamma
    return total
