"""Deterministic seed derivation and pseudo-embeddings.

All randomness in the package flows through named streams derived from a
master seed, so that concurrent evaluation order cannot change results and
repeated runs are byte-identical.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(*parts: object) -> int:
    """Collapse an ordered tuple of parts into a stable 64-bit seed.

    Parts are rendered with repr, so ints, strings and tuples are all fine;
    two distinct part tuples collide only with hash probability.
    """
    material = "\x1f".join(repr(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(material).digest()
    return int.from_bytes(digest[:8], "big") & MASK64


def generator(*parts: object) -> np.random.Generator:
    """A numpy Generator seeded from the derived stream name."""
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))


def unit_uniform(*parts: object) -> float:
    """One deterministic draw in [0, 1) addressed purely by the part tuple."""
    return derive_seed(*parts) / float(1 << 64)


def standard_normal(*parts: object) -> float:
    """One deterministic standard-normal draw addressed by the part tuple."""
    return float(generator(*parts).standard_normal())


@lru_cache(maxsize=200_000)
def pseudo_embedding(key: str, dim: int) -> tuple[float, ...]:
    """Deterministic stand-in for a learned encoder.

    Hashes the key and expands it into `dim` reals in [-1, 1]. The same key
    always yields the same vector, which is all the rest of the system needs
    from an embedding.
    """
    rng = generator("emb", key)
    return tuple((rng.random(dim) * 2.0 - 1.0).tolist())


def text_embedding(text: str, dim: int, chunk: int = 8) -> tuple[float, ...]:
    """Embedding of a token stream: mean pooling over fixed-size chunks.

    Composite documents are chunked and each chunk pseudo-embedded; pooling
    is a plain mean so the result is order-invariant across chunks.
    """
    tokens = text.split()
    if not tokens:
        return tuple([0.0] * dim)
    chunks = [" ".join(tokens[i : i + chunk]) for i in range(0, len(tokens), chunk)]
    acc = np.zeros(dim)
    for c in chunks:
        acc += np.asarray(pseudo_embedding(c, dim))
    return tuple((acc / len(chunks)).tolist())
