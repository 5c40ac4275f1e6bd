"""Text embedding used by value and column retrieval.

The default embedder works fully offline: the text is case-folded,
collapsed to its alphanumeric characters, padded with boundary markers,
and split into character trigrams which are hashed into a fixed-size bag
and L2-normalized.  Identical texts always produce identical vectors, and
near-identical spellings ("IGA" vs "Ig A", "John" vs "JOHN") land close
together, which is exactly what retrieval over messy stored values needs.

Any object with a ``dim`` attribute and an ``embed(text) -> np.ndarray``
method can stand in for the default, e.g. a client for a hosted embedding
model.
"""

from __future__ import annotations

import zlib
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import EmbeddingError

EMBEDDING_DIM = 512

_BOUNDARY = "#"


@runtime_checkable
class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def unit_normalize(vector: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        raise EmbeddingError("cannot normalize a zero vector")
    return vector / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two unit vectors (plain dot product)."""
    return float(np.dot(a, b))


class TrigramEmbedder:
    """Deterministic hashed character-trigram embedder.

    Collapsing to alphanumerics before taking trigrams makes the vector
    insensitive to case, whitespace and punctuation, so a question phrase
    like "Ig A" matches a stored column name "IGA" exactly.
    """

    def __init__(self, dim: int = EMBEDDING_DIM):
        if dim <= 0:
            raise ValueError("embedding dimension must be positive")
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        stripped = text.strip()
        if not stripped:
            raise EmbeddingError("cannot embed empty text")
        counts = np.zeros(self.dim, dtype=np.float64)
        for gram in self._features(stripped):
            counts[zlib.crc32(gram.encode("utf-8")) % self.dim] += 1.0
        return unit_normalize(counts)

    @staticmethod
    def _features(text: str) -> list[str]:
        folded = text.casefold()
        collapsed = "".join(ch for ch in folded if ch.isalnum())
        # Purely symbolic strings ("???") would collapse to nothing; fall
        # back to the folded text so they still embed deterministically.
        core = collapsed if collapsed else folded
        padded = _BOUNDARY + core + _BOUNDARY
        if len(padded) < 3:
            return [padded]
        return [padded[i : i + 3] for i in range(len(padded) - 2)]
