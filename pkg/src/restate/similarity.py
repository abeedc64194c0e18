"""Sentence similarity backends behind semantic constraint satisfaction.

Three interchangeable scorers: a hashed character-3-gram bag (default,
fully self-contained), the mean of a trained encoder's output states,
and an injected lookup table for replaying fixed similarity sequences
in tests. All are deterministic.
"""

from __future__ import annotations

import json

import numpy as np

from .flags import candidate_spans


class EmptyInput(ValueError):
    """Raised when an embedder receives an empty token sequence."""


class ZeroVector(ValueError):
    """Raised by cosine when either vector has zero norm."""


class DimensionMismatch(ValueError):
    """Raised by cosine on vectors of different lengths."""


class MissingEntry(KeyError):
    """Raised when an injected similarity table lacks a requested key."""


_FNV_OFFSET = 14695981039346656037
_FNV_PRIME = 1099511628211
_MASK = (1 << 64) - 1


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK
    return h


def cosine(u, v) -> float:
    """dot(u, v) / (|u| |v|), clamped into [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch("%s vs %s" % (u.shape, v.shape))
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine undefined for zero-norm vector")
    return float(np.clip(float(u @ v) / (nu * nv), -1.0, 1.0))


class HashedNgramEmbedder:
    """L2-normalized bag of hashed character 3-grams.

    Tokens are joined with single spaces and padded with one leading and
    trailing space; each 3-gram is hashed with FNV-1a 64-bit and bucketed
    modulo the output dimension (256 by default). Bit-exact across
    platforms by construction.
    """

    backend = "hashed-ngram"

    def __init__(self, dim: int = 256, n: int = 3):
        self.dim = dim
        self.n = n

    def embed(self, tokens) -> np.ndarray:
        if not tokens:
            raise EmptyInput("cannot embed an empty token sequence")
        s = " " + " ".join(tokens).lower() + " "
        v = np.zeros(self.dim, dtype=np.float64)
        for i in range(len(s) - self.n + 1):
            gram = s[i:i + self.n]
            v[_fnv1a(gram.encode("utf-8")) % self.dim] += 1.0
        norm = float(np.linalg.norm(v))
        if norm > 0.0:
            v /= norm
        return v


class EncoderMeanEmbedder:
    """Mean of the model encoder's output states for the token sequence."""

    backend = "encoder-mean"

    def __init__(self, model):
        self.model = model
        self.dim = model.config.dim

    def embed(self, tokens) -> np.ndarray:
        if not tokens:
            raise EmptyInput("cannot embed an empty token sequence")
        states = self.model.encode(tokens)
        return np.asarray(states, dtype=np.float64).mean(axis=0)


class SpanSimilarity:
    """Scores a constraint against a decoded prefix.

    The score at step t is the maximum cosine between the constraint's
    embedding and the embedding of any candidate span (suffixes of the
    prefix no longer than the constraint). Constraint embeddings are
    cached by token tuple, so one scorer instance can safely serve many
    inputs whose constraint ids collide.
    """

    def __init__(self, embedder):
        self.embedder = embedder
        self._cache: dict[tuple, np.ndarray] = {}

    def score(self, constraint_id: str, constraint_tokens, prefix_tokens) -> float:
        if not prefix_tokens:
            return 0.0
        key = tuple(constraint_tokens)
        cvec = self._cache.get(key)
        if cvec is None:
            cvec = self.embedder.embed(list(constraint_tokens))
            self._cache[key] = cvec
        t = len(prefix_tokens)
        best = 0.0
        for k, l in sorted(candidate_spans(t, len(constraint_tokens))):
            span_vec = self.embedder.embed(list(prefix_tokens[k:l]))
            if not span_vec.any():
                continue
            best = max(best, cosine(span_vec, cvec))
        return best


class InjectedTableSimilarity:
    """Replay scorer: similarity values come from a fixture table keyed
    by "constraint_id:prefix_len"."""

    backend = "injected-table"

    def __init__(self, table: dict):
        self.table = {str(k): float(v) for k, v in table.items()}

    @classmethod
    def from_json(cls, path) -> "InjectedTableSimilarity":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def sim_lookup(self, constraint_id: str, prefix_len: int) -> float:
        key = "%s:%d" % (constraint_id, prefix_len)
        if key not in self.table:
            raise MissingEntry(key)
        return self.table[key]

    def score(self, constraint_id: str, constraint_tokens, prefix_tokens) -> float:
        return self.sim_lookup(constraint_id, len(prefix_tokens))
