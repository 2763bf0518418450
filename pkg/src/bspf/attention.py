"""Token projection, chunk partitioning, block logits and dense attention."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .numerics import as_matrix, fixture_tokens, softmax_rows


@dataclass(frozen=True)
class ProjectionWeights:
    """Square ``d x d`` query/key/value weights.

    With ``shared_qk`` the key weights are the query weights; ``w_k`` may be
    omitted and is then taken from ``w_q``.
    """

    w_q: np.ndarray
    w_k: np.ndarray | None
    w_v: np.ndarray
    shared_qk: bool = False

    def __post_init__(self):
        w_q = as_matrix(self.w_q, "w_q")
        w_v = as_matrix(self.w_v, "w_v")
        if self.w_k is None:
            if not self.shared_qk:
                raise ConfigError("w_k is required unless shared_qk is set")
            w_k = w_q
        else:
            w_k = as_matrix(self.w_k, "w_k")
        d = w_q.shape[0]
        for name, w in (("w_q", w_q), ("w_k", w_k), ("w_v", w_v)):
            if w.shape != (d, d):
                raise ShapeError(f"{name} must be {d}x{d}, got {w.shape}")
        if self.shared_qk and not np.array_equal(w_k, w_q):
            raise ConfigError("shared_qk requires w_k == w_q")
        object.__setattr__(self, "w_q", w_q)
        object.__setattr__(self, "w_k", w_k)
        object.__setattr__(self, "w_v", w_v)

    @property
    def dim(self) -> int:
        return self.w_q.shape[0]


@dataclass(frozen=True)
class ProjectionSet:
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if not (self.q.shape == self.k.shape and self.q.shape[0] == self.v.shape[0]):
            raise ShapeError(
                f"q, k, v disagree: {self.q.shape}, {self.k.shape}, {self.v.shape}"
            )

    @property
    def n_tokens(self) -> int:
        return self.q.shape[0]

    def head(self, h: int, n_heads: int) -> ProjectionSet:
        """Column slice of one attention head."""
        d = self.q.shape[1]
        if d % n_heads:
            raise ConfigError(f"model dim {d} not divisible by n_heads={n_heads}")
        dq = d // n_heads
        dv = self.v.shape[1] // n_heads
        return ProjectionSet(
            self.q[:, h * dq:(h + 1) * dq],
            self.k[:, h * dq:(h + 1) * dq],
            self.v[:, h * dv:(h + 1) * dv],
        )


@dataclass(frozen=True)
class ChunkPartition:
    n_tokens: int
    chunk_size: int

    @property
    def n_chunks(self) -> int:
        return self.n_tokens // self.chunk_size

    def span(self, m: int) -> slice:
        if not 0 <= m < self.n_chunks:
            raise IndexError(f"chunk index {m} out of range [0, {self.n_chunks})")
        return slice(m * self.chunk_size, (m + 1) * self.chunk_size)


@dataclass(frozen=True)
class AttentionBlock:
    m: int
    n: int
    logits: np.ndarray


def project(tokens, weights: ProjectionWeights) -> ProjectionSet:
    x = as_matrix(tokens, "tokens")
    if x.shape[1] != weights.dim:
        raise ShapeError(f"tokens have {x.shape[1]} features, weights expect {weights.dim}")
    q = x @ weights.w_q
    k = q if weights.shared_qk else x @ weights.w_k
    return ProjectionSet(q, k, x @ weights.w_v)


def make_partition(n_tokens: int, chunk_size: int) -> ChunkPartition:
    if chunk_size < 1:
        raise ConfigError(f"chunk_size must be >= 1, got {chunk_size}")
    if n_tokens < 1:
        raise ConfigError(f"n_tokens must be >= 1, got {n_tokens}")
    if n_tokens % chunk_size:
        padded = -(-n_tokens // chunk_size) * chunk_size
        raise ConfigError(
            f"n_tokens={n_tokens} is not divisible by chunk_size={chunk_size}; "
            f"pad to {padded}"
        )
    return ChunkPartition(n_tokens, chunk_size)


def block_logits(proj: ProjectionSet, part: ChunkPartition, m: int, n: int) -> AttentionBlock:
    """Pre-softmax logits between query chunk ``m`` and key chunk ``n``."""
    q = proj.q[part.span(m)]
    k = proj.k[part.span(n)]
    return AttentionBlock(m, n, (q @ k.T) / math.sqrt(proj.q.shape[1]))


def dense_map(proj: ProjectionSet) -> np.ndarray:
    """Full ``N x N`` row-softmax attention map."""
    return softmax_rows((proj.q @ proj.k.T) / math.sqrt(proj.q.shape[1]))


def dense_from_projections(proj: ProjectionSet) -> np.ndarray:
    return dense_map(proj) @ proj.v


def dense_attention(tokens, weights: ProjectionWeights) -> np.ndarray:
    """Exact softmax attention, ``softmax(Q K^T / sqrt(d)) V``."""
    return dense_from_projections(project(tokens, weights))


def fixture_weights(seed: int, d: int, shared_qk: bool = False) -> ProjectionWeights:
    """Deterministic weights scaled by ``1/sqrt(d)`` to keep logits moderate."""
    scale = 1.0 / math.sqrt(d)
    w_q = fixture_tokens(seed * 3 + 1, d, d) * scale
    w_k = None if shared_qk else fixture_tokens(seed * 3 + 2, d, d) * scale
    w_v = fixture_tokens(seed * 3 + 3, d, d) * scale
    return ProjectionWeights(w_q, w_k, w_v, shared_qk=shared_qk)
