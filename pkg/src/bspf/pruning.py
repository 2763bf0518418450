"""Neighbourhood-smoothed scoring and top-k splitting of attention blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import AttentionBlock
from .errors import ConfigError, ShapeError
from .numerics import as_matrix


@dataclass(frozen=True)
class ConvKernel:
    """3x3 smoothing weights, renormalised to sum to one.

    ``w[k + 1, l + 1]`` is the weight for offset ``(k, l)``.
    """

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64).reshape(-1)
        if w.size != 9:
            raise ShapeError(f"kernel needs 9 weights, got {w.size}")
        if not np.all(np.isfinite(w)):
            raise ConfigError("kernel weights must be finite")
        total = float(w.sum())
        if abs(total) < 1e-12:
            raise ConfigError("kernel weights sum to zero and cannot be normalised")
        object.__setattr__(self, "w", (w / total).reshape(3, 3))

    @classmethod
    def uniform(cls) -> ConvKernel:
        return cls(np.ones(9))

    @classmethod
    def delta(cls) -> ConvKernel:
        w = np.zeros(9)
        w[4] = 1.0
        return cls(w)

    @classmethod
    def parse(cls, text: str) -> ConvKernel:
        """Nine whitespace-separated weights in row-major order."""
        try:
            vals = [float(t) for t in text.split()]
        except ValueError as exc:
            raise ConfigError(f"malformed kernel: {exc}") from None
        if len(vals) != 9:
            raise ConfigError(f"kernel needs 9 weights, got {len(vals)}")
        return cls(np.array(vals))

    def format(self) -> str:
        return " ".join(f"{x:.17g}" for x in self.w.ravel())

    @property
    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.w, self.w.T))


@dataclass(frozen=True)
class PruneSplit:
    """Disjoint reserved/pruned decomposition of one block (mask 1 = reserved)."""

    reserved: np.ndarray
    pruned: np.ndarray
    mask: np.ndarray
    keep_ratio: float
    m: int = 0
    n: int = 0

    def prune_string(self, i: int) -> np.ndarray:
        return self.mask[i]


SWAP_PAIRS = ((-1, 0), (-1, 1), (0, 1))


def retained_count(keep_ratio: float, omega: int) -> int:
    # half-up rounding, not banker's
    return int(math.floor(keep_ratio * omega * omega + 0.5))


def conv3x3(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Zero-padded stride-1 3x3 convolution with raw (unnormalised) weights.

    ``out[i, j] = sum_{k,l in -1..1} w[k+1, l+1] * a[i-k, j-l]``.
    """
    a = as_matrix(a, "block")
    w = np.asarray(w, dtype=np.float64)
    rows, cols = a.shape
    padded = np.zeros((rows + 2, cols + 2))
    padded[1:-1, 1:-1] = a

    def term(k, l):
        return w[k + 1, l + 1] * padded[1 - k:1 - k + rows, 1 - l:1 - l + cols]

    # (k, l) and (l, k) summed as a pair: symmetric kernel on a symmetric
    # block must give bit-exact symmetric scores
    out = np.zeros_like(a)
    for k in (-1, 0, 1):
        out += term(k, k)
    for k, l in SWAP_PAIRS:
        out += term(k, l) + term(l, k)
    return out


def smooth_scores(block: AttentionBlock | np.ndarray, kernel: ConvKernel) -> np.ndarray:
    logits = block.logits if isinstance(block, AttentionBlock) else block
    logits = as_matrix(logits, "block")
    if logits.shape[0] != logits.shape[1] or logits.shape[0] < 1:
        raise ShapeError(f"block must be square and non-empty, got {logits.shape}")
    return conv3x3(logits, kernel.w)


def topk_mask(scores: np.ndarray, k: int) -> np.ndarray:
    """Mask of the ``k`` highest scores; ties go to the earliest row-major index."""
    flat = scores.ravel()
    order = np.argsort(-flat, kind="stable")
    mask = np.zeros(flat.size, dtype=bool)
    mask[order[:k]] = True
    return mask.reshape(scores.shape)


def split_topk(block: AttentionBlock | np.ndarray, scores: np.ndarray, keep_ratio: float) -> PruneSplit:
    if not 0.0 < keep_ratio <= 1.0:
        raise ConfigError(f"keep_ratio must be in (0, 1], got {keep_ratio}")
    if isinstance(block, AttentionBlock):
        logits, m, n = block.logits, block.m, block.n
    else:
        logits, m, n = as_matrix(block, "block"), 0, 0
    scores = as_matrix(scores, "scores")
    if scores.shape != logits.shape:
        raise ShapeError(f"scores {scores.shape} do not match block {logits.shape}")
    mask = topk_mask(scores, retained_count(keep_ratio, logits.shape[0]))
    reserved = np.where(mask, logits, 0.0)
    pruned = np.where(mask, 0.0, logits)
    return PruneSplit(reserved, pruned, mask, keep_ratio, m, n)


def mirror_split(upper: PruneSplit, shared_qk: bool) -> PruneSplit:
    """Split for block ``(n, m)`` obtained by transposing the split of ``(m, n)``."""
    if not shared_qk:
        raise ConfigError("mirroring requires shared_qk (symmetric logits)")
    return PruneSplit(
        upper.reserved.T.copy(),
        upper.pruned.T.copy(),
        upper.mask.T.copy(),
        upper.keep_ratio,
        upper.n,
        upper.m,
    )
