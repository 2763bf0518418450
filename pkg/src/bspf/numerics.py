"""Dense matrix helpers, row softmax, similarity metrics and fixtures.

Matrices are plain ``float64`` numpy arrays of shape ``(rows, cols)``.
"""

from __future__ import annotations

import enum
import math
from os import PathLike
from typing import Union

import numpy as np

from .errors import ShapeError

PathType = Union[str, "PathLike[str]"]

# Knuth's MMIX constants for the fixture generator.
LCG_MULTIPLIER = 6364136223846793005
LCG_INCREMENT = 1442695040888963407
_MASK64 = (1 << 64) - 1


class SimilarityMetric(str, enum.Enum):
    COSINE = "cosine"
    PEARSON = "pearson"
    EUCLIDEAN = "euclidean"


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array or raise :class:`ShapeError`."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite entries")
    return arr


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax_row(v) -> np.ndarray:
    """Numerically stable softmax of a 1-D vector."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ShapeError(f"softmax_row needs a non-empty vector, got shape {v.shape}")
    e = np.exp(v - v.max())
    return e / e.sum()


def softmax_rows(a: np.ndarray) -> np.ndarray:
    a = as_matrix(a)
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def similarity(u, v, metric: SimilarityMetric | str = SimilarityMetric.COSINE) -> float:
    """Similarity of two vectors; larger means more alike for every metric.

    Euclidean distance ``D`` is reported as ``1 / (1 + D)``. A zero-norm
    (cosine) or zero-variance (pearson) argument gives 0.
    """
    metric = SimilarityMetric(metric)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or u.shape != v.shape or u.size == 0:
        raise ShapeError(f"similarity needs equal non-empty vectors, got {u.shape} and {v.shape}")
    if metric is SimilarityMetric.EUCLIDEAN:
        return 1.0 / (1.0 + math.sqrt(float(np.sum((u - v) ** 2))))
    if metric is SimilarityMetric.PEARSON:
        u = u - u.mean()
        v = v - v.mean()
    nu = math.sqrt(float(np.dot(u, u)))
    nv = math.sqrt(float(np.dot(v, v)))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    s = float(np.dot(u, v)) / (nu * nv)
    return min(1.0, max(-1.0, s))


def pairwise_similarity(a: np.ndarray, metric: SimilarityMetric | str) -> np.ndarray:
    """All-pairs similarity between the rows of ``a`` (vectorised)."""
    metric = SimilarityMetric(metric)
    a = as_matrix(a)
    if metric is SimilarityMetric.EUCLIDEAN:
        diff = a[:, None, :] - a[None, :, :]
        return 1.0 / (1.0 + np.sqrt(np.sum(diff * diff, axis=-1)))
    if metric is SimilarityMetric.PEARSON:
        a = a - a.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.sum(a * a, axis=1))
    safe = np.where(norms == 0.0, 1.0, norms)
    out = (a @ a.T) / np.outer(safe, safe)
    zero = norms == 0.0
    out[zero, :] = 0.0
    out[:, zero] = 0.0
    return np.clip(out, -1.0, 1.0)


def lcg_stream(seed: int, count: int) -> list[int]:
    """``count`` successive 64-bit LCG states starting after ``seed``."""
    state = seed & _MASK64
    out = []
    for _ in range(count):
        state = (LCG_MULTIPLIER * state + LCG_INCREMENT) & _MASK64
        out.append(state)
    return out


def fixture_tokens(seed: int, n: int, d: int) -> np.ndarray:
    """Reproducible ``n x d`` matrix with dyadic entries in ``[-1, 1)``.

    The top 53 bits of each LCG state are scaled by ``2**-52``, so every
    value is exact in binary64 and identical on every platform.
    """
    if n < 1 or d < 1:
        raise ShapeError(f"fixture shape must be positive, got ({n}, {d})")
    ints = np.array([s >> 11 for s in lcg_stream(seed, n * d)], dtype=np.float64)
    return (ints * 2.0**-52 - 1.0).reshape(n, d)


def format_matrix(a: np.ndarray) -> str:
    a = as_matrix(a)
    lines = [f"{a.shape[0]} {a.shape[1]}"]
    lines += [" ".join(f"{x:.17g}" for x in row) for row in a]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ShapeError("empty matrix text")
    try:
        rows, cols = (int(t) for t in lines[0].split())
        data = [[float(t) for t in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise ShapeError(f"malformed matrix text: {exc}") from None
    if len(data) != rows or any(len(r) != cols for r in data):
        raise ShapeError(f"matrix text does not match declared shape {rows}x{cols}")
    return as_matrix(np.array(data, dtype=np.float64).reshape(rows, cols))


def save_matrix(path: PathType, a: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write(format_matrix(a))


def load_matrix(path: PathType) -> np.ndarray:
    with open(path) as fh:
        return parse_matrix(fh.read())
