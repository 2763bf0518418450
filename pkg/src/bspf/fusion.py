"""Query matching, fusion of pruned logits, row normalisation and the full pipeline."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import pruning
from .analysis import flops_attention
from .attention import (
    AttentionBlock,
    ChunkPartition,
    ProjectionSet,
    ProjectionWeights,
    block_logits,
    make_partition,
    project,
)
from .config import BspfConfig, FusionSource, Normalization
from .errors import ConfigError, ShapeError
from .numerics import SimilarityMetric, as_matrix, pairwise_similarity, similarity


@dataclass(frozen=True)
class MatchTable:
    """``best[i]`` is the most similar other query of ``i``; ``rho[i]`` its similarity."""

    best: np.ndarray
    rho: np.ndarray

    def __len__(self):
        return len(self.best)


@dataclass
class AttentionStats:
    retained_fraction: float
    kept_entries: int
    pruned_entries: int
    fusion_events: int
    mirror_mask_disagreement: int
    flops: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "retained_fraction": float(f"{self.retained_fraction:.9g}"),
            "kept_entries": self.kept_entries,
            "pruned_entries": self.pruned_entries,
            "fusion_events": self.fusion_events,
            "mirror_mask_disagreement": self.mirror_mask_disagreement,
            "flops": dict(self.flops),
        }


@dataclass
class BspfResult:
    output: np.ndarray
    attention: np.ndarray
    support: np.ndarray
    splits: dict[tuple[int, int], pruning.PruneSplit]
    stats: AttentionStats


def best_match(chunk_queries, metric: SimilarityMetric | str = SimilarityMetric.COSINE) -> MatchTable:
    """For each query, the index of the most similar *other* query (ties: smallest index)."""
    q = as_matrix(chunk_queries, "chunk_queries")
    omega = q.shape[0]
    if omega < 2:
        return MatchTable(np.zeros(0, dtype=np.intp), np.zeros(0))
    sims = pairwise_similarity(q, metric)
    np.fill_diagonal(sims, -np.inf)
    best = np.argmax(sims, axis=1)
    # rho is recomputed with the scalar metric so it matches similarity() exactly
    rho = np.array([similarity(q[i], q[b], metric) for i, b in enumerate(best)])
    return MatchTable(best, rho)


def hamming_similarity(p, q) -> float:
    p = np.asarray(p).astype(bool)
    q = np.asarray(q).astype(bool)
    if p.shape != q.shape or p.ndim != 1:
        raise ShapeError(f"prune strings must be equal-length vectors, got {p.shape} and {q.shape}")
    if p.size == 0:
        return 1.0
    return 1.0 - np.count_nonzero(p != q) / p.size


def fuse_block(
    split: pruning.PruneSplit,
    matches: MatchTable,
    strings: np.ndarray | None = None,
    source: FusionSource | str = FusionSource.MATCHED_ROW,
) -> tuple[np.ndarray, int]:
    """Fold pruned logits into the reserved logits of each query's match.

    Every query ``i`` with match ``b`` adds ``clip(rho, 0, 1) * S_H * src[j]``
    to ``reserved[b, j]`` wherever the pre-fusion ``reserved[b, j] > 0``.
    All increments are read from the unmodified split, so the result does not
    depend on query order. Returns the fused block and the number of entries
    that received a nonzero increment.
    """
    source = FusionSource(source)
    reserved = split.reserved
    fused = reserved.copy()
    if len(matches) == 0:
        return fused, 0
    strings = split.mask if strings is None else np.asarray(strings).astype(bool)
    best = matches.best
    omega = strings.shape[1]
    s_h = 1.0 - np.count_nonzero(strings != strings[best], axis=1) / omega
    coef = np.clip(matches.rho, 0.0, 1.0) * s_h
    src = split.pruned[best] if source is FusionSource.MATCHED_ROW else split.pruned
    guard = reserved[best] > 0
    inc = np.where(guard, coef[:, None] * src, 0.0)
    np.add.at(fused, best, inc)
    return fused, int(np.count_nonzero(inc))


def _fallback_rows(support: np.ndarray, part: ChunkPartition, key_valid: np.ndarray) -> np.ndarray:
    empty = np.flatnonzero(~support.any(axis=1))
    for r in empty:
        span = part.span(r // part.chunk_size)
        support[r, span] = key_valid[span]
    return empty


def assemble_and_normalize(
    blocks: dict[tuple[int, int], np.ndarray],
    masks: dict[tuple[int, int], np.ndarray],
    part: ChunkPartition,
    mode: Normalization | str = Normalization.GLOBAL_ROW,
    key_valid: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Stitch fused blocks into an ``N x N`` row-stochastic map.

    Returns ``(attention, support)``. A row with no kept entry falls back to a
    uniform distribution over its diagonal-block keys.
    """
    mode = Normalization(mode)
    n, omega, c = part.n_tokens, part.chunk_size, part.n_chunks
    if key_valid is None:
        key_valid = np.ones(n, dtype=bool)
    logits = np.zeros((n, n))
    support = np.zeros((n, n), dtype=bool)
    for m in range(c):
        for k in range(c):
            if (m, k) not in blocks:
                raise ShapeError(f"missing block ({m}, {k})")
            logits[part.span(m), part.span(k)] = blocks[(m, k)]
            support[part.span(m), part.span(k)] = masks[(m, k)]
    support &= key_valid[None, :]
    fallback = _fallback_rows(support, part, key_valid)

    if mode is Normalization.GLOBAL_ROW:
        attn = _masked_softmax(logits, support)
    else:
        attn = np.zeros((n, n))
        live = np.zeros(n)
        for k in range(c):
            cols = part.span(k)
            sub = support[:, cols]
            attn[:, cols] = _masked_softmax(logits[:, cols], sub)
            live += sub.any(axis=1)
        attn /= live[:, None]
    for r in fallback:
        attn[r] = support[r] / np.count_nonzero(support[r])
    return attn, support


def _masked_softmax(logits: np.ndarray, support: np.ndarray) -> np.ndarray:
    shifted = np.where(support, logits, -np.inf)
    peak = shifted.max(axis=1, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    e = np.exp(shifted - peak)
    total = e.sum(axis=1, keepdims=True)
    return e / np.where(total == 0.0, 1.0, total)


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


class _Profile:
    def __init__(self, sink: dict | None):
        self.sink = sink

    @contextmanager
    def stage(self, name: str):
        if self.sink is None:
            yield
            return
        t0 = time.perf_counter()
        yield
        self.sink[name] = self.sink.get(name, 0.0) + time.perf_counter() - t0


def run_bspf(
    proj: ProjectionSet,
    config: BspfConfig,
    threads: int = 1,
    key_valid: np.ndarray | None = None,
    profile: dict | None = None,
) -> BspfResult:
    """Pruned, fused attention over already-projected queries, keys and values.

    With ``config.shared_qk`` only blocks on or above the diagonal are scored;
    lower blocks reuse the transposed split of their mirror block.
    """
    part = make_partition(proj.n_tokens, config.chunk_size)
    c = part.n_chunks
    if config.shared_qk and not np.array_equal(proj.q, proj.k):
        raise ConfigError("shared_qk is set but queries and keys differ")
    prof = _Profile(profile)

    if config.shared_qk:
        computed = [(m, n) for m in range(c) for n in range(m, c)]
    else:
        computed = [(m, n) for m in range(c) for n in range(c)]

    def logits_one(mn):
        blk = block_logits(proj, part, *mn)
        if config.shared_qk and mn[0] == mn[1]:
            # exact symmetry so tied scores (i, j) / (j, i) break identically
            upper = np.triu(blk.logits)
            blk = AttentionBlock(blk.m, blk.n, upper + np.triu(blk.logits, 1).T)
        return blk

    with prof.stage("logits"):
        logits = dict(zip(computed, _pmap(logits_one, computed, threads)))

    def needs_pruning(mn):
        return mn[0] != mn[1] or config.prune_diagonal

    def split_one(mn):
        blk = logits[mn]
        if not needs_pruning(mn):
            return pruning.PruneSplit(
                blk.logits, np.zeros_like(blk.logits), np.ones(blk.logits.shape, dtype=bool),
                1.0, blk.m, blk.n,
            )
        scores = pruning.smooth_scores(blk, config.kernel)
        return pruning.split_topk(blk, scores, config.keep_ratio)

    with prof.stage("scoring"):
        splits = dict(zip(computed, _pmap(split_one, computed, threads)))

    disagreement = 0
    if config.shared_qk:
        with prof.stage("mirror"):
            for m in range(c):
                for n in range(m + 1, c):
                    splits[(n, m)] = pruning.mirror_split(splits[(m, n)], True)
        if config.audit_mirror:
            for m in range(c):
                for n in range(m + 1, c):
                    blk = block_logits(proj, part, n, m)
                    direct = pruning.split_topk(
                        blk, pruning.smooth_scores(blk, config.kernel), config.keep_ratio
                    )
                    disagreement += int(np.count_nonzero(direct.mask != splits[(n, m)].mask))

    with prof.stage("matching"):
        matches = _pmap(lambda m: best_match(proj.q[part.span(m)], config.metric), range(c), threads)

    keys = [(m, n) for m in range(c) for n in range(c)]

    def fuse_one(mn):
        split = splits[mn]
        if not needs_pruning(mn):
            return split.reserved, 0
        return fuse_block(split, matches[mn[0]], source=config.fusion_source)

    with prof.stage("fusion"):
        fused_list = _pmap(fuse_one, keys, threads)
    fused = {mn: f for mn, (f, _) in zip(keys, fused_list)}
    events = sum(e for _, e in fused_list)

    with prof.stage("assembly"):
        attn, support = assemble_and_normalize(
            fused, {mn: splits[mn].mask for mn in keys}, part, config.normalization, key_valid
        )
    with prof.stage("aggregation"):
        output = attn @ proj.v

    kept = sum(int(np.count_nonzero(splits[mn].mask)) for mn in keys)
    total = part.n_tokens * part.n_tokens
    stats = AttentionStats(
        retained_fraction=kept / total,
        kept_entries=kept,
        pruned_entries=total - kept,
        fusion_events=events,
        mirror_mask_disagreement=disagreement,
        flops=flops_attention(part.n_tokens, proj.q.shape[1], config).stages,
    )
    return BspfResult(output, attn, support, splits, stats)


def bspf_attention(
    tokens, weights: ProjectionWeights, config: BspfConfig, threads: int = 1
) -> tuple[np.ndarray, AttentionStats]:
    if weights.shared_qk != config.shared_qk:
        raise ConfigError(
            f"weights.shared_qk={weights.shared_qk} does not match config.shared_qk={config.shared_qk}"
        )
    result = run_bspf(project(tokens, weights), config, threads=threads)
    return result.output, result.stats
