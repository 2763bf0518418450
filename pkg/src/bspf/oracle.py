"""Brute-force reference implementations for cross-checking the fast path.

Nothing here imports the optimised modules' functions; only their config and
result types are shared. Everything is plain Python loops over lists.
"""

from __future__ import annotations

import math

from .config import BspfConfig, FusionSource, Normalization
from .numerics import SimilarityMetric


def _rows(a):
    return [[float(x) for x in row] for row in a]


def _kernel_weights(kernel):
    w = kernel.w if hasattr(kernel, "w") else kernel
    return _rows(w)


def naive_conv3x3(a, kernel):
    """Zero-padded 3x3 convolution, one output cell at a time."""
    a = _rows(a)
    w = _kernel_weights(kernel)
    rows = len(a)
    cols = len(a[0]) if rows else 0
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):

            def term(k, l):
                r, s = i - k, j - l
                if 0 <= r < rows and 0 <= s < cols:
                    value = a[r][s]
                else:
                    value = 0.0
                return w[k + 1][l + 1] * value

            # mirrored offsets summed pairwise, see pruning.conv3x3
            acc = 0.0
            for k in (-1, 0, 1):
                acc += term(k, k)
            for k, l in ((-1, 0), (-1, 1), (0, 1)):
                acc += term(k, l) + term(l, k)
            out[i][j] = acc
    return out


def exhaustive_topk(scores, k):
    """Mask of the k best (score, -i, -j) triples, as nested lists of 0/1."""
    scores = _rows(scores)
    triples = []
    for i, row in enumerate(scores):
        for j, s in enumerate(row):
            triples.append((s, i, j))
    triples.sort(key=lambda t: (-t[0], t[1], t[2]))
    mask = [[0] * len(row) for row in scores]
    for s, i, j in triples[:k]:
        mask[i][j] = 1
    return mask


def _dot(u, v):
    acc = 0.0
    for x, y in zip(u, v):
        acc += x * y
    return acc


def reference_similarity(u, v, metric):
    metric = SimilarityMetric(metric)
    if metric is SimilarityMetric.EUCLIDEAN:
        return 1.0 / (1.0 + math.sqrt(sum((x - y) ** 2 for x, y in zip(u, v))))
    if metric is SimilarityMetric.PEARSON:
        mu, mv = sum(u) / len(u), sum(v) / len(v)
        u = [x - mu for x in u]
        v = [y - mv for y in v]
    nu, nv = math.sqrt(_dot(u, u)), math.sqrt(_dot(v, v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return max(-1.0, min(1.0, _dot(u, v) / (nu * nv)))


def exhaustive_best_match(queries, metric=SimilarityMetric.COSINE):
    """List of (best index, similarity) per query, scanning every other query."""
    q = _rows(queries)
    table = []
    for i in range(len(q)):
        best, best_sim = None, -math.inf
        for j in range(len(q)):
            if j == i:
                continue
            s = reference_similarity(q[i], q[j], metric)
            if s > best_sim:
                best, best_sim = j, s
        if best is not None:
            table.append((best, best_sim))
    return table


def _softmax_over(values):
    peak = max(values)
    exps = [math.exp(v - peak) for v in values]
    total = sum(exps)
    return [e / total for e in exps]


def reference_block(q_m, k_n, q_rows_for_match, config: BspfConfig, prune: bool, scale):
    """One block, following the pseudo-code line order.

    Returns (fused reserved logits, mask) as nested lists.
    """
    omega = len(q_m)
    # Pruning: attention entries
    a = [[_dot(q_m[i], k_n[j]) / scale for j in range(omega)] for i in range(omega)]
    if not prune:
        return a, [[1] * omega for _ in range(omega)]
    # S: scoring matrix
    s = naive_conv3x3(a, config.kernel)
    keep = int(math.floor(config.keep_ratio * omega * omega + 0.5))
    top = exhaustive_topk(s, keep)
    a_r = [[0.0] * omega for _ in range(omega)]
    a_p = [[0.0] * omega for _ in range(omega)]
    for i in range(omega):
        for j in range(omega):
            if top[i][j]:
                a_r[i][j] = a[i][j]
                a_p[i][j] = 0.0
            else:
                a_r[i][j] = 0.0
                a_p[i][j] = a[i][j]
    # Matching and fusion, reading from the pre-fusion split
    fused = [row[:] for row in a_r]
    for i, (i_b, rho) in enumerate(exhaustive_best_match(q_rows_for_match, config.metric)):
        rho = max(0.0, min(1.0, rho))
        distance = sum(1 for j in range(omega) if top[i][j] != top[i_b][j])
        s_h = 1.0 - distance / omega
        for j in range(omega):
            if a_r[i_b][j] > 0:
                if config.fusion_source is FusionSource.MATCHED_ROW:
                    src = a_p[i_b][j]
                else:
                    src = a_p[i][j]
                fused[i_b][j] += rho * s_h * src
    return fused, top


def reference_attention_map(tokens, weights, config: BspfConfig):
    """Row-stochastic N x N map computed block by block with no symmetry shortcut."""
    x = _rows(tokens)
    n, d = len(x), len(x[0])
    wq, wk = _rows(weights.w_q), _rows(weights.w_k)

    def proj(w):
        return [[sum(x[r][t] * w[t][c] for t in range(d)) for c in range(d)] for r in range(n)]

    q, k = proj(wq), proj(wk)
    omega = config.chunk_size
    c = n // omega
    scale = math.sqrt(d)
    logits = [[0.0] * n for _ in range(n)]
    mask = [[0] * n for _ in range(n)]
    for m in range(c):
        q_m = q[m * omega:(m + 1) * omega]
        for b in range(c):
            k_b = k[b * omega:(b + 1) * omega]
            prune = m != b or config.prune_diagonal
            fused, top = reference_block(q_m, k_b, q_m, config, prune, scale)
            for i in range(omega):
                for j in range(omega):
                    logits[m * omega + i][b * omega + j] = fused[i][j]
                    mask[m * omega + i][b * omega + j] = top[i][j]

    attn = [[0.0] * n for _ in range(n)]
    for r in range(n):
        if not any(mask[r]):
            m = r // omega
            for j in range(m * omega, (m + 1) * omega):
                attn[r][j] = 1.0 / omega
            continue
        if config.normalization is Normalization.GLOBAL_ROW:
            cols = [j for j in range(n) if mask[r][j]]
            for j, p in zip(cols, _softmax_over([logits[r][j] for j in cols])):
                attn[r][j] = p
        else:
            live = 0
            for b in range(c):
                cols = [j for j in range(b * omega, (b + 1) * omega) if mask[r][j]]
                if not cols:
                    continue
                live += 1
                for j, p in zip(cols, _softmax_over([logits[r][j] for j in cols])):
                    attn[r][j] = p
            for j in range(n):
                attn[r][j] /= live
    return attn, mask


def reference_pipeline(tokens, weights, config: BspfConfig):
    """Output ``A V`` of the literal block-by-block pipeline, as nested lists."""
    attn, _ = reference_attention_map(tokens, weights, config)
    x = _rows(tokens)
    n, d = len(x), len(x[0])
    wv = _rows(weights.w_v)
    v = [[sum(x[r][t] * wv[t][c] for t in range(d)) for c in range(d)] for r in range(n)]
    return [[sum(attn[r][j] * v[j][c] for j in range(n)) for c in range(d)] for r in range(n)]


def reference_dense(tokens, weights):
    """Plain softmax attention, row by row."""
    x = _rows(tokens)
    n, d = len(x), len(x[0])

    def proj(w):
        w = _rows(w)
        return [[sum(x[r][t] * w[t][c] for t in range(d)) for c in range(d)] for r in range(n)]

    q, k, v = proj(weights.w_q), proj(weights.w_k), proj(weights.w_v)
    out = []
    for i in range(n):
        p = _softmax_over([_dot(q[i], k[j]) / math.sqrt(d) for j in range(n)])
        out.append([sum(p[j] * v[j][c] for j in range(n)) for c in range(d)])
    return out
