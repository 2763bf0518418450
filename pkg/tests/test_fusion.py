import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bspf import (
    BspfConfig,
    ConfigError,
    ConvKernel,
    FusionSource,
    MatchTable,
    Normalization,
    ProjectionWeights,
    PruneSplit,
    ShapeError,
    assemble_and_normalize,
    best_match,
    bspf_attention,
    dense_attention,
    fuse_block,
    hamming_similarity,
    make_partition,
    project,
    run_bspf,
    similarity,
    smooth_scores,
    split_topk,
)
from bspf.numerics import softmax_rows
from bspf.oracle import exhaustive_best_match, reference_block

from .conftest import make_inputs

SYM_KERNEL = ConvKernel.parse("1 2 1 2 4 2 1 2 1")


# --- matching -------------------------------------------------------------

def test_best_match_duplicate_rows():
    t = best_match(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), "cosine")
    assert t.best[0] == 1 and t.rho[0] == 1.0
    assert t.best[1] == 0


def test_best_match_two_queries(rng):
    t = best_match(rng.standard_normal((2, 3)))
    assert t.best.tolist() == [1, 0]


def test_best_match_single_query_is_empty():
    assert len(best_match(np.ones((1, 3)))) == 0


@pytest.mark.parametrize("metric", ["cosine", "pearson", "euclidean"])
@pytest.mark.parametrize("seed", range(5))
def test_best_match_matches_exhaustive(metric, seed):
    q = np.random.default_rng(seed).standard_normal((6, 4))
    t = best_match(q, metric)
    want = exhaustive_best_match(q, metric)
    assert t.best.tolist() == [b for b, _ in want]
    assert np.max(np.abs(t.rho - [r for _, r in want])) < 1e-12
    for i, b in enumerate(t.best):
        assert b != i
        assert t.rho[i] == similarity(q[i], q[b], metric)


def test_best_match_ties_take_smallest_index():
    q = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]])
    assert best_match(q).best[0] == 1


# --- hamming ----------------------------------------------------------------

def test_hamming_figure_example():
    assert hamming_similarity([0, 0, 0, 1], [1, 0, 1, 0]) == 0.25


def test_hamming_extremes():
    assert hamming_similarity([1, 0, 1], [1, 0, 1]) == 1.0
    assert hamming_similarity([0, 0, 0, 0], [1, 1, 1, 1]) == 0.0
    with pytest.raises(ShapeError):
        hamming_similarity([0, 1], [0, 1, 1])


# --- fusion -----------------------------------------------------------------

def _split(reserved, pruned, mask):
    return PruneSplit(np.array(reserved, float), np.array(pruned, float), np.array(mask, bool), 0.5)


def test_fuse_nothing_pruned(rng):
    block = rng.standard_normal((4, 4))
    split = split_topk(block, block, 1.0)
    fused, events = fuse_block(split, best_match(rng.standard_normal((4, 3))))
    assert np.array_equal(fused, split.reserved) and events == 0


def test_fuse_single_entry_substitution():
    mask = [[0, 0, 0, 1], [1, 0, 1, 0], [1, 1, 1, 1], [1, 1, 1, 1]]
    reserved = np.zeros((4, 4))
    reserved[1, 0] = 0.5
    pruned = np.zeros((4, 4))
    pruned[1, 0] = 0.2
    matches = MatchTable(np.array([1, 0, 0, 0]), np.array([1.0, 0.0, 0.0, 0.0]))
    fused, events = fuse_block(_split(reserved, pruned, mask), matches, source="matched_row")
    assert fused[1, 0] == pytest.approx(0.55, abs=1e-15)
    assert events == 1
    fused[1, 0] = 0.5
    assert np.array_equal(fused, reserved)


def test_fuse_guard_skips_nonpositive_targets():
    mask = [[1, 0], [1, 0]]
    reserved = [[0.0, 0.0], [-0.3, 0.0]]
    pruned = [[0.0, 0.7], [0.0, 0.9]]
    matches = MatchTable(np.array([1, 0]), np.array([1.0, 1.0]))
    fused, events = fuse_block(_split(reserved, pruned, mask), matches, source="self_row")
    assert np.array_equal(fused, reserved) and events == 0


def test_fuse_negative_rho_clamped():
    mask = [[1, 0], [1, 0]]
    split = _split([[0.5, 0], [0.4, 0]], [[0, 0.2], [0, 0.3]], mask)
    fused, events = fuse_block(split, MatchTable(np.array([1, 0]), np.array([-0.8, -0.1])), source="self_row")
    assert np.array_equal(fused, split.reserved) and events == 0


def test_matched_row_never_fires_on_disjoint_split(rng):
    block = np.abs(rng.standard_normal((6, 6)))
    split = split_topk(block, smooth_scores(block, ConvKernel.uniform()), 0.5)
    _, events = fuse_block(split, best_match(rng.standard_normal((6, 3))), source="matched_row")
    assert events == 0


@pytest.mark.parametrize("source", list(FusionSource))
@pytest.mark.parametrize("seed", range(8))
def test_fuse_matches_literal_transcription(source, seed):
    x, w = make_inputs(seed, 8, 4)
    proj, part = project(x, w), make_partition(8, 4)
    cfg = BspfConfig(chunk_size=4, keep_ratio=0.5, fusion_source=source)
    from bspf import block_logits

    blk = block_logits(proj, part, 0, 1)
    split = split_topk(blk, smooth_scores(blk, cfg.kernel), 0.5)
    fused, _ = fuse_block(split, best_match(proj.q[:4], cfg.metric), source=source)
    want, mask = reference_block(x[:4] @ w.w_q, x[4:] @ w.w_k, x[:4] @ w.w_q, cfg, True, 2.0)
    assert np.array_equal(split.mask, np.array(mask, bool))
    assert np.max(np.abs(fused - np.array(want))) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 6), st.sampled_from([0.25, 0.5, 0.75]))
def test_fusion_nondecreasing_for_nonnegative_logits(seed, omega, ratio):
    rng = np.random.default_rng(seed)
    block = rng.random((omega, omega))
    split = split_topk(block, smooth_scores(block, ConvKernel.uniform()), ratio)
    for source in FusionSource:
        fused, events = fuse_block(split, best_match(rng.standard_normal((omega, 3))), source=source)
        assert np.all(fused >= split.reserved)
        assert events <= np.count_nonzero(~split.mask)


# --- assembly ---------------------------------------------------------------

def _blocks(logits, part, masks=None):
    blocks, bm = {}, {}
    for m in range(part.n_chunks):
        for n in range(part.n_chunks):
            blocks[(m, n)] = logits[part.span(m), part.span(n)]
            bm[(m, n)] = np.ones_like(blocks[(m, n)], bool) if masks is None else masks[(m, n)]
    return blocks, bm


def test_assemble_full_keep_equals_softmax(rng):
    logits = rng.standard_normal((8, 8))
    part = make_partition(8, 4)
    attn, support = assemble_and_normalize(*_blocks(logits, part), part)
    assert np.max(np.abs(attn - softmax_rows(logits))) < 1e-9 and support.all()


def test_assemble_single_chunk_modes_coincide(rng):
    logits = rng.standard_normal((4, 4))
    part = make_partition(4, 4)
    mask = rng.random((4, 4)) > 0.4
    mask[:, 0] = True
    args = _blocks(logits, part, {(0, 0): mask})
    a, _ = assemble_and_normalize(*args, part, Normalization.GLOBAL_ROW)
    b, _ = assemble_and_normalize(*args, part, Normalization.PER_BLOCK)
    assert np.max(np.abs(a - b)) < 1e-15


@pytest.mark.parametrize("mode", list(Normalization))
def test_assemble_rows_stochastic_on_support(mode):
    x, w = make_inputs(9, 8, 4)
    res = run_bspf(project(x, w), BspfConfig(chunk_size=4, keep_ratio=0.5, normalization=mode))
    assert np.max(np.abs(res.attention.sum(axis=1) - 1.0)) < 1e-9
    full = np.zeros((8, 8), bool)
    for (m, n), split in res.splits.items():
        full[4 * m:4 * m + 4, 4 * n:4 * n + 4] = split.mask
    assert np.array_equal(res.support, full)
    assert np.array_equal(res.attention > 0, full)


def test_assemble_fallback_uniform_over_diagonal():
    logits = np.arange(16.0).reshape(4, 4)
    part = make_partition(4, 2)
    masks = {k: np.zeros((2, 2), bool) for k in [(0, 0), (0, 1), (1, 0), (1, 1)]}
    masks[(0, 1)][0, 0] = True
    attn, support = assemble_and_normalize(*_blocks(logits, part, masks), part)
    assert attn[0].tolist() == [0, 0, 1, 0]
    assert attn[1].tolist() == [0.5, 0.5, 0, 0]
    assert attn[3].tolist() == [0, 0, 0.5, 0.5]
    assert support[1].tolist() == [True, True, False, False]


def test_assemble_per_block_averages_live_blocks():
    logits = np.zeros((4, 4))
    part = make_partition(4, 2)
    masks = {k: np.ones((2, 2), bool) for k in [(0, 0), (0, 1), (1, 0), (1, 1)]}
    masks[(0, 1)] = np.array([[True, False], [False, False]])
    attn, _ = assemble_and_normalize(*_blocks(logits, part, masks), part, "per_block")
    assert attn[0].tolist() == [0.25, 0.25, 0.5, 0.0]
    assert attn[1].tolist() == [0.5, 0.5, 0.0, 0.0]


# --- pipeline ---------------------------------------------------------------

@pytest.mark.parametrize("omega", [2, 4, 8])
def test_pipeline_full_keep_is_dense(omega):
    x, w = make_inputs(3, 8, 4)
    out, stats = bspf_attention(x, w, BspfConfig(chunk_size=omega, keep_ratio=1.0))
    assert np.max(np.abs(out - dense_attention(x, w))) < 1e-9
    assert stats.retained_fraction == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_shared_and_unshared_paths_agree_on_symmetric_weights(seed):
    x, w = make_inputs(seed, 16, 4, shared_qk=True)
    copied = ProjectionWeights(w.w_q, w.w_q.copy(), w.w_v, shared_qk=False)
    for source in FusionSource:
        cfg = BspfConfig(chunk_size=4, keep_ratio=0.5, kernel=SYM_KERNEL, fusion_source=source)
        a, sa = bspf_attention(x, w, cfg.with_(shared_qk=True))
        b, sb = bspf_attention(x, copied, cfg)
        assert np.max(np.abs(a - b)) < 1e-9
        assert sa.retained_fraction == sb.retained_fraction


def test_shared_qk_mismatch_rejected():
    x, w = make_inputs(0, 8, 4)
    with pytest.raises(ConfigError):
        bspf_attention(x, w, BspfConfig(chunk_size=4, shared_qk=True))


def test_retained_fraction_block_counting():
    x, w = make_inputs(1, 8, 4)
    _, stats = bspf_attention(x, w, BspfConfig(chunk_size=4, keep_ratio=0.5))
    assert stats.retained_fraction == 0.75
    assert stats.kept_entries == 48 and stats.pruned_entries == 16


def test_chunk_of_one_skips_fusion():
    x, w = make_inputs(2, 4, 3)
    cfg = BspfConfig(chunk_size=1, keep_ratio=1.0, fusion_source="self_row")
    out, stats = bspf_attention(x, w, cfg)
    assert stats.fusion_events == 0
    assert np.max(np.abs(out - dense_attention(x, w))) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0.25, 0.5, 0.75]), st.booleans(), st.sampled_from(list(FusionSource)))
def test_output_rows_in_value_envelope(seed, ratio, prune_diag, source):
    x, w = make_inputs(seed, 16, 4)
    cfg = BspfConfig(chunk_size=4, keep_ratio=ratio, prune_diagonal=prune_diag, fusion_source=source)
    out, _ = bspf_attention(x, w, cfg)
    v = project(x, w).v
    assert np.all(out >= v.min(axis=0) - 1e-12) and np.all(out <= v.max(axis=0) + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0.25, 0.5, 0.75, 1.0]))
def test_support_symmetric_with_shared_qk(seed, ratio):
    x, w = make_inputs(seed, 16, 4, shared_qk=True)
    res = run_bspf(project(x, w), BspfConfig(chunk_size=4, keep_ratio=ratio, shared_qk=True))
    assert np.array_equal(res.support, res.support.T)


def test_retained_fraction_monotone_in_keep_ratio():
    x, w = make_inputs(4, 32, 4)
    fractions = [
        bspf_attention(x, w, BspfConfig(chunk_size=8, keep_ratio=r, prune_diagonal=True))[1].retained_fraction
        for r in (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
    ]
    assert fractions == sorted(fractions) and len(set(fractions)) == len(fractions)


def test_pipeline_deterministic_across_runs_and_threads():
    x, w = make_inputs(8, 32, 8, shared_qk=True)
    cfg = BspfConfig(chunk_size=8, keep_ratio=0.5, shared_qk=True, fusion_source="self_row")
    a, sa = bspf_attention(x, w, cfg, threads=1)
    b, sb = bspf_attention(x, w, cfg, threads=1)
    c, sc = bspf_attention(x, w, cfg, threads=4)
    assert np.array_equal(a, b) and np.array_equal(a, c)
    assert sa == sb == sc


def test_audit_mirror_counts_disagreement_for_asymmetric_kernel():
    x, w = make_inputs(5, 16, 4, shared_qk=True)
    asym = ConvKernel(np.array([0, 5, 0, 0, 1, 0, 0, 0, 0.0]))
    assert not asym.is_symmetric
    counts = []
    for kernel in (SYM_KERNEL, asym):
        cfg = BspfConfig(chunk_size=4, keep_ratio=0.5, shared_qk=True, kernel=kernel, audit_mirror=True)
        counts.append(bspf_attention(x, w, cfg)[1].mirror_mask_disagreement)
    assert counts[0] == 0
    assert counts[1] > 0


def test_profile_records_stages():
    x, w = make_inputs(1, 16, 4)
    prof = {}
    run_bspf(project(x, w), BspfConfig(chunk_size=4), profile=prof)
    assert {"logits", "scoring", "matching", "fusion", "assembly", "aggregation"} <= set(prof)


def test_key_mask_excludes_padding():
    x, w = make_inputs(2, 6, 4)
    padded = np.vstack([x, np.zeros((2, 4))])
    valid = np.arange(8) < 6
    res = run_bspf(project(padded, w), BspfConfig(chunk_size=4, keep_ratio=1.0), key_valid=valid)
    assert not res.attention[:, 6:].any()
    assert np.max(np.abs(res.output[:6] - dense_attention(x, w))) < 1e-9
