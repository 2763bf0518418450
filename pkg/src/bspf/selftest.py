"""Built-in oracle and invariant checks behind ``bspf selftest``."""

from __future__ import annotations

import sys
import time

import numpy as np

from . import analysis, attention, fusion, oracle, pruning
from .config import BspfConfig, FusionSource
from .numerics import fixture_tokens

SEEDS = range(5)


def _fixture(seed, n, d, shared):
    return fixture_tokens(seed, n, d), attention.fixture_weights(seed, d, shared)


def check_dense_equivalence():
    for seed in SEEDS:
        for n, omega in ((8, 4), (16, 8), (16, 4)):
            x, w = _fixture(seed, n, 4, False)
            out, _ = fusion.bspf_attention(x, w, BspfConfig(chunk_size=omega, keep_ratio=1.0))
            err = np.max(np.abs(out - attention.dense_attention(x, w)))
            assert err < 1e-9, f"seed={seed} n={n} omega={omega}: |bspf - dense| = {err:.3g}"


def check_reference_fidelity():
    for seed in SEEDS:
        for shared in (True, False):
            for source in FusionSource:
                x, w = _fixture(seed, 16, 4, shared)
                cfg = BspfConfig(chunk_size=4, keep_ratio=0.5, shared_qk=shared, fusion_source=source)
                out, _ = fusion.bspf_attention(x, w, cfg)
                ref = np.array(oracle.reference_pipeline(x, w, cfg))
                err = np.max(np.abs(out - ref))
                assert err < 1e-9, f"seed={seed} shared={shared} {source.value}: {err:.3g}"


def check_logit_symmetry():
    for seed in SEEDS:
        x, w = _fixture(seed, 16, 8, True)
        proj = attention.project(x, w)
        logits = proj.q @ proj.k.T
        assert np.max(np.abs(logits - logits.T)) < 1e-9, f"seed={seed}"
        res = fusion.run_bspf(proj, BspfConfig(chunk_size=4, shared_qk=True))
        for m in range(4):
            for n in range(m + 1, 4):
                assert np.array_equal(res.splits[(n, m)].mask, res.splits[(m, n)].mask.T)


def check_retained_count():
    rng = np.random.default_rng(0)
    for omega in range(1, 9):
        block = rng.standard_normal((omega, omega))
        scores = pruning.smooth_scores(block, pruning.ConvKernel.uniform())
        for ratio in (0.25, 0.5, 0.75, 1.0):
            split = pruning.split_topk(block, scores, ratio)
            want = pruning.retained_count(ratio, omega)
            got = int(np.count_nonzero(split.mask))
            assert got == want, f"omega={omega} ratio={ratio}: {got} != {want}"


def check_hamming_example():
    s = fusion.hamming_similarity([0, 0, 0, 1], [1, 0, 1, 0])
    assert s == 0.25, f"got {s}"


def check_convolution():
    rng = np.random.default_rng(1)
    for _ in range(20):
        size = int(rng.integers(1, 9))
        a = rng.standard_normal((size, size))
        kernel = pruning.ConvKernel(rng.random(9) + 0.1)
        err = np.max(np.abs(pruning.smooth_scores(a, kernel) - np.array(oracle.naive_conv3x3(a, kernel))))
        assert err < 1e-12, f"size={size}: {err:.3g}"


def check_row_stochastic():
    for seed in SEEDS:
        x, w = _fixture(seed, 16, 4, False)
        cfg = BspfConfig(chunk_size=4, keep_ratio=0.5, fusion_source=FusionSource.SELF_ROW)
        res = fusion.run_bspf(attention.project(x, w), cfg)
        assert np.max(np.abs(res.attention.sum(axis=1) - 1.0)) < 1e-9, f"seed={seed}"
        assert np.array_equal(res.attention > 0, res.support), f"seed={seed}: support mismatch"


def check_flop_anchor():
    for dims, target in ((analysis.DEIT_S, 4.6e9), (analysis.DEIT_T, 1.3e9)):
        total = analysis.flops_vit(dims).total
        assert abs(total - target) <= 0.1 * target, f"{dims}: {total / 1e9:.3f} G"


def check_determinism():
    x, w = _fixture(3, 32, 8, True)
    cfg = BspfConfig(chunk_size=8, keep_ratio=0.5, shared_qk=True)
    a, sa = fusion.bspf_attention(x, w, cfg, threads=1)
    b, sb = fusion.bspf_attention(x, w, cfg, threads=4)
    assert np.array_equal(a, b) and sa == sb


CHECKS = {
    "dense_equivalence": check_dense_equivalence,
    "reference_fidelity": check_reference_fidelity,
    "logit_symmetry": check_logit_symmetry,
    "retained_count": check_retained_count,
    "hamming_example": check_hamming_example,
    "convolution": check_convolution,
    "row_stochastic": check_row_stochastic,
    "flop_anchor": check_flop_anchor,
    "determinism": check_determinism,
}


def run_all(verbose: bool = False, out=None) -> list[str]:
    """Run every check; return the names of failing ones."""
    out = out or sys.stdout
    failures = []
    for name, check in CHECKS.items():
        t0 = time.perf_counter()
        try:
            check()
        except Exception as exc:
            failures.append(name)
            print(f"FAIL {name}: {type(exc).__name__}: {exc}", file=out)
            continue
        if verbose:
            print(f"PASS {name} ({time.perf_counter() - t0:.2f}s)", file=out)
    return failures
