import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bspf import ConfigError, ConvKernel, block_logits, make_partition, mirror_split, project, smooth_scores, split_topk
from bspf.oracle import exhaustive_topk, naive_conv3x3
from bspf.pruning import conv3x3, retained_count

from .conftest import make_inputs

RATIOS = (0.25, 0.5, 0.75, 1.0)


def test_uniform_kernel_on_ones():
    s = smooth_scores(np.ones((3, 3)), ConvKernel.uniform())
    want = np.array([[4, 6, 4], [6, 9, 6], [4, 6, 4]]) / 9
    assert np.max(np.abs(s - want)) < 1e-15


def test_delta_kernel_is_identity(rng):
    a = rng.standard_normal((5, 5))
    assert np.array_equal(smooth_scores(a, ConvKernel.delta()), a)


def test_single_cell_uniform():
    assert smooth_scores(np.array([[5.0]]), ConvKernel.uniform())[0, 0] == pytest.approx(5 / 9, abs=1e-15)


def test_convolution_direction():
    # weight at offset (k, l) = (-1, -1) pulls from a[i + 1, j + 1]
    w = np.zeros(9)
    w[0] = 1.0
    a = np.arange(9.0).reshape(3, 3)
    s = smooth_scores(a, ConvKernel(w))
    assert s[0, 0] == a[1, 1] and s[1, 1] == a[2, 2] and s[2, 2] == 0.0


def test_smooth_matches_naive(rng):
    a = rng.standard_normal((5, 5))
    kernel = ConvKernel(rng.random(9))
    assert np.max(np.abs(smooth_scores(a, kernel) - np.array(naive_conv3x3(a, kernel)))) < 1e-12


def test_kernel_normalisation():
    k = ConvKernel(np.arange(1.0, 10.0))
    assert abs(k.w.sum() - 1.0) < 1e-12
    with pytest.raises(ConfigError):
        ConvKernel(np.array([1, -1, 0, 0, 0, 0, 0, 0, 0.0]))


def test_kernel_text_format():
    k = ConvKernel.parse("1 2 3 4 5 6 7 8 9")
    assert np.array_equal(ConvKernel.parse(k.format()).w, k.w)
    with pytest.raises(ConfigError):
        ConvKernel.parse("1 2 3")
    assert ConvKernel.parse("1 2 1 2 4 2 1 2 1").is_symmetric
    assert not k.is_symmetric


def test_split_ordered_scores():
    block = np.array([[0.4, 0.3], [0.2, 0.1]])
    split = split_topk(block, np.array([[4.0, 3.0], [2.0, 1.0]]), 0.5)
    assert split.mask.tolist() == [[True, True], [False, False]]
    assert np.array_equal(split.reserved, [[0.4, 0.3], [0, 0]])
    assert np.array_equal(split.pruned, [[0, 0], [0.2, 0.1]])


def test_split_full_keep(rng):
    block = rng.standard_normal((4, 4))
    split = split_topk(block, rng.standard_normal((4, 4)), 1.0)
    assert np.array_equal(split.reserved, block)
    assert not split.pruned.any() and split.mask.all()


def test_split_tie_break_row_major():
    split = split_topk(np.ones((2, 2)), np.zeros((2, 2)), 0.5)
    assert split.mask.tolist() == [[True, True], [False, False]]


def test_split_rejects_bad_ratio():
    for r in (0.0, -0.1, 1.5):
        with pytest.raises(ConfigError):
            split_topk(np.ones((2, 2)), np.ones((2, 2)), r)


def test_retained_count_half_up():
    assert retained_count(0.5, 1) == 1
    assert retained_count(0.5, 3) == 5
    assert retained_count(0.25, 1) == 0


@pytest.mark.parametrize("omega", range(1, 9))
@pytest.mark.parametrize("ratio", RATIOS)
def test_split_matches_exhaustive_topk(omega, ratio, rng):
    block = rng.standard_normal((omega, omega))
    scores = np.round(rng.standard_normal((omega, omega)), 1)  # force ties
    split = split_topk(block, scores, ratio)
    k = retained_count(ratio, omega)
    assert np.count_nonzero(split.mask) == k
    assert np.array_equal(split.mask, np.array(exhaustive_topk(scores, k), dtype=bool))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8).flatmap(lambda n: arrays(np.float64, (n, n), elements=st.floats(-5, 5))))
def test_split_reconstructs_and_nests(block):
    scores = smooth_scores(block, ConvKernel.uniform())
    previous = None
    for ratio in (0.1, 0.25, 0.5, 0.75, 0.9, 1.0):
        split = split_topk(block, scores, ratio)
        assert np.array_equal(split.reserved + split.pruned, block)
        assert not np.any((split.reserved != 0) & ~split.mask)
        assert not np.any((split.pruned != 0) & split.mask)
        if previous is not None:
            assert np.all(split.mask[previous])
        previous = split.mask


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 8).flatmap(lambda n: arrays(np.float64, (n, n), elements=st.floats(-10, 10))),
    arrays(np.float64, (3, 3), elements=st.floats(-2, 2)),
    arrays(np.float64, (3, 3), elements=st.floats(-2, 2)),
    st.floats(-3, 3),
    st.floats(-3, 3),
)
def test_conv_linear_in_kernel(a, w1, w2, alpha, beta):
    lhs = conv3x3(a, alpha * w1 + beta * w2)
    rhs = alpha * conv3x3(a, w1) + beta * conv3x3(a, w2)
    assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_mirror_examples():
    for upper, want in (([[1, 0], [0, 1]], [[1, 0], [0, 1]]), ([[1, 1], [0, 0]], [[1, 0], [1, 0]])):
        mask = np.array(upper, dtype=bool)
        block = np.array([[0.1, 0.2], [0.3, 0.4]])
        split = split_topk(block, np.where(mask, 1.0, 0.0), 0.5)
        assert np.array_equal(split.mask, mask)
        mirrored = mirror_split(split, shared_qk=True)
        assert mirrored.mask.astype(int).tolist() == want
        assert np.array_equal(mirrored.reserved, split.reserved.T)
        assert np.array_equal(mirrored.pruned, split.pruned.T)


def test_mirror_requires_shared_qk():
    split = split_topk(np.ones((2, 2)), np.ones((2, 2)), 0.5)
    with pytest.raises(ConfigError):
        mirror_split(split, shared_qk=False)


@pytest.mark.parametrize("seed", range(10))
def test_mirror_equals_direct_split_with_symmetric_kernel(seed):
    x, w = make_inputs(seed, 12, 4, shared_qk=True)
    proj, part = project(x, w), make_partition(12, 4)
    kernel = ConvKernel.parse("1 2 1 2 4 2 1 2 1")
    upper = block_logits(proj, part, 0, 2)
    lower = block_logits(proj, part, 2, 0)
    mirrored = mirror_split(split_topk(upper, smooth_scores(upper, kernel), 0.5), True)
    direct = split_topk(lower, smooth_scores(lower, kernel), 0.5)
    assert np.array_equal(mirrored.mask, direct.mask)
    assert np.max(np.abs(mirrored.reserved - direct.reserved)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8).flatmap(lambda n: arrays(np.float64, (n, n), elements=st.floats(-5, 5))))
def test_symmetric_kernel_keeps_symmetry_bit_exact(a):
    a = np.triu(a) + np.triu(a, 1).T
    s = smooth_scores(a, ConvKernel.parse("0.3 1.7 0.2 1.7 2 0.9 0.2 0.9 0.1"))
    assert np.array_equal(s, s.T)
