"""Block-based symmetric pruning and fusion for chunked attention."""

from .analysis import DEIT_S, DEIT_T, FlopReport, ModelDims, flops_attention, flops_vit, sparsity_report
from .attention import (
    AttentionBlock,
    ChunkPartition,
    ProjectionSet,
    ProjectionWeights,
    block_logits,
    dense_attention,
    fixture_weights,
    make_partition,
    project,
)
from .config import BspfConfig, FusionSource, Normalization
from .errors import BspfError, ConfigError, ShapeError
from .fusion import (
    AttentionStats,
    BspfResult,
    MatchTable,
    assemble_and_normalize,
    best_match,
    bspf_attention,
    fuse_block,
    hamming_similarity,
    run_bspf,
)
from .numerics import (
    SimilarityMetric,
    fixture_tokens,
    load_matrix,
    matmul,
    save_matrix,
    similarity,
    softmax_row,
)
from .pruning import ConvKernel, PruneSplit, mirror_split, smooth_scores, split_topk

__version__ = "0.1.0"
