from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .numerics import SimilarityMetric
from .pruning import ConvKernel


class FusionSource(str, enum.Enum):
    # pruned values of the matched row i_b (fusion equation as written)
    MATCHED_ROW = "matched_row"
    # pruned values of the query's own row i (figure narrative)
    SELF_ROW = "self_row"


class Normalization(str, enum.Enum):
    GLOBAL_ROW = "global_row"
    PER_BLOCK = "per_block"


@dataclass(frozen=True)
class BspfConfig:
    """Hyperparameters of block-based symmetric pruning and fusion.

    ``audit_mirror`` makes the symmetric fast path also split every lower
    block directly and count mask entries that disagree with the mirror.
    """

    chunk_size: int
    keep_ratio: float = 0.5
    metric: SimilarityMetric = SimilarityMetric.COSINE
    shared_qk: bool = False
    prune_diagonal: bool = False
    fusion_source: FusionSource = FusionSource.MATCHED_ROW
    normalization: Normalization = Normalization.GLOBAL_ROW
    kernel: ConvKernel = field(default_factory=ConvKernel.uniform)
    audit_mirror: bool = False

    def __post_init__(self):
        if not isinstance(self.chunk_size, int) or self.chunk_size < 1:
            raise ConfigError(f"chunk_size must be a positive integer, got {self.chunk_size!r}")
        if not 0.0 < self.keep_ratio <= 1.0:
            raise ConfigError(f"keep_ratio must be in (0, 1], got {self.keep_ratio!r}")
        for name, kind in (
            ("metric", SimilarityMetric),
            ("fusion_source", FusionSource),
            ("normalization", Normalization),
        ):
            try:
                object.__setattr__(self, name, kind(getattr(self, name)))
            except ValueError:
                choices = ", ".join(k.value for k in kind)
                raise ConfigError(
                    f"{name} must be one of {choices}, got {getattr(self, name)!r}"
                ) from None

    def with_(self, **changes) -> BspfConfig:
        return replace(self, **changes)
