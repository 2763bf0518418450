"""Analytic operation counts for dense, chunked and pruned attention.

Conventions (also embedded in every report):

* one multiply-add = 1 op (MAC counting, as used for published ViT GFLOPs)
* one exponential = 10 ops
* one comparison = 1 op
* softmax costs 10 (exp) + 1 (max) + 1 (sum) + 1 (divide) per kept entry
* the ``1/sqrt(d)`` scale is folded into the query projection
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .config import BspfConfig
from .errors import ConfigError
from .pruning import retained_count

MAC_OPS = 1
EXP_OPS = 10
CMP_OPS = 1
SOFTMAX_OPS = EXP_OPS + 3

CONVENTIONS = {
    "multiply_add": MAC_OPS,
    "exp": EXP_OPS,
    "comparison": CMP_OPS,
    "softmax_per_entry": SOFTMAX_OPS,
}

ATTENTION_STAGES = (
    "qkv_projection",
    "logits",
    "score_conv",
    "topk",
    "matching",
    "fusion",
    "softmax",
    "value_aggregation",
    "mlp",
)


@dataclass(frozen=True)
class ModelDims:
    n_tokens: int
    model_dim: int
    n_heads: int
    n_layers: int
    mlp_ratio: float = 4.0
    # flattened patch size feeding the embedding; 0 skips the embedding
    patch_dim: int = 0

    def __post_init__(self):
        for name in ("n_tokens", "model_dim", "n_heads", "n_layers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.mlp_ratio <= 0:
            raise ConfigError("mlp_ratio must be positive")
        if self.model_dim % self.n_heads:
            raise ConfigError(
                f"model_dim={self.model_dim} not divisible by n_heads={self.n_heads}"
            )


DEIT_S = ModelDims(197, 384, 6, 12, 4.0, patch_dim=3 * 16 * 16)
DEIT_T = ModelDims(197, 192, 3, 12, 4.0, patch_dim=3 * 16 * 16)


@dataclass
class FlopReport:
    stages: dict[str, int]
    ratio_vs_dense: float
    breakdown: dict[str, int] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(self.stages.values())

    def to_dict(self) -> dict:
        return {
            "conventions": dict(CONVENTIONS),
            "stages": dict(self.stages),
            "total": self.total,
            "ratio_vs_dense": float(f"{self.ratio_vs_dense:.9g}"),
            "breakdown": dict(self.breakdown),
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def dense_config(n: int) -> BspfConfig:
    return BspfConfig(chunk_size=n, keep_ratio=1.0)


def _attention_counts(n: int, d: int, config: BspfConfig, n_heads: int) -> tuple[dict, dict]:
    omega = config.chunk_size
    if n % omega:
        raise ConfigError(f"n_tokens={n} is not divisible by chunk_size={omega}")
    if d % n_heads:
        raise ConfigError(f"d={d} not divisible by n_heads={n_heads}")
    c = n // omega
    sq = omega * omega
    k = retained_count(config.keep_ratio, omega)
    h = n_heads

    off_blocks = c * (c - 1)
    diag_pruned = c if config.prune_diagonal else 0
    pruned_blocks = off_blocks + diag_pruned
    if config.shared_qk:
        computed_blocks = c * (c + 1) // 2
        scored_blocks = off_blocks // 2 + diag_pruned
    else:
        computed_blocks = c * c
        scored_blocks = pruned_blocks

    diag_kept = c * (k if config.prune_diagonal else sq)
    off_kept = off_blocks * k
    kept = diag_kept + off_kept

    matched_chunks = c if (pruned_blocks and omega >= 2) else 0
    log_term = max(1, math.ceil(math.log2(sq))) if sq > 1 else 1

    stages = {
        "qkv_projection": (2 if config.shared_qk else 3) * n * d * d * MAC_OPS,
        "logits": computed_blocks * sq * d * MAC_OPS,
        "score_conv": h * scored_blocks * 9 * sq * MAC_OPS,
        "topk": h * scored_blocks * sq * log_term * CMP_OPS,
        "matching": matched_chunks * ((sq + omega) * d * MAC_OPS + h * sq * CMP_OPS),
        "fusion": h * pruned_blocks * sq * (2 * CMP_OPS + MAC_OPS),
        "softmax": h * kept * SOFTMAX_OPS,
        "value_aggregation": kept * d * MAC_OPS,
        "mlp": 0,
    }
    breakdown = {
        "n_chunks": c,
        "computed_blocks": computed_blocks,
        "scored_blocks": scored_blocks,
        "pruned_blocks": pruned_blocks,
        "kept_entries": kept,
        "value_aggregation_diagonal": diag_kept * d * MAC_OPS,
        "value_aggregation_offdiagonal": off_kept * d * MAC_OPS,
    }
    return stages, breakdown


def flops_attention(n: int, d: int, config: BspfConfig, n_heads: int = 1) -> FlopReport:
    """Op counts for one attention layer over ``n`` tokens of width ``d``."""
    stages, breakdown = _attention_counts(n, d, config, n_heads)
    dense, _ = _attention_counts(n, d, dense_config(n), n_heads)
    return FlopReport(stages, sum(stages.values()) / sum(dense.values()), breakdown)


def padded_tokens(n: int, chunk_size: int) -> int:
    return -(-n // chunk_size) * chunk_size


def _vit_stages(dims: ModelDims, config: BspfConfig) -> tuple[dict, dict, list]:
    n, d = dims.n_tokens, dims.model_dim
    notes = []
    n_attn = padded_tokens(n, config.chunk_size)
    if n_attn != n:
        notes.append(
            f"attention charged on {n_attn} tokens ({n} padded to a multiple of "
            f"chunk_size={config.chunk_size})"
        )
    attn, breakdown = _attention_counts(n_attn, d, config, dims.n_heads)
    hidden = int(round(dims.mlp_ratio * d))
    per_layer = dict(attn)
    per_layer["output_projection"] = n * d * d * MAC_OPS
    per_layer["mlp"] = 2 * n * d * hidden * MAC_OPS
    stages = {key: val * dims.n_layers for key, val in per_layer.items()}
    if dims.patch_dim:
        stages["patch_embed"] = (n - 1) * dims.patch_dim * d * MAC_OPS
    notes.append("MLP and projections are charged at the full token count in every layer")
    return stages, breakdown, notes


def flops_vit(dims: ModelDims, config: BspfConfig | None = None) -> FlopReport:
    """Op counts for a full ViT encoder; ``config=None`` means dense attention."""
    dense_cfg = dense_config(dims.n_tokens)
    if config is None:
        config = dense_cfg
    stages, breakdown, notes = _vit_stages(dims, config)
    dense, _, _ = _vit_stages(dims, dense_cfg)
    return FlopReport(stages, sum(stages.values()) / sum(dense.values()), breakdown, notes)


def sparsity_report(stats, config: BspfConfig) -> tuple[str, dict]:
    """Human-readable and structured summary of one pipeline run."""
    data = {
        "keep_ratio": config.keep_ratio,
        "chunk_size": config.chunk_size,
        "shared_qk": config.shared_qk,
        "prune_diagonal": config.prune_diagonal,
        "retained_fraction": stats.retained_fraction,
        "kept_entries": stats.kept_entries,
        "pruned_entries": stats.pruned_entries,
        "fusion_events": stats.fusion_events,
        "mirror_mask_disagreement": stats.mirror_mask_disagreement,
        "flops": dict(stats.flops),
    }
    lines = [
        f"keep_ratio        {config.keep_ratio:.9g}",
        f"retained_fraction {stats.retained_fraction:.9g}",
        f"kept / pruned     {stats.kept_entries} / {stats.pruned_entries}",
        f"fusion_events     {stats.fusion_events}",
        f"mirror_disagree   {stats.mirror_mask_disagreement}",
        f"flops_total       {sum(stats.flops.values())}",
    ]
    return "\n".join(lines), data
