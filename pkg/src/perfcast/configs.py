"""Model, parallel-layout, and cluster configuration types.

Configs are plain frozen dataclasses. They can be constructed directly or
loaded from a YAML file whose keys match the field names (see
``configs/`` in the repository root for samples).
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .errors import ConfigError

NORM_KINDS = ("LayerNorm", "RMSNorm")
PRECISIONS = ("FP16", "BF16", "FP32")


@dataclass(frozen=True)
class ModelConfig:
    """Transformer architecture plus the training hyperparameters that
    affect per-operator workload shapes."""

    hidden_dim: int
    seq_len: int
    attention_heads: int
    num_encoders: int
    vocab_size_raw: int
    encoder_fwd_syncs: int = 1
    encoder_bwd_syncs: int = 2
    fused_softmax: bool = False
    flash_attention: bool = False
    rope: bool = False
    norm_kind: str = "LayerNorm"
    precision: str = "FP16"
    micro_batch: int = 4
    micro_batches_per_update: int = 16

    def __post_init__(self):
        for name in ("hidden_dim", "seq_len", "attention_heads", "num_encoders",
                     "vocab_size_raw", "micro_batch", "micro_batches_per_update"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.hidden_dim % self.attention_heads != 0:
            raise ConfigError("hidden_dim must be divisible by attention_heads")
        if self.encoder_fwd_syncs not in (1, 2) or self.encoder_bwd_syncs not in (1, 2):
            raise ConfigError("encoder syncs must be 1 or 2")
        if self.fused_softmax and self.flash_attention:
            raise ConfigError("fused_softmax and flash_attention are mutually exclusive")
        if self.norm_kind not in NORM_KINDS:
            raise ConfigError(f"norm_kind must be one of {NORM_KINDS}")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {PRECISIONS}")

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.attention_heads


@dataclass(frozen=True)
class ParallelLayout:
    """Degrees of the three parallelism axes: (pp, mp, dp)."""

    pp: int
    mp: int
    dp: int

    def __post_init__(self):
        if min(self.pp, self.mp, self.dp) < 1:
            raise ConfigError("pp, mp, dp must be positive integers")

    @property
    def world_size(self) -> int:
        return self.pp * self.mp * self.dp

    def validate_for(self, model: ModelConfig, cluster: "ClusterSpec | None" = None):
        """Check partitioning well-formedness against a model (and optionally
        that the cluster is large enough)."""
        if model.attention_heads % self.mp != 0:
            raise ConfigError(
                f"mp={self.mp} does not divide attention_heads={model.attention_heads}")
        if model.hidden_dim % self.mp != 0:
            raise ConfigError(
                f"mp={self.mp} does not divide hidden_dim={model.hidden_dim}")
        if cluster is not None and cluster.total_gpus < self.world_size:
            raise ConfigError(
                f"layout needs {self.world_size} GPUs, cluster has {cluster.total_gpus}")


@dataclass(frozen=True)
class ClusterSpec:
    """Target machine description. Bandwidths are informational only; the
    regressors carry the actual hardware behavior."""

    nodes: int
    gpus_per_node: int
    hardware_id: str = "unknown"
    intra_bw: float = 0.0
    inter_bw: float = 0.0

    def __post_init__(self):
        if self.nodes < 1 or self.gpus_per_node < 1:
            raise ConfigError("nodes and gpus_per_node must be positive")

    @property
    def total_gpus(self) -> int:
        return self.nodes * self.gpus_per_node

    def group_topology(self, processes: int) -> tuple[int, int]:
        """Map a communicator of `processes` ranks onto (nodes, gpus/node),
        packing ranks densely within nodes."""
        if processes < 1:
            raise ConfigError("processes must be positive")
        g = min(processes, self.gpus_per_node)
        n = -(-processes // self.gpus_per_node)
        return n, g


def _load_section(path, cls, section=None):
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if section is not None:
        if not isinstance(raw, dict) or section not in raw:
            raise ConfigError(f"{path}: missing section '{section}'")
        raw = raw[section]
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping of field names")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_model_config(path, section=None) -> ModelConfig:
    return _load_section(path, ModelConfig, section)


def load_layout(path, section=None) -> ParallelLayout:
    return _load_section(path, ParallelLayout, section)


def load_cluster(path, section=None) -> ClusterSpec:
    return _load_section(path, ClusterSpec, section)
