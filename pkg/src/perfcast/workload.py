"""Operator inventory and workload-vector extraction.

Every operator instance in a training step is described by a short feature
vector (3 or 4 non-negative integers) that a latency regressor consumes.
This module maps a (model, layout, cluster) triple to the exact multiset of
operator vectors executed by each pipeline stage.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .configs import ClusterSpec, ModelConfig, ParallelLayout
from .errors import ConfigError


class OperatorKind(enum.Enum):
    EMBEDDING = "Embedding"
    LAYER_NORM = "LayerNorm"
    RMS_NORM = "RMSNorm"
    LINEAR1 = "Linear1"
    ROPE = "RoPE"
    QKT = "QKT"
    FILLMASK = "Fillmask"
    SOFTMAX = "Softmax"
    FUSED_SOFTMAX = "FusedSoftmax"
    VMUL = "VMul"
    FLASH_ATTENTION = "FlashAttention"
    LINEAR2 = "Linear2"
    LINEAR3 = "Linear3"
    GLUE = "Glue"
    LINEAR4 = "Linear4"
    FINAL_LINEAR = "FinalLinear"
    PARALLEL_CROSS_ENTROPY = "ParallelCrossEntropy"
    MP_ALL_REDUCE = "MPAllReduce"
    DP_ALL_REDUCE = "DPAllReduce"
    DP_ALL_GATHER = "DPAllGather"
    PP_P2P = "PPP2P"
    OPTIMIZER = "Optimizer"

    def __str__(self):
        return self.value


# Feature-vector arity per operator.
ARITY = {
    OperatorKind.EMBEDDING: 3,
    OperatorKind.LAYER_NORM: 3,
    OperatorKind.RMS_NORM: 3,
    OperatorKind.LINEAR1: 3,
    OperatorKind.ROPE: 4,
    OperatorKind.QKT: 4,
    OperatorKind.FILLMASK: 4,
    OperatorKind.SOFTMAX: 4,
    OperatorKind.FUSED_SOFTMAX: 3,
    OperatorKind.VMUL: 4,
    OperatorKind.FLASH_ATTENTION: 4,
    OperatorKind.LINEAR2: 3,
    OperatorKind.LINEAR3: 3,
    OperatorKind.GLUE: 3,
    OperatorKind.LINEAR4: 3,
    OperatorKind.FINAL_LINEAR: 3,
    OperatorKind.PARALLEL_CROSS_ENTROPY: 3,
    OperatorKind.MP_ALL_REDUCE: 3,
    OperatorKind.DP_ALL_REDUCE: 3,
    OperatorKind.DP_ALL_GATHER: 3,
    OperatorKind.PP_P2P: 3,
    OperatorKind.OPTIMIZER: 3,
}

COMM_OPS = frozenset({
    OperatorKind.MP_ALL_REDUCE,
    OperatorKind.DP_ALL_REDUCE,
    OperatorKind.DP_ALL_GATHER,
    OperatorKind.PP_P2P,
})

# Operators whose direction is neither fwd nor bwd.
NA_OPS = COMM_OPS | {OperatorKind.OPTIMIZER}

COMPUTE_OPS = frozenset(op for op in OperatorKind if op not in COMM_OPS)

DIRECTIONS = ("fwd", "bwd", "na")


def op_from_name(name: str) -> OperatorKind:
    try:
        return OperatorKind(name)
    except ValueError:
        raise ConfigError(f"unknown operator {name!r}") from None


def align_vocab(v0: int, mp: int) -> int:
    """Round the raw vocabulary size up to a multiple of 128*mp."""
    if v0 < 1 or mp < 1:
        raise ConfigError("vocab size and mp must be positive")
    factor = 128 * mp
    return -(-v0 // factor) * factor


@dataclass(frozen=True)
class WorkloadVector:
    """One operator invocation keyed by its regressor feature vector."""

    op: OperatorKind
    direction: str
    feats: tuple[int, ...]

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"bad direction {self.direction!r}")
        if self.op in NA_OPS and self.direction != "na":
            raise ConfigError(f"{self.op} must have direction 'na'")
        if self.op not in NA_OPS and self.direction == "na":
            raise ConfigError(f"{self.op} needs direction fwd or bwd")
        if len(self.feats) != ARITY[self.op]:
            raise ConfigError(
                f"{self.op} expects {ARITY[self.op]} features, got {len(self.feats)}")
        if any(f < 1 for f in self.feats):
            raise ConfigError(f"{self.op} features must be positive: {self.feats}")


def _div(num: int, den: int, what: str) -> int:
    if num % den != 0:
        raise ConfigError(f"non-integral partition: {what} = {num}/{den}")
    return num // den


def raw_vector(op: OperatorKind, direction: str, *, b: int, l: int, d: int,
               h: int, mp: int, v0: int, nodes: int = 1, gpus_per_node: int = 1,
               entries: int | None = None, encoders: int = 1) -> WorkloadVector:
    """Build a workload vector from bare dimension values.

    Used both by :func:`workload_vector` (which derives the values from
    configs) and by the benchmark grid generators (which sweep them
    directly)."""
    if op in COMM_OPS:
        if op is OperatorKind.MP_ALL_REDUCE:
            ent = b * l * d
        elif op is OperatorKind.PP_P2P:
            ent = _div(b * l * d, mp, "b*l*d/mp")
        else:
            if entries is None:
                raise ConfigError(f"{op} requires an explicit entry count")
            ent = entries
        feats = (ent, nodes, gpus_per_node)
        return WorkloadVector(op, "na", feats)

    if op is OperatorKind.OPTIMIZER:
        return WorkloadVector(op, "na", (mp, d, max(1, encoders)))

    dh = _div(d, h, "d/h")
    hm = _div(h, mp, "h/mp")
    v = align_vocab(v0, mp)
    vm = _div(v, mp, "v/mp")

    table = {
        OperatorKind.EMBEDDING: (b * l, vm, d),
        OperatorKind.LAYER_NORM: (b, l, d),
        OperatorKind.RMS_NORM: (b, l, d),
        OperatorKind.LINEAR1: (b * l, d, _div(3 * d, mp, "3d/mp")),
        OperatorKind.ROPE: (b, l, hm, dh),
        OperatorKind.QKT: (b * hm, l, dh, l),
        OperatorKind.FILLMASK: (b, hm, l, d),
        OperatorKind.SOFTMAX: (b, hm, l, l),
        OperatorKind.FUSED_SOFTMAX: (b * hm, l, l),
        OperatorKind.VMUL: (b * hm, l, l, dh),
        OperatorKind.FLASH_ATTENTION: (b, l, hm, dh),
        OperatorKind.LINEAR2: (b * l, _div(d, mp, "d/mp"), d),
        OperatorKind.LINEAR3: (b * l, d, _div(4 * d, mp, "4d/mp")),
        OperatorKind.GLUE: (b, l, _div(4 * d, mp, "4d/mp")),
        OperatorKind.LINEAR4: (b * l, _div(4 * d, mp, "4d/mp"), d),
        OperatorKind.FINAL_LINEAR: (b * l, d, vm),
        OperatorKind.PARALLEL_CROSS_ENTROPY: (b, l, vm),
    }
    return WorkloadVector(op, direction, table[op])


def workload_vector(op: OperatorKind, direction: str, model: ModelConfig,
                    layout: ParallelLayout, cluster: ClusterSpec,
                    extra: int | None = None) -> WorkloadVector:
    """Feature vector for one operator under the given configuration.

    ``extra`` supplies |entries| for DPAllReduce/DPAllGather (the gradient
    or parameter element count), and the per-stage encoder count for
    Optimizer."""
    layout.validate_for(model, cluster)
    if op is OperatorKind.ROPE and not model.rope:
        raise ConfigError("RoPE requested but model does not enable rotary embeddings")
    if op is OperatorKind.FLASH_ATTENTION and not model.flash_attention:
        raise ConfigError("FlashAttention requested but model does not enable it")

    if op in COMM_OPS:
        group = {
            OperatorKind.MP_ALL_REDUCE: layout.mp,
            OperatorKind.DP_ALL_REDUCE: layout.dp,
            OperatorKind.DP_ALL_GATHER: layout.dp,
            OperatorKind.PP_P2P: 2,
        }[op]
        nodes, gpus = cluster.group_topology(group)
    else:
        nodes, gpus = 1, 1

    return raw_vector(
        op, direction,
        b=model.micro_batch, l=model.seq_len, d=model.hidden_dim,
        h=model.attention_heads, mp=layout.mp, v0=model.vocab_size_raw,
        nodes=nodes, gpus_per_node=gpus, entries=extra,
        encoders=extra if op is OperatorKind.OPTIMIZER and extra is not None
        else model.num_encoders)


def norm_op(model: ModelConfig) -> OperatorKind:
    return (OperatorKind.RMS_NORM if model.norm_kind == "RMSNorm"
            else OperatorKind.LAYER_NORM)


def attention_path(model: ModelConfig) -> tuple[OperatorKind, ...]:
    if model.flash_attention:
        return (OperatorKind.FLASH_ATTENTION,)
    if model.fused_softmax:
        return (OperatorKind.QKT, OperatorKind.FUSED_SOFTMAX, OperatorKind.VMUL)
    return (OperatorKind.QKT, OperatorKind.FILLMASK, OperatorKind.SOFTMAX,
            OperatorKind.VMUL)


def encoder_block_ops(model: ModelConfig, direction: str) -> list[tuple[OperatorKind, int]]:
    """Ordered (op, multiplicity) sequence of one transformer encoder block.

    The backward pass reuses the forward inventory with its own all-reduce
    sync count; Glue is a reshape marker carried through so a benchmark for
    it can be applied when one exists."""
    syncs = model.encoder_fwd_syncs if direction == "fwd" else model.encoder_bwd_syncs
    nrm = norm_op(model)
    ops: list[tuple[OperatorKind, int]] = [(nrm, 1), (OperatorKind.LINEAR1, 1)]
    if model.rope:
        ops.append((OperatorKind.ROPE, 1))
    ops.extend((op, 1) for op in attention_path(model))
    ops.append((OperatorKind.LINEAR2, 1))
    ops.append((OperatorKind.MP_ALL_REDUCE, syncs))
    ops.extend([(nrm, 1), (OperatorKind.LINEAR3, 1), (OperatorKind.GLUE, 1),
                (OperatorKind.LINEAR4, 1)])
    return ops


@dataclass(frozen=True)
class StageInventory:
    """Ordered operator instances executed by one pipeline stage.

    ``fwd_ops``/``bwd_ops`` are (vector, count) pairs; communication vectors
    carry direction 'na' but sit in the phase whose critical path they
    extend (sender-side P2P, per-encoder all-reduce syncs)."""

    stage_index: int
    role: str  # First | Middle | Last | Solo
    encoders: int
    fwd_ops: tuple[tuple[WorkloadVector, int], ...]
    bwd_ops: tuple[tuple[WorkloadVector, int], ...]

    def count(self, op: OperatorKind, phase: str = "fwd") -> int:
        ops = self.fwd_ops if phase == "fwd" else self.bwd_ops
        return sum(c for vec, c in ops if vec.op is op)

    def total(self, phase: str = "fwd") -> int:
        ops = self.fwd_ops if phase == "fwd" else self.bwd_ops
        return sum(c for _, c in ops)


def stage_inventory(model: ModelConfig, layout: ParallelLayout,
                    cluster: ClusterSpec, stage_index: int) -> StageInventory:
    """Full operator inventory for one pipeline stage (both directions)."""
    from .partition import partition_encoders  # local import avoids a cycle

    part = partition_encoders(model.num_encoders, layout.pp)
    if not 0 <= stage_index < layout.pp:
        raise ConfigError(f"stage_index {stage_index} out of range for pp={layout.pp}")
    role = part.roles[stage_index]
    n = part.encoders_per_stage[stage_index]

    def vec(op, direction="na", extra=None):
        return workload_vector(op, direction, model, layout, cluster, extra)

    def block(direction):
        out = []
        for op, mult in encoder_block_ops(model, direction):
            d = "na" if op in NA_OPS else direction
            out.append((vec(op, d), n * mult))
        return [item for item in out if item[1] > 0]

    fwd: list[tuple[WorkloadVector, int]] = []
    bwd: list[tuple[WorkloadVector, int]] = []

    if role in ("First", "Solo"):
        fwd.append((vec(OperatorKind.EMBEDDING, "fwd"), 1))
    fwd.extend(block("fwd"))
    if role in ("Last", "Solo"):
        fwd.append((vec(norm_op(model), "fwd"), 1))
        fwd.append((vec(OperatorKind.FINAL_LINEAR, "fwd"), 1))
        fwd.append((vec(OperatorKind.PARALLEL_CROSS_ENTROPY, "fwd"), 1))
    if role in ("First", "Middle"):
        fwd.append((vec(OperatorKind.PP_P2P), 1))  # sends activations onward

    if role in ("Last", "Solo"):
        bwd.append((vec(OperatorKind.PARALLEL_CROSS_ENTROPY, "bwd"), 1))
        bwd.append((vec(OperatorKind.FINAL_LINEAR, "bwd"), 1))
        bwd.append((vec(norm_op(model), "bwd"), 1))
    bwd.extend(block("bwd"))
    if role in ("First", "Solo"):
        bwd.append((vec(OperatorKind.EMBEDDING, "bwd"), 1))
    if role in ("Last", "Middle"):
        bwd.append((vec(OperatorKind.PP_P2P), 1))  # sends gradients backward

    return StageInventory(stage_index, role, n, tuple(fwd), tuple(bwd))
