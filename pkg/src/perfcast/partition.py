"""Pipeline-stage encoder allocation and per-stage parameter counts.

All arithmetic is exact integer arithmetic; the counts reach 1e9 and feed
communication-size features downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

from .configs import ModelConfig, ParallelLayout
from .errors import InfeasiblePartition
from .workload import align_vocab


@dataclass(frozen=True)
class StagePartition:
    encoders_per_stage: tuple[int, ...]
    roles: tuple[str, ...]

    @property
    def pp(self) -> int:
        return len(self.encoders_per_stage)


@dataclass(frozen=True)
class StageParamCount:
    stage_index: int
    param_count: int


def partition_encoders(num_encoders: int, pp: int) -> StagePartition:
    """Balance encoder blocks across pipeline stages.

    The first stage additionally hosts the embedding and pre-transformer
    blocks and the last stage the post-transformer, norm, and parallel
    linear blocks, hence the +5 block offset and the -2/-3 corrections.

    Raises InfeasiblePartition when a stage count would go negative or when
    the first/middle/last formulas fail to cover num_encoders exactly (the
    balanced split presumes (num_encoders + 5) mod pp <= 1).
    """
    if pp < 1 or num_encoders < 1:
        raise InfeasiblePartition(f"need pp >= 1 and num_encoders >= 1, "
                                  f"got pp={pp}, num_encoders={num_encoders}")
    if pp == 1:
        return StagePartition((num_encoders,), ("Solo",))

    total = num_encoders + 5
    first = -(-total // pp) - 2
    middle = total // pp
    last = total // pp - 3
    counts = (first,) + (middle,) * (pp - 2) + (last,)
    if min(counts) < 0:
        raise InfeasiblePartition(
            f"num_encoders={num_encoders} too small for pp={pp}: stage counts {counts}")
    if sum(counts) != num_encoders:
        raise InfeasiblePartition(
            f"balanced split does not cover num_encoders={num_encoders} with pp={pp} "
            f"(stage counts {counts} sum to {sum(counts)})")
    roles = ("First",) + ("Middle",) * (pp - 2) + ("Last",)
    return StagePartition(counts, roles)


def encoder_param_count(d: int, mp: int) -> int:
    """Scalar parameters of one encoder block held by one MP shard:
    4d + 8d(d+1)/mp + d(4d+1)/mp."""
    if d < 1 or mp < 1:
        raise InfeasiblePartition("d and mp must be positive")
    attn, mlp = 8 * d * (d + 1), d * (4 * d + 1)
    if attn % mp or mlp % mp:
        raise InfeasiblePartition(f"mp={mp} does not evenly shard encoder "
                                  f"parameters at d={d}")
    return 4 * d + attn // mp + mlp // mp


def table_shape_param_count(d: int, mp: int) -> int:
    """Brute-force sum of per-operator parameter-shape products for one
    encoder block. Serves as an independent cross-check of
    encoder_param_count; the two coincide exactly at mp=1 and differ by
    2d(1 - 1/mp) at mp > 1 because the Linear2/Linear4 biases stay
    unpartitioned."""
    shapes = [
        (d,), (d,),                    # pre-attention norm
        (d, 3 * d // mp), (3 * d // mp,),   # qkv projection
        (d // mp, d), (d,),            # attention output projection
        (d,), (d,),                    # pre-mlp norm
        (d, 4 * d // mp), (4 * d // mp,),   # mlp expansion
        (4 * d // mp, d), (d,),        # mlp contraction
    ]
    total = 0
    for shape in shapes:
        n = 1
        for dim in shape:
            n *= dim
        total += n
    return total


def stage_param_count(partition: StagePartition, model: ModelConfig,
                      layout: ParallelLayout, stage_index: int) -> StageParamCount:
    """Parameters held by one MP shard of the given stage. First/last stages
    add the (aligned) vocabulary projection; the last stage also holds the
    trailing norm. A solo stage ties the embedding and output projection,
    counting the vocabulary matrix once."""
    if not 0 <= stage_index < partition.pp:
        raise InfeasiblePartition(f"stage_index {stage_index} out of range")
    d, mp = model.hidden_dim, layout.mp
    v = align_vocab(model.vocab_size_raw, mp)
    if (v * d) % mp:
        raise InfeasiblePartition(f"mp={mp} does not shard the vocab projection")
    vocab_shard = v * d // mp
    enc = encoder_param_count(d, mp)
    n = partition.encoders_per_stage[stage_index]
    role = partition.roles[stage_index]

    if role == "First":
        count = vocab_shard + n * enc
    elif role == "Middle":
        count = n * enc
    elif role == "Last":
        count = n * enc + 2 * d + vocab_shard
    else:  # Solo
        count = vocab_shard + n * enc + 2 * d
    return StageParamCount(stage_index, count)
