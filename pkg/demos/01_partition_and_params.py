"""Where do the layers and parameters land under pipeline parallelism?

Walks a 20B-parameter GPT-style model through encoder partitioning and
per-stage parameter accounting, then shows what happens when a layout is
infeasible. Run with: python demos/01_partition_and_params.py
"""

from perfcast import ModelConfig, ParallelLayout, align_vocab
from perfcast.errors import InfeasiblePartition
from perfcast.partition import partition_encoders, stage_param_count

gpt20b = ModelConfig(hidden_dim=6144, seq_len=2048, attention_heads=64,
                     num_encoders=44, vocab_size_raw=50257, fused_softmax=True)

print("== encoder placement ==")
for pp in (2, 4, 8):
    part = partition_encoders(gpt20b.num_encoders, pp)
    print(f"pp={pp}: {list(part.encoders_per_stage)}  roles={list(part.roles)}")

# The first stage carries the embedding table and the last stage the
# output projection, so both get fewer encoder blocks than the middle.

print("\n== per-stage parameters, pp=4 mp=4 ==")
layout = ParallelLayout(pp=4, mp=4, dp=8)
part = partition_encoders(gpt20b.num_encoders, layout.pp)
v = align_vocab(gpt20b.vocab_size_raw, layout.mp)
print(f"vocab {gpt20b.vocab_size_raw} aligns to {v} at mp={layout.mp}")
total = 0
for i in range(layout.pp):
    c = stage_param_count(part, gpt20b, layout, i)
    total += c.param_count
    print(f"stage {i} ({part.roles[i]:<6}): {c.param_count:>15,} params/shard")
print(f"model total (x mp, vocab counted once): "
      f"{(total * layout.mp - v * gpt20b.hidden_dim):,}")

print("\n== infeasible layouts are rejected, not silently rounded ==")
try:
    partition_encoders(10, 8)
except InfeasiblePartition as exc:
    print(f"pp=8 with 10 encoders: {exc}")
