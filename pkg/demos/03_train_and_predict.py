"""From benchmark CSV to a batch-time breakdown, entirely in-process.

Trains one gradient-boosted-tree regressor per (operator, direction) pair
from a synthetic dataset, assembles the bank, and predicts where a 1.3B
model spends its training batch. Run with:
python demos/03_train_and_predict.py  (takes a minute or two)
"""

from perfcast import (AxisSpec, ClusterSpec, ModelConfig, ParallelLayout,
                      RegressorBank, SynthHardwareModel, predict_batch_time)
from perfcast.benchkit import (comm_vectors, compute_vectors, gen_comm_grid,
                               gen_compute_grid, optimizer_vectors,
                               synth_dataset)
from perfcast.regress import fit_gbt
from perfcast.workload import COMM_OPS, COMPUTE_OPS, NA_OPS, OperatorKind

hw = SynthHardwareModel()

axes = {
    "mp": AxisSpec.parse(1, "x2", 4),
    "b": AxisSpec.parse(2, "x0", 2),
    "h": AxisSpec.parse(8, "x2", 32),
    "l": AxisSpec.parse(256, "+256", 1024),
    "d": AxisSpec.parse(512, "+512", 2560),
}
vectors = compute_vectors(sorted(COMPUTE_OPS - NA_OPS, key=lambda o: o.value),
                          gen_compute_grid(axes), v0=50257)
for op in sorted(COMM_OPS, key=lambda o: o.value):
    pairs = gen_comm_grid({"entries": AxisSpec.parse(1e5, "x1.4", 5e7),
                           "processes": AxisSpec.parse(2, "x2", 8)})
    vectors += comm_vectors(op, pairs, gpus_per_node=4)
vectors += optimizer_vectors([1, 2, 4], [512, 1024, 2048, 2560], range(1, 13))
records = synth_dataset(vectors, hw, seed=7)
print(f"synthesized {len(records)} benchmark records")

groups: dict = {}
for rec in records:
    groups.setdefault((rec.op, rec.direction), []).append((rec.feats, rec.latency_us))

models = {}
for (op, direction), samples in sorted(groups.items(),
                                       key=lambda kv: (kv[0][0].value, kv[0][1])):
    models[(op, direction)] = fit_gbt(samples, n_estimators=200,
                                      learning_rate=0.15, max_depth=4,
                                      op=op, direction=direction)
print(f"fitted {len(models)} regressors")
bank = RegressorBank(models, hardware_id="synthetic")

model = ModelConfig(hidden_dim=2048, seq_len=1024, attention_heads=16,
                    num_encoders=24, vocab_size_raw=50257, fused_softmax=True,
                    micro_batch=2, micro_batches_per_update=16)
layout = ParallelLayout(pp=2, mp=2, dp=4)
cluster = ClusterSpec(nodes=4, gpus_per_node=4, hardware_id="synthetic")

b = predict_batch_time(model, layout, cluster, bank)
print(f"\npredicted batch time: {b.overall:.4f} s")
print(f"{'component':<28} {'seconds':>12} {'share':>8}")
for name in b.COMPONENTS:
    print(f"{name:<28} {getattr(b, name):>12.6f} {b.proportion(name):>8.2%}")
print("\nphase shares:", {k: round(v, 4) for k, v in b.phase_proportions().items()})
for w in b.warnings:
    print(f"warning: {w}")
