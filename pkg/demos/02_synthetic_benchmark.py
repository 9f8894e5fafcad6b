"""Generate an operator benchmark dataset without touching a GPU.

Builds the compute and communication sampling grids, runs them through the
parametric hardware oracle, and writes the nine-column CSV the training
step consumes. Run with: python demos/02_synthetic_benchmark.py
"""

from pathlib import Path

from perfcast import AxisSpec, SynthHardwareModel, gen_compute_grid, synth_dataset
from perfcast.benchkit import compute_vectors, comm_vectors, gen_comm_grid
from perfcast.workload import OperatorKind

out = Path("demo_out")

# A stepped-efficiency device: kernels whose innermost dimension is not a
# multiple of the 64-wide tile run at 50% of peak instead of 95%.
hw = SynthHardwareModel(peak_flops=100e12, mem_bw=1e12, kernel_latency=5e-6,
                        tile=64, eff_low=0.5, eff_high=0.95)

axes = {
    "mp": AxisSpec.parse(1, "x2", 8),
    "b": AxisSpec.parse(2, "x0", 2),       # multiplicative step 0 pins an axis
    "h": AxisSpec.parse(8, "x2", 32),
    "l": AxisSpec.parse(256, "+256", 1024),
    "d": AxisSpec.parse(1024, "+1024", 4096),
}
points = gen_compute_grid(axes)
ops = [OperatorKind.LINEAR1, OperatorKind.QKT, OperatorKind.FUSED_SOFTMAX]
vectors = compute_vectors(ops, points, v0=50257)
print(f"{len(points)} grid points -> {len(vectors)} unique workload vectors")
# fewer vectors than points x ops x directions: operators ignore axes they
# do not depend on, and duplicates are dropped

pairs = gen_comm_grid({"entries": AxisSpec.parse(16384, "x1.3", 6e5),
                       "processes": AxisSpec.parse(2, "x2", 8)})
vectors += comm_vectors(OperatorKind.MP_ALL_REDUCE, pairs, gpus_per_node=4)

records = synth_dataset(vectors, hw, seed=42, out_path=out / "bench.csv")
print(f"wrote {len(records)} records to {out / 'bench.csv'}")

print("\nsample rows:")
for rec in records[:3] + records[-3:]:
    print(f"  {rec.op.value:<12} {rec.direction:<4} {rec.feats!s:<28} "
          f"{rec.latency_us:>12.3f} us")
