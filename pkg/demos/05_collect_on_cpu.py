"""Measure real operator latencies in CPU smoke mode and feed them back.

Uses the collector package to wall-clock-profile a few small operators,
then ingests the emitted CSV with the predictor's benchmark reader to show
the two packages meet at the file format. Needs the perfcast-collector
package installed (pip install -e ./collector). Run with:
python demos/05_collect_on_cpu.py
"""

from pathlib import Path

from perfcast.benchkit import aggregate_records, ingest_csv
from perfcast_collector import profile_operator, run_grid

print("== one operator, one shape ==")
for direction in ("fwd", "bwd"):
    lat = profile_operator("Linear1", (256, 256, 256), direction=direction)
    print(f"Linear1 {direction}: {lat:.1f} us (wall clock, middle-5 mean of 10)")

print("\n== a small grid, written to CSV ==")
grid = {
    "compute": {
        "v0": 512,
        "axes": {
            "mp": {"start": 1, "step": "x2", "end": 2},
            "b": {"start": 1, "step": "x0", "end": 1},
            "h": {"start": 4, "step": "x0", "end": 4},
            "l": {"start": 32, "step": "+32", "end": 64},
            "d": {"start": 64, "step": "+64", "end": 128},
        },
    },
}
out = Path("demo_out/collected.csv")
n = run_grid(grid, ["Linear1", "LayerNorm", "FusedSoftmax"], "cpu", out)
print(f"wrote {n} rows to {out}")

records = aggregate_records(ingest_csv(out))
print(f"predictor-side ingest: {len(records)} aggregated records, "
      f"hardware_id={records[0].hardware_id!r}")
for rec in records[:4]:
    print(f"  {rec.op.value:<14} {rec.direction:<4} {rec.feats!s:<20} "
          f"{rec.latency_us:>10.3f} us")
