"""Benchmark grids, the CSV record format, and a synthetic hardware oracle.

The oracle is a parametric latency generator (roofline compute term plus an
alpha-beta collective term) standing in for real profiling data so the whole
pipeline can be exercised and validated on a laptop CPU. It is a stand-in,
not a network simulator.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DuplicateError, RowError, SchemaError
from .workload import (ARITY, COMM_OPS, NA_OPS, OperatorKind, WorkloadVector,
                       op_from_name, raw_vector)

CSV_HEADER = ("op", "direction", "feat0", "feat1", "feat2", "feat3",
              "latency_us", "hardware_id", "replicate")

DTYPE_BYTES = 2  # half-precision element size assumed throughout the oracle


@dataclass(frozen=True)
class AxisSpec:
    """One sampled parameter axis: start, step, end (end inclusive).

    ``mode`` is "add" (arithmetic step) or "mul" (geometric step). A
    multiplicative factor of 0 pins the axis at ``start``.
    """

    start: float
    step: float
    end: float
    mode: str = "add"

    def __post_init__(self):
        if self.mode not in ("add", "mul"):
            raise ConfigError(f"bad axis mode {self.mode!r}")
        if self.start > self.end:
            raise ConfigError("axis start must not exceed end")
        if self.mode == "add" and self.step <= 0:
            raise ConfigError("additive step must be > 0")
        if self.mode == "mul" and self.step != 0 and self.step <= 1:
            raise ConfigError("multiplicative factor must be > 1 (or 0 to pin)")

    def values(self) -> list[int]:
        if self.mode == "mul" and self.step == 0:
            return [int(self.start)]
        out, v = [], self.start
        while v <= self.end + 1e-9:
            out.append(int(round(v)))
            v = v + self.step if self.mode == "add" else v * self.step
        if not out:
            raise ConfigError("axis enumerates no values")
        return out

    @classmethod
    def parse(cls, start, step, end) -> "AxisSpec":
        """Accept the textual step forms '+512' and 'x2' used in configs."""
        if isinstance(step, str):
            s = step.strip().lower()
            if s.startswith("x") or s.startswith("*"):
                return cls(float(start), float(s[1:]), float(end), "mul")
            return cls(float(start), float(s.lstrip("+")), float(end), "add")
        return cls(float(start), float(step), float(end), "add")


# Table-style default sampling ranges for compute kernels.
DEFAULT_COMPUTE_GRID: dict[str, AxisSpec] = {
    "mp": AxisSpec(1, 2, 16, "mul"),
    "b": AxisSpec(4, 2, 8, "mul"),
    "h": AxisSpec(16, 8, 80),
    "l": AxisSpec(1024, 512, 5120),
    # printed upper bound honored as-is; pass end=8192 to restore the
    # presumably intended power of two
    "d": AxisSpec(2048, 512, 8129),
}

# Default (entries, processes) ranges for communication kernels.
DEFAULT_COMM_GRIDS: dict[OperatorKind, dict[str, AxisSpec]] = {
    OperatorKind.MP_ALL_REDUCE: {
        "entries": AxisSpec(2.09e7, 6.55e4, 1.34e8),
        "processes": AxisSpec(2, 2, 8, "mul"),
    },
    OperatorKind.DP_ALL_REDUCE: {
        "entries": AxisSpec(1.34e8, 2.40e6, 1.20e9),
        "processes": AxisSpec(2, 2, 8, "mul"),
    },
    OperatorKind.DP_ALL_GATHER: {
        "entries": AxisSpec(1.34e8, 2.40e6, 6.01e8),
        "processes": AxisSpec(2, 2, 8, "mul"),
    },
    OperatorKind.PP_P2P: {
        "entries": AxisSpec(2.09e6, 6.55e4, 1.34e8),
        "processes": AxisSpec(2, 0, 2, "mul"),
    },
}


def gen_compute_grid(spec: dict[str, AxisSpec] | None = None) -> list[dict[str, int]]:
    """Cartesian product of the compute-kernel parameter axes."""
    spec = dict(DEFAULT_COMPUTE_GRID if spec is None else spec)
    names = list(spec)
    seqs = [spec[n].values() for n in names]
    return [dict(zip(names, combo)) for combo in itertools.product(*seqs)]


def gen_comm_grid(spec: dict[str, AxisSpec], stride: int = 1) -> list[tuple[int, int]]:
    """(entries, processes) pairs; ``stride`` subsamples the entries axis to
    bound dataset size."""
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    entries = spec["entries"].values()[::stride]
    procs = spec["processes"].values()
    return [(e, p) for p in procs for e in entries]


@dataclass(frozen=True)
class BenchRecord:
    """One measured (or synthesized) operator latency sample."""

    op: OperatorKind
    direction: str
    feats: tuple[int, ...]
    latency_us: float
    hardware_id: str
    replicate: int = 0

    def __post_init__(self):
        if self.latency_us <= 0:
            raise ConfigError("latency_us must be positive")
        if len(self.feats) != ARITY[self.op]:
            raise ConfigError(f"{self.op}: expected {ARITY[self.op]} features")
        if self.replicate < 0:
            raise ConfigError("replicate must be >= 0")

    @property
    def key(self):
        return (self.op, self.direction, self.feats, self.replicate)

    def vector(self) -> WorkloadVector:
        return WorkloadVector(self.op, self.direction, self.feats)


@dataclass(frozen=True)
class SynthHardwareModel:
    """Parametric device model behind the synthetic oracle.

    Compute latency is the roofline max of a flop term and a bandwidth term
    plus a fixed kernel launch floor; efficiency steps between eff_low and
    eff_high with the innermost dimension's remainder mod ``tile``,
    imitating the tiled-kernel discontinuities real GPUs show. Collectives
    follow an alpha-beta model with ring factors.
    """

    peak_flops: float = 100e12
    mem_bw: float = 1.0e12
    kernel_latency: float = 5e-6
    tile: int = 1
    eff_low: float = 0.9
    eff_high: float = 0.9
    alpha: float = 10e-6
    beta: float = 1 / 100e9
    inter_node_penalty: float = 2.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not (0 < self.eff_low <= self.eff_high <= 1):
            raise ConfigError("need 0 < eff_low <= eff_high <= 1")
        if min(self.peak_flops, self.mem_bw, self.tile) <= 0:
            raise ConfigError("rates and tile must be positive")
        if self.inter_node_penalty < 1 or self.noise_sigma < 0:
            raise ConfigError("inter_node_penalty >= 1 and noise_sigma >= 0 required")


def _prod(xs) -> int:
    out = 1
    for x in xs:
        out *= x
    return out


def _compute_cost(vec: WorkloadVector) -> tuple[float, float]:
    """(flops, bytes) for a forward invocation, standard GEMM/elementwise
    counts."""
    op, f = vec.op, vec.feats
    dt = DTYPE_BYTES
    gemm3 = {OperatorKind.LINEAR1, OperatorKind.LINEAR2, OperatorKind.LINEAR3,
             OperatorKind.LINEAR4, OperatorKind.FINAL_LINEAR}
    if op in gemm3:
        m, k, n = f
        return 2.0 * m * k * n, dt * (m * k + k * n + m * n)
    if op is OperatorKind.QKT:
        bh, l, dh, l2 = f
        return 2.0 * bh * l * dh * l2, dt * bh * (l * dh + dh * l2 + l * l2)
    if op is OperatorKind.VMUL:
        bh, l, l2, dh = f
        return 2.0 * bh * l * l2 * dh, dt * bh * (l * l2 + l2 * dh + l * dh)
    if op is OperatorKind.FLASH_ATTENTION:
        b, l, hm, dh = f
        return 4.0 * b * hm * l * l * dh, 4.0 * dt * b * l * hm * dh
    if op is OperatorKind.EMBEDDING:
        bl, _vm, d = f
        return 1.0 * bl * d, 2.0 * dt * bl * d
    if op is OperatorKind.OPTIMIZER:
        mp, d, n = f
        params = n * (12 * d * d + 9 * d) / mp
        return 6.0 * params, 16.0 * params  # fp32 states dominate traffic
    numel = float(_prod(f))
    flops_per = {
        OperatorKind.LAYER_NORM: 8.0, OperatorKind.RMS_NORM: 6.0,
        OperatorKind.ROPE: 6.0, OperatorKind.FILLMASK: 1.0,
        OperatorKind.SOFTMAX: 5.0, OperatorKind.FUSED_SOFTMAX: 5.0,
        OperatorKind.GLUE: 1.0, OperatorKind.PARALLEL_CROSS_ENTROPY: 5.0,
    }[op]
    return flops_per * numel, 2.0 * dt * numel


def _ring_factor(op: OperatorKind, p: int) -> float:
    if op is OperatorKind.PP_P2P:
        return 1.0
    if op is OperatorKind.DP_ALL_GATHER:
        return (p - 1) / p
    return 2.0 * (p - 1) / p  # all-reduce


def synth_latency(vec: WorkloadVector, hw: SynthHardwareModel,
                  seed: int | None = None,
                  rng: np.random.Generator | None = None) -> float:
    """Oracle latency in microseconds for one operator invocation."""
    if vec.op in COMM_OPS:
        entries, nodes, gpus = vec.feats
        p = nodes * gpus
        nbytes = entries * DTYPE_BYTES
        beta = hw.beta * (hw.inter_node_penalty if nodes > 1 else 1.0)
        sec = hw.kernel_latency + hw.alpha * math.ceil(math.log2(p))
        if p > 1:
            sec += beta * nbytes * _ring_factor(vec.op, p)
    else:
        flops, nbytes = _compute_cost(vec)
        if vec.direction == "bwd":
            flops, nbytes = 2 * flops, 2 * nbytes
        frac = (vec.feats[-1] % hw.tile) / hw.tile
        eff = hw.eff_high - (hw.eff_high - hw.eff_low) * frac
        sec = max(flops / (hw.peak_flops * eff), nbytes / hw.mem_bw) + hw.kernel_latency

    lat = sec * 1e6
    if hw.noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(seed)
        lat *= float(rng.lognormal(0.0, hw.noise_sigma))
    return lat


def comm_vectors(op: OperatorKind, pairs, gpus_per_node: int = 4) -> list[WorkloadVector]:
    """Turn (entries, processes) grid pairs into workload vectors, packing
    ranks densely onto nodes of the given width."""
    out = []
    for entries, p in pairs:
        g = min(p, gpus_per_node)
        n = -(-p // gpus_per_node)
        out.append(WorkloadVector(op, "na", (int(entries), n, g)))
    return out


def compute_vectors(ops, points, v0: int = 50257,
                    directions=("fwd", "bwd")) -> list[WorkloadVector]:
    """Workload vectors for compute ops over grid points. Points whose
    divisibility constraints fail (e.g. h not divisible by mp) are skipped,
    and vectors that coincide because an operator ignores a swept axis are
    emitted once."""
    out, seen = [], set()
    for op in ops:
        if op in NA_OPS:
            raise ConfigError(f"{op} is not a compute operator")
        for pt in points:
            for direction in directions:
                try:
                    vec = raw_vector(op, direction, v0=v0, **pt)
                except ConfigError:
                    break
                if vec not in seen:
                    seen.add(vec)
                    out.append(vec)
    return out


def optimizer_vectors(mp_values, d_values, encoder_counts) -> list[WorkloadVector]:
    return [WorkloadVector(OperatorKind.OPTIMIZER, "na", (mp, d, n))
            for mp in mp_values for d in d_values for n in encoder_counts]


def synth_dataset(vectors, hw: SynthHardwareModel, seed: int = 0,
                  replicates: int = 1, hardware_id: str = "synthetic",
                  out_path=None) -> list[BenchRecord]:
    """One record per (vector, replicate), each drawn from an rng keyed by
    (seed, vector index, replicate) so parallel and serial generation agree
    bit for bit. Latencies are quantized to the CSV's 3 decimal places."""
    records = []
    for i, vec in enumerate(vectors):
        for r in range(replicates):
            rng = np.random.default_rng((seed, i, r))
            lat = round(synth_latency(vec, hw, rng=rng), 3)
            records.append(BenchRecord(vec.op, vec.direction, vec.feats,
                                       max(lat, 0.001), hardware_id, r))
    if out_path is not None:
        write_csv(records, out_path)
    return records


def write_csv(records, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for rec in records:
            feats = list(rec.feats) + [""] * (4 - len(rec.feats))
            w.writerow([rec.op.value, rec.direction, *feats,
                        f"{rec.latency_us:.3f}", rec.hardware_id, rec.replicate])
    tmp.replace(path)


def ingest_csv(path) -> list[BenchRecord]:
    """Parse and validate a benchmark CSV. Raises SchemaError on a bad
    header, RowError (with line number) on a bad value, DuplicateError on a
    repeated (op, direction, feats, replicate) key."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if tuple(header) != CSV_HEADER:
            raise SchemaError(f"{path}: header {header} != {list(CSV_HEADER)}")
        records, seen = [], set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise RowError(lineno, f"expected {len(CSV_HEADER)} columns")
            try:
                op = op_from_name(row[0])
            except ConfigError:
                raise RowError(lineno, f"unknown op {row[0]!r}") from None
            direction = row[1]
            raw_feats = [c for c in row[2:6] if c != ""]
            try:
                feats = tuple(int(c) for c in raw_feats)
                latency = float(row[6])
                replicate = int(row[8])
                rec = BenchRecord(op, direction, feats, latency, row[7], replicate)
            except (ValueError, ConfigError) as exc:
                raise RowError(lineno, str(exc)) from None
            if rec.key in seen:
                raise DuplicateError(f"line {lineno}: duplicate sample {rec.key}")
            seen.add(rec.key)
            records.append(rec)
    return records


def aggregate_latency(samples, mode: str = "mediandmean5") -> float:
    """Collapse replicate latencies into one training target.

    mediandmean5: mean of the middle five of the sorted samples (falls back
    to the plain median below five samples). Also supports plain median and
    min (min matches the prediction target used against real multi-run
    measurements)."""
    vals = sorted(float(s) for s in samples)
    if not vals:
        raise ConfigError("no samples to aggregate")
    if mode == "min":
        return vals[0]
    if mode == "median":
        return float(np.median(vals))
    if mode != "mediandmean5":
        raise ConfigError(f"unknown aggregation mode {mode!r}")
    if len(vals) < 5:
        return float(np.median(vals))
    lo = (len(vals) - 5) // 2
    mid = vals[lo:lo + 5]
    return sum(mid) / 5.0


def aggregate_records(records, mode: str = "mediandmean5") -> list[BenchRecord]:
    """Group replicates of the same (op, direction, feats) and aggregate
    their latencies into one record each (replicate id 0)."""
    groups: dict = {}
    order = []
    for rec in records:
        key = (rec.op, rec.direction, rec.feats, rec.hardware_id)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(rec.latency_us)
    return [BenchRecord(op, direction, feats,
                        aggregate_latency(groups[(op, direction, feats, hwid)], mode),
                        hwid, 0)
            for (op, direction, feats, hwid) in order]
