"""Grid execution: sweep operator shapes and emit benchmark CSV rows.

The output follows the exact nine-column schema the predictor ingests
(`op,direction,feat0,...,latency_us,hardware_id,replicate`); the grid
configuration uses the same YAML axis format as the predictor CLI. Those
two formats are the entire contract between the packages.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from pathlib import Path

import yaml

from .errors import CollectorError, OperatorUnavailable
from .operators import ARITY, UNSUPPORTED
from .session import ProfileSession

log = logging.getLogger("perfcast_collector")

CSV_HEADER = ("op", "direction", "feat0", "feat1", "feat2", "feat3",
              "latency_us", "hardware_id", "replicate")


def _axis_values(spec: dict) -> list[int]:
    for key in ("start", "step", "end"):
        if key not in spec:
            raise CollectorError(f"axis spec missing field '{key}': {spec}")
    start, step, end = spec["start"], spec["step"], spec["end"]
    mul = isinstance(step, str) and step.strip().lower()[:1] in ("x", "*")
    factor = float(str(step).strip().lstrip("x*+")) if isinstance(step, str) \
        else float(step)
    if mul and factor == 0:
        return [int(start)]
    out, v = [], float(start)
    while v <= float(end) + 1e-9:
        out.append(int(round(v)))
        v = v * factor if mul else v + factor
    if not out:
        raise CollectorError(f"axis enumerates no values: {spec}")
    return out


def grid_points(grid_cfg: dict) -> list[dict]:
    """Cartesian product of the compute axes of a grid config mapping."""
    axes = grid_cfg.get("compute", {}).get("axes")
    if not axes:
        raise CollectorError("grid config lacks compute.axes")
    names = list(axes)
    seqs = [_axis_values(axes[n]) for n in names]
    return [dict(zip(names, combo)) for combo in itertools.product(*seqs)]


def _align_vocab(v0: int, mp: int) -> int:
    return math.ceil(v0 / (128 * mp)) * (128 * mp)


def point_features(op: str, point: dict, v0: int):
    """Feature vector for one operator at one grid point; None when the
    point's divisibility constraints fail for this operator."""
    b, l, d, h, mp = (point[k] for k in ("b", "l", "d", "h", "mp"))
    if d % h or h % mp or (3 * d) % mp or (4 * d) % mp or d % mp:
        return None
    dh, hm = d // h, h // mp
    vm = _align_vocab(v0, mp) // mp
    table = {
        "Embedding": (b * l, vm, d),
        "LayerNorm": (b, l, d), "RMSNorm": (b, l, d),
        "Linear1": (b * l, d, 3 * d // mp),
        "RoPE": (b, l, hm, dh),
        "QKT": (b * hm, l, dh, l),
        "Fillmask": (b, hm, l, d),
        "Softmax": (b, hm, l, l),
        "FusedSoftmax": (b * hm, l, l),
        "VMul": (b * hm, l, l, dh),
        "FlashAttention": (b, l, hm, dh),
        "Linear2": (b * l, d // mp, d),
        "Linear3": (b * l, d, 4 * d // mp),
        "Glue": (b, l, 4 * d // mp),
        "Linear4": (b * l, 4 * d // mp, d),
        "FinalLinear": (b * l, d, vm),
        "ParallelCrossEntropy": (b, l, vm),
    }
    if op not in table:
        raise CollectorError(f"{op} is not a grid-profiled compute operator")
    return table[op]


def _existing_replicates(path: Path) -> dict:
    """Highest replicate id per (op, direction, feats) already in the file."""
    out: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is not None and tuple(header) != CSV_HEADER:
            raise CollectorError(f"{path}: existing file has a foreign header")
        for row in reader:
            if not row:
                continue
            key = (row[0], row[1], tuple(c for c in row[2:6] if c))
            out[key] = max(out.get(key, -1), int(row[8]))
    return out


def run_grid(grid_cfg, ops, device: str, out_path, *, directions=("fwd", "bwd"),
             replicates: int = 1, hardware_id: str | None = None,
             timer=None) -> int:
    """Profile every (op, grid point, direction, replicate) combination and
    write/append CSV rows. Per-point failures are logged and skipped; raises
    only when nothing could be profiled. Returns the number of rows written.
    """
    if isinstance(grid_cfg, (str, Path)):
        grid_cfg = yaml.safe_load(Path(grid_cfg).read_text())
    if hardware_id is None:
        # wall-clock smoke mode is flagged so training pipelines can tell
        # these rows from profiler-event measurements
        hardware_id = f"{device}-wallclock"
    for op in ops:
        if op not in ARITY:
            raise CollectorError(f"unknown operator {op!r}")
        if op in UNSUPPORTED:
            raise OperatorUnavailable(
                f"{op} needs a multi-process launcher; profile compute "
                "operators only")

    points = grid_points(grid_cfg)
    v0 = grid_cfg.get("compute", {}).get("v0", 50257)
    out_path = Path(out_path)
    append = out_path.exists()
    offsets = _existing_replicates(out_path) if append else {}

    rows, failures = [], 0
    seen: set = set()
    for op in ops:
        for point in points:
            feats = point_features(op, point, v0)
            if feats is None or (op, feats) in seen:
                continue
            seen.add((op, feats))
            for direction in directions:
                base = offsets.get((op, direction,
                                    tuple(str(f) for f in feats)), -1) + 1
                try:
                    for r in range(replicates):
                        session = ProfileSession(op, feats, direction, device,
                                                 timer=timer)
                        lat = session.run()
                        rows.append((op, direction, feats, lat, base + r))
                except CollectorError as exc:
                    failures += 1
                    log.warning("skipping %s/%s %s: %s", op, direction, feats, exc)

    if not rows:
        raise CollectorError(f"all {failures} profiled points failed")

    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "a" if append else "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh)
        if not append:
            w.writerow(CSV_HEADER)
        for op, direction, feats, lat, rep in rows:
            padded = list(feats) + [""] * (4 - len(feats))
            w.writerow([op, direction, *padded, f"{lat:.3f}", hardware_id, rep])
    return len(rows)
