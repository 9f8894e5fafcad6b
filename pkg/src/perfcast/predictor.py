"""End-to-end batch-time prediction: compose per-operator regressor
predictions into per-stage times, apply the pipeline runtime model, and
emit a per-component breakdown and layout sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .configs import ClusterSpec, ModelConfig, ParallelLayout
from .errors import MissingRegressor, PerfcastError
from .partition import partition_encoders, stage_param_count
from .regress import TrainedRegressor, load_model, predict_latency, save_model
from .timeline import StageTimes, closed_form_runtime, simulate_1f1b
from .workload import (NA_OPS, OperatorKind, WorkloadVector, encoder_block_ops,
                       stage_inventory, workload_vector)

US = 1e-6  # regressors emit microseconds; stage times are seconds

# Reshape-only marker; costs nothing unless a regressor was trained for it.
_OPTIONAL_OPS = frozenset({OperatorKind.GLUE})


@dataclass
class RegressorBank:
    """Map from (operator, direction) to its fitted regressor."""

    models: dict[tuple[OperatorKind, str], TrainedRegressor]
    hardware_id: str = "unknown"

    def get(self, op: OperatorKind, direction: str) -> TrainedRegressor | None:
        model = self.models.get((op, direction))
        if model is None:
            if op in _OPTIONAL_OPS:
                return None
            raise MissingRegressor(f"{op.value}/{direction}")
        return model

    def predict(self, vec: WorkloadVector) -> float:
        """Latency in microseconds; optional ops without a model cost 0."""
        model = self.get(vec.op, vec.direction)
        return 0.0 if model is None else predict_latency(model, vec)

    def flags_extrapolation(self, vec: WorkloadVector) -> bool:
        model = self.models.get((vec.op, vec.direction))
        return model is not None and model.is_extrapolation(vec.feats)

    def save(self, out_dir):
        out_dir = Path(out_dir)
        for (op, direction), model in sorted(
                self.models.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
            save_model(model, out_dir / f"{op.value}_{direction}.model")

    @classmethod
    def load(cls, bank_dir, hardware_id: str = "unknown") -> "RegressorBank":
        bank_dir = Path(bank_dir)
        models = {}
        for path in sorted(bank_dir.glob("*.model")):
            m = load_model(path)
            if m.op is None or m.direction is None:
                raise PerfcastError(f"{path}: model file lacks op/direction tags")
            models[(m.op, m.direction)] = m
        return cls(models, hardware_id)


@dataclass
class _StageEval:
    fwd: float
    bwd: float
    update: float
    sync: float
    mp_allreduce: float
    pp_p2p: float
    allgather: float


@dataclass(frozen=True)
class TimelineBreakdown:
    """Predicted per-component times (seconds) and their share of overall.

    encoder_fwd/encoder_bwd are the cost of a single encoder block;
    mp_allreduce and pp_p2p are their totals along the pipeline critical
    path. Only the pipeline compute phase, the first-stage synchronization,
    and the update phase are mutually exclusive; the other components are
    contained within them, so proportions exceed 1.0 in sum by design."""

    micro_batches: int
    stages: int
    encoder_fwd: float
    encoder_bwd: float
    stage_fwd_max: float
    stage_bwd_max: float
    dp_allreduce_first_stage: float
    dp_allgather_max_update: float
    max_update: float
    mp_allreduce: float
    pp_p2p: float
    overall: float
    warnings: tuple[str, ...] = ()

    COMPONENTS = ("encoder_fwd", "encoder_bwd", "stage_fwd_max", "stage_bwd_max",
                  "dp_allreduce_first_stage", "dp_allgather_max_update",
                  "max_update", "mp_allreduce", "pp_p2p", "overall")

    def proportion(self, component: str) -> float:
        """Share of overall. Stage maxima count once per pipeline slot and a
        single encoder block once per micro-batch; the totals (mp_allreduce,
        pp_p2p, sync, update, allgather) are used as-is."""
        if self.overall == 0:
            return 0.0
        value = getattr(self, component)
        if component.startswith("stage_"):
            value *= self.micro_batches - 1 + self.stages
        elif component.startswith("encoder_"):
            value *= self.micro_batches
        return value / self.overall

    def phase_proportions(self) -> dict[str, float]:
        """The three mutually exclusive phases; sums to 1.0 when overall > 0."""
        if self.overall == 0:
            return {"pipeline": 0.0, "first_stage_sync": 0.0, "update": 0.0}
        pipeline = (self.micro_batches - 1 + self.stages) * \
            (self.stage_fwd_max + self.stage_bwd_max)
        return {"pipeline": pipeline / self.overall,
                "first_stage_sync": self.dp_allreduce_first_stage / self.overall,
                "update": self.max_update / self.overall}


def _eval_stage(model, layout, cluster, bank, part, stage_index, warnings):
    inv = stage_inventory(model, layout, cluster, stage_index)

    def tally(ops):
        total = mp_ar = p2p = 0.0
        for vec, count in ops:
            lat = bank.predict(vec) * count * US
            total += lat
            if vec.op is OperatorKind.MP_ALL_REDUCE:
                mp_ar += lat
            elif vec.op is OperatorKind.PP_P2P:
                p2p += lat
            if bank.flags_extrapolation(vec):
                warnings.add(f"extrapolation: {vec.op.value}/{vec.direction}")
        return total, mp_ar, p2p

    fwd, mp_f, p2p_f = tally(inv.fwd_ops)
    bwd, mp_b, p2p_b = tally(inv.bwd_ops)

    params = stage_param_count(part, model, layout, stage_index).param_count
    opt_vec = workload_vector(OperatorKind.OPTIMIZER, "na", model, layout,
                              cluster, extra=max(1, inv.encoders))
    update = bank.predict(opt_vec) * US
    allgather = sync = 0.0
    if layout.dp > 1:
        ag_entries = -(-params // layout.dp)
        ag_vec = workload_vector(OperatorKind.DP_ALL_GATHER, "na", model, layout,
                                 cluster, extra=ag_entries)
        ar_vec = workload_vector(OperatorKind.DP_ALL_REDUCE, "na", model, layout,
                                 cluster, extra=params)
        allgather = bank.predict(ag_vec) * US
        sync = bank.predict(ar_vec) * US
        for vec in (ag_vec, ar_vec):
            if bank.flags_extrapolation(vec):
                warnings.add(f"extrapolation: {vec.op.value}/{vec.direction}")
    return _StageEval(fwd, bwd, update + allgather, sync, mp_f + mp_b,
                      p2p_f + p2p_b, allgather)


def _evaluate(model: ModelConfig, layout: ParallelLayout, cluster: ClusterSpec,
              bank: RegressorBank):
    layout.validate_for(model, cluster)
    part = partition_encoders(model.num_encoders, layout.pp)
    warnings: set[str] = set()
    stages = [_eval_stage(model, layout, cluster, bank, part, s, warnings)
              for s in range(layout.pp)]
    return stages, sorted(warnings)


def stage_times(model: ModelConfig, layout: ParallelLayout, cluster: ClusterSpec,
                bank: RegressorBank) -> StageTimes:
    """Per-stage fwd/bwd/update/sync durations in seconds, sender-side P2P
    and per-encoder MP syncs included."""
    stages, _ = _evaluate(model, layout, cluster, bank)
    return StageTimes(
        fwd=tuple(s.fwd for s in stages),
        bwd=tuple(s.bwd for s in stages),
        update=tuple(s.update for s in stages),
        first_stage_dp_allreduce=stages[0].sync,
        dp_allreduce=tuple(s.sync for s in stages))


def predict_batch_time(model: ModelConfig, layout: ParallelLayout,
                       cluster: ClusterSpec, bank: RegressorBank) -> TimelineBreakdown:
    """Predicted time of one training batch (one parameter update)."""
    stages, warnings = _evaluate(model, layout, cluster, bank)
    M = model.micro_batches_per_update
    S = layout.pp

    def block_cost(direction):
        total = 0.0
        for op, mult in encoder_block_ops(model, direction):
            d = "na" if op in NA_OPS else direction
            vec = workload_vector(op, d, model, layout, cluster)
            total += bank.predict(vec) * mult * US
        return total

    fwd_max = max(s.fwd for s in stages)
    bwd_max = max(s.bwd for s in stages)
    max_update = max(s.update for s in stages)
    arg_update = max(range(S), key=lambda i: (stages[i].update, -i))
    overall = closed_form_runtime(M, S, fwd_max, bwd_max, stages[0].sync,
                                  max_update)
    slots = M - 1 + S
    return TimelineBreakdown(
        micro_batches=M, stages=S,
        encoder_fwd=block_cost("fwd"),
        encoder_bwd=block_cost("bwd"),
        stage_fwd_max=fwd_max,
        stage_bwd_max=bwd_max,
        dp_allreduce_first_stage=stages[0].sync,
        dp_allgather_max_update=stages[arg_update].allgather,
        max_update=max_update,
        mp_allreduce=slots * max(s.mp_allreduce for s in stages),
        pp_p2p=slots * max(s.pp_p2p for s in stages),
        overall=overall,
        warnings=tuple(warnings))


def validate_against_sim(model: ModelConfig, layout: ParallelLayout,
                         cluster: ClusterSpec, bank: RegressorBank) -> dict:
    """Run the event simulator on the same predicted stage times and report
    the relative gap to the closed form."""
    st = stage_times(model, layout, cluster, bank)
    breakdown = predict_batch_time(model, layout, cluster, bank)
    sim = simulate_1f1b(st, model.micro_batches_per_update, layout.pp).total
    gap = 0.0 if sim == 0 else (breakdown.overall - sim) / sim
    return {"formula": breakdown.overall, "sim": sim, "gap": gap}


@dataclass(frozen=True)
class SweepRow:
    label: str
    layout: ParallelLayout
    breakdown: TimelineBreakdown | None
    error: str | None = None


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[SweepRow, ...]

    def to_text(self) -> str:
        lines = [f"{'model':<16} {'layout':<12} {'overall_s':>12}  notes"]
        for r in self.rows:
            layout = f"{r.layout.pp}-{r.layout.mp}-{r.layout.dp}"
            if r.breakdown is None:
                lines.append(f"{r.label:<16} {layout:<12} {'-':>12}  {r.error}")
            else:
                notes = ";".join(r.breakdown.warnings)
                lines.append(f"{r.label:<16} {layout:<12} "
                             f"{r.breakdown.overall:>12.6g}  {notes}")
        return "\n".join(lines)

    def to_csv_rows(self):
        header = ["model", "layout", "overall_s", "encoder_fwd_s", "encoder_bwd_s",
                  "stage_fwd_max_s", "stage_bwd_max_s", "dp_allreduce_first_stage_s",
                  "dp_allgather_max_update_s", "max_update_s", "mp_allreduce_s",
                  "pp_p2p_s", "warnings"]
        yield header
        for r in self.rows:
            layout = f"{r.layout.pp}-{r.layout.mp}-{r.layout.dp}"
            if r.breakdown is None:
                yield [r.label, layout] + [""] * 10 + [f"error: {r.error}"]
            else:
                b = r.breakdown
                yield [r.label, layout,
                       repr(b.overall), repr(b.encoder_fwd), repr(b.encoder_bwd),
                       repr(b.stage_fwd_max), repr(b.stage_bwd_max),
                       repr(b.dp_allreduce_first_stage),
                       repr(b.dp_allgather_max_update), repr(b.max_update),
                       repr(b.mp_allreduce), repr(b.pp_p2p),
                       ";".join(b.warnings)]


def sweep(models, layouts, clusters, bank: RegressorBank) -> SweepReport:
    """Evaluate the cross-product of configurations. Infeasible rows are
    reported with their reason instead of being dropped."""
    models = list(models)
    layouts = list(layouts)
    clusters = list(clusters)
    if not models or not layouts or not clusters:
        raise PerfcastError("sweep requires non-empty model/layout/cluster lists")

    rows = []
    for i, entry in enumerate(models):
        label, model = entry if isinstance(entry, tuple) else (f"model{i}", entry)
        for layout in layouts:
            for cluster in clusters:
                try:
                    b = predict_batch_time(model, layout, cluster, bank)
                    rows.append(SweepRow(label, layout, b))
                except PerfcastError as exc:
                    rows.append(SweepRow(label, layout, None,
                                         f"{type(exc).__name__}: {exc}"))
    ok = sorted((r for r in rows if r.breakdown is not None),
                key=lambda r: (r.breakdown.overall, r.label,
                               (r.layout.pp, r.layout.mp, r.layout.dp)))
    bad = sorted((r for r in rows if r.breakdown is None),
                 key=lambda r: (r.label, (r.layout.pp, r.layout.mp, r.layout.dp)))
    return SweepReport(tuple(ok) + tuple(bad))
