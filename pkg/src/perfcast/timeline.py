"""Closed-form 1F1B runtime and an independent event-driven simulator.

The closed form charges (M - 1 + S) pipeline slots at the slowest stage's
forward+backward time, plus the first stage's serialized gradient
synchronization and the slowest update step. The simulator replays the
actual 1F1B dependency structure so the two can be cross-checked: they
agree exactly for homogeneous stage times.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class StageTimes:
    """Per-stage phase durations in seconds. fwd/bwd include the sender-side
    point-to-point transfer; update is optimizer plus the stage's all-gather
    share. dp_allreduce holds each stage's gradient synchronization time
    (index 0 is the serialized first-stage sync); when omitted, only the
    first stage synchronizes."""

    fwd: tuple[float, ...]
    bwd: tuple[float, ...]
    update: tuple[float, ...] = ()
    first_stage_dp_allreduce: float = 0.0
    dp_allreduce: tuple[float, ...] = ()

    def __post_init__(self):
        s = len(self.fwd)
        if len(self.bwd) != s:
            raise ConfigError("fwd and bwd lists must have equal length")
        if not self.update:
            object.__setattr__(self, "update", (0.0,) * s)
        if not self.dp_allreduce:
            sync = (self.first_stage_dp_allreduce,) + (0.0,) * (s - 1)
            object.__setattr__(self, "dp_allreduce", sync)
        if len(self.update) != s or len(self.dp_allreduce) != s:
            raise ConfigError("update/dp_allreduce lists must have length S")
        for seq in (self.fwd, self.bwd, self.update, self.dp_allreduce):
            if any(t < 0 for t in seq):
                raise ConfigError("stage times must be non-negative")

    @property
    def stages(self) -> int:
        return len(self.fwd)


@dataclass(frozen=True)
class TraceEvent:
    stage: int
    micro_batch: int   # -1 for Sync/Update
    phase: str         # F | B | Sync | Update
    start: float
    end: float


@dataclass(frozen=True)
class ScheduleTrace:
    events: tuple[TraceEvent, ...]
    total: float

    def rows(self):
        for e in self.events:
            yield (e.stage, e.micro_batch, e.phase, e.start, e.end)

    def render(self) -> str:
        lines = ["stage  mb  phase   start        end"]
        for e in self.events:
            lines.append(f"{e.stage:>5}  {e.micro_batch:>2}  {e.phase:<6}"
                         f"{e.start:>12.6f} {e.end:>12.6f}")
        lines.append(f"total {self.total:.6f}")
        return "\n".join(lines)


def closed_form_runtime(M: int, S: int, max_fwd: float, max_bwd: float,
                        first_stage_sync: float, max_update: float) -> float:
    """(M - 1 + S) * (max_fwd + max_bwd) + first_stage_sync + max_update."""
    if M < 1 or S < 1:
        raise ConfigError("M and S must be >= 1")
    if min(max_fwd, max_bwd, first_stage_sync, max_update) < 0:
        raise ConfigError("times must be non-negative")
    return (M - 1 + S) * (max_fwd + max_bwd) + first_stage_sync + max_update


def _stage_order(stage: int, M: int, S: int) -> list[tuple[str, int]]:
    """Per-stage 1F1B operation order: (S - stage) warmup forwards, then
    alternate backward/forward, then drain the remaining backwards."""
    warmup = min(S - stage, M)
    ops = [("F", m) for m in range(warmup)]
    nf, nb = warmup, 0
    while nb < M:
        ops.append(("B", nb))
        nb += 1
        if nf < M:
            ops.append(("F", nf))
            nf += 1
    return ops


def simulate_1f1b(stage_times: StageTimes, M: int, S: int) -> ScheduleTrace:
    """Event-driven replay of the 1F1B schedule with overlapped data-parallel
    synchronization.

    F(m, s) waits on F(m, s-1); B(m, s) waits on B(m, s+1) and F(m, s); each
    stage executes its own operations serially in 1F1B order. Gradient
    synchronization of stage s starts at its last backward and runs off the
    stage's critical path except on stage 0, where it is serialized; each
    stage's update follows its own synchronization.
    """
    if M < 1 or S < 1:
        raise ConfigError("M and S must be >= 1")
    if stage_times.stages != S:
        raise ConfigError(f"stage_times has {stage_times.stages} stages, S={S}")

    orders = [_stage_order(s, M, S) for s in range(S)]
    pos = [0] * S            # next op index per stage
    clock = [0.0] * S        # stage-local time
    f_end: dict[tuple[int, int], float] = {}
    b_end: dict[tuple[int, int], float] = {}
    events: list[TraceEvent] = []

    remaining = sum(len(o) for o in orders)
    while remaining:
        progressed = False
        for s in range(S):
            while pos[s] < len(orders[s]):
                phase, m = orders[s][pos[s]]
                if phase == "F":
                    dep = f_end.get((m, s - 1), 0.0) if s > 0 else 0.0
                    if s > 0 and (m, s - 1) not in f_end:
                        break
                    start = max(clock[s], dep)
                    end = start + stage_times.fwd[s]
                    f_end[(m, s)] = end
                else:
                    if (m, s) not in f_end:
                        break
                    if s < S - 1 and (m, s + 1) not in b_end:
                        break
                    dep = b_end.get((m, s + 1), 0.0)
                    start = max(clock[s], f_end[(m, s)], dep)
                    end = start + stage_times.bwd[s]
                    b_end[(m, s)] = end
                events.append(TraceEvent(s, m, phase, start, end))
                clock[s] = end
                pos[s] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            raise ConfigError("1F1B schedule deadlocked (internal error)")

    total = 0.0
    for s in range(S):
        sync_start = clock[s]
        sync_end = sync_start + stage_times.dp_allreduce[s]
        if stage_times.dp_allreduce[s] > 0:
            events.append(TraceEvent(s, -1, "Sync", sync_start, sync_end))
        upd_end = sync_end + stage_times.update[s]
        if stage_times.update[s] > 0:
            events.append(TraceEvent(s, -1, "Update", sync_end, upd_end))
        total = max(total, upd_end)

    events.sort(key=lambda e: (e.start, e.stage, e.end))
    return ScheduleTrace(tuple(events), total)


def compare_formula_vs_sim(stage_times: StageTimes, M: int, S: int) -> dict:
    """Informational gap between the closed form and the simulator; the two
    coincide for homogeneous stage times."""
    formula = closed_form_runtime(
        M, S, max(stage_times.fwd), max(stage_times.bwd),
        stage_times.first_stage_dp_allreduce, max(stage_times.update))
    sim = simulate_1f1b(stage_times, M, S).total
    gap = 0.0 if sim == 0 else (formula - sim) / sim
    return {"formula": formula, "sim": sim, "gap": gap}


def check_causality(trace: ScheduleTrace) -> None:
    """Structural validation: per-stage events must not overlap and every
    forward/backward must start after its dependencies end."""
    f_end, b_end = {}, {}
    per_stage: dict[int, list[TraceEvent]] = {}
    for e in trace.events:
        per_stage.setdefault(e.stage, []).append(e)
        if e.phase == "F":
            f_end[(e.micro_batch, e.stage)] = e.end
        elif e.phase == "B":
            b_end[(e.micro_batch, e.stage)] = e.end
    for s, evs in per_stage.items():
        evs = sorted(evs, key=lambda e: e.start)
        for a, b in zip(evs, evs[1:]):
            if b.start < a.end - 1e-12:
                raise AssertionError(f"overlap on stage {s}: {a} vs {b}")
    for e in trace.events:
        if e.phase == "F" and e.stage > 0:
            if e.start < f_end[(e.micro_batch, e.stage - 1)] - 1e-12:
                raise AssertionError(f"forward causality violated: {e}")
        if e.phase == "B":
            if e.start < f_end[(e.micro_batch, e.stage)] - 1e-12:
                raise AssertionError(f"backward before forward: {e}")
            nxt = (e.micro_batch, e.stage + 1)
            if nxt in b_end and e.start < b_end[nxt] - 1e-12:
                raise AssertionError(f"backward causality violated: {e}")
