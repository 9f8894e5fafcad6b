"""Profiling protocol: warmup, timed iterations, and sample aggregation.

One operator is profiled at a time per device; warmup always precedes the
contiguous measured iterations. Latencies are recorded at 1 microsecond
resolution. On a GPU the per-iteration time should come from profiler
kernel events (max kernel end minus min kernel start); in CPU smoke mode a
wall clock substitutes and the emitting code flags the hardware id
accordingly.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import CollectorError
from .operators import build_backward, build_operator

TIMER_RESOLUTION_US = 1.0


def aggregate_samples(samples) -> float:
    """Mean of the middle five of the sorted samples; plain median below
    five samples. Matches the training-side replicate aggregation rule."""
    vals = sorted(float(s) for s in samples)
    if not vals:
        raise CollectorError("no samples to aggregate")
    if len(vals) < 5:
        return float(np.median(vals))
    lo = (len(vals) - 5) // 2
    return sum(vals[lo:lo + 5]) / 5.0


def _wall_clock_us(fn) -> float:
    start = time.perf_counter()
    fn()
    end = time.perf_counter()
    # quantize to the 1 us recording resolution, keeping a positive floor
    return max(round((end - start) * 1e6 / TIMER_RESOLUTION_US)
               * TIMER_RESOLUTION_US, TIMER_RESOLUTION_US)


@dataclass
class ProfileSession:
    """One operator's measurement run.

    ``timer`` maps a zero-argument callable to one latency sample in
    microseconds; the default wall clock is the CPU smoke mode. Tests
    inject a fake timer to pin down the protocol."""

    op: str
    feats: tuple
    direction: str = "fwd"
    device: str = "cpu"
    warmup_iters: int = 10
    measure_iters: int = 10
    timer: object = None
    samples: list = field(default_factory=list)

    def __post_init__(self):
        if self.direction not in ("fwd", "bwd"):
            raise CollectorError(f"bad direction {self.direction!r}")
        if self.warmup_iters < 0 or self.measure_iters < 1:
            raise CollectorError("need warmup_iters >= 0, measure_iters >= 1")
        if self.timer is None:
            self.timer = _wall_clock_us

    def build(self):
        if self.direction == "bwd":
            return build_backward(self.op, self.feats, self.device)
        return build_operator(self.op, self.feats, self.device)

    def run(self) -> float:
        """Execute the protocol and return the aggregated latency in us."""
        fn = self.build()
        self.samples = []
        with torch.no_grad() if self.direction == "fwd" else torch.enable_grad():
            for _ in range(self.warmup_iters):
                fn()
            for _ in range(self.measure_iters):
                try:
                    self.samples.append(self.timer(fn))
                except CollectorError:
                    continue  # drop the failed iteration, keep measuring
        if not self.samples:
            raise CollectorError(f"{self.op}/{self.direction}: every measured "
                                 "iteration failed")
        if len(self.samples) < self.measure_iters:
            warnings.warn(f"{self.op}/{self.direction}: collected "
                          f"{len(self.samples)} of {self.measure_iters} samples; "
                          "falling back to degraded aggregation")
        return aggregate_samples(self.samples)


def profile_operator(op: str, feats, direction: str = "fwd",
                     device: str = "cpu", timer=None) -> float:
    """Aggregated latency (microseconds) of one operator invocation:
    10 warmup iterations, 10 measured, mean of the middle five."""
    session = ProfileSession(op, tuple(feats), direction, device, timer=timer)
    return session.run()
