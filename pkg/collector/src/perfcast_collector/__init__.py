"""Micro-benchmark harness for per-operator latency collection.

Profiles transformer training operators in isolation on real hardware (or
in a CPU wall-clock smoke mode) and emits CSV files in the exact benchmark
schema consumed by the perfcast predictor. This package is deployable on a
cluster without perfcast itself; the CSV schema and the grid configuration
format are the only contracts between the two."""

from .errors import CollectorError, OperatorUnavailable
from .session import ProfileSession, aggregate_samples, profile_operator
from .runner import run_grid

__version__ = "0.1.0"
