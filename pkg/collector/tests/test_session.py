import warnings

import pytest
import torch

from perfcast_collector.errors import CollectorError, OperatorUnavailable
from perfcast_collector.operators import (ARITY, UNSUPPORTED, build_backward,
                                          build_operator)
from perfcast_collector.session import (ProfileSession, aggregate_samples,
                                        profile_operator)


class FakeTimer:
    """Yields a scripted latency sequence; optionally fails on marked
    iterations to exercise the degraded path."""

    def __init__(self, values):
        self.values = list(values)
        self.i = 0

    def __call__(self, fn):
        fn()
        v = self.values[self.i % len(self.values)]
        self.i += 1
        if v is None:
            raise CollectorError("injected failure")
        return float(v)


class TestAggregation:
    def test_one_through_ten_gives_five(self):
        assert aggregate_samples(range(1, 11)) == 5.0

    def test_order_invariant(self):
        assert aggregate_samples([10, 1, 9, 2, 8, 3, 7, 4, 6, 5]) == 5.0

    def test_median_below_five(self):
        assert aggregate_samples([9.0, 1.0, 4.0]) == 4.0

    def test_empty_rejected(self):
        with pytest.raises(CollectorError):
            aggregate_samples([])


class TestProfileOperator:
    def test_scripted_samples_aggregate(self):
        timer = FakeTimer(range(1, 11))
        lat = profile_operator("LayerNorm", (2, 8, 16), timer=timer)
        assert lat == 5.0
        assert timer.i == 10  # measured iterations only use the timer

    def test_warmup_precedes_measurement(self):
        calls = []

        class CountingTimer(FakeTimer):
            def __call__(self, fn):
                calls.append("measure")
                return super().__call__(fn)

        session = ProfileSession("Glue", (1, 4, 8), timer=CountingTimer([2.0]))
        session.run()
        assert len(calls) == 10
        assert len(session.samples) == 10

    def test_partial_failures_degrade_with_warning(self):
        timer = FakeTimer([1, 2, 3, None, None, None, None, None, None, None])
        session = ProfileSession("Glue", (1, 4, 8), timer=timer)
        with pytest.warns(UserWarning, match="3 of 10"):
            lat = session.run()
        assert lat == 2.0  # median of the three surviving samples

    def test_total_failure_raises(self):
        session = ProfileSession("Glue", (1, 4, 8), timer=FakeTimer([None]))
        with pytest.raises(CollectorError):
            session.run()

    def test_wall_clock_smoke_mode(self):
        lat = profile_operator("Linear1", (32, 32, 32))
        assert lat >= 1.0  # quantized to the 1 us resolution floor

    def test_backward_direction_runs(self):
        lat = profile_operator("Softmax", (1, 2, 8, 8), direction="bwd")
        assert lat >= 1.0

    def test_bad_direction_rejected(self):
        with pytest.raises(CollectorError):
            ProfileSession("Glue", (1, 4, 8), direction="sideways")


class TestOperatorBuilders:
    SHAPES = {
        "Embedding": (12, 32, 16), "LayerNorm": (2, 8, 16),
        "RMSNorm": (2, 8, 16), "Linear1": (16, 16, 24), "RoPE": (1, 8, 2, 8),
        "QKT": (2, 8, 4, 8), "Fillmask": (1, 2, 8, 16), "Softmax": (1, 2, 8, 8),
        "FusedSoftmax": (2, 8, 8), "VMul": (2, 8, 8, 4),
        "FlashAttention": (1, 8, 2, 4), "Linear2": (16, 8, 16),
        "Linear3": (16, 16, 32), "Glue": (1, 4, 8), "Linear4": (16, 32, 16),
        "FinalLinear": (16, 16, 32), "ParallelCrossEntropy": (2, 8, 32),
    }

    @pytest.mark.parametrize("op", sorted(SHAPES))
    def test_forward_and_backward_execute(self, op):
        fwd = build_operator(op, self.SHAPES[op])
        out = fwd()
        assert isinstance(out, torch.Tensor)
        assert torch.isfinite(out).all()
        build_backward(op, self.SHAPES[op])()

    @pytest.mark.parametrize("op", sorted(UNSUPPORTED))
    def test_multiprocess_ops_unavailable(self, op):
        with pytest.raises(OperatorUnavailable):
            build_operator(op, (4, 4, 4))

    def test_unknown_op_rejected(self):
        with pytest.raises(CollectorError):
            build_operator("Linear9", (4, 4, 4))

    def test_wrong_arity_rejected(self):
        with pytest.raises(CollectorError):
            build_operator("Linear1", (4, 4, 4, 4))

    def test_every_op_has_an_arity(self):
        assert set(self.SHAPES) | UNSUPPORTED == set(ARITY)
