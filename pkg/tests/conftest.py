import math

import numpy as np
import pytest

from perfcast.benchkit import SynthHardwareModel, synth_latency
from perfcast.configs import ClusterSpec, ModelConfig, ParallelLayout
from perfcast.regress import TrainedRegressor, TreeNode
from perfcast.workload import NA_OPS, OperatorKind


@pytest.fixture
def gpt20b():
    return ModelConfig(hidden_dim=6144, seq_len=2048, attention_heads=64,
                       num_encoders=44, vocab_size_raw=50257,
                       encoder_fwd_syncs=1, encoder_bwd_syncs=2,
                       fused_softmax=True, norm_kind="LayerNorm",
                       micro_batch=4, micro_batches_per_update=16)


@pytest.fixture
def llemma7b():
    return ModelConfig(hidden_dim=4096, seq_len=4096, attention_heads=32,
                       num_encoders=32, vocab_size_raw=50257,
                       encoder_fwd_syncs=2, encoder_bwd_syncs=2,
                       flash_attention=True, rope=True, norm_kind="RMSNorm",
                       micro_batch=4, micro_batches_per_update=8)


@pytest.fixture
def perlmutter():
    return ClusterSpec(nodes=32, gpus_per_node=4, hardware_id="perlmutter")


@pytest.fixture
def layout_448():
    return ParallelLayout(pp=4, mp=4, dp=8)


def constant_model(op, direction, value):
    """Single-leaf regressor predicting `value` microseconds everywhere."""
    leaf = TreeNode(np.array([-1]), np.array([0.0]), np.array([-1]),
                    np.array([-1]), np.array([float(value)]))
    return TrainedRegressor("forest", [leaf], op=op, direction=direction,
                            log_target=False)


def constant_bank_models(value):
    models = {}
    for op in OperatorKind:
        dirs = ("na",) if op in NA_OPS else ("fwd", "bwd")
        for d in dirs:
            models[(op, d)] = constant_model(op, d, value)
    return models


class OracleBank:
    """Bank double that answers with exact synthetic-oracle latencies."""

    def __init__(self, hw: SynthHardwareModel):
        self.hw = hw
        self.hardware_id = "oracle"

    def predict(self, vec):
        return synth_latency(vec, self.hw)

    def flags_extrapolation(self, vec):
        return False
