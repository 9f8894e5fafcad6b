"""Constructing transformer operators in isolation from feature vectors.

Each operator is returned as a zero-argument callable over pre-allocated
synthetic tensors, so a timing loop measures only the operator itself.
Tensor shapes follow the same feature-vector conventions the predictor's
benchmark CSVs use; the mapping is reproduced here so the harness can run
on a cluster node without the predictor installed.
"""

from __future__ import annotations

import torch

from .errors import CollectorError, OperatorUnavailable

# feature-vector arity per operator (part of the CSV contract)
ARITY = {
    "Embedding": 3, "LayerNorm": 3, "RMSNorm": 3, "Linear1": 3, "RoPE": 4,
    "QKT": 4, "Fillmask": 4, "Softmax": 4, "FusedSoftmax": 3, "VMul": 4,
    "FlashAttention": 4, "Linear2": 3, "Linear3": 3, "Glue": 3, "Linear4": 3,
    "FinalLinear": 3, "ParallelCrossEntropy": 3,
    "MPAllReduce": 3, "DPAllReduce": 3, "DPAllGather": 3, "PPP2P": 3,
    "Optimizer": 3,
}

GEMM_OPS = frozenset({"Linear1", "Linear2", "Linear3", "Linear4", "FinalLinear"})

# need a multi-process launcher or full training state; not profilable in a
# single-process harness
UNSUPPORTED = frozenset({"MPAllReduce", "DPAllReduce", "DPAllGather",
                         "PPP2P", "Optimizer"})

DTYPE = torch.float32  # smoke-mode default; half precision needs a GPU


def _rand(shape, device):
    g = torch.Generator(device="cpu").manual_seed(0)
    return torch.randn(*shape, generator=g, dtype=DTYPE).to(device)


def _build(op: str, feats, device):
    """(callable, differentiable input tensors) for one invocation."""
    dev = torch.device(device)

    if op in GEMM_OPS:
        m, k, n = feats
        a, b = _rand((m, k), dev), _rand((k, n), dev)
        return lambda: a @ b, [a, b]

    if op == "Embedding":
        bl, vm, d = feats
        table = _rand((vm, d), dev)
        idx = torch.arange(bl, device=dev) % vm
        return lambda: torch.nn.functional.embedding(idx, table), [table]

    if op == "LayerNorm":
        b, l, d = feats
        x = _rand((b, l, d), dev)
        return lambda: torch.nn.functional.layer_norm(x, (d,)), [x]

    if op == "RMSNorm":
        b, l, d = feats
        x = _rand((b, l, d), dev)
        return (lambda: x * torch.rsqrt(x.pow(2).mean(-1, keepdim=True) + 1e-6),
                [x])

    if op == "RoPE":
        b, l, hm, dh = feats
        x = _rand((b, l, hm, dh), dev)
        half = max(dh // 2, 1)
        angles = _rand((l, 1, half), dev)
        cos, sin = angles.cos(), angles.sin()

        def rope():
            x1, x2 = x[..., :half], x[..., half:2 * half]
            rotated = torch.cat((x1 * cos - x2 * sin, x1 * sin + x2 * cos),
                                dim=-1)
            return torch.cat((rotated, x[..., 2 * half:]), dim=-1)
        return rope, [x]

    if op == "QKT":
        bh, l, dh, l2 = feats
        q, k = _rand((bh, l, dh), dev), _rand((bh, dh, l2), dev)
        return lambda: torch.bmm(q, k), [q, k]

    if op == "VMul":
        bh, l, l2, dh = feats
        p, v = _rand((bh, l, l2), dev), _rand((bh, l2, dh), dev)
        return lambda: torch.bmm(p, v), [p, v]

    if op == "Fillmask":
        b, hm, l, d = feats
        x = _rand((b, hm, l, d), dev)
        mask = torch.zeros((l, d), dtype=torch.bool, device=dev)
        mask[:, d // 2:] = True
        # a large negative finite value keeps backward free of inf * 0
        return lambda: x.masked_fill(mask, -1e9), [x]

    if op == "Softmax":
        b, hm, l, l2 = feats
        x = _rand((b, hm, l, l2), dev)
        return lambda: torch.softmax(x, dim=-1), [x]

    if op == "FusedSoftmax":
        bh, l, l2 = feats
        x = _rand((bh, l, l2), dev)
        return lambda: torch.softmax(x, dim=-1), [x]

    if op == "FlashAttention":
        b, l, hm, dh = feats
        q, k, v = (_rand((b, hm, l, dh), dev) for _ in range(3))
        return (lambda: torch.nn.functional.scaled_dot_product_attention(
            q, k, v, is_causal=True), [q, k, v])

    if op == "Glue":
        b, l, dm = feats
        x = _rand((b, l, dm), dev)
        return lambda: torch.nn.functional.gelu(x), [x]

    if op == "ParallelCrossEntropy":
        b, l, vm = feats
        logits = _rand((b * l, vm), dev)
        targets = torch.arange(b * l, device=dev) % vm
        return (lambda: torch.nn.functional.cross_entropy(logits, targets),
                [logits])

    raise CollectorError(f"no builder for operator {op!r}")


def _validate(op: str, feats):
    if op not in ARITY:
        raise CollectorError(f"unknown operator {op!r}")
    if op in UNSUPPORTED:
        raise OperatorUnavailable(
            f"{op} cannot be profiled in a single-process harness")
    feats = tuple(int(f) for f in feats)
    if len(feats) != ARITY[op]:
        raise CollectorError(f"{op} expects {ARITY[op]} features, got {feats}")
    if any(f < 1 for f in feats):
        raise CollectorError(f"{op} features must be positive: {feats}")
    return feats


def build_operator(op: str, feats, device: str = "cpu"):
    """Zero-argument callable running one forward invocation of ``op`` with
    synthetic inputs shaped by ``feats``."""
    feats = _validate(op, feats)
    fn, _ = _build(op, feats, device)
    return fn


def build_backward(op: str, feats, device: str = "cpu"):
    """Zero-argument callable running forward plus backward."""
    feats = _validate(op, feats)
    fn, inputs = _build(op, feats, device)
    for t in inputs:
        t.requires_grad_(True)

    def run():
        out = fn()
        torch.autograd.grad(out, inputs, grad_outputs=torch.ones_like(out))
        return out
    return run
