"""Finite-difference verification of analytic gradients.

All checks run in 64-bit. The probe loss is sum(output * P) for a fixed
random projection P, so ops whose rows sum to a constant (softmax) still
receive a non-degenerate upstream gradient. Error metric per element:

    |analytic - central_difference| / max(1, |analytic|)
"""

from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import Tensor, backward, no_grad
from .ops import OP_KINDS, forward_op


def _t(rng: np.random.Generator, shape, scale: float = 1.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, dtype=np.float64, requires_grad=True)


def _relu_safe(rng: np.random.Generator, shape) -> Tensor:
    x = rng.standard_normal(shape)
    # keep every sample away from the kink so the finite difference is valid
    x[np.abs(x) < 0.05] = 0.1
    return Tensor(x, dtype=np.float64, requires_grad=True)


def _build_case(op_kind: str, rng: np.random.Generator) -> Tuple[List[Tensor], Dict]:
    if op_kind == "add":
        return [_t(rng, (4, 3)), _t(rng, (3,))], {}
    if op_kind == "mul":
        return [_t(rng, (2, 3, 4)), _t(rng, (3, 4))], {}
    if op_kind == "matmul":
        return [_t(rng, (2, 3, 4)), _t(rng, (4, 5))], {}
    if op_kind == "conv2d":
        return [_t(rng, (2, 5, 5, 3)), _t(rng, (3, 3, 3, 4), 0.5), _t(rng, (4,))], {"stride": 2, "padding": 1}
    if op_kind == "conv_transpose2d":
        return [_t(rng, (1, 3, 3, 2)), _t(rng, (3, 3, 2, 3), 0.5), _t(rng, (3,))], {"stride": 2, "padding": 1}
    if op_kind == "relu":
        return [_relu_safe(rng, (4, 5))], {}
    if op_kind == "gelu":
        return [_t(rng, (4, 5))], {}
    if op_kind == "softmax":
        return [_t(rng, (3, 5))], {}
    if op_kind == "layer_norm":
        gamma = Tensor(1.0 + 0.1 * rng.standard_normal(16), dtype=np.float64, requires_grad=True)
        return [_t(rng, (8, 16)), gamma, _t(rng, (16,), 0.1)], {"eps": 1e-5}
    if op_kind == "reshape":
        return [_t(rng, (2, 6))], {"shape": (3, 4)}
    if op_kind == "transpose":
        return [_t(rng, (2, 3, 4))], {"axes": (2, 0, 1)}
    if op_kind == "window_partition":
        return [_t(rng, (2, 4, 6, 3))], {"win": 2}
    if op_kind == "window_merge":
        return [_t(rng, (12, 2, 2, 3))], {"win": 2, "grid_hw": (4, 6)}
    if op_kind == "concat":
        return [_t(rng, (2, 3)), _t(rng, (1, 3)), _t(rng, (2, 3))], {"axis": 0}
    if op_kind == "slice":
        return [_t(rng, (4, 6))], {"key": (slice(1, 4, 2), slice(0, 6, 3))}
    if op_kind == "mean":
        return [_t(rng, (3, 4, 5))], {"axis": (0, 2)}
    if op_kind == "sum":
        return [_t(rng, (3, 4))], {"axis": None}
    if op_kind == "embedding_lookup":
        table = _t(rng, (7, 3))
        return [table], {"indices": rng.integers(0, 7, size=(5,))}
    raise ValueError(f"no gradient-check case for op kind '{op_kind}'")


def grad_check(op_kind: str, seed: int = 0, h: float = 1e-6) -> float:
    """Max relative gradient error for one op kind under one seed."""
    rng = np.random.default_rng(seed)
    inputs, attrs = _build_case(op_kind, rng)

    out = forward_op(op_kind, inputs, **attrs)
    proj = rng.standard_normal(out.shape)

    def eval_loss() -> float:
        with no_grad():
            o = forward_op(op_kind, inputs, **attrs)
        return float((o.data * proj).sum())

    loss = (out * Tensor(proj, dtype=np.float64)).sum()
    backward(loss)
    return _sweep(inputs, eval_loss, h)


def check_loss_grads(build_loss: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-6,
                     max_elems: Optional[int] = None, seed: int = 0) -> float:
    """Max relative gradient error of a scalar loss w.r.t. leaf parameters.

    build_loss must construct a fresh graph from the live parameter arrays on
    every call. max_elems caps the number of finite-difference probes per
    parameter (sampled without replacement) to keep whole-model checks fast.
    """
    for p in params:
        p.grad = None
    loss = build_loss()

    def eval_loss() -> float:
        with no_grad():
            return build_loss().item()

    backward(loss)
    return _sweep(params, eval_loss, h, max_elems=max_elems, seed=seed)


def _sweep(tensors: Sequence[Tensor], eval_loss: Callable[[], float], h: float,
           max_elems: Optional[int] = None, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in tensors:
        if not t.requires_grad:
            continue
        if t.grad is None:
            raise RuntimeError("parameter received no gradient")
        flat = t.data.reshape(-1)
        ana = t.grad.reshape(-1)
        if max_elems is not None and flat.size > max_elems:
            idx = rng.choice(flat.size, size=max_elems, replace=False)
        else:
            idx = range(flat.size)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            lp = eval_loss()
            flat[i] = orig - h
            lm = eval_loss()
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * h)
            err = abs(ana[i] - numeric) / max(1.0, abs(ana[i]))
            if err > worst:
                worst = err
    return worst


def check_all_ops(seeds: Sequence[int] = (0,), h: float = 1e-6) -> Dict[str, float]:
    """grad_check for every op kind across the given seeds; returns worst per kind."""
    report = {}
    for kind in OP_KINDS:
        report[kind] = max(grad_check(kind, seed=s, h=h) for s in seeds)
    return report
