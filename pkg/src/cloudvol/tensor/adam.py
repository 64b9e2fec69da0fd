"""Adam with decoupled-from-nothing (classic) weight decay.

Update per step t (bias-corrected):
    m <- b1*m + (1-b1)*g         v <- b2*v + (1-b2)*g^2
    p <- p - lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)
Weight decay is added to the raw gradient before the moment updates.
The inner loop runs in the selected kernel backend.
"""

from __future__ import annotations

from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from . import backend
from .core import Tensor

ParamSpec = Union[Sequence[Tensor], Dict[str, Tensor]]


class Adam:

    def __init__(self, params: ParamSpec, lr: float = 1.5e-4, betas: Tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        if isinstance(params, dict):
            self.names: List[str] = list(params.keys())
            self.params: List[Tensor] = list(params.values())
        else:
            self.params = list(params)
            self.names = [str(i) for i in range(len(self.params))]
        if not self.params:
            raise ValueError("Adam: no parameters")
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            grad = p.grad
            if grad.dtype != p.data.dtype:
                grad = grad.astype(p.data.dtype)
            backend.adam_step_inplace(
                p.data, grad, m, v,
                self.lr, self.beta1, self.beta2, self.eps,
                bias1, bias2, self.weight_decay,
            )

    # -- checkpoint support ------------------------------------------------

    def state_dict(self) -> Dict:
        return {
            "t": self.t,
            "m": {n: m.copy() for n, m in zip(self.names, self.m)},
            "v": {n: v.copy() for n, v in zip(self.names, self.v)},
        }

    def load_state_dict(self, state: Dict):
        self.t = int(state["t"])
        for i, name in enumerate(self.names):
            if name not in state["m"]:
                raise KeyError(f"optimizer state missing moments for '{name}'")
            m, v = state["m"][name], state["v"][name]
            if m.shape != self.m[i].shape:
                raise ValueError(f"optimizer moment shape {m.shape} != param shape {self.m[i].shape} for '{name}'")
            self.m[i] = m.astype(self.m[i].dtype, copy=True)
            self.v[i] = v.astype(self.v[i].dtype, copy=True)
