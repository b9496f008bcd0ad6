"""Adam with elementwise gradient value clipping."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

__all__ = ["Adam"]


class Adam:
    """Adam over a named parameter dict.

    Gradients are clipped elementwise to ``clip_range`` before the moment
    updates. A parameter with no accumulated gradient is treated as having a
    zero gradient, so its moments decay and (from a fresh state) its value is
    untouched. Updates are a pure function of (state, params, grads).
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        clip_range: tuple[float, float] = (-10.0, 10.0),
    ):
        if clip_range[0] >= clip_range[1]:
            raise ValueError(f"clip_range lo must be < hi, got {clip_range}")
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_range = clip_range
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        lo, hi = self.clip_range
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            else:
                g = np.clip(g, lo, hi)
            m = self.m[k]
            v = self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
