"""Adam with optional global-norm clipping."""

from __future__ import annotations

import math

import numpy as np

from seqstruct.diffcore.tensor import NonFiniteError, Tensor


class Adam:
    """Bias-corrected Adam.

    Parameters without a gradient after ``backward`` are skipped for that
    step (their moments are left untouched).
    """

    def __init__(
        self,
        params: list[Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        clip_norm: float | None = None,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> float:
        """Apply one update; returns the global gradient norm before clipping."""
        grads = [p.grad for p in self.params]
        sq = 0.0
        for g in grads:
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise NonFiniteError("adam: non-finite gradient")
            sq += float(np.vdot(g, g))
        norm = math.sqrt(sq)
        factor = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            factor = self.clip_norm / (norm + 1e-12)

        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g is None:
                continue
            if factor != 1.0:
                g = g * factor
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype, copy=False)
        return norm

    def state_dict(self) -> dict:
        return {"t": self.t, "m": [a.copy() for a in self.m], "v": [a.copy() for a in self.v]}
