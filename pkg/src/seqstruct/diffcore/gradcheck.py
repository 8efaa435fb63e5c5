"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from seqstruct.diffcore.tensor import Tensor, no_grad


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
    max_coords: int | None = 50,
    seed: int = 0,
    floor: float = 1e-6,
) -> float:
    """Largest relative error between backprop and central differences.

    ``f`` rebuilds the scalar graph from ``params`` on every call.  At most
    ``max_coords`` coordinates per parameter are sampled.  The error at a
    coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    """
    rng = np.random.default_rng(seed)
    for p in params:
        p.grad = None
    out = f()
    out.backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for c in coords:
            orig = flat[c]
            with no_grad():
                flat[c] = orig + step
                up = float(f().data)
                flat[c] = orig - step
                down = float(f().data)
            flat[c] = orig
            numeric = (up - down) / (2 * step)
            a = float(analytic.reshape(-1)[c])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst
