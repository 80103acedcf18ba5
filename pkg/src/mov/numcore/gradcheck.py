"""Central-difference check of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autograd import Var, no_grad
from .params import ParamSet, ParamView


def grad_check(scalar_fn: Callable[[ParamView], Var], params: ParamSet,
               epsilon: float = 1e-4, max_coords: int = 64, seed: int = 0,
               names: list[str] | None = None) -> float:
    """Max relative error between backprop and central differences.

    ``scalar_fn`` maps a bound parameter view to a scalar Var. Only trainable
    parameters are checked; at most ``max_coords`` coordinates are sampled per
    tensor. The error per coordinate is |analytic - numeric| / max(1, |numeric|).
    NaN anywhere returns ``inf``.
    """
    view = params.bind()
    loss = scalar_fn(view)
    loss.backward()
    analytic = view.grads()
    rng = np.random.default_rng(seed)

    def evaluate() -> float:
        with no_grad():
            return float(scalar_fn(params.constants()).value)

    worst = 0.0
    for name in names or params.trainable_names():
        p = params[name]
        if not p.trainable:
            continue
        g = analytic[name]
        if not np.all(np.isfinite(g)):
            return float("inf")
        flat = p.value.reshape(-1)
        n = flat.size
        coords = rng.choice(n, size=min(n, max_coords), replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + epsilon
            up = evaluate()
            flat[c] = orig - epsilon
            down = evaluate()
            flat[c] = orig
            numeric = (up - down) / (2 * epsilon)
            if not np.isfinite(numeric):
                return float("inf")
            err = abs(g.reshape(-1)[c] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
