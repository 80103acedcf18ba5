"""Named parameter storage, AdamW and the half-cosine schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

from .autograd import DTYPE, Var


@dataclass
class Param:
    value: np.ndarray
    trainable: bool = True
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)

    def reset_moments(self):
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)


class ParamSet:
    """Ordered name -> Param map with per-parameter trainable flags."""

    def __init__(self, params: Mapping[str, Param] | None = None):
        self._params: dict[str, Param] = dict(params or {})

    def add(self, name: str, value, trainable: bool = True) -> Param:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        arr = np.array(value, dtype=DTYPE)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"parameter {name!r} has non-finite values")
        p = Param(arr, trainable)
        p.reset_moments()
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def trainable_names(self) -> list[str]:
        return [n for n, p in self._params.items() if p.trainable]

    def set_trainable(self, prefix: str, flag: bool):
        for n in self.names(prefix):
            self._params[n].trainable = flag

    def count(self, trainable_only: bool = False) -> int:
        return sum(p.value.size for p in self._params.values()
                   if p.trainable or not trainable_only)

    def copy(self) -> "ParamSet":
        out = ParamSet()
        for n, p in self._params.items():
            out._params[n] = Param(p.value.copy(), p.trainable,
                                   None if p.m is None else p.m.copy(),
                                   None if p.v is None else p.v.copy())
        return out

    def state(self) -> dict[str, np.ndarray]:
        return {n: p.value for n, p in self._params.items()}

    def bind(self) -> "ParamView":
        """Wrap every parameter in a leaf Var for one forward/backward pass."""
        leaves = {n: Var(p.value, requires_grad=p.trainable) for n, p in self._params.items()}
        return ParamView(leaves)

    def constants(self) -> "ParamView":
        return ParamView({n: p.value for n, p in self._params.items()})


class ParamView:
    """Prefix-scoped read access to bound parameters."""

    def __init__(self, table: dict, prefix: str = ""):
        self._table = table
        self._prefix = prefix

    def __getitem__(self, key: str):
        return self._table[self._prefix + key]

    def __contains__(self, key: str) -> bool:
        return self._prefix + key in self._table

    def sub(self, prefix: str) -> "ParamView":
        return ParamView(self._table, f"{self._prefix}{prefix}.")

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for n, v in self._table.items():
            if isinstance(v, Var) and v.requires_grad:
                out[n] = v.grad if v.grad is not None else np.zeros_like(v.value)
        return out


def adamw_step(params: ParamSet, grads: Mapping[str, np.ndarray], lr: float,
               weight_decay: float = 0.05, betas=(0.9, 0.999), step: int = 1,
               eps: float = 1e-8) -> ParamSet:
    """One decoupled-weight-decay Adam update, in place. ``step`` counts from 1."""
    b1, b2 = betas
    trainable = set(params.trainable_names())
    extra = set(grads) - trainable
    frozen = [n for n in extra if n in params]
    if frozen:
        # gradients for frozen parameters are dropped, never applied
        grads = {n: g for n, g in grads.items() if n not in frozen}
        extra -= set(frozen)
    if extra:
        raise ValueError(f"gradients for unknown parameters: {sorted(extra)}")
    bc1 = 1.0 - b1 ** step
    bc2 = 1.0 - b2 ** step
    for name in params.trainable_names():
        g = grads.get(name)
        p = params[name]
        if g is None:
            continue
        if g.shape != p.value.shape:
            raise ValueError(f"{name}: grad shape {g.shape} != param shape {p.value.shape}")
        if p.m is None:
            p.reset_moments()
        p.m = b1 * p.m + (1.0 - b1) * g
        p.v = b2 * p.v + (1.0 - b2) * g * g
        value = p.value * (1.0 - lr * weight_decay)
        p.value = value - lr * (p.m / bc1) / (np.sqrt(p.v / bc2) + eps)
    return params


def half_cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    if total_steps <= 0:
        return base_lr
    step = min(max(step, 0), total_steps)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
