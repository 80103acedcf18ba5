"""Array-level helpers: tempered softmax, cosine similarity, entropy."""

from __future__ import annotations

import numpy as np


def softmax(logits, temperature: float = 1.0) -> np.ndarray:
    """Softmax of ``logits / temperature`` along the last axis."""
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    x = np.asarray(logits, dtype=np.float64)
    if x.size == 0:
        raise ValueError("softmax of empty logits")
    if np.isnan(x).any():
        raise ValueError("softmax input contains NaN")
    z = x / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity of a zero-norm vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_matrix(x, table) -> np.ndarray:
    """Cosine similarity of each row of ``x`` against each row of ``table``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    t = np.asarray(table, dtype=np.float64)
    xn = np.linalg.norm(x, axis=-1, keepdims=True)
    tn = np.linalg.norm(t, axis=-1, keepdims=True)
    if (xn == 0).any() or (tn == 0).any():
        raise ValueError("cosine similarity of a zero-norm vector")
    return (x / xn) @ (t / tn).T


def entropy(p) -> float | np.ndarray:
    """Shannon entropy in nats along the last axis, with 0 ln 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    safe = np.where(p > 0, p, 1.0)
    return -(p * np.log(safe)).sum(axis=-1)


def is_probability_vector(p, atol: float = 1e-6) -> bool:
    p = np.asarray(p, dtype=np.float64)
    return bool(p.ndim == 1 and (p >= -atol).all() and (p <= 1 + atol).all()
                and abs(p.sum() - 1.0) <= atol)
