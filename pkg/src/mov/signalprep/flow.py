"""TV-L1 optical flow (duality-based primal-dual scheme) and flow quantization.

The solver is vectorised over leading axes so that every frame pair of a clip
is solved in one pass. Frames are (..., H, W) grayscale or (..., H, W, 3) RGB
in the 0-255 range; flow fields are (..., H, W, 2) holding (u, v) in
pixels/frame, where ``next[y + v, x + u] ~ prev[y, x]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

FLOW_BOUND = 20.0


@dataclass(frozen=True)
class TVL1Params:
    levels: int = 3
    warps: int = 2
    iterations: int = 30
    attachment: float = 0.15  # lambda; smaller gives smoother flow
    tightness: float = 0.3  # theta
    tau: float = 0.25


def to_gray(frames) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[-1] == 3 and frames.ndim >= 3:
        return frames @ np.array([0.299, 0.587, 0.114])
    return frames


def _grad(f):
    """Forward differences with Neumann boundary."""
    gx = np.zeros_like(f)
    gy = np.zeros_like(f)
    gx[..., :, :-1] = f[..., :, 1:] - f[..., :, :-1]
    gy[..., :-1, :] = f[..., 1:, :] - f[..., :-1, :]
    return gx, gy


def _div(px, py):
    """Negative adjoint of ``_grad``."""
    dx = np.zeros_like(px)
    dy = np.zeros_like(py)
    dx[..., :, 0] = px[..., :, 0]
    dx[..., :, 1:-1] = px[..., :, 1:-1] - px[..., :, :-2]
    dx[..., :, -1] = -px[..., :, -2]
    dy[..., 0, :] = py[..., 0, :]
    dy[..., 1:-1, :] = py[..., 1:-1, :] - py[..., :-2, :]
    dy[..., -1, :] = -py[..., -2, :]
    return dx + dy


def _central_grad(f):
    gx = np.zeros_like(f)
    gy = np.zeros_like(f)
    gx[..., :, 1:-1] = 0.5 * (f[..., :, 2:] - f[..., :, :-2])
    gy[..., 1:-1, :] = 0.5 * (f[..., 2:, :] - f[..., :-2, :])
    return gx, gy


def warp(img, u, v):
    """Bilinear sample ``img`` at (x + u, y + v), clamped at the border."""
    h, w = img.shape[-2:]
    lead = img.shape[:-2]
    flat = img.reshape(-1, h, w)
    b = flat.shape[0]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    x = np.clip(xx + u.reshape(b, h, w), 0, w - 1)
    y = np.clip(yy + v.reshape(b, h, w), 0, h - 1)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = x - x0
    ay = y - y0
    bi = np.arange(b)[:, None, None]
    out = ((1 - ay) * ((1 - ax) * flat[bi, y0, x0] + ax * flat[bi, y0, x1])
           + ay * ((1 - ax) * flat[bi, y1, x0] + ax * flat[bi, y1, x1]))
    return out.reshape(lead + (h, w))


def _zoom_last2(a, shape):
    factors = [1.0] * (a.ndim - 2) + [shape[0] / a.shape[-2], shape[1] / a.shape[-1]]
    out = ndi.zoom(a, factors, order=1, mode="nearest", grid_mode=True)
    return out


def _pyramid(img, levels):
    pyr = [img]
    for _ in range(levels - 1):
        h, w = pyr[-1].shape[-2:]
        if min(h, w) < 8:
            break
        sigma = [0.0] * (img.ndim - 2) + [0.8, 0.8]
        smooth = ndi.gaussian_filter(pyr[-1], sigma, mode="nearest")
        pyr.append(_zoom_last2(smooth, ((h + 1) // 2, (w + 1) // 2)))
    return pyr


def _tvl1_level(i0, i1, u, v, prm: TVL1Params, lam: float):
    lt = lam * prm.tightness
    px1 = np.zeros_like(u)
    py1 = np.zeros_like(u)
    px2 = np.zeros_like(u)
    py2 = np.zeros_like(u)
    gx, gy = _central_grad(i1)
    for _ in range(prm.warps):
        u0, v0 = u.copy(), v.copy()
        i1w = warp(i1, u0, v0)
        gxw = warp(gx, u0, v0)
        gyw = warp(gy, u0, v0)
        grad2 = gxw * gxw + gyw * gyw
        rho_c = i1w - gxw * u0 - gyw * v0 - i0
        safe = np.where(grad2 > 1e-9, grad2, 1.0)
        for _ in range(prm.iterations):
            rho = rho_c + gxw * u + gyw * v
            lo = rho < -lt * grad2
            hi = rho > lt * grad2
            mid = ~(lo | hi) & (grad2 > 1e-9)
            du = np.where(lo, lt * gxw, np.where(hi, -lt * gxw, 0.0))
            dv = np.where(lo, lt * gyw, np.where(hi, -lt * gyw, 0.0))
            du = np.where(mid, -rho * gxw / safe, du)
            dv = np.where(mid, -rho * gyw / safe, dv)
            u = u + du + prm.tightness * _div(px1, py1)
            v = v + dv + prm.tightness * _div(px2, py2)
            ux, uy = _grad(u)
            vx, vy = _grad(v)
            step = prm.tau / prm.tightness
            n1 = 1.0 + step * np.sqrt(ux * ux + uy * uy)
            n2 = 1.0 + step * np.sqrt(vx * vx + vy * vy)
            px1 = (px1 + step * ux) / n1
            py1 = (py1 + step * uy) / n1
            px2 = (px2 + step * vx) / n2
            py2 = (py2 + step * vy) / n2
    return u, v


def estimate_flow(prev, next, iterations: int = 30, smoothness: float = 0.15,
                  params: TVL1Params | None = None) -> np.ndarray:
    """Dense TV-L1 flow from ``prev`` to ``next``; returns (..., H, W, 2).

    ``smoothness`` is the data-attachment weight lambda (lower = smoother).
    """
    prev = to_gray(prev)
    next = to_gray(next)
    if prev.shape != next.shape:
        raise ValueError(f"frame shapes differ: {prev.shape} vs {next.shape}")
    if prev.ndim < 2:
        raise ValueError("frames must be at least 2-D")
    prm = params or TVL1Params(iterations=iterations, attachment=smoothness)
    p0 = _pyramid(prev, prm.levels)
    p1 = _pyramid(next, len(p0))
    u = np.zeros(p0[-1].shape)
    v = np.zeros(p0[-1].shape)
    for lvl in range(len(p0) - 1, -1, -1):
        i0, i1 = p0[lvl], p1[lvl]
        if u.shape != i0.shape:
            sy = i0.shape[-2] / u.shape[-2]
            sx = i0.shape[-1] / u.shape[-1]
            u = _zoom_last2(u, i0.shape[-2:]) * sx
            v = _zoom_last2(v, i0.shape[-2:]) * sy
        u, v = _tvl1_level(i0, i1, u, v, prm, prm.attachment)
    return np.stack([u, v], axis=-1)


def round_half_away(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def flow_to_image(flow, bound: float = FLOW_BOUND) -> np.ndarray:
    """Quantize (..., H, W, 2) flow to a uint8 (..., H, W, 3) image.

    Each component is clamped to [-bound, bound] and mapped affinely onto
    [0, 255] with round-half-away-from-zero; the third channel is zero.
    """
    flow = np.asarray(flow, dtype=np.float64)
    if flow.shape[-1] != 2:
        raise ValueError("flow must have a trailing (u, v) axis")
    clipped = np.clip(flow, -bound, bound)
    q = round_half_away((clipped + bound) * 255.0 / (2 * bound))
    q = np.clip(q, 0, 255).astype(np.uint8)
    return np.concatenate([q, np.zeros(q.shape[:-1] + (1,), dtype=np.uint8)], axis=-1)
