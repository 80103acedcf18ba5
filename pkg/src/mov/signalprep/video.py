"""Clip sampling and clip-consistent spatial augmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ClipSample:
    indices: tuple[int, ...]
    offset: tuple[int, int]  # (dy, dx) of the shared crop window in the padded frame
    pad: int


def clip_indices(length: int, n: int, stride: int, start: int) -> list[int]:
    """start + k*stride for k < n, clamped to the final frame."""
    if length < 1:
        raise ValueError("empty video")
    return [min(start + k * stride, length - 1) for k in range(n)]


def sample_clip(length: int, n: int = 16, stride: int = 4, rng_seed=None, pad: int = 0,
                start: int | None = None) -> ClipSample:
    """Draw a random clip start and one crop offset shared by all frames."""
    if length < 1:
        raise ValueError("empty video")
    rng = np.random.default_rng(rng_seed)
    span = (n - 1) * stride + 1
    if start is None:
        start = int(rng.integers(0, max(0, length - span) + 1))
    offset = (int(rng.integers(0, 2 * pad + 1)), int(rng.integers(0, 2 * pad + 1))) if pad else (pad, pad)
    return ClipSample(tuple(clip_indices(length, n, stride, start)), offset, pad)


def uniform_clip_starts(length: int, n: int, stride: int, views: int) -> list[int]:
    """Evenly spaced clip starts for multi-view inference."""
    span = (n - 1) * stride + 1
    last = max(0, length - span)
    if views == 1:
        return [last // 2]
    return [int(round(i * last / (views - 1))) for i in range(views)]


def apply_crop(frames, clip: ClipSample) -> np.ndarray:
    """Apply the clip's shared reflect-pad-and-crop to (T, H, W, ...) arrays."""
    frames = np.asarray(frames)
    if not clip.pad:
        return frames.copy()
    h, w = frames.shape[1:3]
    widths = [(0, 0), (clip.pad, clip.pad), (clip.pad, clip.pad)] + [(0, 0)] * (frames.ndim - 3)
    padded = np.pad(frames, widths, mode="reflect")
    dy, dx = clip.offset
    return padded[:, dy:dy + h, dx:dx + w].copy()


def sample_frames(video, n: int = 16, stride: int = 4, rng_seed=None, pad: int = 0,
                  start: int | None = None) -> tuple[np.ndarray, ClipSample]:
    """Sample ``n`` frames with ``stride`` from a (T, H, W, C) video."""
    video = np.asarray(video)
    if video.shape[0] == 0:
        raise ValueError("empty video")
    clip = sample_clip(video.shape[0], n, stride, rng_seed, pad, start)
    return apply_crop(video[list(clip.indices)], clip), clip
