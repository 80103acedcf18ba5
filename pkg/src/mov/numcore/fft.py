"""Radix-2 real FFT used by the spectrogram front end."""

from __future__ import annotations

import numpy as np


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def hamming(n: int) -> np.ndarray:
    """Periodic Hamming window (matches the usual STFT convention)."""
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / n)


def fft(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 DIT FFT along the last axis. Length must be a power of two."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n & (n - 1):
        raise ValueError(f"fft length {n} is not a power of two")
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    a = x[..., rev].copy()
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        a = a.reshape(a.shape[:-1] + (n // size, size))
        even = a[..., :half]
        odd = a[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1)
        a = a.reshape(a.shape[:-2] + (n,))
        size *= 2
    return a


def rfft(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    return fft(x)[..., : n // 2 + 1]


def rfft_magnitude(frame, window=None, power: bool = False) -> np.ndarray:
    """|DFT| (or |DFT|^2) of a windowed frame, zero-padded to a power of two.

    Works on a single frame or a stack of frames along leading axes.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size == 0 or frame.shape[-1] == 0:
        raise ValueError("rfft_magnitude of an empty frame")
    if window is not None:
        window = np.asarray(window, dtype=np.float64)
        if window.shape[-1] != frame.shape[-1]:
            raise ValueError("window length does not match frame length")
        frame = frame * window
    n = next_pow2(frame.shape[-1])
    if n != frame.shape[-1]:
        pad = [(0, 0)] * (frame.ndim - 1) + [(0, n - frame.shape[-1])]
        frame = np.pad(frame, pad)
    spec = np.abs(rfft(frame))
    return spec * spec if power else spec

