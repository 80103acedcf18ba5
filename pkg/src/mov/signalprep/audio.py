"""Waveform to normalized log-mel spectrogram, plus spectrogram augmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numcore.fft import hamming, next_pow2, rfft_magnitude

TARGET_RATE = 16000
WIN_LENGTH = 400  # 25 ms at 16 kHz
HOP_LENGTH = 160  # 10 ms
N_MELS = 128
LOG_FLOOR = 1e-10


@dataclass
class Waveform:
    sample_rate: int
    samples: np.ndarray  # (n,) mono or (n, channels)

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        self.samples = np.asarray(self.samples, dtype=np.float64)

    @property
    def duration(self) -> float:
        return self.samples.shape[0] / self.sample_rate


def resample_to_16k_mono(raw: Waveform) -> Waveform:
    """Channel mean, then linear-interpolation resampling to 16 kHz."""
    x = raw.samples
    if x.ndim == 2:
        x = x.mean(axis=1)
    if raw.sample_rate == TARGET_RATE:
        return Waveform(TARGET_RATE, x.copy())
    n_out = int(round(len(x) * TARGET_RATE / raw.sample_rate))
    t = np.arange(n_out) * (raw.sample_rate / TARGET_RATE)
    return Waveform(TARGET_RATE, np.interp(t, np.arange(len(x)), x))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(n_mels: int = N_MELS, fmin: float = 0.0,
                           fmax: float = TARGET_RATE / 2) -> np.ndarray:
    mels = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    return mel_to_hz(mels)[1:-1]


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = 512, sample_rate: int = TARGET_RATE,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular filters on the HTK mel scale, shape (n_mels, n_fft // 2 + 1)."""
    fmax = sample_rate / 2 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def frame_signal(x: np.ndarray, win: int = WIN_LENGTH, hop: int = HOP_LENGTH) -> np.ndarray:
    """Centered frames: frame k is centered on sample k*hop, reflect-padded.

    Yields ceil(len(x) / hop) frames, so t seconds at 16 kHz give 100 t frames.
    """
    n = len(x)
    n_frames = -(-n // hop)
    half = win // 2
    right = max(0, (n_frames - 1) * hop + win - half - n)
    padded = np.pad(x, (half, right), mode="reflect")
    idx = np.arange(n_frames)[:, None] * hop + np.arange(win)[None, :]
    return padded[idx]


def log_mel_spectrogram(w: Waveform, n_mels: int = N_MELS) -> np.ndarray:
    """(n_mels, frames) natural-log mel power spectrogram of 16 kHz mono audio."""
    if w.sample_rate != TARGET_RATE or w.samples.ndim != 1:
        raise ValueError("expected 16 kHz mono audio; resample first")
    if len(w.samples) < WIN_LENGTH:
        raise ValueError(f"audio shorter than one {WIN_LENGTH}-sample window")
    frames = frame_signal(w.samples)
    power = rfft_magnitude(frames, hamming(WIN_LENGTH), power=True)
    fb = mel_filterbank(n_mels, next_pow2(WIN_LENGTH), TARGET_RATE)
    mel = power @ fb.T
    return np.log(np.maximum(mel, LOG_FLOOR)).T


def normalize_spectrogram(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    std = s.std()
    if not std > 0:
        return np.zeros_like(s)
    return (s - s.mean()) / std


def crop_and_augment_spectrogram(s, rng_seed, crop_frames: int = 800,
                                 time_mask: int = 192, freq_mask: int = 48) -> np.ndarray:
    """Random time crop, then one time band and one frequency band set to zero."""
    s = np.asarray(s, dtype=np.float64)
    bins, frames = s.shape
    if frames < crop_frames:
        raise ValueError(f"spectrogram has {frames} frames, need at least {crop_frames}")
    rng = np.random.default_rng(rng_seed)
    start = int(rng.integers(0, frames - crop_frames + 1))
    out = s[:, start:start + crop_frames].copy()
    tw = int(rng.integers(0, min(time_mask, crop_frames) + 1))
    t0 = int(rng.integers(0, crop_frames - tw + 1))
    fw = int(rng.integers(0, min(freq_mask, bins) + 1))
    f0 = int(rng.integers(0, bins - fw + 1))
    out[:, t0:t0 + tw] = 0.0
    out[f0:f0 + fw, :] = 0.0
    return out


def center_crop_spectrogram(s, crop_frames: int, start: int | None = None) -> np.ndarray:
    frames = s.shape[1]
    if frames < crop_frames:
        raise ValueError(f"spectrogram has {frames} frames, need at least {crop_frames}")
    if start is None:
        start = (frames - crop_frames) // 2
    return np.asarray(s[:, start:start + crop_frames], dtype=np.float64).copy()


def expand_three_channels(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    return np.broadcast_to(s, (3,) + s.shape).copy()
