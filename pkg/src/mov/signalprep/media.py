"""On-disk media: videos as directories of binary PPM frames, audio as 16-bit PCM WAV."""

from __future__ import annotations

import re
import wave
from pathlib import Path

import numpy as np

from .audio import Waveform


def write_ppm(path, image):
    image = np.asarray(image)
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("PPM frames must be uint8 (H, W, 3)")
    h, w, _ = image.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + image.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not m or int(m.group(3)) != 255:
        raise ValueError(f"{path}: not an 8-bit binary PPM")
    w, h = int(m.group(1)), int(m.group(2))
    body = data[m.end():]
    if len(body) != w * h * 3:
        raise ValueError(f"{path}: truncated PPM payload")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).copy()


def write_video(directory, frames):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        write_ppm(directory / f"frame_{i:04d}.ppm", frame)


def read_video(directory) -> np.ndarray:
    paths = sorted(Path(directory).glob("frame_*.ppm"))
    if not paths:
        raise FileNotFoundError(f"no frames in {directory}")
    return np.stack([read_ppm(p) for p in paths])


def write_wav(path, w: Waveform):
    x = w.samples
    channels = 1 if x.ndim == 1 else x.shape[1]
    pcm = np.clip(np.round(x * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(channels)
        f.setsampwidth(2)
        f.setframerate(int(w.sample_rate))
        f.writeframes(pcm.tobytes())


def read_wav(path) -> Waveform:
    with wave.open(str(path), "rb") as f:
        if f.getsampwidth() != 2:
            raise ValueError(f"{path}: only 16-bit PCM is supported")
        channels = f.getnchannels()
        rate = f.getframerate()
        raw = f.readframes(f.getnframes())
    x = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0
    if channels > 1:
        x = x.reshape(-1, channels)
    return Waveform(rate, x)
