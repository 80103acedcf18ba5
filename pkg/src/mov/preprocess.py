"""Media decoding, flow extraction and clip/view construction.

``preprocess_dataset`` decodes every manifest sample once into a compact
cache (raw frames, quantized flow images, normalized spectrograms). Views
for training and evaluation are cut from that cache, so sweeps that share a
dataset never repeat flow estimation.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .signalprep import audio as sp_audio
from .signalprep import flow as sp_flow
from .signalprep import video as sp_video
from .signalprep.media import read_video, read_wav
from .synthdata import DatasetManifest


@dataclass(frozen=True)
class DataConfig:
    n_frames: int = 8
    stride: int = 1
    crop_pad: int = 2
    train_clips: int = 2
    eval_temporal_views: int = 2
    audio_crop: int = 64
    audio_time_mask: int = 15
    audio_freq_mask: int = 48
    audio_eval_views: int = 4
    flow_iterations: int = 30

    def __post_init__(self):
        if self.n_frames < 1 or self.stride < 1:
            raise ValueError("n_frames and stride must be positive")
        if self.train_clips < 1 or self.eval_temporal_views < 1 or self.audio_eval_views < 1:
            raise ValueError("view counts must be positive")


# full-scale presets (16 frames, stride 4, 4 temporal views, 8 s crops, 12 audio views)
FULL_SCALE_DATA = DataConfig(n_frames=16, stride=4, crop_pad=16, eval_temporal_views=4,
                              audio_crop=800, audio_time_mask=192, audio_freq_mask=48,
                              audio_eval_views=12)


def flow_images(frames, iterations: int = 30) -> np.ndarray:
    """Quantized flow between consecutive frames; the final frame repeats the last flow."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[0] < 2:
        raise ValueError("need at least two frames for flow")
    f = sp_flow.estimate_flow(frames[:-1], frames[1:], iterations=iterations)
    img = sp_flow.flow_to_image(f)
    return np.concatenate([img, img[-1:]], axis=0)


def spectrogram(path) -> np.ndarray:
    w = sp_audio.resample_to_16k_mono(read_wav(path))
    return sp_audio.normalize_spectrogram(sp_audio.log_mel_spectrogram(w))


def _decode(args):
    root, video_rel, audio_rel, iterations = args
    frames = read_video(root / video_rel)
    return frames, flow_images(frames, iterations), spectrogram(root / audio_rel)


@dataclass
class MediaCache:
    ids: list[str]
    frames: np.ndarray  # (S, T, H, W, 3) uint8
    flows: np.ndarray  # (S, T, H, W, 3) uint8
    specs: np.ndarray  # (S, mels, frames)

    def index(self, ids) -> np.ndarray:
        pos = {s: i for i, s in enumerate(self.ids)}
        missing = [s for s in ids if s not in pos]
        if missing:
            raise KeyError(f"samples not in cache: {missing[:5]}")
        return np.array([pos[s] for s in ids], dtype=np.int64)

    def save(self, path):
        np.savez(path, ids=np.array(self.ids), frames=self.frames, flows=self.flows, specs=self.specs)

    @classmethod
    def load(cls, path) -> "MediaCache":
        with np.load(path) as z:
            return cls([str(s) for s in z["ids"]], z["frames"], z["flows"], z["specs"])


def preprocess_dataset(manifest: DatasetManifest, cfg: DataConfig = DataConfig(),
                       jobs: int = 1) -> MediaCache:
    work = [(manifest.root, r.video, r.audio, cfg.flow_iterations) for r in manifest.records]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            out = list(ex.map(_decode, work, chunksize=4))
    else:
        out = [_decode(w) for w in work]
    frames, flows, specs = zip(*out)
    lengths = {s.shape[1] for s in specs}
    if len(lengths) != 1 or len({f.shape for f in frames}) != 1:
        raise ValueError("samples differ in clip length or audio duration")
    return MediaCache([r.id for r in manifest.records], np.stack(frames), np.stack(flows), np.stack(specs))


# views

@dataclass
class ViewSet:
    """Per-sample, per-view model inputs. ``aux`` holds flow clips or spectrogram crops."""
    frames: np.ndarray  # (S, V, N, H, W, 3) uint8
    aux: np.ndarray  # (S, V, N, H, W, 3) uint8 or (S, V, mels, crop)
    labels: np.ndarray  # (S,)


def _seed(seed, *keys):
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def train_views(cache: MediaCache, idx, labels, cfg: DataConfig, modality: str, seed: int) -> ViewSet:
    """``train_clips`` augmented clips per sample, fixed by ``seed``."""
    frames, aux = [], []
    for s in idx:
        fv, av = [], []
        for k in range(cfg.train_clips):
            clip = sp_video.sample_clip(cache.frames.shape[1], cfg.n_frames, cfg.stride,
                                        _seed(seed, int(s), k), cfg.crop_pad)
            fv.append(sp_video.apply_crop(cache.frames[s][list(clip.indices)], clip))
            if modality == "flow":
                av.append(sp_video.apply_crop(cache.flows[s][list(clip.indices)], clip))
            else:
                av.append(sp_audio.crop_and_augment_spectrogram(
                    cache.specs[s], _seed(seed, int(s), k, 1), cfg.audio_crop,
                    cfg.audio_time_mask, cfg.audio_freq_mask))
        frames.append(fv)
        aux.append(av)
    return ViewSet(np.array(frames), np.array(aux), np.asarray(labels))


def eval_views(cache: MediaCache, idx, labels, cfg: DataConfig, modality: str) -> ViewSet:
    """Uniform temporal views, centre spatial crop. Audio views are evenly spaced crops."""
    t = cache.frames.shape[1]
    starts = sp_video.uniform_clip_starts(t, cfg.n_frames, cfg.stride, cfg.eval_temporal_views)
    frames, aux = [], []
    for s in idx:
        fv = [cache.frames[s][sp_video.clip_indices(t, cfg.n_frames, cfg.stride, st)] for st in starts]
        if modality == "flow":
            av = [cache.flows[s][sp_video.clip_indices(t, cfg.n_frames, cfg.stride, st)] for st in starts]
        else:
            spec = cache.specs[s]
            last = spec.shape[1] - cfg.audio_crop
            if last < 0:
                raise ValueError(f"spectrogram has {spec.shape[1]} frames, crop needs {cfg.audio_crop}")
            n = cfg.audio_eval_views
            offs = [last // 2] if n == 1 else [int(round(i * last / (n - 1))) for i in range(n)]
            av = [sp_audio.center_crop_spectrogram(spec, cfg.audio_crop, o) for o in offs]
            # pair every audio view with a temporal view, cycling through the latter
            fv = [fv[i % len(fv)] for i in range(n)]
        frames.append(fv)
        aux.append(av)
    return ViewSet(np.array(frames), np.array(aux), np.asarray(labels))
