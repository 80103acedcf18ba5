"""Flow images, log-mel spectrograms, and their augmentations."""

from .audio import (Waveform, crop_and_augment_spectrogram, expand_three_channels,
                    log_mel_spectrogram, mel_center_frequencies, normalize_spectrogram,
                    resample_to_16k_mono)
from .flow import TVL1Params, estimate_flow, flow_to_image
from .video import ClipSample, sample_clip, sample_frames, uniform_clip_starts

__all__ = [
    "Waveform", "crop_and_augment_spectrogram", "expand_three_channels", "log_mel_spectrogram",
    "mel_center_frequencies", "normalize_spectrogram", "resample_to_16k_mono",
    "TVL1Params", "estimate_flow", "flow_to_image",
    "ClipSample", "sample_clip", "sample_frames", "uniform_clip_starts",
]
