"""Model assembly: frozen video/text encoders, a trainable auxiliary encoder, fusion heads.

Parameter prefixes:

    text.*        text encoder (frozen)
    video_enc.*   video frame encoder (frozen)
    aux_enc.*     flow or spectrogram encoder, same architecture and initial values
    temporal_v.*  temporal head on video features
    temporal_x.*  temporal head on flow features (flow modality)
    audio_mlp.*   MLP head on the spectrogram token (audio modality)
    cross_v.*     cross-attention head producing v_m
    cross_x.*     cross-attention head producing x_m
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fusion
from .encoders import TextConfig, VitConfig, init_text, init_vit, vit_encode
from .numcore import autograd as ag
from .numcore.nn import ConfigError
from .numcore.params import ParamSet

MODALITIES = ("flow", "audio")
FUSION_MODES = ("video-only", "aux-only", "score-fusion", "cross-attention")

PIXEL_MEAN = 0.5
PIXEL_STD = 0.25
# flow images are gray (zero motion) in R/G and always 0 in B
FLOW_MEAN = (0.5, 0.5, 0.0)
FLOW_STD = 0.1


@dataclass(frozen=True)
class ModelConfig:
    vit: VitConfig = field(default_factory=VitConfig)
    text: TextConfig = field(default_factory=TextConfig)
    modality: str = "flow"
    temporal_layers: int = 2
    head_heads: int = 4
    fusion_mode: str = "cross-attention"

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ConfigError(f"unknown modality {self.modality!r}")
        if self.fusion_mode not in FUSION_MODES:
            raise ConfigError(f"unknown fusion mode {self.fusion_mode!r}")
        if self.vit.embed_dim != self.text.embed_dim:
            raise ConfigError("vision and text embedding dims differ")
        if self.vit.embed_dim % self.head_heads:
            raise ConfigError(f"embed_dim {self.vit.embed_dim} not divisible by {self.head_heads} heads")
        if self.temporal_layers < 1:
            raise ConfigError("temporal_layers must be >= 1")

    @property
    def d(self) -> int:
        return self.vit.embed_dim

    @property
    def uses_video(self) -> bool:
        return self.fusion_mode != "aux-only"

    @property
    def uses_aux(self) -> bool:
        return self.fusion_mode != "video-only"


def init_backbone(cfg: ModelConfig, seed: int) -> ParamSet:
    """Stand-alone vision (``vision.*``) and text (``text.*``) weights."""
    rng = np.random.default_rng(seed)
    ps = ParamSet()
    init_vit(ps, "vision", cfg.vit, rng)
    init_text(ps, "text", cfg.text, rng)
    return ps


def init_model(cfg: ModelConfig, seed: int, backbone: ParamSet | None = None) -> ParamSet:
    """Assemble all parameters. Video and auxiliary encoders get identical copies of ``vision.*``."""
    if backbone is None:
        backbone = init_backbone(cfg, seed)
    ps = ParamSet()
    for name in backbone.names("text."):
        ps.add(name, backbone[name].value)
    vision = backbone.names("vision.")
    if not vision:
        raise ConfigError("backbone has no vision.* parameters")
    for target in ("video_enc", "aux_enc"):
        for name in vision:
            ps.add(target + name[len("vision"):], backbone[name].value)
    rng = np.random.default_rng([seed, 1])
    d = cfg.d
    fusion.init_temporal_head(ps, "temporal_v", d, cfg.temporal_layers, rng)
    if cfg.modality == "flow":
        fusion.init_temporal_head(ps, "temporal_x", d, cfg.temporal_layers, rng)
    else:
        fusion.init_audio_head(ps, "audio_mlp", d, rng)
    fusion.init_cross_head(ps, "cross_v", d, rng)
    fusion.init_cross_head(ps, "cross_x", d, rng)
    return ps


def load_backbone_into(ps: ParamSet, backbone: ParamSet):
    """Overwrite text/video/aux encoder weights with a backbone's values."""
    for name in backbone.names():
        if name.startswith("text."):
            targets = [name]
        elif name.startswith("vision."):
            targets = [t + name[len("vision"):] for t in ("video_enc", "aux_enc")]
        else:
            continue
        for t in targets:
            if ps[t].value.shape != backbone[name].value.shape:
                raise ConfigError(f"{name}: shape {backbone[name].value.shape} != {ps[t].value.shape}")
            ps[t].value = backbone[name].value.copy()


# inputs

def frames_to_input(frames) -> np.ndarray:
    """uint8 (..., H, W, 3) frames or flow images -> normalized float (..., 3, H, W)."""
    x = np.asarray(frames, dtype=np.float64) / 255.0
    return np.moveaxis((x - PIXEL_MEAN) / PIXEL_STD, -1, -3)


def flow_to_input(flow_images) -> np.ndarray:
    """uint8 (..., H, W, 3) flow images -> float (..., 3, H, W) centred on zero motion."""
    x = np.asarray(flow_images, dtype=np.float64) / 255.0
    return np.moveaxis((x - np.array(FLOW_MEAN)) / FLOW_STD, -1, -3)


def spectrogram_to_input(spec) -> np.ndarray:
    """Normalized (..., mels, frames) spectrogram -> (..., 3, mels, frames)."""
    spec = np.asarray(spec, dtype=np.float64)
    return np.repeat(spec[..., None, :, :], 3, axis=-3)


def encode_video(params: ParamSet, cfg: ModelConfig, frames) -> np.ndarray:
    """Frozen backbone features v for (..., N, H, W, 3) uint8 frames -> (..., N, d)."""
    with ag.no_grad():
        return vit_encode(frames_to_input(frames), params.constants().sub("video_enc"), cfg.vit).value


def encode_aux(p, cfg: ModelConfig, aux_input):
    """Auxiliary features: flow (B, N, 3, H, W) -> (B, N, d); spectrogram (B, 3, F, T) -> (B, 1, d)."""
    x = vit_encode(aux_input, p.sub("aux_enc"), cfg.vit)
    if cfg.modality == "audio":
        x = x.reshape(x.shape[:-1] + (1, cfg.d))
    return x


# forward

@dataclass
class Outputs:
    v_m: ag.Var | None
    x_m: ag.Var | None
    v_pool: np.ndarray


def aux_temporal(p, cfg: ModelConfig, x):
    if cfg.modality == "flow":
        return fusion.temporal_fuse(x, p.sub("temporal_x"), cfg.head_heads, cfg.temporal_layers)
    return fusion.audio_temporal_head(x, p.sub("audio_mlp"))


def forward(p, cfg: ModelConfig, v, aux_input=None, aux_features=None) -> Outputs:
    """Run the heads on cached backbone features ``v`` (B, N, d).

    The auxiliary branch takes either raw ``aux_input`` (encoded here, so
    gradients reach ``aux_enc``) or precomputed ``aux_features``.
    """
    v = np.asarray(v, dtype=np.float64)
    v_pool = v.mean(axis=-2)
    v_t = x_t = None
    if cfg.uses_video:
        v_t = fusion.temporal_fuse(v, p.sub("temporal_v"), cfg.head_heads, cfg.temporal_layers)
    if cfg.uses_aux:
        x = aux_features if aux_features is not None else encode_aux(p, cfg, aux_input)
        x_t = aux_temporal(p, cfg, x)
    if cfg.fusion_mode == "cross-attention":
        v_m = fusion.fuse_video(v_t, x_t, p.sub("cross_v"), cfg.head_heads)
        x_m = fusion.fuse_auxiliary(x_t, v, p.sub("cross_x"), cfg.head_heads)
    else:
        v_m = fusion.avg_pool(v_t) if v_t is not None else None
        x_m = fusion.avg_pool(x_t) if x_t is not None else None
    return Outputs(v_m, x_m, v_pool)
