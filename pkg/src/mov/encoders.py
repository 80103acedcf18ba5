"""ViT-style image encoder and prompt-ensembled text encoder."""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass, field

import numpy as np

from .numcore import autograd as ag
from .numcore.nn import (ConfigError, encoder_block, init_encoder_block, init_layer_norm,
                         layer_norm)
from .numcore.params import ParamSet


@dataclass(frozen=True)
class VitConfig:
    image_hw: tuple[int, int] = (32, 32)
    patch_size: int = 8
    embed_dim: int = 64
    layers: int = 4
    heads: int = 4
    channels: int = 3
    mlp_ratio: int = 4

    def __post_init__(self):
        h, w = self.image_hw
        if h % self.patch_size or w % self.patch_size:
            raise ConfigError(f"image {self.image_hw} not divisible by patch {self.patch_size}")
        if self.embed_dim % self.heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by {self.heads} heads")

    @property
    def grid(self) -> tuple[int, int]:
        return self.image_hw[0] // self.patch_size, self.image_hw[1] // self.patch_size


@dataclass(frozen=True)
class TextConfig:
    embed_dim: int = 64
    layers: int = 2
    heads: int = 4
    vocab_size: int = 2048
    max_len: int = 24
    mlp_ratio: int = 4


# vision

def init_vit(ps: ParamSet, prefix: str, cfg: VitConfig, rng: np.random.Generator):
    d = cfg.embed_dim
    gh, gw = cfg.grid
    patch_in = cfg.channels * cfg.patch_size ** 2
    ps.add(f"{prefix}.patch.w", rng.normal(0, patch_in ** -0.5, size=(patch_in, d)))
    ps.add(f"{prefix}.patch.b", np.zeros(d))
    ps.add(f"{prefix}.cls", rng.normal(0, 0.02, size=d))
    ps.add(f"{prefix}.pos", rng.normal(0, 0.02, size=(gh * gw + 1, d)))
    init_layer_norm(ps, f"{prefix}.ln_pre", d)
    for i in range(cfg.layers):
        init_encoder_block(ps, f"{prefix}.blocks.{i}", d, cfg.mlp_ratio * d, rng)
    init_layer_norm(ps, f"{prefix}.ln_post", d)
    ps.add(f"{prefix}.proj", rng.normal(0, d ** -0.5, size=(d, d)))


def extract_patches(images, patch_size: int) -> np.ndarray:
    """(..., C, H, W) -> (..., n_patches, C * ps * ps), row-major over the patch grid."""
    images = np.asarray(images, dtype=np.float64)
    *lead, c, h, w = images.shape
    if h % patch_size or w % patch_size:
        raise ConfigError(f"image {h}x{w} not divisible by patch {patch_size}")
    gh, gw = h // patch_size, w // patch_size
    x = images.reshape(*lead, c, gh, patch_size, gw, patch_size)
    k = len(lead)
    x = x.transpose(*range(k), k + 1, k + 3, k, k + 2, k + 4)
    return x.reshape(*lead, gh * gw, c * patch_size * patch_size)


def patchify(images, p, patch_size: int) -> ag.Var:
    """Linear patch embedding with the class token prepended: (..., n + 1, d)."""
    patches = extract_patches(images, patch_size)
    tokens = ag.linear(patches, p["patch.w"], p["patch.b"])
    cls = ag.as_var(p["cls"])
    lead = tokens.shape[:-2]
    cls = ag.broadcast_to(cls.reshape(1, -1), lead + (1, cls.shape[-1]))
    return ag.concat([cls, tokens], axis=-2)


def _interp_matrix(n_old: int, n_new: int) -> np.ndarray:
    """Linear interpolation with aligned corners, as an (n_new, n_old) matrix."""
    m = np.zeros((n_new, n_old))
    if n_old == 1:
        m[:, 0] = 1.0
        return m
    pos = np.full(n_new, (n_old - 1) / 2.0) if n_new == 1 else np.linspace(0, n_old - 1, n_new)
    lo = np.clip(np.floor(pos).astype(int), 0, n_old - 2)
    frac = pos - lo
    m[np.arange(n_new), lo] = 1.0 - frac
    m[np.arange(n_new), lo + 1] += frac
    return m


def interpolate_pos_encoding(pe, src_grid: tuple[int, int], new_grid: tuple[int, int]):
    """Bilinearly resize the spatial rows of a (1 + gh*gw, d) table; class row untouched.

    Accepts an array or a Var (the resize is a fixed linear map, so it stays differentiable).
    """
    if min(new_grid) <= 0:
        raise ValueError(f"invalid target grid {new_grid}")
    if tuple(new_grid) == tuple(src_grid):
        return pe
    pe = ag.as_var(pe)
    gh, gw = src_grid
    if pe.shape[0] != gh * gw + 1:
        raise ValueError(f"table has {pe.shape[0]} rows, grid {src_grid} needs {gh * gw + 1}")
    m = np.kron(_interp_matrix(gh, new_grid[0]), _interp_matrix(gw, new_grid[1]))
    spatial = ag.matmul(m, pe[1:])
    return ag.concat([pe[0:1], spatial], axis=0)


def vit_encode(images, p, cfg: VitConfig) -> ag.Var:
    """Encode (..., C, H, W) images to (..., d) class-token embeddings."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim < 3 or images.shape[-3] != cfg.channels:
        raise ValueError(f"expected (..., {cfg.channels}, H, W) input, got {images.shape}")
    h, w = images.shape[-2:]
    if h % cfg.patch_size or w % cfg.patch_size:
        raise ValueError(f"image {h}x{w} not divisible by patch {cfg.patch_size}")
    grid = (h // cfg.patch_size, w // cfg.patch_size)
    x = patchify(images, p, cfg.patch_size)
    pos = interpolate_pos_encoding(p["pos"], cfg.grid, grid)
    x = layer_norm(x + pos, p["ln_pre.g"], p["ln_pre.b"])
    lead = x.shape[:-2]
    n = x.shape[-2]
    x = x.reshape((-1, n, cfg.embed_dim))
    for i in range(cfg.layers):
        x = encoder_block(x, p.sub(f"blocks.{i}"), cfg.heads)
    cls = layer_norm(x[:, 0], p["ln_post.g"], p["ln_post.b"])
    out = ag.linear(cls, p["proj"])
    return out.reshape(lead + (cfg.embed_dim,))


# text

DEFAULT_PROMPTS = (
    "a video of a person doing {}.",
    "a photo of a person doing {}.",
    "a video of {}.",
    "a clip of {}.",
    "a short clip showing {}.",
    "footage of {}.",
    "a recording of {}.",
    "an example of {}.",
    "a demonstration of {}.",
    "a blurry video of {}.",
    "a low resolution video of {}.",
    "a cropped video of {}.",
    "a close up video of {}.",
    "a good video of {}.",
    "a bad video of {}.",
    "a dark video of {}.",
    "a bright video of {}.",
    "a noisy video of {}.",
    "a tiny video of {}.",
    "a large video of {}.",
    "a video showing {}.",
    "a scene with {}.",
    "a frame sequence of {}.",
    "a cartoon of {}.",
    "a rendering of {}.",
    "a synthetic video of {}.",
    "a toy video of {}.",
    "something like {}.",
)


@dataclass(frozen=True)
class PromptSet:
    templates: tuple[str, ...] = DEFAULT_PROMPTS

    def __post_init__(self):
        if not self.templates:
            raise ValueError("prompt set is empty")
        for t in self.templates:
            if t.count("{}") != 1:
                raise ValueError(f"template must contain exactly one slot: {t!r}")

    def fill(self, name: str) -> list[str]:
        return [t.format(name) for t in self.templates]


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def token_ids(text: str, cfg: TextConfig) -> list[int]:
    toks = tokenize(text)[: cfg.max_len]
    return [zlib.crc32(t.encode()) % cfg.vocab_size for t in toks]


def init_text(ps: ParamSet, prefix: str, cfg: TextConfig, rng: np.random.Generator):
    d = cfg.embed_dim
    ps.add(f"{prefix}.tok_emb", rng.normal(0, 0.5, size=(cfg.vocab_size, d)))
    ps.add(f"{prefix}.pos_emb", rng.normal(0, 0.02, size=(cfg.max_len, d)))
    for i in range(cfg.layers):
        init_encoder_block(ps, f"{prefix}.blocks.{i}", d, cfg.mlp_ratio * d, rng)
    init_layer_norm(ps, f"{prefix}.ln_final", d)
    ps.add(f"{prefix}.proj", rng.normal(0, d ** -0.5, size=(d, d)))


def encode_token_batch(ids: np.ndarray, p, cfg: TextConfig) -> ag.Var:
    """Encode equal-length token sequences (B, L) to mean-pooled (B, d) embeddings."""
    ids = np.asarray(ids, dtype=np.int64)
    length = ids.shape[1]
    x = ag.getitem(ag.as_var(p["tok_emb"]), ids) + ag.as_var(p["pos_emb"])[:length]
    for i in range(cfg.layers):
        x = encoder_block(x, p.sub(f"blocks.{i}"), cfg.heads)
    x = layer_norm(x, p["ln_final.g"], p["ln_final.b"])
    return ag.linear(x.mean(axis=1), p["proj"])


def encode_texts(texts: list[str], p, cfg: TextConfig) -> ag.Var:
    """Encode arbitrary strings (grouped by token length) to (n, d), input order kept."""
    seqs = [token_ids(t, cfg) for t in texts]
    for t, s in zip(texts, seqs):
        if not s:
            raise ConfigError(f"text {t!r} maps to no tokens")
    groups: dict[int, list[int]] = {}
    for i, s in enumerate(seqs):
        groups.setdefault(len(s), []).append(i)
    parts, order = [], []
    for length in sorted(groups):
        idx = groups[length]
        parts.append(encode_token_batch(np.array([seqs[i] for i in idx]), p, cfg))
        order.extend(idx)
    out = ag.concat(parts, axis=0) if len(parts) > 1 else parts[0]
    inv = np.argsort(order)
    return out[inv]


def encode_class(name: str, prompts: PromptSet, p, cfg: TextConfig) -> np.ndarray:
    """Prompt-ensembled, L2-normalized class embedding."""
    if not name or not name.strip():
        raise ValueError("class name is empty")
    return build_embedding_table([name], prompts, p, cfg).matrix[0]


@dataclass
class EmbeddingTable:
    names: list[str]
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("class names must be unique")
        if self.matrix.shape[0] != len(self.names):
            raise ValueError("one embedding row per class required")

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def subset(self, names: list[str]) -> "EmbeddingTable":
        return EmbeddingTable(list(names), self.matrix[[self.index(n) for n in names]])


def build_embedding_table(classes: list[str], prompts: PromptSet, p, cfg: TextConfig) -> EmbeddingTable:
    classes = list(classes)
    if len(set(classes)) != len(classes):
        raise ValueError("duplicate class names")
    for c in classes:
        if not c or not c.strip():
            raise ValueError("class name is empty")
    k = len(prompts.templates)
    texts = [t for c in classes for t in prompts.fill(c)]
    with ag.no_grad():
        emb = encode_texts(texts, p, cfg).value
    mean = emb.reshape(len(classes), k, -1).mean(axis=1)
    norm = np.linalg.norm(mean, axis=1, keepdims=True)
    return EmbeddingTable(classes, mean / norm)
