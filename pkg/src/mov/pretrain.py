"""Contrastive image-text pretraining that stands in for a web-scale vision-language backbone.

Still frames of every appearance are paired with templated captions. Some stills
carry a motion trail and their caption names the matching action, which gives the
text encoder action words whose embeddings follow the direction of motion. Dataset
frames never have trails, so a single video frame still cannot tell actions apart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as mv
from .encoders import DEFAULT_PROMPTS, encode_texts, vit_encode
from .numcore import autograd as ag
from .numcore.params import ParamSet, adamw_step, half_cosine_lr
from .synthdata import ACTIONS, all_appearances, render_still
from .trainer import cross_entropy


@dataclass(frozen=True)
class PretrainConfig:
    steps: int = 1000
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.01
    tau: float = 0.01
    warmup: int = 50
    views_per_look: int = 2  # distinct motion states per appearance in a batch
    image_size: int = 32
    seed: int = 0


def caption(color: str, shape: str, action: str | None, rng: np.random.Generator) -> str:
    name = f"{color} {shape}" + (f" {action}" if action else "")
    return DEFAULT_PROMPTS[int(rng.integers(len(DEFAULT_PROMPTS)))].format(name)


def sample_pair(look: tuple[str, str], action, rng: np.random.Generator, size: int):
    """A still and its caption; an ``action`` adds both a motion trail and the action word."""
    image = render_still(*look, rng, size, trail=action.velocity if action else None)
    return image, caption(*look, action.name if action else None, rng)


def sample_batch(looks, rng: np.random.Generator, cfg: "PretrainConfig"):
    """Appearances without replacement, each shown in distinct motion states (or none).

    Same-appearance rows make the action word the only thing separating them.
    """
    k = max(1, cfg.views_per_look)
    n = max(1, min(cfg.batch_size // k, len(looks)))
    states = (None,) + ACTIONS
    pairs = []
    for i in rng.choice(len(looks), size=n, replace=False):
        for s in rng.choice(len(states), size=min(k, len(states)), replace=False):
            pairs.append(sample_pair(looks[i], states[s], rng, cfg.image_size))
    images, texts = zip(*pairs)
    return np.stack(images), list(texts)


def contrastive_loss(img, txt, tau: float):
    """Symmetric InfoNCE over matched rows."""
    logits = ag.matmul(ag.l2_normalize(img), ag.swapaxes(ag.l2_normalize(txt), 0, 1)) * (1.0 / tau)
    labels = np.arange(img.shape[0])
    return (cross_entropy(logits, labels) + cross_entropy(ag.swapaxes(logits, 0, 1), labels)) * 0.5


def pretrain_backbone(model_cfg: mv.ModelConfig, cfg: PretrainConfig = PretrainConfig(),
                      log=None) -> tuple[ParamSet, list[float]]:
    """Returns ``vision.*`` / ``text.*`` weights and the per-step loss."""
    ps = mv.init_backbone(model_cfg, cfg.seed)
    looks = all_appearances()
    rng = np.random.default_rng([cfg.seed, 2])
    losses = []
    for step in range(cfg.steps):
        images, texts = sample_batch(looks, rng, cfg)
        p = ps.bind()
        img = vit_encode(mv.frames_to_input(images), p.sub("vision"), model_cfg.vit)
        txt = encode_texts(texts, p.sub("text"), model_cfg.text)
        loss = contrastive_loss(img, txt, cfg.tau)
        loss.backward()
        lr = cfg.lr * min(1.0, (step + 1) / max(cfg.warmup, 1))
        if step >= cfg.warmup:
            lr = half_cosine_lr(cfg.lr, step - cfg.warmup, cfg.steps - cfg.warmup)
        adamw_step(ps, p.grads(), lr, cfg.weight_decay, step=step + 1)
        losses.append(float(loss.value))
        if log is not None and (step + 1) % 100 == 0:
            log(f"pretrain step {step + 1}/{cfg.steps} loss {np.mean(losses[-100:]):.4f}")
    return ps, losses
