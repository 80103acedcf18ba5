"""Base-class training: the dual-branch loss, the freezing contract and the AdamW loop."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import model as mv
from .numcore import autograd as ag
from .numcore import movt
from .numcore.nn import ConfigError
from .numcore.params import ParamSet, adamw_step, half_cosine_lr

TRAINABLE_LAYER_GRID = ("1", "3", "6", "9", "all")


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.5
    tau: float = 0.01
    batch_size: int = 32
    epochs: int = 50
    base_lr: float = 1e-4
    weight_decay: float = 0.05
    trainable_layers: str = "all"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha {self.alpha} outside [0, 1]")
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.base_lr < 0 or self.weight_decay < 0:
            raise ConfigError("learning rate and weight decay must be non-negative")
        k = str(self.trainable_layers)
        if k != "all" and not (k.isdigit() and int(k) >= 1):
            raise ConfigError(f"trainable_layers must be a positive integer or 'all', got {k!r}")
        object.__setattr__(self, "trainable_layers", k)


# loss

def branch_logits(emb, table: np.ndarray, tau: float):
    """Cosine similarity to every class row, divided by ``tau``."""
    return ag.matmul(ag.l2_normalize(emb), np.asarray(table).T) * (1.0 / tau)


def cross_entropy(logits, labels) -> ag.Var:
    labels = np.asarray(labels, dtype=np.int64)
    logp = ag.log_softmax(logits, axis=-1)
    picked = logp[np.arange(labels.shape[0]), labels]
    return -picked.mean()


def mov_loss(v_m, x_m, table: np.ndarray, labels, alpha: float = 0.5, tau: float = 0.01) -> ag.Var:
    """alpha * CE(video branch) + (1 - alpha) * CE(auxiliary branch), batch-averaged.

    A missing branch (``None``) gives its weight to the other one.
    """
    table = np.asarray(table)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if table.ndim != 2 or table.shape[0] == 0:
        raise ValueError("class table must be a non-empty matrix")
    if labels.min() < 0 or labels.max() >= table.shape[0]:
        raise ValueError(f"label outside [0, {table.shape[0]})")
    if not tau > 0:
        raise ValueError("tau must be positive")
    if v_m is None and x_m is None:
        raise ValueError("both branches are missing")
    if v_m is None:
        alpha = 0.0
    elif x_m is None:
        alpha = 1.0

    def term(emb):
        emb = ag.as_var(emb)
        if emb.ndim == 1:
            emb = emb.reshape((1, -1))
        return cross_entropy(branch_logits(emb, table, tau), labels)

    loss = None
    if alpha > 0:
        loss = term(v_m) * alpha
    if alpha < 1:
        rest = term(x_m) * (1.0 - alpha)
        loss = rest if loss is None else loss + rest
    return loss


# freezing

@dataclass(frozen=True)
class FreezePlan:
    trainable: dict[str, bool]

    def apply(self, params: ParamSet):
        for name, flag in self.trainable.items():
            params[name].trainable = flag

    def names(self, flag: bool = True) -> list[str]:
        return [n for n, f in self.trainable.items() if f == flag]


def build_freeze_plan(cfg: TrainConfig, params: ParamSet, model_cfg: mv.ModelConfig) -> FreezePlan:
    """Video and text encoders frozen; auxiliary encoder trainable in its last k blocks; heads trainable.

    For k below "all" only the final k transformer blocks of the auxiliary
    encoder train; its tokenizer, final LN and projection stay frozen.
    """
    depth = model_cfg.vit.layers
    k = cfg.trainable_layers
    if k != "all" and int(k) > depth:
        raise ConfigError(f"trainable_layers {k} exceeds encoder depth {depth}")
    first = 0 if k == "all" else depth - int(k)
    flags = {}
    for name in params.names():
        if name.startswith(("text.", "video_enc.")):
            flags[name] = False
        elif name.startswith("aux_enc."):
            rest = name[len("aux_enc."):]
            if k == "all":
                flags[name] = True
            else:
                flags[name] = rest.startswith("blocks.") and int(rest.split(".")[1]) >= first
        else:
            flags[name] = True
    return FreezePlan(flags)


def digest(params: ParamSet, names) -> str:
    h = hashlib.sha256()
    for n in sorted(names):
        h.update(n.encode())
        h.update(params[n].value.tobytes())
    return h.hexdigest()


# training

@dataclass
class TrainData:
    """Cached frozen video features and raw auxiliary inputs for every training clip."""
    v: np.ndarray  # (S, K, N, d)
    aux: np.ndarray  # (S, K, ...) flow uint8 frames or spectrogram crops
    labels: np.ndarray  # (S,)
    table: np.ndarray  # (p, d) base class embeddings

    def __post_init__(self):
        if len(self.labels) == 0:
            raise ValueError("empty training set")
        if not (len(self.v) == len(self.aux) == len(self.labels)):
            raise ValueError("feature and label counts differ")


def aux_model_input(aux, model_cfg: mv.ModelConfig) -> np.ndarray:
    if model_cfg.modality == "flow":
        return mv.flow_to_input(aux)
    return mv.spectrogram_to_input(aux)


@dataclass
class TrainResult:
    params: ParamSet
    curve: list[tuple[int, float, float]] = field(default_factory=list)  # (step, lr, loss)
    train_acc: float = 0.0


def batch_accuracy(out: mv.Outputs, table, labels) -> np.ndarray:
    emb = out.v_m if out.v_m is not None else out.x_m
    logits = branch_logits(emb.value, table, 1.0).value
    return np.argmax(logits, axis=-1) == labels


def train(params: ParamSet, model_cfg: mv.ModelConfig, data: TrainData, cfg: TrainConfig,
          log=None) -> TrainResult:
    """AdamW with half-cosine decay over base-class clips; ``params`` is updated in place."""
    plan = build_freeze_plan(cfg, params, model_cfg)
    plan.apply(params)
    for name in params.trainable_names():
        params[name].reset_moments()
    frozen = plan.names(False)
    frozen_digest = digest(params, frozen)
    n = len(data.labels)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total = steps_per_epoch * cfg.epochs
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult(params)
    step = 0
    correct = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        views = rng.integers(0, data.v.shape[1], size=n)
        correct = []
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            k = views[idx]
            p = params.bind()
            aux_in = aux_model_input(data.aux[idx, k], model_cfg) if model_cfg.uses_aux else None
            out = mv.forward(p, model_cfg, data.v[idx, k], aux_in)
            labels = data.labels[idx]
            loss = mov_loss(out.v_m, out.x_m, data.table, labels, cfg.alpha, cfg.tau)
            loss.backward()
            lr = half_cosine_lr(cfg.base_lr, step, total)
            adamw_step(params, p.grads(), lr, cfg.weight_decay, step=step + 1)
            result.curve.append((step, lr, float(loss.value)))
            correct.append(batch_accuracy(out, data.table, labels))
            step += 1
        if log is not None:
            log(f"epoch {epoch + 1}/{cfg.epochs} loss {result.curve[-1][2]:.4f}")
    if correct:
        result.train_acc = 100.0 * float(np.concatenate(correct).mean())
    if digest(params, frozen) != frozen_digest:
        raise RuntimeError("frozen parameters changed during training")
    return result


# checkpoints

def save_checkpoint(directory, params: ParamSet, model_cfg: mv.ModelConfig, cfg: TrainConfig,
                    curve=(), extra: dict | None = None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {n: {"trainable": p.trainable} for n, p in params.items()}
    movt.save_bundle(directory / "params", params.state(), meta)
    snapshot = {"train": asdict(cfg), "model": model_config_dict(model_cfg), **(extra or {})}
    (directory / "config.json").write_text(json.dumps(snapshot, indent=1, sort_keys=True))
    with open(directory / "loss_curve.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "lr", "loss"])
        for s, lr, loss in curve:
            w.writerow([s, repr(lr), repr(loss)])


def load_checkpoint(directory) -> tuple[ParamSet, mv.ModelConfig, TrainConfig]:
    directory = Path(directory)
    tensors, meta = movt.load_bundle(directory / "params")
    ps = ParamSet()
    for name, arr in tensors.items():
        ps.add(name, arr, trainable=meta[name].get("trainable", True))
    snap = json.loads((directory / "config.json").read_text())
    return ps, model_config_from_dict(snap["model"]), TrainConfig(**snap["train"])


def model_config_dict(cfg: mv.ModelConfig) -> dict:
    return asdict(cfg)


def model_config_from_dict(d: dict) -> mv.ModelConfig:
    vit = dict(d["vit"])
    vit["image_hw"] = tuple(vit["image_hw"])
    return mv.ModelConfig(vit=mv.VitConfig(**vit), text=mv.TextConfig(**d["text"]),
                          **{k: v for k, v in d.items() if k not in ("vit", "text")})
