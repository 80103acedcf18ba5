"""Base and novel class inference, view aggregation, metrics and reports."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import model as mv
from .numcore import autograd as ag
from .numcore.functional import cosine_matrix, entropy, softmax
from .numcore.nn import ConfigError
from .numcore.params import ParamSet
from .trainer import aux_model_input

TAU_V_GRID = (0.01, 0.003, 0.001, 0.0003, 0.0001)


@dataclass(frozen=True)
class InferenceConfig:
    tau: float = 0.01
    tau_v: float = 0.003
    tau_aux: float = 0.01
    beta: float = 0.25

    def __post_init__(self):
        for name in ("tau", "tau_v", "tau_aux"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta {self.beta} outside [0, 1]")


def _check_table(table):
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] == 0:
        raise ValueError("class table is empty")
    return table


def class_probs(emb, table, tau: float) -> np.ndarray:
    """softmax(cos(emb, rows) / tau) for one (d,) or many (n, d) embeddings."""
    emb = np.asarray(emb, dtype=np.float64)
    probs = softmax(cosine_matrix(emb, _check_table(table)), tau)
    return probs[0] if emb.ndim == 1 else probs


def predict_base(v_m, base_table, tau: float = 0.01) -> np.ndarray:
    return class_probs(v_m, base_table, tau)


def predict_novel(x_m, v_pooled, novel_table, cfg: InferenceConfig = InferenceConfig()) -> np.ndarray:
    """beta * P_aux + (1 - beta) * P_video, each a calibrated softmax over the novel classes."""
    p_x = class_probs(x_m, novel_table, cfg.tau_aux)
    p_v = class_probs(v_pooled, novel_table, cfg.tau_v)
    return cfg.beta * p_x + (1.0 - cfg.beta) * p_v


def aggregate_views(scores) -> np.ndarray:
    """Arithmetic mean of per-view probability vectors."""
    scores = [np.asarray(s, dtype=np.float64) for s in scores]
    if not scores:
        raise ValueError("no views to aggregate")
    if len({s.shape for s in scores}) != 1:
        raise ValueError("views have different class counts")
    return np.mean(scores, axis=0)


def harmonic_mean(a: float, b: float) -> float:
    if a < 0 or b < 0:
        raise ValueError("accuracies must be non-negative")
    if a + b == 0:
        return 0.0
    return 2.0 * a * b / (a + b)


def top1(probs) -> np.ndarray:
    """argmax with ties broken by the lowest class index."""
    return np.argmax(np.asarray(probs), axis=-1)


@dataclass
class EvalReport:
    base_acc: float
    novel_acc: float
    harmonic_mean: float
    per_class: dict[str, float] = field(default_factory=dict)
    entropy_video: float = 0.0
    entropy_aux: float = 0.0
    n_base: int = 0
    n_novel: int = 0

    def to_json(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=1, sort_keys=True))

    @classmethod
    def from_json(cls, path) -> "EvalReport":
        return cls(**json.loads(Path(path).read_text()))

    def summary_row(self) -> dict:
        return {"base_acc": f"{self.base_acc:.1f}", "novel_acc": f"{self.novel_acc:.1f}",
                "harmonic_mean": f"{self.harmonic_mean:.1f}"}

    def to_csv(self, path):
        row = self.summary_row()
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(row))
            w.writeheader()
            w.writerow(row)


def per_class_accuracy(pred, labels, names) -> dict[str, float]:
    pred, labels = np.asarray(pred), np.asarray(labels)
    out = {}
    for i, n in enumerate(names):
        sel = labels == i
        if sel.any():
            out[n] = 100.0 * float((pred[sel] == i).mean())
    return out


def per_class_delta(run_a: dict[str, float], run_b: dict[str, float], k: int | None = None):
    """(class, a - b) sorted by descending delta; ties by class name.

    With ``k`` returns the top-k and bottom-k lists instead.
    """
    if isinstance(run_a, EvalReport):
        run_a = run_a.per_class
    if isinstance(run_b, EvalReport):
        run_b = run_b.per_class
    if set(run_a) != set(run_b):
        raise ValueError("runs cover different classes")
    deltas = sorted(((c, run_a[c] - run_b[c]) for c in run_a), key=lambda t: (-t[1], t[0]))
    if k is None:
        return deltas
    return deltas[:k], deltas[::-1][:k]


# model-level inference

@dataclass
class EvalData:
    """Per-view cached backbone features and auxiliary inputs for one split."""
    v: np.ndarray  # (S, V, N, d)
    aux: np.ndarray  # (S, V, ...)
    labels: np.ndarray  # (S,)


def view_embeddings(params: ParamSet, model_cfg: mv.ModelConfig, data: EvalData, batch: int = 64):
    """v_m, x_m (each (S, V, d) or None) and the pooled backbone features (S, V, d)."""
    s, nv = data.v.shape[:2]
    flat_v = data.v.reshape((s * nv,) + data.v.shape[2:])
    flat_aux = data.aux.reshape((s * nv,) + data.aux.shape[2:])
    p = params.constants()
    vm, xm, vp = [], [], []
    with ag.no_grad():
        for i in range(0, s * nv, batch):
            aux_in = aux_model_input(flat_aux[i:i + batch], model_cfg) if model_cfg.uses_aux else None
            out = mv.forward(p, model_cfg, flat_v[i:i + batch], aux_in)
            vm.append(None if out.v_m is None else out.v_m.value)
            xm.append(None if out.x_m is None else out.x_m.value)
            vp.append(out.v_pool)

    def stack(parts):
        return None if parts[0] is None else np.concatenate(parts).reshape(s, nv, -1)

    return stack(vm), stack(xm), stack(vp)


def base_scores(v_m, x_m, base_table, model_cfg: mv.ModelConfig, cfg: InferenceConfig) -> np.ndarray:
    """Per-view base-class probabilities, (S, V, p)."""
    mode = model_cfg.fusion_mode
    if mode == "aux-only":
        return class_probs(x_m, base_table, cfg.tau)
    p_v = class_probs(v_m, base_table, cfg.tau)
    if mode == "score-fusion":
        return cfg.beta * class_probs(x_m, base_table, cfg.tau) + (1 - cfg.beta) * p_v
    return p_v


def novel_scores(x_m, v_pool, novel_table, model_cfg: mv.ModelConfig, cfg: InferenceConfig):
    """Per-view novel-class probabilities plus the two path distributions."""
    mode = model_cfg.fusion_mode
    p_v = class_probs(v_pool, novel_table, cfg.tau_v)
    if mode == "video-only":
        return p_v, p_v, None
    p_x = class_probs(x_m, novel_table, cfg.tau_aux)
    if mode == "aux-only":
        return p_x, p_v, p_x
    return cfg.beta * p_x + (1 - cfg.beta) * p_v, p_v, p_x


@dataclass
class SplitEmbeddings:
    """Everything inference needs, computed once so calibration sweeps reuse it."""
    base_vm: np.ndarray | None
    base_xm: np.ndarray | None
    novel_xm: np.ndarray | None
    novel_vpool: np.ndarray
    base_labels: np.ndarray
    novel_labels: np.ndarray


def embed_splits(params: ParamSet, model_cfg: mv.ModelConfig, base: EvalData, novel: EvalData) -> SplitEmbeddings:
    b_vm, b_xm, _ = view_embeddings(params, model_cfg, base)
    _, n_xm, n_vp = view_embeddings(params, model_cfg, novel)
    return SplitEmbeddings(b_vm, b_xm, n_xm, n_vp, np.asarray(base.labels), np.asarray(novel.labels))


def _names_and_matrix(table, names):
    names = list(names if names is not None else getattr(table, "names", []))
    return names, _check_table(getattr(table, "matrix", table))


def report_from_embeddings(emb: SplitEmbeddings, model_cfg: mv.ModelConfig, base_table, novel_table,
                           cfg: InferenceConfig = InferenceConfig(), base_names=None,
                           novel_names=None) -> EvalReport:
    base_names, b_mat = _names_and_matrix(base_table, base_names)
    novel_names, n_mat = _names_and_matrix(novel_table, novel_names)
    if set(base_names) & set(novel_names):
        raise ValueError(f"base and novel classes overlap: {sorted(set(base_names) & set(novel_names))}")

    pb = aggregate_views(np.moveaxis(base_scores(emb.base_vm, emb.base_xm, b_mat, model_cfg, cfg), 1, 0))
    pred_b = top1(pb)
    fused, p_v, p_x = novel_scores(emb.novel_xm, emb.novel_vpool, n_mat, model_cfg, cfg)
    pred_n = top1(aggregate_views(np.moveaxis(fused, 1, 0)))

    base_acc = 100.0 * float((pred_b == emb.base_labels).mean())
    novel_acc = 100.0 * float((pred_n == emb.novel_labels).mean())
    per_class = {}
    if base_names:
        per_class.update(per_class_accuracy(pred_b, emb.base_labels, base_names))
    if novel_names:
        per_class.update(per_class_accuracy(pred_n, emb.novel_labels, novel_names))

    def mean_entropy(p):
        return float(np.mean(entropy(aggregate_views(np.moveaxis(p, 1, 0)))))

    return EvalReport(base_acc, novel_acc, harmonic_mean(base_acc, novel_acc), per_class,
                      entropy_video=mean_entropy(p_v),
                      entropy_aux=mean_entropy(p_x) if p_x is not None else 0.0,
                      n_base=int(len(emb.base_labels)), n_novel=int(len(emb.novel_labels)))


def evaluate(params: ParamSet, model_cfg: mv.ModelConfig, base: EvalData, novel: EvalData,
             base_table, novel_table, cfg: InferenceConfig = InferenceConfig(),
             base_names=None, novel_names=None) -> EvalReport:
    """Top-1 accuracy on base and novel splits, harmonic mean, per-class accuracy and path entropies."""
    bn, _ = _names_and_matrix(base_table, base_names)
    nn_, _ = _names_and_matrix(novel_table, novel_names)
    if set(bn) & set(nn_):
        raise ValueError(f"base and novel classes overlap: {sorted(set(bn) & set(nn_))}")
    emb = embed_splits(params, model_cfg, base, novel)
    return report_from_embeddings(emb, model_cfg, base_table, novel_table, cfg, base_names, novel_names)
