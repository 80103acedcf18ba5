"""Glue from a manifest and media cache to training and evaluation inputs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import model as mv
from .encoders import EmbeddingTable, PromptSet, build_embedding_table
from .evaluator import (EvalData, EvalReport, InferenceConfig, SplitEmbeddings, embed_splits,
                        report_from_embeddings)
from .numcore import movt
from .numcore.params import ParamSet
from .preprocess import DataConfig, MediaCache, eval_views, preprocess_dataset, train_views
from .pretrain import PretrainConfig, pretrain_backbone
from .synthdata import DatasetManifest
from .trainer import TrainConfig, TrainData, TrainResult, train


def class_tables(params: ParamSet, model_cfg: mv.ModelConfig, manifest: DatasetManifest,
                 prompts: PromptSet = PromptSet()) -> tuple[EmbeddingTable, EmbeddingTable]:
    text = params.constants().sub("text")
    return (build_embedding_table(manifest.base_classes, prompts, text, model_cfg.text),
            build_embedding_table(manifest.novel_classes, prompts, text, model_cfg.text))


def video_features(params: ParamSet, model_cfg: mv.ModelConfig, frames: np.ndarray,
                   batch: int = 256) -> np.ndarray:
    """Frozen-encoder features for (..., H, W, 3) frames, computed in fixed-size chunks."""
    lead = frames.shape[:-3]
    flat = frames.reshape((-1,) + frames.shape[-3:])
    parts = [mv.encode_video(params, model_cfg, flat[i:i + batch]) for i in range(0, len(flat), batch)]
    return np.concatenate(parts).reshape(lead + (model_cfg.d,))


@dataclass
class Prepared:
    train: TrainData
    base: EvalData
    novel: EvalData
    base_table: EmbeddingTable
    novel_table: EmbeddingTable


def _labels(records, names):
    index = {n: i for i, n in enumerate(names)}
    return np.array([index[r.label] for r in records], dtype=np.int64)


def prepare(params: ParamSet, model_cfg: mv.ModelConfig, manifest: DatasetManifest,
            cache: MediaCache, data_cfg: DataConfig = DataConfig(), seed: int = 0,
            prompts: PromptSet = PromptSet()) -> Prepared:
    base_table, novel_table = class_tables(params, model_cfg, manifest, prompts)
    mod = model_cfg.modality

    recs = manifest.split("base-train")
    if not recs:
        raise ValueError("manifest has no base-train samples")
    tv = train_views(cache, cache.index([r.id for r in recs]), _labels(recs, manifest.base_classes),
                     data_cfg, mod, seed)
    train = TrainData(video_features(params, model_cfg, tv.frames), tv.aux, tv.labels, base_table.matrix)

    def split(name, classes):
        rs = manifest.split(name)
        vs = eval_views(cache, cache.index([r.id for r in rs]), _labels(rs, classes), data_cfg, mod)
        return EvalData(video_features(params, model_cfg, vs.frames), vs.aux, vs.labels)

    return Prepared(train, split("base-test", manifest.base_classes),
                    split("novel-test", manifest.novel_classes), base_table, novel_table)


# whole-run helpers shared by the command line and the acceptance suite

def load_backbone(directory) -> ParamSet:
    tensors, _ = movt.load_bundle(directory)
    ps = ParamSet()
    for name, arr in tensors.items():
        ps.add(name, arr, trainable=False)
    return ps


def obtain_backbone(model_cfg: mv.ModelConfig, pre_cfg: PretrainConfig, path: str | Path,
                    log=None) -> ParamSet:
    """Load the backbone at ``path`` or pretrain and save it there first."""
    path = Path(path)
    if (path / "manifest.json").exists():
        return load_backbone(path)
    ps, losses = pretrain_backbone(model_cfg, pre_cfg, log)
    movt.save_bundle(path, ps.state())
    (path / "pretrain_loss.txt").write_text("\n".join(repr(x) for x in losses) + "\n")
    return ps


def load_cache(manifest: DatasetManifest, cache_path, data_cfg: DataConfig, jobs: int = 1) -> MediaCache:
    """The preprocessed cache if given, else decode every record now."""
    if cache_path:
        cache = MediaCache.load(cache_path)
        missing = {r.id for r in manifest.records} - set(cache.ids)
        if missing:
            raise ValueError(f"cache lacks {len(missing)} manifest records, e.g. {sorted(missing)[0]}")
        return cache
    return preprocess_dataset(manifest, data_cfg, jobs)


@dataclass
class TrainedRun:
    params: ParamSet
    model_cfg: mv.ModelConfig
    prepared: Prepared
    result: TrainResult


def train_run(backbone: ParamSet, model_cfg: mv.ModelConfig, train_cfg: TrainConfig,
              manifest: DatasetManifest, cache: MediaCache, data_cfg: DataConfig,
              prepared: Prepared | None = None, log=None) -> TrainedRun:
    """Assemble a model from ``backbone``, cache features and train it.

    ``prepared`` reuses features from an earlier run with the same backbone and modality.
    """
    params = mv.init_model(model_cfg, train_cfg.seed, backbone)
    if prepared is None:
        prepared = prepare(params, model_cfg, manifest, cache, data_cfg, train_cfg.seed)
    result = train(params, model_cfg, prepared.train, train_cfg, log)
    return TrainedRun(params, model_cfg, prepared, result)


def embed_run(run: TrainedRun) -> SplitEmbeddings:
    return embed_splits(run.params, run.model_cfg, run.prepared.base, run.prepared.novel)


def report_run(run: TrainedRun, inf_cfg: InferenceConfig = InferenceConfig(),
               emb: SplitEmbeddings | None = None) -> EvalReport:
    emb = emb if emb is not None else embed_run(run)
    return report_from_embeddings(emb, run.model_cfg, run.prepared.base_table, run.prepared.novel_table, inf_cfg)
