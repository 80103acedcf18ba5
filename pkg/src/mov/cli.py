"""``mov`` command line: synth, preprocess, train, eval, ablate, report."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

from . import evaluator as ev
from . import pipeline as pl
from . import synthdata as sd
from .config import RunConfig
from .model import FUSION_MODES
from .numcore.movt import MovtError
from .numcore.nn import ConfigError
from .preprocess import preprocess_dataset
from .trainer import TRAINABLE_LAYER_GRID, load_checkpoint, save_checkpoint

ABLATION_GRIDS = {
    "trainable_layers": TRAINABLE_LAYER_GRID,
    "fusion_mode": FUSION_MODES,
    "tau_v": ev.TAU_V_GRID,
    "alpha": (0.0, 0.25, 0.5, 0.75, 1.0),
    "beta": (0.0, 0.25, 0.5, 0.75, 1.0),
}
# axes that only change inference reuse one trained model
INFERENCE_AXES = ("tau_v", "beta")

REPORT_COLUMNS = ("run", "base_acc", "novel_acc", "harmonic_mean")


class UsageError(Exception):
    pass


def _log(msg: str):
    print(msg, file=sys.stderr, flush=True)


# configuration

def effective_config(args) -> RunConfig:
    over: dict[str, dict[str, str]] = {"run": {}}
    if args.seed is not None:
        over["run"]["seed"] = str(args.seed)
    if args.jobs is not None:
        over["run"]["jobs"] = str(args.jobs)
    for section, key, attr in (("synth", "n_classes", "classes"), ("synth", "train_per_class", "per_class"),
                               ("synth", "test_per_class", "test_per_class"), ("train", "epochs", "epochs"),
                               ("train", "base_lr", "lr"), ("train", "trainable_layers", "trainable_layers"),
                               ("model", "fusion_mode", "fusion_mode"), ("model", "modality", "modality"),
                               ("run", "backbone", "backbone")):
        value = getattr(args, attr, None)
        if value is not None:
            over.setdefault(section, {})[key] = str(value)
    return RunConfig.load(args.config, over)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run(out: Path, cfg: RunConfig, command: str, started: float, **summary):
    cfg.save(out / "config.ini")
    doc = {"command": command, "seed": cfg.seed, "seconds": round(time.time() - started, 3), **summary}
    (out / "run.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _backbone(cfg: RunConfig, out: Path):
    path = cfg.run.backbone or str(out / "backbone")
    return pl.obtain_backbone(cfg.model_config, cfg.pretrain, path, _log), path


def _inputs(args, cfg: RunConfig):
    manifest = sd.load_manifest(args.manifest)
    cache_path = args.cache
    if cache_path is None:
        guess = Path(args.manifest).parent / "cache.npz"
        cache_path = guess if guess.exists() else None
    return manifest, pl.load_cache(manifest, cache_path, cfg.data, cfg.run.jobs)


# commands

def cmd_synth(args, cfg: RunConfig, started: float) -> int:
    out = _out(args)
    manifest = sd.generate_dataset(out, cfg.synth, cfg.run.jobs)
    _write_run(out, cfg, "synth", started, manifest=str(out / "manifest.jsonl"),
               records=len(manifest.records), base_classes=manifest.base_classes,
               novel_classes=manifest.novel_classes)
    return 0


def cmd_preprocess(args, cfg: RunConfig, started: float) -> int:
    out = _out(args)
    manifest = sd.load_manifest(args.manifest)
    cache = preprocess_dataset(manifest, cfg.data, cfg.run.jobs)
    cache.save(out / "cache.npz")
    _write_run(out, cfg, "preprocess", started, cache=str(out / "cache.npz"), samples=len(cache.ids))
    return 0


def cmd_train(args, cfg: RunConfig, started: float) -> int:
    out = _out(args)
    manifest, cache = _inputs(args, cfg)
    backbone, bb_path = _backbone(cfg, out)
    run = pl.train_run(backbone, cfg.model_config, cfg.train, manifest, cache, cfg.data, log=_log)
    save_checkpoint(out / "checkpoint", run.params, run.model_cfg, cfg.train, run.result.curve,
                    extra={"run_config": cfg.to_text()})
    report = pl.report_run(run, cfg.inference)
    report.to_json(out / "report.json")
    report.to_csv(out / "report.csv")
    _write_run(out, cfg, "train", started, checkpoint=str(out / "checkpoint"), backbone=bb_path,
               train_acc=run.result.train_acc, final_loss=run.result.curve[-1][2] if run.result.curve else None,
               **_summary(report))
    return 0


def _summary(report: ev.EvalReport) -> dict:
    return {"base_acc": report.base_acc, "novel_acc": report.novel_acc, "harmonic_mean": report.harmonic_mean}


def cmd_eval(args, cfg: RunConfig, started: float) -> int:
    out = _out(args)
    params, model_cfg, train_cfg = load_checkpoint(args.checkpoint)
    if args.config is None:
        snap = json.loads((Path(args.checkpoint) / "config.json").read_text())
        if "run_config" in snap:
            cfg = RunConfig.from_text(snap["run_config"], {"run": {"seed": str(cfg.seed)}})
    manifest, cache = _inputs(args, cfg)
    prepared = pl.prepare(params, model_cfg, manifest, cache, cfg.data, train_cfg.seed)
    run = pl.TrainedRun(params, model_cfg, prepared, None)
    emb = pl.embed_run(run)
    report = pl.report_run(run, cfg.inference, emb)
    report_path = Path(args.report) if args.report else out / "report.json"
    report.to_json(report_path)
    report.to_csv(report_path.with_suffix(".csv"))
    extra = {}
    if args.plot_data:
        # per novel class: fused prediction against the zero-shot video path alone
        zero_shot = pl.report_run(run, dataclasses.replace(cfg.inference, beta=0.0), emb)
        novel = set(manifest.novel_classes)
        deltas = ev.per_class_delta({k: v for k, v in report.per_class.items() if k in novel},
                                    {k: v for k, v in zero_shot.per_class.items() if k in novel})
        with open(args.plot_data, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["class", "delta"])
            for name, d in deltas:
                w.writerow([name, f"{d:.1f}"])
        extra["plot_data"] = str(args.plot_data)
    _write_run(out, cfg, "eval", started, report=str(report_path), **_summary(report), **extra)
    return 0


def ablation_rows(axis: str, cfg: RunConfig, manifest, cache, backbone, log=None) -> list[dict]:
    """One row per grid point of ``axis``; features are computed once per modality and reused."""
    if axis not in ABLATION_GRIDS:
        raise UsageError(f"unknown ablation axis {axis!r}; choose from {', '.join(ABLATION_GRIDS)}")
    rows, prepared = [], None

    def row(value, report, note=""):
        return {"axis": axis, "value": str(value), "base_acc": report.base_acc if report else None,
                "novel_acc": report.novel_acc if report else None,
                "harmonic_mean": report.harmonic_mean if report else None,
                "entropy_video": report.entropy_video if report else None,
                "entropy_aux": report.entropy_aux if report else None, "note": note}

    if axis in INFERENCE_AXES:
        run = pl.train_run(backbone, cfg.model_config, cfg.train, manifest, cache, cfg.data, log=log)
        emb = pl.embed_run(run)
        for value in ABLATION_GRIDS[axis]:
            inf = dataclasses.replace(cfg.inference, **{axis: value})
            rows.append(row(value, pl.report_run(run, inf, emb)))
        return rows

    depth = cfg.vit.layers
    for value in ABLATION_GRIDS[axis]:
        if axis == "trainable_layers" and value != "all" and int(value) > depth:
            rows.append(row(value, None, f"skipped: exceeds encoder depth {depth}"))
            continue
        section = "model" if axis == "fusion_mode" else "train"
        point = cfg.replace(section, **{axis: value})
        if log:
            log(f"ablate {axis}={value}")
        run = pl.train_run(backbone, point.model_config, point.train, manifest, cache, cfg.data,
                           prepared=prepared, log=log)
        prepared = run.prepared
        rows.append(row(value, pl.report_run(run, point.inference)))
    return rows


def _fmt(x, digits: int) -> str:
    return "" if x is None else f"{x:.{digits}f}"


def cmd_ablate(args, cfg: RunConfig, started: float) -> int:
    if args.axis not in ABLATION_GRIDS:
        raise UsageError(f"unknown ablation axis {args.axis!r}; choose from {', '.join(ABLATION_GRIDS)}")
    out = _out(args)
    manifest, cache = _inputs(args, cfg)
    backbone, bb_path = _backbone(cfg, out)
    rows = ablation_rows(args.axis, cfg, manifest, cache, backbone, _log)
    table = out / f"ablation_{args.axis}.csv"
    with open(table, "w", newline="") as f:
        w = csv.writer(f)
        cols = ["value", "base_acc", "novel_acc", "harmonic_mean", "entropy_video", "entropy_aux", "note"]
        w.writerow(cols)
        for r in rows:
            w.writerow([r["value"]] + [_fmt(r[c], 1) for c in cols[1:4]]
                       + [_fmt(r[c], 3) for c in cols[4:6]] + [r["note"]])
    _write_run(out, cfg, "ablate", started, axis=args.axis, table=str(table), backbone=bb_path, rows=rows)
    return 0


def cmd_report(args, cfg: RunConfig, started: float) -> int:
    out = _out(args)
    reports, errors = [], []
    for d in args.runs:
        path = Path(d) / "report.json" if Path(d).is_dir() else Path(d)
        try:
            r = ev.EvalReport.from_json(path)
        except (OSError, ValueError, KeyError, TypeError) as e:
            errors.append(f"{d}: cannot read report ({type(e).__name__}: {e})")
            continue
        if abs(ev.harmonic_mean(r.base_acc, r.novel_acc) - r.harmonic_mean) > 1e-6:
            errors.append(f"{d}: stored harmonic mean {r.harmonic_mean} disagrees with its accuracies")
            continue
        reports.append((str(d), r))
    for e in errors:
        _log(f"mov report: {e}")
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(REPORT_COLUMNS)
        for name, r in reports:
            w.writerow([name, f"{r.base_acc:.1f}", f"{r.novel_acc:.1f}", f"{r.harmonic_mean:.1f}"])
    with open(out / "delta.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["run", "reference", "class", "delta"])
        if reports:
            ref_name, ref = reports[0]
            for name, r in reports[1:]:
                if set(r.per_class) != set(ref.per_class):
                    _log(f"mov report: {name}: class set differs from {ref_name}; no delta rows")
                    continue
                for cls, d in ev.per_class_delta(r, ref):
                    w.writerow([name, ref_name, cls, f"{d:.1f}"])
    _write_run(out, cfg, "report", started, runs=[n for n, _ in reports], errors=errors,
               summary=str(out / "summary.csv"), delta=str(out / "delta.csv"))
    return 1 if errors else 0


# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="INI run configuration (flags override it)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="run seed; overrides [run] seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: mov-out)")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes for data work")

    parser = argparse.ArgumentParser(prog="mov", parents=[common],
                                     description="Multimodal open-vocabulary video classification at desk scale.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text, description=help_text)

    p = add("synth", "render the synthetic multimodal dataset and its manifest")
    p.add_argument("--classes", type=int, help="number of classes ([synth] n_classes)")
    p.add_argument("--per-class", type=int, help="training samples per base class ([synth] train_per_class)")
    p.add_argument("--test-per-class", type=int, help="test samples per class ([synth] test_per_class)")

    p = add("preprocess", "decode media, estimate flow and compute spectrograms into a cache")
    p.add_argument("--manifest", required=True, help="manifest.jsonl to preprocess")

    def data_args(p):
        p.add_argument("--manifest", required=True, help="dataset manifest.jsonl")
        p.add_argument("--cache", help="cache.npz from 'mov preprocess' (default: next to the manifest if present)")
        p.add_argument("--backbone", help="pretrained backbone directory ([run] backbone)")

    def model_args(p):
        p.add_argument("--modality", choices=("flow", "audio"), help="auxiliary modality ([model] modality)")
        p.add_argument("--fusion-mode", choices=FUSION_MODES, help="[model] fusion_mode")
        p.add_argument("--epochs", type=int, help="[train] epochs")
        p.add_argument("--lr", type=float, help="[train] base_lr")
        p.add_argument("--trainable-layers", help="auxiliary encoder blocks to train: a count or 'all'")

    p = add("train", "train on base classes, save a checkpoint and evaluate it")
    data_args(p)
    model_args(p)

    p = add("eval", "evaluate a checkpoint on base and novel splits")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory written by 'mov train'")
    p.add_argument("--manifest", required=True, help="dataset manifest.jsonl")
    p.add_argument("--cache", help="cache.npz from 'mov preprocess'")
    p.add_argument("--report", help="report JSON path; a CSV row is written beside it")
    p.add_argument("--plot-data", help="write sorted per-class novel accuracy deltas against the video path")

    p = add("ablate", "sweep one axis and tabulate base, novel and harmonic-mean accuracy")
    p.add_argument("--axis", required=True, help=f"one of: {', '.join(ABLATION_GRIDS)}")
    data_args(p)
    model_args(p)

    p = add("report", "aggregate run reports into summary and per-class delta CSVs")
    p.add_argument("runs", nargs="+", help="run directories (or report.json files); the first is the delta reference")
    return parser


COMMANDS = {"synth": cmd_synth, "preprocess": cmd_preprocess, "train": cmd_train, "eval": cmd_eval,
            "ablate": cmd_ablate, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("config", None), ("seed", None), ("out", "mov-out"), ("jobs", None)):
        if not hasattr(args, name):
            setattr(args, name, default)
    started = time.time()
    try:
        cfg = effective_config(args)
        return COMMANDS[args.command](args, cfg, started)
    except (UsageError, ConfigError) as e:
        print(f"mov {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (sd.ManifestError, MovtError, ValueError, OSError, KeyError) as e:
        msg = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"mov {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
