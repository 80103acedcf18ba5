"""Procedural multimodal dataset: moving textured sprites with class-specific tones.

Each class is an appearance (color + shape) performing an action (a motion
vector and an audio fundamental). Half of the classes come in pairs that share
an appearance and differ only in action, so a single still frame cannot tell
the pair apart while flow or audio can.

Manifest format (``manifest.jsonl``): a header line

    {"schema_version": 1, "base_classes": [...], "novel_classes": [...]}

followed by one record per sample:

    {"id": str, "label": str, "split": "base-train" | "base-test" | "novel-test",
     "video": <dir of PPM frames, relative>, "audio": <WAV file, relative>, "seed": int}
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage as ndi

from .signalprep import audio as sp_audio
from .signalprep.audio import Waveform
from .signalprep.media import write_video, write_wav

SCHEMA_VERSION = 1
SPLITS = ("base-train", "base-test", "novel-test")

COLORS = {
    "red": (220, 40, 40),
    "green": (40, 190, 60),
    "blue": (40, 70, 230),
    "yellow": (230, 210, 40),
    "purple": (150, 50, 200),
    "orange": (240, 130, 20),
    "white": (235, 235, 235),
    "cyan": (40, 210, 220),
}
SHAPES = ("square", "disk", "cross", "ring")


@dataclass(frozen=True)
class Action:
    name: str
    velocity: tuple[int, int]  # (dx, dy) px/frame
    mel_bin: int  # fundamental sits on this mel filter centre

    @property
    def fundamental(self) -> float:
        return float(sp_audio.mel_center_frequencies()[self.mel_bin])


ACTIONS = (
    Action("running", (3, 0), 24),
    Action("jumping", (0, -3), 29),
    Action("sliding", (-3, 0), 34),
    Action("falling", (0, 3), 39),
    Action("climbing", (2, -2), 44),
    Action("drifting", (-2, 2), 49),
    Action("dashing", (2, 2), 54),
    Action("swaying", (-2, -2), 59),
)


@dataclass(frozen=True)
class SynthClassSpec:
    name: str
    color: str
    shape: str
    velocity: tuple[int, int]
    fundamental: float
    harmonics: tuple[float, ...] = (1.0, 0.35, 0.15)
    noise: float = 0.08

    def __post_init__(self):
        if max(abs(self.velocity[0]), abs(self.velocity[1])) > 20:
            raise ValueError("speed exceeds the flow quantization range")
        if self.fundamental * len(self.harmonics) >= 8000:
            raise ValueError("harmonics exceed the 8 kHz Nyquist limit")

    @property
    def appearance(self) -> str:
        return f"{self.color} {self.shape}"


def all_appearances() -> list[tuple[str, str]]:
    return [(c, s) for c in COLORS for s in SHAPES]


def make_class_specs(n_classes: int, seed: int) -> list[SynthClassSpec]:
    """``n_classes // 4`` appearance-sharing pairs, the rest with unique appearances."""
    if n_classes < 4:
        raise ValueError("need at least 4 classes")
    n_pairs = n_classes // 4
    pool = all_appearances()
    need = n_classes - n_pairs
    if need > len(pool):
        raise ValueError(f"at most {len(pool) + len(pool) // 3} classes supported")
    order = np.random.default_rng([seed, 11]).permutation(len(pool))[:need]
    looks = [pool[i] for i in order]
    specs = []
    for i in range(n_classes):
        look = looks[i // 2] if i < 2 * n_pairs else looks[i - n_pairs]
        act = ACTIONS[i % len(ACTIONS)]
        specs.append(SynthClassSpec(f"{look[0]} {look[1]} {act.name}", look[0], look[1],
                                    act.velocity, act.fundamental))
    return specs


# rendering

def shape_mask(shape: str, size: int = 10) -> np.ndarray:
    yy, xx = np.mgrid[:size, :size] + 0.5
    c = size / 2
    r = np.hypot(yy - c, xx - c)
    if shape == "square":
        m = np.ones((size, size), bool)
        m[[0, -1]] = False
        m[:, [0, -1]] = False
        return m
    if shape == "disk":
        return r <= c - 0.5
    if shape == "ring":
        return (r <= c - 0.5) & (r >= c - 3.0)
    if shape == "cross":
        band = size // 3
        lo, hi = (size - band) // 2, (size - band) // 2 + band
        m = np.zeros((size, size), bool)
        m[lo:hi] = True
        m[:, lo:hi] = True
        return m
    raise ValueError(f"unknown shape {shape!r}")


def _texture(rng, shape, sigma):
    t = ndi.gaussian_filter(rng.uniform(size=shape), sigma, mode="wrap")
    return (t - t.mean()) / (t.std() + 1e-12)


def _background(rng, size):
    base = rng.uniform(15, 35)
    return np.clip(base + 6 * _texture(rng, (size, size), 2.0), 0, 255)[..., None].repeat(3, -1)


def _sprite(rng, color, shape, noise, sprite):
    rgb = np.array(COLORS[color], float) * (1 + rng.normal(0, noise, 3))
    tex = 1 + 0.18 * _texture(rng, (sprite, sprite), 1.0)
    return np.clip(rgb * tex[..., None], 0, 255), shape_mask(shape, sprite)


def _paste(canvas, patch, mask, y, x, alpha: float = 1.0):
    """Toroidal paste so sprites wrap around the frame edges."""
    h, w = canvas.shape[:2]
    s = mask.shape[0]
    ys = (np.arange(s) + y) % h
    xs = (np.arange(s) + x) % w
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    sel = yy[mask], xx[mask]
    canvas[sel] = patch[mask] if alpha == 1.0 else (1 - alpha) * canvas[sel] + alpha * patch[mask]
    out = np.zeros((h, w), bool)
    out[yy[mask], xx[mask]] = True
    return out


def render_still(color: str, shape: str, rng: np.random.Generator, size: int = 32,
                 noise: float = 0.08, sprite: int = 10,
                 trail: tuple[int, int] | None = None) -> np.ndarray:
    """One frame: a sprite at a random position over a random background.

    ``trail`` = (dx, dy) adds fading ghost copies behind the sprite, a
    single-image cue for the direction of motion.
    """
    frame = _background(rng, size)
    patch, mask = _sprite(rng, color, shape, noise, sprite)
    y, x = int(rng.integers(size)), int(rng.integers(size))
    if trail is not None:
        dx, dy = trail
        for k, alpha in ((3, 0.2), (2, 0.35), (1, 0.55)):
            _paste(frame, patch, mask, y - k * dy, x - k * dx, alpha)
    _paste(frame, patch, mask, y, x)
    return np.round(frame).astype(np.uint8)


def render_clip(spec: SynthClassSpec, rng: np.random.Generator, frames: int = 16,
                size: int = 32, sprite: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Frames (T, H, W, 3) uint8 and the sprite masks (T, H, W)."""
    bg = _background(rng, size)
    patch, mask = _sprite(rng, spec.color, spec.shape, spec.noise, sprite)
    y0, x0 = int(rng.integers(size)), int(rng.integers(size))
    dx, dy = spec.velocity
    out = np.empty((frames, size, size, 3), np.uint8)
    masks = np.empty((frames, size, size), bool)
    for t in range(frames):
        frame = bg.copy()
        masks[t] = _paste(frame, patch, mask, y0 + t * dy, x0 + t * dx)
        out[t] = np.round(frame).astype(np.uint8)
    return out, masks


def render_audio(spec: SynthClassSpec, rng: np.random.Generator, seconds: float = 2.0,
                 rate: int = sp_audio.TARGET_RATE) -> Waveform:
    t = np.arange(int(round(seconds * rate))) / rate
    x = np.zeros_like(t)
    for k, amp in enumerate(spec.harmonics, start=1):
        x += amp * np.sin(2 * np.pi * k * spec.fundamental * t + rng.uniform(0, 2 * np.pi))
    gain = rng.uniform(0.5, 0.9) / sum(spec.harmonics)
    x = gain * x + rng.normal(0, 0.02, size=t.shape)
    return Waveform(rate, np.clip(x, -1, 1))


# splits and manifests

@dataclass(frozen=True)
class SplitSpec:
    n_base: int
    n_novel: int
    seed: int = 0


def split_classes(all_classes, spec: SplitSpec) -> tuple[list[str], list[str]]:
    """Seeded shuffle; the first ``n_base`` are base classes, the rest novel."""
    classes = list(all_classes)
    if len(set(classes)) != len(classes):
        raise ValueError("duplicate class names")
    if spec.n_base < 0 or spec.n_novel < 0 or spec.n_base + spec.n_novel != len(classes):
        raise ValueError(f"split {spec.n_base}+{spec.n_novel} does not cover {len(classes)} classes")
    perm = np.random.default_rng(spec.seed).permutation(len(classes))
    shuffled = [classes[i] for i in perm]
    return shuffled[:spec.n_base], shuffled[spec.n_base:]


def split_paired_classes(specs: list[SynthClassSpec], n_base: int, seed: int) -> tuple[list[str], list[str]]:
    """Split that keeps appearance-sharing pairs on one side.

    Pairs are spread over base and novel in proportion to the split sizes, so
    both sides contain classes that only motion or audio can separate.
    Within each group the choice is a seeded ``split_classes`` shuffle.
    """
    n = len(specs)
    n_novel = n - n_base
    looks = [s.appearance for s in specs]
    pairs = sorted({a for a in looks if looks.count(a) == 2}, key=looks.index)
    singles = [s.name for s in specs if looks.count(s.appearance) == 1]
    novel_pairs = min(int(math.floor(len(pairs) * n_novel / n + 0.5)), n_novel // 2)
    novel_singles = n_novel - 2 * novel_pairs
    if novel_singles > len(singles) or n_base - 2 * (len(pairs) - novel_pairs) < 0:
        raise ValueError(f"cannot split {n} classes into {n_base} base / {n_novel} novel")
    _, novel_looks = split_classes(pairs, SplitSpec(len(pairs) - novel_pairs, novel_pairs, seed))
    _, novel_single = split_classes(singles, SplitSpec(len(singles) - novel_singles, novel_singles, seed))
    novel = {s.name for s in specs if s.appearance in novel_looks} | set(novel_single)
    return [s.name for s in specs if s.name not in novel], [s.name for s in specs if s.name in novel]


class ManifestError(ValueError):
    pass


_RECORD_FIELDS = ("id", "label", "split", "video", "audio", "seed")
_HEADER_FIELDS = ("schema_version", "base_classes", "novel_classes")


@dataclass(frozen=True)
class SampleRecord:
    id: str
    label: str
    split: str
    video: str
    audio: str
    seed: int


@dataclass
class DatasetManifest:
    base_classes: list[str]
    novel_classes: list[str]
    records: list[SampleRecord]
    root: Path = field(default=Path("."), compare=False)

    def split(self, name: str) -> list[SampleRecord]:
        return [r for r in self.records if r.split == name]

    def validate(self, check_files: bool = True):
        if not self.records:
            raise ManifestError("manifest has no records")
        base, novel = set(self.base_classes), set(self.novel_classes)
        if len(base) != len(self.base_classes) or len(novel) != len(self.novel_classes):
            raise ManifestError("duplicate class names in header")
        if base & novel:
            raise ManifestError(f"classes both base and novel: {sorted(base & novel)}")
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise ManifestError(f"duplicate sample id {r.id!r}")
            seen.add(r.id)
            if r.split not in SPLITS:
                raise ManifestError(f"{r.id}: unknown split {r.split!r}")
            if r.split == "novel-test":
                if r.label not in novel:
                    raise ManifestError(f"{r.id}: novel-test sample of non-novel class {r.label!r}")
            elif r.label not in base:
                kind = "novel class" if r.label in novel else "unknown class"
                raise ManifestError(f"{r.id}: {kind} {r.label!r} in {r.split}")
            if check_files:
                for rel in (r.video, r.audio):
                    if not (self.root / rel).exists():
                        raise ManifestError(f"{r.id}: missing file {rel}")


def write_manifest(manifest: DatasetManifest, path):
    manifest.validate(check_files=False)
    path = Path(path)
    lines = [json.dumps({"schema_version": SCHEMA_VERSION, "base_classes": manifest.base_classes,
                         "novel_classes": manifest.novel_classes})]
    lines += [json.dumps(asdict(r)) for r in manifest.records]
    path.write_text("\n".join(lines) + "\n")


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ManifestError(f"{path}: empty manifest")
    try:
        header = json.loads(lines[0])
        rows = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: malformed line: {e}") from None
    if set(header) != set(_HEADER_FIELDS):
        raise ManifestError(f"{path}: bad header fields {sorted(header)}")
    if header["schema_version"] != SCHEMA_VERSION:
        raise ManifestError(f"{path}: unsupported schema version {header['schema_version']}")
    records = []
    for i, row in enumerate(rows, start=2):
        if set(row) != set(_RECORD_FIELDS):
            extra = sorted(set(row) - set(_RECORD_FIELDS))
            missing = sorted(set(_RECORD_FIELDS) - set(row))
            raise ManifestError(f"{path}:{i}: unknown fields {extra}, missing {missing}")
        records.append(SampleRecord(**row))
    m = DatasetManifest(list(header["base_classes"]), list(header["novel_classes"]), records, path.parent)
    m.validate(check_files)
    return m


# generation

@dataclass(frozen=True)
class SynthConfig:
    n_classes: int = 16
    n_base: int = 10
    train_per_class: int = 20
    test_per_class: int = 10
    frames: int = 16
    size: int = 32
    audio_seconds: float = 2.0
    seed: int = 7

    def __post_init__(self):
        if self.n_classes < 4:
            raise ValueError("n_classes must be >= 4")
        if not 0 < self.n_base < self.n_classes:
            raise ValueError("n_base must leave at least one novel class")
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise ValueError("per-class sample counts must be positive")
        if self.frames < 2 or self.size < 8:
            raise ValueError("clips need at least 2 frames of 8x8")


def sample_seed(seed: int, class_index: int, split: str, k: int) -> int:
    ss = np.random.SeedSequence([seed, class_index, SPLITS.index(split), k])
    return int(ss.generate_state(1)[0])


def _render_one(args):
    root, spec, rec, cfg = args
    rng = np.random.default_rng(rec.seed)
    frames, _ = render_clip(spec, rng, cfg.frames, cfg.size)
    write_video(root / rec.video, frames)
    write_wav(root / rec.audio, render_audio(spec, rng, cfg.audio_seconds))


def generate_dataset(out_dir, cfg: SynthConfig = SynthConfig(), jobs: int = 1) -> DatasetManifest:
    """Render every sample under ``out_dir`` and write ``manifest.jsonl``."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    specs = make_class_specs(cfg.n_classes, cfg.seed)
    by_name = {s.name: s for s in specs}
    base, novel = split_paired_classes(specs, cfg.n_base, cfg.seed)
    plan = []
    for ci, spec in enumerate(specs):
        splits = [("base-train", cfg.train_per_class), ("base-test", cfg.test_per_class)] \
            if spec.name in base else [("novel-test", cfg.test_per_class)]
        for split, count in splits:
            for k in range(count):
                sid = f"c{ci:02d}-{split}-{k:03d}"
                plan.append(SampleRecord(sid, spec.name, split, f"media/{sid}", f"media/{sid}.wav",
                                         sample_seed(cfg.seed, ci, split, k)))
    (root / "media").mkdir(exist_ok=True)
    work = [(root, by_name[r.label], r, cfg) for r in plan]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            list(ex.map(_render_one, work, chunksize=8))
    else:
        for w in work:
            _render_one(w)
    manifest = DatasetManifest(base, novel, plan, root)
    write_manifest(manifest, root / "manifest.jsonl")
    (root / "classes.json").write_text(json.dumps([asdict(s) for s in specs], indent=1))
    return manifest


def load_class_specs(root) -> list[SynthClassSpec]:
    rows = json.loads((Path(root) / "classes.json").read_text())
    return [SynthClassSpec(**{**r, "velocity": tuple(r["velocity"]), "harmonics": tuple(r["harmonics"])})
            for r in rows]
