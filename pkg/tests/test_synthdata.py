import json

import numpy as np
import pytest

from mov import synthdata as sd
from mov.signalprep import audio, flow
from mov.synthdata import DatasetManifest, ManifestError, SampleRecord, SplitSpec


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    cfg = sd.SynthConfig(n_classes=4, n_base=2, train_per_class=2, test_per_class=1, frames=6, seed=3)
    return root, cfg, sd.generate_dataset(root, cfg)


class TestSplitClasses:
    @pytest.mark.parametrize("total,n_base", [(700, 400), (309, 154)])
    def test_partition_sizes(self, total, n_base):
        classes = [f"class {i}" for i in range(total)]
        base, novel = sd.split_classes(classes, SplitSpec(n_base, total - n_base, seed=1))
        assert len(base) == n_base and len(novel) == total - n_base
        assert set(base) | set(novel) == set(classes)
        assert not set(base) & set(novel)

    def test_deterministic(self):
        classes = [str(i) for i in range(20)]
        assert sd.split_classes(classes, SplitSpec(12, 8, 5)) == sd.split_classes(classes, SplitSpec(12, 8, 5))
        assert sd.split_classes(classes, SplitSpec(12, 8, 5)) != sd.split_classes(classes, SplitSpec(12, 8, 6))

    def test_count_mismatch(self):
        with pytest.raises(ValueError):
            sd.split_classes(["a", "b", "c"], SplitSpec(2, 2))


class TestClassSpecs:
    def test_pairs_share_appearance(self):
        specs = sd.make_class_specs(16, 7)
        assert len({s.name for s in specs}) == 16
        looks = [s.appearance for s in specs]
        shared = [s for s in specs if looks.count(s.appearance) == 2]
        assert len(shared) == 8
        for a, b in zip(specs[0:8:2], specs[1:8:2]):
            assert a.appearance == b.appearance and a.velocity != b.velocity
            assert a.fundamental != b.fundamental

    def test_limits(self):
        for s in sd.make_class_specs(16, 0):
            assert max(map(abs, s.velocity)) <= 20
            assert s.fundamental * len(s.harmonics) < 8000
        with pytest.raises(ValueError):
            sd.SynthClassSpec("x", "red", "disk", (21, 0), 440.0)
        with pytest.raises(ValueError):
            sd.make_class_specs(3, 0)


class TestGroundTruthRecovery:
    def test_flow_matches_motion(self):
        spec = sd.SynthClassSpec("red disk running", "red", "disk", (3, 0), 440.0)
        frames, masks = sd.render_clip(spec, np.random.default_rng(0), frames=6)
        f = flow.estimate_flow(frames[:-1].astype(float), frames[1:].astype(float))
        sel = masks[:-1] & masks[1:]
        assert abs(np.median(f[..., 0][sel]) - 3) <= 0.5
        assert abs(np.median(f[..., 1][sel])) <= 0.5

    @pytest.mark.parametrize("action", sd.ACTIONS)
    def test_fundamental_mel_bin(self, action):
        spec = sd.SynthClassSpec("x", "red", "disk", action.velocity, action.fundamental)
        s = audio.log_mel_spectrogram(sd.render_audio(spec, np.random.default_rng(1)))
        nearest = int(np.argmin(np.abs(audio.mel_center_frequencies() - spec.fundamental)))
        assert int(np.argmax(s.mean(axis=1))) == nearest == action.mel_bin


class TestGenerate:
    def test_layout(self, small_dataset):
        root, cfg, m = small_dataset
        assert len(m.split("base-train")) == 2 * cfg.train_per_class
        assert len(m.split("base-test")) == 2 * cfg.test_per_class
        assert len(m.split("novel-test")) == 2 * cfg.test_per_class
        assert {r.label for r in m.split("novel-test")} == set(m.novel_classes)
        assert len(list((root / m.records[0].video).glob("*.ppm"))) == cfg.frames
        assert sd.load_manifest(root / "manifest.jsonl") == m

    def test_bitwise_reproducible(self, small_dataset, tmp_path):
        root, cfg, m = small_dataset
        sd.generate_dataset(tmp_path, cfg)
        for rel in ("manifest.jsonl", "classes.json", m.records[0].audio, m.records[-1].video + "/frame_0003.ppm"):
            assert (root / rel).read_bytes() == (tmp_path / rel).read_bytes()

    def test_class_specs_round_trip(self, small_dataset):
        root, cfg, _ = small_dataset
        assert sd.load_class_specs(root) == sd.make_class_specs(cfg.n_classes, cfg.seed)

    def test_invalid_counts(self, tmp_path):
        with pytest.raises(ValueError):
            sd.SynthConfig(n_classes=3)
        with pytest.raises(ValueError):
            sd.SynthConfig(train_per_class=0)


class TestManifest:
    def _manifest(self, root):
        recs = [SampleRecord("a", "cat", "base-train", "a", "a.wav", 1),
                SampleRecord("b", "dog", "novel-test", "b", "b.wav", 2)]
        for name in ("a", "b"):
            (root / name).mkdir()
            (root / f"{name}.wav").write_bytes(b"")
        return DatasetManifest(["cat"], ["dog"], recs, root)

    def test_round_trip(self, tmp_path):
        m = self._manifest(tmp_path)
        sd.write_manifest(m, tmp_path / "m.jsonl")
        assert sd.load_manifest(tmp_path / "m.jsonl") == m

    def test_novel_class_in_training_rejected(self, tmp_path):
        m = self._manifest(tmp_path)
        sd.write_manifest(m, tmp_path / "m.jsonl")
        lines = (tmp_path / "m.jsonl").read_text().splitlines()
        lines.append(json.dumps({"id": "c", "label": "dog", "split": "base-train",
                                 "video": "a", "audio": "a.wav", "seed": 0}))
        (tmp_path / "m.jsonl").write_text("\n".join(lines))
        with pytest.raises(ManifestError, match="novel class"):
            sd.load_manifest(tmp_path / "m.jsonl")
        m.records.append(SampleRecord("c", "dog", "base-test", "a", "a.wav", 0))
        with pytest.raises(ManifestError):
            sd.write_manifest(m, tmp_path / "again.jsonl")

    def test_missing_file(self, tmp_path):
        m = self._manifest(tmp_path)
        sd.write_manifest(m, tmp_path / "m.jsonl")
        (tmp_path / "b.wav").unlink()
        with pytest.raises(ManifestError, match="missing"):
            sd.load_manifest(tmp_path / "m.jsonl")

    def test_empty(self, tmp_path):
        (tmp_path / "m.jsonl").write_text("")
        with pytest.raises(ManifestError):
            sd.load_manifest(tmp_path / "m.jsonl")
        with pytest.raises(ManifestError):
            sd.write_manifest(DatasetManifest(["a"], ["b"], []), tmp_path / "n.jsonl")

    def test_unknown_field(self, tmp_path):
        m = self._manifest(tmp_path)
        sd.write_manifest(m, tmp_path / "m.jsonl")
        lines = (tmp_path / "m.jsonl").read_text().splitlines()
        row = json.loads(lines[1])
        row["extra"] = 1
        lines[1] = json.dumps(row)
        (tmp_path / "m.jsonl").write_text("\n".join(lines))
        with pytest.raises(ManifestError, match="unknown fields"):
            sd.load_manifest(tmp_path / "m.jsonl")

    def test_schema_version(self, tmp_path):
        m = self._manifest(tmp_path)
        sd.write_manifest(m, tmp_path / "m.jsonl")
        lines = (tmp_path / "m.jsonl").read_text().splitlines()
        lines[0] = lines[0].replace('"schema_version": 1', '"schema_version": 9')
        (tmp_path / "m.jsonl").write_text("\n".join(lines))
        with pytest.raises(ManifestError, match="schema"):
            sd.load_manifest(tmp_path / "m.jsonl")
