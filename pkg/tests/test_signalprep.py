import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage as ndi

from mov.signalprep import audio, flow, media, video
from mov.signalprep.audio import Waveform


def texture(size=32, seed=0):
    t = ndi.gaussian_filter(np.random.default_rng(seed).uniform(size=(size, size)), 1.5)
    return (t - t.min()) / (t.max() - t.min()) * 255


class TestEstimateFlow:
    def test_identical_frames(self):
        t = texture()
        assert np.abs(flow.estimate_flow(t, t)).max() <= 0.1

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_integer_translation(self, seed):
        t = texture(seed=seed)
        f = flow.estimate_flow(t, np.roll(t, 3, axis=1))
        assert 2.5 <= np.median(f[..., 0]) <= 3.5
        assert -0.5 <= np.median(f[..., 1]) <= 0.5
        back = flow.estimate_flow(np.roll(t, 3, axis=1), t)
        assert -3.5 <= np.median(back[..., 0]) <= -2.5
        assert -0.5 <= np.median(back[..., 1]) <= 0.5

    def test_vertical_translation_rgb(self):
        t = texture(seed=4)
        rgb = np.stack([t, t * 0.5, 255 - t], axis=-1)
        f = flow.estimate_flow(rgb, np.roll(rgb, -2, axis=0))
        assert abs(np.median(f[..., 1]) + 2) <= 0.5

    def test_batched_matches_single(self):
        a, b = texture(seed=5), texture(seed=6)
        batch = flow.estimate_flow(np.stack([a, b]), np.stack([np.roll(a, 1, 1), np.roll(b, 2, 0)]))
        single = flow.estimate_flow(b, np.roll(b, 2, 0))
        np.testing.assert_allclose(batch[1], single, atol=1e-9)

    def test_deterministic(self):
        t = texture(seed=7)
        s = np.roll(t, 2, axis=1)
        assert flow.estimate_flow(t, s).tobytes() == flow.estimate_flow(t, s).tobytes()

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            flow.estimate_flow(np.zeros((8, 8)), np.zeros((8, 9)))


class TestFlowToImage:
    def _q(self, u):
        return flow.flow_to_image(np.array([[[u, 0.0]]]))[0, 0, 0]

    def test_endpoints_and_clamp(self):
        assert self._q(-20.0) == 0
        assert self._q(20.0) == 255
        assert self._q(25.0) == 255
        assert self._q(-1e6) == 0

    def test_midpoint(self):
        # 20 * 255 / 40 = 127.5 rounds away from zero
        assert self._q(0.0) == 128

    def test_third_channel_zero(self):
        img = flow.flow_to_image(np.random.default_rng(0).normal(0, 30, size=(4, 5, 2)))
        assert img.dtype == np.uint8 and np.all(img[..., 2] == 0)

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=20))
    @settings(max_examples=100, deadline=None)
    def test_monotone(self, us):
        us = np.sort(np.array(us))
        f = np.stack([us, us[::-1]], axis=-1)[None]
        q = flow.flow_to_image(f)[0].astype(int)
        assert np.all(np.diff(q[:, 0]) >= 0)
        assert np.all(np.diff(q[::-1, 1]) >= 0)
        assert q.min() >= 0 and q.max() <= 255


class TestSpectrogram:
    def test_ten_seconds_shape(self):
        t = np.arange(160000) / 16000
        s = audio.log_mel_spectrogram(Waveform(16000, 0.3 * np.sin(2 * np.pi * 300 * t)))
        assert s.shape == (128, 1000)

    @pytest.mark.parametrize("seconds", [1, 2, 3])
    def test_frames_per_second(self, seconds):
        s = audio.log_mel_spectrogram(Waveform(16000, np.zeros(16000 * seconds)))
        assert s.shape[1] == 100 * seconds

    def test_silence(self):
        s = audio.log_mel_spectrogram(Waveform(16000, np.zeros(8000)))
        np.testing.assert_allclose(s, np.log(1e-10))

    def test_tone_peak_bin(self):
        t = np.arange(32000) / 16000
        s = audio.log_mel_spectrogram(Waveform(16000, 0.5 * np.sin(2 * np.pi * 440 * t)))
        centers = audio.mel_center_frequencies()
        assert int(np.argmax(s.mean(axis=1))) == int(np.argmin(np.abs(centers - 440)))

    def test_too_short(self):
        with pytest.raises(ValueError):
            audio.log_mel_spectrogram(Waveform(16000, np.zeros(399)))

    def test_requires_16k(self):
        with pytest.raises(ValueError):
            audio.log_mel_spectrogram(Waveform(8000, np.zeros(8000)))


class TestNormalize:
    def test_constant(self):
        assert np.all(audio.normalize_spectrogram(np.full((4, 6), 2.5)) == 0)

    def test_moments_and_idempotence(self):
        s = np.random.default_rng(0).normal(4, 3, size=(128, 50))
        n = audio.normalize_spectrogram(s)
        assert abs(n.mean()) <= 1e-9 and abs(n.std() - 1) <= 1e-9
        np.testing.assert_allclose(audio.normalize_spectrogram(n), n, atol=1e-9)


class TestCropAugment:
    def _spec(self, frames=1000):
        return np.random.default_rng(1).normal(size=(128, frames)) + 5.0

    @staticmethod
    def _offset(out, s):
        keep = out != 0
        starts = [o for o in range(s.shape[1] - 799) if np.array_equal(out[keep], s[:, o:o + 800][keep])]
        assert len(starts) == 1
        return starts[0]

    def test_shape(self):
        for seed in range(10):
            assert audio.crop_and_augment_spectrogram(self._spec(), seed).shape == (128, 800)

    def test_mask_semantics(self):
        s = self._spec()
        for seed in range(20):
            out = audio.crop_and_augment_spectrogram(s, seed)
            # source values are never 0, so zero cells are exactly the masked ones
            zero = out == 0
            cols = zero.all(axis=0)
            rows = zero.all(axis=1)
            assert np.array_equal(zero, cols[None, :] | rows[:, None])
            for m in (cols, rows):
                idx = np.flatnonzero(m)
                assert idx.size == 0 or idx.size == idx[-1] - idx[0] + 1
            assert cols.sum() <= 192 and rows.sum() <= 48
            # unmasked cells equal a contiguous crop of the source
            self._offset(out, s)

    def test_determinism(self):
        s = self._spec()
        a = audio.crop_and_augment_spectrogram(s, 42)
        assert np.array_equal(a, audio.crop_and_augment_spectrogram(s, 42))
        offsets = {self._offset(audio.crop_and_augment_spectrogram(s, seed), s) for seed in range(100)}
        assert len(offsets) > 1

    def test_too_short(self):
        with pytest.raises(ValueError):
            audio.crop_and_augment_spectrogram(self._spec(799), 0)


class TestExpand:
    def test_three_channels(self):
        s = np.random.default_rng(2).normal(size=(128, 800))
        e = audio.expand_three_channels(s)
        assert e.shape == (3, 128, 800)
        assert e[0].tobytes() == e[1].tobytes() == e[2].tobytes()
        np.testing.assert_allclose(e.sum(axis=0), 3 * s)


class TestSampleFrames:
    def test_arithmetic_sequence(self):
        assert video.clip_indices(100, 16, 4, 0) == list(range(0, 61, 4))

    def test_clamps_to_last_frame(self):
        idx = video.clip_indices(10, 16, 4, 0)
        assert idx[:3] == [0, 4, 8] and all(i == 9 for i in idx[3:])

    def test_seed_reproducible(self):
        v = np.random.default_rng(0).integers(0, 255, size=(40, 12, 12, 3), dtype=np.uint8)
        a, ca = video.sample_frames(v, 8, 2, rng_seed=3, pad=2)
        b, cb = video.sample_frames(v, 8, 2, rng_seed=3, pad=2)
        assert ca == cb and np.array_equal(a, b)
        assert a.shape == (8, 12, 12, 3)

    def test_shared_crop(self):
        v = np.random.default_rng(1).integers(0, 255, size=(20, 12, 12, 3), dtype=np.uint8)
        v[:] = v[0]
        frames, _ = video.sample_frames(v, 4, 1, rng_seed=5, pad=3)
        assert all(np.array_equal(frames[0], f) for f in frames)

    def test_empty(self):
        with pytest.raises(ValueError):
            video.sample_frames(np.zeros((0, 4, 4, 3)), 4, 1)

    def test_uniform_starts(self):
        assert video.uniform_clip_starts(16, 8, 1, 2) == [0, 8]
        assert video.uniform_clip_starts(100, 16, 4, 4) == [0, 13, 26, 39]


class TestResample:
    def test_identity(self):
        x = np.random.default_rng(0).uniform(-1, 1, 1000)
        out = audio.resample_to_16k_mono(Waveform(16000, x))
        assert np.array_equal(out.samples, x)

    def test_constant_halves(self):
        out = audio.resample_to_16k_mono(Waveform(32000, np.full(32000, 0.25)))
        assert len(out.samples) == 16000 and np.allclose(out.samples, 0.25)

    def test_stereo_mean(self):
        x = np.stack([np.full(100, 0.2), np.full(100, 0.6)], axis=1)
        np.testing.assert_allclose(audio.resample_to_16k_mono(Waveform(16000, x)).samples, 0.4)

    def test_tone_survives(self):
        t = np.arange(48000) / 48000
        out = audio.resample_to_16k_mono(Waveform(48000, np.sin(2 * np.pi * 440 * t)))
        spec = np.abs(np.fft.rfft(out.samples))
        freqs = np.fft.rfftfreq(len(out.samples), 1 / 16000)
        assert abs(freqs[np.argmax(spec)] - 440) <= freqs[1]


class TestMedia:
    def test_ppm_round_trip(self, tmp_path):
        frames = np.random.default_rng(0).integers(0, 256, size=(3, 5, 7, 3), dtype=np.uint8)
        media.write_video(tmp_path / "v", frames)
        assert np.array_equal(media.read_video(tmp_path / "v"), frames)

    def test_wav_round_trip(self, tmp_path):
        x = np.random.default_rng(0).uniform(-0.9, 0.9, size=(200, 2))
        media.write_wav(tmp_path / "a.wav", Waveform(22050, x))
        back = media.read_wav(tmp_path / "a.wav")
        assert back.sample_rate == 22050 and back.samples.shape == (200, 2)
        assert np.abs(back.samples - x).max() <= 1 / 32767
