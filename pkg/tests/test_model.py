import dataclasses

import numpy as np
import pytest

from conftest import tiny_batch, tiny_config
from mov import fusion, model as mv
from mov.numcore.nn import ConfigError


def outputs(cfg, ps, v, aux_in):
    out = mv.forward(ps.constants(), cfg, v, aux_in)
    return (None if out.v_m is None else out.v_m.value,
            None if out.x_m is None else out.x_m.value)


class TestInit:
    def test_encoders_share_backbone_bitwise(self, tiny):
        back = mv.init_backbone(tiny, 3)
        ps = mv.init_model(tiny, 0, back)
        for name in back.names("vision."):
            rest = name[len("vision"):]
            assert ps["video_enc" + rest].value.tobytes() == back[name].value.tobytes()
            assert ps["aux_enc" + rest].value.tobytes() == back[name].value.tobytes()
            assert ps["video_enc" + rest].value is not ps["aux_enc" + rest].value

    def test_audio_head_replaces_flow_head(self):
        ps = mv.init_model(tiny_config(modality="audio"), 0)
        assert ps.names("audio_mlp.") and not ps.names("temporal_x.")

    def test_load_backbone_shape_mismatch(self, tiny):
        ps = mv.init_model(tiny, 0)
        other = mv.init_backbone(dataclasses.replace(tiny, vit=dataclasses.replace(tiny.vit, image_hw=(24, 24))), 0)
        with pytest.raises(ConfigError):
            mv.load_backbone_into(ps, other)

    @pytest.mark.parametrize("kw", [{"modality": "depth"}, {"fusion_mode": "late"}, {"head_heads": 3},
                                    {"temporal_layers": 0}])
    def test_bad_config(self, kw):
        with pytest.raises(ConfigError):
            tiny_config(**kw)


class TestForward:
    @pytest.mark.parametrize("modality", ["flow", "audio"])
    def test_zero_cross_heads_reduce_to_pooled_branches(self, modality):
        cfg = tiny_config(modality=modality)
        ps = mv.init_model(cfg, 1)
        fusion.zero_output_projections(ps, "cross_v")
        fusion.zero_output_projections(ps, "cross_x")
        v, aux_in, _ = tiny_batch(cfg)
        full = outputs(cfg, ps, v, aux_in)
        pooled = outputs(dataclasses.replace(cfg, fusion_mode="score-fusion"), ps, v, aux_in)
        for a, b in zip(full, pooled):
            np.testing.assert_allclose(a, b, atol=1e-10, rtol=0)

    def test_auxiliary_branch_attends_to_backbone_features(self, tiny):
        ps = mv.init_model(tiny, 2)
        v, aux_in, _ = tiny_batch(tiny)
        v2 = v + np.random.default_rng(9).normal(size=v.shape)
        _, x1 = outputs(tiny, ps, v, aux_in)
        _, x2 = outputs(tiny, ps, v2, aux_in)
        assert np.abs(x1 - x2).max() > 1e-6
        # the independent branch ignores v entirely
        sf = dataclasses.replace(tiny, fusion_mode="score-fusion")
        np.testing.assert_array_equal(outputs(sf, ps, v, aux_in)[1], outputs(sf, ps, v2, aux_in)[1])

    def test_mode_outputs(self, tiny):
        ps = mv.init_model(tiny, 0)
        v, aux_in, _ = tiny_batch(tiny)
        shapes = {}
        for mode in mv.FUSION_MODES:
            vm, xm = outputs(dataclasses.replace(tiny, fusion_mode=mode), ps, v, aux_in)
            shapes[mode] = (None if vm is None else vm.shape, None if xm is None else xm.shape)
        assert shapes["video-only"] == ((2, 8), None)
        assert shapes["aux-only"] == (None, (2, 8))
        assert shapes["score-fusion"] == shapes["cross-attention"] == ((2, 8), (2, 8))

    def test_video_only_never_touches_aux(self, tiny):
        ps = mv.init_model(tiny, 0)
        v, _, _ = tiny_batch(tiny)
        out = mv.forward(ps.constants(), dataclasses.replace(tiny, fusion_mode="video-only"), v)
        np.testing.assert_allclose(out.v_pool, v.mean(axis=1))

    def test_audio_token_shape(self):
        cfg = tiny_config(modality="audio")
        ps = mv.init_model(cfg, 0)
        _, aux_in, _ = tiny_batch(cfg)
        assert mv.encode_aux(ps.constants(), cfg, aux_in).shape == (2, 1, 8)


def test_frames_to_input_layout():
    frames = np.zeros((2, 4, 5, 3), dtype=np.uint8)
    frames[..., 1] = 255
    x = mv.frames_to_input(frames)
    assert x.shape == (2, 3, 4, 5)
    assert np.allclose(x[:, 1], (1 - mv.PIXEL_MEAN) / mv.PIXEL_STD)
    assert np.allclose(x[:, 0], -mv.PIXEL_MEAN / mv.PIXEL_STD)
