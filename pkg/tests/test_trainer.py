import dataclasses
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import tiny_batch, tiny_config
from mov import model as mv
from mov import trainer as tr
from mov.encoders import PromptSet, VitConfig, build_embedding_table
from mov.numcore.gradcheck import grad_check
from mov.numcore.nn import ConfigError
from mov.trainer import TrainConfig, TrainData


def unit_rows(p, d, seed=0):
    t = np.random.default_rng(seed).normal(size=(p, d))
    return t / np.linalg.norm(t, axis=1, keepdims=True)


def tiny_data(cfg, p=4, s=8, k=2, n=3, seed=0):
    rng = np.random.default_rng(seed)
    h, w = cfg.vit.image_hw
    v = rng.normal(size=(s, k, n, cfg.d))
    aux = rng.integers(0, 256, size=(s, k, n, h, w, 3), dtype=np.uint8)
    return TrainData(v, aux, np.arange(s) % p, unit_rows(p, cfg.d, seed + 1))


class TestLoss:
    def test_alpha_one_ignores_auxiliary_branch(self):
        rng = np.random.default_rng(0)
        table, v = unit_rows(5, 8), rng.normal(size=(3, 8))
        a = tr.mov_loss(v, rng.normal(size=(3, 8)), table, [0, 1, 2], alpha=1.0).value
        b = tr.mov_loss(v, rng.normal(size=(3, 8)), table, [0, 1, 2], alpha=1.0).value
        assert a == b

    def test_exact_match_on_orthogonal_table(self):
        table = np.eye(6)[:4]
        loss = tr.mov_loss(table[[1, 3]] * 2.0, table[[1, 3]], table, [1, 3]).value
        assert abs(loss) <= 1e-6

    def test_uninformative_embedding_is_log_p(self):
        table = np.eye(6)[:4]
        loss = tr.mov_loss(np.eye(6)[[5]], np.eye(6)[[4]], table, [2]).value
        assert abs(loss - np.log(4)) <= 1e-12

    @given(st.integers(0, 10_000), st.floats(0.1, 50.0))
    @settings(max_examples=50, deadline=None)
    def test_embedding_scale_invariance(self, seed, scale):
        rng = np.random.default_rng(seed)
        table, v, x = unit_rows(4, 8, seed), rng.normal(size=(2, 8)), rng.normal(size=(2, 8))
        a = tr.mov_loss(v, x, table, [0, 3]).value
        b = tr.mov_loss(v * scale, x * scale, table, [0, 3]).value
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a))

    def test_missing_branch_takes_full_weight(self):
        rng = np.random.default_rng(1)
        table, v = unit_rows(3, 8), rng.normal(size=(2, 8))
        assert tr.mov_loss(v, None, table, [0, 1]).value == tr.mov_loss(v, v, table, [0, 1]).value
        with pytest.raises(ValueError):
            tr.mov_loss(None, None, table, [0])

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            tr.mov_loss(np.ones((1, 4)), None, np.eye(4)[:3], [3])
        with pytest.raises(ValueError):
            tr.mov_loss(np.ones((1, 4)), None, np.eye(4)[:3], [-1])

    def test_bad_hyperparameters(self):
        with pytest.raises(ConfigError):
            TrainConfig(alpha=1.5)
        with pytest.raises(ConfigError):
            TrainConfig(tau=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(trainable_layers="0")


def test_full_loss_gradients():
    cfg = tiny_config()
    ps = mv.init_model(cfg, 0)
    plan = tr.build_freeze_plan(TrainConfig(trainable_layers="1"), ps, cfg)
    plan.apply(ps)
    v, aux_in, _ = tiny_batch(cfg, b=2)
    table, labels = unit_rows(4, cfg.d, 5), np.array([0, 3])

    def loss(p):
        out = mv.forward(p, cfg, v, aux_in)
        return tr.mov_loss(out.v_m, out.x_m, table, labels, 0.5, 0.01)

    t0 = time.time()
    assert any(n.startswith("aux_enc.blocks.1") for n in ps.trainable_names())
    assert grad_check(loss, ps, max_coords=12) <= 1e-4
    assert time.time() - t0 < 60


class TestFreezePlan:
    @pytest.mark.parametrize("k", tr.TRAINABLE_LAYER_GRID)
    def test_grid_on_twelve_layer_encoder(self, k):
        vit = VitConfig(image_hw=(8, 8), patch_size=8, embed_dim=8, layers=12, heads=2)
        cfg = dataclasses.replace(tiny_config(), vit=vit)
        ps = mv.init_model(cfg, 0)
        plan = tr.build_freeze_plan(TrainConfig(trainable_layers=k), ps, cfg)
        aux = [n for n in plan.names() if n.startswith("aux_enc.")]
        if k == "all":
            assert aux == ps.names("aux_enc.")
        else:
            blocks = {int(n.split(".")[2]) for n in aux}
            assert blocks == set(range(12 - int(k), 12))
            assert all(n.startswith("aux_enc.blocks.") for n in aux)
        assert not any(n.startswith(("video_enc.", "text.")) for n in plan.names())
        heads = [n for n in ps.names() if n.split(".")[0] in ("temporal_v", "temporal_x", "cross_v", "cross_x")]
        assert set(heads) <= set(plan.names())

    def test_exceeds_depth(self, tiny):
        ps = mv.init_model(tiny, 0)
        with pytest.raises(ConfigError, match="exceeds"):
            tr.build_freeze_plan(TrainConfig(trainable_layers="3"), ps, tiny)


class TestTrain:
    def test_frozen_parameters_unchanged(self, tiny):
        ps = mv.init_model(tiny, 0)
        before = {n: ps[n].value.copy() for n in ps.names()}
        tr.train(ps, tiny, tiny_data(tiny), TrainConfig(epochs=2, batch_size=4, base_lr=1e-2,
                                                        trainable_layers="1"))
        for n in ps.names():
            changed = not np.array_equal(before[n], ps[n].value)
            frozen = n.startswith(("text.", "video_enc.", "aux_enc.blocks.0", "aux_enc.patch", "aux_enc.proj"))
            if frozen:
                assert not changed, n
        assert not np.array_equal(before["cross_x.mlp.w2"], ps["cross_x.mlp.w2"].value)

    def test_deterministic(self, tiny):
        cfg = TrainConfig(epochs=2, batch_size=3, base_lr=1e-3, seed=4)
        a = tr.train(mv.init_model(tiny, 0), tiny, tiny_data(tiny), cfg)
        b = tr.train(mv.init_model(tiny, 0), tiny, tiny_data(tiny), cfg)
        assert a.curve == b.curve
        assert len(a.curve) == 2 * 3

    @pytest.mark.parametrize("tau, near", [(1.0, True), (0.01, False)])
    def test_initial_loss_near_log_p(self, tau, near):
        # uniform predictions need the similarity spread to be small next to tau;
        # at tau = 0.01 random heads are far from uniform and the loss sits well above log p
        cfg = tiny_config()
        names = [f"class {c}" for c in "abcdef"]
        for seed in range(3):
            ps = mv.init_model(cfg, seed)
            table = build_embedding_table(names, PromptSet(), ps.constants().sub("text"), cfg.text).matrix
            data = dataclasses.replace(tiny_data(cfg, p=6, s=12, seed=seed), table=table)
            res = tr.train(ps, cfg, data, TrainConfig(epochs=1, batch_size=12, base_lr=0.0, tau=tau))
            assert (abs(res.curve[0][2] - np.log(6)) <= 0.2 * np.log(6)) == near

    def test_lr_schedule_nonincreasing(self, tiny):
        res = tr.train(mv.init_model(tiny, 0), tiny, tiny_data(tiny), TrainConfig(epochs=3, batch_size=4,
                                                                                     base_lr=1e-3))
        lrs = [lr for _, lr, _ in res.curve]
        assert lrs[0] == 1e-3 and all(a >= b for a, b in zip(lrs, lrs[1:]))

    def test_empty_data(self, tiny):
        with pytest.raises(ValueError):
            TrainData(np.zeros((0, 1, 3, 8)), np.zeros((0, 1)), np.zeros(0, int), np.eye(8)[:2])


def test_checkpoint_round_trip(tmp_path, tiny):
    ps = mv.init_model(tiny, 0)
    cfg = TrainConfig(epochs=1, batch_size=4, trainable_layers="2")
    res = tr.train(ps, tiny, tiny_data(tiny), cfg)
    tr.save_checkpoint(tmp_path / "ck", ps, tiny, cfg, res.curve)
    ps2, model_cfg, cfg2 = tr.load_checkpoint(tmp_path / "ck")
    assert model_cfg == tiny and cfg2 == cfg
    assert ps2.names() == ps.names()
    for n in ps.names():
        assert ps2[n].value.tobytes() == ps[n].value.tobytes()
        assert ps2[n].trainable == ps[n].trainable
    rows = (tmp_path / "ck" / "loss_curve.csv").read_text().splitlines()
    assert rows[0] == "step,lr,loss" and len(rows) == 1 + len(res.curve)
