import numpy as np

from conftest import tiny_config
from mov import pretrain as pt
from mov import synthdata as sd


def test_batch_pairs_share_appearance_and_differ_in_caption():
    rng = np.random.default_rng(0)
    images, texts = pt.sample_batch(sd.all_appearances(), rng, pt.PretrainConfig(batch_size=8, image_size=16))
    assert images.shape == (8, 16, 16, 3) and len(texts) == 8
    for a, b in zip(texts[0::2], texts[1::2]):
        assert a != b
        looks = [" ".join(w for w in t.replace(".", " ").split() if w in sd.COLORS or w in sd.SHAPES)
                 for t in (a, b)]
        assert looks[0] == looks[1]


def test_trail_only_with_action():
    a = sd.render_still("red", "disk", np.random.default_rng(3), 32)
    b = sd.render_still("red", "disk", np.random.default_rng(3), 32, trail=(3, 0))
    assert not np.array_equal(a, b)
    # the sprite itself sits on top of its trail
    assert np.count_nonzero(np.any(a != b, axis=-1)) > 0


def test_loss_decreases_and_is_seeded():
    cfg = tiny_config()
    pc = pt.PretrainConfig(steps=30, batch_size=8, image_size=16, warmup=5, lr=3e-3)
    ps, losses = pt.pretrain_backbone(cfg, pc)
    assert np.mean(losses[-5:]) < np.mean(losses[:5])
    assert set(ps.names()) == set(ps.names("vision.")) | set(ps.names("text."))
    _, again = pt.pretrain_backbone(cfg, pt.PretrainConfig(steps=3, batch_size=8, image_size=16, warmup=5, lr=3e-3))
    assert again == losses[:3]
