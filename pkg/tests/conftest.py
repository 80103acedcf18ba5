import numpy as np
import pytest

from mov import model as mv
from mov.encoders import TextConfig, VitConfig


def tiny_config(**kw) -> mv.ModelConfig:
    layers = kw.pop("layers", 2)
    vit = VitConfig(image_hw=(16, 16), patch_size=8, embed_dim=8, layers=layers, heads=2)
    text = TextConfig(embed_dim=8, layers=1, heads=2, vocab_size=64, max_len=12)
    kw.setdefault("head_heads", 2)
    return mv.ModelConfig(vit=vit, text=text, **kw)


def tiny_batch(cfg: mv.ModelConfig, b=2, n=3, seed=0):
    """Random backbone features and flow frames for ``b`` clips of ``n`` frames."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(b, n, cfg.d))
    h, w = cfg.vit.image_hw
    if cfg.modality == "flow":
        aux = rng.integers(0, 256, size=(b, n, h, w, 3), dtype=np.uint8)
        return v, mv.flow_to_input(aux), aux
    spec = rng.normal(size=(b, h, w))
    return v, mv.spectrogram_to_input(spec), spec


@pytest.fixture
def tiny():
    return tiny_config()


# acceptance criteria report one line each at the end of the run
_CRITERIA: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str):
    _CRITERIA[number] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
