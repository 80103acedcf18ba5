"""Deterministic float64 numerical kernel: autodiff, transformer blocks, FFT, AdamW."""

from . import autograd, movt
from .autograd import Var, no_grad
from .fft import hamming, rfft_magnitude
from .functional import cosine_matrix, cosine_similarity, entropy, softmax
from .gradcheck import grad_check
from .nn import ConfigError, layer_norm, mlp_block, multi_head_attention
from .params import Param, ParamSet, ParamView, adamw_step, half_cosine_lr

__all__ = [
    "autograd", "movt", "Var", "no_grad", "hamming", "rfft_magnitude",
    "cosine_matrix", "cosine_similarity", "entropy", "softmax", "grad_check",
    "ConfigError", "layer_norm", "mlp_block", "multi_head_attention",
    "Param", "ParamSet", "ParamView", "adamw_step", "half_cosine_lr",
]
