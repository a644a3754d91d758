"""Unpaired two-domain image translation with self-attention networks.

A desk-scale numpy implementation: a reverse-mode autodiff tensor core,
self-attention blocks, content/style autoencoders per domain, adversarial
plus bidirectional-reconstruction training, synthetic two-domain datasets,
and Frechet-distance evaluation with a fixed feature extractor.
"""

import os as _os

# The work units here are tiny; BLAS thread dispatch costs more than it buys
# and single-threaded kernels keep results bitwise reproducible. Effective
# only if numpy is not yet loaded; pre-set environment values always win.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

from .attention import AttentionBlock, attention_forward, attention_map, attention_output, attention_scores
from .losses import LossReport, LossWeights, full_objective
from .networks import ModelConfig, PlacementConfig, PlacementVariant, TranslationModel, build_model
from .tensor import Tensor, backward, no_grad

__version__ = "0.1.0"

__all__ = [
    "AttentionBlock", "attention_forward", "attention_map", "attention_output",
    "attention_scores", "LossReport", "LossWeights", "full_objective",
    "ModelConfig", "PlacementConfig", "PlacementVariant", "TranslationModel",
    "build_model", "Tensor", "backward", "no_grad", "__version__",
]
