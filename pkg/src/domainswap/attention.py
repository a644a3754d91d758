"""Self-attention over spatial feature maps.

For an input feature map the block projects every spatial position through
three 1x1 convolutions (key, query, value), scores every (output, source)
position pair by the dot product of the source's key with the output's
query, row-normalizes the scores into an attention map, and aggregates
value features under that map. A learnable scalar gate blends the result
back onto the input, so a freshly built block (gate = 0) is an exact
identity.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor

DEFAULT_REDUCTION = 8


def _kaiming(rng: np.random.Generator, shape, fan_in: int, dtype):
    std = np.sqrt(2.0 / fan_in)
    return Tensor((rng.standard_normal(shape) * std).astype(dtype), requires_grad=True)


class AttentionBlock:
    """Key/query/value 1x1 projections plus the residual gate.

    Key and query project the input's channels down by ``reduction`` (at
    least one channel); value keeps the channel count. ``spectral_norm``
    rescales each projection by its largest singular value at forward time.
    """

    def __init__(self, channels: int, rng: np.random.Generator,
                 reduction: int = DEFAULT_REDUCTION,
                 spectral_norm: bool = False, dtype=np.float32):
        if channels < 1:
            raise ShapeError("attention block needs at least one channel")
        self.channels = channels
        self.reduced = max(1, channels // reduction)
        self.spectral_norm = spectral_norm
        self.key_proj = _kaiming(rng, (self.reduced, channels, 1, 1), channels, dtype)
        self.query_proj = _kaiming(rng, (self.reduced, channels, 1, 1), channels, dtype)
        self.value_proj = _kaiming(rng, (channels, channels, 1, 1), channels, dtype)
        self.gate = Tensor(np.zeros(1, dtype=dtype), requires_grad=True)

    def params(self, prefix: str = ""):
        return [(prefix + "key", self.key_proj), (prefix + "query", self.query_proj),
                (prefix + "value", self.value_proj), (prefix + "gate", self.gate)]

    def _proj(self, w: Tensor) -> Tensor:
        if not self.spectral_norm:
            return w
        mat = w.data.reshape(w.data.shape[0], -1)
        sigma = float(np.linalg.svd(mat, compute_uv=False)[0])
        # sigma is treated as a constant, matching standard practice
        return T.scale(w, 1.0 / max(sigma, 1e-12))

    def forward(self, x: Tensor) -> Tensor:
        return attention_forward(x, self)


def _check_input(x: Tensor, block: AttentionBlock):
    if x.data.ndim != 4:
        raise ShapeError(f"attention expects (b, c, h, w), got {x.shape}")
    if x.data.shape[1] != block.channels:
        raise ShapeError(f"attention block built for {block.channels} channels, got {x.data.shape[1]}")
    if x.data.shape[2] * x.data.shape[3] < 1:
        raise ShapeError("attention needs at least one spatial position")


def attention_scores(x: Tensor, block: AttentionBlock) -> Tensor:
    """Pairwise scores: entry (j, i) is key(x_i) . query(x_j), both over N = h*w positions."""
    _check_input(x, block)
    b, _, h, w = x.data.shape
    n = h * w
    keys = T.reshape(T.conv2d(x, block._proj(block.key_proj)), (b, block.reduced, n))
    queries = T.reshape(T.conv2d(x, block._proj(block.query_proj)), (b, block.reduced, n))
    return T.matmul(T.transpose(queries, (0, 2, 1)), keys)


def attention_map(scores: Tensor) -> Tensor:
    """Row-normalize scores over source positions; every row is a distribution."""
    if scores.data.ndim != 3 or scores.data.shape[1] != scores.data.shape[2]:
        raise ShapeError(f"attention_map expects (b, n, n) scores, got {scores.shape}")
    return T.softmax(scores, axis=2)


def attention_output(x: Tensor, attn: Tensor, block: AttentionBlock) -> Tensor:
    """Aggregate value features under the attention map, back to (b, c, h, w)."""
    _check_input(x, block)
    b, c, h, w = x.data.shape
    n = h * w
    if attn.data.shape != (b, n, n):
        raise ShapeError(f"attention map shape {attn.shape} mismatches {n} spatial positions")
    values = T.reshape(T.conv2d(x, block._proj(block.value_proj)), (b, c, n))
    out = T.matmul(values, T.transpose(attn, (0, 2, 1)))
    return T.reshape(out, (b, c, h, w))


def attention_forward(x: Tensor, block: AttentionBlock) -> Tensor:
    """Gated residual attention: gate * aggregated + x."""
    attn = attention_map(attention_scores(x, block))
    out = attention_output(x, attn, block)
    return T.add(T.mul(block.gate, out), x)
