"""Parameterized layers used to assemble the translation networks.

Layers are thin containers: they own parameter tensors, initialize them
(Kaiming fan-in scaling for weights, zeros for biases), and build the
forward graph on each call. ``params()`` yields (name, tensor) pairs in a
fixed order so checkpoints and optimizers stay deterministic.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


def kaiming_conv(rng: np.random.Generator, out_ch: int, in_ch: int, k: int, dtype) -> Tensor:
    std = np.sqrt(2.0 / (in_ch * k * k))
    return Tensor((rng.standard_normal((out_ch, in_ch, k, k)) * std).astype(dtype),
                  requires_grad=True)


def kaiming_linear(rng: np.random.Generator, in_f: int, out_f: int, dtype) -> Tensor:
    std = np.sqrt(2.0 / in_f)
    return Tensor((rng.standard_normal((in_f, out_f)) * std).astype(dtype), requires_grad=True)


class Conv2d:
    def __init__(self, rng, in_ch, out_ch, k, stride=1, pad=0, dtype=np.float32):
        self.stride = stride
        self.pad = pad
        self.weight = kaiming_conv(rng, out_ch, in_ch, k, dtype)
        self.bias = Tensor(np.zeros(out_ch, dtype=dtype), requires_grad=True)

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)

    def params(self, prefix):
        return [(prefix + "w", self.weight), (prefix + "b", self.bias)]


class Linear:
    def __init__(self, rng, in_f, out_f, dtype=np.float32):
        self.weight = kaiming_linear(rng, in_f, out_f, dtype)
        self.bias = Tensor(np.zeros(out_f, dtype=dtype), requires_grad=True)

    def forward(self, x):
        return T.linear(x, self.weight, self.bias)

    def params(self, prefix):
        return [(prefix + "w", self.weight), (prefix + "b", self.bias)]


class InstanceNorm2d:
    """Instance norm with learnable per-channel affine (scale 1, shift 0 at init)."""

    def __init__(self, channels, dtype=np.float32):
        self.scale = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.shift = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)

    def forward(self, x):
        return T.instance_norm(x, self.scale, self.shift)

    def params(self, prefix):
        return [(prefix + "scale", self.scale), (prefix + "shift", self.shift)]


class ResBlock:
    """conv-norm-relu-conv-norm with an additive skip, constant channel count."""

    def __init__(self, rng, channels, dtype=np.float32):
        self.conv1 = Conv2d(rng, channels, channels, 3, 1, 1, dtype)
        self.norm1 = InstanceNorm2d(channels, dtype)
        self.conv2 = Conv2d(rng, channels, channels, 3, 1, 1, dtype)
        self.norm2 = InstanceNorm2d(channels, dtype)

    def forward(self, x):
        h = T.relu(self.norm1.forward(self.conv1.forward(x)))
        h = self.norm2.forward(self.conv2.forward(h))
        return T.add(h, x)

    def params(self, prefix):
        out = []
        for name, sub in (("conv1.", self.conv1), ("norm1.", self.norm1),
                          ("conv2.", self.conv2), ("norm2.", self.norm2)):
            out += sub.params(prefix + name)
        return out


class AdainResBlock:
    """Residual block whose normalizations take style-derived scale/shift.

    ``forward`` consumes two (scale, shift) pairs of shape (batch, channels)
    produced by the style MLP.
    """

    def __init__(self, rng, channels, dtype=np.float32):
        self.channels = channels
        self.conv1 = Conv2d(rng, channels, channels, 3, 1, 1, dtype)
        self.conv2 = Conv2d(rng, channels, channels, 3, 1, 1, dtype)

    def forward(self, x, scale1, shift1, scale2, shift2):
        h = T.relu(T.adaptive_instance_norm(self.conv1.forward(x), scale1, shift1))
        h = T.adaptive_instance_norm(self.conv2.forward(h), scale2, shift2)
        return T.add(h, x)

    def params(self, prefix):
        return self.conv1.params(prefix + "conv1.") + self.conv2.params(prefix + "conv2.")


class Mlp:
    """Stack of affine layers with relu between (none after the last)."""

    def __init__(self, rng, sizes, dtype=np.float32):
        self.layers = [Linear(rng, sizes[i], sizes[i + 1], dtype) for i in range(len(sizes) - 1)]

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            x = layer.forward(x)
            if i < len(self.layers) - 1:
                x = T.relu(x)
        return x

    def params(self, prefix):
        out = []
        for i, layer in enumerate(self.layers):
            out += layer.params(f"{prefix}l{i}.")
        return out
