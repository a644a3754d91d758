"""Per-domain translation networks and attention placement.

Each domain owns four networks: a content encoder (image -> spatial content
code), a style encoder (image -> style vector), a decoder (content + style
-> image), and a patch discriminator. Self-attention blocks are inserted at
stages selected by a placement variant:

  ds      one block entering the encoder's downsampling path
  us      one block entering the decoder's upsampling path
  ds-us   both of the above
  ds3-us3 blocks at every stage of both paths (three per path)

The downsampling path has three stages (before each stride-2 convolution
and at the bottleneck entry); the upsampling path mirrors them. The
discriminator can carry one extra block on its input.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import tensor as T
from .attention import AttentionBlock
from .errors import ConfigError, ShapeError
from .layers import AdainResBlock, Conv2d, InstanceNorm2d, Linear, Mlp, ResBlock
from .tensor import Tensor


class PlacementVariant(Enum):
    DS_ONLY = "ds"
    US_ONLY = "us"
    DS_US = "ds-us"
    DS3_US3 = "ds3-us3"

    @classmethod
    def from_name(cls, name: str) -> "PlacementVariant":
        for v in cls:
            if v.value == name:
                return v
        raise ConfigError(f"unknown placement variant {name!r}; expected one of "
                          f"{[v.value for v in cls]}")


_ENCODER_SITES = {
    PlacementVariant.DS_ONLY: (0,),
    PlacementVariant.US_ONLY: (),
    PlacementVariant.DS_US: (0,),
    PlacementVariant.DS3_US3: (0, 1, 2),
}
_DECODER_SITES = {
    PlacementVariant.DS_ONLY: (),
    PlacementVariant.US_ONLY: (0,),
    PlacementVariant.DS_US: (0,),
    PlacementVariant.DS3_US3: (0, 1, 2),
}


@dataclass(frozen=True)
class PlacementConfig:
    variant: PlacementVariant = PlacementVariant.DS_US
    attach_discriminator_sa: bool = True

    def encoder_sites(self):
        return _ENCODER_SITES[self.variant]

    def decoder_sites(self):
        return _DECODER_SITES[self.variant]


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 16
    image_channels: int = 3
    base_channels: int = 16
    style_dim: int = 8
    placement: PlacementConfig = field(default_factory=PlacementConfig)
    attention_reduction: int = 8
    attention_cap: int = 4096
    spectral_norm: bool = False
    seed: int = 0

    @property
    def content_channels(self) -> int:
        return self.base_channels * 4

    def with_variant(self, name: str) -> "ModelConfig":
        return replace(self, placement=replace(self.placement,
                                               variant=PlacementVariant.from_name(name)))


def _validate(cfg: ModelConfig):
    if cfg.image_size < 8 or cfg.image_size % 4 != 0:
        raise ConfigError(f"image_size must be a multiple of 4 and >= 8, got {cfg.image_size}")
    if cfg.base_channels < 1 or cfg.style_dim < 1:
        raise ConfigError("base_channels and style_dim must be positive")
    s = cfg.image_size
    site_n = {0: s * s, 1: (s // 2) ** 2, 2: (s // 4) ** 2}
    used = [site_n[i] for i in cfg.placement.encoder_sites()]
    used += [site_n[2 - i] for i in cfg.placement.decoder_sites()]
    if cfg.placement.attach_discriminator_sa:
        used.append(s * s)
    for n in used:
        if n > cfg.attention_cap:
            raise ConfigError(f"attention map would hold {n}x{n} entries, above the "
                              f"cap of {cfg.attention_cap}x{cfg.attention_cap}")


class ContentEncoder:
    """Image -> spatial content code at 1/4 resolution, 4x base channels."""

    def __init__(self, cfg: ModelConfig, rng, dtype):
        b = cfg.base_channels
        self.stem = Conv2d(rng, cfg.image_channels, b, 7, 1, 3, dtype)
        self.stem_norm = InstanceNorm2d(b, dtype)
        self.attn = {}
        site_channels = {0: b, 1: 2 * b, 2: 4 * b}
        for site in cfg.placement.encoder_sites():
            self.attn[site] = AttentionBlock(site_channels[site], rng,
                                             cfg.attention_reduction,
                                             cfg.spectral_norm, dtype)
        self.down1 = Conv2d(rng, b, 2 * b, 4, 2, 1, dtype)
        self.norm1 = InstanceNorm2d(2 * b, dtype)
        self.down2 = Conv2d(rng, 2 * b, 4 * b, 4, 2, 1, dtype)
        self.norm2 = InstanceNorm2d(4 * b, dtype)
        self.res1 = ResBlock(rng, 4 * b, dtype)
        self.res2 = ResBlock(rng, 4 * b, dtype)

    def forward(self, x):
        h = T.relu(self.stem_norm.forward(self.stem.forward(x)))
        if 0 in self.attn:
            h = self.attn[0].forward(h)
        h = T.relu(self.norm1.forward(self.down1.forward(h)))
        if 1 in self.attn:
            h = self.attn[1].forward(h)
        h = T.relu(self.norm2.forward(self.down2.forward(h)))
        if 2 in self.attn:
            h = self.attn[2].forward(h)
        return self.res2.forward(self.res1.forward(h))

    def params(self, prefix):
        out = self.stem.params(prefix + "stem.") + self.stem_norm.params(prefix + "stemnorm.")
        for site in sorted(self.attn):
            out += self.attn[site].params(f"{prefix}attn{site}.")
        out += self.down1.params(prefix + "down1.") + self.norm1.params(prefix + "norm1.")
        out += self.down2.params(prefix + "down2.") + self.norm2.params(prefix + "norm2.")
        out += self.res1.params(prefix + "res1.") + self.res2.params(prefix + "res2.")
        return out


class StyleEncoder:
    """Image -> fixed-length style vector. No normalization: the channel
    statistics a norm would remove are exactly what style must capture."""

    def __init__(self, cfg: ModelConfig, rng, dtype):
        b = cfg.base_channels
        self.stem = Conv2d(rng, cfg.image_channels, b, 7, 1, 3, dtype)
        self.down1 = Conv2d(rng, b, 2 * b, 4, 2, 1, dtype)
        self.down2 = Conv2d(rng, 2 * b, 4 * b, 4, 2, 1, dtype)
        self.down3 = Conv2d(rng, 4 * b, 4 * b, 4, 2, 1, dtype)
        self.head = Linear(rng, 4 * b, cfg.style_dim, dtype)

    def forward(self, x):
        h = T.relu(self.stem.forward(x))
        h = T.relu(self.down1.forward(h))
        h = T.relu(self.down2.forward(h))
        h = T.relu(self.down3.forward(h))
        return self.head.forward(T.global_avg_pool(h))

    def params(self, prefix):
        out = []
        for name, sub in (("stem.", self.stem), ("down1.", self.down1),
                          ("down2.", self.down2), ("down3.", self.down3),
                          ("head.", self.head)):
            out += sub.params(prefix + name)
        return out


class Decoder:
    """Content code + style vector -> image in [-1, 1].

    A small MLP maps the style vector to scale/shift pairs for the
    adaptive-norm residual blocks; scales are offset by 1 so a zero MLP
    output leaves the block near identity.
    """

    def __init__(self, cfg: ModelConfig, rng, dtype):
        b = cfg.base_channels
        c = 4 * b
        self.channels = c
        self.mlp = Mlp(rng, [cfg.style_dim, 32, 32, 8 * c], dtype)
        self.res1 = AdainResBlock(rng, c, dtype)
        self.res2 = AdainResBlock(rng, c, dtype)
        self.attn = {}
        site_channels = {0: c, 1: 2 * b, 2: b}
        for site in cfg.placement.decoder_sites():
            self.attn[site] = AttentionBlock(site_channels[site], rng,
                                             cfg.attention_reduction,
                                             cfg.spectral_norm, dtype)
        self.up1 = Conv2d(rng, c, 2 * b, 5, 1, 2, dtype)
        self.up2 = Conv2d(rng, 2 * b, b, 5, 1, 2, dtype)
        self.out = Conv2d(rng, b, cfg.image_channels, 7, 1, 3, dtype)

    def _style_params(self, s):
        raw = self.mlp.forward(s)
        c = self.channels
        pairs = []
        for k in range(4):
            scale = T.add(T.narrow(raw, 1, 2 * k * c, c), 1.0)
            shift = T.narrow(raw, 1, (2 * k + 1) * c, c)
            pairs.append((scale, shift))
        return pairs

    def forward(self, content, style):
        (g1, b1), (g2, b2), (g3, b3), (g4, b4) = self._style_params(style)
        h = self.res1.forward(content, g1, b1, g2, b2)
        h = self.res2.forward(h, g3, b3, g4, b4)
        if 0 in self.attn:
            h = self.attn[0].forward(h)
        h = T.relu(self.up1.forward(T.upsample_nearest2x(h)))
        if 1 in self.attn:
            h = self.attn[1].forward(h)
        h = T.relu(self.up2.forward(T.upsample_nearest2x(h)))
        if 2 in self.attn:
            h = self.attn[2].forward(h)
        return T.tanh(self.out.forward(h))

    def params(self, prefix):
        out = self.mlp.params(prefix + "mlp.")
        out += self.res1.params(prefix + "res1.") + self.res2.params(prefix + "res2.")
        for site in sorted(self.attn):
            out += self.attn[site].params(f"{prefix}attn{site}.")
        out += self.up1.params(prefix + "up1.") + self.up2.params(prefix + "up2.")
        out += self.out.params(prefix + "out.")
        return out


class Discriminator:
    """Patch discriminator: three stride-2 stages and a 1-channel sigmoid
    head, so the score map is 1/8 of the input resolution."""

    def __init__(self, cfg: ModelConfig, rng, dtype):
        b = cfg.base_channels
        self.attn = None
        if cfg.placement.attach_discriminator_sa:
            self.attn = AttentionBlock(cfg.image_channels, rng,
                                       cfg.attention_reduction,
                                       cfg.spectral_norm, dtype)
        self.conv1 = Conv2d(rng, cfg.image_channels, b, 4, 2, 1, dtype)
        self.conv2 = Conv2d(rng, b, 2 * b, 4, 2, 1, dtype)
        self.conv3 = Conv2d(rng, 2 * b, 4 * b, 4, 2, 1, dtype)
        self.head = Conv2d(rng, 4 * b, 1, 3, 1, 1, dtype)

    def forward(self, x):
        h = x
        if self.attn is not None:
            h = self.attn.forward(h)
        h = T.lrelu(self.conv1.forward(h))
        h = T.lrelu(self.conv2.forward(h))
        h = T.lrelu(self.conv3.forward(h))
        return T.sigmoid(self.head.forward(h))

    def params(self, prefix):
        out = []
        if self.attn is not None:
            out += self.attn.params(prefix + "attn.")
        for name, sub in (("conv1.", self.conv1), ("conv2.", self.conv2),
                          ("conv3.", self.conv3), ("head.", self.head)):
            out += sub.params(prefix + name)
        return out


class TranslationModel:
    """The four networks per domain plus geometry and placement metadata."""

    def __init__(self, cfg: ModelConfig, dtype=np.float32):
        _validate(cfg)
        self.config = cfg
        self.dtype = np.dtype(dtype).type
        rng = np.random.default_rng(cfg.seed)
        self.content_enc = {}
        self.style_enc = {}
        self.decoder = {}
        self.discriminator = {}
        for domain in (1, 2):
            self.content_enc[domain] = ContentEncoder(cfg, rng, dtype)
            self.style_enc[domain] = StyleEncoder(cfg, rng, dtype)
            self.decoder[domain] = Decoder(cfg, rng, dtype)
            self.discriminator[domain] = Discriminator(cfg, rng, dtype)

    # -- geometry -----------------------------------------------------------
    def _check_image(self, x, what="image"):
        s = self.config.image_size
        want = (self.config.image_channels, s, s)
        if x.data.ndim != 4 or x.data.shape[1:] != want:
            raise ShapeError(f"{what} shape {x.shape} does not match model geometry (b, {want[0]}, {s}, {s})")

    def _check_domain(self, domain):
        if domain not in (1, 2):
            raise ShapeError(f"domain must be 1 or 2, got {domain}")

    def _check_codes(self, content, style):
        s = self.config.image_size // 4
        want_c = (self.config.content_channels, s, s)
        if content.data.ndim != 4 or content.data.shape[1:] != want_c:
            raise ShapeError(f"content code shape {content.shape}, expected (b, {want_c[0]}, {s}, {s})")
        if style.data.ndim != 2 or style.data.shape[1] != self.config.style_dim:
            raise ShapeError(f"style code shape {style.shape}, expected (b, {self.config.style_dim})")
        if content.data.shape[0] != style.data.shape[0]:
            raise ShapeError("content and style batch sizes differ")

    # -- forward API ----------------------------------------------------------
    def encode(self, x: Tensor, domain: int):
        """Split an image into its content code and style code."""
        self._check_domain(domain)
        self._check_image(x)
        return self.content_enc[domain].forward(x), self.style_enc[domain].forward(x)

    def encode_content(self, x: Tensor, domain: int) -> Tensor:
        self._check_domain(domain)
        self._check_image(x)
        return self.content_enc[domain].forward(x)

    def encode_style(self, x: Tensor, domain: int) -> Tensor:
        self._check_domain(domain)
        self._check_image(x)
        return self.style_enc[domain].forward(x)

    def decode(self, content: Tensor, style: Tensor, domain: int) -> Tensor:
        self._check_domain(domain)
        self._check_codes(content, style)
        return self.decoder[domain].forward(content, style)

    def reconstruct(self, x: Tensor, domain: int) -> Tensor:
        c, s = self.encode(x, domain)
        return self.decode(c, s, domain)

    def translate(self, x: Tensor, style: Tensor, source_domain: int = 1) -> Tensor:
        """Decode the source image's content with the other domain's decoder."""
        self._check_domain(source_domain)
        target = 3 - source_domain
        return self.decode(self.encode_content(x, source_domain), style, target)

    def discriminate(self, x: Tensor, domain: int) -> Tensor:
        self._check_domain(domain)
        self._check_image(x)
        return self.discriminator[domain].forward(x)

    def draw_style(self, rng: np.random.Generator, batch: int = 1) -> Tensor:
        """Sample a style code from the unit-normal prior."""
        return Tensor(rng.standard_normal((batch, self.config.style_dim)).astype(self.dtype))

    # -- parameter bookkeeping ----------------------------------------------------
    def generator_params(self):
        out = []
        for domain in (1, 2):
            out += self.content_enc[domain].params(f"cenc{domain}.")
            out += self.style_enc[domain].params(f"senc{domain}.")
            out += self.decoder[domain].params(f"dec{domain}.")
        return out

    def discriminator_params(self):
        out = []
        for domain in (1, 2):
            out += self.discriminator[domain].params(f"disc{domain}.")
        return out

    def named_params(self):
        return self.generator_params() + self.discriminator_params()

    def zero_grad(self):
        for _, p in self.named_params():
            p.grad = None

    def generator_attention_count(self, domain: int = 1) -> int:
        """Attention blocks on the encode-decode path of one domain."""
        return len(self.content_enc[domain].attn) + len(self.decoder[domain].attn)


def build_model(cfg: ModelConfig, dtype=np.float32) -> TranslationModel:
    """Construct a translation model; identical configs and seeds produce
    bitwise-identical parameters."""
    return TranslationModel(cfg, dtype=dtype)
