"""Training objective: bidirectional reconstruction plus adversarial terms.

The full objective covers both translation directions. Per domain it holds
an image reconstruction term (encode then decode back to the input), latent
reconstruction terms (decode a content/style pair, re-encode, compare), and
an adversarial term matching translated images to the target domain. Terms
are combined with weights lambda_x, lambda_c, lambda_s.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from .errors import ConfigError
from .tensor import Tensor

LOG_EPS = 1e-7  # discriminator outputs are clamped to [eps, 1-eps] before log


@dataclass(frozen=True)
class LossWeights:
    lambda_x: float = 10.0
    lambda_c: float = 1.0
    lambda_s: float = 1.0

    def __post_init__(self):
        for name in ("lambda_x", "lambda_c", "lambda_s"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")


@dataclass
class LossReport:
    """Per-term scalars of one objective evaluation.

    ``image_1`` reconstructs a domain-1 image; ``content_1`` re-extracts
    domain-1 content from its translation into domain 2; ``style_1``
    re-extracts the style draw used when translating into domain 1;
    ``adv_1`` scores translated images against discriminator 1. ``total``
    is the weighted sum of the eight terms. Discriminator losses are
    carried for logging but are not part of ``total``.
    """

    image_1: float
    image_2: float
    content_1: float
    content_2: float
    style_1: float
    style_2: float
    adv_1: float
    adv_2: float
    total: float
    d_1: float = float("nan")
    d_2: float = float("nan")

    FIELDS = ("image_1", "image_2", "content_1", "content_2",
              "style_1", "style_2", "adv_1", "adv_2")

    def weighted_sum(self, weights: LossWeights) -> float:
        return (self.adv_1 + self.adv_2
                + weights.lambda_x * (self.image_1 + self.image_2)
                + weights.lambda_c * (self.content_1 + self.content_2)
                + weights.lambda_s * (self.style_1 + self.style_2))

    def log_line(self, step: int, lr: float) -> str:
        parts = [f"step={step}", f"lr={lr:.6e}"]
        for name in self.FIELDS + ("d_1", "d_2", "total"):
            parts.append(f"{name}={getattr(self, name):.6e}")
        return " ".join(parts)


def _neg_mean_log(t: Tensor) -> Tensor:
    return T.scale(T.mean(T.log(T.clip(t, LOG_EPS, 1.0 - LOG_EPS))), -1.0)


def image_recon_loss(x: Tensor, model, domain: int) -> Tensor:
    """Mean absolute error between an image and its same-domain reconstruction."""
    return T.l1_norm(model.reconstruct(x, domain), x)


def latent_recon_losses(content: Tensor, style: Tensor, model, domain: int):
    """Decode (content, style) in ``domain``, re-encode, and compare.

    Returns the content term and the style term, both mean absolute errors.
    """
    fake = model.decode(content, style, domain)
    content_back = model.encode_content(fake, domain)
    style_back = model.encode_style(fake, domain)
    return T.l1_norm(content_back, content), T.l1_norm(style_back, style)


def adversarial_loss_g(fake: Tensor, model, domain: int, saturating: bool = False) -> Tensor:
    """Generator-side adversarial loss for images translated into ``domain``.

    Defaults to the non-saturating form -mean(log D(fake)); the saturating
    form mean(log(1 - D(fake))) is available for fidelity runs.
    """
    d = model.discriminate(fake, domain)
    if saturating:
        return T.mean(T.log(T.clip(T.sub(1.0, d), LOG_EPS, 1.0 - LOG_EPS)))
    return _neg_mean_log(d)


def adversarial_loss_d(real: Tensor, fake: Tensor, model, domain: int) -> Tensor:
    """Discriminator loss: -mean(log D(real)) - mean(log(1 - D(fake)))."""
    d_real = model.discriminate(real, domain)
    d_fake = model.discriminate(fake, domain)
    return T.add(_neg_mean_log(d_real), _neg_mean_log(T.sub(1.0, d_fake)))


def full_objective(x1: Tensor, x2: Tensor, model, weights: LossWeights,
                   style_1: Tensor, style_2: Tensor,
                   saturating: bool = False) -> tuple[Tensor, LossReport]:
    """Assemble the complete generator objective over both directions.

    ``style_1``/``style_2`` are prior draws used when translating into
    domains 1 and 2. Returns the scalar loss tensor and a report whose
    ``total`` recomputes the weighted sum from the reported terms.
    """
    c1, s1 = model.encode(x1, 1)
    c2, s2 = model.encode(x2, 2)

    image_1 = T.l1_norm(model.decode(c1, s1, 1), x1)
    image_2 = T.l1_norm(model.decode(c2, s2, 2), x2)

    x12 = model.decode(c1, style_2, 2)
    x21 = model.decode(c2, style_1, 1)

    content_1 = T.l1_norm(model.encode_content(x12, 2), c1)
    style_2_term = T.l1_norm(model.encode_style(x12, 2), style_2)
    content_2 = T.l1_norm(model.encode_content(x21, 1), c2)
    style_1_term = T.l1_norm(model.encode_style(x21, 1), style_1)

    adv_1 = adversarial_loss_g(x21, model, 1, saturating)
    adv_2 = adversarial_loss_g(x12, model, 2, saturating)

    total = T.add(adv_1, adv_2)
    total = T.add(total, T.scale(T.add(image_1, image_2), weights.lambda_x))
    total = T.add(total, T.scale(T.add(content_1, content_2), weights.lambda_c))
    total = T.add(total, T.scale(T.add(style_1_term, style_2_term), weights.lambda_s))

    report = LossReport(
        image_1=image_1.item(), image_2=image_2.item(),
        content_1=content_1.item(), content_2=content_2.item(),
        style_1=style_1_term.item(), style_2=style_2_term.item(),
        adv_1=adv_1.item(), adv_2=adv_2.item(),
        total=0.0,
    )
    # the report total is recomposed in float64 from the reported terms so the
    # decomposition identity holds exactly; the optimized tensor is unchanged
    report.total = report.weighted_sum(weights)
    return total, report
