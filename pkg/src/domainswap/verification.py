"""The runnable gradient-verification suite.

Every differentiable operation, the attention block end to end, each
network on 8x8 toy models, and each loss term are checked against central
finite differences in float64. Shared by the test suite and the
``grad-check`` CLI command.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .attention import AttentionBlock, attention_forward
from .gradcheck import check_gradients
from .losses import LossWeights, adversarial_loss_d, adversarial_loss_g, full_objective
from .networks import ModelConfig, PlacementConfig, PlacementVariant, build_model
from .tensor import Tensor

TOLERANCE = 1e-4
F64 = np.float64


def _leaf(rng, shape, offset=0.0):
    return Tensor(rng.standard_normal(shape) + offset, requires_grad=True, dtype=F64)


def tiny_model_config(seed: int) -> ModelConfig:
    return ModelConfig(image_size=8, base_channels=2, style_dim=3,
                       placement=PlacementConfig(PlacementVariant.DS_US, True),
                       attention_reduction=2, seed=seed)


def _sq(x):
    return T.mean(T.mul(x, x))


def op_checks(seed: int):
    """Finite-difference checks for every primitive operation."""
    rng = np.random.default_rng(seed)
    checks = []

    a, b = _leaf(rng, (3, 4)), _leaf(rng, (4, 2))
    checks.append(("matmul", lambda: _sq(T.matmul(a, b)), [a, b]))

    ab3, bb3 = _leaf(rng, (2, 3, 4)), _leaf(rng, (2, 4, 3))
    checks.append(("matmul-batched", lambda: _sq(T.matmul(ab3, bb3)), [ab3, bb3]))

    xc, wc = _leaf(rng, (2, 3, 8, 8)), _leaf(rng, (4, 3, 3, 3))
    bc = _leaf(rng, (4,))
    checks.append(("conv2d", lambda: _sq(T.conv2d(xc, wc, bc, stride=2, pad=1)), [xc, wc, bc]))

    x1c, w1c = _leaf(rng, (1, 4, 5, 5)), _leaf(rng, (2, 4, 1, 1))
    checks.append(("conv2d-1x1", lambda: _sq(T.conv2d(x1c, w1c)), [x1c, w1c]))

    xs = _leaf(rng, (5, 7))
    checks.append(("softmax", lambda: _sq(T.softmax(xs, 1)), [xs]))

    p, q = _leaf(rng, (4, 5)), _leaf(rng, (4, 5))
    checks.append(("add", lambda: _sq(T.add(p, q)), [p, q]))
    checks.append(("sub", lambda: _sq(T.sub(p, q)), [p, q]))
    checks.append(("mul", lambda: _sq(T.mul(p, q)), [p, q]))

    g1 = _leaf(rng, (1,))
    checks.append(("scalar-broadcast", lambda: _sq(T.mul(g1, p)), [g1, p]))
    checks.append(("scale", lambda: _sq(T.scale(p, 1.7)), [p]))

    # keep inputs away from the relu/lrelu/abs kinks so differences stay clean
    far = Tensor(rng.standard_normal((4, 5)) + np.where(rng.random((4, 5)) < 0.5, -1.0, 1.0),
                 requires_grad=True, dtype=F64)
    checks.append(("relu", lambda: _sq(T.relu(far)), [far]))
    checks.append(("lrelu", lambda: _sq(T.lrelu(far)), [far]))
    checks.append(("absolute", lambda: T.mean(T.absolute(far)), [far]))
    checks.append(("tanh", lambda: _sq(T.tanh(p)), [p]))
    checks.append(("sigmoid", lambda: _sq(T.sigmoid(p)), [p]))

    pos = Tensor(rng.random((4, 5)) + 0.5, requires_grad=True, dtype=F64)
    checks.append(("log", lambda: T.mean(T.log(pos)), [pos]))

    checks.append(("mean", lambda: T.mean(T.mul(p, p)), [p]))
    checks.append(("sum", lambda: T.scale(T.sum(T.mul(p, p)), 0.1), [p]))
    checks.append(("l1_norm", lambda: T.l1_norm(far, q), [far, q]))

    xn = _leaf(rng, (2, 3, 4, 4))
    sn, bn = _leaf(rng, (3,), offset=1.0), _leaf(rng, (3,))
    checks.append(("instance_norm", lambda: _sq(T.instance_norm(xn, sn, bn)), [xn, sn, bn]))

    sa, ba = _leaf(rng, (2, 3), offset=1.0), _leaf(rng, (2, 3))
    checks.append(("adaptive_instance_norm",
                   lambda: _sq(T.adaptive_instance_norm(xn, sa, ba)), [xn, sa, ba]))

    xu = _leaf(rng, (1, 2, 3, 3))
    checks.append(("upsample_nearest2x", lambda: _sq(T.upsample_nearest2x(xu)), [xu]))

    xl, wl, bl = _leaf(rng, (3, 4)), _leaf(rng, (4, 2)), _leaf(rng, (2,))
    checks.append(("linear", lambda: _sq(T.linear(xl, wl, bl)), [xl, wl, bl]))

    xg = _leaf(rng, (2, 4, 3, 3))
    checks.append(("global_avg_pool", lambda: _sq(T.global_avg_pool(xg)), [xg]))
    checks.append(("reshape-transpose-narrow",
                   lambda: _sq(T.narrow(T.transpose(T.reshape(xg, (2, 4, 9)), (0, 2, 1)), 1, 2, 5)),
                   [xg]))
    checks.append(("clip", lambda: T.mean(T.clip(p, -0.8, 0.8)), [p]))

    return [(name, check_gradients(make, params)) for name, make, params in checks]


def attention_checks(seed: int):
    rng = np.random.default_rng(seed)
    block = AttentionBlock(4, rng, reduction=2, dtype=F64)
    block.gate.data[:] = 0.5
    x = _leaf(rng, (1, 4, 3, 3))
    params = [x] + [p for _, p in block.params()]
    err = check_gradients(lambda: _sq(attention_forward(x, block)), params)

    # composite graph: convolution into attention into an l1 distance
    wc = _leaf(rng, (4, 2, 3, 3))
    xc = _leaf(rng, (1, 2, 4, 4))
    ref = Tensor(rng.standard_normal((1, 4, 4, 4)), dtype=F64)

    def composite():
        h = T.conv2d(xc, wc, stride=1, pad=1)
        return T.l1_norm(attention_forward(h, block), ref)

    err2 = check_gradients(composite, [xc, wc] + [p for _, p in block.params()])
    return [("attention-block", err), ("conv-attention-l1", err2)]


def network_checks(seed: int, sample: int = 6):
    """Sampled finite-difference checks through each network on an 8x8 toy model."""
    rng = np.random.default_rng(seed)
    model = build_model(tiny_model_config(seed), dtype=F64)
    for blocks in (model.content_enc[1].attn, model.decoder[1].attn):
        for blk in blocks.values():
            blk.gate.data[:] = 0.3  # exercise the attention path, not the identity
    if model.discriminator[1].attn is not None:
        model.discriminator[1].attn.gate.data[:] = 0.3

    x = Tensor(np.tanh(rng.standard_normal((1, 3, 8, 8))), requires_grad=True, dtype=F64)
    content = _leaf(rng, (1, model.config.content_channels, 2, 2))
    style = _leaf(rng, (1, 3))

    out = []
    enc_params = [p for _, p in model.content_enc[1].params("")]
    out.append(("content-encoder",
                check_gradients(lambda: _sq(model.encode_content(x, 1)),
                                [x] + enc_params, sample_per_tensor=sample, rng=rng)))
    senc_params = [p for _, p in model.style_enc[1].params("")]
    out.append(("style-encoder",
                check_gradients(lambda: _sq(model.encode_style(x, 1)),
                                [x] + senc_params, sample_per_tensor=sample, rng=rng)))
    dec_params = [p for _, p in model.decoder[1].params("")]
    out.append(("decoder",
                check_gradients(lambda: _sq(model.decode(content, style, 1)),
                                [content, style] + dec_params,
                                sample_per_tensor=sample, rng=rng)))
    disc_params = [p for _, p in model.discriminator[1].params("")]
    out.append(("discriminator",
                check_gradients(lambda: T.mean(T.log(T.clip(model.discriminate(x, 1), 1e-7, 1 - 1e-7))),
                                [x] + disc_params, sample_per_tensor=sample, rng=rng)))
    out.append(("autoencode-path",
                check_gradients(lambda: _sq(model.reconstruct(x, 1)),
                                [x] + enc_params + senc_params + dec_params,
                                sample_per_tensor=sample, rng=rng)))
    return out


def loss_checks(seed: int, sample: int = 6):
    rng = np.random.default_rng(seed)
    model = build_model(tiny_model_config(seed + 1000), dtype=F64)
    x1 = Tensor(np.tanh(rng.standard_normal((1, 3, 8, 8))), requires_grad=True, dtype=F64)
    x2 = Tensor(np.tanh(rng.standard_normal((1, 3, 8, 8))), requires_grad=True, dtype=F64)
    fake = Tensor(np.tanh(rng.standard_normal((1, 3, 8, 8))), requires_grad=True, dtype=F64)
    s1 = Tensor(rng.standard_normal((1, 3)), dtype=F64)
    s2 = Tensor(rng.standard_normal((1, 3)), dtype=F64)
    weights = LossWeights()

    out = [
        ("adversarial-g-wrt-fake",
         check_gradients(lambda: adversarial_loss_g(fake, model, 2),
                         [fake], sample_per_tensor=sample * 4, rng=rng)),
        ("adversarial-d",
         check_gradients(lambda: adversarial_loss_d(x2, fake.detach(), model, 2),
                         [p for _, p in model.discriminator[2].params("")],
                         sample_per_tensor=sample, rng=rng)),
        ("full-objective-wrt-images",
         check_gradients(lambda: full_objective(x1, x2, model, weights, s1, s2)[0],
                         [x1, x2], sample_per_tensor=sample * 4, rng=rng)),
    ]
    return out


def gradient_suite(n_seeds: int = 10, base_seed: int = 0):
    """Worst error per check across seeds; the acceptance gate for gradients."""
    results: dict[str, float] = {}
    for k in range(n_seeds):
        seed = base_seed + k
        for name, err in (op_checks(seed) + attention_checks(seed)
                          + network_checks(seed) + loss_checks(seed)):
            results[name] = max(results.get(name, 0.0), err)
    return sorted(results.items())
