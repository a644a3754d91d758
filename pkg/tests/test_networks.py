"""Translation networks: shape contracts, placement, determinism."""

import gc

import numpy as np
import pytest

import domainswap.tensor as T
from domainswap.errors import ConfigError, ShapeError
from domainswap.networks import ModelConfig, PlacementConfig, PlacementVariant, build_model
from domainswap.tensor import Tensor, backward


def cfg_for(variant="ds-us", size=16, base=4, style_dim=4, seed=0, disc_sa=True):
    return ModelConfig(image_size=size, base_channels=base, style_dim=style_dim,
                       placement=PlacementConfig(PlacementVariant.from_name(variant),
                                                 attach_discriminator_sa=disc_sa),
                       attention_reduction=2, seed=seed)


def random_image(rng, size=16, batch=1, dtype=np.float32):
    return Tensor(np.tanh(rng.standard_normal((batch, 3, size, size))).astype(dtype))


class TestShapes:
    def test_default_encode_shapes(self, rng):
        model = build_model(ModelConfig(image_size=32))
        x = random_image(rng, size=32)
        c, s = model.encode(x, 1)
        assert c.shape == (1, 64, 8, 8)
        assert s.shape == (1, 8)

    def test_decode_restores_geometry_and_range(self, rng):
        model = build_model(cfg_for())
        x = random_image(rng)
        c, s = model.encode(x, 1)
        out = model.decode(c, s, 1)
        assert out.shape == x.shape
        assert np.all(out.data >= -1.0) and np.all(out.data <= 1.0)

    def test_decode_random_codes_in_range(self, rng):
        model = build_model(cfg_for())
        c = Tensor(rng.standard_normal((1, 16, 4, 4)).astype(np.float32))
        s = Tensor(rng.standard_normal((1, 4)).astype(np.float32))
        out = model.decode(c, s, 2)
        assert np.all(np.abs(out.data) <= 1.0)

    def test_discriminator_patch_map(self, rng):
        model = build_model(cfg_for(size=16))
        d = model.discriminate(random_image(rng), 1)
        assert d.shape == (1, 1, 2, 2)  # input / 8
        assert np.all(d.data > 0) and np.all(d.data < 1)

    def test_geometry_mismatch_errors(self, rng):
        model = build_model(cfg_for(size=16))
        with pytest.raises(ShapeError):
            model.encode(random_image(rng, size=32), 1)
        with pytest.raises(ShapeError):
            model.encode(random_image(rng), 3)
        with pytest.raises(ShapeError):
            model.decode(Tensor(np.zeros((1, 16, 4, 4), np.float32)),
                         Tensor(np.zeros((1, 5), np.float32)), 1)


class TestDeterminism:
    def test_encode_twice_bitwise(self, rng):
        model = build_model(cfg_for())
        x = random_image(rng)
        c1, s1 = model.encode(x, 1)
        c2, s2 = model.encode(x, 1)
        assert np.array_equal(c1.data, c2.data) and np.array_equal(s1.data, s2.data)

    def test_equal_seed_builds_identical_parameters(self):
        a = build_model(cfg_for(seed=9))
        b = build_model(cfg_for(seed=9))
        for (na, pa), (nb, pb) in zip(a.named_params(), b.named_params()):
            assert na == nb
            assert np.array_equal(pa.data, pb.data), na

    def test_different_seed_differs(self):
        a = build_model(cfg_for(seed=1))
        b = build_model(cfg_for(seed=2))
        assert any(not np.array_equal(pa.data, pb.data)
                   for (_, pa), (_, pb) in zip(a.named_params(), b.named_params()))


class TestTranslate:
    def test_translate_is_decode_of_encoded_content(self, rng):
        model = build_model(cfg_for())
        x = random_image(rng)
        style = model.draw_style(np.random.default_rng(5))
        direct = model.translate(x, style, source_domain=1)
        composed = model.decode(model.encode_content(x, 1), style, 2)
        assert np.array_equal(direct.data, composed.data)

    def test_translate_deterministic(self, rng):
        model = build_model(cfg_for())
        x = random_image(rng)
        style = model.draw_style(np.random.default_rng(5))
        a = model.translate(x, style, source_domain=1).data
        b = model.translate(x, style, source_domain=1).data
        assert np.array_equal(a, b)

    def test_weight_tying_reduces_to_reconstruction(self, rng):
        # with the domains sharing identical weights, translating with the
        # source's own style code is exactly a within-domain reconstruction
        model = build_model(cfg_for())
        for net in ("content_enc", "style_enc", "decoder", "discriminator"):
            nets = getattr(model, net)
            for (_, p1), (_, p2) in zip(nets[1].params(""), nets[2].params("")):
                p2.data = p1.data.copy()
        x = random_image(rng)
        style = model.encode_style(x, 1)
        assert np.array_equal(model.translate(x, style, source_domain=1).data,
                              model.reconstruct(x, 1).data)

    def test_style_sensitivity(self, rng):
        model = build_model(cfg_for())
        x = random_image(rng)
        c = model.encode_content(x, 1)
        r = np.random.default_rng(11)
        img_a = model.decode(c, model.draw_style(r), 2)
        img_b = model.decode(c, model.draw_style(r), 2)
        assert T.l1_norm(img_a, img_b).item() > 0


class TestPlacement:
    @pytest.mark.parametrize("variant,count", [("ds", 1), ("us", 1), ("ds-us", 2), ("ds3-us3", 6)])
    def test_generator_attention_counts(self, variant, count):
        model = build_model(cfg_for(variant))
        assert model.generator_attention_count(1) == count
        assert model.generator_attention_count(2) == count

    def test_discriminator_attention_flag(self):
        assert build_model(cfg_for(disc_sa=True)).discriminator[1].attn is not None
        assert build_model(cfg_for(disc_sa=False)).discriminator[1].attn is None

    def test_attention_cap_enforced(self):
        with pytest.raises(ConfigError):
            build_model(ModelConfig(image_size=128, base_channels=4, attention_cap=4096))

    def test_bad_variant_name(self):
        with pytest.raises(ConfigError):
            PlacementVariant.from_name("ds4")

    @pytest.mark.parametrize("variant", ["ds", "us", "ds-us", "ds3-us3"])
    @pytest.mark.parametrize("size", [16, 32, 64])
    def test_forward_backward_all_variants_and_sizes(self, variant, size):
        cfg = ModelConfig(image_size=size, base_channels=2, style_dim=3,
                          placement=PlacementConfig(PlacementVariant.from_name(variant), True),
                          attention_reduction=2, seed=0)
        model = build_model(cfg)
        x = Tensor(np.tanh(np.random.default_rng(0).standard_normal((1, 3, size, size)))
                   .astype(np.float32), requires_grad=True)
        backward(T.mean(T.mul(model.reconstruct(x, 1), model.reconstruct(x, 1))))
        assert x.grad is not None and np.all(np.isfinite(x.grad))
        gc.collect()
        x2 = x.detach()
        x2.requires_grad = True
        backward(T.mean(model.discriminate(x2, 1)))
        assert x2.grad is not None
        gc.collect()


class TestContentPurity:
    def test_content_independent_of_style_path(self, rng):
        # the content code is produced by a network that never sees the style code
        model = build_model(cfg_for())
        x = random_image(rng)
        c_alone = model.content_enc[1].forward(x)
        c_api, _ = model.encode(x, 1)
        assert np.array_equal(c_alone.data, c_api.data)

    def test_gradient_reaches_input_through_content(self, rng):
        model = build_model(cfg_for())
        x = random_image(rng)
        x.requires_grad = True
        backward(T.mean(T.absolute(model.encode_content(x, 1))))
        assert x.grad is not None and float(np.abs(x.grad).sum()) > 0


class TestParameterBookkeeping:
    def test_generator_and_discriminator_groups_disjoint_and_complete(self):
        model = build_model(cfg_for())
        gen = {name for name, _ in model.generator_params()}
        disc = {name for name, _ in model.discriminator_params()}
        assert not gen & disc
        assert all(name.startswith(("cenc", "senc", "dec")) for name in gen)
        assert all(name.startswith("disc") for name in disc)
        assert len(gen) + len(disc) == len(model.named_params())

    def test_param_names_unique(self):
        model = build_model(cfg_for("ds3-us3"))
        names = [name for name, _ in model.named_params()]
        assert len(names) == len(set(names))
