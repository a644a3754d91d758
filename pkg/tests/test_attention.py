"""Self-attention block: double-loop oracles and structural properties."""

import numpy as np
import pytest

import domainswap.tensor as T
from domainswap.attention import (AttentionBlock, attention_forward, attention_map,
                                  attention_output, attention_scores)
from domainswap.errors import ShapeError
from domainswap.tensor import Tensor


def make_block(channels=4, seed=0, reduction=2, **kw):
    return AttentionBlock(channels, np.random.default_rng(seed), reduction=reduction,
                          dtype=np.float64, **kw)


def scores_oracle(x, block):
    """O(N^2) double loop over position pairs, straight from the definitions."""
    b, c, h, w = x.shape
    n = h * w
    kw_ = block.key_proj.data.reshape(block.reduced, c)
    qw = block.query_proj.data.reshape(block.reduced, c)
    out = np.zeros((b, n, n))
    flat = x.reshape(b, c, n)
    for bi in range(b):
        for j in range(n):
            for i in range(n):
                out[bi, j, i] = (kw_ @ flat[bi, :, i]) @ (qw @ flat[bi, :, j])
    return out


def output_oracle(x, attn, block):
    b, c, h, w = x.shape
    n = h * w
    vw = block.value_proj.data.reshape(c, c)
    flat = x.reshape(b, c, n)
    out = np.zeros((b, c, n))
    for bi in range(b):
        values = vw @ flat[bi]
        for j in range(n):
            for i in range(n):
                out[bi, :, j] += attn[bi, j, i] * values[:, i]
    return out.reshape(b, c, h, w)


class TestScores:
    def test_zero_input_gives_zero_scores(self):
        block = make_block()
        x = Tensor(np.zeros((1, 4, 2, 2)), dtype=np.float64)
        assert np.array_equal(attention_scores(x, block).data, np.zeros((1, 4, 4)))

    def test_single_position(self):
        block = make_block()
        xv = np.random.default_rng(1).standard_normal((1, 4, 1, 1))
        got = attention_scores(Tensor(xv, dtype=np.float64), block).data
        kw_ = block.key_proj.data.reshape(block.reduced, 4)
        qw = block.query_proj.data.reshape(block.reduced, 4)
        expect = (kw_ @ xv[0, :, 0, 0]) @ (qw @ xv[0, :, 0, 0])
        assert got.shape == (1, 1, 1)
        assert got[0, 0, 0] == pytest.approx(expect, rel=1e-12)

    @pytest.mark.parametrize("shape", [(1, 2, 2), (2, 2, 2), (1, 3, 4), (1, 4, 4), (2, 1, 3)])
    def test_double_loop_oracle(self, shape):
        b, h, w = shape
        block = make_block()
        xv = np.random.default_rng(h * 10 + w).standard_normal((b, 4, h, w))
        got = attention_scores(Tensor(xv, dtype=np.float64), block).data
        assert np.allclose(got, scores_oracle(xv, block), atol=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            attention_scores(Tensor(np.zeros((1, 3, 2, 2)), dtype=np.float64), make_block(4))


class TestMap:
    def test_zero_scores_uniform(self):
        attn = attention_map(Tensor(np.zeros((1, 4, 4)), dtype=np.float64)).data
        assert np.allclose(attn, 0.25, atol=1e-12)

    def test_hand_computed_row(self):
        scores = np.log(np.array([[[1.0, 3.0], [1.0, 1.0]]]))
        attn = attention_map(Tensor(scores, dtype=np.float64)).data
        assert np.allclose(attn[0, 0], [0.25, 0.75], atol=1e-12)

    def test_row_stochastic(self, rng):
        attn = attention_map(Tensor(rng.standard_normal((3, 7, 7)) * 5, dtype=np.float64)).data
        assert np.all(attn >= 0)
        assert np.allclose(attn.sum(axis=2), 1.0, atol=1e-6)

    def test_requires_square(self):
        with pytest.raises(ShapeError):
            attention_map(Tensor(np.zeros((1, 3, 4)), dtype=np.float64))


class TestOutput:
    def test_identity_map_passes_values_through(self, rng):
        block = make_block()
        xv = rng.standard_normal((1, 4, 2, 2))
        x = Tensor(xv, dtype=np.float64)
        eye = Tensor(np.eye(4)[None], dtype=np.float64)
        got = attention_output(x, eye, block).data
        values = T.conv2d(x, block.value_proj).data
        assert np.allclose(got, values, atol=1e-12)

    def test_uniform_map_gives_spatial_mean(self, rng):
        block = make_block()
        x = Tensor(rng.standard_normal((1, 4, 2, 2)), dtype=np.float64)
        uniform = Tensor(np.full((1, 4, 4), 0.25), dtype=np.float64)
        got = attention_output(x, uniform, block).data
        values = T.conv2d(x, block.value_proj).data
        mean = values.mean(axis=(2, 3), keepdims=True)
        assert np.allclose(got, np.broadcast_to(mean, got.shape), atol=1e-12)

    @pytest.mark.parametrize("shape", [(1, 2, 2), (2, 3, 3), (1, 4, 4)])
    def test_double_loop_oracle(self, shape):
        b, h, w = shape
        block = make_block()
        r = np.random.default_rng(h * 7 + w)
        xv = r.standard_normal((b, 4, h, w))
        logits = r.standard_normal((b, h * w, h * w))
        attn = np.exp(logits) / np.exp(logits).sum(axis=2, keepdims=True)
        got = attention_output(Tensor(xv, dtype=np.float64),
                               Tensor(attn, dtype=np.float64), block).data
        assert np.allclose(got, output_oracle(xv, attn, block), atol=1e-12)


class TestForward:
    def test_gate_zero_is_identity(self, rng):
        block = make_block()
        x = Tensor(rng.standard_normal((2, 4, 3, 3)), dtype=np.float64)
        assert np.array_equal(attention_forward(x, block).data, x.data)

    def test_zero_value_projection_is_identity(self, rng):
        block = make_block()
        block.gate.data[:] = 1.0
        block.value_proj.data[:] = 0.0
        x = Tensor(rng.standard_normal((1, 4, 2, 2)), dtype=np.float64)
        assert np.array_equal(attention_forward(x, block).data, x.data)

    def test_output_shape_matches_input(self, rng):
        block = make_block()
        block.gate.data[:] = 0.3
        x = Tensor(rng.standard_normal((2, 4, 5, 3)), dtype=np.float64)
        assert attention_forward(x, block).shape == (2, 4, 5, 3)

    def test_permutation_equivariance(self):
        # permuting spatial positions permutes the residual output identically
        block = make_block()
        block.gate.data[:] = 0.8
        r = np.random.default_rng(3)
        xv = r.standard_normal((1, 4, 3, 3))
        perm = r.permutation(9)
        xp = xv.reshape(1, 4, 9)[:, :, perm].reshape(1, 4, 3, 3)
        base = attention_forward(Tensor(xv, dtype=np.float64), block).data.reshape(1, 4, 9)
        permuted = attention_forward(Tensor(xp, dtype=np.float64), block).data.reshape(1, 4, 9)
        assert np.allclose(permuted, base[:, :, perm], atol=1e-10)

    def test_reduced_channels_floor(self):
        assert make_block(channels=4, reduction=8).reduced == 1
        assert make_block(channels=32, reduction=8).reduced == 4


class TestSpectralNorm:
    def test_flag_normalizes_projection_scale(self):
        block = make_block(spectral_norm=True)
        effective = block._proj(block.key_proj).data.reshape(block.reduced, -1)
        assert np.linalg.svd(effective, compute_uv=False)[0] == pytest.approx(1.0, rel=1e-10)

    def test_off_by_default(self):
        assert make_block().spectral_norm is False
