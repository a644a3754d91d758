"""Finite-difference gradient oracles (fast subset; the acceptance suite
runs the same checks over 10 seeds)."""

import numpy as np

import domainswap.tensor as T
from domainswap.gradcheck import check_gradients
from domainswap.tensor import Tensor
from domainswap.verification import (TOLERANCE, attention_checks, loss_checks,
                                     network_checks, op_checks)


def _assert_all_pass(results):
    failing = [(name, err) for name, err in results if err >= TOLERANCE]
    assert not failing, f"gradient checks failed: {failing}"


def test_op_gradients():
    _assert_all_pass(op_checks(seed=0))


def test_attention_gradients():
    _assert_all_pass(attention_checks(seed=0))


def test_network_gradients():
    _assert_all_pass(network_checks(seed=0))


def test_loss_gradients():
    _assert_all_pass(loss_checks(seed=0))


def test_matmul_random_case_against_finite_differences():
    rng = np.random.default_rng(42)
    a = Tensor(rng.standard_normal((3, 4)), requires_grad=True, dtype=np.float64)
    b = Tensor(rng.standard_normal((4, 2)), requires_grad=True, dtype=np.float64)
    mix = Tensor(rng.standard_normal((3, 2)), dtype=np.float64)
    err = check_gradients(lambda: T.mean(T.mul(T.matmul(a, b), mix)), [a, b])
    assert err < 1e-4


def test_whole_graph_conv_attention_l1():
    # composite finite-difference check straight through the deepest stack
    from domainswap.attention import AttentionBlock, attention_forward
    rng = np.random.default_rng(5)
    block = AttentionBlock(4, rng, reduction=2, dtype=np.float64)
    block.gate.data[:] = 0.4
    x = Tensor(rng.standard_normal((1, 2, 4, 4)), requires_grad=True, dtype=np.float64)
    w = Tensor(rng.standard_normal((4, 2, 3, 3)) * 0.4, requires_grad=True, dtype=np.float64)
    target = Tensor(rng.standard_normal((1, 4, 4, 4)), dtype=np.float64)

    def make():
        return T.l1_norm(attention_forward(T.conv2d(x, w, pad=1), block), target)

    err = check_gradients(make, [x, w] + [p for _, p in block.params()])
    assert err < 1e-4
