"""Tour of the autodiff tensor core.

Builds a small computation, backpropagates it, and then confirms a deeper
graph against central finite differences, the same oracle the test suite
and `domainswap grad-check` use.
"""

import numpy as np

import domainswap.tensor as T
from domainswap.gradcheck import check_gradients
from domainswap.tensor import Tensor

print("== a tiny graph, by hand ==")
x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True, dtype=np.float64)
w = Tensor(np.array([[0.5, -1.0], [2.0, 0.0]]), requires_grad=True, dtype=np.float64)
loss = T.mean(T.mul(T.matmul(x, w), T.matmul(x, w)))
loss.backward()
print("loss:", loss.item())
print("x.grad:\n", x.grad)
print("w.grad:\n", w.grad)

print("\n== the same gradients, from finite differences ==")
x.grad = w.grad = None
err = check_gradients(lambda: T.mean(T.mul(T.matmul(x, w), T.matmul(x, w))), [x, w])
print(f"max relative error vs central differences: {err:.2e}")

print("\n== a deeper graph: conv -> instance norm -> relu -> conv -> l1 ==")
rng = np.random.default_rng(0)
img = Tensor(rng.standard_normal((1, 3, 8, 8)), requires_grad=True, dtype=np.float64)
w1 = Tensor(rng.standard_normal((4, 3, 3, 3)) * 0.4, requires_grad=True, dtype=np.float64)
w2 = Tensor(rng.standard_normal((2, 4, 3, 3)) * 0.4, requires_grad=True, dtype=np.float64)
target = Tensor(rng.standard_normal((2,)), dtype=np.float64)


def deep_loss():
    h = T.relu(T.instance_norm(T.conv2d(img, w1, pad=1)))
    h = T.global_avg_pool(T.conv2d(h, w2, stride=2, pad=1))
    return T.l1_norm(T.reshape(h, (2,)), target)


err = check_gradients(deep_loss, [img, w1, w2])
print(f"max relative error through the whole stack: {err:.2e}")

print("\n== the tape protects against stale reuse ==")
loss = deep_loss()
loss.backward()
try:
    loss.backward()
except Exception as e:
    print(f"second backward raises {type(e).__name__}: {e}")
