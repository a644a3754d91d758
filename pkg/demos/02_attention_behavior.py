"""Anatomy of the self-attention block.

Shows the pairwise score matrix, the row-stochastic attention map, the
gated residual (identity at initialization), and the block's permutation
equivariance over spatial positions.
"""

import numpy as np

from domainswap.attention import (AttentionBlock, attention_forward, attention_map,
                                  attention_output, attention_scores)
from domainswap.tensor import Tensor

rng = np.random.default_rng(7)
block = AttentionBlock(channels=8, rng=rng, dtype=np.float64)
x = Tensor(rng.standard_normal((1, 8, 3, 3)), dtype=np.float64)
n = 9

scores = attention_scores(x, block)
attn = attention_map(scores)
print(f"scores: {scores.shape} (position pairs), attention map rows sum to "
      f"{attn.data.sum(axis=2).round(6)[0][:4]} ...")
print("attention row 0 (how output position 0 weighs each source position):")
print(attn.data[0, 0].round(3).reshape(3, 3))

print("\n== the gate starts closed: the block is the identity ==")
out = attention_forward(x, block)
print("gate:", float(block.gate.data[0]), "-> output equals input:",
      np.array_equal(out.data, x.data))

block.gate.data[:] = 1.0
out = attention_forward(x, block)
print("gate = 1 -> mean absolute change:", float(np.abs(out.data - x.data).mean()))

print("\n== permutation equivariance ==")
perm = rng.permutation(n)
xp = x.data.reshape(1, 8, n)[:, :, perm].reshape(1, 8, 3, 3)
base = attention_forward(x, block).data.reshape(1, 8, n)
permuted = attention_forward(Tensor(xp, dtype=np.float64), block).data.reshape(1, 8, n)
print("permuting inputs permutes outputs identically:",
      np.allclose(permuted, base[:, :, perm], atol=1e-10))

print("\n== attention aggregates value features ==")
uniform = Tensor(np.full((1, n, n), 1.0 / n), dtype=np.float64)
pooled = attention_output(x, uniform, block)
print("under a uniform map every position becomes the spatial mean; spread:",
      float(pooled.data.std(axis=(2, 3)).max()))
