"""Frechet-distance sanity checks against hand-computable cases.

The distance between two Gaussians has a closed form; feeding statistics
directly lets us verify the implementation (mean term, covariance term,
matrix square root) without any images involved.
"""

import numpy as np

from domainswap.fid import FidStats, fid, matrix_sqrt_psd

d = 64
print("== mean shifts: N(0, I) vs N(delta*1, I) gives d * delta^2 ==")
base = FidStats(np.zeros(d), np.eye(d), n=10)
for delta in (0.0, 0.5, 1.0, 2.0):
    value = fid(base, FidStats(np.full(d, delta), np.eye(d), n=10))
    print(f"  delta={delta:>3}: fid={value:10.4f}   closed form={d * delta ** 2:10.4f}")

print("\n== one dimension, different variances ==")
a = FidStats(np.zeros(1), np.eye(1), n=10)
b = FidStats(np.ones(1), 4.0 * np.eye(1), n=10)
print(f"  N(0,1) vs N(1,4): fid={fid(a, b):.6f}   by hand: (0-1)^2 + 1 + 4 - 2*2 = 2")

print("\n== matrix square root ==")
m = np.diag([4.0, 9.0, 16.0])
print("  sqrt(diag(4, 9, 16)) diagonal:", matrix_sqrt_psd(m).diagonal())
rng = np.random.default_rng(0)
a_ = rng.standard_normal((8, 8))
psd = a_.T @ a_
root = matrix_sqrt_psd(psd)
rel = np.linalg.norm(root @ root - psd) / np.linalg.norm(psd)
print(f"  random PSD reconstruction, relative Frobenius error: {rel:.2e}")

print("\n== symmetry and self-distance ==")
s1 = FidStats(rng.standard_normal(d), np.eye(d) * 1.3, n=10)
s2 = FidStats(rng.standard_normal(d), np.eye(d) * 0.7, n=10)
print(f"  fid(s1, s2)={fid(s1, s2):.6f}  fid(s2, s1)={fid(s2, s1):.6f}  fid(s1, s1)={fid(s1, s1):.6f}")
