#!/usr/bin/env python3
"""The equivalences that pin down the attention kernels.

Three identities are checked on random data: the recurrent and parallel
retention forms compute the same map, the decomposed Manhattan attention
matches the full form whenever attention weights are uniform (zero queries)
or the grid is a strip, and dropping the decay recovers plain softmax
attention.
"""

import numpy as np

from masa_kit import (GridShape, Tensor, masa_decomposed, masa_full,
                      retention_parallel, retention_recurrent)

rng = np.random.default_rng(42)


def rand(*shape):
    return Tensor(rng.standard_normal(shape))


print("1. recurrent vs parallel retention (L=12, d=6, gamma=0.8)")
q, k, v = rand(12, 6), rand(12, 6), rand(12, 6)
rec = retention_recurrent(q, k, v, 0.8)
par = retention_parallel(q, k, v, 0.8)
print(f"   max abs difference: {np.max(np.abs(rec.data - par.data)):.2e}")
print()

print("2a. decomposed vs full Manhattan attention at uniform weights (Q = 0)")
grid = GridShape(5, 6)
qz = Tensor(np.zeros((grid.size, 4)))
k, v = rand(grid.size, 4), rand(grid.size, 4)
full = masa_full(qz, k, v, grid, 0.6)
split = masa_decomposed(qz, k, v, grid, 0.6)
print(f"   max abs difference on a 5x6 grid: {np.max(np.abs(full.data - split.data)):.2e}")
print()

print("2b. decomposed vs full on a 1xW strip with arbitrary queries")
strip = GridShape(1, 9)
q, k, v = rand(9, 4), rand(9, 4), rand(9, 4)
full = masa_full(q, k, v, strip, 0.6)
split = masa_decomposed(q, k, v, strip, 0.6)
print(f"   max abs difference: {np.max(np.abs(full.data - split.data)):.2e}")
print()

print("3. no-decay escape reduces to plain softmax attention")
grid = GridShape(3, 3)
q, k, v = rand(9, 4), rand(9, 4), rand(9, 4)
out = masa_full(q, k, v, grid, None)
logits = q.data @ k.data.T / 2.0  # sqrt(d) = 2
w = np.exp(logits - logits.max(axis=1, keepdims=True))
w /= w.sum(axis=1, keepdims=True)
print(f"   max abs difference: {np.max(np.abs(out.data - w @ v.data)):.2e}")
print()

print("With decay the weight rows are deliberately not renormalized:")
row_sums = masa_full(q, k, Tensor(np.ones((9, 4))), grid, 0.5).data[:, 0]
print(f"   row sums after decay: min {row_sums.min():.3f}, max {row_sums.max():.3f} (all < 1)")
