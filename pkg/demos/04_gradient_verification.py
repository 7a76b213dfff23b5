"""Verify the analytic gradients of both losses against finite differences.

Both the dual-triplet loss and the NT-Xent contrastive loss are
differentiated through the full head: two linear layers, the rectifier,
and the final L2 normalization.
"""

import numpy as np

from sfsl.embedding import (
    backward,
    default_pairing,
    dual_triplet_loss,
    forward,
    init_head,
    ntxent_loss,
)

rng = np.random.default_rng(1)
head = init_head(dim=6, hidden=8, out=5, seed=1)
X = rng.standard_normal((9, 6))
n_idx, p1_idx, p2_idx = np.arange(3), np.arange(3, 6), np.arange(6, 9)


def triplet_total(h):
    U, _ = forward(h, X)
    return dual_triplet_loss(U[n_idx], U[p1_idx], U[p2_idx], 0.4)[0]


U, cache = forward(head, X)
_, (gN, gP1, gP2) = dual_triplet_loss(U[n_idx], U[p1_idx], U[p2_idx], 0.4)
dU = np.zeros_like(U)
np.add.at(dU, n_idx, gN)
np.add.at(dU, p1_idx, gP1)
np.add.at(dU, p2_idx, gP2)
grads = backward(head, cache, dU)

eps, worst = 1e-6, 0.0
for name in ("W1", "b1", "W2", "b2"):
    p = getattr(head, name).reshape(-1)
    for k in range(0, p.size, max(1, p.size // 8)):
        old = p[k]
        p[k] = old + eps
        lp = triplet_total(head)
        p[k] = old - eps
        lm = triplet_total(head)
        p[k] = old
        fd = (lp - lm) / (2 * eps)
        an = grads[name].reshape(-1)[k]
        if max(abs(fd), abs(an)) > 1e-7:
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an)))
print(f"dual-triplet loss through the head: worst relative error {worst:.2e}")

Z = rng.standard_normal((8, 5))
pi = default_pairing(8)
loss, dZ = ntxent_loss(Z, pi, 0.5)
worst = 0.0
for i in range(8):
    for j in range(5):
        old = Z[i, j]
        Z[i, j] = old + eps
        lp = ntxent_loss(Z, pi, 0.5)[0]
        Z[i, j] = old - eps
        lm = ntxent_loss(Z, pi, 0.5)[0]
        Z[i, j] = old
        fd = (lp - lm) / (2 * eps)
        worst = max(worst, abs(fd - dZ[i, j]) / max(abs(fd), abs(dZ[i, j]), 1e-8))
print(f"NT-Xent loss (loss = {loss:.4f}): worst relative error {worst:.2e}")
