"""Semantic representation network: a two-layer MLP head over frozen base
features, trained with the dual-triplet loss by plain SGD with momentum.

All gradients are exact analytic backpropagation in numpy (verified against
central finite differences in the test suite). The NT-Xent contrastive loss
is provided as a standalone loss/gradient operation on paired vectors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .annotation import TestAnswer
from .data import FeatureStore


class EmbeddingError(ValueError):
    pass


@dataclass
class EmbeddingHead:
    """Parameters of the two-layer head: relu(W1 x + b1) -> W2 h + b2 -> L2
    normalize."""

    W1: np.ndarray  # (hidden, dim)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (out, hidden)
    b2: np.ndarray  # (out,)

    def __post_init__(self):
        h, d = self.W1.shape
        o, h2 = self.W2.shape
        if h2 != h or self.b1.shape != (h,) or self.b2.shape != (o,):
            raise EmbeddingError("inconsistent head shapes")
        for p in (self.W1, self.b1, self.W2, self.b2):
            if not np.all(np.isfinite(p)):
                raise EmbeddingError("non-finite head parameter")

    @property
    def dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def out(self) -> int:
        return self.W2.shape[0]

    def copy(self) -> "EmbeddingHead":
        return EmbeddingHead(
            self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy()
        )


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 0.4
    lr: float = 0.001
    epochs: int = 15
    momentum: float = 0.9
    decay: float = 0.1
    batch_size: int = 32
    hidden: int | None = None  # defaults to input dim
    out: int | None = None  # defaults to input dim
    seed: int = 0

    def __post_init__(self):
        if self.margin <= 0:
            raise EmbeddingError("margin must be > 0")
        if self.lr < 0:
            raise EmbeddingError("lr must be >= 0")
        if self.epochs < 1:
            raise EmbeddingError("epochs must be >= 1")
        if not (0 <= self.momentum < 1):
            raise EmbeddingError("momentum must be in [0, 1)")
        if not (0 < self.decay <= 1):
            raise EmbeddingError("decay must be in (0, 1]")
        if self.batch_size < 1:
            raise EmbeddingError("batch_size must be >= 1")


def init_head(
    dim: int, hidden: int | None = None, out: int | None = None, seed: int = 0
) -> EmbeddingHead:
    """Seeded uniform init scaled by fan-in."""
    hidden = dim if hidden is None else hidden
    out = dim if out is None else out
    rng = np.random.default_rng(seed)
    s1, s2 = 1.0 / math.sqrt(dim), 1.0 / math.sqrt(hidden)
    return EmbeddingHead(
        W1=rng.uniform(-s1, s1, size=(hidden, dim)),
        b1=rng.uniform(-s1, s1, size=hidden),
        W2=rng.uniform(-s2, s2, size=(out, hidden)),
        b2=rng.uniform(-s2, s2, size=out),
    )


def forward(head: EmbeddingHead, X: np.ndarray):
    """Batch forward pass. Returns unit-norm embeddings (rows) and the cache
    needed for backprop."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != head.dim:
        raise EmbeddingError(f"input dim {X.shape[1]} != head dim {head.dim}")
    Hpre = X @ head.W1.T + head.b1
    H = np.maximum(Hpre, 0.0)
    Y = H @ head.W2.T + head.b2
    norms = np.linalg.norm(Y, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise EmbeddingError("zero embedding before normalization (dead head)")
    U = Y / norms
    return U, (X, Hpre, H, Y, norms, U)


def backward(head: EmbeddingHead, cache, dU: np.ndarray) -> dict[str, np.ndarray]:
    """Backprop dL/dU through normalization and both layers; returns
    parameter gradients."""
    X, Hpre, H, Y, norms, U = cache
    dY = (dU - U * np.sum(dU * U, axis=1, keepdims=True)) / norms
    dW2 = dY.T @ H
    db2 = dY.sum(axis=0)
    dH = dY @ head.W2
    dHpre = dH * (Hpre > 0)
    dW1 = dHpre.T @ X
    db1 = dHpre.sum(axis=0)
    return {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}


def embed(head: EmbeddingHead, x: np.ndarray) -> np.ndarray:
    """Map one feature vector to its unit-norm semantic embedding."""
    U, _ = forward(head, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return U[0]


def pair_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Euclidean distance; on unit vectors this equals sqrt(2 - 2 cos)."""
    return float(np.linalg.norm(np.asarray(u) - np.asarray(v)))


def _dist_grad(u: np.ndarray, v: np.ndarray):
    """d, d(d)/du. Subgradient 0 at coincident points."""
    diff = u - v
    d = np.linalg.norm(diff, axis=-1, keepdims=True)
    g = np.divide(diff, d, out=np.zeros_like(diff), where=d > 0)
    return d[..., 0], g


def dual_triplet_loss(N: np.ndarray, P1: np.ndarray, P2: np.ndarray, margin: float):
    """Sum over tests of [d(p1,p2) - d(n,p1) + m]_+ + [d(p1,p2) - d(n,p2) + m]_+.

    Rows of N/P1/P2 are the (unit-norm) embeddings of the negative and the
    two positives of each answered test. Returns (loss, (gN, gP1, gP2)).
    """
    N = np.atleast_2d(np.asarray(N, dtype=np.float64))
    P1 = np.atleast_2d(np.asarray(P1, dtype=np.float64))
    P2 = np.atleast_2d(np.asarray(P2, dtype=np.float64))
    for A in (N, P1, P2):
        if not np.all(np.isfinite(A)):
            raise EmbeddingError("non-finite embedding in triplet batch")
    d_pp, g_pp = _dist_grad(P1, P2)  # g_pp = d d_pp / d P1
    d_n1, g_n1 = _dist_grad(N, P1)
    d_n2, g_n2 = _dist_grad(N, P2)
    h1 = d_pp - d_n1 + margin
    h2 = d_pp - d_n2 + margin
    a1 = (h1 > 0).astype(np.float64)[:, None]
    a2 = (h2 > 0).astype(np.float64)[:, None]
    loss = float(np.sum(np.maximum(h1, 0)) + np.sum(np.maximum(h2, 0)))
    gP1 = a1 * (g_pp + g_n1) + a2 * g_pp
    gP2 = a1 * (-g_pp) + a2 * (-g_pp + g_n2)
    gN = a1 * (-g_n1) + a2 * (-g_n2)
    return loss, (gN, gP1, gP2)


def ntxent_loss(Z: np.ndarray, pair_index: np.ndarray, tau: float):
    """Normalized temperature-scaled cross entropy over 2N paired vectors.

    ``pair_index[i]`` is the positive partner of anchor i (an involution
    with no fixed points). Similarity is the cosine of the L2-normalized
    rows. Returns (loss, dL/dZ) with the gradient taken through the
    normalization.
    """
    if tau <= 0:
        raise EmbeddingError("temperature must be > 0")
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    n = Z.shape[0]
    pair_index = np.asarray(pair_index)
    if n < 2 or n % 2:
        raise EmbeddingError("batch must hold 2N >= 2 vectors")
    if np.any(pair_index == np.arange(n)) or np.any(pair_index[pair_index] != np.arange(n)):
        raise EmbeddingError("pair_index must be a fixed-point-free involution")
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise EmbeddingError("zero vector in contrastive batch")
    U = Z / norms
    S = U @ U.T / tau
    np.fill_diagonal(S, -np.inf)  # A(i) excludes i
    m = S.max(axis=1, keepdims=True)
    expS = np.exp(S - m)
    denom = expS.sum(axis=1, keepdims=True)
    logp = S - (m + np.log(denom))
    loss = float(-logp[np.arange(n), pair_index].sum())
    # dL/dS = softmax - onehot(pair), zero on the diagonal
    P = expS / denom
    dS = P.copy()
    dS[np.arange(n), pair_index] -= 1.0
    dS /= tau
    dU = dS @ U + dS.T @ U
    dZ = (dU - U * np.sum(dU * U, axis=1, keepdims=True)) / norms
    return loss, dZ


def default_pairing(n: int) -> np.ndarray:
    """Adjacent pairing (0,1), (2,3), ... for a 2N batch."""
    idx = np.arange(n)
    return idx + 1 - 2 * (idx % 2)


def train_srn(
    store: FeatureStore,
    answers: list[TestAnswer],
    cfg: TrainConfig,
    loss_history: list[float] | None = None,
) -> EmbeddingHead:
    """Fine-tune the head on answered 3AFC tests with mini-batch SGD plus
    momentum; deterministic under ``cfg.seed``.

    The learning rate is multiplied by ``cfg.decay`` once, after two thirds
    of the epochs. ``loss_history``, if given, collects the mean per-answer
    loss of each epoch.
    """
    if not answers:
        raise EmbeddingError("no answers to train on")
    for a in answers:
        for sid in a.items:
            if sid not in store.vectors:
                raise EmbeddingError(f"answer {a.test_id}: unknown sample {sid!r}")
    head = init_head(store.dim, cfg.hidden, cfg.out, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    vel = {k: np.zeros_like(getattr(head, k)) for k in ("W1", "b1", "W2", "b2")}
    lr = cfg.lr
    milestone = (2 * cfg.epochs) // 3
    for epoch in range(cfg.epochs):
        if epoch == milestone and milestone > 0:
            lr *= cfg.decay
        order = rng.permutation(len(answers))
        epoch_loss = 0.0
        for start in range(0, len(answers), cfg.batch_size):
            batch = [answers[i] for i in order[start : start + cfg.batch_size]]
            ids = sorted({sid for a in batch for sid in a.items})
            row = {sid: i for i, sid in enumerate(ids)}
            U, cache = forward(head, store.matrix(ids))
            n_idx, p1_idx, p2_idx = [], [], []
            for a in batch:
                pos = [j for j in range(3) if j != a.chosen]
                n_idx.append(row[a.items[a.chosen]])
                p1_idx.append(row[a.items[pos[0]]])
                p2_idx.append(row[a.items[pos[1]]])
            loss, (gN, gP1, gP2) = dual_triplet_loss(
                U[n_idx], U[p1_idx], U[p2_idx], cfg.margin
            )
            epoch_loss += loss
            dU = np.zeros_like(U)
            np.add.at(dU, n_idx, gN)
            np.add.at(dU, p1_idx, gP1)
            np.add.at(dU, p2_idx, gP2)
            grads = backward(head, cache, dU)
            for k, g in grads.items():
                vel[k] = cfg.momentum * vel[k] - lr * g
                getattr(head, k)[...] += vel[k]
        if loss_history is not None:
            loss_history.append(epoch_loss / len(answers))
    return head


def save_head(head: EmbeddingHead, cfg: TrainConfig | None = None) -> str:
    """Full-precision text checkpoint; round-trips exactly."""
    lines = [
        "srn-checkpoint-v1",
        f"dim={head.dim}",
        f"hidden={head.hidden}",
        f"out={head.out}",
        "activation=relu",
        f"config={json.dumps(asdict(cfg), sort_keys=True) if cfg else '{}'}",
    ]
    for name in ("W1", "b1", "W2", "b2"):
        p = np.atleast_2d(getattr(head, name))
        lines.append(f"param {name} {p.shape[0]} {p.shape[1]}")
        for r in p:
            lines.append(" ".join(repr(float(x)) for x in r))
    return "\n".join(lines) + "\n"


def load_head(source: str) -> EmbeddingHead:
    lines = source.splitlines()
    if not lines or lines[0] != "srn-checkpoint-v1":
        raise EmbeddingError("not an SRN checkpoint")
    params: dict[str, np.ndarray] = {}
    i = 0
    while i < len(lines):
        if lines[i].startswith("param "):
            _, name, r, c = lines[i].split()
            r, c = int(r), int(c)
            rows = [[float(x) for x in lines[i + 1 + j].split()] for j in range(r)]
            arr = np.array(rows)
            params[name] = arr[0] if name.startswith("b") else arr
            i += 1 + r
        else:
            i += 1
    try:
        return EmbeddingHead(params["W1"], params["b1"], params["W2"], params["b2"])
    except KeyError as e:
        raise EmbeddingError(f"checkpoint missing parameter {e}") from None
