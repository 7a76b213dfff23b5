"""Feature ingestion and seeded synthetic hierarchical datasets.

Feature vectors stand in for the frozen self-supervised encoder output.
The synthetic generator draws nested isotropic Gaussians down the concept
tree so that feature geometry correlates with tree distance by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hierarchy import ConceptTree


class DataError(ValueError):
    pass


class FeatureStore:
    """Immutable sample id -> feature vector map with leaf labels and a
    base/novel split."""

    def __init__(
        self,
        dim: int,
        vectors: dict[str, np.ndarray],
        leaf_of: dict[str, str],
        split_of: dict[str, str],
    ):
        if dim <= 0:
            raise DataError("feature dim must be positive")
        self.dim = dim
        self.vectors = {}
        for sid, v in vectors.items():
            v = np.asarray(v, dtype=np.float64)
            if v.shape != (dim,):
                raise DataError(f"sample {sid}: expected {dim} values, got {v.shape}")
            if not np.all(np.isfinite(v)):
                raise DataError(f"sample {sid}: non-finite feature value")
            v.setflags(write=False)
            self.vectors[sid] = v
        if set(leaf_of) != set(self.vectors) or set(split_of) != set(self.vectors):
            raise DataError("leaf/split maps must cover exactly the sample set")
        for sid, split in split_of.items():
            if split not in ("base", "novel"):
                raise DataError(f"sample {sid}: unknown split {split!r}")
        self.leaf_of = dict(leaf_of)
        self.split_of = dict(split_of)
        base_leaves = {leaf_of[s] for s in self.vectors if split_of[s] == "base"}
        novel_leaves = {leaf_of[s] for s in self.vectors if split_of[s] == "novel"}
        if base_leaves & novel_leaves:
            raise DataError(f"leaves in both splits: {sorted(base_leaves & novel_leaves)}")
        self.base_leaves = frozenset(base_leaves)
        self.novel_leaves = frozenset(novel_leaves)

    def sample_ids(self, split: str | None = None) -> list[str]:
        ids = sorted(self.vectors)
        if split is None:
            return ids
        return [s for s in ids if self.split_of[s] == split]

    def matrix(self, ids: list[str]) -> np.ndarray:
        return np.stack([self.vectors[s] for s in ids])

    def __len__(self) -> int:
        return len(self.vectors)


def load_features(source: str) -> FeatureStore:
    """Parse a feature file (``dim=<d>`` header, then CSV rows)."""
    lines = [l for l in source.splitlines() if l.strip()]
    if not lines or not lines[0].startswith("dim="):
        raise DataError("missing dim=<d> header")
    try:
        dim = int(lines[0][4:])
    except ValueError:
        raise DataError(f"bad header {lines[0]!r}") from None
    vectors, leaf_of, split_of = {}, {}, {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 3 + dim:
            raise DataError(f"line {lineno}: expected {3 + dim} fields, got {len(parts)}")
        sid, leaf, split = parts[:3]
        if sid in vectors:
            raise DataError(f"line {lineno}: duplicate sample id {sid!r}")
        try:
            vec = np.array([float(x) for x in parts[3:]])
        except ValueError:
            raise DataError(f"line {lineno}: bad float value") from None
        vectors[sid] = vec
        leaf_of[sid] = leaf
        split_of[sid] = split
    return FeatureStore(dim, vectors, leaf_of, split_of)


def save_features(store: FeatureStore) -> str:
    """Serialize exactly; ``load_features(save_features(s))`` reproduces s."""
    out = [f"dim={store.dim}"]
    for sid in store.sample_ids():
        vals = ",".join(repr(float(x)) for x in store.vectors[sid])
        out.append(f"{sid},{store.leaf_of[sid]},{store.split_of[sid]},{vals}")
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class SynthConfig:
    dim: int = 64
    branching: tuple[int, ...] = (2, 5, 10)  # 2 supers, 10 mids, 100 leaves
    sigma_super: float = 1.2
    sigma_mid: float = 1.1
    sigma_leaf: float = 1.0
    sigma_obs: float = 3.5
    samples_per_leaf: int = 10
    base_fraction: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if self.dim <= 0:
            raise DataError("dim must be positive")
        if len(self.branching) < 2 or any(b < 1 for b in self.branching):
            raise DataError("branching must give at least two layers of >= 1")
        if not (self.sigma_super > self.sigma_mid > self.sigma_leaf > 0):
            raise DataError("need sigma_super > sigma_mid > sigma_leaf > 0")
        if self.sigma_obs < 0:
            raise DataError("sigma_obs must be >= 0")
        if self.samples_per_leaf < 1:
            raise DataError("samples_per_leaf must be >= 1")
        n_leaves = math.prod(self.branching)
        n_base = round(self.base_fraction * n_leaves)
        if not (2 <= n_base <= n_leaves - 2):
            raise DataError("each split needs at least 2 leaves")


def generate_synthetic(cfg: SynthConfig) -> tuple[ConceptTree, FeatureStore]:
    """Build a layered tree from ``cfg.branching`` and draw hierarchical
    Gaussian features: child mean = parent mean + jitter at the layer's
    scale, sample = leaf mean + observation noise."""
    rng = np.random.default_rng(cfg.seed)
    layer_sigmas = [cfg.sigma_super, cfg.sigma_mid, cfg.sigma_leaf]
    # deeper-than-3 trees keep shrinking below sigma_leaf
    while len(layer_sigmas) < len(cfg.branching):
        layer_sigmas.append(layer_sigmas[-1] / 2)
    layer_sigmas = layer_sigmas[: len(cfg.branching)]

    parent: dict[str, str | None] = {"root": None}
    labels = {"root": "root"}
    means = {"root": np.zeros(cfg.dim)}
    prev_layer = ["root"]
    for li, (branch, sigma) in enumerate(zip(cfg.branching, layer_sigmas)):
        layer = []
        for p in prev_layer:
            for k in range(branch):
                node = f"{p}.{k}" if p != "root" else f"n{k}"
                parent[node] = p
                labels[node] = node
                means[node] = means[p] + sigma * rng.standard_normal(cfg.dim)
                layer.append(node)
        prev_layer = layer
    tree = ConceptTree(parent, labels)

    leaves = sorted(tree.leaves)
    order = rng.permutation(len(leaves))
    n_base = round(cfg.base_fraction * len(leaves))
    base_set = {leaves[i] for i in order[:n_base]}

    vectors, leaf_of, split_of = {}, {}, {}
    for leaf in leaves:
        for k in range(cfg.samples_per_leaf):
            sid = f"{leaf}_s{k:03d}"
            vectors[sid] = means[leaf] + cfg.sigma_obs * rng.standard_normal(cfg.dim)
            leaf_of[sid] = leaf
            split_of[sid] = "base" if leaf in base_set else "novel"
    return tree, FeatureStore(cfg.dim, vectors, leaf_of, split_of)
