"""Few-shot episode sampling, nearest-neighbor and prototype inference,
and typical/semantic scoring.

Semantic correctness: the chosen support attains the maximum ground-truth
semantic similarity to the query over the support set (membership in the
argmax set counts). Typical accuracy compares leaf labels directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .data import FeatureStore
from .embedding import EmbeddingHead, forward
from .hierarchy import ConceptTree


class EpisodeError(ValueError):
    pass


@dataclass(frozen=True)
class Episode:
    support: tuple[str, ...]
    query: str
    mode: str  # "typical" | "semantic"

    def __post_init__(self):
        if len(set(self.support)) != len(self.support):
            raise EpisodeError("support ids must be distinct")
        if self.query in self.support:
            raise EpisodeError("query must not appear in support")
        if self.mode not in ("typical", "semantic"):
            raise EpisodeError(f"unknown episode mode {self.mode!r}")


@dataclass
class EvalReport:
    episode_count: int
    typical_correct: int
    semantic_correct: int
    similarity_sum: Fraction  # sum of achieved S_s over episodes
    tie_count: int  # nearest-neighbor distance ties, broken by lowest index
    annotation_budget: int
    seed: int
    config: dict[str, object] = field(default_factory=dict)

    @property
    def typical_accuracy(self) -> float:
        return self.typical_correct / self.episode_count

    @property
    def semantic_accuracy(self) -> float:
        return self.semantic_correct / self.episode_count

    @property
    def mean_similarity(self) -> float:
        return float(self.similarity_sum / self.episode_count)

    def to_text(self) -> str:
        lines = [
            f"episode_count={self.episode_count}",
            f"typical_correct={self.typical_correct}",
            f"semantic_correct={self.semantic_correct}",
            f"typical_accuracy={self.typical_accuracy!r}",
            f"semantic_accuracy={self.semantic_accuracy!r}",
            f"mean_similarity={self.mean_similarity!r}",
            f"tie_count={self.tie_count}",
            f"annotation_budget={self.annotation_budget}",
            f"seed={self.seed}",
        ]
        for k in sorted(self.config):
            lines.append(f"config.{k}={self.config[k]}")
        return "\n".join(lines) + "\n"


def sample_semantic_task(
    store: FeatureStore, n_way: int, rng: np.random.Generator
) -> Episode:
    """Uniform support + query draw from the novel split (supports may share
    leaves)."""
    pool = store.sample_ids("novel")
    if len(pool) < n_way + 1:
        raise EpisodeError(f"novel pool of {len(pool)} too small for {n_way}-way")
    picks = rng.choice(len(pool), size=n_way + 1, replace=False)
    return Episode(tuple(pool[i] for i in picks[:n_way]), pool[picks[n_way]], "semantic")


def sample_typical_task(
    store: FeatureStore, n_way: int, k_shot: int, rng: np.random.Generator
) -> Episode:
    """Class-stratified support over ``n_way`` distinct novel leaves; the
    query comes from one of those leaves and is distinct from its supports."""
    by_leaf: dict[str, list[str]] = {}
    for sid in store.sample_ids("novel"):
        by_leaf.setdefault(store.leaf_of[sid], []).append(sid)
    eligible = sorted(l for l, ids in by_leaf.items() if len(ids) >= k_shot)
    if len(eligible) < n_way:
        raise EpisodeError(f"only {len(eligible)} novel leaves support {k_shot}-shot")
    leaves = [eligible[i] for i in rng.choice(len(eligible), size=n_way, replace=False)]
    query_ok = [i for i, l in enumerate(leaves) if len(by_leaf[l]) >= k_shot + 1]
    if not query_ok:
        raise EpisodeError("no sampled leaf has a spare sample for the query")
    qi = query_ok[int(rng.integers(len(query_ok)))]
    support: list[str] = []
    query = ""
    for i, leaf in enumerate(leaves):
        ids = by_leaf[leaf]
        need = k_shot + 1 if i == qi else k_shot
        picks = [ids[j] for j in rng.choice(len(ids), size=need, replace=False)]
        if i == qi:
            query = picks[-1]
            picks = picks[:-1]
        support.extend(picks)
    return Episode(tuple(support), query, "typical")


def infer_nn(
    ep: Episode, head: EmbeddingHead, store: FeatureStore
) -> tuple[int, bool]:
    """Nearest support in embedding space. Returns (index, tied); ties break
    toward the lowest index."""
    ids = list(ep.support) + [ep.query]
    U, _ = forward(head, store.matrix(ids))
    dists = np.linalg.norm(U[:-1] - U[-1], axis=1)
    best = int(np.argmin(dists))
    tied = bool(np.sum(np.isclose(dists, dists[best], rtol=0, atol=1e-12)) > 1)
    return best, tied


def infer_nn_raw(ep: Episode, store: FeatureStore) -> tuple[int, bool]:
    """Nearest-neighbor baseline on the untuned features (L2-normalized)."""
    ids = list(ep.support) + [ep.query]
    X = store.matrix(ids)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise EpisodeError("zero feature vector")
    U = X / norms
    dists = np.linalg.norm(U[:-1] - U[-1], axis=1)
    best = int(np.argmin(dists))
    tied = bool(np.sum(np.isclose(dists, dists[best], rtol=0, atol=1e-12)) > 1)
    return best, tied


def infer_prototype(ep: Episode, head: EmbeddingHead, store: FeatureStore) -> str:
    """Nearest class-mean rule over a typical episode's support embeddings.

    Classes are ordered by first appearance in the support; distance ties
    break toward the earliest class.
    """
    if ep.mode != "typical":
        raise EpisodeError("prototype inference requires a typical episode")
    ids = list(ep.support) + [ep.query]
    U, _ = forward(head, store.matrix(ids))
    classes: list[str] = []
    members: dict[str, list[int]] = {}
    for i, sid in enumerate(ep.support):
        leaf = store.leaf_of[sid]
        if leaf not in members:
            classes.append(leaf)
            members[leaf] = []
        members[leaf].append(i)
    protos = np.stack([U[members[c]].mean(axis=0) for c in classes])
    dists = np.linalg.norm(protos - U[-1], axis=1)
    return classes[int(np.argmin(dists))]


def score(
    episodes: list[Episode],
    choices: list[int],
    tree: ConceptTree,
    store: FeatureStore,
    tie_count: int = 0,
    annotation_budget: int = 0,
    seed: int = 0,
    config: dict[str, object] | None = None,
) -> EvalReport:
    """Score chosen support indices against the ground-truth hierarchy."""
    if len(episodes) != len(choices):
        raise EpisodeError("one choice required per episode")
    typical = semantic = 0
    sim_sum = Fraction(0)
    for ep, idx in zip(episodes, choices):
        q_leaf = store.leaf_of[ep.query]
        sims = [tree.semantic_similarity(q_leaf, store.leaf_of[s]) for s in ep.support]
        achieved = sims[idx]
        sim_sum += achieved
        if achieved == max(sims):
            semantic += 1
        if store.leaf_of[ep.support[idx]] == q_leaf:
            typical += 1
    return EvalReport(
        episode_count=len(episodes),
        typical_correct=typical,
        semantic_correct=semantic,
        similarity_sum=sim_sum,
        tie_count=tie_count,
        annotation_budget=annotation_budget,
        seed=seed,
        config=dict(config or {}),
    )


def render_table(rows: list[dict[str, str]]) -> str:
    """Fixed-width comparison table (method / supervision / annotations /
    typical acc / semantic acc)."""
    cols = ["method", "supervision", "annotations", "typical_acc", "semantic_acc"]
    widths = {c: max(len(c), *(len(r.get(c, "")) for r in rows)) for c in cols}
    head = " | ".join(c.ljust(widths[c]) for c in cols)
    sep = "-+-".join("-" * widths[c] for c in cols)
    body = [" | ".join(r.get(c, "").ljust(widths[c]) for c in cols) for r in rows]
    return "\n".join([head, sep] + body) + "\n"
