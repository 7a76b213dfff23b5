import numpy as np
import pytest

from sfsl.hierarchy import ConceptTree


def random_tree(rng: np.random.Generator, max_nodes: int = 200) -> ConceptTree:
    """Random rooted tree built by attaching each node to a random earlier
    node. Not layered; used with the brute-force oracles only."""
    n = int(rng.integers(3, max_nodes + 1))
    parent = {"n0": None}
    labels = {"n0": "n0"}
    for i in range(1, n):
        p = f"n{rng.integers(0, i)}"
        parent[f"n{i}"] = p
        labels[f"n{i}"] = f"n{i}"
    return ConceptTree(parent, labels)


def brute_height(tree: ConceptTree, node: str) -> int:
    """Longest downward path by exhaustive DFS."""
    kids = tree.children(node)
    if not kids:
        return 0
    return 1 + max(brute_height(tree, k) for k in kids)


def brute_lcs(tree: ConceptTree, x: str, y: str) -> str:
    """Deepest element of the intersection of the full ancestor chains."""
    common = set(tree.ancestors(x)) & set(tree.ancestors(y))
    return max(common, key=tree.depth)


@pytest.fixture(scope="session")
def cifar_tree():
    from sfsl.hierarchy import load_cifar100_tree

    return load_cifar100_tree()


def fd_param_grads(head, loss_fn, eps=1e-6, max_entries=20, rng=None):
    """Central finite differences of loss_fn(head) w.r.t. a random subset of
    parameter entries. Yields (name, index, fd_value)."""
    rng = rng or np.random.default_rng(0)
    for name in ("W1", "b1", "W2", "b2"):
        p = getattr(head, name)
        flat = p.reshape(-1)
        picks = rng.choice(flat.size, size=min(max_entries, flat.size), replace=False)
        for k in picks:
            old = flat[k]
            flat[k] = old + eps
            lp = loss_fn(head)
            flat[k] = old - eps
            lm = loss_fn(head)
            flat[k] = old
            yield name, int(k), (lp - lm) / (2 * eps)


def rel_err(a, b, floor=1e-8):
    return abs(a - b) / max(abs(a), abs(b), floor)
