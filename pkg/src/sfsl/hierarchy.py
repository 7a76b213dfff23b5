"""Concept hierarchy and LCS-based semantic distance/similarity.

The tree is the single source of semantic ground truth: every distance in
the framework reduces to the height of the lowest common subsumer of two
leaf concepts, normalized by the height of the whole hierarchy.
"""

from __future__ import annotations

from fractions import Fraction
from importlib import resources


class TreeError(ValueError):
    """Raised for malformed or invalid concept tree input."""


class ConceptTree:
    """Immutable rooted concept hierarchy.

    Nodes are string ids. Semantic distances are exact rationals; call
    ``float()`` on the result at the API edge if needed.
    """

    def __init__(self, parent: dict[str, str | None], labels: dict[str, str]):
        self._parent = dict(parent)
        self._labels = dict(labels)
        self._children: dict[str, list[str]] = {n: [] for n in self._parent}
        roots = [n for n, p in self._parent.items() if p is None]
        if len(roots) != 1:
            raise TreeError(f"expected exactly one root, found {len(roots)}")
        self._root = roots[0]
        for n, p in self._parent.items():
            if p is not None:
                if p not in self._parent:
                    raise TreeError(f"unknown parent {p!r} of node {n!r}")
                self._children[p].append(n)
        self._leaves = frozenset(n for n, c in self._children.items() if not c)
        self._depth: dict[str, int] = {}
        self._compute_depths()
        self._height: dict[str, int] = {}
        for n in sorted(self._parent, key=lambda n: -self._depth[n]):
            kids = self._children[n]
            self._height[n] = 1 + max(self._height[k] for k in kids) if kids else 0
        if self._height[self._root] < 1:
            raise TreeError("tree height must be >= 1 (single-node tree rejected)")

    def _compute_depths(self):
        # parent links were validated acyclic during load; walk up from each node
        for n in self._parent:
            d, cur, seen = 0, n, set()
            while self._parent[cur] is not None:
                if cur in seen:
                    raise TreeError(f"cycle detected at node {cur!r}")
                seen.add(cur)
                cur = self._parent[cur]
                d += 1
            self._depth[n] = d

    @property
    def root(self) -> str:
        return self._root

    @property
    def nodes(self) -> frozenset[str]:
        return frozenset(self._parent)

    @property
    def leaves(self) -> frozenset[str]:
        return self._leaves

    def label(self, node: str) -> str:
        return self._labels[node]

    def parent(self, node: str) -> str | None:
        self._check(node)
        return self._parent[node]

    def children(self, node: str) -> tuple[str, ...]:
        self._check(node)
        return tuple(self._children[node])

    def depth(self, node: str) -> int:
        """Edge count from the root down to ``node``."""
        self._check(node)
        return self._depth[node]

    def height(self, node: str) -> int:
        """Edge count from ``node`` down to its deepest descendant leaf."""
        self._check(node)
        return self._height[node]

    def ancestors(self, node: str) -> list[str]:
        """Chain from ``node`` up to the root, inclusive of both."""
        self._check(node)
        chain = [node]
        while (p := self._parent[chain[-1]]) is not None:
            chain.append(p)
        return chain

    def lcs(self, x: str, y: str) -> str:
        """Lowest common subsumer of two leaves."""
        self._check_leaf(x)
        self._check_leaf(y)
        if x == y:
            return x
        anc_x = set(self.ancestors(x))
        for node in self.ancestors(y):
            if node in anc_x:
                return node
        raise TreeError("no common ancestor (broken tree)")  # pragma: no cover

    def semantic_distance(self, x: str, y: str) -> Fraction:
        """height(lcs(x, y)) / height(root), exactly."""
        return Fraction(self.height(self.lcs(x, y)), self.height(self._root))

    def semantic_similarity(self, x: str, y: str) -> Fraction:
        return 1 - self.semantic_distance(x, y)

    def _check(self, node: str):
        if node not in self._parent:
            raise TreeError(f"unknown node {node!r}")

    def _check_leaf(self, node: str):
        self._check(node)
        if node not in self._leaves:
            raise TreeError(f"node {node!r} is not a leaf")

    def __contains__(self, node: str) -> bool:
        return node in self._parent

    def __len__(self) -> int:
        return len(self._parent)


def load_tree(source: str, strict_depth: bool = True) -> ConceptTree:
    """Parse a tree file.

    Format: one node per line, ``<node_id>\\t<parent_id or ROOT>\\t<label>``;
    ``#`` lines are comments; a node id must be defined before it is used as
    a parent. With ``strict_depth`` (default) all leaves must sit at equal
    depth, since the normalized LCS metric presumes a layered hierarchy.
    """
    parent: dict[str, str | None] = {}
    labels: dict[str, str] = {}
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise TreeError(f"line {lineno}: expected 3 tab-separated fields")
        node, par, label = parts
        if not node:
            raise TreeError(f"line {lineno}: empty node id")
        if node in parent:
            raise TreeError(f"line {lineno}: duplicate node id {node!r}")
        if par == "ROOT":
            parent[node] = None
        elif par == node:
            raise TreeError(f"line {lineno}: cycle detected (node {node!r} is its own parent)")
        elif par not in parent:
            raise TreeError(f"line {lineno}: parent {par!r} not defined before node {node!r}")
        else:
            parent[node] = par
        labels[node] = label
    if not parent:
        raise TreeError("empty tree file")
    tree = ConceptTree(parent, labels)
    if strict_depth:
        depths = {tree.depth(leaf) for leaf in tree.leaves}
        if len(depths) > 1:
            raise TreeError(f"leaves at unequal depths {sorted(depths)} (strict mode)")
    return tree


def load_cifar100_tree() -> ConceptTree:
    """The shipped CIFAR-100 fixture: 2 / 10 / 100 nodes per layer, height 3."""
    text = resources.files("sfsl.fixtures").joinpath("cifar100_tree.txt").read_text("utf-8")
    return load_tree(text)
