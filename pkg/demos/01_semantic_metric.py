"""Walk through the hierarchical semantic metric on the CIFAR-100 tree.

The tree has 2 super-superclasses (living / non-living), 10 superclasses,
and 100 leaf classes. Semantic distance between two leaves is the height
of their lowest common subsumer divided by the height of the tree, so it
takes the exact values 0, 1/3, 2/3, 1.
"""

from sfsl import load_cifar100_tree

tree = load_cifar100_tree()
print(f"tree: {len(tree)} nodes, {len(tree.leaves)} leaves, height {tree.height(tree.root)}")

pairs = [
    ("wolf", "wolf"),
    ("wolf", "lion"),        # both large carnivores
    ("wolf", "butterfly"),   # both living things
    ("wolf", "streetcar"),   # nothing in common below the root
]
for x, y in pairs:
    lcs = tree.lcs(x, y)
    print(
        f"lcs({x}, {y}) = {lcs:28s} "
        f"D_s = {tree.semantic_distance(x, y)!s:4s} "
        f"S_s = {tree.semantic_similarity(x, y)}"
    )
