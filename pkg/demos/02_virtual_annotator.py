"""Simulate 3AFC psychometric tests with the virtual annotator.

Each test shows three samples; the annotator picks the most dissimilar
one, i.e. the one whose removal leaves the most similar pair. Ties make a
test ambiguous; the default policy discards and resamples those.
"""

import numpy as np

from sfsl import load_cifar100_tree, oracle_choice, sample_tests, simulate_annotations
from sfsl.annotation import TripletTest

tree = load_cifar100_tree()
leaf_of = {leaf: leaf for leaf in tree.leaves}  # one sample per class here

for items in [("tiger", "lion", "butterfly"), ("wolf", "pickup_truck", "streetcar")]:
    choice = oracle_choice(TripletTest("demo", items), tree, leaf_of)
    print(f"{items} -> most dissimilar: {items[choice]}")

# an ambiguous test: three leaves under the same superclass
print("(wolf, lion, tiger) ->", oracle_choice(TripletTest("d", ("wolf", "lion", "tiger")), tree, leaf_of))

# a reproducible batch of 20 answered tests
rng = np.random.default_rng(0)
pool = sorted(tree.leaves)
tests = sample_tests(pool, 20, rng)
answers = simulate_annotations(tests, tree, leaf_of, policy="discard", pool=pool, rng=rng)
print(f"\nanswered {len(answers)} of {len(tests)} sampled tests, e.g.:")
for a in answers[:5]:
    print(f"  {a.items} -> {a.items[a.chosen]}")
