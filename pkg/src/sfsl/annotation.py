"""3AFC triplet tests: sampling, the simulated hierarchy oracle, and the
persistent answer log.

A test presents three samples; the annotator (virtual or human) picks the
most dissimilar one. The pick becomes the negative of the dual-triplet
loss, the remaining pair the positives.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .hierarchy import ConceptTree

# Fixed timestamp for simulated answers so logs are byte-reproducible.
ORACLE_TIMESTAMP = "1970-01-01T00:00:00Z"


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class TripletTest:
    test_id: str
    items: tuple[str, str, str]

    def __post_init__(self):
        if len(set(self.items)) != 3:
            raise AnnotationError(f"test {self.test_id}: items must be distinct")


@dataclass(frozen=True)
class TestAnswer:
    test_id: str
    items: tuple[str, str, str]
    chosen: int  # index of the negative sample
    source: str  # "oracle" | "human"
    timestamp: str  # ISO-8601 UTC

    def __post_init__(self):
        if self.chosen not in (0, 1, 2):
            raise AnnotationError(f"chosen index {self.chosen} out of range")
        if self.source not in ("oracle", "human"):
            raise AnnotationError(f"unknown answer source {self.source!r}")


def sample_tests(
    pool: list[str], count: int, rng: np.random.Generator, id_prefix: str = "t"
) -> list[TripletTest]:
    """Draw ``count`` triplet tests uniformly without replacement within each test."""
    pool = sorted(pool)
    if len(pool) < 3:
        raise AnnotationError(f"pool of {len(pool)} samples is too small for 3AFC")
    if count < 1:
        raise AnnotationError("count must be >= 1")
    tests = []
    for i in range(count):
        idx = rng.choice(len(pool), size=3, replace=False)
        tests.append(TripletTest(f"{id_prefix}{i:06d}", tuple(pool[j] for j in idx)))
    return tests


def oracle_choice(
    test: TripletTest, tree: ConceptTree, leaf_of: dict[str, str]
) -> int | None:
    """Index of the most dissimilar item, or None when the test is ambiguous.

    The chosen item is the one whose removal leaves the most semantically
    similar remaining pair; ties for that maximum make the test ambiguous.
    """
    leaves = [leaf_of[s] for s in test.items]
    pair_sim = []
    for i in range(3):
        j, k = [x for x in range(3) if x != i]
        pair_sim.append(tree.semantic_similarity(leaves[j], leaves[k]))
    best = max(pair_sim)
    winners = [i for i in range(3) if pair_sim[i] == best]
    return winners[0] if len(winners) == 1 else None


def oracle_answer(
    test: TripletTest, tree: ConceptTree, leaf_of: dict[str, str]
) -> TestAnswer | None:
    """Answer one test with the virtual annotator; None if ambiguous."""
    chosen = oracle_choice(test, tree, leaf_of)
    if chosen is None:
        return None
    return TestAnswer(test.test_id, test.items, chosen, "oracle", ORACLE_TIMESTAMP)


def simulate_annotations(
    tests: list[TripletTest],
    tree: ConceptTree,
    leaf_of: dict[str, str],
    policy: str = "discard",
    pool: list[str] | None = None,
    rng: np.random.Generator | None = None,
) -> list[TestAnswer]:
    """Answer a batch of tests with the virtual annotator.

    Ambiguous tests are handled per ``policy``:
      - "discard": dropped, and (when ``pool`` and ``rng`` are given)
        replaced by freshly sampled unambiguous tests so the answer count
        matches the request;
      - "tiebreak-lowest-index": answered with the lowest tying index.
    """
    if policy not in ("discard", "tiebreak-lowest-index"):
        raise AnnotationError(f"unknown ambiguity policy {policy!r}")
    answers = []
    dropped = 0
    for test in tests:
        chosen = oracle_choice(test, tree, leaf_of)
        if chosen is None:
            if policy == "tiebreak-lowest-index":
                chosen = 0
            else:
                dropped += 1
                continue
        answers.append(
            TestAnswer(test.test_id, test.items, chosen, "oracle", ORACLE_TIMESTAMP)
        )
    if dropped and policy == "discard" and pool is not None and rng is not None:
        # resample until the budget is met; replacement ids continue the sequence
        serial = len(tests)
        while dropped:
            [test] = sample_tests(pool, 1, rng, id_prefix="r")
            test = TripletTest(f"r{serial:06d}", test.items)
            serial += 1
            answer = oracle_answer(test, tree, leaf_of)
            if answer is not None:
                answers.append(answer)
                dropped -= 1
    return answers


class AnswerLog:
    """Append-only newline-delimited JSON answer log with at-most-once
    semantics per test_id.

    A partial trailing line (crash mid-append) is discarded on load.
    """

    def __init__(self, path: str):
        self.path = path
        self.answers: list[TestAnswer] = []
        self._ids: set[str] = set()
        if os.path.exists(path):
            self._load()

    def _load(self):
        with open(self.path, "rb") as f:
            data = f.read()
        for line in data.split(b"\n"):
            if not line:
                continue
            try:
                rec = json.loads(line.decode("utf-8"))
                ans = TestAnswer(
                    rec["test_id"],
                    tuple(rec["items"]),
                    rec["chosen"],
                    rec["source"],
                    rec["timestamp"],
                )
            except (ValueError, KeyError):
                continue  # torn write; drop the partial record
            if ans.test_id in self._ids:
                continue
            self.answers.append(ans)
            self._ids.add(ans.test_id)

    def __len__(self) -> int:
        return len(self.answers)

    def __contains__(self, test_id: str) -> bool:
        return test_id in self._ids

    def get(self, test_id: str) -> TestAnswer | None:
        if test_id not in self._ids:
            return None
        return next(a for a in self.answers if a.test_id == test_id)

    def append(self, answer: TestAnswer):
        if answer.test_id in self._ids:
            raise AnnotationError(f"duplicate answer for test {answer.test_id}")
        line = json.dumps(
            {
                "test_id": answer.test_id,
                "items": list(answer.items),
                "chosen": answer.chosen,
                "source": answer.source,
                "timestamp": answer.timestamp,
            },
            separators=(",", ":"),
        )
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(line + "\n")
            f.flush()
            os.fsync(f.fileno())
        self.answers.append(answer)
        self._ids.add(answer.test_id)


def append_answer(log: AnswerLog, answer: TestAnswer) -> AnswerLog:
    log.append(answer)
    return log
