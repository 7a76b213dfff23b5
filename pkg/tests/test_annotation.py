import itertools
import json

import numpy as np
import pytest

from sfsl.annotation import (
    AnnotationError,
    AnswerLog,
    TestAnswer,
    TripletTest,
    ORACLE_TIMESTAMP,
    append_answer,
    oracle_answer,
    oracle_choice,
    sample_tests,
    simulate_annotations,
)


def leaf_identity(tree):
    return {leaf: leaf for leaf in tree.leaves}


class TestSampling:
    def test_pool_of_three_forced(self):
        rng = np.random.default_rng(0)
        [t] = sample_tests(["a", "b", "c"], 1, rng)
        assert sorted(t.items) == ["a", "b", "c"]

    def test_count_and_distinct_items(self):
        rng = np.random.default_rng(1)
        tests = sample_tests([f"s{i}" for i in range(50)], 1000, rng)
        assert len(tests) == 1000
        assert all(len(set(t.items)) == 3 for t in tests)
        assert len({t.test_id for t in tests}) == 1000

    def test_deterministic_under_seed(self):
        pool = [f"s{i}" for i in range(20)]
        a = sample_tests(pool, 50, np.random.default_rng(9))
        b = sample_tests(pool, 50, np.random.default_rng(9))
        assert a == b

    def test_pool_too_small(self):
        with pytest.raises(AnnotationError, match="too small"):
            sample_tests(["a", "b"], 1, np.random.default_rng(0))


class TestOracle:
    def test_fig3_butterfly(self, cifar_tree):
        t = TripletTest("t0", ("tiger", "lion", "butterfly"))
        ans = oracle_answer(t, cifar_tree, leaf_identity(cifar_tree))
        assert ans.chosen == 2
        assert ans.items[ans.chosen] == "butterfly"
        assert ans.source == "oracle"
        assert ans.timestamp == ORACLE_TIMESTAMP

    def test_fig3_wolf(self, cifar_tree):
        t = TripletTest("t1", ("wolf", "pickup_truck", "streetcar"))
        ans = oracle_answer(t, cifar_tree, leaf_identity(cifar_tree))
        assert ans.items[ans.chosen] == "wolf"

    def test_three_siblings_ambiguous(self, cifar_tree):
        t = TripletTest("t2", ("wolf", "lion", "tiger"))
        assert oracle_choice(t, cifar_tree, leaf_identity(cifar_tree)) is None

    def test_shared_leaf_pair_dominates(self, cifar_tree):
        # two samples of the same leaf: the odd one is always chosen
        leaf_of = {"a": "wolf", "b": "wolf", "c": "lion"}
        t = TripletTest("t3", ("a", "c", "b"))
        assert oracle_choice(t, cifar_tree, leaf_of) == 1

    def test_permutation_equivariance(self, cifar_tree):
        rng = np.random.default_rng(5)
        leaves = sorted(cifar_tree.leaves)
        leaf_of = leaf_identity(cifar_tree)
        checked = 0
        while checked < 50:
            trio = [leaves[i] for i in rng.choice(len(leaves), 3, replace=False)]
            base = oracle_choice(TripletTest("x", tuple(trio)), cifar_tree, leaf_of)
            if base is None:
                continue
            winner = trio[base]
            for perm in itertools.permutations(trio):
                c = oracle_choice(TripletTest("x", perm), cifar_tree, leaf_of)
                assert c is not None and perm[c] == winner
            checked += 1

    def test_chosen_minimizes_own_similarity_sum(self, cifar_tree):
        # equivalent reading of "most dissimilar" on unambiguous triplets
        rng = np.random.default_rng(6)
        leaves = sorted(cifar_tree.leaves)
        leaf_of = leaf_identity(cifar_tree)
        checked = 0
        while checked < 100:
            trio = tuple(leaves[i] for i in rng.choice(len(leaves), 3, replace=False))
            c = oracle_choice(TripletTest("x", trio), cifar_tree, leaf_of)
            if c is None:
                continue
            sums = [
                sum(cifar_tree.semantic_similarity(trio[i], trio[j]) for j in range(3) if j != i)
                for i in range(3)
            ]
            assert sums[c] == min(sums)
            checked += 1


class TestSimulate:
    def test_tiebreak_policy_answers_everything(self, cifar_tree):
        leaf_of = leaf_identity(cifar_tree)
        t_amb = TripletTest("a0", ("wolf", "lion", "tiger"))
        t_ok = TripletTest("a1", ("tiger", "lion", "butterfly"))
        answers = simulate_annotations(
            [t_amb, t_ok], cifar_tree, leaf_of, policy="tiebreak-lowest-index"
        )
        assert [a.chosen for a in answers] == [0, 2]

    def test_discard_without_pool_drops(self, cifar_tree):
        leaf_of = leaf_identity(cifar_tree)
        t_amb = TripletTest("a0", ("wolf", "lion", "tiger"))
        t_ok = TripletTest("a1", ("tiger", "lion", "butterfly"))
        answers = simulate_annotations([t_amb, t_ok], cifar_tree, leaf_of)
        assert len(answers) == 1

    def test_discard_with_resampling_meets_budget(self, cifar_tree):
        leaf_of = leaf_identity(cifar_tree)
        pool = sorted(cifar_tree.leaves)
        rng = np.random.default_rng(11)
        tests = sample_tests(pool, 200, rng)
        answers = simulate_annotations(
            tests, cifar_tree, leaf_of, policy="discard", pool=pool, rng=rng
        )
        assert len(answers) == 200
        assert len({a.test_id for a in answers}) == 200

    def test_reproducible_byte_for_byte(self, cifar_tree, tmp_path):
        leaf_of = leaf_identity(cifar_tree)
        pool = sorted(cifar_tree.leaves)
        blobs = []
        for run in range(2):
            rng = np.random.default_rng(13)
            tests = sample_tests(pool, 100, rng)
            answers = simulate_annotations(
                tests, cifar_tree, leaf_of, policy="discard", pool=pool, rng=rng
            )
            path = tmp_path / f"log{run}.jsonl"
            log = AnswerLog(str(path))
            for a in answers:
                log.append(a)
            blobs.append(path.read_bytes())
        assert blobs[0] == blobs[1]


class TestAnswerLog:
    def make_answer(self, i=0, chosen=0):
        return TestAnswer(f"t{i}", ("a", "b", "c"), chosen, "oracle", ORACLE_TIMESTAMP)

    def test_append_and_reload(self, tmp_path):
        path = str(tmp_path / "log.jsonl")
        log = AnswerLog(path)
        for i in range(5):
            append_answer(log, self.make_answer(i))
        assert len(log) == 5
        assert AnswerLog(path).answers == log.answers

    def test_duplicate_rejected_log_unchanged(self, tmp_path):
        path = str(tmp_path / "log.jsonl")
        log = AnswerLog(path)
        log.append(self.make_answer(0))
        before = open(path, "rb").read()
        with pytest.raises(AnnotationError, match="duplicate"):
            log.append(self.make_answer(0, chosen=1))
        assert open(path, "rb").read() == before
        assert len(log) == 1

    def test_partial_last_line_discarded(self, tmp_path):
        path = str(tmp_path / "log.jsonl")
        log = AnswerLog(path)
        log.append(self.make_answer(0))
        log.append(self.make_answer(1))
        with open(path, "a") as f:
            f.write('{"test_id": "t2", "items": ["a", "b"')  # torn write
        reloaded = AnswerLog(path)
        assert len(reloaded) == 2
        assert "t2" not in reloaded

    def test_record_schema(self, tmp_path):
        path = str(tmp_path / "log.jsonl")
        AnswerLog(path).append(self.make_answer(0, chosen=2))
        rec = json.loads(open(path).read())
        assert set(rec) == {"test_id", "items", "chosen", "source", "timestamp"}
        assert rec["chosen"] == 2 and len(rec["items"]) == 3

    def test_bad_chosen_index(self):
        with pytest.raises(AnnotationError, match="out of range"):
            TestAnswer("t", ("a", "b", "c"), 3, "human", "2026-01-01T00:00:00Z")

    def test_items_must_be_distinct(self):
        with pytest.raises(AnnotationError, match="distinct"):
            TripletTest("t", ("a", "a", "b"))
