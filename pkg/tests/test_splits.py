import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppilearn.data import INTERACTION_TYPES, InteractionRecord
from ppilearn.graphs import build_interaction_graph
from ppilearn.splits import SplitSpec, classify_subsets, split_random, split_traversal


def graph_from_pairs(pairs):
    records = [InteractionRecord(a, b, frozenset({"binding"})) for a, b in pairs]
    return build_interaction_graph(records)


def random_interaction_graph(rng, n_proteins, n_pairs):
    from itertools import combinations

    ids = [f"P{i:03d}" for i in range(n_proteins)]
    all_pairs = list(combinations(ids, 2))
    chosen = rng.choice(len(all_pairs), size=n_pairs, replace=False)
    records = []
    for idx in chosen:
        a, b = all_pairs[idx]
        types = frozenset({INTERACTION_TYPES[int(rng.integers(0, 7))]})
        records.append(InteractionRecord(a, b, types))
    return build_interaction_graph(records, protein_ids=ids)


class TestRandomSplit:
    def test_sizes_for_ten_pairs(self):
        assert split_random(10, seed=0).sizes() == (6, 2, 2)

    def test_reference_benchmark_sizes(self):
        # 7,401 pairs must cut into 4,440 / 1,480 / 1,481
        assert split_random(7401, seed=123).sizes() == (4440, 1480, 1481)

    def test_deterministic_per_seed(self):
        a = split_random(50, seed=9)
        b = split_random(50, seed=9)
        np.testing.assert_array_equal(a.train_idx, b.train_idx)
        np.testing.assert_array_equal(a.test_idx, b.test_idx)

    def test_different_seeds_differ(self):
        a = split_random(50, seed=1)
        b = split_random(50, seed=2)
        assert not np.array_equal(a.train_idx, b.train_idx)

    def test_too_few_pairs_rejected(self):
        with pytest.raises(ValueError, match="at least 5"):
            split_random(4, seed=0)

    @given(pair_count=st.integers(5, 400), seed=st.integers(0, 2**31))
    @settings(max_examples=40, deadline=None)
    def test_partition_property(self, pair_count, seed):
        split = split_random(pair_count, seed)
        split.validate(pair_count)
        train, val, test = split.sizes()
        assert train == int(np.floor(0.6 * pair_count))
        assert train + val == int(np.floor(0.8 * pair_count))


class TestTraversalSplit:
    def test_path_graph_holds_out_one_pair(self):
        # A-B-C-D-E: quota = floor(0.4 * 4) = 1, so exactly the first pair
        # touched by the root is held out and the other three form train.
        graph = graph_from_pairs([("A", "B"), ("B", "C"), ("C", "D"), ("D", "E")])
        seen_root_a = False
        for seed in range(40):
            split = split_traversal(graph, "bfs", seed=seed)
            assert len(split.train_idx) == 3
            held = set(split.val_idx.tolist()) | set(split.test_idx.tolist())
            assert len(held) == 1
            if held == {0}:  # root A: held-out pair is (A, B)
                seen_root_a = True
        assert seen_root_a

    def test_star_graph_trims_to_quota_in_traversal_order(self):
        # center X with 10 leaves: visiting X touches all 10 pairs at once;
        # quota floor(0.4 * 10) = 4 keeps the first 4 pairs in pair order.
        pairs = [("X", f"L{i}") for i in range(10)]
        graph = graph_from_pairs(pairs)
        seen_root_x = False
        for seed in range(60):
            split = split_traversal(graph, "dfs", seed=seed)
            assert len(split.train_idx) == 6
            held = set(split.val_idx.tolist()) | set(split.test_idx.tolist())
            assert len(held) == 4
            if held == {0, 1, 2, 3}:
                seen_root_x = True
        assert seen_root_x

    def test_deterministic_per_seed(self, tiny_dataset):
        _, interactions = tiny_dataset
        graph = build_interaction_graph(interactions)
        for scheme in ("bfs", "dfs"):
            a = split_traversal(graph, scheme, seed=4)
            b = split_traversal(graph, scheme, seed=4)
            np.testing.assert_array_equal(a.train_idx, b.train_idx)
            np.testing.assert_array_equal(a.val_idx, b.val_idx)
            np.testing.assert_array_equal(a.test_idx, b.test_idx)

    def test_bfs_and_dfs_differ_on_deep_graphs(self):
        rng = np.random.default_rng(0)
        graph = random_interaction_graph(rng, 30, 80)
        bfs = split_traversal(graph, "bfs", seed=3)
        dfs = split_traversal(graph, "dfs", seed=3)
        assert set(bfs.train_idx.tolist()) != set(dfs.train_idx.tolist())

    def test_no_test_pair_has_both_endpoints_trained(self):
        # the defining property of traversal splits, over many random graphs
        for trial in range(50):
            rng = np.random.default_rng(1000 + trial)
            n_proteins = int(rng.integers(12, 40))
            max_pairs = n_proteins * (n_proteins - 1) // 2
            n_pairs = int(rng.integers(n_proteins, min(3 * n_proteins, max_pairs)))
            graph = random_interaction_graph(rng, n_proteins, n_pairs)
            scheme = "bfs" if trial % 2 == 0 else "dfs"
            split = split_traversal(graph, scheme, seed=trial)
            tags = classify_subsets(split, graph)
            assert "BS" not in tags
            train, val, test = split.sizes()
            quota = int(np.floor(0.4 * n_pairs))
            assert train == n_pairs - quota
            assert val + test == quota
            assert abs(val - test) <= 1

    def test_invalid_scheme_rejected(self, tiny_dataset):
        _, interactions = tiny_dataset
        graph = build_interaction_graph(interactions)
        with pytest.raises(ValueError, match="bfs"):
            split_traversal(graph, "random", seed=0)


class TestClassifySubsets:
    def test_one_endpoint_seen(self):
        graph = graph_from_pairs([("A", "B"), ("A", "C")])
        split = SplitSpec(train_idx=[0], val_idx=[], test_idx=[1],
                          scheme="random", seed=0)
        assert classify_subsets(split, graph) == ["ES"]

    def test_neither_endpoint_seen(self):
        graph = graph_from_pairs([("A", "B"), ("C", "D")])
        split = SplitSpec(train_idx=[0], val_idx=[], test_idx=[1],
                          scheme="random", seed=0)
        assert classify_subsets(split, graph) == ["NS"]

    def test_both_endpoints_seen(self):
        graph = graph_from_pairs([("A", "B"), ("B", "C"), ("A", "C")])
        split = SplitSpec(train_idx=[0, 1], val_idx=[], test_idx=[2],
                          scheme="random", seed=0)
        assert classify_subsets(split, graph) == ["BS"]

    def test_invariant_to_training_order(self):
        rng = np.random.default_rng(7)
        graph = random_interaction_graph(rng, 15, 30)
        split = split_random(30, seed=2)
        shuffled = SplitSpec(
            train_idx=split.train_idx[::-1].copy(), val_idx=split.val_idx,
            test_idx=split.test_idx, scheme="random", seed=2,
        )
        assert classify_subsets(split, graph) == classify_subsets(shuffled, graph)


class TestSplitIo:
    def test_json_roundtrip(self, tmp_path):
        split = split_random(20, seed=5)
        path = tmp_path / "split.json"
        split.to_json(path)
        loaded = SplitSpec.from_json(path)
        assert loaded.scheme == "random" and loaded.seed == 5
        np.testing.assert_array_equal(loaded.train_idx, split.train_idx)
        np.testing.assert_array_equal(loaded.val_idx, split.val_idx)
        np.testing.assert_array_equal(loaded.test_idx, split.test_idx)
