import numpy as np
import pytest

from oracles import structure_edges_reference
from ppilearn.data import InteractionRecord, ProteinRecord, ValidationError
from ppilearn.graphs import (
    EdgeList,
    build_interaction_graph,
    build_structure_graph,
    graph_cache_key,
    knn_neighbor_indices,
    load_graph_cache,
    save_graph_cache,
)

from conftest import random_protein


def collinear_protein(n, spacing=1.0):
    coords = np.zeros((n, 3))
    coords[:, 0] = np.arange(n) * spacing
    return ProteinRecord(id="LINE", sequence="G" * n, coords=coords)


class TestEdgeList:
    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="equal length"):
            EdgeList(np.array([0, 1]), np.array([0]))

    def test_out_of_range_rejected(self):
        edges = EdgeList(np.array([0, 3]), np.array([1, 0]))
        with pytest.raises(ValueError, match="out of range"):
            edges.validate(3)

    def test_from_pairs_deduplicates_and_sorts(self):
        edges = EdgeList.from_pairs([(2, 1), (0, 1), (2, 1)])
        assert edges.pairs() == {(0, 1), (2, 1)}
        assert edges.sources.tolist() == [0, 2]


class TestStructureGraph:
    def test_three_collinear_residues(self, table):
        # residues at x = 0, 1, 2 A; radius 1.5; k = 1. Residue 1 is tied
        # between its two unit-distance neighbours and takes index 0.
        graph = build_structure_graph(collinear_protein(3), table, radius=1.5, k=1)
        expected = {(0, 1), (1, 0), (1, 2), (2, 1)}
        assert graph.edges_seq.pairs() == expected
        assert graph.edges_rad.pairs() == expected
        assert graph.edges_knn.pairs() == expected

    def test_tiny_radius_gives_empty_radial_set(self, table):
        graph = build_structure_graph(collinear_protein(4), table, radius=1e-4, k=1)
        assert len(graph.edges_rad) == 0

    def test_two_residues_knn_equals_seq(self, table):
        graph = build_structure_graph(collinear_protein(2), table, radius=5.0, k=1)
        assert graph.edges_knn.pairs() == {(0, 1), (1, 0)} == graph.edges_seq.pairs()

    def test_k_too_large_rejected(self, table):
        with pytest.raises(ValueError, match="k must satisfy"):
            build_structure_graph(collinear_protein(3), table, radius=1.0, k=3)

    def test_radius_must_be_positive(self, table):
        with pytest.raises(ValueError, match="radius"):
            build_structure_graph(collinear_protein(3), table, radius=0.0, k=1)

    def test_no_self_loops(self, table):
        rng = np.random.default_rng(5)
        graph = build_structure_graph(random_protein(rng, 15), table, radius=4.0, k=3)
        for edges in (graph.edges_seq, graph.edges_rad, graph.edges_knn):
            assert np.all(edges.sources != edges.targets)

    def test_matches_brute_force_reference(self, table):
        for seed in range(8):
            rng = np.random.default_rng(seed)
            m = int(rng.integers(4, 20))
            record = random_protein(rng, m, pid=f"R{seed}")
            radius = float(rng.uniform(1.0, 6.0))
            k = int(rng.integers(1, min(m, 5)))
            graph = build_structure_graph(record, table, radius=radius, k=k)
            seq, rad, knn = structure_edges_reference(record.coords, radius, k)
            assert graph.edges_seq.pairs() == seq
            assert graph.edges_rad.pairs() == rad
            assert graph.edges_knn.pairs() == knn

    def test_radial_set_symmetric(self, table):
        rng = np.random.default_rng(9)
        graph = build_structure_graph(random_protein(rng, 12), table, radius=4.0, k=2)
        assert graph.edges_rad.is_symmetric()
        assert graph.edges_knn.is_symmetric()

    def test_knn_out_degree_before_symmetrization(self, table):
        rng = np.random.default_rng(10)
        record = random_protein(rng, 14)
        for k in (1, 3, 5):
            neighbors = knn_neighbor_indices(record.coords, k)
            assert all(len(n) == k for n in neighbors)

    def test_monotonicity_in_radius_and_k(self, table):
        rng = np.random.default_rng(3)
        record = random_protein(rng, 12)
        small = build_structure_graph(record, table, radius=3.0, k=2)
        large = build_structure_graph(record, table, radius=6.0, k=4)
        assert small.edges_rad.pairs() <= large.edges_rad.pairs()
        knn_small = {(i, int(j)) for i, ns in enumerate(knn_neighbor_indices(record.coords, 2))
                     for j in ns}
        knn_large = {(i, int(j)) for i, ns in enumerate(knn_neighbor_indices(record.coords, 4))
                     for j in ns}
        assert knn_small <= knn_large


class TestInteractionGraph:
    def records(self):
        return [
            InteractionRecord("A", "B", frozenset({"binding"})),
            InteractionRecord("B", "C", frozenset({"reaction", "catalysis"})),
        ]

    def test_nodes_and_directed_edges(self):
        graph = build_interaction_graph(self.records())
        assert graph.n_proteins == 3
        assert len(graph.edges) == 4
        assert graph.edges.is_symmetric()

    def test_empty_record_list_keeps_isolated_nodes(self):
        graph = build_interaction_graph([], protein_ids=["A", "B"])
        assert graph.n_proteins == 2
        assert graph.n_pairs == 0
        assert len(graph.edges) == 0

    def test_missing_pooled_vector_names_protein(self):
        pooled = {"A": np.zeros(4), "B": np.zeros(4)}
        with pytest.raises(ValidationError, match="'C'"):
            build_interaction_graph(self.records(), pooled=pooled)

    def test_labels_align_with_record_order(self):
        graph = build_interaction_graph(self.records())
        assert graph.labels[0].sum() == 1
        assert graph.labels[1].sum() == 2

    def test_duplicate_pair_rejected(self):
        records = self.records() + [InteractionRecord("B", "A", frozenset({"ptmod"}))]
        with pytest.raises(ValidationError, match="duplicate"):
            build_interaction_graph(records)

    def test_node_feature_row_count_checked(self):
        pooled = {pid: np.ones(3) for pid in "ABC"}
        graph = build_interaction_graph(self.records(), pooled=pooled)
        assert graph.node_features.shape == (3, 3)


class TestGraphCache:
    def test_roundtrip_and_key_check(self, tmp_path, table):
        rng = np.random.default_rng(2)
        graphs = [build_structure_graph(random_protein(rng, 8, pid=f"P{i}"), table,
                                        radius=4.0, k=2) for i in range(3)]
        save_graph_cache(tmp_path, graphs, radius=4.0, k=2,
                         table_hash=table.content_hash())
        key = graph_cache_key(4.0, 2, table.content_hash())
        loaded, manifest = load_graph_cache(tmp_path, expected_key=key)
        assert manifest["cache_key"] == key
        assert [g.protein_id for g in loaded] == ["P0", "P1", "P2"]
        np.testing.assert_array_equal(loaded[1].features, graphs[1].features)
        assert loaded[2].edges_knn.pairs() == graphs[2].edges_knn.pairs()

    def test_wrong_key_rejected(self, tmp_path, table):
        rng = np.random.default_rng(2)
        graphs = [build_structure_graph(random_protein(rng, 8), table, radius=4.0, k=2)]
        save_graph_cache(tmp_path, graphs, radius=4.0, k=2, table_hash="t")
        with pytest.raises(ValidationError, match="different settings"):
            load_graph_cache(tmp_path, expected_key="not-the-key")
