import json

import numpy as np
import pytest

from ppilearn.data import (
    CANONICAL_AMINO_ACIDS,
    INTERACTION_TYPES,
    AminoAcidPropertyTable,
    InteractionRecord,
    ParseError,
    ProteinRecord,
    ResidueFeatureScaler,
    ValidationError,
    featurize,
    load_ppi,
    load_proteins,
    save_ppi,
    save_proteins,
)

# Pin of the shipped property fixture; bump deliberately when the table changes.
TABLE_HASH = "0e0aac55686bcb89ea31cbf5bd967c946ca094ab39a0e4a8a616a3f78169d0b1"


class TestPropertyTable:
    def test_covers_all_twenty_amino_acids(self, table):
        mat = table.as_matrix()
        assert mat.shape == (20, 7)
        assert np.all(np.isfinite(mat))

    def test_fixture_is_hash_pinned(self, table):
        assert table.version == "2025.1"
        assert table.content_hash() == TABLE_HASH

    def test_rejects_missing_letters(self):
        values = {a: [0.0] * 7 for a in CANONICAL_AMINO_ACIDS[:-1]}
        with pytest.raises(ValidationError, match="20 canonical"):
            AminoAcidPropertyTable(values, ["c"] * 7)

    def test_rejects_wrong_width(self):
        values = {a: [0.0] * 6 for a in CANONICAL_AMINO_ACIDS}
        with pytest.raises(ValidationError):
            AminoAcidPropertyTable(values, ["c"] * 7)


class TestProteinRecord:
    def test_length_mismatch_names_protein(self):
        with pytest.raises(ValidationError, match="PX"):
            ProteinRecord(id="PX", sequence="GAV", coords=np.zeros((2, 3)))

    def test_non_canonical_letter_names_position(self):
        with pytest.raises(ValidationError, match="position 1"):
            ProteinRecord(id="PX", sequence="GXG", coords=np.zeros((3, 3)))

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValidationError, match="empty"):
            ProteinRecord(id="PX", sequence="", coords=np.zeros((0, 3)))


class TestLoadProteins:
    def test_minimal_file(self, tmp_path):
        path = tmp_path / "proteins.jsonl"
        path.write_text(json.dumps({
            "id": "P1", "sequence": "GA",
            "coords": [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
        }) + "\n")
        records = load_proteins(path)
        assert len(records) == 1
        assert records[0].n_residues == 2

    def test_empty_file_gives_empty_list(self, tmp_path):
        path = tmp_path / "proteins.jsonl"
        path.write_text("")
        assert load_proteins(path) == []

    def test_coordinate_mismatch_is_validation_error(self, tmp_path):
        path = tmp_path / "proteins.jsonl"
        path.write_text(json.dumps({
            "id": "P1", "sequence": "GAV", "coords": [[0, 0, 0], [1, 0, 0]],
        }) + "\n")
        with pytest.raises(ValidationError, match="P1"):
            load_proteins(path)

    def test_malformed_line_names_line_number(self, tmp_path):
        path = tmp_path / "proteins.jsonl"
        path.write_text('{"id": "P1", "sequence": "G", "coords": [[0,0,0]]}\n{broken\n')
        with pytest.raises(ParseError, match="line 2"):
            load_proteins(path)

    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        records = [
            ProteinRecord(id=f"P{i}", sequence="GAVL",
                          coords=rng.normal(size=(4, 3)))
            for i in range(3)
        ]
        path = tmp_path / "proteins.jsonl"
        save_proteins(path, records)
        loaded = load_proteins(path)
        assert [r.id for r in loaded] == ["P0", "P1", "P2"]
        np.testing.assert_allclose(loaded[1].coords, records[1].coords)


class TestLoadPpi:
    def write(self, tmp_path, rows):
        path = tmp_path / "ppi.tsv"
        lines = ["protein_a\tprotein_b\ttype"] + [f"{a}\t{b}\t{t}" for a, b, t in rows]
        path.write_text("\n".join(lines) + "\n")
        return path

    def test_undirected_merge(self, tmp_path):
        path = self.write(tmp_path, [("P1", "P2", "binding"), ("P2", "P1", "reaction")])
        records = load_ppi(path)
        assert len(records) == 1
        assert records[0].key == ("P1", "P2")
        assert records[0].types == {"binding", "reaction"}

    def test_self_interaction_rejected(self, tmp_path):
        path = self.write(tmp_path, [("P1", "P1", "binding")])
        with pytest.raises(ValidationError, match="self-interaction"):
            load_ppi(path)

    def test_unknown_type_lists_valid_types(self, tmp_path):
        path = self.write(tmp_path, [("P1", "P2", "fusion")])
        with pytest.raises(ValidationError, match="reaction"):
            load_ppi(path)

    def test_no_duplicate_pairs_and_type_counts_preserved(self, tmp_path):
        rows = [("P1", "P2", "binding"), ("P2", "P3", "catalysis"),
                ("P2", "P1", "binding"), ("P1", "P2", "activation")]
        records = load_ppi(self.write(tmp_path, rows))
        keys = [r.key for r in records]
        assert len(keys) == len(set(keys))
        # deduplicated type assignments: (P1,P2) x {binding, activation}, (P2,P3) x {catalysis}
        assert sum(len(r.types) for r in records) == 3

    def test_roundtrip(self, tmp_path):
        records = [
            InteractionRecord("P1", "P2", frozenset({"binding", "ptmod"})),
            InteractionRecord("P2", "P3", frozenset({"expression"})),
        ]
        path = tmp_path / "ppi.tsv"
        save_ppi(path, records)
        loaded = load_ppi(path)
        assert {r.key: r.types for r in loaded} == {r.key: r.types for r in records}


class TestFeaturize:
    def test_identical_residues_identical_rows(self, table):
        mat = featurize("GG", table)
        assert mat.shape == (2, 7)
        np.testing.assert_array_equal(mat[0], mat[1])

    def test_row_count_equals_length(self, table):
        for length in (1, 5, 17):
            seq = (CANONICAL_AMINO_ACIDS * 2)[:length]
            assert featurize(seq, table).shape == (length, 7)

    def test_rows_come_from_table(self, table):
        mat = featurize("AR", table)
        np.testing.assert_array_equal(mat[0], table.row("A"))
        np.testing.assert_array_equal(mat[1], table.row("R"))

    def test_non_canonical_letter_names_position(self, table):
        with pytest.raises(ValidationError, match="position 1"):
            featurize("GXG", table)

    def test_repeated_calls_bit_identical(self, table):
        scaler = ResidueFeatureScaler()
        scaler.fit([ProteinRecord("P", "ACDEFGHIKLMNPQRSTVWY",
                                  np.zeros((20, 3)))], table)
        a = featurize("AGAG", table, scaler)
        b = featurize("AGAG", table, scaler)
        np.testing.assert_array_equal(a, b)


class TestScaler:
    def test_training_statistics_standardize_training_rows(self, table):
        rec = ProteinRecord("P", CANONICAL_AMINO_ACIDS, np.zeros((20, 3)))
        scaler = ResidueFeatureScaler().fit([rec], table)
        mat = featurize(rec.sequence, table, scaler)
        np.testing.assert_allclose(mat.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(mat.std(axis=0), 1.0, atol=1e-12)

    def test_zero_variance_column_left_unscaled(self, table):
        rec = ProteinRecord("P", "AAAA", np.zeros((4, 3)))
        scaler = ResidueFeatureScaler().fit([rec], table)
        assert np.all(scaler.std_ == 1.0)

    def test_serialization_roundtrip(self, table):
        rec = ProteinRecord("P", "AGAVR", np.zeros((5, 3)))
        scaler = ResidueFeatureScaler().fit([rec], table)
        clone = ResidueFeatureScaler.from_dict(scaler.to_dict())
        mat = featurize("AR", table, scaler)
        np.testing.assert_array_equal(mat, featurize("AR", table, clone))


def test_interaction_types_fixed_order():
    assert INTERACTION_TYPES == ("reaction", "binding", "ptmod", "activation",
                                 "inhibition", "catalysis", "expression")
