import numpy as np
import pytest

from ppilearn.data import AminoAcidPropertyTable, ProteinRecord
from ppilearn.graphs import build_structure_graph
from ppilearn.synth import make_synthetic_dataset


@pytest.fixture(scope="session")
def table():
    return AminoAcidPropertyTable.default()


@pytest.fixture(scope="session")
def tiny_dataset():
    """10 proteins / 18 pairs, enough for split and stage-2 tests."""
    return make_synthetic_dataset(n_proteins=10, n_pairs=18, seed=11)


@pytest.fixture(scope="session")
def tiny_graphs(tiny_dataset, table):
    proteins, _ = tiny_dataset
    return [build_structure_graph(p, table, radius=10.0, k=3) for p in proteins]


def random_protein(rng: np.random.Generator, length: int, pid: str = "P") -> ProteinRecord:
    from ppilearn.data import CANONICAL_AMINO_ACIDS

    seq = "".join(rng.choice(list(CANONICAL_AMINO_ACIDS), size=length))
    coords = np.cumsum(rng.normal(size=(length, 3)), axis=0) * 2.0
    return ProteinRecord(id=pid, sequence=seq, coords=coords)
