"""Construction of residue structure graphs and the protein interaction graph.

A structure graph connects the residues of one protein through three typed
edge sets: sequential neighbours along the chain, radial contacts within a
distance cutoff, and symmetrized k-nearest neighbours. The interaction graph
connects proteins through their known pairwise interactions and carries the
multi-hot label matrix for the undirected pair list.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import (
    N_INTERACTION_TYPES,
    N_RESIDUE_FEATURES,
    AminoAcidPropertyTable,
    InteractionRecord,
    ProteinRecord,
    ResidueFeatureScaler,
    ValidationError,
    featurize,
)
from .validation import as_float_matrix, as_index_array

EDGE_TYPES = ("seq", "rad", "knn")


@dataclass
class EdgeList:
    """Directed edges as parallel source/target index arrays."""

    sources: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.sources = as_index_array(self.sources, "sources")
        self.targets = as_index_array(self.targets, "targets")
        if self.sources.shape != self.targets.shape:
            raise ValueError(
                f"sources and targets must have equal length, got "
                f"{len(self.sources)} and {len(self.targets)}"
            )

    def __len__(self) -> int:
        return len(self.sources)

    def validate(self, node_count: int) -> None:
        if len(self) and (
            self.sources.min() < 0 or self.sources.max() >= node_count
            or self.targets.min() < 0 or self.targets.max() >= node_count
        ):
            raise ValueError(f"edge indices out of range for {node_count} nodes")

    def pairs(self) -> set:
        return set(zip(self.sources.tolist(), self.targets.tolist()))

    def is_symmetric(self) -> bool:
        p = self.pairs()
        return all((j, i) in p for i, j in p)

    def shifted(self, offset: int) -> "EdgeList":
        return EdgeList(self.sources + offset, self.targets + offset)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple]) -> "EdgeList":
        pairs = sorted(set(pairs))
        if not pairs:
            return cls.empty()
        src, dst = zip(*pairs)
        return cls(np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64))

    @classmethod
    def empty(cls) -> "EdgeList":
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))

    @classmethod
    def concat(cls, edge_lists: Sequence["EdgeList"]) -> "EdgeList":
        if not edge_lists:
            return cls.empty()
        return cls(
            np.concatenate([e.sources for e in edge_lists]),
            np.concatenate([e.targets for e in edge_lists]),
        )


@dataclass
class ProteinStructureGraph:
    """Residue-level graph of one protein with three typed edge sets."""

    protein_id: str
    features: np.ndarray
    edges_seq: EdgeList
    edges_rad: EdgeList
    edges_knn: EdgeList

    def __post_init__(self):
        self.features = as_float_matrix(self.features, "features", n_cols=N_RESIDUE_FEATURES)
        for edges in (self.edges_seq, self.edges_rad, self.edges_knn):
            edges.validate(self.n_residues)

    @property
    def n_residues(self) -> int:
        return self.features.shape[0]

    def edges_by_type(self) -> dict:
        return {"seq": self.edges_seq, "rad": self.edges_rad, "knn": self.edges_knn}


def knn_neighbor_indices(coords: np.ndarray, k: int) -> list:
    """For each residue, the indices of its k nearest other residues.

    Ties in distance are broken toward the lower residue index, which keeps
    graph construction deterministic for duplicate coordinates.
    """
    coords = np.asarray(coords, dtype=np.float64)
    m = coords.shape[0]
    if not 1 <= k < m:
        raise ValueError(f"k must satisfy 1 <= k < {m}, got {k}")
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    neighbors = []
    for i in range(m):
        order = np.argsort(dist[i], kind="stable")
        order = order[order != i]
        neighbors.append(order[:k])
    return neighbors


def build_structure_graph(record: ProteinRecord, table: AminoAcidPropertyTable,
                          radius: float = 10.0, k: int = 5,
                          scaler: ResidueFeatureScaler | None = None) -> ProteinStructureGraph:
    """Build the three typed residue edge sets from one protein's coordinates.

    Sequential edges connect chain neighbours (i, i+1) in both directions.
    Radial edges connect every ordered residue pair within ``radius``
    angstroms. KNN edges connect each residue with its ``k`` nearest
    neighbours and are symmetrized so message passing sees both directions.
    No edge set contains self-loops.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    m = record.n_residues
    if not 1 <= k < m:
        raise ValueError(
            f"protein {record.id!r}: k must satisfy 1 <= k < {m} residues, got {k}"
        )
    features = featurize(record.sequence, table, scaler=scaler)

    seq_pairs = [(i, i + 1) for i in range(m - 1)] + [(i + 1, i) for i in range(m - 1)]

    diff = record.coords[:, None, :] - record.coords[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    within = (dist <= radius) & ~np.eye(m, dtype=bool)
    rad_pairs = list(zip(*np.nonzero(within)))

    knn_pairs = set()
    for i, neigh in enumerate(knn_neighbor_indices(record.coords, k)):
        for j in neigh.tolist():
            knn_pairs.add((i, j))
            knn_pairs.add((j, i))

    return ProteinStructureGraph(
        protein_id=record.id,
        features=features,
        edges_seq=EdgeList.from_pairs(seq_pairs),
        edges_rad=EdgeList.from_pairs(rad_pairs),
        edges_knn=EdgeList.from_pairs(knn_pairs),
    )


@dataclass
class ProteinInteractionGraph:
    """Protein-level graph over the known interaction pairs.

    ``pairs`` is the undirected pair list (rows of protein indices, first
    index lower); ``labels`` is the aligned multi-hot type matrix; ``edges``
    stores each pair as two directed edges. ``node_features`` holds pooled
    protein representations once stage 1 has produced them and may be None
    for topology-only uses such as splitting.
    """

    protein_ids: tuple
    pairs: np.ndarray
    labels: np.ndarray
    edges: EdgeList = field(default=None)
    node_features: np.ndarray | None = None

    def __post_init__(self):
        self.protein_ids = tuple(self.protein_ids)
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (len(self.pairs), N_INTERACTION_TYPES):
            raise ValidationError(
                f"labels must be {len(self.pairs)}x{N_INTERACTION_TYPES}, got "
                f"{self.labels.shape}"
            )
        if len(self.pairs) and not np.all(self.labels.sum(axis=1) >= 1):
            raise ValidationError("every pair must carry at least one interaction type")
        if self.edges is None:
            self.edges = EdgeList(
                np.concatenate([self.pairs[:, 0], self.pairs[:, 1]]),
                np.concatenate([self.pairs[:, 1], self.pairs[:, 0]]),
            ) if len(self.pairs) else EdgeList.empty()
        self.edges.validate(self.n_proteins)
        if self.node_features is not None:
            self.node_features = np.asarray(self.node_features, dtype=np.float64)
            if self.node_features.shape[0] != self.n_proteins:
                raise ValidationError(
                    f"node_features has {self.node_features.shape[0]} rows for "
                    f"{self.n_proteins} proteins"
                )

    @property
    def n_proteins(self) -> int:
        return len(self.protein_ids)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def index_of(self, protein_id: str) -> int:
        return self.protein_ids.index(protein_id)

    def adjacency(self) -> list:
        """Sorted neighbour lists, one per protein."""
        neigh = [set() for _ in range(self.n_proteins)]
        for i, j in self.pairs:
            neigh[i].add(int(j))
            neigh[j].add(int(i))
        return [sorted(s) for s in neigh]

    def pairs_by_protein(self) -> list:
        """Indices of the pairs incident to each protein, in pair order."""
        incident = [[] for _ in range(self.n_proteins)]
        for idx, (i, j) in enumerate(self.pairs):
            incident[int(i)].append(idx)
            incident[int(j)].append(idx)
        return incident

    def with_node_features(self, pooled: Mapping[str, np.ndarray]) -> "ProteinInteractionGraph":
        """Return a copy with pooled per-protein vectors attached."""
        missing = [pid for pid in self.protein_ids if pid not in pooled]
        if missing:
            raise ValidationError(f"missing pooled vector for protein {missing[0]!r}")
        feats = np.stack([np.asarray(pooled[pid], dtype=np.float64) for pid in self.protein_ids])
        return ProteinInteractionGraph(
            protein_ids=self.protein_ids,
            pairs=self.pairs.copy(),
            labels=self.labels.copy(),
            edges=EdgeList(self.edges.sources.copy(), self.edges.targets.copy()),
            node_features=feats,
        )


def build_interaction_graph(records: Sequence[InteractionRecord],
                            pooled: Mapping[str, np.ndarray] | None = None,
                            protein_ids: Sequence[str] | None = None) -> ProteinInteractionGraph:
    """Assemble the interaction graph from merged pair records.

    Node order is the sorted set of protein ids (optionally extended by
    ``protein_ids`` so isolated proteins keep a node). Labels follow the
    record order. When ``pooled`` is given, every referenced protein must
    have a vector; otherwise the graph is topology-only.
    """
    ids = set(protein_ids or [])
    for rec in records:
        ids.add(rec.protein_a)
        ids.add(rec.protein_b)
    ordered = tuple(sorted(ids))
    index = {pid: i for i, pid in enumerate(ordered)}

    pair_rows = []
    label_rows = []
    seen = set()
    for rec in records:
        i, j = sorted((index[rec.protein_a], index[rec.protein_b]))
        if (i, j) in seen:
            raise ValidationError(
                f"duplicate unordered pair ({rec.protein_a!r}, {rec.protein_b!r})"
            )
        seen.add((i, j))
        pair_rows.append((i, j))
        label_rows.append(rec.type_vector())

    pairs = np.array(pair_rows, dtype=np.int64).reshape(-1, 2)
    labels = (np.stack(label_rows) if label_rows
              else np.zeros((0, N_INTERACTION_TYPES), dtype=np.int64))
    graph = ProteinInteractionGraph(protein_ids=ordered, pairs=pairs, labels=labels)
    if pooled is not None:
        graph = graph.with_node_features(pooled)
    return graph


# ---------------------------------------------------------------------------
# Structure-graph cache
# ---------------------------------------------------------------------------

def graph_cache_key(radius: float, k: int, table_hash: str) -> str:
    payload = json.dumps({"radius": radius, "k": k, "table": table_hash}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_graph_cache(dirpath, graphs: Sequence[ProteinStructureGraph],
                     radius: float, k: int, table_hash: str,
                     scaler: ResidueFeatureScaler | None = None) -> None:
    """Persist one npz per protein plus a manifest keyed by the build settings."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    manifest = {
        "cache_key": graph_cache_key(radius, k, table_hash),
        "radius": radius,
        "k": k,
        "table_hash": table_hash,
        "protein_ids": [g.protein_id for g in graphs],
        "scaler": scaler.to_dict() if scaler is not None else None,
    }
    with open(dirpath / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
    for g in graphs:
        np.savez(
            dirpath / f"{g.protein_id}.npz",
            features=g.features,
            seq_src=g.edges_seq.sources, seq_dst=g.edges_seq.targets,
            rad_src=g.edges_rad.sources, rad_dst=g.edges_rad.targets,
            knn_src=g.edges_knn.sources, knn_dst=g.edges_knn.targets,
        )


def load_graph_cache(dirpath, expected_key: str | None = None):
    """Load a cache directory; returns (graphs, manifest)."""
    dirpath = Path(dirpath)
    with open(dirpath / "manifest.json") as fh:
        manifest = json.load(fh)
    if expected_key is not None and manifest["cache_key"] != expected_key:
        raise ValidationError(
            f"graph cache at {dirpath} was built with different settings "
            f"(key {manifest['cache_key']}, expected {expected_key})"
        )
    graphs = []
    for pid in manifest["protein_ids"]:
        with np.load(dirpath / f"{pid}.npz") as z:
            graphs.append(ProteinStructureGraph(
                protein_id=pid,
                features=z["features"],
                edges_seq=EdgeList(z["seq_src"], z["seq_dst"]),
                edges_rad=EdgeList(z["rad_src"], z["rad_dst"]),
                edges_knn=EdgeList(z["knn_src"], z["knn_dst"]),
            ))
    return graphs, manifest
