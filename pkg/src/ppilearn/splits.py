"""Train/val/test partitioning of interaction pairs.

Three schemes: a uniform random 3:1:1 cut, and breadth-first / depth-first
protein traversals that hold out the pairs touched by the visited proteins.
Traversal splits yield test sets whose pairs never have both endpoints
inside the training pair set, which is the harder generalization setting.
Test pairs are further tagged BS / ES / NS according to whether both, one,
or neither of their proteins occurs in a training pair.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .graphs import ProteinInteractionGraph
from .validation import as_index_array

SCHEMES = ("random", "bfs", "dfs")

SUBSET_BOTH_SEEN = "BS"
SUBSET_ONE_SEEN = "ES"
SUBSET_NONE_SEEN = "NS"


@dataclass
class SplitSpec:
    """Disjoint train/val/test index lists into the undirected pair list."""

    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    scheme: str
    seed: int

    def __post_init__(self):
        self.train_idx = as_index_array(self.train_idx, "train_idx")
        self.val_idx = as_index_array(self.val_idx, "val_idx")
        self.test_idx = as_index_array(self.test_idx, "test_idx")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")

    @property
    def n_pairs(self) -> int:
        return len(self.train_idx) + len(self.val_idx) + len(self.test_idx)

    def sizes(self) -> tuple:
        return (len(self.train_idx), len(self.val_idx), len(self.test_idx))

    def validate(self, pair_count: int) -> None:
        """Check the three lists partition range(pair_count) exactly."""
        merged = np.concatenate([self.train_idx, self.val_idx, self.test_idx])
        if len(merged) != pair_count or len(np.unique(merged)) != pair_count:
            raise ValueError("split does not partition the pair indices")
        if pair_count and (merged.min() < 0 or merged.max() >= pair_count):
            raise ValueError("split contains out-of-range pair indices")

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({
                "scheme": self.scheme,
                "seed": self.seed,
                "train_idx": self.train_idx.tolist(),
                "val_idx": self.val_idx.tolist(),
                "test_idx": self.test_idx.tolist(),
            }, fh)

    @classmethod
    def from_json(cls, path) -> "SplitSpec":
        with open(path) as fh:
            payload = json.load(fh)
        return cls(
            train_idx=payload["train_idx"], val_idx=payload["val_idx"],
            test_idx=payload["test_idx"], scheme=payload["scheme"],
            seed=payload["seed"],
        )


def split_random(pair_count: int, seed: int,
                 fractions: tuple = (0.6, 0.2)) -> SplitSpec:
    """Uniform shuffle cut at floor(0.6 P) and floor(0.8 P)."""
    if pair_count < 5:
        raise ValueError(
            f"need at least 5 pairs to honor a 3:1:1 split, got {pair_count}"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(pair_count)
    cut1 = int(np.floor(fractions[0] * pair_count))
    cut2 = int(np.floor((fractions[0] + fractions[1]) * pair_count))
    return SplitSpec(
        train_idx=perm[:cut1], val_idx=perm[cut1:cut2], test_idx=perm[cut2:],
        scheme="random", seed=seed,
    )


def split_traversal(graph: ProteinInteractionGraph, scheme: str, seed: int,
                    holdout_fraction: float = 0.4) -> SplitSpec:
    """Hold out the pairs reached by a seeded BFS or DFS over proteins.

    Proteins are visited from a random root (neighbours in ascending index
    order; a fresh unvisited root is drawn when a component is exhausted).
    Each newly visited protein contributes its not-yet-held incident pairs
    until floor(holdout_fraction * P) pairs are collected. Held-out pairs
    are split evenly into val and test by a seeded shuffle; all remaining
    pairs form train. Because visited proteins cannot occur in training
    pairs, the test set contains no pair with both endpoints seen in
    training (the few boundary pairs that would violate this when the quota
    cuts a protein's pair list short are routed into val).
    """
    if scheme not in ("bfs", "dfs"):
        raise ValueError(f"scheme must be 'bfs' or 'dfs', got {scheme!r}")
    n_pairs = graph.n_pairs
    quota = int(np.floor(holdout_fraction * n_pairs))
    if quota < 1:
        raise ValueError(
            f"holdout quota is zero for {n_pairs} pairs at fraction {holdout_fraction}"
        )

    rng = np.random.default_rng(seed)
    adjacency = graph.adjacency()
    incident = graph.pairs_by_protein()

    visited = np.zeros(graph.n_proteins, dtype=bool)
    in_held = np.zeros(n_pairs, dtype=bool)
    held: list = []

    def visit(protein: int) -> bool:
        """Mark visited, collect its pairs; True once the quota is reached."""
        visited[protein] = True
        for pair_idx in incident[protein]:
            if in_held[pair_idx]:
                continue
            in_held[pair_idx] = True
            held.append(pair_idx)
            if len(held) >= quota:
                return True
        return False

    done = False
    while not done:
        candidates = np.flatnonzero(~visited)
        if len(candidates) == 0:
            raise ValueError(
                "traversal exhausted all proteins before reaching the holdout quota"
            )
        root = int(rng.choice(candidates))
        frontier = deque([root])
        while frontier and not done:
            protein = frontier.popleft() if scheme == "bfs" else frontier.pop()
            if visited[protein]:
                continue
            done = visit(protein)
            if done:
                break
            neighbors = [n for n in adjacency[protein] if not visited[n]]
            if scheme == "dfs":
                # stack pops from the right; push descending so lower ids pop first
                neighbors = neighbors[::-1]
            frontier.extend(neighbors)

    train_idx = np.flatnonzero(~in_held)

    # Proteins occurring in training pairs. A held-out pair with both
    # endpoints in this set must not land in test (it would be a BS pair).
    trained = np.zeros(graph.n_proteins, dtype=bool)
    if len(train_idx):
        trained[graph.pairs[train_idx].ravel()] = True
    risky = [p for p in held if trained[graph.pairs[p, 0]] and trained[graph.pairs[p, 1]]]
    risky_set = set(risky)
    safe = [p for p in held if p not in risky_set]

    # Risky pairs go to val (never test); they overflow the even split only
    # when the quota cut a high-degree protein's pair list, which random
    # graphs at sensible holdout fractions essentially never hit.
    val_size = max(quota // 2, len(risky))
    shuffled = list(np.array(safe, dtype=np.int64)[rng.permutation(len(safe))])
    n_fill = val_size - len(risky)
    val_idx = np.array(risky + shuffled[:n_fill], dtype=np.int64)
    test_idx = np.array(shuffled[n_fill:], dtype=np.int64)

    spec = SplitSpec(train_idx=train_idx, val_idx=val_idx, test_idx=test_idx,
                     scheme=scheme, seed=seed)
    spec.validate(n_pairs)
    return spec


def classify_subsets(split: SplitSpec, graph: ProteinInteractionGraph) -> list:
    """Tag each test pair BS / ES / NS by training-set protein membership."""
    split.validate(graph.n_pairs)
    trained = set()
    for pair_idx in split.train_idx:
        trained.add(int(graph.pairs[pair_idx, 0]))
        trained.add(int(graph.pairs[pair_idx, 1]))
    tags = []
    for pair_idx in split.test_idx:
        a, b = graph.pairs[pair_idx]
        seen = (int(a) in trained) + (int(b) in trained)
        tags.append({2: SUBSET_BOTH_SEEN, 1: SUBSET_ONE_SEEN, 0: SUBSET_NONE_SEEN}[seen])
    return tags
