"""Graph perturbation views and the multi-view contrastive objective.

Two independently perturbed copies of the interaction graph are produced per
training step: node perturbation zeroes feature entries element-wise with a
given probability, edge perturbation rewires a fixed fraction of edge slots
to uniformly random endpoints. Each view is encoded with the same (shared)
encoder, and an InfoNCE-style loss pulls a protein's two encodings together
while pushing apart encodings of different proteins. The denominator ranges
over cross-view negatives only and excludes the positive term, so the loss
can go negative when the positive similarity dominates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .graphs import EdgeList
from .validation import check_rate


@dataclass(frozen=True)
class PerturbSpec:
    """Perturbation settings for one view.

    One rate normally drives both node and edge perturbation; distinct rates
    are accepted for ablations that disable only one of the two.
    """

    node_rate: float
    edge_rate: float
    seed: int

    @classmethod
    def uniform(cls, rate: float, seed: int) -> "PerturbSpec":
        return cls(node_rate=rate, edge_rate=rate, seed=seed)


@dataclass
class PerturbedView:
    """One perturbed copy of the graph plus the provenance of its changes."""

    features: np.ndarray
    edges: EdgeList
    spec: PerturbSpec
    zero_mask: np.ndarray
    rewired_slots: np.ndarray


def perturb_nodes(features: np.ndarray, rate: float, seed: int):
    """Zero each feature entry independently with probability ``rate``.

    Returns the perturbed matrix and the 0/1 keep-mask. A rate of zero is an
    exact identity.
    """
    check_rate(rate, "node perturb rate")
    features = np.asarray(features, dtype=np.float64)
    rng = np.random.default_rng(seed)
    keep = (rng.random(features.shape) >= rate).astype(np.float64)
    return features * keep, keep


def perturb_edges(edges: EdgeList, n_nodes: int, rate: float, seed: int):
    """Rewire floor(rate * E) distinct edge slots to random endpoints.

    For each sampled slot the source and target are resampled independently
    and uniformly from the node indices; self-loops and duplicates that
    arise are kept. All other slots are bit-identical to the input.
    """
    check_rate(rate, "edge perturb rate")
    n_edges = len(edges)
    n_rewire = int(np.floor(rate * n_edges))
    sources = edges.sources.copy()
    targets = edges.targets.copy()
    rng = np.random.default_rng(seed)
    if n_rewire == 0:
        return EdgeList(sources, targets), np.empty(0, dtype=np.int64)
    slots = np.sort(rng.choice(n_edges, size=n_rewire, replace=False))
    sources[slots] = rng.integers(0, n_nodes, size=n_rewire)
    targets[slots] = rng.integers(0, n_nodes, size=n_rewire)
    return EdgeList(sources, targets), slots


def make_view(features: np.ndarray, edges: EdgeList, n_nodes: int,
              spec: PerturbSpec) -> PerturbedView:
    """Apply node and edge perturbation with seeds derived from the spec."""
    perturbed, keep = perturb_nodes(features, spec.node_rate, seed=spec.seed)
    new_edges, slots = perturb_edges(edges, n_nodes, spec.edge_rate,
                                     seed=spec.seed + 1)
    return PerturbedView(features=perturbed, edges=new_edges, spec=spec,
                         zero_mask=keep, rewired_slots=slots)


def encode_views(module, views) -> tuple:
    """Encode each perturbed view with the identical (shared) module."""
    out = []
    for view in views:
        src = torch.as_tensor(view.edges.sources)
        dst = torch.as_tensor(view.edges.targets)
        feats = torch.as_tensor(np.asarray(view.features), dtype=torch.float64)
        out.append(module.encode(feats, src, dst))
    return tuple(out)


def info_nce(anchor: torch.Tensor, positive: torch.Tensor,
             temperature: float) -> torch.Tensor:
    """Cross-view contrastive loss.

    Row i is -log( exp(<a_i, p_i>/t) / sum_{j != i} exp(<a_i, p_j>/t) ),
    averaged over rows. Exponentials are stabilized by subtracting each
    row's maximum similarity, which cancels in the ratio.
    """
    if anchor.shape != positive.shape:
        raise ValueError(
            f"shape mismatch: {tuple(anchor.shape)} vs {tuple(positive.shape)}"
        )
    n = anchor.shape[0]
    if n < 2:
        raise ValueError(f"contrastive loss needs at least 2 rows, got {n}")
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    sims = anchor @ positive.T / temperature
    log_num = torch.diagonal(sims)
    eye = torch.eye(n, dtype=torch.bool)
    log_den = torch.logsumexp(sims.masked_fill(eye, -torch.inf), dim=1)
    return -(log_num - log_den).mean()


def contrastive_total(loss_alpha: torch.Tensor, loss_beta: torch.Tensor) -> torch.Tensor:
    """Sum of the two per-view contrastive losses."""
    return loss_alpha + loss_beta


def training_loss(loss_classification, loss_contrastive, contrastive_weight: float):
    """Stage-2 objective: classification loss plus weighted contrastive loss.

    The L2 penalty on the parameters is realized as decoupled weight decay
    in the optimizer, not as a loss term.
    """
    return loss_classification + contrastive_weight * loss_contrastive
