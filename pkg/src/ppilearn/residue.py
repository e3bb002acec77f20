"""Stage 1: masked autoencoding of residue structure graphs.

A stack of typed dot-product graph-attention layers encodes each protein's
residue graph; a symmetric stack decodes it back to the seven input
properties. Two objectives share every parameter: a standard reconstruction
loss (mean squared residue distance) and a masked reconstruction loss in
which a sampled subset of residue rows is replaced by a learnable mask
vector and must be recovered (cosine-based, with a configurable power that
re-weights hard rows). Pooling the encoder output over residues yields one
vector per protein, which stage 2 consumes.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from torch import nn

from .data import N_RESIDUE_FEATURES
from .graphs import EDGE_TYPES, ProteinStructureGraph
from .layers import (
    DenseNormBlock,
    TypedGraphAttention,
    derive_seed,
    edge_tensors,
    seeded_module,
    set_dropout_generator,
    to_tensor,
)
from .validation import check_positive_int, check_rate


def reconstruction_loss(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Mean over residues of the squared Euclidean reconstruction distance."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    return ((x - x_hat) ** 2).sum(dim=1).mean()


def masked_cosine_loss(x: torch.Tensor, x_hat: torch.Tensor, power: float,
                       eps: float = 1e-8) -> torch.Tensor:
    """Mean over all residues of (1 - cosine similarity) ** power.

    Norms are clamped from below at ``eps`` so zero-norm rows stay finite;
    nonzero rows are unaffected. The base is clamped at zero to guard the
    fractional power against rounding.
    """
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    dots = (x * x_hat).sum(dim=1)
    norms = x.norm(dim=1).clamp(min=eps) * x_hat.norm(dim=1).clamp(min=eps)
    cos = dots / norms
    return torch.clamp(1.0 - cos, min=0.0).pow(power).mean()


def pretraining_loss(loss_standard, loss_masked, masked_weight: float):
    """Stage-1 objective: standard loss plus weighted masked loss.

    The L2 penalty on the parameters is realized as decoupled weight decay
    in the optimizer, not as a loss term.
    """
    return loss_standard + masked_weight * loss_masked


def apply_mask(features: torch.Tensor, rate: float, rng: np.random.Generator,
               mask_vector: torch.Tensor):
    """Replace round(rate * M) sampled rows by the mask vector.

    Rows are sampled without replacement; the count uses Python's round
    (ties to even). Returns the masked matrix and the sampled row indices.
    """
    check_rate(rate, "mask rate")
    m = features.shape[0]
    n_masked = int(round(rate * m))
    idx = np.sort(rng.choice(m, size=n_masked, replace=False))
    masked = features.clone()
    if n_masked:
        masked[torch.as_tensor(idx, dtype=torch.int64)] = mask_vector
    return masked, idx


def pool_mean(encoded: torch.Tensor) -> torch.Tensor:
    """Protein representation: column-wise mean of the encoded residue rows."""
    if encoded.shape[0] < 1:
        raise ValueError("cannot pool an empty residue matrix")
    return encoded.mean(dim=0)


class _EncoderLayer(nn.Module):
    """One autoencoder layer: typed attention, dense block, residual skip.

    The residue graphs carry no self-loops, so without the skip a residue's
    own features could reach its output only by bouncing off neighbours;
    reconstruction then barely trains. The skip restores the self path.
    """

    def __init__(self, dim: int, heads: int, dropout: float, combine: str):
        super().__init__()
        self.attention = TypedGraphAttention(dim, dim, heads, combine, EDGE_TYPES)
        self.block = DenseNormBlock(dim, dim, dropout)

    def forward(self, x, edges):
        return x + self.block(self.attention(x, edges))


class ResidueAutoencoderModule(nn.Module):
    """Encoder/decoder stacks plus the input/output projections and mask vector."""

    def __init__(self, hidden_dim: int, n_layers: int, n_heads: int, dropout: float):
        super().__init__()
        if n_layers < 1:
            raise ValueError(f"need at least 1 layer, got {n_layers}")
        combine = ["concat"] * (n_layers - 1) + ["mean"]
        self.input_proj = nn.Linear(N_RESIDUE_FEATURES, hidden_dim)
        self.encoder_layers = nn.ModuleList(
            _EncoderLayer(hidden_dim, n_heads, dropout, c) for c in combine
        )
        self.decoder_layers = nn.ModuleList(
            _EncoderLayer(hidden_dim, n_heads, dropout, c) for c in combine
        )
        self.output_proj = nn.Linear(hidden_dim, N_RESIDUE_FEATURES)
        self.mask_vector = nn.Parameter(torch.zeros(N_RESIDUE_FEATURES, dtype=torch.float64))
        self.dropout_generator = torch.Generator()
        set_dropout_generator(self, self.dropout_generator)

    def reseed_dropout(self, seed: int) -> None:
        self.dropout_generator.manual_seed(seed)

    def encode(self, features: torch.Tensor, edges: dict) -> torch.Tensor:
        x = self.input_proj(features)
        for layer in self.encoder_layers:
            x = layer(x, edges)
        return x

    def decode(self, encoded: torch.Tensor, edges: dict) -> torch.Tensor:
        x = encoded
        for layer in self.decoder_layers:
            x = layer(x, edges)
        return self.output_proj(x)

    def reconstruct(self, features: torch.Tensor, edges: dict):
        encoded = self.encode(features, edges)
        return encoded, self.decode(encoded, edges)


def merge_graphs(graphs):
    """Disjoint union of structure graphs for whole-protein batching.

    Returns (features, edges, slices): stacked residue features, per-type
    shifted edge tensors, and the (start, stop) row range of each protein.
    """
    features = []
    slices = []
    shifted = {t: ([], []) for t in EDGE_TYPES}
    offset = 0
    for g in graphs:
        features.append(g.features)
        slices.append((offset, offset + g.n_residues))
        for t, edge_list in g.edges_by_type().items():
            src, dst = edge_tensors(edge_list.shifted(offset))
            shifted[t][0].append(src)
            shifted[t][1].append(dst)
        offset += g.n_residues
    edges = {
        t: (torch.cat(shifted[t][0]) if shifted[t][0] else torch.empty(0, dtype=torch.int64),
            torch.cat(shifted[t][1]) if shifted[t][1] else torch.empty(0, dtype=torch.int64))
        for t in EDGE_TYPES
    }
    return to_tensor(np.concatenate(features)), edges, slices


class ResidueAutoencoder(BaseEstimator, TransformerMixin):
    """Pretrains the residue autoencoder and pools protein embeddings.

    fit() optimizes the combined reconstruction objective over batches of
    whole proteins; transform() returns one pooled vector per input graph,
    computed per protein in evaluation mode. Identical parameters and seed
    give bit-identical training traces on CPU.

    Parameters follow the scikit-learn convention (stored verbatim); fitted
    state lives in ``module_`` and ``loss_log_``.
    """

    def __init__(self, hidden_dim=128, n_layers=4, n_heads=4, dropout=0.2,
                 mask_rate=0.25, scale_factor=1.5, masked_weight=0.5,
                 learning_rate=1e-3, weight_decay=1e-4, n_epochs=50,
                 batch_size=128, max_grad_norm=10.0, seed=0,
                 use_standard_loss=True, use_masked_loss=True, verbose=False):
        self.hidden_dim = hidden_dim
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.dropout = dropout
        self.mask_rate = mask_rate
        self.scale_factor = scale_factor
        self.masked_weight = masked_weight
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.max_grad_norm = max_grad_norm
        self.seed = seed
        self.use_standard_loss = use_standard_loss
        self.use_masked_loss = use_masked_loss
        self.verbose = verbose

    def _build_module(self) -> ResidueAutoencoderModule:
        check_positive_int(self.n_layers, "n_layers")
        check_positive_int(self.n_epochs, "n_epochs")
        check_rate(self.dropout, "dropout")
        check_rate(self.mask_rate, "mask_rate")
        return seeded_module(
            lambda: ResidueAutoencoderModule(
                self.hidden_dim, self.n_layers, self.n_heads, self.dropout
            ),
            derive_seed(self.seed, "stage1", "init"),
        )

    def fit(self, X, y=None):
        """Train on a list of ProteinStructureGraph."""
        graphs = list(X)
        if not graphs:
            raise ValueError("need at least one structure graph to fit")
        self.module_ = self._build_module()
        self.loss_log_ = []
        if not (self.use_standard_loss or self.use_masked_loss):
            # both reconstruction objectives ablated: nothing to optimize,
            # embeddings come from the freshly initialized encoder
            return self

        optimizer = torch.optim.AdamW(
            self.module_.parameters(), lr=self.learning_rate,
            weight_decay=self.weight_decay,
        )
        n = len(graphs)
        batch = max(1, int(self.batch_size))
        for epoch in range(self.n_epochs):
            order = np.random.default_rng(
                derive_seed(self.seed, "stage1", "order", epoch)
            ).permutation(n)
            sums = {"standard": 0.0, "masked": 0.0}
            self.module_.train()
            for b, start in enumerate(range(0, n, batch)):
                chunk = [graphs[i] for i in order[start:start + batch]]
                features, edges, slices = merge_graphs(chunk)
                optimizer.zero_grad()
                loss = features.new_zeros(())
                log_row = {}
                if self.use_standard_loss:
                    self.module_.reseed_dropout(
                        derive_seed(self.seed, "stage1", epoch, b, "standard")
                    )
                    _, x_hat = self.module_.reconstruct(features, edges)
                    l_std = torch.stack([
                        reconstruction_loss(features[a:z], x_hat[a:z])
                        for a, z in slices
                    ]).mean()
                    loss = loss + l_std
                    log_row["standard"] = l_std.item()
                if self.use_masked_loss:
                    mask_rng = np.random.default_rng(
                        derive_seed(self.seed, "stage1", epoch, b, "mask")
                    )
                    masked = features.clone()
                    for a, z in slices:
                        masked[a:z], _ = apply_mask(
                            features[a:z], self.mask_rate, mask_rng,
                            self.module_.mask_vector,
                        )
                    self.module_.reseed_dropout(
                        derive_seed(self.seed, "stage1", epoch, b, "masked")
                    )
                    _, x_ms_hat = self.module_.reconstruct(masked, edges)
                    l_ms = torch.stack([
                        masked_cosine_loss(features[a:z], x_ms_hat[a:z], self.scale_factor)
                        for a, z in slices
                    ]).mean()
                    loss = loss + self.masked_weight * l_ms
                    log_row["masked"] = l_ms.item()
                if not torch.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite stage-1 loss at epoch {epoch}, batch {b}: {log_row}"
                    )
                loss.backward()
                if self.max_grad_norm is not None:
                    torch.nn.utils.clip_grad_norm_(self.module_.parameters(),
                                                   self.max_grad_norm)
                optimizer.step()
                weight = len(chunk) / n
                for key, value in log_row.items():
                    sums[key] += value * weight
            row = {"epoch": epoch}
            if self.use_standard_loss:
                row["loss_standard"] = sums["standard"]
            if self.use_masked_loss:
                row["loss_masked"] = sums["masked"]
            row["loss_total"] = (
                sums["standard"] * self.use_standard_loss
                + self.masked_weight * sums["masked"] * self.use_masked_loss
            )
            self.loss_log_.append(row)
            if self.verbose:
                print(f"[stage1] {row}")
        return self

    def encode_graph(self, graph: ProteinStructureGraph) -> np.ndarray:
        """Encoded residue matrix of one protein alone, evaluation mode."""
        self.module_.eval()
        with torch.no_grad():
            features, edges, _ = merge_graphs([graph])
            return self.module_.encode(features, edges).numpy()

    def transform(self, X) -> np.ndarray:
        """Pooled protein vectors, one row per input graph.

        The whole cohort is encoded in a single forward pass, so the batch
        normalization statistics are shared across proteins as during
        training; each protein's pooled vector then reflects its deviation
        from the cohort. Deterministic given the input list.
        """
        graphs = list(X)
        self.module_.eval()
        with torch.no_grad():
            features, edges, slices = merge_graphs(graphs)
            encoded = self.module_.encode(features, edges)
            return np.stack([pool_mean(encoded[a:z]).numpy() for a, z in slices])

    def pooled_table(self, X) -> dict:
        """Protein id -> pooled vector, for handoff to stage 2."""
        return {g.protein_id: vec for g, vec in zip(X, self.transform(X))}

    def save(self, path, table_hash: str | None = None, extra: dict | None = None) -> None:
        torch.save({
            "format_version": 1,
            "kind": "residue_autoencoder",
            "params": self.get_params(),
            "state_dict": self.module_.state_dict(),
            "table_hash": table_hash,
            "extra": extra or {},
        }, path)

    @classmethod
    def load(cls, path) -> "ResidueAutoencoder":
        payload = torch.load(path, weights_only=False)
        if payload.get("kind") != "residue_autoencoder":
            raise ValueError(f"{path} is not a stage-1 checkpoint")
        est = cls(**payload["params"])
        est.module_ = est._build_module()
        est.module_.load_state_dict(payload["state_dict"])
        est.loss_log_ = []
        return est
