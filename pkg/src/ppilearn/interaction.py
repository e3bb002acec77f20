"""Stage 2: multi-label interaction-type classification over the PPI graph.

A stack of sum-aggregation (graph isomorphism) layers encodes pooled protein
vectors over the training-pair topology; a projection head and a symmetric
sum-product pair fusion map each protein pair to seven type logits. Training
minimizes per-class binary cross entropy plus, optionally, a two-view
contrastive objective over perturbed copies of the graph (see
``ppilearn.contrastive``). Message passing is transductive: the same
training-pair edges are used when scoring validation and test pairs.
"""

from __future__ import annotations

import copy

import numpy as np
import torch
from sklearn.base import BaseEstimator
from torch import nn

from .contrastive import info_nce, perturb_edges, perturb_nodes
from .data import N_INTERACTION_TYPES
from .graphs import EdgeList, ProteinInteractionGraph
from .layers import (
    GraphIsomorphismLayer,
    SeededDropout,
    derive_seed,
    seeded_module,
    set_dropout_generator,
    to_tensor,
)
from .metrics import micro_f1
from .splits import SplitSpec
from .validation import check_positive_int, check_rate


def multilabel_bce(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Per-class binary cross entropy, summed over classes, averaged over pairs.

    Computed in the numerically stable logit form, so exact 0/1 targets never
    evaluate log(0).
    """
    if logits.shape != labels.shape:
        raise ValueError(f"shape mismatch: {tuple(logits.shape)} vs {tuple(labels.shape)}")
    if logits.shape[0] < 1:
        raise ValueError("need at least one pair")
    per_cell = nn.functional.binary_cross_entropy_with_logits(
        logits, labels.to(logits.dtype), reduction="none"
    )
    return per_cell.sum(dim=1).mean()


def predict_from_probabilities(probabilities: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Binary multi-label decisions: probability >= threshold (boundary inclusive)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    probabilities = np.asarray(probabilities, dtype=np.float64)
    return (probabilities >= threshold).astype(np.int64)


class InteractionEncoderModule(nn.Module):
    """GIN encoder stack, projection head and pair classifier."""

    def __init__(self, in_dim: int, hidden_dim: int, n_layers: int, dropout: float):
        super().__init__()
        if n_layers < 1:
            raise ValueError(f"need at least 1 layer, got {n_layers}")
        dims = [in_dim] + [hidden_dim] * n_layers
        self.gin_layers = nn.ModuleList(
            GraphIsomorphismLayer(dims[i], dims[i + 1], dropout)
            for i in range(n_layers)
        )
        self.head_fc = nn.Linear(hidden_dim, hidden_dim)
        self.head_dp = SeededDropout(dropout)
        self.classifier = nn.Linear(2 * hidden_dim, N_INTERACTION_TYPES)
        self.dropout_generator = torch.Generator()
        set_dropout_generator(self, self.dropout_generator)

    def reseed_dropout(self, seed: int) -> None:
        self.dropout_generator.manual_seed(seed)

    def encode(self, features: torch.Tensor, src: torch.Tensor,
               dst: torch.Tensor) -> torch.Tensor:
        x = features
        for layer in self.gin_layers:
            x = layer(x, src, dst)
        return x

    def project(self, encoded: torch.Tensor) -> torch.Tensor:
        return self.head_dp(torch.relu(self.head_fc(encoded)))

    def pair_features(self, projected: torch.Tensor, pairs: torch.Tensor) -> torch.Tensor:
        """Symmetric fusion: concat(h_i + h_j, h_i * h_j)."""
        h_i = projected[pairs[:, 0]]
        h_j = projected[pairs[:, 1]]
        return torch.cat([h_i + h_j, h_i * h_j], dim=1)

    def pair_logits(self, projected: torch.Tensor, pairs: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.pair_features(projected, pairs))


class InteractionTypeClassifier(BaseEstimator):
    """Trains the interaction encoder and scores protein pairs.

    fit() runs full-graph training over the split's training pairs, logging
    the contrastive and classification losses plus train/val micro-F1 each
    epoch, and keeps the parameters of the best validation epoch.
    predict_proba() / predict() score pair indices of the fitted graph
    (default: its test pairs). Setting ``contrastive_weight`` to zero, or
    disabling both views, skips the contrastive passes entirely, so such
    runs trace identically to one another.
    """

    def __init__(self, hidden_dim=1024, n_layers=3, dropout=0.2,
                 learning_rate=1e-3, weight_decay=1e-4, n_epochs=800,
                 temperature=0.6, contrastive_weight=0.6, perturb_rate=0.1,
                 node_perturb_rate=None, edge_perturb_rate=None,
                 use_contrastive_alpha=True, use_contrastive_beta=True,
                 threshold=0.5, max_grad_norm=10.0, seed=0, verbose=False):
        self.hidden_dim = hidden_dim
        self.n_layers = n_layers
        self.dropout = dropout
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.n_epochs = n_epochs
        self.temperature = temperature
        self.contrastive_weight = contrastive_weight
        self.perturb_rate = perturb_rate
        self.node_perturb_rate = node_perturb_rate
        self.edge_perturb_rate = edge_perturb_rate
        self.use_contrastive_alpha = use_contrastive_alpha
        self.use_contrastive_beta = use_contrastive_beta
        self.threshold = threshold
        self.max_grad_norm = max_grad_norm
        self.seed = seed
        self.verbose = verbose

    # -- configuration helpers -------------------------------------------

    def _rates(self) -> tuple:
        node_rate = self.perturb_rate if self.node_perturb_rate is None else self.node_perturb_rate
        edge_rate = self.perturb_rate if self.edge_perturb_rate is None else self.edge_perturb_rate
        return check_rate(node_rate, "node perturb rate"), check_rate(edge_rate, "edge perturb rate")

    def _contrastive_views(self) -> tuple:
        """Active view tags; empty when the contrastive term cannot contribute."""
        if self.contrastive_weight == 0.0:
            return ()
        views = []
        if self.use_contrastive_alpha:
            views.append("alpha")
        if self.use_contrastive_beta:
            views.append("beta")
        return tuple(views)

    def _message_edges(self, graph: ProteinInteractionGraph,
                       train_idx: np.ndarray) -> EdgeList:
        """Training pairs as directed edges in both directions."""
        train_pairs = graph.pairs[train_idx]
        return EdgeList(
            np.concatenate([train_pairs[:, 0], train_pairs[:, 1]]),
            np.concatenate([train_pairs[:, 1], train_pairs[:, 0]]),
        ) if len(train_pairs) else EdgeList.empty()

    # -- training ---------------------------------------------------------

    def fit(self, graph: ProteinInteractionGraph, split: SplitSpec):
        if graph.node_features is None:
            raise ValueError("interaction graph has no node features; run stage 1 first")
        check_positive_int(self.n_epochs, "n_epochs")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        split.validate(graph.n_pairs)
        node_rate, edge_rate = self._rates()
        views = self._contrastive_views()

        self.graph_ = graph
        self.split_ = split
        self.module_ = seeded_module(
            lambda: InteractionEncoderModule(
                graph.node_features.shape[1], self.hidden_dim, self.n_layers,
                self.dropout,
            ),
            derive_seed(self.seed, "stage2", "init"),
        )
        optimizer = torch.optim.AdamW(
            self.module_.parameters(), lr=self.learning_rate,
            weight_decay=self.weight_decay,
        )

        features = to_tensor(graph.node_features)
        edges = self._message_edges(graph, split.train_idx)
        src, dst = (torch.as_tensor(edges.sources), torch.as_tensor(edges.targets))
        train_pairs = torch.as_tensor(graph.pairs[split.train_idx])
        train_labels = to_tensor(graph.labels[split.train_idx])

        self.loss_log_ = []
        self.best_epoch_ = None
        best_val = -np.inf
        best_state = None

        for epoch in range(self.n_epochs):
            self.module_.train()
            optimizer.zero_grad()

            self.module_.reseed_dropout(derive_seed(self.seed, "stage2", epoch, "main"))
            encoded = self.module_.encode(features, src, dst)
            logits = self.module_.pair_logits(self.module_.project(encoded), train_pairs)
            loss_cls = multilabel_bce(logits, train_labels)
            loss = loss_cls

            row = {"epoch": epoch, "loss_classification": loss_cls.item()}
            if views:
                loss_con = features.new_zeros(())
                for tag in views:
                    view_seed = derive_seed(self.seed, "stage2", epoch, "view", tag)
                    perturbed, _ = perturb_nodes(graph.node_features, node_rate,
                                                 seed=derive_seed(view_seed, "nodes"))
                    view_edges, _ = perturb_edges(edges, graph.n_proteins, edge_rate,
                                                  seed=derive_seed(view_seed, "edges"))
                    self.module_.reseed_dropout(derive_seed(view_seed, "dropout"))
                    view_encoded = self.module_.encode(
                        to_tensor(perturbed),
                        torch.as_tensor(view_edges.sources),
                        torch.as_tensor(view_edges.targets),
                    )
                    loss_con = loss_con + info_nce(encoded, view_encoded, self.temperature)
                loss = loss + self.contrastive_weight * loss_con
                row["loss_contrastive"] = loss_con.item()
            row["loss_total"] = loss.item()

            if not torch.isfinite(loss):
                raise RuntimeError(f"non-finite stage-2 loss at epoch {epoch}: {row}")
            loss.backward()
            if self.max_grad_norm is not None:
                torch.nn.utils.clip_grad_norm_(self.module_.parameters(),
                                               self.max_grad_norm)
            optimizer.step()

            row["train_micro_f1"] = self._evaluate_split(features, src, dst, split.train_idx)
            row["val_micro_f1"] = self._evaluate_split(features, src, dst, split.val_idx)
            self.loss_log_.append(row)
            if row["val_micro_f1"] > best_val:
                best_val = row["val_micro_f1"]
                best_state = copy.deepcopy(self.module_.state_dict())
                self.best_epoch_ = epoch
            if self.verbose:
                print(f"[stage2] {row}")

        if best_state is not None:
            self.module_.load_state_dict(best_state)
        self.best_val_micro_f1_ = best_val
        return self

    # -- inference --------------------------------------------------------

    def _forward_eval(self, features, src, dst, pair_idx) -> np.ndarray:
        self.module_.eval()
        with torch.no_grad():
            encoded = self.module_.encode(features, src, dst)
            pairs = torch.as_tensor(self.graph_.pairs[np.asarray(pair_idx, dtype=np.int64)])
            logits = self.module_.pair_logits(self.module_.project(encoded), pairs)
        return logits.numpy()

    def _evaluate_split(self, features, src, dst, pair_idx) -> float:
        if len(pair_idx) == 0:
            return float("nan")
        logits = self._forward_eval(features, src, dst, pair_idx)
        probs = 1.0 / (1.0 + np.exp(-logits))
        pred = predict_from_probabilities(probs, self.threshold)
        return micro_f1(pred, self.graph_.labels[pair_idx])

    def _eval_inputs(self):
        features = to_tensor(self.graph_.node_features)
        edges = self._message_edges(self.graph_, self.split_.train_idx)
        return features, torch.as_tensor(edges.sources), torch.as_tensor(edges.targets)

    def decision_function(self, pair_idx=None) -> np.ndarray:
        """Raw logits for pair indices of the fitted graph (default: test pairs)."""
        if pair_idx is None:
            pair_idx = self.split_.test_idx
        features, src, dst = self._eval_inputs()
        return self._forward_eval(features, src, dst, pair_idx)

    def predict_proba(self, pair_idx=None) -> np.ndarray:
        logits = self.decision_function(pair_idx)
        return 1.0 / (1.0 + np.exp(-logits))

    def predict(self, pair_idx=None) -> np.ndarray:
        return predict_from_probabilities(self.predict_proba(pair_idx), self.threshold)

    def score(self, pair_idx=None) -> float:
        """Micro-F1 over the given pair indices (default: test pairs)."""
        if pair_idx is None:
            pair_idx = self.split_.test_idx
        pred = self.predict(pair_idx)
        return micro_f1(pred, self.graph_.labels[np.asarray(pair_idx, dtype=np.int64)])

    def protein_embeddings(self) -> np.ndarray:
        """Encoded protein representations under the training topology."""
        features, src, dst = self._eval_inputs()
        self.module_.eval()
        with torch.no_grad():
            encoded = self.module_.encode(features, src, dst)
        return encoded.numpy()

    def pair_embeddings(self, pair_idx=None) -> np.ndarray:
        """Fused pair representations (classifier input), e.g. for projection plots."""
        if pair_idx is None:
            pair_idx = self.split_.test_idx
        features, src, dst = self._eval_inputs()
        self.module_.eval()
        with torch.no_grad():
            encoded = self.module_.encode(features, src, dst)
            pairs = torch.as_tensor(self.graph_.pairs[np.asarray(pair_idx, dtype=np.int64)])
            fused = self.module_.pair_features(self.module_.project(encoded), pairs)
        return fused.numpy()

    def save(self, path, extra: dict | None = None) -> None:
        torch.save({
            "format_version": 1,
            "kind": "interaction_classifier",
            "params": self.get_params(),
            "state_dict": self.module_.state_dict(),
            "in_dim": self.graph_.node_features.shape[1],
            "best_epoch": self.best_epoch_,
            "extra": extra or {},
        }, path)

    @classmethod
    def load(cls, path, graph: ProteinInteractionGraph,
             split: SplitSpec) -> "InteractionTypeClassifier":
        payload = torch.load(path, weights_only=False)
        if payload.get("kind") != "interaction_classifier":
            raise ValueError(f"{path} is not a stage-2 checkpoint")
        est = cls(**payload["params"])
        est.graph_ = graph
        est.split_ = split
        est.module_ = seeded_module(
            lambda: InteractionEncoderModule(
                payload["in_dim"], est.hidden_dim, est.n_layers, est.dropout
            ),
            derive_seed(est.seed, "stage2", "init"),
        )
        est.module_.load_state_dict(payload["state_dict"])
        est.loss_log_ = []
        est.best_epoch_ = payload.get("best_epoch")
        return est
