"""Torch building blocks shared by the two model stages.

Everything here runs in float64 on CPU with explicitly seeded randomness so
that identically configured runs are bit-reproducible.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch
from torch import nn


def derive_seed(*parts) -> int:
    """Deterministic 63-bit seed derived from a tuple of labels/values.

    Unlike ``hash()`` this is stable across processes, so every random
    stream in a run can be pinned to (master seed, stage, epoch, role).
    """
    key = "|".join(repr(p) for p in parts)
    digest = hashlib.sha256(key.encode()).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)


def seeded_module(builder, seed: int) -> nn.Module:
    """Build a module under a forked, seeded global RNG (deterministic init)."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        module = builder()
    return module.double()


def to_tensor(array) -> torch.Tensor:
    return torch.as_tensor(np.asarray(array), dtype=torch.float64)


def edge_tensors(edge_list) -> tuple:
    src = torch.as_tensor(edge_list.sources, dtype=torch.int64)
    dst = torch.as_tensor(edge_list.targets, dtype=torch.int64)
    return src, dst


class SeededDropout(nn.Module):
    """Dropout whose randomness comes from an explicitly assigned generator.

    The owning model reseeds ``generator`` once per forward pass, which keeps
    training traces reproducible and independent of whether other passes in
    the same step ran.
    """

    def __init__(self, p: float):
        super().__init__()
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"dropout rate must be in [0, 1], got {p}")
        self.p = p
        self.generator: torch.Generator | None = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if not self.training or self.p == 0.0:
            return x
        if self.p >= 1.0:
            return torch.zeros_like(x)
        keep = torch.rand(x.shape, generator=self.generator, dtype=x.dtype,
                          device=x.device) >= self.p
        return x * keep.to(x.dtype) / (1.0 - self.p)


def batch_norm(dim: int) -> nn.BatchNorm1d:
    """Batch normalization over the current batch in both train and eval.

    Running statistics are disabled: desk-scale passes always see the full
    protein (stage 1) or the full graph (stage 2), so batch statistics are
    the population statistics, and a zero-learning-rate step leaves the
    model exactly unchanged.
    """
    return nn.BatchNorm1d(dim, track_running_stats=False)


def _scatter_max(values: torch.Tensor, index: torch.Tensor, size: int) -> torch.Tensor:
    """Per-destination maximum, detached (used only to stabilize exponentials)."""
    out = np.full(size, -np.inf)
    with np.errstate(invalid="ignore"):  # NaNs from a diverged forward propagate
        np.maximum.at(out, index.numpy(), values.detach().numpy())
    out[out == -np.inf] = 0.0
    return torch.as_tensor(out, dtype=values.dtype)


class DotProductGraphAttention(nn.Module):
    """Multi-head graph attention with dot-product coefficients.

    Node i aggregates value-projected neighbour features weighted by

        weight(i, j) = exp(<q_i, k2_j>) / sum_{l in N(i)} exp(<q_i, k3_l>)

    where q, k2, k3 are separate linear maps. With tied key maps
    (``k2 == k3``) the weights reduce to an exact softmax over neighbours;
    they are kept distinct here, so rows need not sum to one in general.
    Heads are either concatenated (hidden layers) or averaged (final layer).
    Nodes without neighbours produce zero rows.

    Because the ratio is unnormalized for distinct keys, its log is capped
    at ``LOG_WEIGHT_CAP`` before exponentiation. The cap is far beyond any
    meaningful attention weight (e^100), is unreachable with tied keys
    (whose log-weights are <= 0), and exists solely so that a training
    excursion saturates instead of overflowing to inf.
    """

    LOG_WEIGHT_CAP = 100.0

    def __init__(self, in_dim: int, out_dim: int, heads: int = 1,
                 combine: str = "concat"):
        super().__init__()
        if combine not in ("concat", "mean"):
            raise ValueError(f"combine must be 'concat' or 'mean', got {combine!r}")
        if combine == "concat":
            if out_dim % heads != 0:
                raise ValueError(
                    f"out_dim {out_dim} must be divisible by heads {heads} "
                    f"when concatenating"
                )
            head_dim = out_dim // heads
        else:
            head_dim = out_dim
        self.heads = heads
        self.head_dim = head_dim
        self.out_dim = out_dim
        self.combine = combine
        self.value = nn.Linear(in_dim, heads * head_dim, bias=False)
        self.query = nn.Linear(in_dim, heads * head_dim, bias=False)
        self.key_num = nn.Linear(in_dim, heads * head_dim, bias=False)
        self.key_den = nn.Linear(in_dim, heads * head_dim, bias=False)
        # The two key maps stay independent parameters, but start equal: the
        # layer then begins as an exact softmax, whose weights are bounded.
        # Independent random keys make the exp-ratio astronomically large at
        # initialization (the numerator and denominator logits are unrelated),
        # which overflows once activations grow during training.
        with torch.no_grad():
            self.key_den.weight.copy_(self.key_num.weight)

    def _per_head(self, x: torch.Tensor, linear: nn.Linear) -> torch.Tensor:
        return linear(x).view(x.shape[0], self.heads, self.head_dim)

    def edge_weights(self, x: torch.Tensor, src: torch.Tensor,
                     dst: torch.Tensor) -> torch.Tensor:
        """Aggregation weight per directed edge and head, shape (E, heads).

        Computed as exp(numerator logit - logsumexp of denominator logits per
        destination), which is exact and keeps the denominator representable
        even when the two key maps drive the logits far apart.
        """
        n = x.shape[0]
        q = self._per_head(x, self.query)
        k_num = self._per_head(x, self.key_num)
        k_den = self._per_head(x, self.key_den)
        logit_num = (q[dst] * k_num[src]).sum(-1)
        logit_den = (q[dst] * k_den[src]).sum(-1)
        weights = torch.empty_like(logit_num)
        for h in range(self.heads):
            stab = _scatter_max(logit_den[:, h], dst, n)
            den_terms = torch.exp(logit_den[:, h] - stab[dst])
            den = torch.zeros(n, dtype=x.dtype).index_add_(0, dst, den_terms)
            # nodes without incident edges are never gathered; clamp keeps
            # their log finite so no NaN leaks through the backward pass
            log_den = torch.log(den.clamp(min=1e-300)) + stab
            log_w = (logit_num[:, h] - log_den[dst]).clamp(max=self.LOG_WEIGHT_CAP)
            weights[:, h] = torch.exp(log_w)
        return weights

    def forward(self, x: torch.Tensor, src: torch.Tensor,
                dst: torch.Tensor) -> torch.Tensor:
        n = x.shape[0]
        if len(src) == 0:
            return x.new_zeros(n, self.out_dim)
        v = self._per_head(x, self.value)
        weights = self.edge_weights(x, src, dst)
        messages = v[src] * weights.unsqueeze(-1)
        out = x.new_zeros(n, self.heads, self.head_dim)
        out.index_add_(0, dst, messages)
        if self.combine == "concat":
            return out.reshape(n, self.heads * self.head_dim)
        return out.mean(dim=1)


class TypedGraphAttention(nn.Module):
    """Sum of independent attention aggregations, one per edge type."""

    def __init__(self, in_dim: int, out_dim: int, heads: int, combine: str,
                 edge_types: tuple):
        super().__init__()
        self.edge_types = tuple(edge_types)
        self.per_type = nn.ModuleDict({
            t: DotProductGraphAttention(in_dim, out_dim, heads, combine)
            for t in self.edge_types
        })

    def forward(self, x: torch.Tensor, edges: dict) -> torch.Tensor:
        out = None
        for t in self.edge_types:
            src, dst = edges[t]
            part = self.per_type[t](x, src, dst)
            out = part if out is None else out + part
        return out


class DenseNormBlock(nn.Module):
    """Linear -> ReLU -> batch norm -> dropout, in that order."""

    def __init__(self, in_dim: int, out_dim: int, dropout: float):
        super().__init__()
        self.fc = nn.Linear(in_dim, out_dim)
        self.bn = batch_norm(out_dim)
        self.dp = SeededDropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.dp(self.bn(torch.relu(self.fc(x))))


class GraphIsomorphismLayer(nn.Module):
    """Sum-aggregation message passing with a learnable self weight.

    Each node's update is mlp((1 + eps) * h_i + sum of neighbour features),
    with mlp = dropout(bn(relu(fc(relu(fc(x)))))).
    """

    def __init__(self, in_dim: int, out_dim: int, dropout: float):
        super().__init__()
        self.eps = nn.Parameter(torch.zeros((), dtype=torch.float64))
        self.fc1 = nn.Linear(in_dim, out_dim)
        self.fc2 = nn.Linear(out_dim, out_dim)
        self.bn = batch_norm(out_dim)
        self.dp = SeededDropout(dropout)

    def aggregate(self, x: torch.Tensor, src: torch.Tensor,
                  dst: torch.Tensor) -> torch.Tensor:
        agg = (1.0 + self.eps) * x
        if len(src):
            agg = agg + torch.zeros_like(x).index_add_(0, dst, x[src])
        return agg

    def forward(self, x: torch.Tensor, src: torch.Tensor,
                dst: torch.Tensor) -> torch.Tensor:
        agg = self.aggregate(x, src, dst)
        return self.dp(self.bn(torch.relu(self.fc2(torch.relu(self.fc1(agg))))))


def set_dropout_generator(module: nn.Module, generator: torch.Generator) -> None:
    """Point every SeededDropout inside ``module`` at one generator."""
    for sub in module.modules():
        if isinstance(sub, SeededDropout):
            sub.generator = generator
