"""Run configuration, two-stage orchestration, evaluation and ablations.

The pipeline order is: split the interaction pairs, fit the residue feature
scaler on training proteins only, build structure graphs, pretrain the
residue autoencoder (stage 1), attach the pooled vectors to the interaction
graph, train the interaction classifier (stage 2), and score the held-out
pairs with subset stratification. All randomness descends from one master
seed, so identically configured runs produce identical loss logs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import (
    AminoAcidPropertyTable,
    InteractionRecord,
    ProteinRecord,
    ResidueFeatureScaler,
)
from .graphs import ProteinInteractionGraph, build_interaction_graph, build_structure_graph
from .interaction import InteractionTypeClassifier, predict_from_probabilities
from .metrics import MetricsReport, compute_report
from .residue import ResidueAutoencoder
from .splits import SplitSpec, classify_subsets, split_random, split_traversal

ABLATION_FLAGS = (
    "no_standard_recon",
    "no_masked_recon",
    "no_recon",
    "no_contrastive_alpha",
    "no_contrastive_beta",
    "no_contrastive",
    "no_node_perturb",
    "no_edge_perturb",
    "no_perturb",
)


@dataclass
class Stage1Settings:
    hidden_dim: int = 128
    n_layers: int = 4
    n_heads: int = 4
    dropout: float = 0.2
    mask_rate: float = 0.25
    scale_factor: float = 1.5
    masked_weight: float = 0.5
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    n_epochs: int = 50
    batch_size: int = 128


@dataclass
class Stage2Settings:
    hidden_dim: int = 1024
    n_layers: int = 3
    dropout: float = 0.2
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    n_epochs: int = 800
    temperature: float = 0.6
    contrastive_weight: float = 0.6
    perturb_rate: float = 0.1
    threshold: float = 0.5


@dataclass
class RunConfig:
    """One experiment: graph construction, split, both stages, ablations.

    Defaults mirror the reference configuration for the small benchmark under
    random partitioning; every field is overridable from JSON or the CLI.
    """

    seed: int = 0
    radius: float = 10.0
    k: int = 5
    split_scheme: str = "random"
    split_seed: int | None = None
    holdout_fraction: float = 0.4
    stage1: Stage1Settings = field(default_factory=Stage1Settings)
    stage2: Stage2Settings = field(default_factory=Stage2Settings)
    ablations: tuple = ()

    def __post_init__(self):
        self.ablations = tuple(self.ablations)
        unknown = set(self.ablations) - set(ABLATION_FLAGS)
        if unknown:
            raise ValueError(
                f"unknown ablation flag(s) {sorted(unknown)}; valid flags are "
                f"{list(ABLATION_FLAGS)}"
            )
        for name, value in (("mask_rate", self.stage1.mask_rate),
                            ("dropout", self.stage1.dropout),
                            ("dropout", self.stage2.dropout),
                            ("perturb_rate", self.stage2.perturb_rate)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.stage1.n_epochs < 1 or self.stage2.n_epochs < 1:
            raise ValueError("epoch counts must be >= 1")

    def effective_split_seed(self) -> int:
        return self.seed if self.split_seed is None else self.split_seed

    def with_ablations(self, flags: Sequence[str]) -> "RunConfig":
        cfg = dataclasses.replace(self)
        cfg.ablations = tuple(flags)
        cfg.__post_init__()
        return cfg

    def stage1_estimator(self) -> ResidueAutoencoder:
        flags = set(self.ablations)
        s = self.stage1
        return ResidueAutoencoder(
            hidden_dim=s.hidden_dim, n_layers=s.n_layers, n_heads=s.n_heads,
            dropout=s.dropout, mask_rate=s.mask_rate, scale_factor=s.scale_factor,
            masked_weight=s.masked_weight, learning_rate=s.learning_rate,
            weight_decay=s.weight_decay, n_epochs=s.n_epochs,
            batch_size=s.batch_size, seed=self.seed,
            use_standard_loss=not flags & {"no_standard_recon", "no_recon"},
            use_masked_loss=not flags & {"no_masked_recon", "no_recon"},
        )

    def stage2_estimator(self) -> InteractionTypeClassifier:
        flags = set(self.ablations)
        s = self.stage2
        return InteractionTypeClassifier(
            hidden_dim=s.hidden_dim, n_layers=s.n_layers, dropout=s.dropout,
            learning_rate=s.learning_rate, weight_decay=s.weight_decay,
            n_epochs=s.n_epochs, temperature=s.temperature,
            contrastive_weight=s.contrastive_weight, perturb_rate=s.perturb_rate,
            node_perturb_rate=0.0 if flags & {"no_node_perturb", "no_perturb"} else None,
            edge_perturb_rate=0.0 if flags & {"no_edge_perturb", "no_perturb"} else None,
            use_contrastive_alpha=not flags & {"no_contrastive_alpha", "no_contrastive"},
            use_contrastive_beta=not flags & {"no_contrastive_beta", "no_contrastive"},
            threshold=s.threshold, seed=self.seed,
        )

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=1)

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        payload = dict(payload)
        if "stage1" in payload:
            payload["stage1"] = Stage1Settings(**payload["stage1"])
        if "stage2" in payload:
            payload["stage2"] = Stage2Settings(**payload["stage2"])
        return cls(**payload)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def make_split(records: Sequence[InteractionRecord], config: RunConfig,
               protein_ids: Sequence[str] | None = None) -> SplitSpec:
    """Split the pair list per the configured scheme (topology-only graph)."""
    graph = build_interaction_graph(records, protein_ids=protein_ids)
    if config.split_scheme == "random":
        return split_random(graph.n_pairs, config.effective_split_seed())
    return split_traversal(graph, config.split_scheme,
                           config.effective_split_seed(),
                           holdout_fraction=config.holdout_fraction)


def training_protein_ids(records: Sequence[InteractionRecord],
                         split: SplitSpec) -> set:
    """Proteins that occur in at least one training pair."""
    ids = set()
    for pair_idx in split.train_idx:
        rec = records[pair_idx]
        ids.add(rec.protein_a)
        ids.add(rec.protein_b)
    return ids


def fit_scaler(proteins: Sequence[ProteinRecord], records: Sequence[InteractionRecord],
               split: SplitSpec | None, table: AminoAcidPropertyTable) -> ResidueFeatureScaler:
    """Z-score statistics from training proteins only (all proteins if no split)."""
    if split is None:
        reference = list(proteins)
    else:
        train_ids = training_protein_ids(records, split)
        reference = [p for p in proteins if p.id in train_ids]
        if not reference:
            reference = list(proteins)
    return ResidueFeatureScaler().fit(reference, table)


def build_all_graphs(proteins: Sequence[ProteinRecord], table: AminoAcidPropertyTable,
                     config: RunConfig, scaler: ResidueFeatureScaler | None):
    return [
        build_structure_graph(p, table, radius=config.radius, k=config.k, scaler=scaler)
        for p in proteins
    ]


@dataclass
class PipelineResult:
    config: RunConfig
    split: SplitSpec
    pretrainer: ResidueAutoencoder
    pooled: dict
    classifier: InteractionTypeClassifier
    graph: ProteinInteractionGraph
    test_report: MetricsReport
    test_probabilities: np.ndarray
    test_predictions: np.ndarray
    subset_tags: list


def run_pipeline(proteins: Sequence[ProteinRecord],
                 interactions: Sequence[InteractionRecord],
                 config: RunConfig,
                 table: AminoAcidPropertyTable | None = None) -> PipelineResult:
    """Execute both stages end to end and evaluate the test pairs."""
    table = table or AminoAcidPropertyTable.default()
    split = make_split(interactions, config, protein_ids=[p.id for p in proteins])
    scaler = fit_scaler(proteins, interactions, split, table)
    graphs = build_all_graphs(proteins, table, config, scaler)

    pretrainer = config.stage1_estimator().fit(graphs)
    pooled = pretrainer.pooled_table(graphs)

    graph = build_interaction_graph(interactions, pooled=pooled,
                                    protein_ids=[p.id for p in proteins])
    classifier = config.stage2_estimator().fit(graph, split)

    tags = classify_subsets(split, graph)
    probs = classifier.predict_proba(split.test_idx)
    pred = predict_from_probabilities(probs, config.stage2.threshold)
    report = compute_report(probs, pred, graph.labels[split.test_idx], tags)

    return PipelineResult(
        config=config, split=split, pretrainer=pretrainer, pooled=pooled,
        classifier=classifier, graph=graph, test_report=report,
        test_probabilities=probs, test_predictions=pred, subset_tags=tags,
    )


def run_ablation_grid(proteins: Sequence[ProteinRecord],
                      interactions: Sequence[InteractionRecord],
                      config: RunConfig,
                      flag_sets: Sequence) -> dict:
    """One full pipeline per flag combination, sharing the base seed.

    ``flag_sets`` entries may be single flag names or tuples of flags; the
    unablated baseline is always included under the key "baseline".
    """
    results = {"baseline": run_pipeline(proteins, interactions, config.with_ablations(()))}
    for entry in flag_sets:
        flags = (entry,) if isinstance(entry, str) else tuple(entry)
        label = "+".join(flags)
        results[label] = run_pipeline(proteins, interactions,
                                      config.with_ablations(flags))
    return results


# ---------------------------------------------------------------------------
# Structured-text exports
# ---------------------------------------------------------------------------

def write_loss_log(path, rows: Sequence[dict]) -> None:
    """One row per epoch, tab-separated, union of the logged keys."""
    keys: list = []
    for row in rows:
        for key in row:
            if key not in keys:
                keys.append(key)
    with open(path, "w") as fh:
        fh.write("\t".join(keys) + "\n")
        for row in rows:
            fh.write("\t".join(repr(row.get(key, "")) for key in keys) + "\n")


def write_pooled_table(path, pooled: dict) -> None:
    with open(path, "w") as fh:
        for pid, vec in pooled.items():
            fh.write(pid + "\t" + "\t".join(repr(float(v)) for v in vec) + "\n")


def load_pooled_table(path) -> dict:
    pooled = {}
    with open(path) as fh:
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            pooled[parts[0]] = np.array([float(v) for v in parts[1:]])
    return pooled


def write_predictions(path, graph: ProteinInteractionGraph, pair_idx,
                      probabilities: np.ndarray, predictions: np.ndarray) -> None:
    """Per pair: the two protein ids, 7 probabilities, 7 binary decisions."""
    pair_idx = np.asarray(pair_idx, dtype=np.int64)
    with open(path, "w") as fh:
        for row, pidx in enumerate(pair_idx):
            i, j = graph.pairs[pidx]
            fields = [graph.protein_ids[i], graph.protein_ids[j]]
            fields += [repr(float(p)) for p in probabilities[row]]
            fields += [str(int(p)) for p in predictions[row]]
            fh.write("\t".join(fields) + "\n")


def write_embeddings(path, ids: Sequence[str], matrix: np.ndarray) -> None:
    with open(path, "w") as fh:
        for pid, row in zip(ids, matrix):
            fh.write(pid + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")


def write_pr_curve(path, points: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("threshold\tprecision\trecall\n")
        for t, p, r in points:
            fh.write(f"{t!r}\t{p!r}\t{r!r}\n")


def write_per_type(path, rows: Sequence[dict]) -> None:
    with open(path, "w") as fh:
        fh.write("type\taccuracy\tf1\tdegenerate\n")
        for row in rows:
            fh.write(f"{row['type']}\t{row['accuracy']!r}\t{row['f1']!r}\t"
                     f"{int(row['degenerate'])}\n")


def export_run(out_dir, result: PipelineResult) -> None:
    """Write the standard artifact set for one pipeline run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.config.to_json(out / "config.json")
    result.split.to_json(out / "split.json")
    write_loss_log(out / "stage1_loss.tsv", result.pretrainer.loss_log_)
    write_loss_log(out / "stage2_loss.tsv", result.classifier.loss_log_)
    write_pooled_table(out / "pooled.tsv", result.pooled)
    write_predictions(out / "predictions.tsv", result.graph,
                      result.split.test_idx, result.test_probabilities,
                      result.test_predictions)
    write_pr_curve(out / "pr_curve.tsv", result.test_report.pr_points)
    write_per_type(out / "per_type.tsv", result.test_report.per_type)
    result.test_report.to_json(out / "metrics.json")
