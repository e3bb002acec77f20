"""Two-stage protein-protein interaction type prediction.

Stage 1 pretrains a typed graph-attention autoencoder over residue structure
graphs (standard plus masked reconstruction) and pools one vector per
protein. Stage 2 trains a sum-aggregation graph encoder over the interaction
network with a symmetric pair classifier and an optional two-view graph
contrastive objective.
"""

from .contrastive import (
    PerturbSpec,
    PerturbedView,
    contrastive_total,
    encode_views,
    info_nce,
    make_view,
    perturb_edges,
    perturb_nodes,
    training_loss,
)
from .data import (
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
from .graphs import (
    EdgeList,
    ProteinInteractionGraph,
    ProteinStructureGraph,
    build_interaction_graph,
    build_structure_graph,
    knn_neighbor_indices,
    load_graph_cache,
    save_graph_cache,
)
from .interaction import (
    InteractionEncoderModule,
    InteractionTypeClassifier,
    multilabel_bce,
    predict_from_probabilities,
)
from .metrics import (
    MetricsReport,
    compute_report,
    micro_f1,
    per_type_metrics,
    pr_curve,
    subset_report,
)
from .pipeline import (
    ABLATION_FLAGS,
    PipelineResult,
    RunConfig,
    Stage1Settings,
    Stage2Settings,
    run_ablation_grid,
    run_pipeline,
)
from .residue import (
    ResidueAutoencoder,
    ResidueAutoencoderModule,
    apply_mask,
    masked_cosine_loss,
    pool_mean,
    pretraining_loss,
    reconstruction_loss,
)
from .splits import SplitSpec, classify_subsets, split_random, split_traversal
from .synth import make_synthetic_dataset

__version__ = "0.1.0"
