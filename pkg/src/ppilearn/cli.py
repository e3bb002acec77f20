"""Command-line pipeline: data generation, graphs, splits, training, evaluation.

Subcommands mirror the pipeline stages. Training commands require --seed so
every run is reproducible; any RunConfig field can be overridden with
``--set dotted.path=value`` (values parsed as JSON when possible).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import (
    AminoAcidPropertyTable,
    load_ppi,
    load_proteins,
    save_ppi,
    save_proteins,
)
from .graphs import build_interaction_graph, load_graph_cache, save_graph_cache
from .interaction import InteractionTypeClassifier, predict_from_probabilities
from .metrics import compute_report
from .pipeline import (
    ABLATION_FLAGS,
    RunConfig,
    build_all_graphs,
    fit_scaler,
    load_pooled_table,
    make_split,
    run_ablation_grid,
    write_embeddings,
    write_loss_log,
    write_per_type,
    write_pooled_table,
    write_pr_curve,
    write_predictions,
)
from .splits import SplitSpec, classify_subsets
from .synth import make_synthetic_dataset


def _parse_override(entry: str) -> tuple:
    if "=" not in entry:
        raise ValueError(f"override must look like key=value, got {entry!r}")
    key, raw = entry.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _load_config(args) -> RunConfig:
    payload = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            payload = json.load(fh)
    config = RunConfig.from_dict(payload)
    for entry in getattr(args, "set", None) or []:
        key, value = _parse_override(entry)
        target = config
        parts = key.split(".")
        for part in parts[:-1]:
            target = getattr(target, part)
        if not hasattr(target, parts[-1]):
            raise ValueError(f"unknown config field {key!r}")
        setattr(target, parts[-1], value)
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "scheme", None):
        config.split_scheme = args.scheme
    config.__post_init__()
    return config


def _table(args) -> AminoAcidPropertyTable:
    if getattr(args, "table", None):
        return AminoAcidPropertyTable.from_json(args.table)
    return AminoAcidPropertyTable.default()


def cmd_synth_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    proteins, interactions = make_synthetic_dataset(
        n_proteins=args.n_proteins, n_pairs=args.n_pairs, seed=args.seed,
    )
    save_proteins(out / "proteins.jsonl", proteins)
    save_ppi(out / "interactions.tsv", interactions)
    print(f"wrote {len(proteins)} proteins and {len(interactions)} pairs to {out}")
    return 0


def cmd_split(args) -> int:
    records = load_ppi(args.ppi)
    protein_ids = None
    if args.proteins:
        protein_ids = [p.id for p in load_proteins(args.proteins)]
    config = _load_config(args)
    split = make_split(records, config, protein_ids=protein_ids)
    split.to_json(args.out)
    print(f"split sizes (train/val/test): {split.sizes()} -> {args.out}")
    return 0


def cmd_build_graphs(args) -> int:
    proteins = load_proteins(args.proteins)
    table = _table(args)
    config = _load_config(args)
    if args.radius is not None:
        config.radius = args.radius
    if args.k is not None:
        config.k = args.k
    scaler = None
    if args.ppi and args.split:
        records = load_ppi(args.ppi)
        split = SplitSpec.from_json(args.split)
        scaler = fit_scaler(proteins, records, split, table)
    elif not args.no_scaling:
        scaler = fit_scaler(proteins, [], None, table)
    graphs = build_all_graphs(proteins, table, config, scaler)
    save_graph_cache(args.out, graphs, radius=config.radius, k=config.k,
                     table_hash=table.content_hash(), scaler=scaler)
    print(f"built {len(graphs)} structure graphs "
          f"(radius={config.radius}, k={config.k}) -> {args.out}")
    return 0


def cmd_pretrain(args) -> int:
    graphs, manifest = load_graph_cache(args.graphs)
    config = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    estimator = config.stage1_estimator().fit(graphs)
    pooled = estimator.pooled_table(graphs)
    estimator.save(out / "stage1.pt", table_hash=manifest.get("table_hash"),
                   extra={"cache_key": manifest.get("cache_key")})
    write_pooled_table(out / "pooled.tsv", pooled)
    write_loss_log(out / "stage1_loss.tsv", estimator.loss_log_)
    config.to_json(out / "config.json")
    last = estimator.loss_log_[-1] if estimator.loss_log_ else {}
    print(f"stage 1 done: {len(graphs)} proteins, final losses {last} -> {out}")
    return 0


def _interaction_graph(args):
    records = load_ppi(args.ppi)
    protein_ids = None
    if getattr(args, "proteins", None):
        protein_ids = [p.id for p in load_proteins(args.proteins)]
    pooled = load_pooled_table(args.pooled)
    return build_interaction_graph(records, pooled=pooled, protein_ids=protein_ids)


def cmd_train(args) -> int:
    config = _load_config(args)
    graph = _interaction_graph(args)
    split = SplitSpec.from_json(args.split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    classifier = config.stage2_estimator().fit(graph, split)
    classifier.save(out / "stage2.pt", extra={"split": args.split})
    write_loss_log(out / "stage2_loss.tsv", classifier.loss_log_)
    config.to_json(out / "config.json")
    print(f"stage 2 done: best val micro-F1 {classifier.best_val_micro_f1_:.4f} "
          f"at epoch {classifier.best_epoch_} -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    graph = _interaction_graph(args)
    split = SplitSpec.from_json(args.split)
    classifier = InteractionTypeClassifier.load(args.checkpoint, graph, split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tags = classify_subsets(split, graph)
    probs = classifier.predict_proba(split.test_idx)
    pred = predict_from_probabilities(probs, classifier.threshold)
    report = compute_report(probs, pred, graph.labels[split.test_idx], tags)
    report.to_json(out / "metrics.json")
    write_predictions(out / "predictions.tsv", graph, split.test_idx, probs, pred)
    write_pr_curve(out / "pr_curve.tsv", report.pr_points)
    write_per_type(out / "per_type.tsv", report.per_type)
    print(f"test micro-F1: {report.micro_f1:.4f}")
    for tag, entry in (report.subsets or {}).items():
        if entry["present"]:
            print(f"  {tag}: micro-F1 {entry['micro_f1']:.4f} "
                  f"(fraction {entry['fraction']:.3f})")
    return 0


def cmd_ablate(args) -> int:
    proteins = load_proteins(args.proteins)
    records = load_ppi(args.ppi)
    config = _load_config(args)
    flag_sets = []
    for entry in args.flags.split(",") if args.flags else []:
        combo = tuple(f.strip() for f in entry.split("+") if f.strip())
        flag_sets.append(combo)
    results = run_ablation_grid(proteins, records, config, flag_sets)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ablation.tsv", "w") as fh:
        fh.write("cell\ttest_micro_f1\tbest_val_micro_f1\n")
        for label, result in results.items():
            fh.write(f"{label}\t{result.test_report.micro_f1!r}\t"
                     f"{result.classifier.best_val_micro_f1_!r}\n")
            result.test_report.to_json(out / f"metrics_{label.replace('+', '_')}.json")
            print(f"{label}: test micro-F1 {result.test_report.micro_f1:.4f}")
    return 0


def cmd_export_embeddings(args) -> int:
    graph = _interaction_graph(args)
    split = SplitSpec.from_json(args.split)
    if args.level == "pooled":
        write_embeddings(args.out, graph.protein_ids, graph.node_features)
        print(f"wrote {graph.n_proteins} pooled embeddings -> {args.out}")
        return 0
    classifier = InteractionTypeClassifier.load(args.checkpoint, graph, split)
    if args.level == "protein":
        write_embeddings(args.out, graph.protein_ids, classifier.protein_embeddings())
        print(f"wrote {graph.n_proteins} protein embeddings -> {args.out}")
    else:
        pair_idx = split.test_idx
        fused = classifier.pair_embeddings(pair_idx)
        ids = [f"{graph.protein_ids[graph.pairs[p, 0]]}|{graph.protein_ids[graph.pairs[p, 1]]}"
               for p in pair_idx]
        write_embeddings(args.out, ids, fused)
        print(f"wrote {len(ids)} pair embeddings -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppilearn",
        description="Two-stage protein interaction type prediction pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p, seed_required: bool):
        p.add_argument("--config", help="RunConfig JSON file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field, e.g. stage2.n_epochs=100")
        p.add_argument("--seed", type=int, required=seed_required,
                       help="master seed" + (" (required)" if seed_required else ""))

    p = sub.add_parser("synth-data", help="generate a synthetic desk-scale dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-proteins", type=int, default=20)
    p.add_argument("--n-pairs", type=int, default=60)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("split", help="partition interaction pairs")
    p.add_argument("--ppi", required=True)
    p.add_argument("--proteins", help="protein file, to keep isolated proteins as nodes")
    p.add_argument("--scheme", choices=("random", "bfs", "dfs"), default=None)
    p.add_argument("--out", required=True)
    add_config_args(p, seed_required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("build-graphs", help="build residue structure graphs")
    p.add_argument("--proteins", required=True)
    p.add_argument("--ppi", help="interaction file (for the training-protein scaler)")
    p.add_argument("--split", help="split JSON (for the training-protein scaler)")
    p.add_argument("--table", help="property-table JSON (default: shipped fixture)")
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--no-scaling", action="store_true",
                   help="skip feature standardization")
    p.add_argument("--out", required=True)
    add_config_args(p, seed_required=False)
    p.set_defaults(func=cmd_build_graphs)

    p = sub.add_parser("pretrain", help="stage 1: train the residue autoencoder")
    p.add_argument("--graphs", required=True, help="graph cache directory")
    p.add_argument("--out", required=True)
    add_config_args(p, seed_required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="stage 2: train the interaction classifier")
    p.add_argument("--ppi", required=True)
    p.add_argument("--proteins")
    p.add_argument("--split", required=True)
    p.add_argument("--pooled", required=True, help="pooled embeddings from pretrain")
    p.add_argument("--out", required=True)
    add_config_args(p, seed_required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score the held-out pairs")
    p.add_argument("--ppi", required=True)
    p.add_argument("--proteins")
    p.add_argument("--split", required=True)
    p.add_argument("--pooled", required=True)
    p.add_argument("--checkpoint", required=True, help="stage-2 checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the ablation grid")
    p.add_argument("--proteins", required=True)
    p.add_argument("--ppi", required=True)
    p.add_argument("--flags", default="",
                   help=f"comma-separated cells, '+' combines flags; "
                        f"valid: {','.join(ABLATION_FLAGS)}")
    p.add_argument("--out", required=True)
    add_config_args(p, seed_required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export-embeddings", help="write embedding tables")
    p.add_argument("--ppi", required=True)
    p.add_argument("--proteins")
    p.add_argument("--split", required=True)
    p.add_argument("--pooled", required=True)
    p.add_argument("--checkpoint", help="stage-2 checkpoint (protein/pair levels)")
    p.add_argument("--level", choices=("pooled", "protein", "pair"), default="protein")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_embeddings)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
