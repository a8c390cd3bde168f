"""End-to-end run: simplify, walk, embed, read out, evaluate and analyse."""

from __future__ import annotations

import os
import platform
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from . import __version__, _random
from .config import RunConfig, schema_hash
from .embedding import EmbeddingMatrix, ZoneEmbedding, readout, save_embeddings, train
from .errors import DataError, UsageError
from .evaluation import (
    CorrelationMatrix,
    EvaluationReport,
    KMeansResult,
    correlation_matrix,
    dimension_correlations,
    evaluate_all,
    kmeans,
    quantile_zones,
    select_features,
    write_clusters_csv,
    write_quantiles_csv,
)
from .graph import Graph, TractAssignment, build_graph, restrict_assignment
from .ingest import (
    FeatureTable,
    ModeShareTable,
    SimplifySummary,
    compute_network_metrics,
    parse_area_csv,
    parse_edge_csv,
    parse_feature_csv,
    parse_share_csv,
    parse_zone_csv,
    prune_dead_ends,
    simplify_with_summary,
    write_metrics_csv,
)
from .walker import generate_walks

STAGES = ("walks", "train", "split", "forest", "kmeans")


def stage_seeds(master: int) -> dict[str, int]:
    return {name: _random.stage_seed(master, name) for name in STAGES}


@dataclass
class PipelineResult:
    config: RunConfig
    seeds: dict
    graph: Graph
    assignment: TractAssignment
    embedding: EmbeddingMatrix
    zone_embedding: ZoneEmbedding
    features: FeatureTable | None
    shares: ModeShareTable
    report: EvaluationReport
    correlation: CorrelationMatrix
    clusters: KMeansResult
    quantiles: list
    dimension_corr: np.ndarray | None = None
    simplify_summary: SimplifySummary | None = None
    selected_features: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


def _log(log, msg):
    if log is not None:
        log(msg)


@contextmanager
def _timed(timings, name, log):
    _log(log, f"[{name}] start")
    t0 = time.perf_counter()
    yield
    timings[name] = time.perf_counter() - t0
    _log(log, f"[{name}] done in {timings[name]:.2f}s")


def prepare_graph(graph: Graph, cfg: RunConfig) -> tuple[Graph, SimplifySummary | None]:
    summary = None
    if cfg.simplify:
        graph, summary = simplify_with_summary(graph)
    if cfg.prune_rounds:
        graph = prune_dead_ends(graph, cfg.prune_rounds)
    return graph, summary


def _common_zones(assignment, features, shares, notes):
    keep = set(assignment.zones) & set(shares.zone_ids)
    if features is not None:
        keep &= set(features.zone_ids)
    for name, ids in (("network", assignment.zones), ("share", shares.zone_ids),
                      ("feature", features.zone_ids if features is not None else [])):
        lost = [z for z in ids if z not in keep]
        if lost:
            notes.append(f"{len(lost)} {name} zones without a match elsewhere were left out: {lost[:10]}")
    order = [z for z in shares.zone_ids if z in keep]
    if len(order) < 2:
        raise DataError("fewer than two zones are shared by the network, features and shares")
    return order


def run_core(graph: Graph, node_zone: dict, features: FeatureTable | None, shares: ModeShareTable,
             cfg: RunConfig, log=None) -> PipelineResult:
    """Run every stage in memory on already-parsed inputs."""
    seeds = stage_seeds(cfg.seed)
    timings: dict[str, float] = {}
    notes: list[str] = []
    needs_features = any(m in ("baseline", "concat") for m in cfg.input_modes)
    if needs_features and features is None:
        raise UsageError("baseline and concat inputs need a feature table")

    with _timed(timings, "simplify", log):
        graph, summary = prepare_graph(graph, cfg)
        assignment, dropped = restrict_assignment(graph, node_zone)
        if dropped:
            notes.append(f"zones with no remaining nodes: {dropped[:10]}")

    with _timed(timings, "embed", log):
        walk_cfg = cfg.walk_config(seeds["walks"])
        corpus = generate_walks(graph, walk_cfg, threads=cfg.threads)
        emb = train(corpus, cfg.train_config(seeds["train"]), graph, walk_cfg)

    with _timed(timings, "readout", log):
        zone_emb = readout(emb, assignment)
        order = _common_zones(assignment, features if needs_features else None, shares, notes)
        zone_emb = zone_emb.reorder(order)
        shares = shares.reorder(order)
        if features is not None and needs_features:
            features = features.reorder(order)

    selected = []
    with _timed(timings, "evaluate", log):
        if features is not None and needs_features:
            corr = correlation_matrix(features, shares)
            selected = select_features(corr, shares.mode_names, cfg.feature_threshold)
            if not selected:
                notes.append(f"no feature reaches |r| >= {cfg.feature_threshold} with every mode; keeping all")
                selected = list(features.column_names)
            features = features.select(selected)
        report = evaluate_all(features, zone_emb, shares, cfg.split_spec(seeds["split"]),
                              cfg.predictors, cfg.input_modes, cfg.grids(seeds["forest"]))
        notes.extend(report.notes)

    with _timed(timings, "analyse", log):
        corr = correlation_matrix(features if needs_features else None, shares, zone_emb)
        dim_corr = dimension_correlations(zone_emb, features, cfg.corr_dims) if features is not None and needs_features else None
        k = min(cfg.kmeans_k, len(zone_emb.zone_ids))
        if k != cfg.kmeans_k:
            notes.append(f"kmeans_k lowered to {k}, the number of zones")
        clusters = kmeans(zone_emb, k, seeds["kmeans"])
        quantiles = quantile_zones(zone_emb.embd_readout, zone_emb.zone_ids, cfg.quantiles)

    return PipelineResult(cfg, seeds, graph, assignment, emb, zone_emb, features, shares, report, corr,
                          clusters, quantiles, dim_corr, summary, selected, timings, notes)


def load_inputs(cfg: RunConfig):
    """Parse the files named in ``cfg``; edges, zones and shares are required."""
    for key in ("edges", "zones", "shares"):
        if not getattr(cfg, key):
            raise UsageError(f"missing required path: {key}")
    graph = build_graph(parse_edge_csv(cfg.edges))
    node_zone = parse_zone_csv(cfg.zones)
    features = parse_feature_csv(cfg.features) if cfg.features else None
    shares = parse_share_csv(cfg.shares)
    areas = parse_area_csv(cfg.areas) if cfg.areas else None
    return graph, node_zone, features, shares, areas


def manifest_text(result: PipelineResult, outputs: dict) -> str:
    lines = ["[config]", result.config.to_text().rstrip("\n"), "", "[seeds]"]
    lines += [f"{k} = {v}" for k, v in result.seeds.items()]
    lines += ["", "[versions]", f"modeshare = {__version__}", f"config_schema = {schema_hash()}",
              f"python = {platform.python_version()}", f"numpy = {np.__version__}", f"numba = {numba.__version__}",
              "", "[wall_clock_seconds]"]
    lines += [f"{k} = {v:.3f}" for k, v in result.timings.items()]
    lines += ["", "[outputs]"] + [f"{k} = {v}" for k, v in outputs.items()]
    if result.simplify_summary is not None:
        lines += ["", "[simplify]", result.simplify_summary.to_text().rstrip("\n")]
    if result.notes:
        lines += ["", "[notes]"] + result.notes
    return "\n".join(lines) + "\n"


def write_outputs(result: PipelineResult, out_dir, areas=None) -> dict[str, Path]:
    out = Path(out_dir)
    os.makedirs(out, exist_ok=True)
    paths = {
        "report": out / "report.csv",
        "correlation": out / "correlation.csv",
        "clusters": out / "clusters.csv",
        "quantiles": out / "quantiles.csv",
        "node_embeddings": out / "node_embeddings.txt",
        "zone_embeddings": out / "zone_embeddings.txt",
    }
    result.report.to_csv(paths["report"])
    result.correlation.to_csv(paths["correlation"])
    write_clusters_csv(result.zone_embedding.zone_ids, result.clusters.labels, paths["clusters"])
    write_quantiles_csv(result.quantiles, paths["quantiles"])
    if areas is not None:
        paths["metrics"] = out / "metrics.csv"
        write_metrics_csv(compute_network_metrics(result.graph, result.assignment, areas), paths["metrics"])
    if result.dimension_corr is not None:
        paths["dimension_correlation"] = out / "dimension_correlation.csv"
        with open(paths["dimension_correlation"], "w", encoding="utf-8") as fh:
            fh.write(",".join(["dimension", *result.features.column_names]) + "\n")
            for k, row in enumerate(result.dimension_corr):
                fh.write(",".join([f"ger_{k}", *map(repr, row.tolist())]) + "\n")
    emb = result.embedding
    save_embeddings(emb, paths["node_embeddings"], result.graph.labels, emb.seed, emb.config_hash)
    save_embeddings(result.zone_embedding, paths["zone_embeddings"], result.zone_embedding.zone_ids,
                    emb.seed, emb.config_hash)
    paths["manifest"] = out / "manifest.txt"
    paths["manifest"].write_text(manifest_text(result, {k: v.name for k, v in paths.items()}), encoding="utf-8")
    return paths


def run_pipeline(cfg: RunConfig, log=None) -> tuple[PipelineResult, dict[str, Path]]:
    graph, node_zone, features, shares, areas = load_inputs(cfg)
    result = run_core(graph, node_zone, features, shares, cfg, log)
    return result, write_outputs(result, cfg.out_dir, areas)


def stderr_log(msg: str) -> None:
    print(msg, file=sys.stderr)
