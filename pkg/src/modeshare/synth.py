"""Synthetic cities whose mode shares are driven by planted road density.

Zones sit on a square-ish grid of unit cells. Dense zones add most of their
4-nearest-neighbor links on top of a spanning tree; sparse zones keep few.
By default the dense zones form a contiguous downtown around the grid centre
whose street grid runs across zone boundaries. The planted signal is the
min-max normalized intra-zone edge density, the shares are a softmax of a
linear function of it, and the baseline features are deliberately noisy
copies of it.
"""

from __future__ import annotations

import ast
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import _random
from .errors import DataError, UsageError
from .graph import Graph, TractAssignment, build_graph
from .ingest import FeatureTable, ModeShareTable, write_edge_csv, write_feature_csv, write_share_csv
from .predictors.mnl import softmax

MODE_NAMES = ("driving", "transit", "walking")
MODE_INTERCEPTS = (1.0, 0.0, -1.0)
MODE_SLOPES = (-2.0, 1.0, 2.0)
MAX_ATTEMPTS = 10
KNN = 4
BRIDGE_CANDIDATES = 3
DENSE_LAYOUTS = ("core", "band", "random")


@dataclass(frozen=True)
class SynthConfig:
    n_zones: int = 20
    nodes_per_zone: int = 15
    dense_zone_fraction: float = 0.5
    intra_edge_prob_dense: float = 0.9
    intra_edge_prob_sparse: float = 0.1
    inter_edge_prob: float = 0.5
    n_baseline_features: int = 4
    feature_signal: float = 0.3
    share_noise_scale: float = 0.1
    dense_layout: str = "core"
    seed: int = 0

    def __post_init__(self):
        if self.n_zones < 4:
            raise UsageError("n_zones must be >= 4")
        if self.nodes_per_zone < 3:
            raise UsageError("nodes_per_zone must be >= 3")
        for name in ("dense_zone_fraction", "intra_edge_prob_dense", "intra_edge_prob_sparse",
                     "inter_edge_prob", "feature_signal"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise UsageError(f"{name} must be in [0, 1], got {v}")
        if self.share_noise_scale < 0:
            raise UsageError("share_noise_scale must be >= 0")
        if self.dense_layout not in DENSE_LAYOUTS:
            raise UsageError(f"dense_layout must be one of {DENSE_LAYOUTS}")
        if self.n_baseline_features < 1:
            raise UsageError("n_baseline_features must be >= 1")


@dataclass
class SynthDataset:
    config: SynthConfig
    graph: Graph
    node_zone: dict
    assignment: TractAssignment
    features: FeatureTable
    shares: ModeShareTable
    areas: dict
    planted: np.ndarray
    intra_density: np.ndarray
    dense: np.ndarray
    attempt: int

    def manifest(self) -> str:
        lines = [f"{f.name} = {getattr(self.config, f.name)!r}" for f in fields(self.config)]
        lines.append(f"attempt = {self.attempt}")
        lines.append(f"modes = {','.join(MODE_NAMES)}")
        for m, a, b in zip(MODE_NAMES, MODE_INTERCEPTS, MODE_SLOPES):
            lines.append(f"coefficient_a_{m} = {a!r}")
            lines.append(f"coefficient_b_{m} = {b!r}")
        lines.append(f"nodes = {self.graph.node_count}")
        lines.append(f"edges = {self.graph.edge_count}")
        lines.append("dense_zones = " + ",".join(z for z, d in zip(self.assignment.zones, self.dense) if d))
        return "\n".join(lines) + "\n"


def _spanning_tree(pos):
    """Euclidean minimum spanning tree (Prim) as a list of index pairs."""
    n = len(pos)
    d = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=2))
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = d[0].copy()
    parent = np.zeros(n, dtype=np.int64)
    edges = []
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        v = int(np.argmin(cand))
        edges.append((int(parent[v]), v))
        in_tree[v] = True
        closer = d[v] < best
        parent[closer] = v
        best = np.minimum(best, d[v])
    return edges, d


def _components(n, edges):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        parent[find(a)] = find(b)
    return len({find(x) for x in range(n)})


def _attempt(cfg: SynthConfig, seed: int):
    rng = np.random.default_rng(seed)
    nz, k = cfg.n_zones, cfg.nodes_per_zone
    cols = math.ceil(math.sqrt(nz))
    cell = [(z // cols, z % cols) for z in range(nz)]
    dense = rng.random(nz) < cfg.dense_zone_fraction
    if cfg.dense_layout == "band":
        # dense zones fill the first cells in row-major order
        n_dense = int(dense.sum())
        dense = np.arange(nz) < n_dense
    elif cfg.dense_layout == "core":
        # same number of dense zones, moved to the cells nearest the grid centre
        rows = math.ceil(nz / cols)
        centre = ((rows - 1) / 2, (cols - 1) / 2)
        dist = [(r - centre[0]) ** 2 + (c - centre[1]) ** 2 for r, c in cell]
        n_dense = int(dense.sum())
        dense = np.zeros(nz, dtype=bool)
        dense[np.argsort(dist, kind="stable")[:n_dense]] = True
    pos = np.empty((nz * k, 2))
    edges: list[tuple[int, int]] = []
    intra = np.zeros(nz, dtype=np.int64)
    for z in range(nz):
        r, c = cell[z]
        p = rng.random((k, 2)) + (c, r)
        pos[z * k : (z + 1) * k] = p
        tree, dist = _spanning_tree(p)
        chosen = {(min(a, b), max(a, b)) for a, b in tree}
        prob = cfg.intra_edge_prob_dense if dense[z] else cfg.intra_edge_prob_sparse
        extras = set()
        for a in range(k):
            for b in np.argsort(dist[a], kind="stable")[1 : KNN + 1]:
                pair = (min(a, int(b)), max(a, int(b)))
                if pair not in chosen:
                    extras.add(pair)
        for pair in sorted(extras):
            if rng.random() < prob:
                chosen.add(pair)
        intra[z] = len(chosen)
        edges.extend((z * k + a, z * k + b) for a, b in sorted(chosen))
    where = {cz: z for z, cz in enumerate(cell)}
    for z in range(nz):
        r, c = cell[z]
        for nb in ((r, c + 1), (r + 1, c)):
            y = where.get(nb)
            if y is None:
                continue
            a_pos, b_pos = pos[z * k : (z + 1) * k], pos[y * k : (y + 1) * k]
            d = ((a_pos[:, None, :] - b_pos[None, :, :]) ** 2).sum(axis=2)
            # a dense grid continues across the boundary into a neighbouring dense zone
            stitched = dense[z] and dense[y]
            n_cand = k if stitched else BRIDGE_CANDIDATES
            prob = cfg.intra_edge_prob_dense if stitched else cfg.inter_edge_prob
            for flat in np.argsort(d, axis=None, kind="stable")[:n_cand]:
                a, b = divmod(int(flat), k)
                if rng.random() < prob:
                    edges.append((z * k + a, y * k + b))
    weights = 1.0 + 0.1 * rng.random(len(edges))
    return dense, edges, weights, intra, rng


def generate_city(cfg: SynthConfig) -> SynthDataset:
    """Sample a connected synthetic city; retries with a new sub-seed up to 10 times."""
    nz, k = cfg.n_zones, cfg.nodes_per_zone
    for attempt in range(MAX_ATTEMPTS):
        dense, edges, weights, intra, rng = _attempt(cfg, _random.spawn(cfg.seed, attempt))
        if _components(nz * k, edges) == 1:
            break
    else:
        raise DataError(f"no connected city after {MAX_ATTEMPTS} attempts; raise inter_edge_prob")
    labels = [f"n{i}" for i in range(nz * k)]
    zone_ids = [f"z{z:03d}" for z in range(nz)]
    graph = build_graph([(labels[a], labels[b], float(w)) for (a, b), w in zip(edges, weights)])
    node_zone = {labels[i]: zone_ids[i // k] for i in range(nz * k)}
    assignment = TractAssignment.from_labels(graph, node_zone, zone_ids)

    density = intra / (k * (k - 1) / 2)
    span = density.max() - density.min()
    planted = (density - density.min()) / span if span > 0 else np.zeros(nz)

    noise = rng.standard_normal((nz, len(MODE_NAMES)))
    V = np.asarray(MODE_INTERCEPTS) + np.outer(planted, MODE_SLOPES) + cfg.share_noise_scale * noise
    shares = softmax(V)

    fnoise = rng.standard_normal((nz, cfg.n_baseline_features))
    X = cfg.feature_signal * planted[:, None] + (1 - cfg.feature_signal) * fnoise
    features = FeatureTable(zone_ids, [f"x{j + 1}" for j in range(cfg.n_baseline_features)], X,
                            np.zeros(X.shape, dtype=bool))
    return SynthDataset(
        config=cfg,
        graph=graph,
        node_zone=node_zone,
        assignment=assignment,
        features=features,
        shares=ModeShareTable(zone_ids, list(MODE_NAMES), shares),
        areas={z: 1.0 for z in zone_ids},
        planted=planted,
        intra_density=density,
        dense=dense,
        attempt=attempt,
    )


def write_dataset(ds: SynthDataset, out_dir) -> dict[str, Path]:
    """Write the dataset in the ingest CSV formats plus ``manifest.txt``."""
    out = Path(out_dir)
    os.makedirs(out, exist_ok=True)
    paths = {name: out / f"{name}.csv" for name in ("edges", "zones", "features", "shares", "areas")}
    write_edge_csv(ds.graph, paths["edges"])
    with open(paths["zones"], "w", encoding="utf-8") as fh:
        fh.write("node,zone\n")
        for lab in ds.graph.labels:
            fh.write(f"{lab},{ds.node_zone[lab]}\n")
    write_feature_csv(ds.features, paths["features"])
    write_share_csv(ds.shares, paths["shares"])
    with open(paths["areas"], "w", encoding="utf-8") as fh:
        fh.write("zone,area\n")
        for z, a in ds.areas.items():
            fh.write(f"{z},{a!r}\n")
    paths["manifest"] = out / "manifest.txt"
    paths["manifest"].write_text(ds.manifest(), encoding="utf-8")
    return paths


@dataclass
class ExperimentResult:
    dataset: SynthDataset
    report: object
    deltas: dict  # (predictor, "ger" | "concat", travel mode) -> OSR2 minus baseline OSR2

    def summary(self) -> str:
        lines = ["predictor,comparison,travel_mode,osr2_delta"]
        for (pred, mode, travel), d in self.deltas.items():
            lines.append(f"{pred},{mode}-baseline,{travel},{d!r}")
        return "\n".join(lines) + "\n"


def run_experiment(cfg: SynthConfig, run_cfg=None, log=None) -> ExperimentResult:
    """Generate a city and push it through the full pipeline."""
    from .config import RunConfig
    from .pipeline import run_core

    run_cfg = run_cfg or RunConfig()
    ds = generate_city(cfg)
    result = run_core(ds.graph, ds.node_zone, ds.features, ds.shares, run_cfg, log)
    report = result.report
    deltas = {}
    if "baseline" in run_cfg.input_modes:
        for pred in run_cfg.predictors:
            for mode in ("ger", "concat"):
                if mode not in run_cfg.input_modes:
                    continue
                for travel in ds.shares.mode_names:
                    deltas[(pred, mode, travel)] = (report.get(pred, mode, travel).osr2
                                                    - report.get(pred, "baseline", travel).osr2)
    return ExperimentResult(ds, report, deltas)


def config_from_manifest(path) -> SynthConfig:
    """Rebuild the generating config from a manifest written by :func:`write_dataset`."""
    values = {}
    names = {f.name for f in fields(SynthConfig)}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if " = " not in line:
            continue
        key, val = line.split(" = ", 1)
        if key in names:
            values[key] = ast.literal_eval(val)
    return SynthConfig(**values)


__all__ = ["MODE_NAMES", "SynthConfig", "SynthDataset", "config_from_manifest", "ExperimentResult", "generate_city", "run_experiment", "write_dataset"]
