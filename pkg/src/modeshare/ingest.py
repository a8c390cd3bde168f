"""CSV readers/writers, street-network simplification and zone network metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, UsageError
from .graph import EdgeRow, Graph, TractAssignment

SHARE_SUM_TOLERANCE = 0.02


def _open_csv(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    return path.open(newline="", encoding="utf-8")


def _read_rows(path):
    """Header and data rows (with 1-based line numbers), skipping blank lines."""
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        header = None
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if header is None:
                header = [c.strip() for c in row]
                continue
            rows.append((reader.line_num, [c.strip() for c in row]))
    if header is None:
        raise DataError(f"{path}: missing header")
    return header, rows


def _expect_header(path, header, expected):
    if header[: len(expected)] != list(expected) or len(header) != len(expected):
        raise DataError(f"{path}: expected header {','.join(expected)!r}, got {','.join(header)!r}")


def parse_edge_csv(path) -> list[EdgeRow]:
    header, rows = _read_rows(path)
    _expect_header(path, header, ("src", "dst", "weight"))
    edges = []
    for line, row in rows:
        if len(row) != 3:
            raise DataError(f"{path}:{line}: expected 3 fields, got {len(row)}")
        try:
            w = float(row[2])
        except ValueError:
            raise DataError(f"{path}:{line}: weight {row[2]!r} is not a number") from None
        edges.append(EdgeRow(row[0], row[1], w, line))
    return edges


def write_edge_csv(graph: Graph, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["src", "dst", "weight"])
        for a, b, weight in graph.edges():
            w.writerow([graph.labels[a], graph.labels[b], repr(weight)])


def parse_zone_csv(path) -> dict[str, str]:
    header, rows = _read_rows(path)
    _expect_header(path, header, ("node", "zone"))
    out: dict[str, str] = {}
    for line, row in rows:
        if len(row) != 2:
            raise DataError(f"{path}:{line}: expected 2 fields, got {len(row)}")
        if row[0] in out:
            raise DataError(f"{path}:{line}: node {row[0]!r} assigned twice")
        out[row[0]] = row[1]
    return out


def parse_area_csv(path) -> dict[str, float]:
    header, rows = _read_rows(path)
    _expect_header(path, header, ("zone", "area"))
    out: dict[str, float] = {}
    for line, row in rows:
        if len(row) != 2:
            raise DataError(f"{path}:{line}: expected 2 fields, got {len(row)}")
        try:
            area = float(row[1])
        except ValueError:
            raise DataError(f"{path}:{line}: area {row[1]!r} is not a number") from None
        if not math.isfinite(area) or area <= 0:
            raise DataError(f"{path}:{line}: area must be positive, got {area}")
        if row[0] in out:
            raise DataError(f"{path}:{line}: duplicate zone {row[0]!r}")
        out[row[0]] = area
    return out


@dataclass
class FeatureTable:
    zone_ids: list
    column_names: list
    values: np.ndarray
    missing_mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(len(self.zone_ids), len(self.column_names))
        self.missing_mask = np.asarray(self.missing_mask, dtype=bool).reshape(self.values.shape)
        if len(set(self.zone_ids)) != len(self.zone_ids):
            raise DataError("duplicate zone ids in feature table")
        if len(set(self.column_names)) != len(self.column_names):
            raise DataError("duplicate feature column names")
        if not np.isfinite(self.values[~self.missing_mask]).all():
            raise DataError("non-finite feature value")

    def column(self, name) -> np.ndarray:
        """Column values with missing entries as NaN."""
        try:
            k = self.column_names.index(name)
        except ValueError:
            raise UsageError(f"unknown feature {name!r}") from None
        col = self.values[:, k].copy()
        col[self.missing_mask[:, k]] = np.nan
        return col

    def select(self, names: Sequence) -> "FeatureTable":
        idx = [self.column_names.index(n) for n in names]
        return FeatureTable(list(self.zone_ids), list(names), self.values[:, idx], self.missing_mask[:, idx])

    def reorder(self, zone_ids: Sequence) -> "FeatureTable":
        pos = {z: i for i, z in enumerate(self.zone_ids)}
        try:
            rows = [pos[z] for z in zone_ids]
        except KeyError as exc:
            raise DataError(f"zone {exc.args[0]!r} missing from feature table") from None
        return FeatureTable(list(zone_ids), list(self.column_names), self.values[rows], self.missing_mask[rows])


@dataclass
class ModeShareTable:
    zone_ids: list
    mode_names: list
    shares: np.ndarray

    def __post_init__(self):
        self.shares = np.asarray(self.shares, dtype=np.float64).reshape(len(self.zone_ids), len(self.mode_names))
        if len(set(self.zone_ids)) != len(self.zone_ids):
            raise DataError("duplicate zone ids in share table")

    def reorder(self, zone_ids: Sequence) -> "ModeShareTable":
        pos = {z: i for i, z in enumerate(self.zone_ids)}
        try:
            rows = [pos[z] for z in zone_ids]
        except KeyError as exc:
            raise DataError(f"zone {exc.args[0]!r} missing from share table") from None
        return ModeShareTable(list(zone_ids), list(self.mode_names), self.shares[rows])


def parse_feature_csv(path) -> FeatureTable:
    header, rows = _read_rows(path)
    if len(header) < 1 or header[0] != "zone":
        raise DataError(f"{path}: first header column must be 'zone'")
    names = header[1:]
    zone_ids, seen = [], set()
    values = np.zeros((len(rows), len(names)))
    missing = np.zeros((len(rows), len(names)), dtype=bool)
    for i, (line, row) in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        if row[0] in seen:
            raise DataError(f"{path}:{line}: duplicate zone id {row[0]!r}")
        seen.add(row[0])
        zone_ids.append(row[0])
        for k, cell in enumerate(row[1:]):
            if cell == "":
                missing[i, k] = True
                continue
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}:{line}: {names[k]}={cell!r} is not a number") from None
            if not math.isfinite(v):
                raise DataError(f"{path}:{line}: {names[k]} is not finite")
            values[i, k] = v
    return FeatureTable(zone_ids, names, values, missing)


def normalize_share_row(row: np.ndarray, where: str = "row") -> np.ndarray:
    """Validate one share row; rescale it when it sums within 2% of one."""
    if ((row < 0) | (row > 1)).any():
        raise DataError(f"{where}: share outside [0, 1]: {row.tolist()}")
    total = math.fsum(row)
    if abs(total - 1.0) > SHARE_SUM_TOLERANCE:
        raise DataError(f"{where}: shares sum to {total:.6g}, outside 1 +/- {SHARE_SUM_TOLERANCE}")
    if abs(total - 1.0) > 1e-12:
        row = row / total
    return row


def parse_share_csv(path, mode_names: Sequence | None = None) -> ModeShareTable:
    header, rows = _read_rows(path)
    if len(header) < 2 or header[0] != "zone":
        raise DataError(f"{path}: header must be 'zone,<mode1>,...'")
    available = header[1:]
    if mode_names is None:
        mode_names = available
    absent = [m for m in mode_names if m not in available]
    if absent:
        raise DataError(f"{path}: modes {absent} not in header")
    cols = [available.index(m) + 1 for m in mode_names]
    zone_ids, seen = [], set()
    shares = np.zeros((len(rows), len(mode_names)))
    for i, (line, row) in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        if row[0] in seen:
            raise DataError(f"{path}:{line}: duplicate zone id {row[0]!r}")
        seen.add(row[0])
        zone_ids.append(row[0])
        try:
            vals = np.array([float(row[c]) for c in cols])
        except ValueError:
            raise DataError(f"{path}:{line}: non-numeric or missing share") from None
        shares[i] = normalize_share_row(vals, f"{path}:{line}")
    return ModeShareTable(zone_ids, list(mode_names), shares)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_feature_csv(table: FeatureTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["zone", *table.column_names])
        for i, z in enumerate(table.zone_ids):
            cells = ["" if table.missing_mask[i, k] else _fmt(table.values[i, k]) for k in range(len(table.column_names))]
            w.writerow([z, *cells])


def write_share_csv(table: ModeShareTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["zone", *table.mode_names])
        for z, row in zip(table.zone_ids, table.shares):
            w.writerow([z, *map(_fmt, row)])


# --- topology simplification -------------------------------------------------


@dataclass
class SimplifySummary:
    nodes_before: int = 0
    nodes_after: int = 0
    edges_before: int = 0
    edges_after: int = 0
    length_before: float = 0.0
    length_after: float = 0.0
    self_loops_dropped: int = 0
    self_loop_length: float = 0.0
    parallels_merged: int = 0
    merged_length: float = 0.0
    passes: int = 0

    def residual(self) -> float:
        """length_before - length_after - self_loop_length - merged_length."""
        return math.fsum([self.length_before, -self.length_after, -self.self_loop_length, -self.merged_length])

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n" for f in fields(self))


def _adjacency(graph: Graph) -> dict[int, dict[int, float]]:
    return {v: dict(graph.neighbors(v)) for v in range(graph.node_count)}


def _rebuild(graph: Graph, adj: Mapping[int, Mapping[int, float]]) -> Graph:
    keep = sorted(adj)
    new_id = {v: i for i, v in enumerate(keep)}
    edges = [(new_id[a], new_id[b], w) for a in keep for b, w in sorted(adj[a].items()) if a < b]
    return Graph.from_internal_edges(len(keep), edges, [graph.labels[v] for v in keep])


def _contract_pass(adj, summary: SimplifySummary, dropped_loops: list, merged: list) -> bool:
    """One pass replacing every maximal degree-2 chain by a single edge."""
    interior = {v for v, nb in adj.items() if len(nb) == 2}
    if not interior:
        return False
    new_edges: list[tuple[int, int, float]] = []
    visited: set[int] = set()

    def follow(start, first):
        prev, cur, length = start, first, adj[start][first]
        chain = []
        while cur in interior and cur not in visited and cur != start:
            visited.add(cur)
            chain.append(cur)
            nxt = next(x for x in sorted(adj[cur]) if x != prev)
            length += adj[cur][nxt]
            prev, cur = cur, nxt
        return cur, length, chain

    endpoints = sorted(v for v in adj if v not in interior)
    for e in endpoints:
        for n in sorted(adj[e]):
            if n in interior and n not in visited:
                f, length, _ = follow(e, n)
                new_edges.append((e, f, length))

    # Components made only of degree-2 nodes are pure cycles; keep the lowest id.
    for v in sorted(interior - visited):
        if v in visited:
            continue
        visited.add(v)
        first = min(adj[v])
        end, length, _ = follow(v, first)
        assert end == v
        new_edges.append((v, v, length))
        interior.discard(v)

    for v in visited:
        if v in interior:
            del adj[v]
    for v in adj:
        adj[v] = {x: w for x, w in adj[v].items() if x in adj}
    for a, b, w in new_edges:
        if a == b:
            summary.self_loops_dropped += 1
            dropped_loops.append(w)
            continue
        old = adj[a].get(b)
        if old is None:
            adj[a][b] = adj[b][a] = w
        else:
            summary.parallels_merged += 1
            merged.append(max(old, w))
            adj[a][b] = adj[b][a] = min(old, w)
    return True


def simplify_with_summary(graph: Graph) -> tuple[Graph, SimplifySummary]:
    """Contract degree-2 chains to a fixed point and report the length ledger."""
    summary = SimplifySummary(
        nodes_before=graph.node_count,
        edges_before=graph.edge_count,
        length_before=math.fsum(w for _, _, w in graph.edges()),
    )
    adj = _adjacency(graph)
    loops: list[float] = []
    merged: list[float] = []
    while _contract_pass(adj, summary, loops, merged):
        summary.passes += 1
    out = _rebuild(graph, adj)
    summary.nodes_after = out.node_count
    summary.edges_after = out.edge_count
    summary.length_after = math.fsum(w for _, _, w in out.edges())
    summary.self_loop_length = math.fsum(loops)
    summary.merged_length = math.fsum(merged)
    return out, summary


def simplify_topology(graph: Graph) -> Graph:
    return simplify_with_summary(graph)[0]


def prune_dead_ends(graph: Graph, rounds: int) -> Graph:
    """Remove all degree-1 nodes, ``rounds`` times over."""
    if rounds < 0:
        raise UsageError("rounds must be >= 0")
    if rounds == 0:
        return graph
    adj = _adjacency(graph)
    for _ in range(rounds):
        leaves = [v for v, nb in adj.items() if len(nb) == 1]
        if not leaves:
            break
        for v in leaves:
            for x in adj[v]:
                adj[x].pop(v, None)
            del adj[v]
    return _rebuild(graph, adj)


# --- zone metrics ----------------------------------------------------------------

METRIC_NAMES = ("road_density", "num_node_per_area", "num_road_per_area", "sum_deg", "sub_sum_nodes", "sub_sum_cent")


@dataclass
class NetworkMetrics:
    zone_ids: list
    road_density: np.ndarray
    num_node_per_area: np.ndarray
    num_road_per_area: np.ndarray
    sum_deg: np.ndarray
    sub_sum_nodes: np.ndarray
    sub_sum_cent: np.ndarray

    def as_feature_table(self) -> FeatureTable:
        values = np.column_stack([getattr(self, n) for n in METRIC_NAMES]).astype(np.float64)
        return FeatureTable(list(self.zone_ids), list(METRIC_NAMES), values, np.zeros(values.shape, dtype=bool))


def compute_network_metrics(graph: Graph, assignment: TractAssignment, areas: Mapping) -> NetworkMetrics:
    """Per-zone road metrics.

    Only edges with both endpoints in a zone count toward its length and road
    count; ``sub_sum_cent`` sums degree centrality ``deg(v) / (N - 1)``.
    """
    nz = assignment.zone_count
    area = np.empty(nz)
    for z, zone in enumerate(assignment.zones):
        if zone not in areas:
            raise DataError(f"no area for zone {zone!r}")
        area[z] = float(areas[zone])
        if not math.isfinite(area[z]) or area[z] <= 0:
            raise DataError(f"area of zone {zone!r} must be positive")
    deg = graph.degrees()
    n = graph.node_count
    length = np.zeros(nz)
    roads = np.zeros(nz, dtype=np.int64)
    for a, b, w in graph.edges():
        za, zb = assignment.zone_of[a], assignment.zone_of[b]
        if za == zb:
            length[za] += w
            roads[za] += 1
    nodes = np.bincount(assignment.zone_of, minlength=nz)
    sum_deg = np.bincount(assignment.zone_of, weights=deg, minlength=nz).astype(np.int64)
    cent = deg / (n - 1) if n > 1 else np.zeros(n)
    sum_cent = np.bincount(assignment.zone_of, weights=cent, minlength=nz)
    return NetworkMetrics(
        zone_ids=list(assignment.zones),
        road_density=length / area,
        num_node_per_area=nodes / area,
        num_road_per_area=roads / area,
        sum_deg=sum_deg,
        sub_sum_nodes=nodes,
        sub_sum_cent=sum_cent,
    )


def write_metrics_csv(metrics: NetworkMetrics, path) -> None:
    write_feature_csv(metrics.as_feature_table(), path)
