"""Undirected weighted road graph and the node-to-zone assignment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DataError, UsageError


@dataclass(frozen=True)
class EdgeRow:
    """One parsed edge record; ``line`` is the 1-based source line when known."""

    label_a: Hashable
    label_b: Hashable
    weight: float
    line: int | None = None


class Graph:
    """Immutable undirected graph stored as sorted CSR adjacency.

    Node ids are the dense range ``0..N-1``; ``labels[i]`` is the external
    name of node ``i``. Neighbor lists are sorted by node id.
    """

    __slots__ = ("indptr", "indices", "weights", "labels", "external_names", "build_warnings")

    def __init__(self, indptr, indices, weights, labels, build_warnings=None):
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.labels = list(labels)
        self.external_names = {lab: i for i, lab in enumerate(self.labels)}
        self.build_warnings = dict(build_warnings or {})
        for arr in (self.indptr, self.indices, self.weights):
            arr.setflags(write=False)

    @classmethod
    def from_internal_edges(cls, n, edges, labels, build_warnings=None) -> "Graph":
        """Build from ``(a, b, w)`` with dense ids; duplicates must already be merged."""
        if len(labels) != n:
            raise UsageError(f"expected {n} labels, got {len(labels)}")
        deg = np.zeros(n + 1, dtype=np.int64)
        for a, b, _ in edges:
            deg[a + 1] += 1
            deg[b + 1] += 1
        indptr = np.cumsum(deg)
        indices = np.empty(indptr[-1], dtype=np.int64)
        weights = np.empty(indptr[-1], dtype=np.float64)
        fill = indptr[:-1].copy()
        for a, b, w in edges:
            indices[fill[a]] = b
            weights[fill[a]] = w
            fill[a] += 1
            indices[fill[b]] = a
            weights[fill[b]] = w
            fill[b] += 1
        for v in range(n):
            lo, hi = indptr[v], indptr[v + 1]
            order = np.argsort(indices[lo:hi], kind="stable")
            indices[lo:hi] = indices[lo:hi][order]
            weights[lo:hi] = weights[lo:hi][order]
        return cls(indptr, indices, weights, labels, build_warnings)

    @property
    def node_count(self) -> int:
        return len(self.indptr) - 1

    @property
    def edge_count(self) -> int:
        return len(self.indices) // 2

    def degree(self, v: int) -> int:
        self._check(v)
        return int(self.indptr[v + 1] - self.indptr[v])

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, v: int) -> list[tuple[int, float]]:
        self._check(v)
        lo, hi = self.indptr[v], self.indptr[v + 1]
        return [(int(x), float(w)) for x, w in zip(self.indices[lo:hi], self.weights[lo:hi])]

    def neighbor_ids(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def has_edge(self, a: int, b: int) -> bool:
        nbrs = self.neighbor_ids(a)
        k = np.searchsorted(nbrs, b)
        return bool(k < len(nbrs) and nbrs[k] == b)

    def edge_weight(self, a: int, b: int) -> float:
        lo = self.indptr[a]
        nbrs = self.neighbor_ids(a)
        k = int(np.searchsorted(nbrs, b))
        if k >= len(nbrs) or nbrs[k] != b:
            raise UsageError(f"no edge between {a} and {b}")
        return float(self.weights[lo + k])

    def edges(self) -> Iterator[tuple[int, int, float]]:
        """Each undirected edge once, as ``(a, b, w)`` with ``a < b``."""
        for a in range(self.node_count):
            lo, hi = self.indptr[a], self.indptr[a + 1]
            for b, w in zip(self.indices[lo:hi], self.weights[lo:hi]):
                if a < b:
                    yield a, int(b), float(w)

    def total_length(self) -> float:
        return float(self.weights.sum()) / 2.0

    def node_id(self, label) -> int:
        try:
            return self.external_names[label]
        except KeyError:
            raise UsageError(f"unknown node label {label!r}") from None

    def _check(self, v):
        if not 0 <= v < self.node_count:
            raise UsageError(f"node id {v} out of range [0, {self.node_count})")

    def __repr__(self):
        return f"Graph(nodes={self.node_count}, edges={self.edge_count})"


def build_graph(edges: Iterable) -> Graph:
    """Internalize labelled edges into a :class:`Graph`.

    Duplicate pairs (either orientation) keep the minimum weight and self-loops
    are dropped; both are tallied in ``graph.build_warnings``.
    """
    ids: dict = {}
    labels: list = []
    merged: dict[tuple[int, int], float] = {}
    self_loops = 0
    duplicates = 0

    def intern(lab):
        if lab not in ids:
            ids[lab] = len(labels)
            labels.append(lab)
        return ids[lab]

    for pos, row in enumerate(edges, start=1):
        if isinstance(row, EdgeRow):
            a_lab, b_lab, w, line = row.label_a, row.label_b, row.weight, row.line
        else:
            a_lab, b_lab, w = row
            line = None
        where = f"line {line}" if line is not None else f"row {pos}"
        try:
            w = float(w)
        except (TypeError, ValueError):
            raise DataError(f"{where}: weight {w!r} is not a number") from None
        if not math.isfinite(w) or w <= 0:
            raise DataError(f"{where}: edge ({a_lab}, {b_lab}) has non-positive or non-finite weight {w}")
        a, b = intern(a_lab), intern(b_lab)
        if a == b:
            self_loops += 1
            continue
        key = (a, b) if a < b else (b, a)
        if key in merged:
            duplicates += 1
            merged[key] = min(merged[key], w)
        else:
            merged[key] = w

    if not labels:
        raise DataError("edge list is empty")
    warnings = {"self_loops": self_loops, "duplicates_merged": duplicates}
    return Graph.from_internal_edges(
        len(labels), [(a, b, w) for (a, b), w in merged.items()], labels, warnings
    )


@dataclass(frozen=True)
class TractAssignment:
    """Partition of graph nodes into zones.

    ``zone_of[v]`` is the index into ``zones`` of node ``v``'s zone.
    """

    zone_of: np.ndarray
    zones: tuple
    _members: tuple = field(repr=False, compare=False, default=())

    def __post_init__(self):
        zone_of = np.asarray(self.zone_of, dtype=np.int64)
        object.__setattr__(self, "zone_of", zone_of)
        object.__setattr__(self, "zones", tuple(self.zones))
        if len(set(self.zones)) != len(self.zones):
            raise DataError("duplicate zone ids in assignment")
        if zone_of.size and (zone_of.min() < 0 or zone_of.max() >= len(self.zones)):
            raise DataError("zone index out of range")
        members = tuple(np.flatnonzero(zone_of == z) for z in range(len(self.zones)))
        empty = [self.zones[z] for z, m in enumerate(members) if m.size == 0]
        if empty:
            raise DataError(f"zones without nodes: {empty}")
        object.__setattr__(self, "_members", members)

    @classmethod
    def from_labels(cls, graph: Graph, node_zone: Mapping, zones: Sequence | None = None) -> "TractAssignment":
        """Assign graph nodes from a ``{node label: zone id}`` map.

        Labels absent from the graph are ignored; every graph node must be
        covered. Zone order follows ``zones`` or first appearance in the map.
        """
        missing = [lab for lab in graph.labels if lab not in node_zone]
        if missing:
            raise DataError(f"{len(missing)} graph nodes have no zone, e.g. {missing[:5]}")
        if zones is None:
            order: dict = {}
            for lab, z in node_zone.items():
                if lab in graph.external_names:
                    order.setdefault(z, len(order))
            zones = list(order)
        index = {z: i for i, z in enumerate(zones)}
        try:
            zone_of = np.array([index[node_zone[lab]] for lab in graph.labels], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"zone {exc.args[0]!r} not in zone list") from None
        return cls(zone_of, tuple(zones))

    @property
    def zone_count(self) -> int:
        return len(self.zones)

    def zone_index(self, zone) -> int:
        try:
            return self.zones.index(zone)
        except ValueError:
            raise UsageError(f"unknown zone {zone!r}") from None

    def members(self, z: int) -> np.ndarray:
        return self._members[z]


def zone_nodes(assignment: TractAssignment, zone) -> list[int]:
    """Node ids belonging to ``zone`` in ascending order."""
    return [int(v) for v in assignment.members(assignment.zone_index(zone))]


def restrict_assignment(graph: Graph, node_zone: Mapping) -> tuple[TractAssignment, list]:
    """Assignment for ``graph`` from a label map, dropping zones that lost every node.

    Returns the assignment and the dropped zone ids (in map order).
    """
    all_zones: dict = {}
    for z in node_zone.values():
        all_zones.setdefault(z, None)
    present: dict = {}
    for lab in graph.labels:
        if lab not in node_zone:
            raise DataError(f"graph node {lab!r} has no zone")
        present.setdefault(node_zone[lab], None)
    zones = [z for z in all_zones if z in present]
    dropped = [z for z in all_zones if z not in present]
    return TractAssignment.from_labels(graph, node_zone, zones), dropped
