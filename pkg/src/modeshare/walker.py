"""Second-order (p, q)-biased random walks over the road graph.

Transition weights are ``alpha_pq(t, x) * w_vx`` where ``t`` is the previous
node, ``v`` the current one and ``x`` a candidate neighbor. Every transition
distribution is precomputed into an alias table unless the tables would
exceed ``table_entry_limit`` entries, in which case each step normalizes on
the fly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from . import _random
from .errors import NumericalError, UsageError
from .graph import Graph

WEIGHT_TRANSFORMS = ("inverse", "identity")


@dataclass(frozen=True)
class WalkConfig:
    p: float = 1.0
    q: float = 1.0
    walk_length: int = 20
    walks_per_node: int = 10
    seed: int = 0
    weight_transform: str = "inverse"
    table_entry_limit: int = 10**8

    def __post_init__(self):
        if not (self.p > 0 and math.isfinite(self.p)):
            raise UsageError(f"p must be positive, got {self.p}")
        if not (self.q > 0 and math.isfinite(self.q)):
            raise UsageError(f"q must be positive, got {self.q}")
        if self.walk_length < 1:
            raise UsageError(f"walk_length must be >= 1, got {self.walk_length}")
        if self.walks_per_node < 1:
            raise UsageError(f"walks_per_node must be >= 1, got {self.walks_per_node}")
        if self.weight_transform not in WEIGHT_TRANSFORMS:
            raise UsageError(f"weight_transform must be one of {WEIGHT_TRANSFORMS}")
        if self.table_entry_limit < 0:
            raise UsageError("table_entry_limit must be >= 0")


# --- alias method ------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _vose(dist, prob, alias, small, large):
    """Fill ``prob``/``alias`` for ``dist`` (positive total); returns False on zero mass."""
    n = dist.shape[0]
    total = 0.0
    for i in range(n):
        total += dist[i]
    if not total > 0.0:
        return False
    ns = 0
    nl = 0
    for i in range(n):
        prob[i] = dist[i] * n / total
        alias[i] = i
        if prob[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        g = large[nl - 1]
        alias[s] = g
        prob[g] = (prob[g] + prob[s]) - 1.0
        if prob[g] < 1.0:
            nl -= 1
            small[ns] = g
            ns += 1
    for i in range(nl):
        prob[large[i]] = 1.0
    for i in range(ns):
        prob[small[i]] = 1.0
    return True


@numba.njit(cache=True, nogil=True)
def _alias_draw(prob, alias, lo, n, state):
    k = int(_random.next_double(state) * n)
    if k >= n:
        k = n - 1
    if _random.next_double(state) < prob[lo + k]:
        return k
    return alias[lo + k]


@dataclass(frozen=True)
class AliasTable:
    probabilities: np.ndarray
    aliases: np.ndarray
    outcomes: np.ndarray

    def distribution(self) -> np.ndarray:
        """Exact sampling distribution implied by the table (no sampling)."""
        n = len(self.probabilities)
        out = self.probabilities.astype(np.float64).copy()
        np.add.at(out, self.aliases, 1.0 - self.probabilities)
        return out / n

    def draw(self, rng: np.random.Generator, size=None):
        n = len(self.probabilities)
        k = rng.integers(0, n, size=size)
        u = rng.random(size=size)
        idx = np.where(u < self.probabilities[k], k, self.aliases[k])
        return self.outcomes[idx]


def build_alias(dist, outcomes=None) -> AliasTable:
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 1 or dist.size == 0:
        raise UsageError("distribution must be a non-empty vector")
    if (dist < 0).any() or not np.isfinite(dist).all():
        raise NumericalError("distribution entries must be finite and non-negative")
    n = dist.size
    prob = np.empty(n)
    alias = np.empty(n, dtype=np.int64)
    ok = _vose(dist, prob, alias, np.empty(n, dtype=np.int64), np.empty(n, dtype=np.int64))
    if not ok:
        raise NumericalError("cannot build alias table from an all-zero distribution")
    outcomes = np.arange(n) if outcomes is None else np.asarray(outcomes)
    return AliasTable(prob, alias, outcomes)


# --- transition probabilities -----------------------------------------------------


def _transform(weights, transform):
    return 1.0 / weights if transform == "inverse" else weights


def search_bias(t: int, x: int, g: Graph, p: float, q: float) -> float:
    """Return-parameter / in-out bias for stepping to ``x`` after leaving ``t``."""
    if x == t:
        return 1.0 / p
    if g.has_edge(t, x):
        return 1.0
    return 1.0 / q


def transition_probs(g: Graph, t: int, v: int, p: float, q: float, weight_transform: str = "inverse") -> np.ndarray:
    """Normalized next-step distribution over ``g.neighbor_ids(v)`` given arrival from ``t``."""
    if not g.has_edge(t, v):
        raise UsageError(f"({t}, {v}) is not an edge")
    lo, hi = g.indptr[v], g.indptr[v + 1]
    w = _transform(g.weights[lo:hi], weight_transform)
    bias = np.array([search_bias(t, int(x), g, p, q) for x in g.indices[lo:hi]])
    pi = bias * w
    return pi / pi.sum()


@numba.njit(cache=True, nogil=True)
def _has_edge(indptr, indices, a, b):
    lo = indptr[a]
    hi = indptr[a + 1]
    while lo < hi:
        mid = (lo + hi) >> 1
        if indices[mid] < b:
            lo = mid + 1
        else:
            hi = mid
    return lo < indptr[a + 1] and indices[lo] == b


@numba.njit(cache=True, nogil=True)
def _edge_weights(indptr, indices, w, t, v, p, q, out):
    lo = indptr[v]
    for k in range(indptr[v + 1] - lo):
        x = indices[lo + k]
        if x == t:
            out[k] = w[lo + k] / p
        elif _has_edge(indptr, indices, t, x):
            out[k] = w[lo + k]
        else:
            out[k] = w[lo + k] / q


@numba.njit(cache=True, nogil=True)
def _build_tables(indptr, indices, w, p, q, offsets, fprob, falias, sprob, salias):
    n = indptr.shape[0] - 1
    maxdeg = 0
    for v in range(n):
        maxdeg = max(maxdeg, indptr[v + 1] - indptr[v])
    buf = np.empty(maxdeg)
    small = np.empty(maxdeg, dtype=np.int64)
    large = np.empty(maxdeg, dtype=np.int64)
    for v in range(n):
        lo = indptr[v]
        hi = indptr[v + 1]
        if hi > lo:
            _vose(w[lo:hi], fprob[lo:hi], falias[lo:hi], small, large)
    for t in range(n):
        for e in range(indptr[t], indptr[t + 1]):
            v = indices[e]
            d = indptr[v + 1] - indptr[v]
            _edge_weights(indptr, indices, w, t, v, p, q, buf)
            o = offsets[e]
            _vose(buf[:d], sprob[o : o + d], salias[o : o + d], small, large)


@dataclass(frozen=True)
class TransitionTable:
    """Flattened alias tables.

    ``first_*`` are indexed by CSR position (one table per node's neighbor
    slice). The second-order table for directed edge ``e = (t -> v)`` (CSR
    position of ``v`` in ``t``'s list) starts at ``offsets[e]`` and spans
    ``deg(v)`` entries. When ``precomputed`` is False the second-order arrays
    are empty and walks normalize per step.
    """

    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    p: float
    q: float
    first_prob: np.ndarray
    first_alias: np.ndarray
    offsets: np.ndarray
    second_prob: np.ndarray
    second_alias: np.ndarray
    precomputed: bool

    def first_step(self, v: int) -> AliasTable:
        lo, hi = self.indptr[v], self.indptr[v + 1]
        return AliasTable(self.first_prob[lo:hi], self.first_alias[lo:hi], self.indices[lo:hi])

    def second_order(self, t: int, v: int) -> AliasTable:
        lo = self.indptr[t]
        k = int(np.searchsorted(self.indices[lo : self.indptr[t + 1]], v))
        e = lo + k
        if e >= self.indptr[t + 1] or self.indices[e] != v:
            raise UsageError(f"({t}, {v}) is not an edge")
        d = self.indptr[v + 1] - self.indptr[v]
        outcomes = self.indices[self.indptr[v] : self.indptr[v + 1]]
        if not self.precomputed:
            buf = np.empty(d)
            _edge_weights(self.indptr, self.indices, self.weights, t, v, self.p, self.q, buf)
            return build_alias(buf, outcomes)
        o = self.offsets[e]
        return AliasTable(self.second_prob[o : o + d], self.second_alias[o : o + d], outcomes)


def second_order_entries(g: Graph) -> int:
    deg = g.degrees().astype(np.int64)
    return int((deg * deg).sum())


def build_transition_table(g: Graph, cfg: WalkConfig) -> TransitionTable:
    indptr, indices = g.indptr, g.indices
    w = np.ascontiguousarray(_transform(g.weights, cfg.weight_transform), dtype=np.float64)
    m = len(indices)
    first_prob = np.empty(m)
    first_alias = np.empty(m, dtype=np.int64)
    deg = g.degrees()
    sizes = deg[indices] if m else np.zeros(0, dtype=np.int64)
    offsets = np.zeros(m, dtype=np.int64)
    if m:
        offsets[1:] = np.cumsum(sizes)[:-1]
    total = int(sizes.sum())
    precomputed = total <= cfg.table_entry_limit
    if precomputed:
        sprob = np.empty(total)
        salias = np.empty(total, dtype=np.int64)
        _build_tables(indptr, indices, w, float(cfg.p), float(cfg.q), offsets, first_prob, first_alias, sprob, salias)
    else:
        sprob = np.empty(0)
        salias = np.empty(0, dtype=np.int64)
        _build_first(indptr, w, first_prob, first_alias)
    return TransitionTable(indptr, indices, w, float(cfg.p), float(cfg.q), first_prob, first_alias,
                           offsets, sprob, salias, precomputed)


@numba.njit(cache=True, nogil=True)
def _build_first(indptr, w, fprob, falias):
    n = indptr.shape[0] - 1
    maxdeg = 0
    for v in range(n):
        maxdeg = max(maxdeg, indptr[v + 1] - indptr[v])
    small = np.empty(maxdeg, dtype=np.int64)
    large = np.empty(maxdeg, dtype=np.int64)
    for v in range(n):
        lo = indptr[v]
        hi = indptr[v + 1]
        if hi > lo:
            _vose(w[lo:hi], fprob[lo:hi], falias[lo:hi], small, large)


# --- walk generation -----------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _walk_kernel(indptr, indices, w, p, q, fprob, falias, offsets, sprob, salias, precomputed,
                 seed, n_nodes, length, start, stop, out, lengths):
    maxdeg = 0
    for v in range(n_nodes):
        maxdeg = max(maxdeg, indptr[v + 1] - indptr[v])
    buf = np.empty(max(maxdeg, 1))
    state = np.empty(1, dtype=np.uint64)
    for task in range(start, stop):
        r = task // n_nodes
        u = task % n_nodes
        state[0] = _random.derive(seed, u, r)
        row = task - start
        out[row, 0] = u
        k = 1
        prev_edge = -1
        cur = u
        while k < length:
            lo = indptr[cur]
            d = indptr[cur + 1] - lo
            if d == 0:
                break
            if prev_edge < 0:
                j = _alias_draw(fprob, falias, lo, d, state)
            elif precomputed:
                j = _alias_draw(sprob, salias, offsets[prev_edge], d, state)
            else:
                prev = out[row, k - 2]
                _edge_weights(indptr, indices, w, prev, cur, p, q, buf)
                total = 0.0
                for i in range(d):
                    total += buf[i]
                target = _random.next_double(state) * total
                acc = 0.0
                j = d - 1
                for i in range(d):
                    acc += buf[i]
                    if target < acc:
                        j = i
                        break
            prev_edge = lo + j
            cur = indices[lo + j]
            out[row, k] = cur
            k += 1
        lengths[row] = k
        for i in range(k, length):
            out[row, i] = -1


@dataclass
class WalkCorpus:
    """Walks stored as a ``-1``-padded ``(n_walks, walk_length)`` array.

    Walk ``r * N + u`` is repetition ``r`` from source node ``u``.
    """

    paths: np.ndarray
    lengths: np.ndarray
    node_count: int

    @property
    def walks(self) -> list[list[int]]:
        return [row[:k].tolist() for row, k in zip(self.paths, self.lengths)]

    @property
    def node_frequency(self) -> np.ndarray:
        flat = self.paths[self.paths >= 0]
        return np.bincount(flat, minlength=self.node_count)

    def __len__(self):
        return len(self.lengths)


def generate_walks(g: Graph, cfg: WalkConfig, threads: int = 1, table: TransitionTable | None = None) -> WalkCorpus:
    """``walks_per_node`` walks of at most ``walk_length`` nodes from every node.

    Each (node, repetition) pair draws from its own stream derived from
    ``cfg.seed``, so the corpus does not depend on ``threads``.
    """
    if threads < 1:
        raise UsageError("threads must be >= 1")
    if table is None:
        table = build_transition_table(g, cfg)
    n = g.node_count
    total = n * cfg.walks_per_node
    paths = np.empty((total, cfg.walk_length), dtype=np.int64)
    lengths = np.zeros(total, dtype=np.int64)
    seed = np.uint64(_random.to_seed(cfg.seed))

    def run(lo, hi):
        _walk_kernel(table.indptr, table.indices, table.weights, table.p, table.q, table.first_prob,
                     table.first_alias, table.offsets, table.second_prob, table.second_alias,
                     table.precomputed, seed, n, cfg.walk_length, lo, hi, paths[lo:hi], lengths[lo:hi])

    if total:
        if threads == 1:
            run(0, total)
        else:
            bounds = np.linspace(0, total, threads + 1).astype(int)
            with ThreadPoolExecutor(threads) as pool:
                list(pool.map(lambda ab: run(*ab), zip(bounds[:-1], bounds[1:])))
    return WalkCorpus(paths, lengths, n)


def write_corpus(corpus: WalkCorpus, g: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for walk in corpus.walks:
            fh.write(" ".join(str(g.labels[v]) for v in walk) + "\n")
