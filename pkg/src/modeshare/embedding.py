"""Skip-gram with negative sampling over walk corpora, and zone readout."""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from . import _random
from .errors import DataError, NumericalError, UsageError
from .graph import Graph, TractAssignment
from .walker import WalkConfig, WalkCorpus, _alias_draw, build_alias, generate_walks

NOISE_POWER = 0.75


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 128
    epochs: int = 100
    learning_rate: float = 0.01
    negatives_per_positive: int = 1
    window: int = 5
    seed: int = 0
    resample_walks_each_epoch: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.dim < 1:
            raise UsageError(f"dim must be >= 1, got {self.dim}")
        if self.window < 1:
            raise UsageError(f"window must be >= 1, got {self.window}")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise UsageError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise UsageError("epochs must be >= 0")
        if self.negatives_per_positive < 0:
            raise UsageError("negatives_per_positive must be >= 0")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")

    def digest(self) -> str:
        text = ",".join(f"{k}={v!r}" for k, v in sorted(asdict(self).items()) if k != "threads")
        return hashlib.sha256(text.encode()).hexdigest()[:12]


@dataclass
class EmbeddingMatrix:
    rows: np.ndarray
    context_rows: np.ndarray
    loss_history: list = field(default_factory=list)
    seed: int = 0
    config_hash: str = ""
    pair_counts: list = field(default_factory=list)  # positive pairs processed per epoch


@dataclass
class ZoneEmbedding:
    zone_ids: list
    matrix: np.ndarray
    embd_readout: np.ndarray = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.embd_readout is None:
            self.embd_readout = self.matrix.mean(axis=1)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def reorder(self, zone_ids) -> "ZoneEmbedding":
        pos = {z: i for i, z in enumerate(self.zone_ids)}
        try:
            rows = [pos[z] for z in zone_ids]
        except KeyError as exc:
            raise DataError(f"zone {exc.args[0]!r} missing from zone embedding") from None
        return ZoneEmbedding(list(zone_ids), self.matrix[rows])


def init_embeddings(n: int, cfg: TrainConfig) -> EmbeddingMatrix:
    if n < 1:
        raise UsageError("need at least one node")
    rng = np.random.default_rng(_random.to_seed(cfg.seed))
    half = 0.5 / cfg.dim
    rows = rng.uniform(-half, half, size=(n, cfg.dim))
    return EmbeddingMatrix(rows, np.zeros((n, cfg.dim)), seed=cfg.seed, config_hash=cfg.digest())


# --- pair objective -----------------------------------------------------------------


def _log_sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sgns_loss(r_u, c_v, c_neg) -> float:
    """Negative pair objective ``-(log s(c_v.r_u) + sum log s(-c_n.r_u))``."""
    c_neg = np.asarray(c_neg, dtype=np.float64).reshape(-1, len(r_u))
    return float(-_log_sigmoid(c_v @ r_u) - _log_sigmoid(-(c_neg @ r_u)).sum())


def sgns_grads(r_u, c_v, c_neg):
    """Loss and its gradients w.r.t. ``r_u``, ``c_v`` and each negative row."""
    c_neg = np.asarray(c_neg, dtype=np.float64).reshape(-1, len(r_u))
    s_pos = c_v @ r_u
    s_neg = c_neg @ r_u
    gp = _sigmoid(s_pos) - 1.0
    gn = _sigmoid(s_neg)
    g_r = gp * c_v + gn @ c_neg
    g_cv = gp * r_u
    g_cn = gn[:, None] * r_u[None, :]
    return sgns_loss(r_u, c_v, c_neg), g_r, g_cv, g_cn


def sgns_pair_step(u: int, v: int, negatives, emb: EmbeddingMatrix, lr: float):
    """One ascent step on the pair objective; updates ``emb`` in place.

    All gradients are taken at the pre-step parameters. Returns ``(emb, loss)``
    where ``loss`` is the pre-step negative objective.
    """
    negatives = np.asarray(negatives, dtype=np.int64)
    if (negatives == v).any():
        raise UsageError("a negative sample equals the positive context")
    R, C = emb.rows, emb.context_rows
    loss, g_r, g_cv, g_cn = sgns_grads(R[u].copy(), C[v].copy(), C[negatives].copy())
    R[u] -= lr * g_r
    C[v] -= lr * g_cv
    np.subtract.at(C, negatives, lr * g_cn)
    return emb, loss


# --- noise distribution -------------------------------------------------------------


class NegativeSampler:
    """Draws nodes with probability proportional to corpus frequency ** 0.75."""

    def __init__(self, frequency, seed: int = 0):
        frequency = np.asarray(frequency, dtype=np.float64)
        if frequency.sum() <= 0:
            raise UsageError("corpus is empty")
        self.weights = frequency**NOISE_POWER
        self.table = build_alias(self.weights)
        self.rng = np.random.default_rng(_random.to_seed(seed))

    @property
    def probabilities(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def draw(self, exclude: int | None = None, size: int = 1) -> np.ndarray:
        out = np.empty(size, dtype=np.int64)
        for i in range(size):
            while True:
                x = int(self.table.draw(self.rng))
                if x != exclude:
                    break
            out[i] = x
        return out


def make_negative_sampler(corpus: WalkCorpus, seed: int = 0) -> NegativeSampler:
    return NegativeSampler(corpus.node_frequency, seed)


# --- training kernel ---------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _log_sig(x):
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@numba.njit(cache=True, nogil=True)
def _sig(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@numba.njit(cache=True, nogil=True)
def _train_kernel(paths, lengths, start, stop, window, n_neg, lr, R, C, nprob, nalias, state, result):
    """SGD over walks ``start:stop``; ``result`` receives (loss sum, pairs, bad step)."""
    dim = R.shape[1]
    n_out = nprob.shape[0]
    grad = np.empty(dim)
    negs = np.empty(max(n_neg, 1), dtype=np.int64)
    gn = np.empty(max(n_neg, 1))
    loss_sum = 0.0
    pairs = 0
    for w in range(start, stop):
        L = lengths[w]
        for i in range(L):
            u = paths[w, i]
            jlo = max(0, i - window)
            jhi = min(L, i + window + 1)
            for j in range(jlo, jhi):
                if j == i:
                    continue
                v = paths[w, j]
                for k in range(n_neg):
                    x = _alias_draw(nprob, nalias, 0, n_out, state)
                    while x == v:
                        x = _alias_draw(nprob, nalias, 0, n_out, state)
                    negs[k] = x
                s = 0.0
                for d in range(dim):
                    s += C[v, d] * R[u, d]
                loss = -_log_sig(s)
                gp = 1.0 - _sig(s)
                for k in range(n_neg):
                    sn = 0.0
                    x = negs[k]
                    for d in range(dim):
                        sn += C[x, d] * R[u, d]
                    loss -= _log_sig(-sn)
                    gn[k] = -_sig(sn)
                if not math.isfinite(loss):
                    result[0] = loss_sum
                    result[1] = pairs
                    result[2] = pairs
                    return
                for d in range(dim):
                    grad[d] = gp * C[v, d]
                for k in range(n_neg):
                    x = negs[k]
                    for d in range(dim):
                        grad[d] += gn[k] * C[x, d]
                for d in range(dim):
                    C[v, d] += lr * gp * R[u, d]
                for k in range(n_neg):
                    x = negs[k]
                    for d in range(dim):
                        C[x, d] += lr * gn[k] * R[u, d]
                for d in range(dim):
                    R[u, d] += lr * grad[d]
                loss_sum += loss
                pairs += 1
    result[0] = loss_sum
    result[1] = pairs
    result[2] = -1


def _run_epoch(corpus, cfg, emb, sampler, seed, epoch):
    n_walks = len(corpus)
    workers = min(cfg.threads, max(n_walks, 1))
    bounds = np.linspace(0, n_walks, workers + 1).astype(np.int64)
    results = np.zeros((workers, 3))
    states = [np.array([_random.derive(np.uint64(seed), epoch, k)], dtype=np.uint64) for k in range(workers)]
    nprob, nalias = sampler.table.probabilities, sampler.table.aliases

    def run(k):
        _train_kernel(corpus.paths, corpus.lengths, bounds[k], bounds[k + 1], cfg.window,
                      cfg.negatives_per_positive, cfg.learning_rate, emb.rows, emb.context_rows,
                      nprob, nalias, states[k], results[k])

    if workers == 1:
        run(0)
    else:
        # Lock-free shared updates; reproducible only up to update races.
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, range(workers)))
    for k in range(workers):
        if results[k, 2] >= 0:
            step = int(results[:k, 1].sum() + results[k, 2])
            raise NumericalError(f"non-finite loss at epoch {epoch}, step {step}")
    pairs = int(results[:, 1].sum())
    return (float(results[:, 0].sum() / pairs) if pairs else 0.0), pairs


def train(corpus: WalkCorpus, cfg: TrainConfig, g: Graph | None = None, walk_cfg: WalkConfig | None = None,
          emb: EmbeddingMatrix | None = None) -> EmbeddingMatrix:
    """Fit node embeddings; ``emb.loss_history`` holds the mean pair loss per epoch.

    With ``resample_walks_each_epoch`` every epoch after the first trains on
    fresh walks seeded from ``(walk_cfg.seed, epoch)``.
    """
    n = corpus.node_count
    if emb is None:
        emb = init_embeddings(n, cfg)
    if cfg.resample_walks_each_epoch and (g is None or walk_cfg is None):
        raise UsageError("resampling walks needs the graph and walk config")
    seed = _random.to_seed(cfg.seed)
    sampler = make_negative_sampler(corpus, seed)
    current = corpus
    for epoch in range(cfg.epochs):
        if cfg.resample_walks_each_epoch and epoch > 0:
            fresh = WalkConfig(**{**asdict(walk_cfg), "seed": _random.spawn(walk_cfg.seed, epoch)})
            current = generate_walks(g, fresh, threads=cfg.threads)
        loss, pairs = _run_epoch(current, cfg, emb, sampler, seed, epoch)
        emb.loss_history.append(loss)
        emb.pair_counts.append(pairs)
    return emb


# --- readout ----------------------------------------------------------------------


def readout(emb, assignment: TractAssignment) -> ZoneEmbedding:
    """Zone rows are the mean of their member node rows."""
    rows = emb.rows if isinstance(emb, EmbeddingMatrix) else np.asarray(emb, dtype=np.float64)
    if rows.shape[0] != len(assignment.zone_of):
        raise DataError(f"embedding has {rows.shape[0]} rows, assignment covers {len(assignment.zone_of)} nodes")
    matrix = np.stack([rows[assignment.members(z)].mean(axis=0) for z in range(assignment.zone_count)])
    return ZoneEmbedding(list(assignment.zones), matrix)


# --- file format ------------------------------------------------------------------


def save_embeddings(obj, path, labels=None, seed=None, config_hash=None) -> None:
    """Write ``<count> <dim> [key=value ...]`` then one labelled row per line."""
    if isinstance(obj, ZoneEmbedding):
        matrix, labels = obj.matrix, obj.zone_ids
    elif isinstance(obj, EmbeddingMatrix):
        matrix = obj.rows
        seed = obj.seed if seed is None else seed
        config_hash = obj.config_hash if config_hash is None else config_hash
    else:
        matrix = np.asarray(obj, dtype=np.float64)
    if labels is None:
        labels = list(range(matrix.shape[0]))
    if len(labels) != matrix.shape[0]:
        raise UsageError("label count does not match row count")
    header = [str(matrix.shape[0]), str(matrix.shape[1])]
    if seed is not None:
        header.append(f"seed={seed}")
    if config_hash:
        header.append(f"config={config_hash}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(" ".join(header) + "\n")
        for lab, row in zip(labels, matrix):
            lab = str(lab)
            if not lab or any(c.isspace() for c in lab):
                raise UsageError(f"label {lab!r} cannot be written (empty or contains whitespace)")
            fh.write(lab + " " + " ".join(format(float(x), ".17g") for x in row) + "\n")


def load_embeddings(path) -> tuple[list[str], np.ndarray, dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    if not lines:
        raise DataError(f"{path}: empty embedding file")
    head = lines[0].split()
    try:
        count, dim = int(head[0]), int(head[1])
    except (IndexError, ValueError):
        raise DataError(f"{path}: corrupt header {lines[0]!r}") from None
    meta = {}
    for tok in head[2:]:
        if "=" not in tok:
            raise DataError(f"{path}: corrupt header token {tok!r}")
        k, v = tok.split("=", 1)
        meta[k] = v
    if len(lines) - 1 != count:
        raise DataError(f"{path}: header says {count} rows, found {len(lines) - 1}")
    labels, matrix = [], np.empty((count, dim))
    for i, ln in enumerate(lines[1:]):
        parts = ln.split()
        if len(parts) != dim + 1:
            raise DataError(f"{path}:{i + 2}: expected {dim} values, got {len(parts) - 1}")
        labels.append(parts[0])
        try:
            matrix[i] = [float(x) for x in parts[1:]]
        except ValueError:
            raise DataError(f"{path}:{i + 2}: non-numeric value") from None
    if not np.isfinite(matrix).all():
        raise DataError(f"{path}: non-finite value")
    return labels, matrix, meta


def load_zone_embedding(path) -> ZoneEmbedding:
    labels, matrix, _ = load_embeddings(path)
    return ZoneEmbedding(labels, matrix)
