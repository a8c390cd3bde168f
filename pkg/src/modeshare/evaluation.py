"""Train/test evaluation, correlation analysis, clustering and readout quantiles."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _random
from .embedding import ZoneEmbedding
from .errors import DataError, ModeShareError, NumericalError, UsageError
from .ingest import FeatureTable, ModeShareTable
from .predictors import INPUT_MODES, PREDICTORS, fit_predictor, mix


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise UsageError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def split(n: int, spec: SplitSpec = SplitSpec()) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle, then the first ``round(n * fraction)`` indices train.

    Both index arrays are returned sorted.
    """
    if n < 2:
        raise UsageError(f"need at least 2 rows to split, got {n}")
    perm = np.random.default_rng(_random.to_seed(spec.seed)).permutation(n)
    n_train = min(max(int(math.floor(n * spec.train_fraction + 0.5)), 1), n - 1)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def r_squared(y, f) -> float:
    y = np.asarray(y, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if y.shape != f.shape or y.ndim != 1:
        raise UsageError("y and f must be vectors of equal length")
    if len(y) < 2:
        raise UsageError("r_squared needs at least two values")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise NumericalError("r_squared undefined for a constant target")
    return 1.0 - float(np.sum((y - f) ** 2)) / ss_tot


# --- model evaluation ----------------------------------------------------------------


@dataclass(frozen=True)
class EvalCell:
    predictor: str
    input_mode: str
    travel_mode: str
    isr2: float
    osr2: float
    params: str


@dataclass
class EvaluationReport:
    cells: list = field(default_factory=list)
    split_seed: int = 0
    notes: list = field(default_factory=list)

    def get(self, predictor, input_mode, travel_mode) -> EvalCell:
        for c in self.cells:
            if (c.predictor, c.input_mode, c.travel_mode) == (predictor, input_mode, travel_mode):
                return c
        raise KeyError((predictor, input_mode, travel_mode))

    def mean_osr2(self, predictor, input_mode) -> float:
        vals = [c.osr2 for c in self.cells if c.predictor == predictor and c.input_mode == input_mode]
        return float(np.mean(vals))

    def extend(self, other: "EvaluationReport"):
        self.cells.extend(other.cells)
        self.notes.extend(other.notes)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["predictor", "input_mode", "travel_mode", "isr2", "osr2", "params"])
            for c in self.cells:
                w.writerow([c.predictor, c.input_mode, c.travel_mode, repr(c.isr2), repr(c.osr2), c.params])


def format_params(params: dict) -> str:
    return ";".join(f"{k}={'none' if v is None else v}" for k, v in sorted(params.items()))


def default_grid(predictor: str, seed: int = 0) -> list[dict]:
    if predictor == "mnl":
        return [{}]
    if predictor == "random_forest":
        return [{"n_trees": t, "max_depth": d, "seed": seed} for t in (100, 300) for d in (4, 8, None)]
    if predictor == "gradient_boost":
        return [{"n_rounds": r, "shrinkage": s, "max_depth": 3} for r in (100, 300) for s in (0.05, 0.1)]
    raise UsageError(f"unknown predictor {predictor!r}")


def _aligned_inputs(input_mode, features, zone_emb, shares):
    mixed = mix(features, zone_emb, input_mode)
    zs, zm = set(shares.zone_ids), set(mixed.zone_ids)
    if zs != zm:
        diff = sorted(map(str, zs ^ zm))
        raise DataError(f"{input_mode} input and share zones differ: {diff[:20]}")
    pos = {z: i for i, z in enumerate(mixed.zone_ids)}
    order = [pos[z] for z in shares.zone_ids]
    return mixed.design_matrix[order], mixed.column_names


def evaluate(predictor: str, input_mode: str, features: FeatureTable | None, zone_emb: ZoneEmbedding | None,
             shares: ModeShareTable, spec: SplitSpec = SplitSpec(), grid: Sequence[dict] | None = None) -> EvaluationReport:
    """Fit on the training split for every grid point and keep the one with the best mean OSR2."""
    if predictor not in PREDICTORS:
        raise UsageError(f"unknown predictor {predictor!r}")
    if input_mode not in INPUT_MODES:
        raise UsageError(f"unknown input mode {input_mode!r}")
    cell = f"[{predictor}/{input_mode}]"
    X, names = _aligned_inputs(input_mode, features, zone_emb, shares)
    Y = shares.shares
    train_idx, test_idx = split(len(Y), spec)
    grid = list(grid) if grid else [{}]
    best = None
    notes = []
    for params in grid:
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                fitted = fit_predictor(predictor, X[train_idx], Y[train_idx], params, names, shares.mode_names)
            pred_train = fitted.predict(X[train_idx])
            pred_test = fitted.predict(X[test_idx])
            isr2 = [r_squared(Y[train_idx, m], pred_train[:, m]) for m in range(Y.shape[1])]
            osr2 = [r_squared(Y[test_idx, m], pred_test[:, m]) for m in range(Y.shape[1])]
        except ModeShareError as exc:
            raise type(exc)(f"{cell} {format_params(params)}: {exc}") from exc
        score = float(np.mean(osr2))
        if best is None or score > best[0]:
            best = (score, params, isr2, osr2, fitted, [str(w.message) for w in caught])
    _, params, isr2, osr2, fitted, msgs = best
    notes.extend(f"{cell} {m}" for m in msgs)
    if fitted.standardizer.dropped:
        notes.append(f"{cell} dropped constant columns: {fitted.standardizer.dropped}")
    if fitted.standardizer.imputed:
        notes.append(f"{cell} imputed {fitted.standardizer.imputed} missing training values")
    cells = [EvalCell(predictor, input_mode, mode, isr2[m], osr2[m], format_params(params))
             for m, mode in enumerate(shares.mode_names)]
    return EvaluationReport(cells, spec.seed, notes)


def evaluate_all(features, zone_emb, shares, spec: SplitSpec = SplitSpec(), predictors=PREDICTORS,
                 input_modes=INPUT_MODES, grids: dict | None = None) -> EvaluationReport:
    report = EvaluationReport(split_seed=spec.seed)
    for predictor in predictors:
        grid = (grids or {}).get(predictor) or default_grid(predictor)
        for mode in input_modes:
            report.extend(evaluate(predictor, mode, features, zone_emb, shares, spec, grid))
    return report


# --- correlation ------------------------------------------------------------------


def pearson_flagged(a, b) -> tuple[float, bool]:
    """Product-moment r over pairs where both values are present.

    Returns ``(0.0, True)`` when either side is constant or fewer than two
    pairs remain.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise UsageError("pearson needs equal-length vectors")
    ok = ~(np.isnan(a) | np.isnan(b))
    a, b = a[ok], b[ok]
    if len(a) < 2:
        return 0.0, True
    da = a - a.mean()
    db = b - b.mean()
    sa = math.sqrt(float(da @ da))
    sb = math.sqrt(float(db @ db))
    if sa == 0.0 or sb == 0.0:
        return 0.0, True
    r = float(da @ db) / (sa * sb)
    return max(-1.0, min(1.0, r)), False


def pearson(a, b) -> float:
    return pearson_flagged(a, b)[0]


@dataclass
class CorrelationMatrix:
    names: list
    matrix: np.ndarray
    feature_names: list = field(default_factory=list)
    mode_names: list = field(default_factory=list)
    degenerate: set = field(default_factory=set)

    def r(self, a, b) -> float:
        return float(self.matrix[self.names.index(a), self.names.index(b)])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["", *self.names])
            for name, row in zip(self.names, self.matrix):
                w.writerow([name, *map(repr, row.tolist())])


def correlation_matrix(features: FeatureTable | None = None, shares: ModeShareTable | None = None,
                       zone_emb: ZoneEmbedding | None = None) -> CorrelationMatrix:
    """Pearson matrix over feature columns, mode shares and ``embd_readout``.

    Rows are aligned on the zone order of the first table given.
    """
    tables = [t for t in (features, shares, zone_emb) if t is not None]
    if not tables:
        raise UsageError("correlation_matrix needs at least one table")
    zones = list(tables[0].zone_ids)
    names, cols = [], []
    fnames, mnames = [], []
    if features is not None:
        ft = features.reorder(zones)
        for k, nm in enumerate(ft.column_names):
            names.append(nm)
            fnames.append(nm)
            cols.append(ft.column(nm))
    if shares is not None:
        st = shares.reorder(zones)
        for m, nm in enumerate(st.mode_names):
            names.append(nm)
            mnames.append(nm)
            cols.append(st.shares[:, m])
    if zone_emb is not None:
        names.append("embd_readout")
        cols.append(zone_emb.reorder(zones).embd_readout)
    if len(set(names)) != len(names):
        raise DataError("variable names collide across tables")
    k = len(cols)
    M = np.eye(k)
    degenerate = set()
    for i in range(k):
        for j in range(i + 1, k):
            r, flag = pearson_flagged(cols[i], cols[j])
            M[i, j] = M[j, i] = r
            if flag:
                degenerate.add((names[i], names[j]))
    return CorrelationMatrix(names, M, fnames, mnames, degenerate)


def select_features(corr: CorrelationMatrix, mode_names: Sequence[str], threshold: float = 0.05) -> list[str]:
    """Features whose absolute correlation with every travel mode reaches ``threshold``."""
    missing = [m for m in mode_names if m not in corr.names]
    if missing:
        raise UsageError(f"modes not in correlation matrix: {missing}")
    candidates = corr.feature_names or [n for n in corr.names if n not in mode_names and n != "embd_readout"]
    return [f for f in candidates if all(abs(corr.r(f, m)) >= threshold for m in mode_names)]


def dimension_correlations(zone_emb: ZoneEmbedding, features: FeatureTable, dims: int = 3) -> np.ndarray:
    """``(dims, n_features)`` Pearson r between leading embedding dimensions and features."""
    ft = features.reorder(zone_emb.zone_ids)
    dims = min(dims, zone_emb.dim)
    out = np.zeros((dims, len(ft.column_names)))
    for k in range(dims):
        for j, nm in enumerate(ft.column_names):
            out[k, j] = pearson(zone_emb.matrix[:, k], ft.column(nm))
    return out


# --- clustering --------------------------------------------------------------------


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    wcss_history: list
    iterations: int

    @property
    def wcss(self) -> float:
        return self.wcss_history[-1]


def _sq_dists(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def kmeans(data, k: int = 30, seed: int = 0, max_iters: int = 300) -> KMeansResult:
    """k-means++ seeding followed by Lloyd iterations until assignments stop changing."""
    X = data.matrix if isinstance(data, ZoneEmbedding) else np.asarray(data, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise UsageError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(_random.to_seed(seed))
    chosen = [int(rng.integers(n))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    C = X[chosen].copy()
    labels = np.full(n, -1)
    history = []
    it = 0
    for it in range(1, max_iters + 1):
        D = _sq_dists(X, C)
        new = D.argmin(axis=1)
        history.append(float(D[np.arange(n), new].sum()))
        if (new == labels).all():
            break
        labels = new
        for j in range(k):
            members = labels == j
            if members.any():
                C[j] = X[members].mean(axis=0)
        empty = [j for j in range(k) if not (labels == j).any()]
        if empty:
            dist = ((X - C[labels]) ** 2).sum(axis=1)
            taken = set()
            for j in empty:
                order = np.argsort(-dist, kind="stable")
                p = next(int(i) for i in order if int(i) not in taken)
                taken.add(p)
                C[j] = X[p]
    return KMeansResult(labels, C, history, it)


def write_clusters_csv(zone_ids, labels, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["zone", "cluster"])
        for z, c in zip(zone_ids, labels):
            w.writerow([z, int(c)])


# --- quantiles -----------------------------------------------------------------------

DEFAULT_QUANTILES = (0.05, 0.25, 0.50, 0.75, 0.95)


def quantile_zones(values, zone_ids=None, quantiles=DEFAULT_QUANTILES) -> list[tuple[float, object, float]]:
    """Zone at sorted rank ``floor(q * (N - 1))`` for each quantile (ties keep zone order)."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if n < 1:
        raise UsageError("need at least one zone")
    zone_ids = list(range(n)) if zone_ids is None else list(zone_ids)
    order = np.argsort(values, kind="stable")
    out = []
    for q in quantiles:
        if not 0 <= q <= 1:
            raise UsageError(f"quantile {q} outside [0, 1]")
        i = int(order[int(math.floor(q * (n - 1) + 1e-9))])
        out.append((float(q), zone_ids[i], float(values[i])))
    return out


def write_quantiles_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantile", "zone", "embd_readout"])
        for q, z, v in rows:
            w.writerow([repr(q), z, repr(v)])
