"""Combine zone features and zone embeddings into one design matrix."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..embedding import ZoneEmbedding
from ..errors import DataError, UsageError
from ..ingest import FeatureTable

INPUT_MODES = ("baseline", "ger", "concat")


@dataclass
class Standardizer:
    """Column z-scoring fitted on training rows only.

    Missing entries are imputed with the training mean; columns that are
    constant (or entirely missing) on the training rows are dropped.
    """

    keep: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    dropped: list = field(default_factory=list)
    imputed: int = 0

    @classmethod
    def fit(cls, X: np.ndarray, names=None) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        d = X.shape[1]
        names = list(names) if names is not None else [str(k) for k in range(d)]
        mean = np.zeros(d)
        std = np.zeros(d)
        for k in range(d):
            col = X[:, k][~np.isnan(X[:, k])]
            if col.size:
                mean[k] = col.mean()
                std[k] = col.std()
        keep = std > 0
        return cls(np.flatnonzero(keep), mean[keep], std[keep],
                   [names[k] for k in range(d) if not keep[k]], int(np.isnan(X).sum()))

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)[:, self.keep]
        X = np.where(np.isnan(X), self.mean, X)
        return (X - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"keep": self.keep.tolist(), "mean": self.mean.tolist(), "std": self.std.tolist(),
                "dropped": list(self.dropped), "imputed": self.imputed}

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(np.asarray(d["keep"], dtype=np.int64), np.asarray(d["mean"], dtype=np.float64),
                   np.asarray(d["std"], dtype=np.float64), list(d["dropped"]), int(d["imputed"]))


@dataclass
class MixedInput:
    mode: str
    zone_ids: list
    design_matrix: np.ndarray
    column_names: list

    @property
    def d(self) -> int:
        return self.design_matrix.shape[1]

    def rows(self, idx) -> np.ndarray:
        return self.design_matrix[np.asarray(idx, dtype=np.int64)]


def _feature_matrix(features: FeatureTable) -> np.ndarray:
    X = features.values.copy()
    X[features.missing_mask] = np.nan
    return X


def mix(features: FeatureTable | None, zone_emb: ZoneEmbedding | None, mode: str) -> MixedInput:
    """Design matrix for one input mode; concat rows follow the feature table's zone order."""
    if mode not in INPUT_MODES:
        raise UsageError(f"unknown input mode {mode!r}; expected one of {INPUT_MODES}")
    emb_names = [f"ger_{k}" for k in range(zone_emb.dim)] if zone_emb is not None else []
    if mode == "baseline":
        if features is None:
            raise UsageError("baseline mode needs a feature table")
        return MixedInput(mode, list(features.zone_ids), _feature_matrix(features), list(features.column_names))
    if mode == "ger":
        if zone_emb is None:
            raise UsageError("ger mode needs a zone embedding")
        return MixedInput(mode, list(zone_emb.zone_ids), zone_emb.matrix.copy(), emb_names)
    if features is None or zone_emb is None:
        raise UsageError("concat mode needs both features and a zone embedding")
    fz, ez = set(features.zone_ids), set(zone_emb.zone_ids)
    if fz != ez:
        diff = sorted(map(str, fz ^ ez))
        raise DataError(f"feature and embedding zones differ: {diff[:20]}{' ...' if len(diff) > 20 else ''}")
    aligned = zone_emb.reorder(features.zone_ids)
    X = np.hstack([_feature_matrix(features), aligned.matrix])
    return MixedInput(mode, list(features.zone_ids), X, list(features.column_names) + emb_names)
