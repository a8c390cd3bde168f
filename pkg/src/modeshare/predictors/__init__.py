"""Behavioral predictors fitted on mixed zone inputs."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, UsageError
from .mixing import INPUT_MODES, MixedInput, Standardizer, mix
from .mnl import MNLModel, mnl_fit, mnl_loss, mnl_loss_grad, mnl_predict, softmax
from .trees import (
    BOOST_DEFAULTS,
    FOREST_DEFAULTS,
    Tree,
    TreeEnsembleModel,
    fit_tree,
    forest_fit,
    forest_predict,
    gboost_fit,
    gboost_predict,
)

PREDICTORS = ("mnl", "random_forest", "gradient_boost")
MNL_DEFAULTS = {"l2_lambda": 1e-4, "max_iters": 1000, "tol": 1e-6}


@dataclass
class FittedModel:
    """A predictor together with the standardization fitted on its training rows."""

    kind: str
    params: dict
    standardizer: Standardizer
    model: object
    mode_names: list
    column_names: list

    def predict(self, X_raw) -> np.ndarray:
        Z = self.standardizer.transform(X_raw)
        return self.model.predict(Z)


def fit_predictor(kind: str, X_raw, Y, params=None, column_names=None, mode_names=None) -> FittedModel:
    if kind not in PREDICTORS:
        raise UsageError(f"unknown predictor {kind!r}; expected one of {PREDICTORS}")
    X_raw = np.asarray(X_raw, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    std = Standardizer.fit(X_raw, column_names)
    Z = std.transform(X_raw)
    if kind == "mnl":
        p = {**MNL_DEFAULTS, **(params or {})}
        model = mnl_fit(Z, Y, p["l2_lambda"], p["max_iters"], p["tol"])
    elif kind == "random_forest":
        p = {**FOREST_DEFAULTS, **(params or {})}
        model = forest_fit(Z, Y, p)
    else:
        p = {**BOOST_DEFAULTS, **(params or {})}
        model = gboost_fit(Z, Y, p)
    names = list(column_names) if column_names is not None else [str(k) for k in range(X_raw.shape[1])]
    modes = list(mode_names) if mode_names is not None else [str(m) for m in range(Y.shape[1])]
    return FittedModel(kind, p, std, model, modes, names)


def save_model(fitted: FittedModel, path) -> None:
    doc = {
        "format": "modeshare-model/1",
        "kind": fitted.kind,
        "params": fitted.params,
        "mode_names": fitted.mode_names,
        "column_names": fitted.column_names,
        "standardizer": fitted.standardizer.to_dict(),
    }
    m = fitted.model
    if fitted.kind == "mnl":
        doc["beta"] = m.beta.tolist()
        doc["reference_mode_index"] = m.reference_mode_index
    else:
        doc["trees"] = [[t.to_dict() for t in trees] for trees in m.trees]
        doc["init"] = list(m.init)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> FittedModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a model file ({exc})") from None
    if doc.get("format") != "modeshare-model/1":
        raise DataError(f"{path}: unknown model format {doc.get('format')!r}")
    kind, params = doc["kind"], doc["params"]
    if kind == "mnl":
        model = MNLModel(np.asarray(doc["beta"], dtype=np.float64), doc["reference_mode_index"], params["l2_lambda"])
    else:
        trees = [[Tree.from_dict(t) for t in mode] for mode in doc["trees"]]
        model = TreeEnsembleModel(kind, params, trees, doc["init"])
    return FittedModel(kind, params, Standardizer.from_dict(doc["standardizer"]), model,
                       doc["mode_names"], doc["column_names"])


__all__ = [
    "BOOST_DEFAULTS", "FOREST_DEFAULTS", "INPUT_MODES", "MNL_DEFAULTS", "PREDICTORS",
    "FittedModel", "MNLModel", "MixedInput", "Standardizer", "Tree", "TreeEnsembleModel",
    "fit_predictor", "fit_tree", "forest_fit", "forest_predict", "gboost_fit", "gboost_predict",
    "load_model", "mix", "mnl_fit", "mnl_loss", "mnl_loss_grad", "mnl_predict", "save_model", "softmax",
]
