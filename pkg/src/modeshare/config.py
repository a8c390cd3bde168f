"""Flat ``key = value`` run configuration shared by the CLI and the pipeline."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import DataError, UsageError
from .evaluation import DEFAULT_QUANTILES, SplitSpec
from .embedding import TrainConfig
from .predictors import INPUT_MODES, PREDICTORS
from .walker import WalkConfig


def _optional_int(text: str):
    return None if text.strip().lower() in ("none", "") else int(text)


def _int_list(text: str) -> tuple:
    return tuple(_optional_int(t) for t in text.split(",") if t.strip())


def _float_list(text: str) -> tuple:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _name_list(text: str) -> tuple:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _path(text: str):
    t = text.strip()
    return None if t.lower() in ("", "none") else t


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of a pipeline run; stage seeds derive from ``seed``."""

    seed: int = 0
    threads: int = 1
    # inputs and outputs
    edges: str | None = None
    zones: str | None = None
    features: str | None = None
    shares: str | None = None
    areas: str | None = None
    out_dir: str = "run"
    # network preparation
    simplify: bool = True
    prune_rounds: int = 0
    # walks
    p: float = 1.0
    q: float = 1.0
    walk_length: int = 20
    walks_per_node: int = 10
    weight_transform: str = "inverse"
    table_entry_limit: int = 10**8
    # embedding
    dim: int = 128
    epochs: int = 100
    learning_rate: float = 0.01
    negatives_per_positive: int = 1
    window: int = 5
    resample_walks_each_epoch: bool = False
    # evaluation
    train_fraction: float = 0.7
    predictors: tuple = PREDICTORS
    input_modes: tuple = INPUT_MODES
    l2_lambda: float = 1e-4
    max_iters: int = 1000
    tol: float = 1e-6
    forest_n_trees: tuple = (100, 300)
    forest_max_depth: tuple = (4, 8, None)
    boost_n_rounds: tuple = (100, 300)
    boost_shrinkage: tuple = (0.05, 0.1)
    boost_max_depth: int = 3
    feature_threshold: float = 0.05
    # analysis
    kmeans_k: int = 30
    quantiles: tuple = DEFAULT_QUANTILES
    corr_dims: int = 3

    def __post_init__(self):
        if self.threads < 1:
            raise UsageError("threads must be >= 1")
        if self.prune_rounds < 0:
            raise UsageError("prune_rounds must be >= 0")
        bad = [p for p in self.predictors if p not in PREDICTORS]
        if bad or not self.predictors:
            raise UsageError(f"predictors must be drawn from {PREDICTORS}, got {self.predictors}")
        bad = [m for m in self.input_modes if m not in INPUT_MODES]
        if bad or not self.input_modes:
            raise UsageError(f"input_modes must be drawn from {INPUT_MODES}, got {self.input_modes}")
        if self.kmeans_k < 1:
            raise UsageError("kmeans_k must be >= 1")
        if self.feature_threshold < 0:
            raise UsageError("feature_threshold must be >= 0")
        if any(not 0 <= q <= 1 for q in self.quantiles):
            raise UsageError("quantiles must lie in [0, 1]")
        # surface sub-config violations at parse time
        self.walk_config(0)
        self.train_config(0)
        self.split_spec(0)

    def walk_config(self, seed: int) -> WalkConfig:
        return WalkConfig(self.p, self.q, self.walk_length, self.walks_per_node, seed,
                          self.weight_transform, self.table_entry_limit)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.dim, self.epochs, self.learning_rate, self.negatives_per_positive,
                           self.window, seed, self.resample_walks_each_epoch, self.threads)

    def split_spec(self, seed: int) -> SplitSpec:
        return SplitSpec(self.train_fraction, seed)

    def grids(self, forest_seed: int) -> dict:
        mnl = {"l2_lambda": self.l2_lambda, "max_iters": self.max_iters, "tol": self.tol}
        forest = [{"n_trees": t, "max_depth": d, "seed": forest_seed}
                  for t in self.forest_n_trees for d in self.forest_max_depth]
        boost = [{"n_rounds": r, "shrinkage": s, "max_depth": self.boost_max_depth}
                 for r in self.boost_n_rounds for s in self.boost_shrinkage]
        return {"mnl": [mnl], "random_forest": forest, "gradient_boost": boost}

    def to_text(self) -> str:
        return "".join(f"{f.name} = {format_value(getattr(self, f.name))}\n" for f in fields(self))


PARSERS = {
    "seed": int, "threads": int,
    "edges": _path, "zones": _path, "features": _path, "shares": _path, "areas": _path, "out_dir": str.strip,
    "simplify": _bool, "prune_rounds": int,
    "p": float, "q": float, "walk_length": int, "walks_per_node": int, "weight_transform": str.strip,
    "table_entry_limit": int,
    "dim": int, "epochs": int, "learning_rate": float, "negatives_per_positive": int, "window": int,
    "resample_walks_each_epoch": _bool,
    "train_fraction": float, "predictors": _name_list, "input_modes": _name_list,
    "l2_lambda": float, "max_iters": int, "tol": float,
    "forest_n_trees": _int_list, "forest_max_depth": _int_list,
    "boost_n_rounds": _int_list, "boost_shrinkage": _float_list, "boost_max_depth": int,
    "feature_threshold": float, "kmeans_k": int, "quantiles": _float_list, "corr_dims": int,
}
assert set(PARSERS) == {f.name for f in fields(RunConfig)}


def format_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(format_value(x) for x in v)
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def schema_hash() -> str:
    text = ";".join(f"{f.name}:{f.default!r}" for f in fields(RunConfig))
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def parse_entries(entries: dict, origin: str = "config") -> dict:
    """Convert raw string values; unknown keys and malformed values are usage errors."""
    out = {}
    for key, raw in entries.items():
        if key not in PARSERS:
            raise UsageError(f"{origin}: unknown key {key!r}")
        try:
            out[key] = PARSERS[key](raw)
        except ValueError as exc:
            raise UsageError(f"{origin}: bad value for {key!r}: {exc}") from None
    return out


def read_config_file(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    entries = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in entries:
            raise UsageError(f"{path}:{n}: duplicate key {key!r}")
        entries[key] = val
    return parse_entries(entries, str(path))


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file (if any), then already-typed overrides."""
    values = read_config_file(path) if path else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = set(values) - set(PARSERS)
    if unknown:
        raise UsageError(f"unknown keys: {sorted(unknown)}")
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise UsageError(str(exc)) from None


__all__ = ["PARSERS", "RunConfig", "format_value", "load_config", "parse_entries", "read_config_file",
           "schema_hash"]
