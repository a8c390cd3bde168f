"""``modeshare`` command-line interface.

Every command accepts ``--config FILE`` (flat ``key = value``) and flags that
mirror config keys with ``_`` written as ``-``; flags win over the file.
Exit status: 0 success, 1 usage error, 2 data error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields

import numpy as np

from . import __version__
from .config import RunConfig, format_value, load_config, parse_entries, schema_hash
from .errors import DataError, ModeShareError, NumericalError, UsageError

PATHS = ("edges", "zones", "features", "shares", "areas", "out_dir")
NETWORK = ("simplify", "prune_rounds")
WALK = ("p", "q", "walk_length", "walks_per_node", "weight_transform", "table_entry_limit")
TRAIN = ("dim", "epochs", "learning_rate", "negatives_per_positive", "window", "resample_walks_each_epoch")
EVAL = ("train_fraction", "predictors", "input_modes", "l2_lambda", "max_iters", "tol", "forest_n_trees",
        "forest_max_depth", "boost_n_rounds", "boost_shrinkage", "boost_max_depth", "feature_threshold")
ALL_KEYS = tuple(f.name for f in fields(RunConfig))


class _ArgumentError(UsageError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(f"{self.prog}: error: {message}")


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_keys(parser, keys):
    group = parser.add_argument_group("configuration keys (override --config)")
    for key in keys:
        default = getattr(RunConfig, key, None)
        group.add_argument(_flag(key), dest=f"key_{key}", metavar="VALUE",
                           help=f"default: {format_value(default)}")


def _config(args) -> RunConfig:
    raw = {k[4:]: v for k, v in vars(args).items() if k.startswith("key_") and v is not None}
    overrides = parse_entries(raw, "flags")
    if getattr(args, "threads", None) is not None:
        overrides["threads"] = args.threads
    return load_config(args.config, overrides)


def _require(value, flag):
    if not value:
        raise UsageError(f"{flag} is required")
    return value


# --- command bodies ----------------------------------------------------------------


def cmd_simplify(args):
    from .graph import build_graph
    from .ingest import parse_edge_csv, prune_dead_ends, simplify_with_summary, write_edge_csv

    cfg = _config(args)
    graph = build_graph(parse_edge_csv(_require(cfg.edges, "--edges")))
    graph, summary = simplify_with_summary(graph)
    if cfg.prune_rounds:
        graph = prune_dead_ends(graph, cfg.prune_rounds)
    write_edge_csv(graph, _require(args.out, "--out"))
    text = summary.to_text()
    if args.summary:
        with open(args.summary, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stderr.write(text)


def cmd_metrics(args):
    from .graph import build_graph, restrict_assignment
    from .ingest import compute_network_metrics, parse_area_csv, parse_edge_csv, parse_zone_csv, write_metrics_csv
    from .pipeline import prepare_graph

    cfg = _config(args)
    graph = build_graph(parse_edge_csv(_require(cfg.edges, "--edges")))
    graph, _ = prepare_graph(graph, cfg)
    assignment, _ = restrict_assignment(graph, parse_zone_csv(_require(cfg.zones, "--zones")))
    metrics = compute_network_metrics(graph, assignment, parse_area_csv(_require(cfg.areas, "--areas")))
    write_metrics_csv(metrics, _require(args.out, "--out"))


def cmd_embed(args):
    from .embedding import save_embeddings, train
    from .graph import build_graph
    from .ingest import parse_edge_csv
    from .pipeline import prepare_graph, stage_seeds
    from .walker import generate_walks, write_corpus

    cfg = _config(args)
    seeds = stage_seeds(cfg.seed)
    graph = build_graph(parse_edge_csv(_require(cfg.edges, "--edges")))
    graph, _ = prepare_graph(graph, cfg)
    walk_cfg = cfg.walk_config(seeds["walks"])
    corpus = generate_walks(graph, walk_cfg, threads=cfg.threads)
    if args.walks_out:
        write_corpus(corpus, graph, args.walks_out)
    emb = train(corpus, cfg.train_config(seeds["train"]), graph, walk_cfg)
    save_embeddings(emb, _require(args.out, "--out"), graph.labels)


def cmd_readout(args):
    from .embedding import load_embeddings, readout, save_embeddings
    from .graph import TractAssignment
    from .ingest import parse_zone_csv

    cfg = _config(args)
    labels, matrix, meta = load_embeddings(_require(args.embeddings, "--embeddings"))
    node_zone = parse_zone_csv(_require(cfg.zones, "--zones"))
    missing = [lab for lab in labels if lab not in node_zone]
    if missing:
        raise DataError(f"{len(missing)} embedded nodes have no zone, e.g. {missing[:5]}")
    zones = list(dict.fromkeys(node_zone[lab] for lab in labels))
    pos = {z: i for i, z in enumerate(zones)}
    assignment = TractAssignment(np.array([pos[node_zone[lab]] for lab in labels], dtype=np.int64), zones)
    zemb = readout(matrix, assignment)
    save_embeddings(zemb, _require(args.out, "--out"), seed=meta.get("seed"), config_hash=meta.get("config"))


def _tables(cfg, args, need_features, need_emb):
    from .embedding import load_zone_embedding
    from .ingest import parse_feature_csv, parse_share_csv

    features = parse_feature_csv(cfg.features) if cfg.features else None
    zemb = load_zone_embedding(args.zone_embeddings) if getattr(args, "zone_embeddings", None) else None
    if need_features and features is None:
        raise UsageError("--features is required for baseline and concat inputs")
    if need_emb and zemb is None:
        raise UsageError("--zone-embeddings is required for ger and concat inputs")
    shares = parse_share_csv(cfg.shares) if cfg.shares else None
    return features, zemb, shares


def _parse_params(text):
    if not text:
        return {}
    raw = dict(item.split("=", 1) for item in text.split(";") if item.strip())
    out = {}
    for k, v in raw.items():
        v = v.strip()
        if v.lower() == "none":
            out[k.strip()] = None
        elif v.lower() in ("true", "false"):
            out[k.strip()] = v.lower() == "true"
        else:
            try:
                out[k.strip()] = int(v)
            except ValueError:
                try:
                    out[k.strip()] = float(v)
                except ValueError:
                    raise UsageError(f"bad parameter value {k}={v}") from None
    return out


def cmd_fit(args):
    from .predictors import PREDICTORS, fit_predictor, mix, save_model

    cfg = _config(args)
    if args.predictor not in PREDICTORS:
        raise UsageError(f"--predictor must be one of {PREDICTORS}")
    features, zemb, shares = _tables(cfg, args, args.input_mode != "ger", args.input_mode != "baseline")
    if shares is None:
        raise UsageError("--shares is required")
    mixed = mix(features, zemb, args.input_mode)
    pos = {z: i for i, z in enumerate(mixed.zone_ids)}
    missing = [z for z in shares.zone_ids if z not in pos]
    if missing:
        raise DataError(f"zones missing from inputs: {missing[:10]}")
    X = mixed.design_matrix[[pos[z] for z in shares.zone_ids]]
    params = cfg.grids(0)[args.predictor][0] if args.predictor == "mnl" else {}
    params.update(_parse_params(args.params))
    fitted = fit_predictor(args.predictor, X, shares.shares, params, mixed.column_names, shares.mode_names)
    save_model(fitted, _require(args.out, "--out"))


def cmd_evaluate(args):
    from .evaluation import evaluate_all
    from .pipeline import stage_seeds

    cfg = _config(args)
    seeds = stage_seeds(cfg.seed)
    need_f = any(m in ("baseline", "concat") for m in cfg.input_modes)
    need_e = any(m in ("ger", "concat") for m in cfg.input_modes)
    features, zemb, shares = _tables(cfg, args, need_f, need_e)
    if shares is None:
        raise UsageError("--shares is required")
    report = evaluate_all(features, zemb, shares, cfg.split_spec(seeds["split"]), cfg.predictors,
                          cfg.input_modes, cfg.grids(seeds["forest"]))
    report.to_csv(_require(args.out, "--out"))
    for note in report.notes:
        print(f"evaluate: note: {note}", file=sys.stderr)


def cmd_correlate(args):
    from .evaluation import correlation_matrix

    cfg = _config(args)
    features, zemb, shares = _tables(cfg, args, False, False)
    corr = correlation_matrix(features, shares, zemb)
    corr.to_csv(_require(args.out, "--out"))


def cmd_cluster(args):
    from .embedding import load_zone_embedding
    from .evaluation import kmeans, write_clusters_csv
    from .pipeline import stage_seeds

    cfg = _config(args)
    zemb = load_zone_embedding(_require(args.zone_embeddings, "--zone-embeddings"))
    res = kmeans(zemb, cfg.kmeans_k, stage_seeds(cfg.seed)["kmeans"])
    write_clusters_csv(zemb.zone_ids, res.labels, _require(args.out, "--out"))


def cmd_quantiles(args):
    from .embedding import load_zone_embedding
    from .evaluation import quantile_zones, write_quantiles_csv

    cfg = _config(args)
    zemb = load_zone_embedding(_require(args.zone_embeddings, "--zone-embeddings"))
    rows = quantile_zones(zemb.embd_readout, zemb.zone_ids, cfg.quantiles)
    write_quantiles_csv(rows, _require(args.out, "--out"))


def cmd_synth(args):
    from .synth import SynthConfig, generate_city, write_dataset

    values = {}
    for f in fields(SynthConfig):
        v = getattr(args, f"synth_{f.name}")
        if v is not None:
            values[f.name] = v
    paths = write_dataset(generate_city(SynthConfig(**values)), _require(args.out_dir, "--out-dir"))
    for name, path in paths.items():
        print(f"{name} = {path}")


def cmd_pipeline(args):
    from .pipeline import run_pipeline, stderr_log

    cfg = _config(args)
    result, paths = run_pipeline(cfg, None if args.quiet else stderr_log)
    for note in result.notes:
        print(f"pipeline: note: {note}", file=sys.stderr)
    print(f"report = {paths['report']}")


# --- parser ------------------------------------------------------------------------------

COMMANDS = {
    "simplify": (cmd_simplify, "contract degree-2 chains and merge parallel edges", ("edges",) + NETWORK),
    "metrics": (cmd_metrics, "per-zone road network metrics", ("edges", "zones", "areas") + NETWORK),
    "embed": (cmd_embed, "biased random walks and skip-gram node embeddings",
              ("seed", "edges") + NETWORK + WALK + TRAIN),
    "readout": (cmd_readout, "mean-pool node embeddings into zone embeddings", ("zones",)),
    "fit": (cmd_fit, "fit one predictor on all zones and save it as JSON",
            ("features", "shares", "l2_lambda", "max_iters", "tol")),
    "evaluate": (cmd_evaluate, "train/test evaluation over predictors and input modes",
                 ("seed", "features", "shares") + EVAL),
    "correlate": (cmd_correlate, "Pearson matrix over features, shares and embd_readout", ("features", "shares")),
    "cluster": (cmd_cluster, "k-means over zone embeddings", ("seed", "kmeans_k")),
    "quantiles": (cmd_quantiles, "zones at embd_readout quantiles", ("quantiles",)),
    "synth": (cmd_synth, "write a synthetic city with planted mode-share signal", ()),
    "pipeline": (cmd_pipeline, "run simplify, embed, readout, evaluate and the analyses", ALL_KEYS),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="modeshare", description="Road-network embeddings for zone-level mode-share models.")
    parser.add_argument("--version", action="version",
                        version=f"modeshare {__version__} (config schema {schema_hash()})")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, (func, help_text, keys) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        if name != "synth":
            p.add_argument("--config", metavar="FILE", help="flat key = value configuration file")
            p.add_argument("--threads", type=int, metavar="N", help="worker threads (default 1, deterministic)")
            _add_keys(p, [k for k in keys if k not in ("threads",)])
        if name in ("simplify", "metrics", "embed", "readout", "fit", "evaluate", "correlate", "cluster", "quantiles"):
            p.add_argument("--out", metavar="PATH", help="output file")
        if name == "simplify":
            p.add_argument("--summary", metavar="PATH", help="write the length ledger here instead of stderr")
        if name == "embed":
            p.add_argument("--walks-out", metavar="PATH", help="also write the walk corpus")
        if name == "readout":
            p.add_argument("--embeddings", metavar="PATH", help="node embedding file")
        if name in ("fit", "evaluate", "correlate", "cluster", "quantiles"):
            p.add_argument("--zone-embeddings", metavar="PATH", help="zone embedding file")
        if name == "fit":
            p.add_argument("--predictor", default="mnl", help="mnl, random_forest or gradient_boost")
            p.add_argument("--input-mode", default="concat", help="baseline, ger or concat")
            p.add_argument("--params", metavar="K=V;...", help="predictor hyperparameters")
        if name == "synth":
            from .synth import SynthConfig
            p.add_argument("--out-dir", metavar="DIR", help="directory for the generated CSVs")
            for f in fields(SynthConfig):
                kind = {"int": int, "float": float}.get(str(f.type), str)
                p.add_argument(_flag(f.name), dest=f"synth_{f.name}", type=kind, metavar="VALUE",
                               help=f"default: {f.default}")
        if name == "pipeline":
            p.add_argument("--quiet", action="store_true", help="suppress stage logs")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    command = "modeshare"
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help(sys.stderr)
            return UsageError.exit_code
        command = args.command
        args.func(args)
    except _ArgumentError as exc:
        print(exc, file=sys.stderr)
        return exc.exit_code
    except ModeShareError as exc:
        print(f"{command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"{command}: error: file not found: {exc.filename}", file=sys.stderr)
        return DataError.exit_code
    except OSError as exc:
        print(f"{command}: error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except (FloatingPointError, OverflowError) as exc:
        print(f"{command}: error: {exc}", file=sys.stderr)
        return NumericalError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
