import filecmp

import numpy as np
import pytest

from modeshare import UsageError
from modeshare.config import RunConfig
from modeshare.evaluation import pearson
from modeshare.synth import (
    MODE_NAMES,
    SynthConfig,
    config_from_manifest,
    generate_city,
    run_experiment,
    write_dataset,
)

SMALL_RUN = RunConfig(dim=16, epochs=5, predictors=("mnl",), max_iters=5000)


def test_counts():
    ds = generate_city(SynthConfig(n_zones=4, nodes_per_zone=5))
    assert ds.graph.node_count == 20
    assert len(ds.assignment.zones) == 4
    assert all(len(ds.assignment.members(k)) == 5 for k in range(4))
    assert ds.shares.mode_names == list(MODE_NAMES)


def test_manifest_deterministic():
    a = generate_city(SynthConfig(seed=3)).manifest()
    assert a == generate_city(SynthConfig(seed=3)).manifest()
    assert a != generate_city(SynthConfig(seed=4)).manifest()


@pytest.mark.parametrize("seed", range(5))
def test_planted_tracks_density(seed):
    ds = generate_city(SynthConfig(seed=seed))
    assert pearson(ds.planted, ds.intra_density) >= 0.95


@pytest.mark.parametrize("layout", ["core", "band", "random"])
def test_shares_on_simplex(layout):
    ds = generate_city(SynthConfig(seed=1, dense_layout=layout))
    assert np.abs(ds.shares.shares.sum(axis=1) - 1).max() <= 1e-12
    assert (ds.shares.shares > 0).all()


def test_graph_connected():
    for seed in range(5):
        ds = generate_city(SynthConfig(seed=seed))
        g = ds.graph
        seen, stack = {0}, [0]
        while stack:
            for w in g.neighbor_ids(stack.pop()):
                if int(w) not in seen:
                    seen.add(int(w))
                    stack.append(int(w))
        assert len(seen) == g.node_count


def test_regeneration_from_manifest(tmp_path):
    ds = generate_city(SynthConfig(seed=7, n_zones=9, feature_signal=0.5))
    write_dataset(ds, tmp_path / "a")
    cfg = config_from_manifest(tmp_path / "a" / "manifest.txt")
    assert cfg == ds.config
    write_dataset(generate_city(cfg), tmp_path / "b")
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert len(cmp.left_list) == 6
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    for name in cmp.common_files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_validation():
    for bad in (dict(n_zones=0), dict(feature_signal=1.5), dict(dense_zone_fraction=-0.1),
                dict(dense_layout="ring"), dict(share_noise_scale=-1.0)):
        with pytest.raises(UsageError):
            SynthConfig(**bad)


def test_exact_features_fit():
    res = run_experiment(SynthConfig(feature_signal=1.0, share_noise_scale=0.0), SMALL_RUN)
    rep = res.report
    for travel in MODE_NAMES:
        assert rep.get("mnl", "baseline", travel).isr2 >= 0.99
        assert rep.get("mnl", "concat", travel).isr2 >= 0.95
    assert rep.mean_osr2("mnl", "baseline") >= 0.95
    assert rep.mean_osr2("mnl", "ger") <= rep.mean_osr2("mnl", "concat") + 0.05
    assert set(res.deltas) == {("mnl", m, t) for m in ("ger", "concat") for t in MODE_NAMES}
    assert "ger" in res.summary()


def test_full_report_has_27_cells():
    run = RunConfig(dim=8, epochs=2, forest_n_trees=(5,), forest_max_depth=(3,), boost_n_rounds=(5,),
                    boost_shrinkage=(0.1,))
    res = run_experiment(SynthConfig(n_zones=12, nodes_per_zone=8), run)
    assert len(res.report.cells) == 27
