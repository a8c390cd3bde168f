import math

import numpy as np
import pytest

from modeshare import DataError, NumericalError, UsageError
from modeshare.embedding import (
    EmbeddingMatrix,
    NegativeSampler,
    TrainConfig,
    init_embeddings,
    load_embeddings,
    readout,
    save_embeddings,
    sgns_grads,
    sgns_loss,
    sgns_pair_step,
    train,
)
from modeshare.graph import TractAssignment
from modeshare.walker import WalkConfig, WalkCorpus, generate_walks

from conftest import make_graph
from oracles import numerical_gradient, relative_error


def two_cliques(size):
    edges = []
    for base in (0, size):
        edges += [(base + i, base + j) for i in range(size) for j in range(i + 1, size)]
    return make_graph(edges)


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


# --- initialization ---------------------------------------------------------------


def test_init_bounds_and_zero_context():
    emb = init_embeddings(1, TrainConfig(dim=4))
    assert emb.rows.shape == (1, 4) and (np.abs(emb.rows) <= 0.125).all()
    assert (emb.context_rows == 0).all()


def test_init_seeded():
    a = init_embeddings(10, TrainConfig(dim=8, seed=3)).rows
    assert np.array_equal(a, init_embeddings(10, TrainConfig(dim=8, seed=3)).rows)
    assert not np.array_equal(a, init_embeddings(10, TrainConfig(dim=8, seed=4)).rows)


def test_config_validation():
    for bad in (dict(dim=0), dict(window=0), dict(learning_rate=0.0), dict(threads=0)):
        with pytest.raises(UsageError):
            TrainConfig(**bad)


# --- pair objective ---------------------------------------------------------------


def test_zero_vectors():
    z = np.zeros(3)
    loss, g_r, g_cv, g_cn = sgns_grads(z, z, z[None, :])
    assert math.isclose(loss, 2 * math.log(2), rel_tol=1e-15)
    assert not g_r.any() and not g_cv.any() and not g_cn.any()
    emb = EmbeddingMatrix(np.zeros((3, 3)), np.zeros((3, 3)))
    sgns_pair_step(0, 1, [2], emb, 0.5)
    assert not emb.rows.any() and not emb.context_rows.any()


def test_loss_vanishes_for_aligned_pair():
    r = np.array([30.0, 30.0])
    assert sgns_loss(r, r, np.zeros((0, 2))) < 1e-300
    # overflow-safe in the other direction too
    assert math.isfinite(sgns_loss(r, -r, r[None, :]))


def test_gradient_matches_finite_differences(rng):
    for _ in range(100):
        r, cv, cn = rng.normal(size=8), rng.normal(size=8), rng.normal(size=(3, 8))
        _, g_r, g_cv, g_cn = sgns_grads(r, cv, cn)
        assert relative_error(g_r, numerical_gradient(lambda x: sgns_loss(x, cv, cn), r)) < 1e-4
        assert relative_error(g_cv, numerical_gradient(lambda x: sgns_loss(r, x, cn), cv)) < 1e-4
        assert relative_error(g_cn, numerical_gradient(lambda x: sgns_loss(r, cv, x), cn)) < 1e-4


def test_negative_equal_to_context_rejected():
    emb = EmbeddingMatrix(np.ones((2, 2)), np.ones((2, 2)))
    with pytest.raises(UsageError):
        sgns_pair_step(0, 1, [1], emb, 0.1)


# --- noise distribution -------------------------------------------------------------


def test_noise_odds():
    s = NegativeSampler([16, 1])
    assert math.isclose(s.probabilities[0] / s.probabilities[1], 8.0, rel_tol=1e-12)
    assert np.allclose(NegativeSampler([5, 5, 5, 5]).probabilities, 0.25)


def test_noise_sampling_bounds():
    s = NegativeSampler([16, 1, 4, 9])
    n = 10**6
    freq = np.bincount(s.table.draw(np.random.default_rng(1), n), minlength=4) / n
    p = s.probabilities
    assert (np.abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / n)).all()


def test_noise_excludes_context():
    s = NegativeSampler([100, 1, 1], seed=2)
    assert 0 not in s.draw(exclude=0, size=500)


# --- training -----------------------------------------------------------------------


def test_one_walk_pair_count_and_reference_updates():
    corpus = WalkCorpus(np.array([[0, 1]]), np.array([2]), 2)
    cfg = TrainConfig(dim=4, epochs=1, window=1, negatives_per_positive=0, learning_rate=0.5, seed=11)
    emb = train(corpus, cfg)
    assert emb.pair_counts == [2]
    ref = init_embeddings(2, cfg)
    ref.context_rows[:] = 0.25  # exercise non-zero context rows too
    got = init_embeddings(2, cfg)
    got.context_rows[:] = 0.25
    train(corpus, cfg, emb=got)
    sgns_pair_step(0, 1, [], ref, 0.5)
    sgns_pair_step(1, 0, [], ref, 0.5)
    assert np.allclose(got.rows, ref.rows, rtol=1e-14, atol=1e-16)
    assert np.allclose(got.context_rows, ref.context_rows, rtol=1e-14, atol=1e-16)


def test_one_walk_one_negative_pairs():
    corpus = WalkCorpus(np.array([[0, 1]]), np.array([2]), 2)
    emb = train(corpus, TrainConfig(dim=4, epochs=1, window=1, negatives_per_positive=1))
    assert emb.pair_counts == [2]


def test_zero_epochs_is_identity():
    g = two_cliques(4)
    corpus = generate_walks(g, WalkConfig())
    cfg = TrainConfig(dim=8, epochs=0, seed=5)
    emb = train(corpus, cfg)
    assert np.array_equal(emb.rows, init_embeddings(g.node_count, cfg).rows)
    assert not emb.context_rows.any()


def test_two_cliques_separate():
    g = two_cliques(4)
    corpus = generate_walks(g, WalkConfig(seed=1))
    R = train(corpus, TrainConfig(dim=8, seed=1)).rows
    group = [0 if int(lab) < 4 else 1 for lab in g.labels]
    intra, inter = [], []
    for i in range(8):
        for j in range(i + 1, 8):
            (intra if group[i] == group[j] else inter).append(cosine(R[i], R[j]))
    assert np.mean(intra) > np.mean(inter)


def test_loss_falls_on_average():
    g = two_cliques(8)
    first, tenth = [], []
    for seed in range(5):
        corpus = generate_walks(g, WalkConfig(seed=seed))
        h = train(corpus, TrainConfig(dim=16, epochs=10, seed=seed)).loss_history
        first.append(h[0])
        tenth.append(h[9])
    assert np.mean(tenth) < np.mean(first)


def test_training_deterministic():
    g = two_cliques(5)
    corpus = generate_walks(g, WalkConfig(seed=3))
    cfg = TrainConfig(dim=8, epochs=5, seed=3)
    assert np.array_equal(train(corpus, cfg).rows, train(corpus, cfg).rows)


def test_parallel_training_runs():
    g = two_cliques(6)
    corpus = generate_walks(g, WalkConfig(seed=3))
    emb = train(corpus, TrainConfig(dim=8, epochs=3, threads=3))
    assert np.isfinite(emb.rows).all() and len(emb.loss_history) == 3


def test_resampling_walks():
    g = two_cliques(4)
    wcfg = WalkConfig(seed=2)
    corpus = generate_walks(g, wcfg)
    cfg = TrainConfig(dim=8, epochs=3, resample_walks_each_epoch=True)
    with pytest.raises(UsageError):
        train(corpus, cfg)
    a = train(corpus, cfg, g, wcfg)
    b = train(corpus, TrainConfig(dim=8, epochs=3), g, wcfg)
    assert not np.array_equal(a.rows, b.rows)


def test_divergence_raises_numerical_error():
    g = two_cliques(4)
    corpus = generate_walks(g, WalkConfig())
    with pytest.raises(NumericalError, match="epoch 0"):
        train(corpus, TrainConfig(dim=8, epochs=2, learning_rate=1e300))


# --- readout ------------------------------------------------------------------------


def test_readout_examples():
    g = make_graph([(0, 1), (1, 2)])
    a = TractAssignment.from_labels(g, {"0": "A", "1": "A", "2": "B"})
    rows = np.array([[1.0, 3.0], [3.0, 5.0], [7.0, -1.0]])
    z = readout(rows, a)
    assert z.matrix.tolist() == [[2.0, 4.0], [7.0, -1.0]]
    assert z.embd_readout.tolist() == [3.0, 3.0]
    const = readout(np.full((3, 2), 0.3), a)
    assert (const.matrix == 0.3).all()


def test_readout_is_exact_mean(rng):
    g = make_graph([(i, i + 1) for i in range(29)])
    a = TractAssignment.from_labels(g, {str(i): f"z{i % 7}" for i in range(30)})
    R = rng.normal(size=(30, 5))
    z = readout(R, a)
    for k, zone in enumerate(a.zones):
        assert np.array_equal(z.matrix[k], R[a.members(k)].mean(axis=0))


def test_readout_linearity_exact(rng):
    g = make_graph([(i, i + 1) for i in range(6)])
    a = TractAssignment.from_labels(g, {"0": "A", "1": "B", "2": "B", "3": "C", "4": "C", "5": "C", "6": "C"})
    R1 = rng.integers(-50, 50, size=(7, 4)).astype(float)
    R2 = rng.integers(-50, 50, size=(7, 4)).astype(float)
    lhs = readout(3 * R1 - 2 * R2, a).matrix
    rhs = 3 * readout(R1, a).matrix - 2 * readout(R2, a).matrix
    assert np.array_equal(lhs, rhs)
    R1, R2 = rng.normal(size=(7, 4)), rng.normal(size=(7, 4))
    assert np.allclose(readout(0.3 * R1 + 1.7 * R2, a).matrix,
                       0.3 * readout(R1, a).matrix + 1.7 * readout(R2, a).matrix, rtol=0, atol=1e-14)


# --- file format --------------------------------------------------------------------


def test_save_load_bitwise(tmp_path, rng):
    emb = EmbeddingMatrix(rng.normal(size=(4, 3)) * 1e-3, np.zeros((4, 3)), seed=9, config_hash="abc")
    save_embeddings(emb, tmp_path / "e.txt", ["a", "b", "c", "d"])
    labels, M, meta = load_embeddings(tmp_path / "e.txt")
    assert labels == ["a", "b", "c", "d"] and np.array_equal(M, emb.rows)
    assert meta == {"seed": "9", "config": "abc"}


def test_load_errors(tmp_path):
    (tmp_path / "empty.txt").write_text("")
    with pytest.raises(DataError):
        load_embeddings(tmp_path / "empty.txt")
    (tmp_path / "cols.txt").write_text("2 3\na 1 2 3\nb 1 2\n")
    with pytest.raises(DataError, match="expected 3 values"):
        load_embeddings(tmp_path / "cols.txt")
    (tmp_path / "head.txt").write_text("x y\n")
    with pytest.raises(DataError):
        load_embeddings(tmp_path / "head.txt")
