"""Encoder forward/backward tests, gradient oracle, and training loop."""

import math

import numpy as np
import pytest

from radarplace.encoder import (
    EncoderArch,
    TrainConfig,
    TripletBatch,
    backward,
    encode,
    init_weights,
    mine_triplets,
    train,
    triplet_loss,
)
from radarplace.errors import ConfigError, DimensionError, EmptyResultError

from conftest import random_heatmap_values

SMALL_ARCH = EncoderArch(input_shape=(16, 24), channels=(1, 4, 6), pools=((2, 2), (2, 2)))


def test_default_descriptor_dim():
    arch = EncoderArch()
    # 64x768 input, three (4, 2) pools -> 1x96 map with 32 channels
    assert arch.descriptor_dim == 3072


def test_pool_divisibility_enforced():
    with pytest.raises(ConfigError):
        EncoderArch(input_shape=(30, 24), channels=(1, 4), pools=((4, 2),))
    with pytest.raises(ConfigError):
        EncoderArch(input_shape=(16, 16), channels=(1, 4, 8), pools=((2, 2),))


def test_descriptor_is_unit_norm():
    rng = np.random.default_rng(0)
    w = init_weights(SMALL_ARCH, seed=1)
    d = encode(random_heatmap_values(rng, 16, 24), w)
    assert d.dim == SMALL_ARCH.descriptor_dim
    assert np.linalg.norm(d.values) == pytest.approx(1.0)
    assert not d.degenerate


def test_degenerate_input_gets_canonical_descriptor():
    w = init_weights(SMALL_ARCH, seed=1)
    for l in range(len(w.biases)):
        w.biases[l] = -np.abs(w.biases[l]) - 1.0  # force dead rectifiers
    d = encode(np.zeros((16, 24)), w)
    assert d.degenerate
    assert d.values[0] == 1.0 and not np.any(d.values[1:])


def test_encode_rejects_wrong_input_shape():
    w = init_weights(SMALL_ARCH, seed=0)
    with pytest.raises(DimensionError):
        encode(np.zeros((16, 26)), w)


def test_triplet_loss_pinned_values():
    q = np.array([1.0, 0.0])
    p = np.array([0.0, 1.0])
    n = np.array([1.0, 0.0])
    # ||q-p|| = sqrt(2), ||q-n|| = 0, alpha = 0.5
    assert triplet_loss(q, [p], [n], 0.5) == pytest.approx(math.sqrt(2) + 0.5)
    # hinge clamps to zero when the negative is far enough
    assert triplet_loss(q, [q], [p], 0.5) == 0.0
    # closest positive wins, and losses sum over negatives
    far_p = np.array([-1.0, 0.0])
    two_n = [np.array([1.0, 0.0]), np.array([0.8, 0.0])]
    expect = sum(max(0.0 - np.linalg.norm(q - n) + 0.5, 0.0) for n in two_n)
    assert triplet_loss(q, [q, far_p], two_n, 0.5) == pytest.approx(expect)
    with pytest.raises(ConfigError):
        triplet_loss(q, [], [n], 0.5)
    with pytest.raises(ConfigError):
        triplet_loss(q, [p], [n], -0.1)


def test_zero_loss_gives_zero_gradients():
    rng = np.random.default_rng(3)
    hs = [random_heatmap_values(rng, 16, 24) for _ in range(3)]
    hs[1] = hs[0].copy()  # positive identical to query
    w = init_weights(SMALL_ARCH, seed=2)
    batch = TripletBatch(0, [1], [2], margin=0.0).bind(hs)
    grads, loss = backward(batch, w)
    assert loss == 0.0
    for gk, gb in grads:
        assert not np.any(gk) and not np.any(gb)


def test_duplicate_negative_doubles_loss_and_gradient():
    rng = np.random.default_rng(4)
    hs = [random_heatmap_values(rng, 16, 24) for _ in range(3)]
    w = init_weights(SMALL_ARCH, seed=3)
    single = backward(TripletBatch(0, [1], [2], margin=2.0).bind(hs), w)
    double = backward(TripletBatch(0, [1], [2, 2], margin=2.0).bind(hs), w)
    assert double[1] == pytest.approx(2.0 * single[1])
    for (gk1, gb1), (gk2, gb2) in zip(single[0], double[0]):
        assert np.allclose(gk2, 2.0 * gk1)
        assert np.allclose(gb2, 2.0 * gb1)


def test_analytic_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    arch = EncoderArch(input_shape=(8, 12), channels=(1, 3, 4), pools=((2, 2), None))
    hs = [random_heatmap_values(rng, 8, 12) for _ in range(4)]
    w = init_weights(arch, seed=7)
    batch = TripletBatch(0, [1], [2, 3], margin=1.0).bind(hs)
    grads, loss = backward(batch, w)
    assert loss > 0.0

    def loss_at(weights):
        dq = encode(hs[0], weights)
        dps = [encode(hs[1], weights)]
        dns = [encode(hs[2], weights), encode(hs[3], weights)]
        return triplet_loss(dq, dps, dns, 1.0)

    eps = 1e-6
    rng_pick = np.random.default_rng(8)
    checked = 0
    for l in range(arch.n_layers):
        flat_k = w.kernels[l].ravel()
        gk = grads[l][0].ravel()
        for idx in rng_pick.choice(flat_k.size, size=8, replace=False):
            wp = w.copy()
            wp.kernels[l].ravel()[idx] += eps
            wm = w.copy()
            wm.kernels[l].ravel()[idx] -= eps
            fd = (loss_at(wp) - loss_at(wm)) / (2 * eps)
            assert fd == pytest.approx(gk[idx], abs=1e-4)
            checked += 1
        gb = grads[l][1]
        for j in range(min(2, gb.size)):
            wp = w.copy()
            wp.biases[l][j] += eps
            wm = w.copy()
            wm.biases[l][j] -= eps
            fd = (loss_at(wp) - loss_at(wm)) / (2 * eps)
            assert fd == pytest.approx(gb[j], abs=1e-4)
            checked += 1
    assert checked >= 20


def test_mine_triplets_respects_radii():
    rng = np.random.default_rng(6)
    records = [(None, (float(x), 0.0)) for x in rng.uniform(0.0, 100.0, size=12)]
    batches, skipped = mine_triplets(records, r_pos=10.0, r_neg=30.0, n_pos=1, n_neg=2)
    positions = np.array([p for _, p in records])
    assert batches, "some queries should be eligible"
    for b in batches:
        q = positions[b.query_idx]
        for pi in b.positive_idxs:
            assert pi != b.query_idx
            assert np.linalg.norm(positions[pi] - q) <= 10.0
        for ni in b.negative_idxs:
            assert np.linalg.norm(positions[ni] - q) >= 30.0
    # queries without both positive and negative candidates are skipped
    for qi in range(len(records)):
        d = np.linalg.norm(positions - positions[qi], axis=1)
        ok_pos = np.sum((d <= 10.0) & (np.arange(12) != qi)) >= 1
        ok_neg = np.sum(d >= 30.0) >= 2
        mined = any(b.query_idx == qi for b in batches)
        assert mined == (ok_pos and ok_neg)
    assert skipped == len(records) - len(batches)


def test_mine_triplets_dead_zone_and_validation():
    # two records 10 m apart: neither positive (<= 3) nor negative (>= 18)
    records = [(None, (0.0, 0.0)), (None, (10.0, 0.0))]
    batches, skipped = mine_triplets(records)
    assert batches == [] and skipped == 2
    with pytest.raises(ConfigError):
        mine_triplets(records, r_pos=5.0, r_neg=5.0)
    assert mine_triplets([]) == ([], 0)


def test_lr_schedule():
    cfg = TrainConfig()
    assert cfg.lr_at(0) == 0.01
    assert cfg.lr_at(4) == 0.01
    assert cfg.lr_at(5) == 0.005
    assert cfg.lr_at(12) == pytest.approx(0.0025)
    with pytest.raises(ConfigError):
        TrainConfig(lr=-1.0)


def _toy_dataset(seed=0, n_clusters=4, per_cluster=4):
    """Clustered heatmaps whose appearance correlates with position."""
    rng = np.random.default_rng(seed)
    data = []
    for ci in range(n_clusters):
        proto = random_heatmap_values(rng, 16, 24)
        for _ in range(per_cluster):
            view = proto + 0.1 * np.abs(rng.standard_normal((16, 24)))
            pos = (40.0 * ci + float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)))
            data.append((view, pos))
    return data


def test_train_reduces_loss_and_is_deterministic():
    data = _toy_dataset()
    cfg = TrainConfig(max_epochs=4, batch_size=4, n_neg=3, seed=0)
    res1 = train(data, cfg, SMALL_ARCH)
    res2 = train(data, cfg, SMALL_ARCH)
    assert res1.weights.checksum() == res2.weights.checksum()
    assert len(res1.history) == 4
    assert res1.history[-1]["mean_loss"] < res1.history[0]["mean_loss"]
    assert 0.0 <= res1.history[-1]["val_recall1"] <= 1.0


def test_train_raises_without_triplets():
    data = [(np.ones((16, 24)), (0.0, 0.0)), (np.ones((16, 24)), (10.0, 0.0))]
    with pytest.raises(EmptyResultError):
        train(data, TrainConfig(max_epochs=1), SMALL_ARCH)


def test_descriptor_is_translation_sensitive():
    rng = np.random.default_rng(9)
    w = init_weights(SMALL_ARCH, seed=4)
    base = random_heatmap_values(rng, 16, 24)
    shifted = np.roll(base, 3, axis=1)
    d0 = encode(base, w)
    d1 = encode(shifted, w)
    assert np.linalg.norm(d0.values - d1.values) > 1e-3
