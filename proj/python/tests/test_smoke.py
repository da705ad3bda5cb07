# Copyright 2026 The cssmamba Authors
# SPDX-License-Identifier: Apache-2.0

import math

import numpy as np
import pytest

import cssmamba as cm

TINY = """
hidden = 8
state_dim = 4
attn_dim = 4
group_size = 2
clusters_per_class = 2
"""


def tiny_dataset():
    return cm.normalize_bands(cm.generate_synthetic(height=8, width=8, bands=6, classes=2, block=4))


def test_synthetic_shapes_and_balance():
    d = cm.generate_synthetic()
    assert d.cube.shape == (8, 24, 24)
    assert d.labels.shape == (24, 24)
    assert d.num_classes == 4
    assert np.bincount(d.labels.ravel()).tolist() == [0, 144, 144, 144, 144]


def test_container_round_trip(tmp_path):
    d = cm.generate_synthetic(seed=3)
    path = tmp_path / "scene.hsib"
    cm.save_container(path, d)
    raw = cm.load_container(path, normalize=False)
    assert np.array_equal(raw.cube, d.cube)
    assert np.array_equal(raw.labels, d.labels)
    norm = cm.load_container(path)
    assert norm.cube.min(axis=(1, 2)).tolist() == [0.0] * 8
    assert norm.cube.max(axis=(1, 2)).tolist() == [1.0] * 8
    (tmp_path / "short.hsib").write_bytes(path.read_bytes()[:-3])
    with pytest.raises(cm.FormatError):
        cm.load_container(tmp_path / "short.hsib")


def test_dataset_from_numpy():
    cube = np.arange(2 * 3 * 4, dtype=float).reshape(2, 3, 4)
    labels = np.array([[0, 1, 1, 2], [2, 2, 1, 0], [1, 1, 2, 2]])
    d = cm.Dataset(cube, labels, ["a", "b"])
    assert np.array_equal(d.cube, cube)
    with pytest.raises(cm.ShapeError):
        cm.Dataset(cube, labels.T, ["a", "b"])


def test_splits_rule():
    labels = np.array([[1] * 36 + [2] * 100])
    s = cm.make_splits(labels, 2, seed=4)
    assert [len(s[r][0]) for r in ("train", "val", "test")] == [14, 4, 18]
    assert [len(s[r][1]) for r in ("train", "val", "test")] == [30, 10, 60]
    with pytest.raises(cm.DatasetError):
        cm.make_splits(np.array([[1, 1, 2]]), 2)


def test_metrics_hand_matrix():
    m = cm.metrics_from_confusion([[8, 2], [3, 7]])
    assert m["oa"] == pytest.approx(0.75)
    assert m["aa"] == pytest.approx(0.75)
    assert m["kappa"] == pytest.approx(0.5)


def test_selective_scan_against_numpy_loop():
    rng = np.random.default_rng(0)
    b, n, di, s = 2, 5, 3, 4
    u = rng.normal(size=(b, n, di))
    delta = rng.uniform(0.05, 0.5, size=(b, n, di))
    a = -rng.uniform(0.5, 2.0, size=(di, s))
    bm = rng.normal(size=(b, n, s))
    cm_ = rng.normal(size=(b, n, s))
    d = rng.normal(size=di)
    y = cm.selective_scan(u, delta, a, bm, cm_, d)
    want = np.zeros_like(u)
    for bi in range(b):
        h = np.zeros((di, s))
        for t in range(n):
            h = np.exp(delta[bi, t][:, None] * a) * h + delta[bi, t][:, None] * bm[bi, t][None, :] * u[bi, t][:, None]
            want[bi, t] = h @ cm_[bi, t] + d * u[bi, t]
    assert np.max(np.abs(y - want)) <= 1e-12


def test_cluster_ops():
    centers = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    x = np.array([[0.1, 0.0], [0.9, 0.2], [0.1, 0.8], [0.5, 0.0]])
    assert cm.assign_nearest(x, centers).tolist() == [0, 1, 2, 0]
    w = cm.soft_assign(x, centers, tau=1.0)
    assert np.allclose(w.sum(axis=1), 1.0)
    loss = cm.cluster_loss(x[None], w[None])
    assert math.isfinite(loss)


def test_trainer_step_predict_checkpoint(tmp_path):
    d = tiny_dataset()
    t = cm.Trainer(d, TINY, seed=1)
    untrained = t.evaluate()
    assert untrained["oa"] == pytest.approx(0.5)  # zero head: everything is class 1
    totals = [t.step()["total"] for _ in range(5)]
    assert all(b < a for a, b in zip(totals, totals[1:]))
    assert t.epoch == 5
    pred = t.predict()
    assert pred.shape == (8, 8)
    assert set(np.unique(pred)) <= {1, 2}
    t.save_checkpoint(tmp_path / "ck.bin")
    back = cm.Trainer.load_checkpoint(tmp_path / "ck.bin", d)
    assert np.array_equal(back.predict(), pred)
    assert back.step()["total"] == t.step()["total"]


def test_bad_config_is_value_error():
    with pytest.raises(ValueError, match="line 1"):
        cm.parse_config("learning_rate = 1\n")


def test_train_writes_artifacts(tmp_path):
    out = cm.train(tiny_dataset(), TINY, tmp_path, epochs=3)
    assert len(out["log"]) == 3
    for name in ("train_log.csv", "report.txt", "checkpoint.bin", "map.ppm", "labels.pgm", "splits.csv"):
        assert (tmp_path / name).exists()
    assert (tmp_path / "map.ppm").read_bytes().startswith(b"P6\n8 8\n255\n")
