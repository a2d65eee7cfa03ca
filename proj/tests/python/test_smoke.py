import json
import math

import numpy as np
import pytest

import eapo


def test_losses():
    value, grad = eapo.bce(0.0, 1)
    assert value == pytest.approx(math.log(2))
    assert grad == pytest.approx(-0.5)
    assert eapo.dpo(1.5, 1.5, 0)[0] == pytest.approx(math.log(2), abs=1e-12)
    no_alpha = eapo.FocalParams(gamma=0.0, alpha_weighting=False)
    assert eapo.focal(0.7, 1, no_alpha)[0] == pytest.approx(eapo.bce(0.7, 1)[0], abs=1e-12)
    with pytest.raises(eapo.Error):
        eapo.bce(float("nan"), 1)


def test_eapo_batch():
    out = eapo.eapo_batch([(0.0, 1)], [(1.0, 0.0, 1)], [(-1.0, 0.0, 1)], loss="bce")
    assert out["value"] == pytest.approx(1.4119835066408735)


def test_evaluation():
    assert eapo.roc_auc([0.3, 0.9, 0.1, 0.5], [0, 0, 1, 1]) == 0.25
    t = eapo.select_threshold_pr([0.2, 0.4, 0.6, 0.8], [0, 1, 0, 1])
    assert t == pytest.approx(0.3)
    m = eapo.metrics_at_threshold([0.2, 0.4, 0.6, 0.8], [0, 1, 0, 1], t)
    assert m["f1"] == pytest.approx(0.8)


def test_retrieval():
    x = np.array([[0, 0], [1, 0], [3, 0], [0, 2]], dtype=float)
    assert eapo.neighborhood([0.9, 0.0], x, 2) == [1, 0]
    idx = eapo.build_local_manifold(np.array([[0.9, 0], [0, 1.9]]), x, np.array([0, 1, 0, 1]), 2)
    assert idx == [0, 1, 3]


def test_train_and_finetune():
    train, test = eapo.generate_synthetic(dim=4, n_train=800, n_test=200, positive_rate=0.1, seed=1)
    assert train["features"].shape == (800, 4)
    model = eapo.Classifier.init("mlp", 4, [8], seed=0)
    assert len(model.parameters) == 4 * 8 + 8 + 8 + 1
    pre = eapo.pretrain(model, train["features"], train["labels"], epochs=5, batch_size=64)
    auc = eapo.roc_auc(pre.predict_logits(train["features"]), list(train["labels"]))
    assert auc > 0.6
    a = eapo.finetune(pre, train["features"], train["labels"], test["features"], k=3,
                      epochs=2, mode="sft-only", learning_rate=1e-3)
    b = eapo.finetune(pre, train["features"], train["labels"], test["features"], k=3,
                      epochs=2, weights=eapo.EapoWeights(lambda1=0.0, lambda2=0.0),
                      learning_rate=1e-3)
    assert a.parameters == b.parameters
    back = eapo.Classifier.from_checkpoint(a.to_checkpoint())
    assert back.parameters == a.parameters


def test_run_all(tmp_path):
    cfg = {
        "data": {"synthetic": {"dim": 3, "n_train": 400, "n_test": 100, "positive_rate": 0.1}},
        "model": {"kind": "logistic"},
        "pretrain": {"epochs": 3},
        "finetune": {"epochs": 2, "k": 3},
    }
    manifest = eapo.run_all(cfg, tmp_path)
    assert manifest["format"] == "eapo-manifest"
    assert "adapted_roc_auc" in manifest["summary"]
    assert eapo.verify_manifest(str(tmp_path / "manifest.json")) == []
    again = eapo.run_all(json.dumps(cfg), tmp_path / "again")
    assert again["artifacts"] == manifest["artifacts"]
