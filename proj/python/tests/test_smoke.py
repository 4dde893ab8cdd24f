import math

import numpy as np
import pytest

import psr


def test_synthetic_and_scarcity():
    d = psr.generate_synthetic(subjects=4, lifetime_min=20, lifetime_max=30, seed=3)
    assert d.subject_count == 4
    assert d.category == "RSTS"
    s = psr.scarcify(d, 0.5, seed=1)
    for sid in d.subject_ids:
        m = len(d.subject(sid)["intervals"])
        assert len(s.subject(sid)["intervals"]) == psr.retained_count(m, 0.5)
    with pytest.raises(ValueError):
        psr.scarcify(d, 1.0)


def test_labeling_and_fit():
    assert psr.label("weibull", 100.0, 0.0) == pytest.approx(130.0)
    assert psr.label("linear", 100.0, 30.0) == pytest.approx(70.0)
    ts = list(range(40, 161, 10))
    ys = [psr.label("weibull", 100.0, t) for t in ts]
    fit = psr.fit_theta(ys, ts, family="weibull")
    assert abs(fit["theta_hat"] - 100.0) / 100.0 < 1e-6
    single = psr.fit_theta([90.0], [10], family="linear")
    assert single["theta_hat"] == pytest.approx(100.0)


def test_metrics():
    rows = [("a", 5, None, 3.0, 0.0), ("b", 7, None, -4.0, 0.0)]
    assert psr.rmse_subject(rows) == pytest.approx(math.sqrt(12.5))
    assert psr.s_score([("a", 1, None, 10.0, 0.0)]) == pytest.approx(math.e - 1)
    with pytest.raises(ValueError):
        psr.rmse_subject([("a", 1, None, 1.0, 0.0), ("a", 2, None, 1.0, 0.0)])


def test_train_predict_roundtrip(tmp_path):
    d = psr.generate_synthetic(subjects=3, lifetime_min=20, lifetime_max=25, seed=5)
    train, _ = psr.normalize(d, d)
    labeled = psr.label_dataset(train)
    model, trace = psr.train(labeled, model="mlp", epochs=5, seed=2)
    assert len(trace) == 5
    x = np.asarray(labeled.subject(labeled.subject_ids[0])["features"])
    y = model.predict(x)
    assert y.shape == (x.shape[0],)
    model.save(tmp_path / "m.json")
    again = psr.load_model(tmp_path / "m.json")
    assert np.array_equal(again.predict(x), y)


def test_run_experiment(tmp_path):
    cfg = """
[synthetic]
train_subjects = 6
test_subjects = 3
lifetime_min = 30
lifetime_max = 40
[model]
model = mlp
epochs = 5
[experiment]
replicates = 2
"""
    res = psr.run_experiment(cfg, tmp_path)
    assert res["summary"]["rmse_i"]["n"] == 2
    assert (tmp_path / "metrics.csv").exists()
    with pytest.raises(ValueError):
        psr.run_experiment("[model]\nbogus = 1\n")
