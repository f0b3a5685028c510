import math

import numpy as np
import pytest

from tempvis import model
from tempvis.calibration import (CVReport, DetectionRecord, FitError, ThresholdRecord,
                                 cross_validate, fit_delange, fit_psychometric, fit_shape_params,
                                 partition, predict_thresholds, read_detections, read_thresholds,
                                 shape_loss, synthetic_thresholds, write_detections,
                                 write_thresholds)
from tempvis.model import DEFAULT_PARAMS


def test_delange_recovers_polynomial():
    f = np.array([1, 2, 4, 6, 8, 10, 15, 20, 30, 40, 50], dtype=float)
    a = DEFAULT_PARAMS.a
    x = np.log1p(f)
    sens = np.expm1(sum(c * x ** i for i, c in enumerate(a)))
    fit = fit_delange(f, sens)
    np.testing.assert_allclose(fit.a, a, atol=1e-9)
    assert fit.r2 == pytest.approx(1.0)
    assert np.abs(fit.residuals).max() < 1e-9


def test_delange_input_checks():
    with pytest.raises(ValueError):
        fit_delange([1, 2, 3, 4], [1, 2, 3, 4])
    with pytest.raises(ValueError):
        fit_delange([5, 5, 5, 5, 5, 5], [1, 2, 3, 4, 5, 6])


def test_synthetic_grid():
    recs = synthetic_thresholds()
    assert len(recs) == 162
    assert all(r.threshold <= 0.5 for r in recs)
    assert sum(r.saturated for r in recs) == 103
    np.testing.assert_allclose(predict_thresholds([r for r in recs if not r.saturated], DEFAULT_PARAMS),
                               [r.threshold for r in recs if not r.saturated])


def test_shape_loss_zero_at_truth():
    recs = [r for r in synthetic_thresholds() if not r.saturated]
    assert shape_loss(recs, DEFAULT_PARAMS) == 0.0
    perturbed = DEFAULT_PARAMS.with_b(DEFAULT_PARAMS.b * 1.05)
    assert shape_loss(recs, perturbed) > 0


def test_shape_fit_self_consistent():
    recs = synthetic_thresholds()
    fit = fit_shape_params(recs, n_starts=2)
    kept = [r for r in recs if not r.saturated]
    pred = predict_thresholds(kept, fit.params)
    rel = np.abs(pred / [r.threshold for r in kept] - 1)
    assert rel.max() < 1e-3
    assert fit.loss < 1e-8 and fit.r2 > 0.999
    assert fit.n_records == 59
    assert set(fit.to_dict()["b"]) == set(model.B_NAMES)


def test_shape_fit_needs_enough_records():
    with pytest.raises(ValueError):
        fit_shape_params(synthetic_thresholds()[:5])


def _detections(beta0, beta1, trials=4000, seed=0):
    rng = np.random.default_rng(seed)
    levels = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0]
    out = []
    for i, c in enumerate(levels):
        psi = 0.5 + 0.5 * (1 - math.exp(-(c / beta0) ** beta1))
        out.append(DetectionRecord(f"s{i}", c, trials, int(rng.binomial(trials, psi))))
    return out


def test_psychometric_fit_recovers_weibull():
    fit = fit_psychometric(_detections(1.8, 1.5))
    assert fit.beta0 == pytest.approx(1.8, rel=0.05)
    assert fit.beta1 == pytest.approx(1.5, rel=0.1)
    assert fit.p_l < 0.02
    assert not fit.fitted_r


def test_psychometric_fit_refits_pooling_exponent():
    rng = np.random.default_rng(4)
    comps = {f"s{i}": rng.random(6) for i in range(7)}
    true_r = 2.5
    recs = []
    for i, (k, c) in enumerate(comps.items()):
        scale = 0.4 + 0.5 * i
        comps[k] = c * scale
        pooled = np.sum(comps[k] ** true_r) ** (1 / true_r)
        psi = 0.5 + 0.5 * (1 - math.exp(-(pooled / 1.8) ** 1.5))
        recs.append(DetectionRecord(k, float(pooled), 20000, int(round(20000 * psi))))
    fit = fit_psychometric(recs, comps, r=2.0)
    assert fit.fitted_r
    assert fit.beta0 == pytest.approx(1.8, rel=0.1)
    with pytest.raises(ValueError):
        fit_psychometric(recs, {"s0": [1.0]})


def test_psychometric_degenerate():
    recs = [DetectionRecord(str(i), c, 10, 10) for i, c in enumerate([1, 2, 3])]
    with pytest.raises(FitError):
        fit_psychometric(recs)
    with pytest.raises(ValueError):
        fit_psychometric(recs[:2])


def test_partition_is_order_independent_and_seeded():
    recs = synthetic_thresholds()
    a = partition(recs, 5, seed=3)
    b = partition(list(reversed(recs)), 5, seed=3)
    assert a == b
    assert sorted(len(f) for f in a) == [32, 32, 32, 33, 33]
    assert partition(recs, 5, seed=4) != a


def test_cv_report_format():
    recs = synthetic_thresholds()
    report = cross_validate(recs, k=2, n_starts=1)
    rows = report.rows()
    assert [r[0] for r in rows] == [1, 2, "Mean", "Stdev"]
    assert report.COLUMNS[:3] == ("CV-fold", "L_train", "L_test")
    values = np.array([r[1:] for r in rows[:2]])
    np.testing.assert_allclose(rows[3][1:], values.std(axis=0, ddof=1))
    assert all(r[2] < 1e-8 for r in rows[:2])
    assert "CV-fold | L_train | L_test | b1" in report.to_table()
    assert report.to_dict()["rows"][2][0] == "Mean"
    with pytest.raises(ValueError):
        cross_validate(recs, k=1)


def test_csv_roundtrips(tmp_path):
    recs = synthetic_thresholds()[:7]
    write_thresholds(tmp_path / "t.csv", recs)
    assert read_thresholds(tmp_path / "t.csv") == recs
    dets = [DetectionRecord("a", 0.5, 10, 6), DetectionRecord("b", 1.5, 10, 9)]
    write_detections(tmp_path / "d.csv", dets)
    assert read_detections(tmp_path / "d.csv") == dets


def test_record_validation():
    with pytest.raises(ValueError):
        ThresholdRecord(0, 0, 10, 10, -0.1)
    with pytest.raises(ValueError):
        DetectionRecord("x", 1.0, 5, 6)
    assert isinstance(CVReport().folds, list)
