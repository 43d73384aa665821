import math

import numpy as np
import pandas as pd
import pytest

from conftest import small_farm
from windgain import evaluation as ev
from windgain.dataset import AlignedDataset
from windgain.errors import (
    BinWidthMismatch,
    DegenerateDenominator,
    EmptyPredictionSet,
    TooFewRecords,
)

VARS = ["V-CTRn", "PW-CTRn"]


def preds(y, yhat, power=None):
    return ev.PredictionSet.build(y, yhat, power)


# -- folds -------------------------------------------------------------------------
def test_folds_of_one_hundred():
    plan = ev.make_folds(100, 0)
    assert plan.sizes().tolist() == [20] * 5


def test_folds_balanced_for_seven():
    assert sorted(ev.make_folds(7, 1).sizes().tolist()) == [1, 1, 1, 2, 2]


def test_folds_partition_and_determinism():
    a, b = ev.make_folds(123, 9), ev.make_folds(123, 9)
    np.testing.assert_array_equal(a.fold_of, b.fold_of)
    idx = np.concatenate([a.test_index(f) for f in range(1, 6)])
    assert sorted(idx.tolist()) == list(range(123))
    for f in range(1, 6):
        assert set(a.train_index(f)).isdisjoint(a.test_index(f))
    assert not np.array_equal(a.fold_of, ev.make_folds(123, 10).fold_of)


def test_too_few_records():
    with pytest.raises(TooFewRecords):
        ev.make_folds(4, 0)


def test_grouped_folds_keep_copies_together():
    groups = np.repeat(np.arange(40), 3)
    plan = ev.make_folds(120, 5, groups=groups)
    for g in range(40):
        assert len(set(plan.fold_of[groups == g])) == 1
    assert plan.sizes().tolist() == [24] * 5


# -- measures ------------------------------------------------------------------------
def test_rmse_examples():
    assert ev.rmse(preds([1, 2], [1, 2])) == 0.0
    assert ev.rmse(preds([3, -4], [0, 0])) == pytest.approx(3.5355339, abs=1e-6)
    a = ev.rmse(preds([5, 7, 9], [4, 8, 8]))
    assert ev.rmse(preds([105, 107, 109], [104, 108, 108])) == pytest.approx(a, rel=1e-14)
    with pytest.raises(EmptyPredictionSet):
        ev.rmse(preds([], []))


def test_bias_examples():
    assert ev.bias_pct(preds([4, 5], [4, 5])) == 0.0
    assert ev.bias_pct(preds([9, 9], [10, 10])) == pytest.approx(0.10, rel=1e-15)
    with pytest.raises(DegenerateDenominator):
        ev.bias_pct(preds([1, 2], [0, 0]))


def test_bias_curve_medians():
    c = ev.bias_curve(preds([1, 2, 3], [0, 0, 0], [10, 20, 30]), 100, 1)
    assert c.as_dict() == {0: 2.0}
    c = ev.bias_curve(preds([1, 2, 3, 10], [0, 0, 0, 0], [10, 20, 30, 40]), 100, 1)
    assert c.as_dict() == {0: 2.5}


def test_bin_assignment():
    c = ev.bias_curve(preds([1.0], [0.0], [250.0]), 100, 1)
    assert c.bin_id.tolist() == [2]
    assert c.bin_mid.tolist() == [250.0]
    assert ev.bin_ids([-0.5, 0, 99.999, 100], 100).tolist() == [-1, 0, 0, 1]


def test_sparse_bins_dropped():
    power = [10, 20, 30, 40, 50, 150, 160]
    c = ev.bias_curve(preds(np.ones(7), np.zeros(7), power), 100, 5)
    assert c.bin_id.tolist() == [0]
    assert c.count.tolist() == [5]


def test_median_breakdown_bound():
    base = ev.bias_curve(preds([1, 2, 3, 4, 5], np.zeros(5), np.full(5, 50)), 100, 1).value[0]
    hit = ev.bias_curve(preds([1, 2, 3, 4, 1e12], np.zeros(5), np.full(5, 50)), 100, 1).value[0]
    assert abs(hit - base) <= 2


def test_average_curves():
    curves = [ev.BiasCurve.from_mapping(100, {0: v, 1: 10 * v}, {0: 5, 1: 5})
              for v in (1.0, 2.0, 3.0, 4.0, 5.0)]
    avg = ev.average_curves(curves)
    assert avg.as_dict() == {0: 3.0, 1: 30.0}
    assert avg.counts() == {0: 25, 1: 25}
    sparse = curves[:2] + [ev.BiasCurve.from_mapping(100, {0: 9.0}, {0: 5})]
    assert ev.average_curves(sparse).as_dict() == {0: 4.0}


def test_curve_diff():
    a = ev.BiasCurve.from_mapping(100, {1: 5.0, 2: 1.0}, {1: 6, 2: 7})
    b = ev.BiasCurve.from_mapping(100, {1: 2.0, 3: 4.0}, {1: 9, 3: 5})
    d = ev.curve_diff(a, b)
    assert d.as_dict() == {1: 3.0}
    assert d.counts() == {1: 6}
    assert ev.curve_diff(a, a).as_dict() == {1: 0.0, 2: 0.0}
    assert (ev.curve_diff(b, a).value == -d.value).all()
    c = ev.BiasCurve.from_mapping(100, {7: 1.0})
    assert len(ev.curve_diff(a, c)) == 0
    with pytest.raises(BinWidthMismatch):
        ev.curve_diff(a, ev.BiasCurve.from_mapping(50, {1: 1.0}))


def test_curve_frames():
    c = ev.BiasCurve.from_mapping(100, {0: 1.5, 3: -2.0}, {0: 5, 3: 6})
    f = c.to_frame(fold=2)
    assert f.columns.tolist() == ["bin_mid", "value", "count", "fold"]
    assert f["bin_mid"].tolist() == [50.0, 350.0]


# -- cross-validation ------------------------------------------------------------------
def test_cv_metrics_are_fold_means(farm_small):
    _, _, ds = farm_small
    folds = ev.make_folds(ds.n_p1, 0)
    m = ev.cv_evaluate(ds, "REF", VARS, folds)
    assert len(m.per_fold) == 5
    assert m.cv_rmse == pytest.approx(np.mean([f.rmse for f in m.per_fold]), abs=1e-12)
    assert m.cv_bias == pytest.approx(np.mean([f.bias for f in m.per_fold]), abs=1e-12)
    full = [b for b in m.cv_bias_curve.bin_id
            if all(b in f.curve.as_dict() for f in m.per_fold)]
    for b in full:
        assert m.cv_bias_curve.as_dict()[b] == pytest.approx(
            np.mean([f.curve.as_dict()[b] for f in m.per_fold]), abs=1e-12)
    # every P1 row is predicted exactly once
    idx = np.concatenate([f.predictions.index for f in m.per_fold])
    assert sorted(idx.tolist()) == np.flatnonzero(ds.p1_mask).tolist()


def test_cv_is_bit_identical(farm_small):
    _, _, ds = farm_small
    folds = ev.make_folds(ds.n_p1, 4)
    a = ev.cv_evaluate(ds, "CTR-b", VARS, folds)
    b = ev.cv_evaluate(ds, "CTR-b", VARS, folds)
    assert a.to_dict() == b.to_dict()


def test_cv_pair_matches_single_targets(farm_small):
    _, _, ds = farm_small
    folds = ev.make_folds(ds.n_p1, 2)
    ref, ctrb = ev.cv_evaluate_pair(ds, VARS, folds)
    assert ref.to_dict() == ev.cv_evaluate(ds, "REF", VARS, folds).to_dict()
    assert ctrb.to_dict() == ev.cv_evaluate(ds, "CTR-b", VARS, folds).to_dict()


def test_constant_response_gives_zero_metrics(farm_small):
    _, _, ds = farm_small
    frame = ds.frame.copy()
    frame["y_ref"] = 500.0
    const = AlignedDataset(frame, ds.cadence_seconds, ds.boundary, ds.roles)
    m = ev.cv_evaluate(const, "REF", VARS, ev.make_folds(const.n_p1, 0))
    assert m.cv_rmse == pytest.approx(0.0, abs=1e-9)
    assert m.cv_bias == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(m.cv_bias_curve.value, 0.0, atol=1e-9)


def test_cv_outputs_serialize(farm_small):
    _, _, ds = farm_small
    m = ev.cv_evaluate(ds, "REF", VARS, ev.make_folds(ds.n_p1, 0))
    f = m.curves_frame()
    assert set(f["fold"]) == {0, 1, 2, 3, 4, 5}
    d = m.to_dict()
    assert d["per_fold"][0]["n_test"] > 0
    assert all(math.isfinite(r["value"]) for r in d["cv_bias_curve"])
