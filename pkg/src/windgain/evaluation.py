"""Five-fold cross-validation and the three accuracy measures.

RMSE, relative bias and the BIAS curve -- per-bin median residuals, with
bins of measured CTR-b power -- are computed per fold and then averaged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import kernel
from .dataset import ROLE_CTRB, ROLE_REF, design_columns
from .errors import (
    BinWidthMismatch,
    DegenerateDenominator,
    EmptyPredictionSet,
    NoAdmissibleK,
    TooFewRecords,
)

N_FOLDS = 5
DEFAULT_BIN_WIDTH = 100.0  # kW
DEFAULT_MIN_BIN_COUNT = 5
# A bin enters a fold-averaged curve only if retained in at least this many folds.
MIN_FOLDS_PER_BIN = 3


# ---------------------------------------------------------------------------
# Folds
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FoldPlan:
    """Random balanced assignment of Period-1 rows to folds 1..5."""

    fold_of: np.ndarray
    seed: object

    @property
    def n(self):
        return self.fold_of.size

    def sizes(self):
        return np.bincount(self.fold_of, minlength=N_FOLDS + 1)[1:]

    def test_index(self, fold):
        return np.flatnonzero(self.fold_of == fold)

    def train_index(self, fold):
        return np.flatnonzero(self.fold_of != fold)


def make_folds(n_p1, seed, groups=None):
    """Shuffle ``range(n_p1)`` and deal the rows round-robin into 5 folds.

    With ``groups`` (one label per row), whole groups are shuffled and dealt
    instead, so rows sharing a label always land in the same fold.  Bootstrap
    replicates use this to keep copies of one record out of each other's
    training sets.
    """
    if n_p1 < N_FOLDS:
        raise TooFewRecords(f"need at least {N_FOLDS} Period-1 records, got {n_p1}")
    rng = np.random.default_rng(seed)
    if groups is None:
        perm = rng.permutation(n_p1)
        fold_of = np.empty(n_p1, dtype=np.int64)
        fold_of[perm] = np.arange(n_p1) % N_FOLDS + 1
        return FoldPlan(fold_of, seed)
    groups = np.asarray(groups)
    if groups.shape != (n_p1,):
        raise ValueError(f"need one group label per row, got shape {groups.shape}")
    labels, inverse = np.unique(groups, return_inverse=True)
    if labels.size < N_FOLDS:
        raise TooFewRecords(f"need at least {N_FOLDS} distinct groups, got {labels.size}")
    group_fold = np.empty(labels.size, dtype=np.int64)
    group_fold[rng.permutation(labels.size)] = np.arange(labels.size) % N_FOLDS + 1
    return FoldPlan(group_fold[inverse], seed)


# ---------------------------------------------------------------------------
# Measures
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PredictionSet:
    index: np.ndarray
    y_true: np.ndarray
    y_hat: np.ndarray
    bin_power: np.ndarray

    @classmethod
    def build(cls, y_true, y_hat, bin_power=None, index=None):
        y_true = np.asarray(y_true, dtype=float)
        y_hat = np.asarray(y_hat, dtype=float)
        n = y_true.size
        bin_power = y_true if bin_power is None else np.asarray(bin_power, dtype=float)
        index = np.arange(n) if index is None else np.asarray(index)
        return cls(index, y_true, y_hat, bin_power)

    def __len__(self):
        return self.y_true.size

    @property
    def residuals(self):
        return self.y_true - self.y_hat


def rmse(preds):
    if len(preds) == 0:
        raise EmptyPredictionSet("RMSE of an empty prediction set")
    r = preds.residuals
    return float(math.sqrt(np.mean(r * r)))


def bias_pct(preds):
    """Relative bias sum(y_hat - y) / sum(y_hat), as a fraction.

    Positive values mean the model over-predicts.
    """
    n = len(preds)
    if n == 0:
        raise EmptyPredictionSet("bias of an empty prediction set")
    den = float(np.sum(preds.y_hat))
    if not den > 1e-6 * n:
        raise DegenerateDenominator(f"sum of predictions is {den:g} kW")
    return float(np.sum(preds.y_hat - preds.y_true)) / den


@dataclass(frozen=True)
class BiasCurve:
    """Per-bin values over bins of width ``bin_width``; bin b covers [b w, (b+1) w)."""

    bin_width: float
    bin_id: np.ndarray
    value: np.ndarray
    count: np.ndarray

    @classmethod
    def empty(cls, bin_width):
        return cls(float(bin_width), np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0, dtype=np.int64))

    @classmethod
    def from_mapping(cls, bin_width, values, counts=None):
        ids = np.array(sorted(values), dtype=np.int64)
        vals = np.array([values[b] for b in ids], dtype=float)
        cnt = np.array([(counts or {}).get(b, 0) for b in ids], dtype=np.int64)
        return cls(float(bin_width), ids, vals, cnt)

    def __len__(self):
        return self.bin_id.size

    @property
    def bin_mid(self):
        return (self.bin_id + 0.5) * self.bin_width

    def as_dict(self):
        return dict(zip(self.bin_id.tolist(), self.value.tolist()))

    def counts(self):
        return dict(zip(self.bin_id.tolist(), self.count.tolist()))

    def to_frame(self, fold=None):
        df = pd.DataFrame({"bin_mid": self.bin_mid, "value": self.value, "count": self.count})
        if fold is not None:
            df["fold"] = fold
        return df

    def to_records(self):
        return [{"bin_mid": float(m), "value": float(v), "count": int(c)}
                for m, v, c in zip(self.bin_mid, self.value, self.count)]


def bin_ids(power, bin_width):
    return np.floor(np.asarray(power, dtype=float) / bin_width).astype(np.int64)


def bias_curve(preds, bin_width=DEFAULT_BIN_WIDTH, min_bin_count=DEFAULT_MIN_BIN_COUNT):
    """Median residual ``y - y_hat`` in each bin of ``preds.bin_power``."""
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    if len(preds) == 0:
        return BiasCurve.empty(bin_width)
    ids = bin_ids(preds.bin_power, bin_width)
    resid = preds.residuals
    uniq, inverse, counts = np.unique(ids, return_inverse=True, return_counts=True)
    keep = counts >= min_bin_count
    med = np.array([np.median(resid[inverse == i]) if keep[i] else np.nan
                    for i in range(uniq.size)])
    return BiasCurve(float(bin_width), uniq[keep], med[keep], counts[keep].astype(np.int64))


def average_curves(curves, min_present=MIN_FOLDS_PER_BIN):
    """Per-bin mean over the curves in which the bin is retained.

    Bins retained in fewer than ``min_present`` curves are dropped.  ``count``
    sums the contributing counts.
    """
    curves = list(curves)
    if not curves:
        raise ValueError("no curves to average")
    width = curves[0].bin_width
    if any(c.bin_width != width for c in curves):
        raise BinWidthMismatch("curves with different bin widths")
    vals, cnts = {}, {}
    for c in curves:
        for b, v, n in zip(c.bin_id.tolist(), c.value.tolist(), c.count.tolist()):
            vals.setdefault(b, []).append(v)
            cnts[b] = cnts.get(b, 0) + n
    kept = {b: float(np.mean(v)) for b, v in vals.items() if len(v) >= min_present}
    return BiasCurve.from_mapping(width, kept, {b: cnts[b] for b in kept})


def curve_diff(ref_curve, ctrb_curve):
    """``ref - ctrb`` over the bins both curves retain; count is the smaller one."""
    if ref_curve.bin_width != ctrb_curve.bin_width:
        raise BinWidthMismatch(
            f"bin widths {ref_curve.bin_width} and {ctrb_curve.bin_width}")
    common, ia, ib = np.intersect1d(ref_curve.bin_id, ctrb_curve.bin_id,
                                    assume_unique=True, return_indices=True)
    return BiasCurve(ref_curve.bin_width, common,
                     ref_curve.value[ia] - ctrb_curve.value[ib],
                     np.minimum(ref_curve.count[ia], ctrb_curve.count[ib]))


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FoldResult:
    fold: int
    k: int
    rmse: float
    bias: float
    curve: BiasCurve
    predictions: PredictionSet = field(repr=False)


@dataclass(frozen=True)
class CvMetrics:
    target: str
    cv_rmse: float
    cv_bias: float
    cv_bias_curve: BiasCurve
    per_fold: tuple

    def to_dict(self):
        return {
            "target": self.target,
            "cv_rmse": self.cv_rmse,
            "cv_bias": self.cv_bias,
            "cv_bias_curve": self.cv_bias_curve.to_records(),
            "per_fold": [{"fold": f.fold, "k": f.k, "rmse": f.rmse, "bias": f.bias,
                          "n_test": len(f.predictions)} for f in self.per_fold],
        }

    def curves_frame(self):
        """Long table (bin_mid, value, count, fold) with fold 0 for the average."""
        parts = [f.curve.to_frame(fold=f.fold) for f in self.per_fold]
        parts.append(self.cv_bias_curve.to_frame(fold=0))
        return pd.concat(parts, ignore_index=True)


def grid_for(n_train, k_grid=None):
    """The k grid usable with ``n_train`` training rows."""
    if k_grid is None:
        grid = kernel.default_k_grid(n_train)
    else:
        grid = tuple(k for k in k_grid if 1 <= k <= n_train - 1)
    if not grid:
        raise NoAdmissibleK(f"no k in the grid fits {n_train} training rows")
    return grid


def fold_predictions(dataset, targets, variables, folds, k_grid=None):
    """Out-of-fold predictions on Period 1 for each target.

    Returns ``{target: [(fold, k, PredictionSet), ...]}``.  Targets share the
    design matrix of each fold, so their kernel fits share one distance sort.
    """
    p1 = dataset.p1_mask
    if folds.n != int(p1.sum()):
        raise ValueError(f"fold plan covers {folds.n} rows, Period 1 has {int(p1.sum())}")
    x = dataset.covariates(variables, p1)
    ys = [dataset.response(t, p1) for t in targets]
    bin_power = dataset.bin_power(p1)
    p1_rows = np.flatnonzero(p1)
    cols = tuple(design_columns(variables))

    out = {t: [] for t in targets}
    for fold in range(1, N_FOLDS + 1):
        tr, te = folds.train_index(fold), folds.test_index(fold)
        if tr.size < 2:
            raise TooFewRecords(f"fold {fold} leaves {tr.size} training rows")
        design = kernel.DesignMatrix.from_raw(x[tr], cols)
        models = kernel.fit_many(design, [y[tr] for y in ys], grid_for(tr.size, k_grid))
        preds = kernel.predict_many(models, x[te])
        for t, y, m, yh in zip(targets, ys, models, preds):
            out[t].append((fold, m.k, PredictionSet(p1_rows[te], y[te], yh, bin_power[te])))
    return out


def summarize(target, fold_preds, bin_width=DEFAULT_BIN_WIDTH,
              min_bin_count=DEFAULT_MIN_BIN_COUNT):
    per_fold = []
    for fold, k, p in fold_preds:
        per_fold.append(FoldResult(fold, k, rmse(p), bias_pct(p),
                                   bias_curve(p, bin_width, min_bin_count), p))
    return CvMetrics(
        target,
        float(np.mean([f.rmse for f in per_fold])),
        float(np.mean([f.bias for f in per_fold])),
        average_curves([f.curve for f in per_fold]),
        tuple(per_fold),
    )


def cv_evaluate(dataset, target, variables, folds, k_grid=None,
                bin_width=DEFAULT_BIN_WIDTH, min_bin_count=DEFAULT_MIN_BIN_COUNT):
    """5-fold CV of the ``target`` model (REF or CTR-b) on Period 1."""
    if not variables:
        raise ValueError("at least one covariate is required")
    preds = fold_predictions(dataset, [target], variables, folds, k_grid)
    return summarize(target, preds[target], bin_width, min_bin_count)


def cv_evaluate_pair(dataset, variables, folds, k_grid=None,
                     bin_width=DEFAULT_BIN_WIDTH, min_bin_count=DEFAULT_MIN_BIN_COUNT):
    """CV metrics of the REF and the CTR-b model, fitted side by side."""
    preds = fold_predictions(dataset, [ROLE_REF, ROLE_CTRB], variables, folds, k_grid)
    return (summarize(ROLE_REF, preds[ROLE_REF], bin_width, min_bin_count),
            summarize(ROLE_CTRB, preds[ROLE_CTRB], bin_width, min_bin_count))
