"""Period-2 analysis: Effect, Offset and Gain curves, annualized gain, bootstrap.

For each of the REF and CTR-b models the BIAS curve is computed twice:
out-of-fold on Period 1 (5-fold CV, averaged) and on Period 2 from one model
trained on all of Period 1.  Their change is the Effect (REF) and the Offset
(CTR-b); Gain = Effect - Offset removes drift the two turbines share.  The
annualized gain weights Gain by long-term hours per power bin and divides
by the annual energy production.
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
    BootstrapInsufficient,
    EmptyPeriod,
    NonpositiveAEP,
    ReplicateFailure,
    WindGainError,
)
from .evaluation import (
    DEFAULT_BIN_WIDTH,
    DEFAULT_MIN_BIN_COUNT,
    BiasCurve,
    PredictionSet,
    bias_curve,
    bin_ids,
    grid_for,
    make_folds,
    summarize,
    fold_predictions,
)

HOURS_PER_YEAR = 8766.0
DEFAULT_REPLICATES = 10
DEFAULT_CI_LEVEL = 0.8
# Share of bootstrap replicates that must succeed before a CI is reported.
MIN_REPLICATE_SUCCESS = 0.8


# ---------------------------------------------------------------------------
# Long-term power frequency
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PowerFrequency:
    """Hours per year spent in each power bin.

    ``source`` is free text; the empirical fallback labels itself so reports
    do not pass it off as a long-term estimate.
    """

    bin_width: float
    hours: dict
    source: str = "user"

    def __post_init__(self):
        if any(h < 0 for h in self.hours.values()):
            raise ValueError("negative hours in power frequency")
        if self.total_hours > HOURS_PER_YEAR * (1 + 1e-9):
            raise ValueError(f"power frequency totals {self.total_hours:.1f} h > {HOURS_PER_YEAR} h")

    @property
    def total_hours(self):
        return float(sum(self.hours.values()))

    @classmethod
    def from_csv(cls, path, bin_width=DEFAULT_BIN_WIDTH):
        """Two columns, ``bin_mid`` (kW) and ``hours``."""
        df = pd.read_csv(path)
        missing = {"bin_mid", "hours"} - set(df.columns)
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        ids = bin_ids(df["bin_mid"].to_numpy(float), bin_width)
        hours = {}
        for b, h in zip(ids.tolist(), df["hours"].to_numpy(float).tolist()):
            hours[b] = hours.get(b, 0.0) + h
        return cls(float(bin_width), hours, source=str(path))

    def to_frame(self):
        ids = sorted(self.hours)
        return pd.DataFrame({"bin_mid": [(b + 0.5) * self.bin_width for b in ids],
                             "hours": [self.hours[b] for b in ids]})


def empirical_power_frequency(power, bin_width=DEFAULT_BIN_WIDTH):
    """Bin a power record and scale its counts to one year of hours.

    Each record stands for one cadence interval; the totals are rescaled so
    they sum to :data:`HOURS_PER_YEAR`.  This is a stand-in for a long-term
    frequency and says so in ``source``.
    """
    power = np.asarray(power, dtype=float)
    power = power[np.isfinite(power)]
    if power.size == 0:
        raise ValueError("empty power series")
    ids, counts = np.unique(bin_ids(power, bin_width), return_counts=True)
    hours = counts / counts.sum() * HOURS_PER_YEAR
    return PowerFrequency(float(bin_width), dict(zip(ids.tolist(), hours.tolist())),
                          source="empirical (not long-term)")


def empirical_aep(power):
    """Mean power (kW) times hours per year: a fallback AEP in kWh."""
    power = np.asarray(power, dtype=float)
    return float(np.nanmean(power) * HOURS_PER_YEAR)


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PeriodCurves:
    """Period-1 (CV) and Period-2 BIAS curves of one model."""

    target: str
    bias_p1: BiasCurve
    bias_p2: BiasCurve
    cv_metrics: object = field(default=None, repr=False)
    k_p2: int | None = None


def _period_models(dataset, targets, variables, folds, k_grid, bin_width, min_bin_count):
    p1, p2 = dataset.p1_mask, dataset.p2_mask
    if not p1.any():
        raise EmptyPeriod("P1")
    if not p2.any():
        raise EmptyPeriod("P2")
    fold_preds = fold_predictions(dataset, targets, variables, folds, k_grid)

    x1 = dataset.covariates(variables, p1)
    x2 = dataset.covariates(variables, p2)
    design = kernel.DesignMatrix.from_raw(x1, design_columns(variables))
    models = kernel.fit_many(design, [dataset.response(t, p1) for t in targets],
                             grid_for(len(x1), k_grid))
    preds = kernel.predict_many(models, x2)
    rows2 = np.flatnonzero(p2)
    out = {}
    for t, m, yh in zip(targets, models, preds):
        cv = summarize(t, fold_preds[t], bin_width, min_bin_count)
        p2_set = PredictionSet(rows2, dataset.response(t, p2), yh, dataset.bin_power(p2))
        out[t] = PeriodCurves(t, cv.cv_bias_curve,
                              bias_curve(p2_set, bin_width, min_bin_count), cv, m.k)
    return out


def period_curves(dataset, target, variables, folds, k_grid=None,
                  bin_width=DEFAULT_BIN_WIDTH, min_bin_count=DEFAULT_MIN_BIN_COUNT):
    """(Period-1 CV BIAS curve, Period-2 BIAS curve) of the ``target`` model.

    The Period-2 curve comes from a single model trained on all of Period 1.
    """
    pc = _period_models(dataset, [target], variables, folds, k_grid,
                        bin_width, min_bin_count)[target]
    return pc.bias_p1, pc.bias_p2


@dataclass(frozen=True)
class GainCurves:
    effect: BiasCurve
    offset: BiasCurve
    gain: BiasCurve
    excluded_bins: tuple

    def to_frame(self):
        return pd.DataFrame({
            "bin_mid": self.gain.bin_mid,
            "effect": self.effect.value,
            "offset": self.offset.value,
            "gain": self.gain.value,
            "count": self.gain.count,
        })


def effect_offset_gain(ref_p1, ref_p2, ctrb_p1, ctrb_p2):
    """Bin-wise Effect, Offset and Gain over bins retained in all four curves.

    Bins missing from any curve are listed in ``excluded_bins`` as
    ``(bin_id, reason)``.
    """
    curves = {"REF P1": ref_p1, "REF P2": ref_p2, "CTR-b P1": ctrb_p1, "CTR-b P2": ctrb_p2}
    width = ref_p1.bin_width
    if any(c.bin_width != width for c in curves.values()):
        raise BinWidthMismatch("Effect/Offset inputs have different bin widths")
    maps = {name: c.as_dict() for name, c in curves.items()}
    cnts = {name: c.counts() for name, c in curves.items()}
    all_bins = sorted(set().union(*maps.values()))
    common = [b for b in all_bins if all(b in m for m in maps.values())]
    excluded = tuple(
        (b, "missing in " + ", ".join(n for n, m in maps.items() if b not in m))
        for b in all_bins if b not in set(common))

    ids = np.array(common, dtype=np.int64)
    eff = np.array([maps["REF P2"][b] - maps["REF P1"][b] for b in common], dtype=float)
    off = np.array([maps["CTR-b P2"][b] - maps["CTR-b P1"][b] for b in common], dtype=float)
    # P2 counts: the bins that carry the change
    cnt = np.array([min(cnts["REF P2"][b], cnts["CTR-b P2"][b]) for b in common],
                   dtype=np.int64)
    return GainCurves(BiasCurve(width, ids, eff, cnt),
                      BiasCurve(width, ids, off, cnt),
                      BiasCurve(width, ids, eff - off, cnt),
                      excluded)


def annualized_gain(gain_curve, pi, aep):
    """sum_b hours_b * Gain_b / AEP, as a fraction.

    Bins without an hours entry contribute nothing.
    """
    if not aep > 0:
        raise NonpositiveAEP(f"AEP must be positive, got {aep}")
    if gain_curve.bin_width != pi.bin_width:
        raise BinWidthMismatch(
            f"gain curve bins {gain_curve.bin_width} kW, frequency bins {pi.bin_width} kW")
    total = 0.0
    for b, g in zip(gain_curve.bin_id.tolist(), gain_curve.value.tolist()):
        total += pi.hours.get(b, 0.0) * g
    return total / aep


def pi_coverage(gain_curve, pi):
    """Fraction of the frequency's hours that fall in bins of ``gain_curve``."""
    total = pi.total_hours
    if total == 0:
        return 0.0
    return sum(pi.hours.get(b, 0.0) for b in gain_curve.bin_id.tolist()) / total


# ---------------------------------------------------------------------------
# Report and bootstrap
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BootstrapResult:
    gains: np.ndarray  # NaN where the replicate failed
    failures: tuple  # (replicate, reason)
    ci_low: float
    ci_high: float
    level: float
    replicates: int
    seed: int

    @property
    def standard_error(self):
        ok = self.gains[np.isfinite(self.gains)]
        return float(np.std(ok, ddof=1)) if ok.size > 1 else math.nan

    def to_frame(self):
        reasons = dict(self.failures)
        return pd.DataFrame({
            "replicate": np.arange(1, self.replicates + 1),
            "annualized_gain": self.gains,
            "status": ["failed: " + reasons[g] if g in reasons else "ok"
                       for g in range(1, self.replicates + 1)],
        })

    def to_dict(self):
        return {"replicates": self.replicates, "seed": self.seed, "level": self.level,
                "ci_low": self.ci_low, "ci_high": self.ci_high,
                "gains": [None if not math.isfinite(g) else float(g) for g in self.gains],
                "failures": [{"replicate": g, "reason": r} for g, r in self.failures]}


@dataclass(frozen=True)
class GainReport:
    variables: tuple
    curves: GainCurves
    bias_p1_ref: BiasCurve
    bias_p2_ref: BiasCurve
    bias_p1_ctrb: BiasCurve
    bias_p2_ctrb: BiasCurve
    annualized_gain: float
    aep: float
    pi_coverage: float
    pi_source: str
    bootstrap: BootstrapResult | None = None

    @property
    def effect_curve(self):
        return self.curves.effect

    @property
    def offset_curve(self):
        return self.curves.offset

    @property
    def gain_curve(self):
        return self.curves.gain

    @property
    def excluded_bins(self):
        return self.curves.excluded_bins

    def with_bootstrap(self, result):
        return GainReport(self.variables, self.curves, self.bias_p1_ref, self.bias_p2_ref,
                          self.bias_p1_ctrb, self.bias_p2_ctrb, self.annualized_gain,
                          self.aep, self.pi_coverage, self.pi_source, result)

    def to_dict(self):
        return {
            "variables": list(self.variables),
            "annualized_gain": self.annualized_gain,
            "annualized_gain_pct": 100.0 * self.annualized_gain,
            "aep_kwh": self.aep,
            "pi_coverage": self.pi_coverage,
            "pi_source": self.pi_source,
            "curves": self.curves.to_frame().to_dict(orient="records"),
            "excluded_bins": [{"bin_mid": (b + 0.5) * self.gain_curve.bin_width, "reason": r}
                              for b, r in self.excluded_bins],
            "bias_curves": {
                "ref_p1": self.bias_p1_ref.to_records(),
                "ref_p2": self.bias_p2_ref.to_records(),
                "ctrb_p1": self.bias_p1_ctrb.to_records(),
                "ctrb_p2": self.bias_p2_ctrb.to_records(),
            },
            "bootstrap": None if self.bootstrap is None else self.bootstrap.to_dict(),
        }


def quantify_gain(dataset, variables, folds, pi, aep, k_grid=None,
                  bin_width=DEFAULT_BIN_WIDTH, min_bin_count=DEFAULT_MIN_BIN_COUNT):
    """Point estimate of the annualized gain with all intermediate curves."""
    if not aep > 0:
        raise NonpositiveAEP(f"AEP must be positive, got {aep}")
    pcs = _period_models(dataset, [ROLE_REF, ROLE_CTRB], variables, folds, k_grid,
                         bin_width, min_bin_count)
    ref, ctrb = pcs[ROLE_REF], pcs[ROLE_CTRB]
    curves = effect_offset_gain(ref.bias_p1, ref.bias_p2, ctrb.bias_p1, ctrb.bias_p2)
    return GainReport(tuple(variables), curves, ref.bias_p1, ref.bias_p2,
                      ctrb.bias_p1, ctrb.bias_p2,
                      annualized_gain(curves.gain, pi, aep), float(aep),
                      pi_coverage(curves.gain, pi), pi.source)


def percentile_interval(values, level):
    """Drop the ``floor(B (1 - level) / 2)`` smallest and largest values.

    With B = 10 and level 0.8 this returns the 2nd and 9th order statistics.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    v = np.sort(np.asarray(values, dtype=float))
    b = v.size
    if b == 0:
        raise BootstrapInsufficient("no replicate values")
    # the epsilon absorbs binary rounding of products like 10 * 0.1
    drop = int(math.floor(b * (1.0 - level) / 2.0 + 1e-9))
    drop = min(drop, (b - 1) // 2)
    return float(v[drop]), float(v[b - 1 - drop])


def replicate_seeds(seed, g):
    """Independent streams for replicate g's resample and its fold plan."""
    ss = np.random.SeedSequence([int(seed), int(g)])
    sample_ss, fold_ss = ss.spawn(2)
    return sample_ss, fold_ss


def _replicate_gain(dataset, variables, g, seed, pi, aep, k_grid, bin_width, min_bin_count):
    sample_ss, fold_ss = replicate_seeds(seed, g)
    n = len(dataset)
    idx = np.sort(np.random.default_rng(sample_ss).integers(0, n, size=n))
    rep = dataset.take(idx)
    if rep.n_p1 < 5 or rep.n_p2 == 0:
        raise ReplicateFailure(g, f"resample has {rep.n_p1} P1 / {rep.n_p2} P2 rows")
    # copies of one original record share a fold, so CV stays out-of-sample
    folds = make_folds(rep.n_p1, np.random.default_rng(fold_ss).integers(2**63),
                       groups=idx[rep.p1_mask])
    return quantify_gain(rep, variables, folds, pi, aep, k_grid,
                         bin_width, min_bin_count).annualized_gain


def bootstrap_gain(dataset, variables, pi, aep, replicates=DEFAULT_REPLICATES, seed=0,
                   ci_level=DEFAULT_CI_LEVEL, k_grid=None, bin_width=DEFAULT_BIN_WIDTH,
                   min_bin_count=DEFAULT_MIN_BIN_COUNT):
    """Row bootstrap of the pooled two-period data.

    Each replicate resamples ``len(dataset)`` rows with replacement, keeps
    each row's period label (a function of its timestamp), draws a fresh
    fold plan that keeps copies of a record together and recomputes the annualized gain with ``variables`` held
    fixed; k is reselected in every fit.
    """
    if replicates < 2:
        raise ValueError("need at least two bootstrap replicates")
    if not 0 < ci_level < 1:
        raise ValueError("ci_level must lie in (0, 1)")
    gains = np.full(replicates, np.nan)
    failures = []
    for g in range(1, replicates + 1):
        try:
            gains[g - 1] = _replicate_gain(dataset, variables, g, seed, pi, aep, k_grid,
                                           bin_width, min_bin_count)
        except ReplicateFailure as exc:
            failures.append((g, exc.reason))
        except WindGainError as exc:
            failures.append((g, f"{type(exc).__name__}: {exc}"))
    ok = gains[np.isfinite(gains)]
    if ok.size < MIN_REPLICATE_SUCCESS * replicates:
        raise BootstrapInsufficient(
            f"only {ok.size} of {replicates} replicates succeeded")
    lo, hi = percentile_interval(ok, ci_level)
    return BootstrapResult(gains, tuple(failures), lo, hi, float(ci_level), int(replicates),
                           int(seed))
