"""Period-1 analysis: covariate selection and control-pair ranking."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import CANDIDATES, ROLE_REF, canonical_order
from .evaluation import (
    DEFAULT_BIN_WIDTH,
    DEFAULT_MIN_BIN_COUNT,
    average_curves,
    curve_diff,
    cv_evaluate,
    cv_evaluate_pair,
)

PAIR_THRESHOLD_KW = 10.0


@dataclass(frozen=True)
class SelectionStep:
    """One evaluation round of backward elimination.

    The first step records the full model (``removed`` is None and
    ``candidates`` empty).  Later steps hold the CV RMSE of every
    single-variable deletion from ``variables``; ``removed`` is the best
    deletion and ``accepted`` says whether it beat the incumbent.
    """

    variables: tuple
    removed: str | None
    candidates: dict
    chosen_rmse: float
    accepted: bool

    def to_dict(self):
        return {"variables": list(self.variables), "removed": self.removed,
                "candidates": dict(self.candidates), "chosen_rmse": self.chosen_rmse,
                "accepted": self.accepted}


@dataclass(frozen=True)
class SelectionTrace:
    steps: tuple
    final_set: tuple

    @property
    def accepted_rmse(self):
        """CV RMSE of each successive incumbent model."""
        return [s.chosen_rmse for s in self.steps if s.accepted]

    def to_dict(self):
        return {"final_set": list(self.final_set),
                "steps": [s.to_dict() for s in self.steps]}

    def to_text(self):
        lines = []
        for i, s in enumerate(self.steps):
            if s.removed is None:
                lines.append(f"step {i}: full model {', '.join(s.variables)}  "
                             f"CV_RMSE={s.chosen_rmse:.4f}")
                continue
            verdict = "accepted" if s.accepted else "rejected"
            lines.append(f"step {i}: drop {s.removed} -> CV_RMSE={s.chosen_rmse:.4f} ({verdict})")
            for v, r in s.candidates.items():
                lines.append(f"    without {v:<10s} {r:.4f}")
        lines.append(f"selected: {', '.join(self.final_set)}")
        return "\n".join(lines)


def select_variables(dataset, folds, k_grid=None, variables=CANDIDATES,
                     bin_width=DEFAULT_BIN_WIDTH, min_bin_count=DEFAULT_MIN_BIN_COUNT):
    """Backward elimination on the REF model's 5-fold CV RMSE.

    Starting from all ``variables``, every single-variable deletion is
    evaluated; the best one is accepted only if it strictly lowers CV RMSE,
    otherwise the search stops.  A sin/cos pair is one variable.  The search
    never evaluates an empty model.
    """
    current = canonical_order(variables)
    if not current:
        raise ValueError("no candidate variables")

    def score(vs):
        return cv_evaluate(dataset, ROLE_REF, vs, folds, k_grid,
                           bin_width, min_bin_count).cv_rmse

    best = score(current)
    steps = [SelectionStep(tuple(current), None, {}, best, True)]
    while len(current) > 1:
        trial = {v: score([u for u in current if u != v]) for v in current}
        # min() keeps the first of equal scores, i.e. canonical order
        drop = min(current, key=lambda v: trial[v])
        accepted = trial[drop] < best
        steps.append(SelectionStep(tuple(current), drop, trial, trial[drop], accepted))
        if not accepted:
            break
        current = [u for u in current if u != drop]
        best = trial[drop]
    return SelectionTrace(tuple(steps), tuple(current))


@dataclass(frozen=True)
class PairAssessment:
    ctrb_id: str
    ctrn_id: str
    variables: tuple
    ref_metrics: object
    ctrb_metrics: object
    diff_curve: object
    max_abs_diff: float
    passes_10kw: bool

    def summary(self):
        return {
            "ctrb": self.ctrb_id,
            "ctrn": self.ctrn_id,
            "variables": list(self.variables),
            "ref_cv_rmse": self.ref_metrics.cv_rmse,
            "ref_cv_bias": self.ref_metrics.cv_bias,
            "ctrb_cv_rmse": self.ctrb_metrics.cv_rmse,
            "ctrb_cv_bias": self.ctrb_metrics.cv_bias,
            "max_abs_diff": self.max_abs_diff,
            "passes_10kw": self.passes_10kw,
        }


def fold_diff_curves(ref_metrics, ctrb_metrics):
    """Per-fold DIFF curves, REF minus CTR-b."""
    return [curve_diff(a.curve, b.curve)
            for a, b in zip(ref_metrics.per_fold, ctrb_metrics.per_fold)]


def pair_passes(max_abs_diff, threshold=PAIR_THRESHOLD_KW):
    """The pair criterion: every |DIFF_b| at most ``threshold`` kW (inclusive)."""
    return bool(max_abs_diff <= threshold)


def assess_pair(dataset, variables, folds, k_grid=None, ctrb_id=None, ctrn_id=None,
                threshold=PAIR_THRESHOLD_KW, bin_width=DEFAULT_BIN_WIDTH,
                min_bin_count=DEFAULT_MIN_BIN_COUNT):
    """CV both models of one (CTR-b, CTR-n) assignment and summarise the DIFF curve.

    ``dataset`` must already be aligned with that role assignment.  The pair
    passes when every fold-averaged ``|DIFF_b|`` is at most ``threshold`` kW.
    """
    roles = {role: tid for tid, role in dataset.roles.items()}
    ctrb_id = ctrb_id or roles.get("CTR-b", "CTR-b")
    ctrn_id = ctrn_id or roles.get("CTR-n", "CTR-n")
    ref_id = roles.get(ROLE_REF)
    if ctrb_id == ctrn_id or ref_id in (ctrb_id, ctrn_id):
        raise ValueError("REF, CTR-b and CTR-n must be three distinct turbines")

    ref_m, ctrb_m = cv_evaluate_pair(dataset, variables, folds, k_grid,
                                     bin_width, min_bin_count)
    diff = average_curves(fold_diff_curves(ref_m, ctrb_m))
    max_abs = float(np.max(np.abs(diff.value))) if len(diff) else math.inf
    return PairAssessment(ctrb_id, ctrn_id, tuple(variables), ref_m, ctrb_m, diff,
                          max_abs, pair_passes(max_abs, threshold))


def _rank_key(a):
    def finite(x):
        return x if math.isfinite(x) else math.inf
    return (not a.passes_10kw, finite(a.max_abs_diff), finite(a.ref_metrics.cv_rmse),
            finite(abs(a.ref_metrics.cv_bias)), a.ctrb_id, a.ctrn_id)


def rank_pairs(assessments):
    """Best pair first: passing pairs, then smaller max |DIFF|, REF CV RMSE, |CV BIAS|."""
    if not assessments:
        raise ValueError("no pair assessments to rank")
    return sorted(assessments, key=_rank_key)


def ranking_table(ranked):
    header = (f"{'rank':>4}  {'CTR-b':<10} {'CTR-n':<10} {'max|DIFF|':>10} "
              f"{'<=10kW':>6} {'CV_RMSE':>9} {'CV_BIAS%':>9}")
    lines = [header]
    for i, a in enumerate(ranked, 1):
        lines.append(f"{i:>4}  {a.ctrb_id:<10} {a.ctrn_id:<10} {a.max_abs_diff:>10.3f} "
                     f"{'yes' if a.passes_10kw else 'no':>6} {a.ref_metrics.cv_rmse:>9.3f} "
                     f"{100 * a.ref_metrics.cv_bias:>9.3f}")
    return "\n".join(lines)

