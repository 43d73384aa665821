"""Adaptive-bandwidth Nadaraya-Watson regression.

The estimator is a Gaussian-kernel weighted average of the training
responses.  The kernel scale at an evaluation point ``x`` is one third of
the distance from ``x`` to its k-th nearest training point, so the fit
tracks local structure where data are dense and smooths harder where data
are sparse.  The neighbour count ``k`` is the only tuning parameter and is
chosen by minimising generalized cross-validation (GCV) over a grid.

Distances are Euclidean in z-scored coordinates; the standardization is
estimated on the training rows and stored with the fitted model.

Heavy loops are compiled with numba.  Rows are processed independently in
blocks that may run on several threads, so results do not depend on
scheduling.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import (
    ConstantColumn,
    DimensionMismatch,
    NoAdmissibleK,
    SaturatedSmoother,
)

BANDWIDTH_DIVISOR = 3.0
# Floor on the bandwidth (standardized units) for coincident k-th neighbours.
BANDWIDTH_FLOOR = 1e-8
# Terms with a = dist / R > 10 are skipped.  Their kernel value is below
# exp(-50) ~ 2e-22 of the nearest neighbour's (which always has a <= 3), so
# the truncated sums agree with the full sums to float64 rounding.
KERNEL_CUTOFF = 10.0
# tr(I - M) at or below TRACE_TOL * n marks an interpolating smoother.
TRACE_TOL = 1e-8

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gaussian_kernel(a):
    """Standard normal density."""
    a = np.asarray(a, dtype=float)
    return np.exp(-0.5 * a * a) * _INV_SQRT_2PI


def default_k_grid(n, k_min=3, k_max=100):
    """``{k_min, ..., min(k_max, n - 1)}``."""
    hi = min(k_max, n - 1)
    if hi < k_min:
        return (hi,) if hi >= 1 else ()
    return tuple(range(k_min, hi + 1))


# ---------------------------------------------------------------------------
# Design matrix
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class DesignMatrix:
    """Standardized covariate matrix plus the statistics used to build it.

    Parameters
    ----------
    rows : ndarray of shape (n, d)
        Z-scored covariates.
    column_names : tuple of str
    mean, scale : ndarray of shape (d,)
        Per-column training mean and (population) standard deviation.
    """

    rows: np.ndarray
    column_names: tuple
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def from_raw(cls, raw, column_names=None):
        raw = np.asarray(raw, dtype=float)
        if raw.ndim == 1:
            raw = raw[:, None]
        n, d = raw.shape
        if n < 2:
            raise ValueError("a design matrix needs at least two rows")
        if column_names is None:
            column_names = tuple(f"x{i}" for i in range(d))
        column_names = tuple(column_names)
        if len(column_names) != d:
            raise DimensionMismatch(f"{len(column_names)} names for {d} columns")
        mean = raw.mean(axis=0)
        scale = raw.std(axis=0)
        for j in range(d):
            if not scale[j] > 1e-12 * max(1.0, abs(mean[j])):
                raise ConstantColumn(column_names[j])
        rows = (raw - mean) / scale
        return cls(np.ascontiguousarray(rows), column_names, mean, scale)

    @classmethod
    def identity(cls, rows, column_names=None):
        """Wrap already-standardized rows without rescaling them."""
        rows = np.asarray(rows, dtype=float)
        if rows.ndim == 1:
            rows = rows[:, None]
        d = rows.shape[1]
        if column_names is None:
            column_names = tuple(f"x{i}" for i in range(d))
        return cls(np.ascontiguousarray(rows), tuple(column_names),
                   np.zeros(d), np.ones(d))

    @property
    def n(self):
        return self.rows.shape[0]

    @property
    def d(self):
        return self.rows.shape[1]

    def transform(self, raw):
        raw = np.asarray(raw, dtype=float)
        if raw.ndim == 1:
            raw = raw[None, :] if raw.shape[0] == self.d else raw[:, None]
        if raw.shape[1] != self.d:
            raise DimensionMismatch(
                f"expected {self.d} columns, got {raw.shape[1]}")
        return np.ascontiguousarray((raw - self.mean) / self.scale)


def _as_rows(training_x):
    if isinstance(training_x, DesignMatrix):
        return training_x.rows
    x = np.asarray(training_x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _as_point(x, d):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise DimensionMismatch(f"point has shape {x.shape}, model expects ({d},)")
    return x


# ---------------------------------------------------------------------------
# Single-point primitives (plain numpy, used for inspection and as building
# blocks in tests)
# ---------------------------------------------------------------------------
def adaptive_bandwidth(x, training_x, k):
    """``R_x = d_x(k) / 3``, floored at :data:`BANDWIDTH_FLOOR`.

    The k-th smallest distance is taken over *all* training points, so an
    evaluation point that coincides with a training point counts itself at
    distance zero.
    """
    rows = _as_rows(training_x)
    n = rows.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    x = _as_point(x, rows.shape[1])
    dist = np.sqrt(((rows - x) ** 2).sum(axis=1))
    d_k = np.partition(dist, k - 1)[k - 1]
    return max(d_k / BANDWIDTH_DIVISOR, BANDWIDTH_FLOOR)


def weights_at(x, training_x, k):
    """Normalized kernel weights of every training point at ``x``."""
    rows = _as_rows(training_x)
    x = _as_point(x, rows.shape[1])
    r = adaptive_bandwidth(x, rows, k)
    dist = np.sqrt(((rows - x) ** 2).sum(axis=1))
    w = gaussian_kernel(dist / r)
    return w / w.sum()


def smoother_matrix(training_x, k):
    """The n x n hat matrix; row ``a`` holds the weights at training point ``a``."""
    rows = _as_rows(training_x)
    if rows.shape[0] < 2:
        raise ValueError("smoother matrix needs n >= 2")
    return np.vstack([weights_at(r, rows, k) for r in rows])


# ---------------------------------------------------------------------------
# Compiled batch kernels
# ---------------------------------------------------------------------------
# numba's parallel loops are not used: their cached builds round differently
# from fresh ones, which would break byte-identical reruns.
@njit(cache=True, nogil=True)
def _sq_distances(Q, X):
    m = Q.shape[0]
    n = X.shape[0]
    d = X.shape[1]
    out = np.empty((m, n))
    for a in range(m):
        for j in range(n):
            s = 0.0
            for c in range(d):
                t = Q[a, c] - X[j, c]
                s += t * t
            out[a, j] = s
    return out


_LOG2E = 1.4426950408889634
_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10
_POW2 = np.array([2.0 ** i for i in range(-1100, 1)])


@njit(fastmath=True, cache=True, inline="always")
def _gauss_sums(ds, y0, y1, m, r, pow2):
    """Kernel weight total and weighted sums of two responses over ds[:m].

    exp is evaluated inline (range reduction + degree-12 polynomial, relative
    error < 3e-14) so the loop is a pure reduction and vectorizes.
    """
    inv = 1.0 / r
    wsum = 0.0
    s0 = 0.0
    s1 = 0.0
    for j in range(m):
        a = ds[j] * inv
        x = max(-0.5 * a * a, -740.0)
        nf = math.floor(x * _LOG2E + 0.5)
        t = (x - nf * _LN2_HI) - nf * _LN2_LO
        p = 1.0 / 479001600.0
        p = p * t + 1.0 / 39916800.0
        p = p * t + 1.0 / 3628800.0
        p = p * t + 1.0 / 362880.0
        p = p * t + 1.0 / 40320.0
        p = p * t + 1.0 / 5040.0
        p = p * t + 1.0 / 720.0
        p = p * t + 1.0 / 120.0
        p = p * t + 1.0 / 24.0
        p = p * t + 1.0 / 6.0
        p = p * t + 0.5
        p = p * t + 1.0
        p = p * t + 1.0
        w = p * pow2[int(nf) + 1100]
        wsum += w
        s0 += w * y0[j]
        s1 += w * y1[j]
    return wsum, s0, s1


@njit(fastmath=True, cache=True, nogil=True)
def _grid_core(ds, order, Y, ks, divisor, floor, cutoff, pow2):
    """Weighted means (rows x ks x responses) and weight totals (rows x ks).

    ``ds`` holds each query row's ascending distances to the training rows and
    ``order`` the matching training indices.
    """
    m, n = ds.shape
    nk = ks.shape[0]
    nr = Y.shape[1]
    fitted = np.empty((m, nk, nr))
    wsums = np.empty((m, nk))
    for a in range(m):
        ys = np.empty((nr, n))
        for j in range(n):
            for c in range(nr):
                ys[c, j] = Y[order[a, j], c]
        for i in range(nk):
            r = ds[a, ks[i] - 1] / divisor
            if r < floor:
                r = floor
            cnt = np.searchsorted(ds[a], cutoff * r, side="right")
            # responses are consumed in pairs; an odd last one is paired with itself
            for c in range(0, nr, 2):
                c1 = c + 1 if c + 1 < nr else c
                wsum, s0, s1 = _gauss_sums(ds[a], ys[c], ys[c1], cnt, r, pow2)
                fitted[a, i, c] = s0 / wsum
                fitted[a, i, c1] = s1 / wsum
            wsums[a, i] = wsum
    return fitted, wsums


@njit(fastmath=True, cache=True, nogil=True)
def _predict_core(Q, X, Y, k, divisor, floor, pow2):
    """Kernel means of each column of Y at each row of Q for a single k.

    Only the k-th distance is needed, so a partition replaces the full sort
    and every training point enters the (vectorized) sums.
    """
    m = Q.shape[0]
    n, d = X.shape
    nr = Y.shape[1]
    out = np.empty((m, nr))
    yt = np.ascontiguousarray(Y.T)
    for a in range(m):
        dist = np.empty(n)
        for j in range(n):
            s = 0.0
            for c in range(d):
                t = Q[a, c] - X[j, c]
                s += t * t
            dist[j] = math.sqrt(s)
        r = np.partition(dist, k - 1)[k - 1] / divisor
        if r < floor:
            r = floor
        for c in range(0, nr, 2):
            c1 = c + 1 if c + 1 < nr else c
            wsum, s0, s1 = _gauss_sums(dist, yt[c], yt[c1], n, r, pow2)
            out[a, c] = s0 / wsum
            out[a, c1] = s1 / wsum
    return out


# Query rows per block; bounds the memory of the sorted distance matrices.
_BLOCK_ROWS = 512
# Worker threads over blocks (the compiled loops release the GIL).
N_THREADS = max(1, min(8, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity")
                       else (os.cpu_count() or 1)))


def _over_blocks(fn, m):
    """``fn(start, stop)`` for each row block of ``m`` rows, results in order."""
    starts = range(0, m, _BLOCK_ROWS)
    if N_THREADS == 1 or len(starts) == 1:
        return [fn(a, min(a + _BLOCK_ROWS, m)) for a in starts]
    with ThreadPoolExecutor(N_THREADS) as ex:
        return list(ex.map(lambda a: fn(a, min(a + _BLOCK_ROWS, m)), starts))


def _batch(Q, X, Y, ks):
    """Kernel means of every column of ``Y`` at every row of ``Q``, for each k."""
    Q = np.ascontiguousarray(Q, dtype=float)
    ks = np.asarray(ks, dtype=np.int64)

    def block(a, b):
        d2 = _sq_distances(Q[a:b], X)
        order = np.argsort(d2, axis=1)
        ds = np.sqrt(np.take_along_axis(d2, order, axis=1))
        return _grid_core(ds, order, Y, ks, BANDWIDTH_DIVISOR, BANDWIDTH_FLOOR,
                          KERNEL_CUTOFF, _POW2)

    parts = _over_blocks(block, Q.shape[0])
    if not parts:
        return np.empty((0, ks.size, Y.shape[1])), np.empty((0, ks.size))
    return (np.concatenate([f for f, _ in parts]), np.concatenate([w for _, w in parts]))


def _check_training(rows, Y):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] != rows.shape[0]:
        raise DimensionMismatch(
            f"{rows.shape[0]} training rows but response of shape {Y.shape}")
    return np.ascontiguousarray(rows, dtype=float), np.ascontiguousarray(Y)


def training_fits(training_x, training_y, ks):
    """Fitted values ``M(k) y`` and diagonals ``M(k)_aa`` for each k in ``ks``.

    Returns arrays of shape (n, len(ks)) -- or (n, len(ks), r) for the fitted
    values when ``training_y`` has r columns -- and (n, len(ks)).
    """
    rows, Y = _check_training(_as_rows(training_x), training_y)
    ks = np.asarray(ks, dtype=np.int64)
    n = rows.shape[0]
    if ks.size and (ks.min() < 1 or ks.max() > n):
        raise ValueError(f"k grid must lie in [1, {n}]")
    fitted, wsums = _batch(rows, rows, Y, ks)
    if np.ndim(training_y) == 1:
        fitted = fitted[:, :, 0]
    # each training point sits at distance 0 from itself with weight exp(0) = 1
    return fitted, 1.0 / wsums


def _gcv_from_fits(y, fitted, self_w):
    n = y.shape[0]
    trace = n - self_w.sum()
    if trace <= TRACE_TOL * n:
        raise SaturatedSmoother(f"tr(I - M) = {trace:.3g}")
    resid = y - fitted
    return (resid @ resid / n) / (trace / n) ** 2


def gcv(training_x, training_y, k):
    """GCV(k) = n^-1 ||(I - M) y||^2 / (n^-1 tr(I - M))^2."""
    rows, Y = _check_training(_as_rows(training_x), training_y)
    fitted, self_w = training_fits(rows, Y[:, 0], [k])
    return _gcv_from_fits(Y[:, 0], fitted[:, 0], self_w[:, 0])


# ---------------------------------------------------------------------------
# Fitted model
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GcvEntry:
    k: int
    gcv: float
    saturated: bool = False


@dataclass(frozen=True)
class KernelModel:
    """A fitted adaptive kernel regressor.

    ``predict`` accepts raw (unstandardized) covariates and applies the
    training standardization; ``predict_standardized`` skips that step.
    """

    training_x: DesignMatrix
    training_y: np.ndarray
    k: int
    k_grid: tuple
    gcv_trace: tuple = field(default=())

    @property
    def n(self):
        return self.training_x.n

    def predict_standardized(self, z):
        return predict_many([self], z, standardized=True)[0]

    def predict(self, x):
        return predict_many([self], x)[0]

    def gcv_table(self):
        """Rows of (k, gcv, saturated) for CSV export."""
        return [(e.k, e.gcv, e.saturated) for e in self.gcv_trace]


def predict(model, x):
    """Prediction at a single point ``x`` of shape (d,)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("predict takes one point; use model.predict for batches")
    return float(model.predict(x[None, :])[0])


def predict_many(models, x, standardized=False):
    """Batch predictions from several models fitted on the same design matrix.

    The distance sort is shared, so predicting two responses costs little more
    than one.
    """
    design = models[0].training_x
    if any(m.training_x is not design for m in models):
        raise ValueError("models must share one DesignMatrix")
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :] if design.d > 1 or x.size == 1 else x[:, None]
    z = x if standardized else design.transform(x)
    if z.shape[1] != design.d:
        raise DimensionMismatch(f"expected {design.d} columns, got {z.shape[1]}")
    z = np.ascontiguousarray(z)
    out = [None] * len(models)
    for k in sorted({m.k for m in models}):
        idx = [i for i, m in enumerate(models) if m.k == k]
        Y = np.column_stack([models[i].training_y for i in idx])
        parts = _over_blocks(
            lambda a, b: _predict_core(z[a:b], design.rows, Y, k, BANDWIDTH_DIVISOR,
                                       BANDWIDTH_FLOOR, _POW2), z.shape[0])
        pred = np.concatenate(parts) if parts else np.empty((0, Y.shape[1]))
        for col, i in enumerate(idx):
            out[i] = pred[:, col]
    return out


def _resolve_grid(k_grid, n):
    grid = tuple(sorted({int(k) for k in (k_grid if k_grid is not None
                                          else default_k_grid(n))}))
    if not grid:
        raise NoAdmissibleK("empty k grid")
    if grid[0] < 1 or grid[-1] > n - 1:
        raise ValueError(f"k grid {grid[0]}..{grid[-1]} outside [1, {n - 1}]")
    return grid


def fit_many(training_x, responses, k_grid=None, column_names=None):
    """Fit one model per response column on a shared design matrix.

    Each model selects its own ``k``; see :func:`fit`.
    """
    if isinstance(training_x, DesignMatrix):
        design = training_x
    else:
        design = DesignMatrix.from_raw(training_x, column_names)
    rows, Y = _check_training(design.rows, np.column_stack(responses)
                              if isinstance(responses, (list, tuple))
                              else responses)
    n = rows.shape[0]
    grid = _resolve_grid(k_grid, n)
    fitted, self_w = training_fits(rows, Y, grid)

    models = []
    for c in range(Y.shape[1]):
        y = np.ascontiguousarray(Y[:, c])
        trace = []
        best_k, best = None, math.inf
        for i, k in enumerate(grid):
            try:
                g = _gcv_from_fits(y, fitted[:, i, c], self_w[:, i])
            except SaturatedSmoother:
                trace.append(GcvEntry(k, math.nan, True))
                continue
            trace.append(GcvEntry(k, float(g)))
            # strict '<' over an ascending grid: ties keep the smaller k
            if g < best:
                best_k, best = k, g
        if best_k is None:
            raise NoAdmissibleK(f"all {len(grid)} grid entries saturate")
        models.append(KernelModel(design, y, best_k, grid, tuple(trace)))
    return models


def fit(training_x, training_y, k_grid=None, column_names=None):
    """Fit the regressor, choosing ``k`` by minimum GCV over ``k_grid``.

    Parameters
    ----------
    training_x : array_like of shape (n, d) or DesignMatrix
        Raw covariates (standardized here) or a prepared design matrix.
    training_y : array_like of shape (n,)
    k_grid : iterable of int, optional
        Candidate neighbour counts, each in ``[1, n - 1]``.  Defaults to
        :func:`default_k_grid`.

    Ties in GCV go to the smaller ``k``.  Grid entries whose smoother
    saturates stay in the trace with ``saturated=True``.
    """
    y = np.asarray(training_y, dtype=float)
    if y.ndim != 1:
        raise DimensionMismatch("training_y must be one-dimensional")
    return fit_many(training_x, y[:, None], k_grid, column_names)[0]
