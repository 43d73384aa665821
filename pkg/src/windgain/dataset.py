"""SCADA ingestion, alignment and covariate engineering.

Each turbine arrives as its own CSV.  ``align`` inner-joins a
test / baseline-control / neutral-control triple on timestamp, builds the
candidate covariates from the neutral turbine (wind speed, its one-step
change, power) and the test turbine (direction, air density), adds the hour
of day, drops incomplete rows and labels every record Period 1 or Period 2.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np
import pandas as pd

from .errors import (
    CadenceMismatch,
    DataError,
    DuplicateTimestamp,
    EmptyPeriod,
    MalformedTimestamp,
)

R_DRY_AIR = 287.05  # J kg^-1 K^-1
DEFAULT_CADENCE = 600
MEASUREMENTS = ("wind_speed", "power", "direction", "temperature", "pressure")

ROLE_REF = "REF"
ROLE_CTRB = "CTR-b"
ROLE_CTRN = "CTR-n"

# Logical covariates in their canonical order, and the numeric columns each
# one occupies in a design matrix.  Circular quantities use a sin/cos pair.
CANDIDATES = ("V-CTRn", "dV-CTRn", "PW-CTRn", "Direction", "Density", "Hour")
_EXPANSION = {
    "V-CTRn": ("V-CTRn",),
    "dV-CTRn": ("dV-CTRn",),
    "PW-CTRn": ("PW-CTRn",),
    "Direction": ("Direction_sin", "Direction_cos"),
    "Density": ("Density",),
    "Hour": ("Hour_sin", "Hour_cos"),
}
P1 = "P1"
P2 = "P2"


def candidate_covariates():
    """The six logical covariates, in canonical order."""
    return list(CANDIDATES)


def design_columns(variables):
    """Numeric column names for a list of logical covariates."""
    cols = []
    for v in variables:
        try:
            cols.extend(_EXPANSION[v])
        except KeyError:
            raise ValueError(f"unknown covariate {v!r}; expected one of {CANDIDATES}")
    return cols


def canonical_order(variables):
    """Sort logical covariates into canonical order (and check the names)."""
    design_columns(variables)
    return [v for v in CANDIDATES if v in set(variables)]


def angle_pair(theta):
    """(sin, cos) of an angle in radians."""
    return np.sin(theta), np.cos(theta)


def air_density(pressure, temperature):
    """Dry-air density (kg/m^3) from pressure (Pa) and temperature (K)."""
    return np.asarray(pressure, dtype=float) / (R_DRY_AIR * np.asarray(temperature, dtype=float))


# ---------------------------------------------------------------------------
# Single-turbine series
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ColumnMapping:
    """CSV column name for each field; ``None`` marks a field the file lacks."""

    timestamp: str = "timestamp"
    wind_speed: str | None = "wind_speed"
    power: str | None = "power"
    direction: str | None = "direction"
    temperature: str | None = "temperature"
    pressure: str | None = "pressure"

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown column-mapping keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class TurbineSeries:
    """One turbine's measurements indexed by a strictly increasing UTC timestamp.

    ``frame`` has a ``DatetimeIndex`` named ``timestamp`` and one float column
    per entry of :data:`MEASUREMENTS` (NaN where missing).
    """

    turbine_id: str
    frame: pd.DataFrame

    def __post_init__(self):
        idx = self.frame.index
        if not isinstance(idx, pd.DatetimeIndex) or idx.tz is None:
            raise DataError("series index must be a timezone-aware DatetimeIndex")
        if idx.has_duplicates:
            raise DuplicateTimestamp(idx[idx.duplicated()][0])
        if not idx.is_monotonic_increasing:
            raise DataError("timestamps must be increasing")

    def __len__(self):
        return len(self.frame)

    @classmethod
    def from_arrays(cls, turbine_id, timestamps, **measurements):
        idx = pd.DatetimeIndex(pd.to_datetime(timestamps, utc=True), name="timestamp")
        data = {m: np.asarray(measurements.get(m, np.full(len(idx), np.nan)), dtype=float)
                for m in MEASUREMENTS}
        return cls(turbine_id, pd.DataFrame(data, index=idx))

    def to_csv(self, path, float_format=None):
        out = self.frame.copy()
        out.index = out.index.strftime("%Y-%m-%dT%H:%M:%SZ")
        out.to_csv(path, index_label="timestamp", float_format=float_format)


def ingest_series(path, schema=None, turbine_id=None):
    """Read one turbine's CSV into a :class:`TurbineSeries`.

    Unparseable measurement cells become NaN.  An unparseable timestamp raises
    :class:`MalformedTimestamp` (``row`` is the 1-based data row number); a
    repeated one raises :class:`DuplicateTimestamp`.
    """
    schema = schema or ColumnMapping()
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    if schema.timestamp not in raw.columns:
        raise DataError(f"{path}: timestamp column {schema.timestamp!r} not found")

    ts_text = raw[schema.timestamp].str.strip()
    ts = pd.to_datetime(ts_text, utc=True, errors="coerce", format="ISO8601")
    bad = np.flatnonzero(ts.isna().to_numpy())
    if bad.size:
        raise MalformedTimestamp(int(bad[0]) + 1, ts_text.iloc[bad[0]])

    data = {}
    for m in MEASUREMENTS:
        col = getattr(schema, m)
        if col is None:
            data[m] = np.full(len(raw), np.nan)
        elif col not in raw.columns:
            raise DataError(f"{path}: column {col!r} (for {m}) not found")
        else:
            data[m] = pd.to_numeric(raw[col].str.strip(), errors="coerce").to_numpy(float)
    frame = pd.DataFrame(data, index=pd.DatetimeIndex(ts, name="timestamp"))
    if frame.index.has_duplicates:
        raise DuplicateTimestamp(frame.index[frame.index.duplicated()][0])
    frame = frame.sort_index()
    if turbine_id is None:
        turbine_id = os.path.splitext(os.path.basename(path))[0]
    return TurbineSeries(str(turbine_id), frame)


# ---------------------------------------------------------------------------
# Aligned triple
# ---------------------------------------------------------------------------
class AlignedRecord(NamedTuple):
    timestamp: pd.Timestamp
    y_ref: float
    y_ctrb: float
    covariates: dict
    period: str


@dataclass(frozen=True)
class AlignedDataset:
    """Time-aligned records of a REF / CTR-b / CTR-n triple.

    ``frame`` columns: ``timestamp``, ``y_ref``, ``y_ctrb``, ``period`` and the
    numeric covariate columns (see :func:`design_columns`).  Rows are sorted by
    timestamp.  Bootstrap replicates built with :meth:`take` may repeat rows.
    """

    frame: pd.DataFrame
    cadence_seconds: int
    boundary: pd.Timestamp
    roles: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.frame)

    @property
    def p1_mask(self):
        return (self.frame["period"] == P1).to_numpy()

    @property
    def p2_mask(self):
        return (self.frame["period"] == P2).to_numpy()

    @property
    def n_p1(self):
        return int(self.p1_mask.sum())

    @property
    def n_p2(self):
        return int(self.p2_mask.sum())

    def covariates(self, variables, mask=None):
        cols = design_columns(variables)
        x = self.frame[cols].to_numpy(float)
        return x if mask is None else x[mask]

    def response(self, target, mask=None):
        col = {ROLE_REF: "y_ref", ROLE_CTRB: "y_ctrb"}[target]
        y = self.frame[col].to_numpy(float)
        return y if mask is None else y[mask]

    def bin_power(self, mask=None):
        """Binning axis for BIAS curves: measured CTR-b power."""
        return self.response(ROLE_CTRB, mask)

    def take(self, indices):
        """Rows at ``indices`` (repeats allowed), re-indexed from 0."""
        sub = self.frame.iloc[np.asarray(indices)].reset_index(drop=True)
        return AlignedDataset(sub, self.cadence_seconds, self.boundary, dict(self.roles))

    def records(self):
        cov_cols = [c for c in self.frame.columns
                    if c not in ("timestamp", "y_ref", "y_ctrb", "period")]
        cols = list(self.frame.columns)
        for values in self.frame.itertuples(index=False, name=None):
            d = dict(zip(cols, values))
            yield AlignedRecord(d["timestamp"], d["y_ref"], d["y_ctrb"],
                                {c: d[c] for c in cov_cols}, d["period"])

    def to_csv(self, path):
        out = self.frame.copy()
        out["timestamp"] = out["timestamp"].dt.strftime("%Y-%m-%dT%H:%M:%SZ")
        out.to_csv(path, index=False)


def _epoch_seconds(index):
    return (index - pd.Timestamp(0, tz="UTC")) // pd.Timedelta(seconds=1)


def _check_cadence(series, cadence):
    phases = set()
    for s in series:
        sec = np.asarray(_epoch_seconds(s.frame.index), dtype=np.int64)
        if sec.size == 0:
            continue
        if np.any(np.diff(sec) % cadence):
            raise CadenceMismatch(
                f"{s.turbine_id}: timestamp steps are not multiples of {cadence} s")
        phases.add(int(sec[0] % cadence))
    if len(phases) > 1:
        raise CadenceMismatch("series are sampled on offset clocks")


def align(ref, ctrb, ctrn, boundary, cadence=DEFAULT_CADENCE):
    """Join a REF / CTR-b / CTR-n triple and engineer the candidate covariates.

    ``dV-CTRn`` at ``t`` is ``V(t) - V(t - cadence)`` from the CTR-n series and
    is missing when that predecessor is absent.  Rows missing any covariate or
    either response are dropped.  ``timestamp < boundary`` is Period 1.
    """
    cadence = int(cadence)
    if cadence <= 0:
        raise CadenceMismatch("cadence must be positive")
    _check_cadence((ref, ctrb, ctrn), cadence)
    boundary = pd.Timestamp(boundary)
    boundary = boundary.tz_localize("UTC") if boundary.tzinfo is None else boundary.tz_convert("UTC")

    n_frame = ctrn.frame
    v = n_frame["wind_speed"]
    prev = v.reindex(n_frame.index - pd.Timedelta(seconds=cadence)).to_numpy()
    neutral = pd.DataFrame({
        "V-CTRn": v.to_numpy(),
        "dV-CTRn": v.to_numpy() - prev,
        "PW-CTRn": n_frame["power"].to_numpy(),
    }, index=n_frame.index)

    r = ref.frame
    theta = np.deg2rad(r["direction"].to_numpy())
    rho = air_density(r["pressure"].to_numpy(), r["temperature"].to_numpy())
    rho[~(rho > 0)] = np.nan
    d_sin, d_cos = angle_pair(theta)
    test = pd.DataFrame({
        "y_ref": r["power"].to_numpy(),
        "Direction_sin": d_sin,
        "Direction_cos": d_cos,
        "Density": rho,
    }, index=r.index)
    control = pd.DataFrame({"y_ctrb": ctrb.frame["power"].to_numpy()}, index=ctrb.frame.index)

    joined = test.join(control, how="inner").join(neutral, how="inner")
    hours = joined.index.hour.to_numpy()
    h_sin, h_cos = angle_pair(2.0 * math.pi * hours / 24.0)
    joined["Hour_sin"] = h_sin
    joined["Hour_cos"] = h_cos
    joined = joined.dropna()

    frame = pd.DataFrame({"timestamp": joined.index,
                          "y_ref": joined["y_ref"].to_numpy(),
                          "y_ctrb": joined["y_ctrb"].to_numpy()})
    for c in design_columns(CANDIDATES):
        frame[c] = joined[c].to_numpy()
    frame["period"] = np.where(joined.index < boundary, P1, P2)
    frame = frame.reset_index(drop=True)

    roles = {ref.turbine_id: ROLE_REF, ctrb.turbine_id: ROLE_CTRB, ctrn.turbine_id: ROLE_CTRN}
    ds = AlignedDataset(frame, cadence, boundary, roles)
    if ds.n_p1 == 0:
        raise EmptyPeriod(P1)
    if ds.n_p2 == 0:
        raise EmptyPeriod(P2)
    return ds
