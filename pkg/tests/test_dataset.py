import math

import numpy as np
import pandas as pd
import pytest

from windgain import dataset
from windgain.dataset import ColumnMapping, TurbineSeries, align, ingest_series
from windgain.errors import (
    CadenceMismatch,
    DuplicateTimestamp,
    EmptyPeriod,
    MalformedTimestamp,
)

T0 = pd.Timestamp("2022-03-01T00:00:00Z")


def series(tid, n, seed=0, start=T0, step=600, **over):
    rng = np.random.default_rng(seed)
    ts = [start + pd.Timedelta(seconds=step * i) for i in range(n)]
    cols = {
        "wind_speed": rng.uniform(3, 15, n),
        "power": rng.uniform(0, 2000, n),
        "direction": rng.uniform(0, 360, n),
        "temperature": rng.uniform(270, 300, n),
        "pressure": rng.uniform(99000, 102000, n),
    }
    cols.update(over)
    return TurbineSeries.from_arrays(tid, ts, **cols)


def write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# -- ingestion -----------------------------------------------------------------
HEADER = "timestamp,wind_speed,power,direction,temperature,pressure\n"


def test_ingest_three_rows(tmp_path):
    path = write(tmp_path, HEADER
                 + "2022-01-01T00:00:00Z,5,100,10,280,101000\n"
                 + "2022-01-01T00:10:00Z,6,200,20,281,101000\n"
                 + "2022-01-01T00:20:00Z,7,300,30,282,101000\n")
    s = ingest_series(path)
    assert len(s) == 3
    assert s.turbine_id == "t"
    assert s.frame["power"].tolist() == [100.0, 200.0, 300.0]


def test_blank_cell_becomes_missing(tmp_path):
    path = write(tmp_path, HEADER
                 + "2022-01-01T00:00:00Z,,100,10,280,101000\n"
                 + "2022-01-01T00:10:00Z,6,abc,20,281,101000\n")
    s = ingest_series(path)
    assert len(s) == 2
    assert math.isnan(s.frame["wind_speed"].iloc[0])
    assert math.isnan(s.frame["power"].iloc[1])


def test_duplicate_timestamp(tmp_path):
    path = write(tmp_path, HEADER
                 + "2022-01-01T00:00:00Z,5,100,10,280,101000\n"
                 + "2022-01-01T00:00:00Z,6,200,20,281,101000\n")
    with pytest.raises(DuplicateTimestamp):
        ingest_series(path)


def test_malformed_timestamp_reports_row(tmp_path):
    path = write(tmp_path, HEADER
                 + "2022-01-01T00:00:00Z,5,100,10,280,101000\n"
                 + "not a time,6,200,20,281,101000\n")
    with pytest.raises(MalformedTimestamp) as exc:
        ingest_series(path)
    assert exc.value.row == 2


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        ingest_series(str(tmp_path / "absent.csv"))


def test_column_mapping_and_absent_fields(tmp_path):
    path = write(tmp_path, "time,ws,P\n2022-01-01T00:10:00Z,5,100\n2022-01-01T00:00:00Z,4,90\n")
    s = ingest_series(path, ColumnMapping("time", "ws", "P", None, None, None), "T7")
    assert s.turbine_id == "T7"
    assert s.frame.index.is_monotonic_increasing
    assert s.frame["wind_speed"].tolist() == [4.0, 5.0]
    assert s.frame["direction"].isna().all()


def test_series_csv_round_trip(tmp_path):
    s = series("A", 5)
    s.to_csv(tmp_path / "A.csv")
    back = ingest_series(str(tmp_path / "A.csv"))
    pd.testing.assert_frame_equal(back.frame, s.frame, check_freq=False)


# -- covariates ------------------------------------------------------------------
def test_candidate_covariates():
    c = dataset.candidate_covariates()
    assert c == ["V-CTRn", "dV-CTRn", "PW-CTRn", "Direction", "Density", "Hour"]
    assert len(dataset.design_columns(c)) == 8


def test_density_ideal_gas():
    assert dataset.air_density(101325.0, 288.15) == pytest.approx(1.2250, abs=1e-3)
    assert dataset.air_density(101325.0, 288.15) == pytest.approx(101325 / (287.05 * 288.15),
                                                                  rel=1e-15)


# -- alignment -------------------------------------------------------------------
def test_align_lag_drops_first_row():
    ref, b, n = series("R", 10, 1), series("B", 10, 2), series("N", 10, 3)
    ds = align(ref, b, n, T0 + pd.Timedelta(minutes=60))
    assert len(ds) == 9
    assert (ds.n_p1, ds.n_p2) == (5, 4)
    assert ds.roles == {"R": "REF", "B": "CTR-b", "N": "CTR-n"}


def test_direction_ninety_degrees():
    ref = series("R", 4, direction=np.full(4, 90.0))
    ds = align(ref, series("B", 4, 2), series("N", 4, 3), T0 + pd.Timedelta(minutes=25))
    assert np.allclose(ds.frame["Direction_sin"], 1.0, atol=1e-12)
    assert np.allclose(ds.frame["Direction_cos"], 0.0, atol=1e-12)


def test_alignment_invariants():
    n = 200
    rng = np.random.default_rng(0)
    speed = rng.uniform(3, 15, n)
    speed[rng.random(n) < 0.1] = np.nan
    ref = series("R", n, 1)
    b = series("B", n - 20, 2, start=T0 + pd.Timedelta(minutes=100))
    nn = series("N", n, 3, wind_speed=speed)
    boundary = T0 + pd.Timedelta(hours=17)
    ds = align(ref, b, nn, boundary)
    f = ds.frame
    assert len(ds) <= min(len(ref), len(b), len(nn))
    assert not f.isna().any().any()
    assert f["timestamp"].is_monotonic_increasing and not f["timestamp"].duplicated().any()
    assert ((f["timestamp"] < boundary) == (f["period"] == "P1")).all()
    assert (f["Density"] > 0).all()
    for pair in (("Direction_sin", "Direction_cos"), ("Hour_sin", "Hour_cos")):
        np.testing.assert_allclose(f[pair[0]] ** 2 + f[pair[1]] ** 2, 1.0, atol=1e-9)
    v = nn.frame["wind_speed"]
    for _, row in f.iterrows():
        t = row["timestamp"]
        prev = t - pd.Timedelta(seconds=600)
        assert row["dV-CTRn"] == pytest.approx(v[t] - v[prev], abs=1e-12)
    # idempotence
    again = align(ref, b, nn, boundary)
    pd.testing.assert_frame_equal(again.frame, ds.frame)


def test_realigning_aligned_rows_reproduces_records():
    ref, b, nn = series("R", 30, 1), series("B", 30, 2), series("N", 30, 3)
    boundary = T0 + pd.Timedelta(hours=2)
    ds = align(ref, b, nn, boundary)
    keep = ds.frame["timestamp"]
    # restrict every input to the aligned stamps plus the first lag row
    stamps = pd.DatetimeIndex(keep).union([T0])
    sub = [TurbineSeries(s.turbine_id, s.frame.loc[s.frame.index.isin(stamps)])
           for s in (ref, b, nn)]
    again = align(*sub, boundary)
    pd.testing.assert_frame_equal(again.frame, ds.frame)


def test_hour_is_cyclic():
    ref = series("R", 12, 1, step=3600)
    ds = align(ref, series("B", 12, 2, step=3600), series("N", 12, 3, step=3600),
               T0 + pd.Timedelta(hours=6), cadence=3600)
    hours = ds.frame["timestamp"].dt.hour.to_numpy()
    np.testing.assert_allclose(ds.frame["Hour_sin"], np.sin(2 * np.pi * hours / 24), atol=1e-12)


def test_cadence_mismatch():
    with pytest.raises(CadenceMismatch):
        align(series("R", 10, 1), series("B", 10, 2, step=300), series("N", 10, 3),
              T0 + pd.Timedelta(minutes=30))
    with pytest.raises(CadenceMismatch):
        align(series("R", 10, 1), series("B", 10, 2, start=T0 + pd.Timedelta(seconds=60)),
              series("N", 10, 3), T0 + pd.Timedelta(minutes=30))


def test_empty_period():
    with pytest.raises(EmptyPeriod) as exc:
        align(series("R", 10, 1), series("B", 10, 2), series("N", 10, 3),
              T0 + pd.Timedelta(days=5))
    assert exc.value.period == "P2"
    with pytest.raises(EmptyPeriod):
        align(series("R", 10, 1), series("B", 10, 2), series("N", 10, 3), T0)


def test_export_and_take(tmp_path):
    ds = align(series("R", 20, 1), series("B", 20, 2), series("N", 20, 3),
               T0 + pd.Timedelta(hours=1))
    ds.to_csv(tmp_path / "aligned.csv")
    back = pd.read_csv(tmp_path / "aligned.csv")
    assert len(back) == len(ds)
    rep = ds.take([0, 0, 5])
    assert len(rep) == 3 and rep.frame["y_ref"].iloc[0] == rep.frame["y_ref"].iloc[1]
    rec = next(ds.records())
    assert set(rec.covariates) == set(dataset.design_columns(dataset.CANDIDATES))
