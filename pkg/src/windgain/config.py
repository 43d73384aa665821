"""Analysis configuration: inputs, roles and the tunable constants.

A config is a TOML or JSON document.  Relative input paths are resolved
against the directory holding the config file.  Example::

    boundary = "2021-01-14T21:20:00Z"
    output_dir = "out"

    [ref]
    id = "REF"
    path = "REF.csv"

    [[controls]]
    id = "CTRB"
    path = "CTRB.csv"

    [[controls]]
    id = "CTRN"
    path = "CTRN.csv"
    columns = { power = "P_kW" }
"""

from __future__ import annotations

import itertools
import json
import os
from dataclasses import dataclass, field

import pandas as pd
import tomli

from .dataset import CANDIDATES, DEFAULT_CADENCE, ColumnMapping, canonical_order
from .errors import ConfigError
from .evaluation import DEFAULT_BIN_WIDTH, DEFAULT_MIN_BIN_COUNT
from .period1 import PAIR_THRESHOLD_KW
from .period2 import DEFAULT_CI_LEVEL, DEFAULT_REPLICATES

DEFAULT_K_MIN = 3
DEFAULT_K_MAX = 100


@dataclass(frozen=True)
class TurbineInput:
    id: str
    path: str
    columns: ColumnMapping = field(default_factory=ColumnMapping)

    @classmethod
    def from_dict(cls, d, base_dir="."):
        try:
            tid, path = str(d["id"]), str(d["path"])
        except KeyError as exc:
            raise ConfigError(f"turbine entry lacks {exc.args[0]!r}")
        extra = set(d) - {"id", "path", "columns"}
        if extra:
            raise ConfigError(f"unknown turbine keys: {sorted(extra)}")
        try:
            columns = ColumnMapping.from_dict(d.get("columns", {}))
        except Exception as exc:
            raise ConfigError(str(exc))
        return cls(tid, os.path.normpath(os.path.join(base_dir, path)), columns)

    def to_dict(self):
        return {"id": self.id, "path": self.path, "columns": self.columns.to_dict()}


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = DEFAULT_REPLICATES
    ci_level: float = DEFAULT_CI_LEVEL
    seed: int = 0

    def to_dict(self):
        return {"replicates": self.replicates, "ci_level": self.ci_level, "seed": self.seed}


@dataclass(frozen=True)
class AnalysisConfig:
    ref: TurbineInput
    controls: tuple
    boundary: pd.Timestamp
    output_dir: str
    cadence_seconds: int = DEFAULT_CADENCE
    pairs: tuple | None = None
    candidates: tuple = CANDIDATES
    bin_width: float = DEFAULT_BIN_WIDTH
    min_bin_count: int = DEFAULT_MIN_BIN_COUNT
    k_min: int = DEFAULT_K_MIN
    k_max: int = DEFAULT_K_MAX
    fold_seed: int = 0
    pair_threshold_kw: float = PAIR_THRESHOLD_KW
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    power_frequency: str | None = None
    aep_kwh: float | None = None

    def __post_init__(self):
        ids = [self.ref.id] + [c.id for c in self.controls]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"turbine ids must be unique, got {ids}")
        if len(self.controls) < 2:
            raise ConfigError("at least two control turbines are needed")
        for b, n in self.candidate_pairs():
            if b == n or b not in ids[1:] or n not in ids[1:]:
                raise ConfigError(f"pair ({b}, {n}) must name two distinct control turbines")
        if not self.bin_width > 0:
            raise ConfigError("bin_width must be positive")
        if self.min_bin_count < 1:
            raise ConfigError("min_bin_count must be at least 1")
        if not 1 <= self.k_min <= self.k_max:
            raise ConfigError("need 1 <= k_min <= k_max")
        if self.cadence_seconds <= 0:
            raise ConfigError("cadence_seconds must be positive")
        if self.bootstrap.replicates < 2 or not 0 < self.bootstrap.ci_level < 1:
            raise ConfigError("bootstrap needs replicates >= 2 and 0 < ci_level < 1")
        if self.aep_kwh is not None and not self.aep_kwh > 0:
            raise ConfigError("aep_kwh must be positive")
        if not self.candidates:
            raise ConfigError("candidates must not be empty")

    # -- derived ------------------------------------------------------------
    @property
    def k_grid(self):
        return tuple(range(self.k_min, self.k_max + 1))

    def turbine(self, tid):
        for t in (self.ref,) + tuple(self.controls):
            if t.id == tid:
                return t
        raise ConfigError(f"unknown turbine id {tid!r}")

    def candidate_pairs(self):
        """(CTR-b, CTR-n) assignments to assess; all ordered pairs by default."""
        if self.pairs is not None:
            return [tuple(p) for p in self.pairs]
        ids = [c.id for c in self.controls]
        return list(itertools.permutations(ids, 2))

    def replace(self, **changes):
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return AnalysisConfig(**d)

    # -- (de)serialization ----------------------------------------------------
    @classmethod
    def from_dict(cls, d, base_dir="."):
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("ref", "controls", "boundary", "output_dir"):
            if key not in d:
                raise ConfigError(f"config lacks {key!r}")
        try:
            boundary = pd.Timestamp(d.pop("boundary"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad boundary timestamp: {exc}")
        boundary = (boundary.tz_localize("UTC") if boundary.tzinfo is None
                    else boundary.tz_convert("UTC"))
        out = {
            "ref": TurbineInput.from_dict(d.pop("ref"), base_dir),
            "controls": tuple(TurbineInput.from_dict(c, base_dir) for c in d.pop("controls")),
            "boundary": boundary,
            "output_dir": os.path.normpath(os.path.join(base_dir, str(d.pop("output_dir")))),
        }
        if d.get("pairs") is not None:
            out["pairs"] = tuple(tuple(str(x) for x in p) for p in d.pop("pairs"))
        if "candidates" in d:
            try:
                out["candidates"] = tuple(canonical_order(d.pop("candidates")))
            except ValueError as exc:
                raise ConfigError(str(exc))
        if "bootstrap" in d:
            b = dict(d.pop("bootstrap"))
            extra = set(b) - {"replicates", "ci_level", "seed"}
            if extra:
                raise ConfigError(f"unknown bootstrap keys: {sorted(extra)}")
            out["bootstrap"] = BootstrapConfig(int(b.get("replicates", DEFAULT_REPLICATES)),
                                               float(b.get("ci_level", DEFAULT_CI_LEVEL)),
                                               int(b.get("seed", 0)))
        if d.get("power_frequency") is not None:
            out["power_frequency"] = os.path.normpath(
                os.path.join(base_dir, str(d.pop("power_frequency"))))
        casts = {"cadence_seconds": int, "bin_width": float, "min_bin_count": int,
                 "k_min": int, "k_max": int, "fold_seed": int, "pair_threshold_kw": float,
                 "aep_kwh": float}
        for key, cast in casts.items():
            if d.get(key) is not None:
                try:
                    out[key] = cast(d[key])
                except (TypeError, ValueError):
                    raise ConfigError(f"{key} must be a number")
        return cls(**out)

    def to_dict(self):
        return {
            "ref": self.ref.to_dict(),
            "controls": [c.to_dict() for c in self.controls],
            "boundary": self.boundary.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "output_dir": self.output_dir,
            "cadence_seconds": self.cadence_seconds,
            "pairs": None if self.pairs is None else [list(p) for p in self.pairs],
            "candidates": list(self.candidates),
            "bin_width": self.bin_width,
            "min_bin_count": self.min_bin_count,
            "k_min": self.k_min,
            "k_max": self.k_max,
            "fold_seed": self.fold_seed,
            "pair_threshold_kw": self.pair_threshold_kw,
            "bootstrap": self.bootstrap.to_dict(),
            "power_frequency": self.power_frequency,
            "aep_kwh": self.aep_kwh,
        }


def read_document(path):
    """Parse a TOML (``.toml``) or JSON file into a dict."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        if path.endswith(".toml"):
            with open(path, "rb") as fh:
                return tomli.load(fh)
        with open(path) as fh:
            return json.load(fh)
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}")


def load_config(path):
    d = read_document(path)
    return AnalysisConfig.from_dict(d, base_dir=os.path.dirname(os.path.abspath(path)))
