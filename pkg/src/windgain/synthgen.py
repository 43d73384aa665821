"""Seeded synthetic three-turbine SCADA with a known upgrade.

A latent Gaussian AR(1) process mapped through the Weibull quantile
function gives a free-stream wind speed shared by the farm.  Each turbine
sees it scaled by its own factor plus independent local turbulence, reads
it through a noisy anemometer, and produces power from a logistic power
curve plus noise.  By default the noise is largest on the steep part of the
curve and shrinks towards standstill and rated output, as 10-min SCADA
averages do; ``noise_profile="constant"`` gives homoscedastic noise.  In
Period 2 the REF power curve is multiplied by ``upgrade_gamma`` and both REF
and CTR-b gain ``shared_drift`` kW.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, fields

import numpy as np
import pandas as pd
from scipy import integrate, special, stats

from .dataset import TurbineSeries
from .errors import InvalidScenario
from .period2 import HOURS_PER_YEAR, PowerFrequency, empirical_power_frequency


NOISE_PROFILES = ("curve", "constant")


@dataclass(frozen=True)
class FarmScenario:
    seed: int = 0
    n_p1: int = 2000
    n_p2: int = 2000
    # logistic power curve
    rated_kw: float = 2000.0
    cut_in: float = 3.0
    inflection: float = 8.5
    slope: float = 0.9
    noise_sd: float = 20.0
    noise_profile: str = "curve"
    noise_floor: float = 0.1
    # upgrade and drift
    shared_drift: float = 0.0
    upgrade_gamma: float = 1.0
    # wind climate
    weibull_shape: float = 2.0
    weibull_scale: float = 8.0
    persistence: float = 0.9
    # per-turbine speed factor (REF, CTR-b, CTR-n)
    speed_factor: tuple = (1.0, 1.0, 1.0)
    site_sd: float = 0.25
    anemometer_sd: float = 0.15
    cadence_seconds: int = 600
    start: str = "2021-01-01T00:00:00Z"
    # REF/CTR-b power driven by the CTR-n anemometer alone; other covariates
    # (CTR-n power included) are noise unrelated to the responses
    ctrn_support_only: bool = False
    missing_rate: float = 0.0

    def validate(self):
        if self.n_p1 < 200 or self.n_p2 < 200:
            raise InvalidScenario("n_p1 and n_p2 must be at least 200")
        if not self.rated_kw > 0:
            raise InvalidScenario("rated power must be positive")
        if self.upgrade_gamma < 1:
            raise InvalidScenario("upgrade_gamma must be >= 1")
        if not 0 <= self.persistence < 1:
            raise InvalidScenario("persistence must lie in [0, 1)")
        if len(self.speed_factor) != 3 or min(self.speed_factor) <= 0:
            raise InvalidScenario("speed_factor needs three positive entries")
        if not 0 <= self.missing_rate < 0.5:
            raise InvalidScenario("missing_rate must lie in [0, 0.5)")
        if self.noise_profile not in NOISE_PROFILES:
            raise InvalidScenario(f"noise_profile must be one of {NOISE_PROFILES}")
        if not 0 <= self.noise_floor <= 1:
            raise InvalidScenario("noise_floor must lie in [0, 1]")
        if self.cadence_seconds <= 0:
            raise InvalidScenario("cadence must be positive")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidScenario(f"unknown scenario keys: {sorted(unknown)}")
        d = dict(d)
        if "speed_factor" in d:
            d["speed_factor"] = tuple(d["speed_factor"])
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["speed_factor"] = list(self.speed_factor)
        return d

    def power_curve(self, u):
        u = np.asarray(u, dtype=float)
        p = self.rated_kw * special.expit(self.slope * (u - self.inflection))
        return np.where(u >= self.cut_in, p, 0.0)

    def noise_scale(self, p):
        """Power noise sd (kW) at true power ``p``."""
        p = np.asarray(p, dtype=float)
        if self.noise_profile == "constant":
            return np.full(p.shape, self.noise_sd)
        s = np.clip(p / self.rated_kw, 0.0, 1.0)
        return self.noise_sd * (self.noise_floor + (1 - self.noise_floor) * 4 * s * (1 - s))

    @property
    def boundary(self):
        return pd.Timestamp(self.start) + pd.Timedelta(seconds=self.cadence_seconds * self.n_p1)


@dataclass(frozen=True)
class SyntheticFarm:
    scenario: FarmScenario
    ref: TurbineSeries
    ctrb: TurbineSeries
    ctrn: TurbineSeries
    boundary: pd.Timestamp
    truth: float

    def write(self, directory):
        """CSV per turbine plus ``truth.json``; returns the CSV paths by role."""
        os.makedirs(directory, exist_ok=True)
        paths = {}
        for role, s in (("REF", self.ref), ("CTR-b", self.ctrb), ("CTR-n", self.ctrn)):
            paths[role] = os.path.join(directory, f"{s.turbine_id}.csv")
            s.to_csv(paths[role], float_format="%.6f")
        with open(os.path.join(directory, "truth.json"), "w") as fh:
            json.dump({"truth": self.truth, "boundary": self.boundary.strftime("%Y-%m-%dT%H:%M:%SZ"),
                       "scenario": self.scenario.to_dict()}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return paths


def true_gain(scenario):
    """Upgrade energy over baseline energy under the Weibull climate.

    Both integrals run over the REF turbine's mean wind distribution (local
    turbulence averages out of the ratio because the uplift is uniform in
    power).
    """
    if scenario.upgrade_gamma == 1.0:
        return 0.0
    a = scenario.speed_factor[0]
    dist = stats.weibull_min(scenario.weibull_shape, scale=scenario.weibull_scale * a)

    def energy(u):
        return float(scenario.power_curve(u)) * dist.pdf(u)

    hi = dist.ppf(1 - 1e-12)
    base, _ = integrate.quad(energy, scenario.cut_in, hi, limit=200, epsabs=1e-10, epsrel=1e-12)
    uplift, _ = integrate.quad(lambda u: (scenario.upgrade_gamma - 1.0) * energy(u),
                               scenario.cut_in, hi, limit=200, epsabs=1e-10, epsrel=1e-12)
    return uplift / base


def _latent_wind(rng, n, scenario):
    phi = scenario.persistence
    z = np.empty(n)
    z[0] = rng.standard_normal()
    eps = rng.standard_normal(n) * math.sqrt(1 - phi * phi)
    for t in range(1, n):
        z[t] = phi * z[t - 1] + eps[t]
    u = stats.norm.cdf(z)
    return scenario.weibull_scale * (-np.log1p(-u)) ** (1.0 / scenario.weibull_shape)


def _simulate(scenario, rng, n, upgrade_from=None):
    """Arrays for the three turbines over ``n`` steps.

    Steps at or after ``upgrade_from`` get the REF uplift and the drift.
    """
    free = _latent_wind(rng, n, scenario)
    local = [np.maximum(free * f + rng.normal(0, scenario.site_sd, n), 0.0)
             for f in scenario.speed_factor]
    measured = [np.maximum(u + rng.normal(0, scenario.anemometer_sd, n), 0.0) for u in local]

    if scenario.ctrn_support_only:
        driver = [measured[2], measured[2]]
    else:
        driver = [local[0], local[1]]
    power = [scenario.power_curve(d) for d in driver]
    power.append(scenario.power_curve(local[2]))
    if scenario.ctrn_support_only:
        power[2] = rng.uniform(0, scenario.rated_kw, n)

    post = np.zeros(n, dtype=bool) if upgrade_from is None else np.arange(n) >= upgrade_from
    power[0] = np.where(post, scenario.upgrade_gamma * power[0], power[0])
    power = [p + scenario.noise_scale(p) * rng.standard_normal(n) for p in power]
    power[0] = power[0] + np.where(post, scenario.shared_drift, 0.0)
    power[1] = power[1] + np.where(post, scenario.shared_drift, 0.0)

    direction = np.mod(np.cumsum(rng.normal(0, 6.0, n)) + rng.uniform(0, 360), 360.0)
    step_hours = np.arange(n) * scenario.cadence_seconds / 3600.0
    temperature = (283.0 + 7.0 * np.sin(2 * math.pi * (step_hours - 9.0) / 24.0)
                   + np.cumsum(rng.normal(0, 0.05, n)))
    pressure = 101325.0 + np.cumsum(rng.normal(0, 8.0, n))
    return {
        "measured": measured,
        "power": power,
        "direction": [np.mod(direction + rng.normal(0, 3.0, n), 360.0) for _ in range(3)],
        "temperature": temperature,
        "pressure": pressure,
    }


def generate(scenario):
    """Three :class:`TurbineSeries` (REF, CTR-b, CTR-n) and the true gain."""
    scenario.validate()
    rng = np.random.default_rng(scenario.seed)
    n = scenario.n_p1 + scenario.n_p2
    sim = _simulate(scenario, rng, n, upgrade_from=scenario.n_p1)
    ts = pd.date_range(pd.Timestamp(scenario.start), periods=n,
                       freq=pd.Timedelta(seconds=scenario.cadence_seconds))
    series = []
    for i, tid in enumerate(("REF", "CTRB", "CTRN")):
        cols = {
            "wind_speed": sim["measured"][i],
            "power": sim["power"][i],
            "direction": sim["direction"][i],
            "temperature": sim["temperature"] + rng.normal(0, 0.1, n),
            "pressure": sim["pressure"] + rng.normal(0, 5.0, n),
        }
        if scenario.missing_rate > 0:
            for k in cols:
                v = cols[k].copy()
                v[rng.random(n) < scenario.missing_rate] = np.nan
                cols[k] = v
        series.append(TurbineSeries.from_arrays(tid, ts, **cols))
    return SyntheticFarm(scenario, *series, scenario.boundary, true_gain(scenario))


def long_term_reference(scenario, bin_width=100.0, n=100_000):
    """Long-run CTR-b power frequency and REF baseline AEP for ``scenario``.

    Simulated from an independent stream with no upgrade and no drift; plays
    the role of the site's historical record.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(scenario.seed), 0x5EED]))
    sim = _simulate(scenario, rng, n)
    pi = empirical_power_frequency(sim["power"][1], bin_width)
    pi = PowerFrequency(pi.bin_width, pi.hours, source="synthetic long-term record")
    aep = float(np.mean(sim["power"][0]) * HOURS_PER_YEAR)
    return pi, aep
