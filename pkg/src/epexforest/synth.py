"""Synthetic daily market with planted driver effects.

Log base price is ``L[t] = log(long_run) + Z[t] + P[t]`` where

* ``Z`` is a mean-reverting AR(1) in logs, ``Z[t] = (1 - kappa) Z[t-1] + vol e[t] + J[t]``,
  with compound-Poisson jumps ``J``;
* ``P`` carries the planted effects, ``P[t] = P[t-22] + f(x[t])``, so the
  22-day change of ``P`` is exactly the planted surface ``f`` evaluated at the
  design-matrix predictors ``x[t]`` of that day.

Hence the 22-day target change is ``f(x[t]) + Z[t] - Z[t-22]``. ``f`` is linear
in the 12 predictors plus a permit x natgas product term and is what
:func:`ground_truth` evaluates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from ._config import read_pairs
from .errors import ConfigError
from .pipeline import (
    DEFAULT_FEATURE_SPEC,
    PREDICTORS,
    SOURCE_VARIABLES,
    WINDOW,
    DailyPanel,
    _apply_steps,
    convert_to_eur,
    fill_gaps,
)

DRIVERS = ("permit", "oil", "coal", "natgas", "eurusd", "vix", "i")

_DEFAULT_COEFS = {
    "permit": 0.3, "oil": 0.12, "coal": 0.08, "natgas": 0.6,
    "i": 0.0, "vix": 0.0, "cpi": 0.0, "qwind": -0.01, "suntime": 0.0,
    "temp": 0.0, "day_week": 0.0, "reversal": -0.5,
}
# (initial level, daily log drift, daily log vol); i is in percentage points
# and moves additively.
_DEFAULT_DRIVERS = {
    "permit": (8.0, 0.0006, 0.028),
    "oil": (110.0, 0.0, 0.02),
    "coal": (100.0, 0.0, 0.018),
    "natgas": (9.0, 0.0, 0.03),
    "eurusd": (1.3, 0.0, 0.005),
    "vix": (18.0, 0.0, 0.06),
    "i": (0.5, 0.0, 0.01),
}


@dataclass(frozen=True)
class ScenarioSpec:
    horizon: int = 2624
    start: str = "2012-01-02"
    kappa: float = 0.3
    long_run: float = 43.0
    volatility: float = 0.035
    jump_intensity: float = 0.02
    jump_mean: float = 0.0
    jump_std: float = 0.25
    intercept: float = 0.0
    coefficients: Mapping[str, float] = field(default_factory=lambda: dict(_DEFAULT_COEFS))
    interaction: float = 1.0
    drivers: Mapping[str, tuple[float, float, float]] = field(default_factory=lambda: dict(_DEFAULT_DRIVERS))
    peak_premium: float = 0.1
    peak_volatility: float = 0.02
    weather_noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.horizon, int) or self.horizon < 200:
            raise ConfigError("horizon: must be an integer >= 200")
        if not 0 < self.kappa <= 1:
            raise ConfigError("kappa: must lie in (0, 1]")
        if not self.long_run > 0:
            raise ConfigError("long_run: must be positive")
        for name in ("volatility", "jump_intensity", "jump_std", "peak_volatility", "weather_noise"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ConfigError(f"{name}: must be finite and >= 0")
        unknown = set(self.coefficients) - set(PREDICTORS)
        if unknown:
            raise ConfigError(f"coefficients: unknown predictor(s) {sorted(unknown)}")
        if abs(self.coefficients.get("reversal", 0.0)) >= 1:
            raise ConfigError("coefficients: |reversal| must be < 1 for a stable process")
        for name, params in self.drivers.items():
            if name not in DRIVERS:
                raise ConfigError(f"drivers: unknown driver {name!r}")
            level, _, vol = params
            if vol < 0:
                raise ConfigError(f"drivers.{name}: volatility must be >= 0")
            if name != "i" and level <= 0:
                raise ConfigError(f"drivers.{name}: initial level must be positive")
        try:
            pd.Timestamp(self.start)
        except ValueError:
            raise ConfigError(f"start: bad date {self.start!r}") from None

    def coefficient_vector(self) -> np.ndarray:
        return np.array([self.coefficients.get(name, 0.0) for name in PREDICTORS])

    def driver(self, name: str) -> tuple[float, float, float]:
        return tuple(self.drivers.get(name, _DEFAULT_DRIVERS[name]))

    @classmethod
    def from_file(cls, path: str | Path) -> "ScenarioSpec":
        """Read ``key = value`` lines; ``coef.<predictor>`` and ``<driver>.level|drift|vol`` are nested keys."""
        scalars = {f.name for f in fields(cls)}
        kwargs: dict = {}
        coefs = dict(_DEFAULT_COEFS)
        drivers = {k: list(v) for k, v in _DEFAULT_DRIVERS.items()}
        for key, value, lineno in read_pairs(path):
            try:
                if key.startswith("coef."):
                    coefs[key[5:]] = float(value)
                elif "." in key:
                    name, part = key.split(".", 1)
                    if name not in drivers or part not in ("level", "drift", "vol"):
                        raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                    drivers[name][("level", "drift", "vol").index(part)] = float(value)
                elif key in ("horizon", "seed"):
                    kwargs[key] = int(value)
                elif key == "start":
                    kwargs[key] = value
                elif key in scalars and key not in ("coefficients", "drivers"):
                    kwargs[key] = float(value)
                else:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
        return cls(coefficients=coefs, drivers={k: tuple(v) for k, v in drivers.items()}, **kwargs)


def ground_truth(spec: ScenarioSpec, point) -> float:
    """Planted surface f at a 12-vector of predictors (design-matrix column order)."""
    x = np.asarray(point, dtype=float)
    if x.shape != (len(PREDICTORS),):
        raise ConfigError(f"point must have {len(PREDICTORS)} entries")
    permit, natgas = x[PREDICTORS.index("permit")], x[PREDICTORS.index("natgas")]
    return float(spec.intercept + spec.coefficient_vector() @ x + spec.interaction * permit * natgas)


def ground_truth_matrix(spec: ScenarioSpec, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    p, g = PREDICTORS.index("permit"), PREDICTORS.index("natgas")
    return spec.intercept + X @ spec.coefficient_vector() + spec.interaction * X[:, p] * X[:, g]


def _seasonal(dates: pd.DatetimeIndex, phase_day: float) -> np.ndarray:
    doy = dates.dayofyear.to_numpy(dtype=float)
    return np.sin(2 * np.pi * (doy - phase_day) / 365.25)


def generate(spec: ScenarioSpec) -> DailyPanel:
    """Simulate all 13 source variables over ``spec.horizon`` working days.

    CPI is only observed on the first working day of each month (empty
    otherwise), as with a monthly index before interpolation.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.horizon
    dates = pd.bdate_range(spec.start, periods=n, name="date")
    cols: dict[str, np.ndarray] = {}

    for name in ("permit", "oil", "coal", "natgas", "eurusd", "vix"):
        level, drift, vol = spec.driver(name)
        steps = drift + vol * rng.standard_normal(n)
        steps[0] = 0.0
        log_path = np.log(level) + np.cumsum(steps)
        if name == "vix":
            # pull VIX back towards its starting level
            log_path = np.log(level) + _ar1(steps, 0.02)
        cols[name] = np.exp(log_path)
    level, drift, vol = spec.driver("i")
    steps = drift + vol * rng.standard_normal(n)
    steps[0] = 0.0
    cols["i"] = level + np.cumsum(steps)

    w = spec.weather_noise
    cols["temp"] = 10.0 + 9.0 * _seasonal(dates, 110) + 3.0 * w * rng.standard_normal(n)
    cols["sun"] = np.clip(4.5 + 3.5 * _seasonal(dates, 80) + 2.0 * w * rng.standard_normal(n), 0.0, 15.0)
    cols["qwind"] = np.clip(12.0 - 5.0 * _seasonal(dates, 20) + 4.0 * w * rng.standard_normal(n), 0.1, None)

    month = dates.year * 12 + dates.month
    first_of_month = np.r_[True, month[1:] != month[:-1]]
    months_elapsed = (month - month[0]).to_numpy(dtype=float)
    cpi = 100.0 * np.exp(0.0015 * months_elapsed + 0.001 * rng.standard_normal(n))
    cols["cpi"] = np.where(first_of_month, cpi, np.nan)

    drivers_panel = DailyPanel(pd.DataFrame(cols, index=dates))
    prepared = convert_to_eur(fill_gaps(drivers_panel, linear=("cpi",)), DEFAULT_FEATURE_SPEC.dollar_variables)
    X = _predictor_columns(prepared)

    # price noise
    shocks = spec.volatility * rng.standard_normal(n)
    n_jumps = rng.poisson(spec.jump_intensity, n)
    # sum of k iid normal jump sizes, drawn in one go
    jumps = n_jumps * spec.jump_mean + np.sqrt(n_jumps) * spec.jump_std * rng.standard_normal(n)
    z = _ar1(shocks + jumps, spec.kappa)

    rev_j = PREDICTORS.index("reversal")
    log_base = np.empty(n)
    planted = np.zeros(n)
    mu = np.log(spec.long_run)
    for t in range(n):
        if t >= 2 * WINDOW:
            X[t, rev_j] = log_base[t - WINDOW] - log_base[t - 2 * WINDOW]
        if np.isfinite(X[t]).all():
            planted[t] = (planted[t - WINDOW] if t >= WINDOW else 0.0) + ground_truth(spec, X[t])
        elif t >= WINDOW:
            planted[t] = planted[t - WINDOW]
        log_base[t] = mu + z[t] + planted[t]

    peak_noise = _ar1(spec.peak_volatility * rng.standard_normal(n), 0.5)
    cols["base"] = np.exp(log_base)
    cols["peak"] = np.exp(log_base + spec.peak_premium + peak_noise)
    frame = pd.DataFrame({name: cols[name] for name in SOURCE_VARIABLES}, index=dates)
    return DailyPanel(frame)


def _ar1(shocks: np.ndarray, kappa: float) -> np.ndarray:
    out = np.empty_like(shocks)
    prev = 0.0
    for t, s in enumerate(shocks):
        prev = (1.0 - kappa) * prev + s
        out[t] = prev
    return out


def _predictor_columns(panel: DailyPanel) -> np.ndarray:
    """Predictors as the pipeline computes them; reversal is left NaN."""
    spec = DEFAULT_FEATURE_SPEC
    out = np.full((len(panel), len(PREDICTORS)), np.nan)
    for j, name in enumerate(PREDICTORS):
        tr = spec.predictors[name]
        if name == "day_week":
            out[:, j] = panel.dates.dayofweek + 1
        elif name != "reversal":
            out[:, j] = _apply_steps(panel.column(tr.source), tr.steps, panel.dates)
    return out


def with_overrides(spec: ScenarioSpec, **changes) -> ScenarioSpec:
    """Copy of ``spec`` with fields replaced; ``coefficients`` entries are merged."""
    coefs = changes.pop("coefficients", None)
    if coefs is not None:
        changes["coefficients"] = {**spec.coefficients, **coefs}
    return replace(spec, **changes)
