"""Daily panel ingestion, gap filling, currency conversion and 22-day features.

The pipeline turns raw daily CSV quotes into a :class:`DesignMatrix` with the
twelve predictors used throughout the package::

    permit, oil, coal, natgas, i, vix, cpi, qwind, suntime, temp, day_week, reversal

and a target equal to the 22-working-day change of the base or peak price.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from ._config import read_pairs
from .errors import (
    ConfigError,
    DataError,
    InsufficientDataError,
    IntegrityError,
    ParseError,
    SchemaError,
)

WINDOW = 22

SOURCE_VARIABLES = (
    "base", "peak", "permit", "oil", "coal", "natgas", "qwind",
    "temp", "sun", "eurusd", "i", "vix", "cpi",
)
PREDICTORS = (
    "permit", "oil", "coal", "natgas", "i", "vix", "cpi",
    "qwind", "suntime", "temp", "day_week", "reversal",
)
TARGETS = ("base", "peak")
DOLLAR_VARIABLES = ("oil", "coal", "natgas")

STEP_KINDS = (
    "log-diff-22",
    "diff-22",
    "level",
    "rolling-mean-22",
    "lag-22-of-target-change",
    "categorical-day-of-week",
)

# predictor name -> source column, where they differ
_SOURCES = {"suntime": "sun"}


# ---------------------------------------------------------------------------
# Panel


@dataclass(frozen=True)
class DailyPanel:
    """Working-day table of named daily variables, indexed by date.

    Missing observations are stored as NaN until :func:`fill_gaps` removes them.
    """

    frame: pd.DataFrame

    def __post_init__(self):
        index = self.frame.index
        if not isinstance(index, pd.DatetimeIndex):
            raise TypeError("DailyPanel frame must have a DatetimeIndex")
        if len(index) and not index.is_monotonic_increasing:
            raise IntegrityError("panel dates are not increasing")
        if index.has_duplicates:
            dup = index[index.duplicated()][0]
            raise IntegrityError(f"duplicate date {dup.date()}")

    @classmethod
    def from_columns(cls, dates: Iterable, columns: Mapping[str, Sequence[float]]) -> "DailyPanel":
        index = pd.DatetimeIndex(pd.to_datetime(list(dates)), name="date")
        frame = pd.DataFrame({k: np.asarray(v, dtype=float) for k, v in columns.items()}, index=index)
        return cls(frame)

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.frame.index

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(self.frame.columns)

    @property
    def first_date(self) -> dt.date | None:
        return self.frame.index[0].date() if len(self.frame) else None

    @property
    def last_date(self) -> dt.date | None:
        return self.frame.index[-1].date() if len(self.frame) else None

    def column(self, name: str) -> np.ndarray:
        if name not in self.frame.columns:
            raise SchemaError(f"panel has no variable {name!r}; available: {', '.join(self.variables)}")
        return self.frame[name].to_numpy(dtype=float)

    def to_csv(self, path: str | Path, header_lines: Sequence[str] = ()) -> None:
        """Write in the format :func:`ingest_csv` reads (empty cell = missing)."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["date", *self.variables])
            values = self.frame.to_numpy(dtype=float)
            for day, row in zip(self.frame.index, values):
                writer.writerow([day.date().isoformat(), *(_fmt(v) for v in row)])


def _fmt(value: float) -> str:
    return "" if math.isnan(value) else repr(float(value))


def ingest_csv(path: str | Path, schema: Sequence[str] = SOURCE_VARIABLES) -> DailyPanel:
    """Read a ``date,<var>,...`` CSV into a working-day panel.

    Weekend rows are dropped. Lines starting with ``#`` are ignored. Columns
    outside ``schema`` raise :class:`SchemaError`; a repeated date raises
    :class:`IntegrityError`.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [(n, line) for n, line in enumerate(fh, start=1) if line.strip() and not line.startswith("#")]
    if not lines:
        raise SchemaError(f"{path}: empty file")
    reader = csv.reader(line for _, line in lines)
    header = [h.strip() for h in next(reader)]
    if not header or header[0].lower() != "date":
        raise SchemaError(f"{path}: first column must be 'date', got {header[:1]}")
    variables = header[1:]
    unknown = [v for v in variables if v not in schema]
    if unknown:
        raise SchemaError(f"{path}: unknown column(s) {unknown}; expected a subset of {list(schema)}")
    if len(set(variables)) != len(variables):
        raise SchemaError(f"{path}: repeated column names in header")

    dates: list[dt.date] = []
    rows: list[list[float]] = []
    seen: dict[dt.date, int] = {}
    for (lineno, _), record in zip(lines[1:], reader):
        if len(record) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(record)}")
        try:
            day = dt.date.fromisoformat(record[0].strip())
        except ValueError:
            raise ParseError(f"{path}:{lineno}: malformed date {record[0]!r}") from None
        if day in seen:
            raise IntegrityError(f"{path}:{lineno}: duplicate date {day} (first at line {seen[day]})")
        seen[day] = lineno
        values = []
        for name, cell in zip(variables, record[1:]):
            cell = cell.strip()
            if not cell:
                values.append(math.nan)
                continue
            try:
                values.append(float(cell))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad number {cell!r} in column {name!r}") from None
        dates.append(day)
        rows.append(values)

    frame = pd.DataFrame(rows, columns=variables, dtype=float)
    frame.index = pd.DatetimeIndex(pd.to_datetime(dates), name="date")
    frame = frame[frame.index.dayofweek < 5].sort_index()
    return DailyPanel(frame)


def fill_gaps(
    panel: DailyPanel,
    policy: str = "forward-fill",
    linear: Iterable[str] = ("cpi",),
) -> DailyPanel:
    """Remove missing values.

    Leading rows are trimmed until every variable has an observation. Interior
    gaps use ``policy``; variables in ``linear`` are always interpolated
    linearly in calendar time between anchors. Values after the last anchor
    are carried forward.
    """
    if policy not in ("forward-fill", "linear"):
        raise ConfigError(f"unknown fill policy {policy!r}")
    if len(panel) < 2:
        raise InsufficientDataError("fill_gaps needs at least 2 rows")
    frame = panel.frame
    empty = [c for c in frame.columns if frame[c].isna().all()]
    if empty:
        raise DataError(f"variable(s) entirely missing: {', '.join(empty)}")

    start = max(frame[c].first_valid_index() for c in frame.columns)
    frame = frame.loc[start:].copy()
    linear = set(linear)
    for name in frame.columns:
        col = frame[name]
        if not col.isna().any():
            continue
        if policy == "linear" or name in linear:
            col = col.interpolate(method="time", limit_area="inside")
        frame[name] = col.ffill()
    return DailyPanel(frame)


def convert_to_eur(panel: DailyPanel, dollar_variables: Iterable[str] = DOLLAR_VARIABLES) -> DailyPanel:
    """Divide dollar-quoted columns by the same-day EUR/USD rate (dollars per euro)."""
    fx = panel.column("eurusd")
    bad = ~(fx > 0)
    if bad.any():
        day = panel.dates[np.argmax(bad)].date()
        raise DataError(f"nonpositive or missing EUR/USD rate on {day}")
    frame = panel.frame.copy()
    for name in dollar_variables:
        if name not in frame.columns:
            raise SchemaError(f"dollar variable {name!r} not in panel")
        frame[name] = frame[name].to_numpy(dtype=float) / fx
    return DailyPanel(frame)


# ---------------------------------------------------------------------------
# Series transforms


def rolling_mean(series, window: int = WINDOW) -> np.ndarray:
    """Trailing mean over ``window`` points; the first ``window - 1`` entries are NaN."""
    s = np.asarray(series, dtype=float)
    if window < 1:
        raise ConfigError("window must be positive")
    if s.size < window:
        raise InsufficientDataError(f"series of length {s.size} shorter than window {window}")
    out = np.full(s.shape, np.nan)
    out[window - 1:] = sliding_window_view(s, window).mean(axis=1)
    return out


def change_22(series, kind: str = "log-diff", lag: int = WINDOW, dates=None) -> np.ndarray:
    """``lag``-step change: ``ln s[t] - ln s[t-lag]`` or ``s[t] - s[t-lag]``.

    NaN inputs propagate. The first ``lag`` entries are NaN.
    """
    s = np.asarray(series, dtype=float)
    if kind == "log-diff":
        bad = np.flatnonzero(s <= 0)
        if bad.size:
            where = dates[bad[0]] if dates is not None else f"index {bad[0]}"
            if hasattr(where, "date"):
                where = where.date()
            raise DataError(f"nonpositive value {s[bad[0]]} under log-diff at {where}")
        s = np.log(s)
    elif kind != "diff":
        raise ConfigError(f"unknown change kind {kind!r}")
    out = np.full(s.shape, np.nan)
    if s.size > lag:
        out[lag:] = s[lag:] - s[:-lag]
    return out


# ---------------------------------------------------------------------------
# Feature specification


@dataclass(frozen=True)
class FeatureTransform:
    source: str
    steps: tuple[str, ...]
    to_eur: bool = False
    interpolate: bool = False

    def describe(self) -> str:
        text = " > ".join(self.steps)
        if self.to_eur:
            text += " +eur"
        if self.interpolate:
            text += " +interp"
        return text


def _t(source, *steps, to_eur=False, interpolate=False):
    return FeatureTransform(source, tuple(steps), to_eur, interpolate)


@dataclass(frozen=True)
class FeatureSpec:
    """Transform recipe for every predictor and for the target price."""

    predictors: Mapping[str, FeatureTransform] = field(default_factory=lambda: dict(_DEFAULT_PREDICTORS))
    target: tuple[str, ...] = ("log-diff-22",)

    def __post_init__(self):
        names = tuple(self.predictors)
        if set(names) != set(PREDICTORS) or len(names) != len(PREDICTORS):
            raise ConfigError(f"feature spec must define exactly {PREDICTORS}, got {names}")
        for name, tr in self.predictors.items():
            _check_steps(name, tr.steps)
        _check_steps("target", self.target)
        if self.predictors["reversal"].steps != ("lag-22-of-target-change",):
            raise ConfigError("reversal must be 'lag-22-of-target-change'")

    @property
    def dollar_variables(self) -> tuple[str, ...]:
        return tuple(tr.source for tr in self.predictors.values() if tr.to_eur)

    @property
    def interpolated_variables(self) -> tuple[str, ...]:
        return tuple(tr.source for tr in self.predictors.values() if tr.interpolate)

    @classmethod
    def from_file(cls, path: str | Path) -> "FeatureSpec":
        """Read ``variable = step [> step ...] [+eur] [+interp]`` lines over the defaults."""
        predictors = dict(_DEFAULT_PREDICTORS)
        target = ("log-diff-22",)
        for key, value, lineno in read_pairs(path):
            tokens = value.split()
            flags = {t for t in tokens if t.startswith("+")}
            unknown_flags = flags - {"+eur", "+interp"}
            if unknown_flags:
                raise ConfigError(f"{path}:{lineno}: unknown flag(s) {sorted(unknown_flags)}")
            steps = tuple(s.strip() for s in " ".join(t for t in tokens if not t.startswith("+")).split(">") if s.strip())
            if key == "target":
                target = steps
                continue
            if key not in PREDICTORS:
                raise ConfigError(f"{path}:{lineno}: unknown predictor {key!r}; valid: {', '.join(PREDICTORS)}")
            predictors[key] = FeatureTransform(
                _SOURCES.get(key, key), steps, "+eur" in flags, "+interp" in flags
            )
        return cls(predictors, target)

    def to_text(self) -> str:
        lines = [f"target = {' > '.join(self.target)}"]
        lines += [f"{name} = {self.predictors[name].describe()}" for name in PREDICTORS]
        return "\n".join(lines) + "\n"


def _check_steps(name, steps):
    if not steps:
        raise ConfigError(f"{name}: no transform steps")
    for step in steps:
        if step not in STEP_KINDS:
            raise ConfigError(f"{name}: unknown transform {step!r}; valid: {', '.join(STEP_KINDS)}")


_DEFAULT_PREDICTORS = {
    "permit": _t("permit", "log-diff-22"),
    "oil": _t("oil", "log-diff-22", to_eur=True),
    "coal": _t("coal", "log-diff-22", to_eur=True),
    "natgas": _t("natgas", "log-diff-22", to_eur=True),
    "i": _t("i", "diff-22"),
    "vix": _t("vix", "diff-22"),
    "cpi": _t("cpi", "log-diff-22", interpolate=True),
    "qwind": _t("qwind", "rolling-mean-22", "diff-22"),
    "suntime": _t("sun", "rolling-mean-22", "diff-22"),
    "temp": _t("temp", "diff-22"),
    "day_week": _t("day_week", "categorical-day-of-week"),
    "reversal": _t("reversal", "lag-22-of-target-change"),
}

DEFAULT_FEATURE_SPEC = FeatureSpec()


# ---------------------------------------------------------------------------
# Design matrix


@dataclass(frozen=True)
class DesignMatrix:
    """Sample set of 12 predictors and the 22-day price change target."""

    dates: np.ndarray  # datetime64[D]
    X: np.ndarray
    y: np.ndarray
    target: str = "base"
    feature_names: tuple[str, ...] = PREDICTORS

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0] or self.X.shape[0] != len(self.dates):
            raise DataError("design matrix shapes disagree")
        if self.X.shape[1] != len(self.feature_names):
            raise DataError("feature name count does not match X columns")

    @classmethod
    def from_arrays(cls, X, y, target: str = "base", start: str = "2012-01-02", feature_names=None) -> "DesignMatrix":
        """Wrap raw arrays, assigning consecutive working-day dates from ``start``."""
        X = np.ascontiguousarray(X, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        names = tuple(feature_names) if feature_names is not None else (
            PREDICTORS if X.shape[1] == len(PREDICTORS) else tuple(f"x{j}" for j in range(X.shape[1]))
        )
        dates = pd.bdate_range(start, periods=X.shape[0]).to_numpy().astype("datetime64[D]")
        return cls(dates, X, y, target, names)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise ConfigError(f"unknown feature {name!r}; valid: {', '.join(self.feature_names)}") from None

    def restrict(self, start=None, end=None, min_rows: int = 0) -> "DesignMatrix":
        """Rows with ``start <= date <= end``; features keep their full-history lags."""
        mask = np.ones(self.n_rows, dtype=bool)
        if start is not None:
            mask &= self.dates >= np.datetime64(str(start), "D")
        if end is not None:
            mask &= self.dates <= np.datetime64(str(end), "D")
        if mask.sum() < min_rows:
            raise InsufficientDataError(
                f"{int(mask.sum())} rows between {start or 'start'} and {end or 'end'}, need {min_rows}"
            )
        return replace(self, dates=self.dates[mask], X=self.X[mask], y=self.y[mask])

    def to_csv(self, path: str | Path, header_lines: Sequence[str] = ()) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["date", "y", *self.feature_names])
            for day, target, row in zip(self.dates, self.y, self.X):
                writer.writerow([str(day), repr(float(target)), *(repr(float(v)) for v in row)])


def prepare_panel(panel: DailyPanel, spec: FeatureSpec = DEFAULT_FEATURE_SPEC, policy: str = "forward-fill") -> DailyPanel:
    """Gap-fill then convert dollar quotes, as required before :func:`build_design`."""
    filled = fill_gaps(panel, policy=policy, linear=spec.interpolated_variables)
    return convert_to_eur(filled, spec.dollar_variables)


def _apply_steps(values: np.ndarray, steps: Sequence[str], dates) -> np.ndarray:
    out = values
    for step in steps:
        if step == "log-diff-22":
            out = change_22(out, "log-diff", dates=dates)
        elif step == "diff-22":
            out = change_22(out, "diff", dates=dates)
        elif step == "rolling-mean-22":
            out = rolling_mean(out, WINDOW)
        elif step == "level":
            out = np.array(out, dtype=float)
        else:
            raise ConfigError(f"transform {step!r} is not valid for a source series")
    return out


def build_design(
    panel: DailyPanel,
    spec: FeatureSpec = DEFAULT_FEATURE_SPEC,
    target: str = "base",
    min_rows: int = 100,
) -> DesignMatrix:
    """Build the 12-predictor design matrix for the 22-day change of ``target``.

    Rows whose features need more history than the panel holds are dropped
    from the front. The reversal column is the target change 22 rows earlier.
    """
    if target not in TARGETS:
        raise ConfigError(f"target must be one of {TARGETS}, got {target!r}")
    dates = panel.dates
    needed = {target} | {tr.source for name, tr in spec.predictors.items() if name not in ("day_week", "reversal")}
    for name in sorted(needed):
        if np.isnan(panel.column(name)).any():
            raise DataError(f"variable {name!r} has missing values; run fill_gaps first")

    y = _apply_steps(panel.column(target), spec.target, dates)
    columns = []
    for name in PREDICTORS:
        tr = spec.predictors[name]
        if name == "reversal":
            col = np.full(y.shape, np.nan)
            col[WINDOW:] = y[:-WINDOW]
        elif name == "day_week":
            col = (dates.dayofweek + 1).to_numpy(dtype=float)
        else:
            col = _apply_steps(panel.column(tr.source), tr.steps, dates)
        columns.append(col)
    X = np.column_stack(columns)

    finite = np.isfinite(X).all(axis=1) & np.isfinite(y)
    if not finite.any():
        raise InsufficientDataError(f"no complete rows from a panel of {len(panel)} days")
    first = int(np.argmax(finite))
    if not finite[first:].all():
        bad = first + int(np.argmin(finite[first:]))
        raise DataError(f"non-finite feature value on {dates[bad].date()}")
    n = len(panel) - first
    if n < min_rows:
        raise InsufficientDataError(f"design has {n} rows, need at least {min_rows}")
    return DesignMatrix(
        dates=dates[first:].to_numpy().astype("datetime64[D]"),
        X=np.ascontiguousarray(X[first:]),
        y=np.ascontiguousarray(y[first:]),
        target=target,
    )
