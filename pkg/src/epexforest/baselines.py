"""Linear benchmarks: OLS on the 12 predictors and an AR(1) on the target change."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import ConfigError, DataError, InsufficientDataError, RankError
from .pipeline import WINDOW, DesignMatrix

CONDITION_WARNING = 1e8


@dataclass(frozen=True)
class LinearFit:
    coefficients: np.ndarray
    intercept: float
    residuals: np.ndarray
    rmse: float
    names: tuple[str, ...]

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coefficients + self.intercept

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])


def fit_ols(X, y, names: Sequence[str] | None = None) -> LinearFit:
    """Least squares with intercept via column-pivoted QR.

    Raises :class:`RankError` naming the offending columns when the design,
    constant included, is rank deficient.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(k))
    if len(names) != k:
        raise ConfigError("names must match the number of columns")
    if y.shape != (n,):
        raise DataError("y length does not match X")
    if n <= k + 1:
        raise InsufficientDataError(f"need more than {k + 1} rows for {k} regressors, got {n}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("non-finite values in regression inputs")

    A = np.column_stack([np.ones(n), X])
    labels = ("const", *names)
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    Q, R, piv = scipy.linalg.qr(A / scale, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(A.shape) * np.finfo(float).eps * 1e3 if diag.size else 0.0
    rank = int((diag > tol).sum())
    if rank < A.shape[1]:
        bad = sorted(labels[j] for j in piv[rank:])
        raise RankError(f"regressors are collinear; drop one of: {', '.join(bad)}")
    cond = diag[0] / diag[-1]
    if cond > CONDITION_WARNING:
        warnings.warn(f"ill-conditioned regression (cond ~ {cond:.2e})", RuntimeWarning, stacklevel=2)

    z = scipy.linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty_like(z)
    beta[piv] = z
    beta /= scale
    residuals = y - A @ beta
    return LinearFit(
        coefficients=beta[1:],
        intercept=float(beta[0]),
        residuals=residuals,
        rmse=float(np.sqrt(np.mean(residuals**2))),
        names=names,
    )


def fit_ar1(y, lag: int = WINDOW) -> LinearFit:
    """Regress ``y[t]`` on a constant and ``y[t - lag]``.

    The default lag of 22 working days matches the reversal predictor, so on a
    design matrix this is the regression of the target on its reversal column.
    """
    y = np.asarray(y, dtype=float)
    if y.size < 30 or y.size <= lag + 2:
        raise InsufficientDataError(f"AR(1) needs at least 30 observations beyond the lag, got {y.size}")
    return fit_ols(y[:-lag, None], y[lag:], names=(f"lag{lag}",))


def ar1_on_design(design: DesignMatrix) -> LinearFit:
    """AR(1) benchmark on the design sample: target on its own 22-day lag."""
    j = design.index("reversal")
    return fit_ols(design.X[:, [j]], design.y, names=("reversal",))


def ols_on_design(design: DesignMatrix) -> LinearFit:
    return fit_ols(design.X, design.y, names=design.feature_names)


@dataclass(frozen=True)
class RatioRow:
    name: str
    value: float
    ratio: float

    @property
    def below(self) -> float:
        """Fraction by which ``value`` is below the reference."""
        return 1.0 - self.ratio


def compare(values: Mapping[str, float], reference: float) -> list[RatioRow]:
    """Each value divided by ``reference``."""
    if not reference > 0:
        raise DataError(f"reference RMSE must be positive, got {reference}")
    return [RatioRow(name, float(v), float(v) / reference) for name, v in values.items()]


def write_fit_summary(fits: Mapping[str, LinearFit], path, header_lines=()) -> None:
    """Coefficient table followed by one RMSE row per model."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "name", "coefficient"])
        for model, fit in fits.items():
            writer.writerow([model, "const", f"{fit.intercept:.6f}"])
            for name, coef in zip(fit.names, fit.coefficients):
                writer.writerow([model, name, f"{coef:.6f}"])
        for model, fit in fits.items():
            writer.writerow([model, "rmse_in_sample", f"{fit.rmse:.6f}"])
