"""Independent reference implementations used only by the tests."""

import numpy as np


def brute_force_split(X, y, features=None):
    """Enumerate every feature/midpoint and compute child SSEs directly.

    Returns (feature, threshold, reduction) or None. Ties within 1e-9 of the
    best reduction go to the lowest feature, then the lowest threshold.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    parent = float(np.sum((y - y.mean()) ** 2))
    candidates = []
    for f in range(p) if features is None else sorted(features):
        values = np.unique(X[:, f])
        for a, b in zip(values[:-1], values[1:]):
            t = (a + b) / 2
            left = y[X[:, f] <= t]
            right = y[X[:, f] > t]
            sse = np.sum((left - left.mean()) ** 2) + np.sum((right - right.mean()) ** 2)
            candidates.append((f, t, parent - sse))
    if not candidates:
        return None
    best = max(c[2] for c in candidates)
    if best <= 1e-12 * max(parent, 1e-300):
        return None
    tied = [c for c in candidates if c[2] >= best - 1e-9 * max(1.0, abs(best))]
    return min(tied, key=lambda c: (c[0], c[1]))


def normal_equations(X, y):
    """(intercept, coefficients) from (A'A) b = A'y."""
    A = np.column_stack([np.ones(len(y)), X])
    beta = np.linalg.solve(A.T @ A, A.T @ y)
    return beta[0], beta[1:]


def rolling_mean_direct(series, window):
    out = [float("nan")] * len(series)
    for t in range(window - 1, len(series)):
        total = 0.0
        for k in range(t - window + 1, t + 1):
            total += series[k]
        out[t] = total / window
    return np.array(out)


def change_direct(series, kind, lag=22):
    out = [float("nan")] * len(series)
    for t in range(lag, len(series)):
        if kind == "log-diff":
            out[t] = np.log(series[t]) - np.log(series[t - lag])
        else:
            out[t] = series[t] - series[t - lag]
    return np.array(out)
