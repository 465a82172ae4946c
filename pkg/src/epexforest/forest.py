"""Bagged regression forests with out-of-bag evaluation.

Each tree draws its resample and its feature-sampling seed from
``SeedSequence(seed, spawn_key=(tree_index,))``, so tree ``k`` is the same
whatever the forest size or worker count. A forest's first ``k`` trees are
therefore exactly the forest that would be fitted with ``n_trees=k``.
"""

from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .cart import RegressionTree, _check_X, default_features_per_split, fit_tree
from .errors import ConfigError, DataError, InsufficientDataError
from .pipeline import DesignMatrix

FOREST_FORMAT = "epexforest.forest/1"
SAMPLING_MODES = ("bootstrap", "subsample")


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 1000
    min_node_size: int = 10
    features_per_split: int | None = None
    sampling: str = "bootstrap"
    seed: int = 0
    max_depth: int | None = None

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if self.min_node_size < 2:
            raise ConfigError("min_node_size must be >= 2")
        if self.sampling not in SAMPLING_MODES:
            raise ConfigError(f"sampling must be one of {SAMPLING_MODES}")


@dataclass(eq=False)
class ForestModel:
    trees: list[RegressionTree]
    in_bag: np.ndarray  # (n_trees, n_rows) bool
    params: ForestParams
    features_per_split: int
    column_means: np.ndarray
    column_min: np.ndarray
    column_max: np.ndarray
    dates: np.ndarray
    feature_names: tuple[str, ...]
    target: str = "base"

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def tree_predictions(self, X) -> np.ndarray:
        """``(n_trees, n_rows)`` matrix of per-tree predictions."""
        X = _check_X(X, self.n_features)
        return np.stack([tree.predict(X) for tree in self.trees])

    def predict(self, X) -> np.ndarray:
        return self.tree_predictions(X).mean(axis=0)


@dataclass(frozen=True)
class ImportanceTable:
    values: np.ndarray
    feature_names: tuple[str, ...]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.feature_names, map(float, self.values)))

    def ranking(self) -> list[str]:
        order = np.argsort(-self.values, kind="stable")
        return [self.feature_names[i] for i in order]


@dataclass(frozen=True)
class PartialGrid:
    feature_a: int
    feature_b: int
    values_a: np.ndarray
    values_b: np.ndarray
    predictions: np.ndarray  # (len(values_a), len(values_b))
    names: tuple[str, str] = ("a", "b")


@dataclass(frozen=True)
class GridSpec:
    """Axis resolution, or explicit axis values. A one-point axis sits at the column mean."""

    n_a: int = 25
    n_b: int = 25
    values_a: Sequence[float] | None = None
    values_b: Sequence[float] | None = None


def tree_plan(seed: int, tree_index: int, n: int, sampling: str = "bootstrap") -> tuple[np.ndarray, int]:
    """Resample indices and feature-sampling seed for one tree."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(tree_index),)))
    if sampling == "bootstrap":
        sample = rng.integers(0, n, size=n)
    elif sampling == "subsample":
        sample = np.sort(rng.choice(n, size=max(1, round(2 * n / 3)), replace=False))
    else:
        raise ConfigError(f"unknown sampling mode {sampling!r}")
    return sample.astype(np.int64), int(rng.integers(0, 2**32 - 1))


def fit_forest(
    design: DesignMatrix,
    params: ForestParams = ForestParams(),
    n_jobs: int = 1,
    min_rows: int = 100,
) -> ForestModel:
    """Fit ``params.n_trees`` trees, each on its own resample of the design rows.

    Trees are independent; with ``n_jobs > 1`` they are grown on a thread pool
    (the tree kernel releases the GIL). Results do not depend on ``n_jobs``.
    """
    X, y = design.X, design.y
    n, p = X.shape
    if n < min_rows:
        raise InsufficientDataError(f"forest needs at least {min_rows} rows, got {n}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("design contains non-finite values")
    mtry = default_features_per_split(p) if params.features_per_split is None else params.features_per_split
    if not 1 <= mtry <= p:
        raise ConfigError(f"features_per_split must be in 1..{p}")
    if np.ptp(y) == 0:
        warnings.warn("constant target: every tree is a single leaf", RuntimeWarning, stacklevel=2)

    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)

    def grow(k):
        sample, tree_seed = tree_plan(params.seed, k, n, params.sampling)
        tree = fit_tree(X, y, params.min_node_size, mtry, tree_seed, params.max_depth, sample)
        return tree, sample

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(grow, range(params.n_trees)))
    else:
        results = [grow(k) for k in range(params.n_trees)]

    in_bag = np.zeros((params.n_trees, n), dtype=bool)
    for k, (_, sample) in enumerate(results):
        in_bag[k, sample] = True
    return ForestModel(
        trees=[tree for tree, _ in results],
        in_bag=in_bag,
        params=params,
        features_per_split=mtry,
        column_means=X.mean(axis=0),
        column_min=X.min(axis=0),
        column_max=X.max(axis=0),
        dates=np.asarray(design.dates),
        feature_names=tuple(design.feature_names),
        target=design.target,
    )


def predict_forest(model: ForestModel, x) -> float:
    """Mean of the tree predictions at a single point."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError("predict_forest takes a single feature vector")
    return float(model.predict(x[None, :])[0])


def _check_same_design(model: ForestModel, design: DesignMatrix):
    if design.n_rows != model.in_bag.shape[1] or not np.array_equal(np.asarray(design.dates), model.dates):
        raise DataError("design dates do not match the rows the forest was fitted on")


def oob_predict(model: ForestModel, design: DesignMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Out-of-bag prediction per row and its availability mask.

    Row ``i`` averages only the trees whose resample excluded it. Rows that
    are in every bag get NaN and ``False``.
    """
    _check_same_design(model, design)
    preds = model.tree_predictions(design.X)
    out_bag = ~model.in_bag
    counts = out_bag.sum(axis=0)
    sums = np.where(out_bag, preds, 0.0).sum(axis=0)
    available = counts > 0
    result = np.full(design.n_rows, np.nan)
    result[available] = sums[available] / counts[available]
    return result, available


def rmse(pred, actual, mask=None) -> float:
    """Root mean squared error over pairs that are available and finite."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape:
        raise DataError(f"length mismatch: {pred.shape} vs {actual.shape}")
    ok = np.isfinite(pred) & np.isfinite(actual)
    if mask is not None:
        ok &= np.asarray(mask, dtype=bool)
    if not ok.any():
        raise DataError("rmse: no available prediction/actual pairs")
    diff = pred[ok] - actual[ok]
    return float(np.sqrt(np.mean(diff * diff)))


def importance(model: ForestModel) -> ImportanceTable:
    """Impurity importance: per-feature SSE reductions over all trees, normalised to sum to 1."""
    tally = np.sum([tree.tally for tree in model.trees], axis=0)
    total = tally.sum()
    if not total > 0:
        raise DataError("forest has no splits; importance is undefined")
    return ImportanceTable(tally / total, model.feature_names)


def error_curve(model: ForestModel, design: DesignMatrix, checkpoints: Sequence[int]) -> list[tuple[int, float]]:
    """OOB mean squared error of the sub-forest made of the first ``k`` trees, per checkpoint ``k``."""
    _check_same_design(model, design)
    ks = [int(k) for k in checkpoints]
    for k in ks:
        if k < 1 or k > model.n_trees:
            raise ConfigError(f"checkpoint {k} outside 1..{model.n_trees}")
    preds = model.tree_predictions(design.X)
    out_bag = ~model.in_bag
    sums = np.cumsum(np.where(out_bag, preds, 0.0), axis=0)
    counts = np.cumsum(out_bag, axis=0)
    curve = []
    for k in ks:
        c = counts[k - 1]
        ok = c > 0
        if not ok.any():
            raise DataError(f"no out-of-bag rows among the first {k} trees")
        err = sums[k - 1][ok] / c[ok] - design.y[ok]
        curve.append((k, float(np.mean(err * err))))
    return curve


def _axis(model: ForestModel, j: int, n: int, values) -> np.ndarray:
    lo, hi = model.column_min[j], model.column_max[j]
    if values is not None:
        return np.clip(np.asarray(values, dtype=float), lo, hi)
    if n < 1:
        raise ConfigError("grid axis needs at least one point")
    if n == 1:
        return np.array([model.column_means[j]])
    return np.linspace(lo, hi, n)


def partial_grid(model: ForestModel, feature_a, feature_b, grid: GridSpec = GridSpec()) -> PartialGrid:
    """Forest predictions over a two-feature grid, other features fixed at their training means."""
    a = _feature_index(model, feature_a)
    b = _feature_index(model, feature_b)
    if a == b:
        raise ConfigError("partial grid features must differ")
    va = _axis(model, a, grid.n_a, grid.values_a)
    vb = _axis(model, b, grid.n_b, grid.values_b)
    points = np.tile(model.column_means, (va.size * vb.size, 1))
    aa, bb = np.meshgrid(va, vb, indexing="ij")
    points[:, a] = aa.ravel()
    points[:, b] = bb.ravel()
    preds = model.predict(points).reshape(va.size, vb.size)
    return PartialGrid(a, b, va, vb, preds, (model.feature_names[a], model.feature_names[b]))


def _feature_index(model: ForestModel, feature) -> int:
    if isinstance(feature, str):
        if feature not in model.feature_names:
            raise ConfigError(f"unknown feature {feature!r}; valid: {', '.join(model.feature_names)}")
        return model.feature_names.index(feature)
    j = int(feature)
    if not 0 <= j < model.n_features:
        raise ConfigError(f"feature index {j} outside 0..{model.n_features - 1}")
    return j


# ---------------------------------------------------------------------------
# Serialisation and CSV export


def forest_to_dict(model: ForestModel, include_bags: bool = False) -> dict:
    doc = {
        "format": FOREST_FORMAT,
        "params": asdict(model.params),
        "features_per_split": model.features_per_split,
        "feature_names": list(model.feature_names),
        "target": model.target,
        "column_means": model.column_means.tolist(),
        "column_min": model.column_min.tolist(),
        "column_max": model.column_max.tolist(),
        "dates": [str(d) for d in model.dates],
        "trees": [tree.to_dict() for tree in model.trees],
    }
    if include_bags:
        doc["in_bag"] = [np.flatnonzero(row).tolist() for row in model.in_bag]
    return doc


def forest_from_dict(doc: dict) -> ForestModel:
    if doc.get("format") != FOREST_FORMAT:
        raise DataError(f"unsupported forest format {doc.get('format')!r}")
    trees = [RegressionTree.from_dict(t) for t in doc["trees"]]
    dates = np.array(doc["dates"], dtype="datetime64[D]")
    in_bag = np.zeros((len(trees), len(dates)), dtype=bool)
    for k, rows in enumerate(doc.get("in_bag", [])):
        in_bag[k, rows] = True
    return ForestModel(
        trees=trees,
        in_bag=in_bag,
        params=ForestParams(**doc["params"]),
        features_per_split=int(doc["features_per_split"]),
        column_means=np.array(doc["column_means"]),
        column_min=np.array(doc["column_min"]),
        column_max=np.array(doc["column_max"]),
        dates=dates,
        feature_names=tuple(doc["feature_names"]),
        target=doc.get("target", "base"),
    )


def save_forest(model: ForestModel, path: str | Path, include_bags: bool = False) -> None:
    Path(path).write_text(json.dumps(forest_to_dict(model, include_bags)), encoding="utf-8")


def load_forest(path: str | Path) -> ForestModel:
    return forest_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_importance_csv(rows: Sequence[tuple[str, str, ImportanceTable]], path, header_lines=()) -> None:
    """One ``label,target,<features...>`` row per table, columns in design order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        names = rows[0][2].feature_names if rows else ()
        writer.writerow(["sample", "target", *names])
        for label, target, table in rows:
            writer.writerow([label, target, *(repr(float(v)) for v in table.values)])


def write_partial_grid_csv(grid: PartialGrid, path, header_lines=()) -> None:
    """Long format: one ``a,b,prediction`` row per grid point."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([grid.names[0], grid.names[1], "prediction"])
        for i, a in enumerate(grid.values_a):
            for j, b in enumerate(grid.values_b):
                writer.writerow([repr(float(a)), repr(float(b)), repr(float(grid.predictions[i, j]))])
