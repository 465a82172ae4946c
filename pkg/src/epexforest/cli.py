"""Batch command-line front end.

Every output file starts with ``#`` comment lines carrying the tool version and
a hash of the run configuration; the data rows below are plain CSV.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from ._config import parse_list, read_pairs
from .baselines import ar1_on_design, compare, ols_on_design, write_fit_summary
from .errors import ConfigError, DataError, EpexForestError, NumericalError
from .forest import (
    ForestParams,
    GridSpec,
    error_curve,
    fit_forest,
    importance,
    partial_grid,
    rmse,
    write_importance_csv,
    write_partial_grid_csv,
)
from .pipeline import (
    DEFAULT_FEATURE_SPEC,
    PREDICTORS,
    TARGETS,
    DailyPanel,
    FeatureSpec,
    build_design,
    fill_gaps,
    ingest_csv,
    prepare_panel,
)
from .synth import ScenarioSpec, generate

log = logging.getLogger("epexforest")

CURVE_CHECKPOINTS = (1, 5, 10, 25, 50, 100, 250, 500, 1000)
BUILTIN_SCENARIO = "builtin"


@dataclass(frozen=True)
class DateRange:
    label: str
    start: str | None = None
    end: str | None = None


@dataclass(frozen=True)
class RunConfig:
    input: str | None = None
    scenario: str | None = None
    targets: tuple[str, ...] = TARGETS
    date_from: str | None = None
    date_to: str | None = None
    min_nodes: tuple[int, ...] = (5, 10, 20, 30, 40)
    trees: tuple[int, ...] = (100, 1000)
    mtry: int | None = None
    seed: int = 0
    out: str = "out"
    workers: int = 1
    ranges: tuple[DateRange, ...] = ()
    features: tuple[str, str] = ("permit", "natgas")
    grid: tuple[int, int] = (25, 25)
    feature_spec: str | None = None
    min_rows: int = 100

    def __post_init__(self):
        if self.input and self.scenario:
            raise ConfigError("give either --input or --scenario, not both")
        for t in self.targets:
            if t not in TARGETS:
                raise ConfigError(f"target must be one of {TARGETS}, got {t!r}")
        if not self.targets or not self.min_nodes or not self.trees:
            raise ConfigError("target, min-node and trees lists must be non-empty")
        if self.date_from and self.date_to and not np.datetime64(self.date_from) < np.datetime64(self.date_to):
            raise ConfigError(f"--from {self.date_from} must precede --to {self.date_to}")
        if min(self.trees) < 1 or min(self.min_nodes) < 2:
            raise ConfigError("trees must be >= 1 and min-node >= 2")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.features[0] == self.features[1]:
            raise ConfigError("pdp features must differ")
        for name in self.features:
            if name not in PREDICTORS:
                raise ConfigError(f"unknown feature {name!r}; valid: {', '.join(PREDICTORS)}")

    def fingerprint(self) -> str:
        """Hash of everything that can change results (not ``out`` or ``workers``)."""
        doc = dataclasses.asdict(self)
        doc.pop("out")
        doc.pop("workers")
        blob = json.dumps(doc, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def header(self, command: str) -> list[str]:
        return [f"epexforest {__version__} command={command} config={self.fingerprint()}"]


# ---------------------------------------------------------------------------
# Data loading


def load_panel(config: RunConfig) -> DailyPanel:
    if config.input:
        return ingest_csv(config.input)
    if config.scenario:
        spec = ScenarioSpec() if config.scenario == BUILTIN_SCENARIO else ScenarioSpec.from_file(config.scenario)
        return generate(spec)
    raise ConfigError("no data source: pass --input CSV or --scenario FILE|builtin")


def _feature_spec(config: RunConfig) -> FeatureSpec:
    return FeatureSpec.from_file(config.feature_spec) if config.feature_spec else DEFAULT_FEATURE_SPEC


def load_designs(config: RunConfig, start=None, end=None, panel: DailyPanel | None = None):
    """Full-history design per target, then restricted to ``[start, end]``.

    Features are computed on the whole panel before the date filter, so the
    22-day lags of the first kept rows reach back before ``start``.
    """
    spec = _feature_spec(config)
    prepared = prepare_panel(panel if panel is not None else load_panel(config), spec)
    start = start if start is not None else config.date_from
    end = end if end is not None else config.date_to
    designs = {}
    for target in config.targets:
        design = build_design(prepared, spec, target, min_rows=0)
        designs[target] = design.restrict(start, end, min_rows=config.min_rows)
    return designs


def _forest_params(config: RunConfig, n_trees: int, min_node: int) -> ForestParams:
    return ForestParams(n_trees=n_trees, min_node_size=min_node, features_per_split=config.mtry, seed=config.seed)


def _writer(path: Path, header: Sequence[str]):
    fh = open(path, "w", newline="", encoding="utf-8")
    for line in header:
        fh.write(f"# {line}\n")
    return fh, csv.writer(fh, lineterminator="\n")


# ---------------------------------------------------------------------------
# Commands


def cmd_ingest(config: RunConfig) -> list[Path]:
    """Gap-filled panel in input units, readable again by ``--input``."""
    out = Path(config.out) / "panel.csv"
    filled = fill_gaps(load_panel(config), linear=_feature_spec(config).interpolated_variables)
    filled.to_csv(out, config.header("ingest"))
    return [out]


def cmd_synth(config: RunConfig) -> list[Path]:
    if config.input:
        raise ConfigError("synth takes --scenario, not --input")
    config = dataclasses.replace(config, scenario=config.scenario or BUILTIN_SCENARIO)
    out = Path(config.out) / "synthetic_panel.csv"
    load_panel(config).to_csv(out, config.header("synth"))
    return [out]


def cmd_features(config: RunConfig) -> list[Path]:
    paths = []
    for target, design in load_designs(config).items():
        path = Path(config.out) / f"design_{target}.csv"
        design.to_csv(path, config.header("features"))
        paths.append(path)
    return paths


def cmd_baselines(config: RunConfig) -> list[Path]:
    paths = []
    for target, design in load_designs(config).items():
        path = Path(config.out) / f"baselines_{target}.csv"
        write_fit_summary({"ar1": ar1_on_design(design), "ols": ols_on_design(design)}, path, config.header("baselines"))
        paths.append(path)
    return paths


def table1_rows(config: RunConfig, design) -> tuple[float, float, list[dict]]:
    """AR(1) and OLS in-sample RMSE plus one forest row per (min-node, trees) cell.

    For each min-node size a single forest with the largest tree count is
    fitted; smaller tree counts are its leading sub-forests, which are exactly
    the forests those counts would produce.
    """
    ar1 = ar1_on_design(design).rmse
    ols = ols_on_design(design).rmse
    rows = []
    trees = sorted(set(config.trees))
    for min_node in config.min_nodes:
        model = fit_forest(design, _forest_params(config, trees[-1], min_node), n_jobs=config.workers)
        preds = model.tree_predictions(design.X)
        out_bag = ~model.in_bag
        for k in trees:
            in_sample = rmse(preds[:k].mean(axis=0), design.y)
            counts = out_bag[:k].sum(axis=0)
            ok = counts > 0
            oob = np.full(design.n_rows, np.nan)
            oob[ok] = np.where(out_bag[:k], preds[:k], 0.0).sum(axis=0)[ok] / counts[ok]
            oob_rmse = rmse(oob, design.y, ok)
            ratio = compare({"forest": in_sample}, ols)[0].ratio
            rows.append(dict(min_node=min_node, trees=k, in_sample=in_sample, oob=oob_rmse, ratio=ratio))
    return ar1, ols, rows


def cmd_table1(config: RunConfig) -> list[Path]:
    designs = load_designs(config)
    results = {target: table1_rows(config, design) for target, design in designs.items()}
    path = Path(config.out) / "table1.csv"
    header = config.header("table1")
    for target, (ar1, ols, _) in results.items():
        header.append(f"{target}: n={designs[target].n_rows} ar1_rmse={ar1:.6f} ols_rmse={ols:.6f}")
    fh, writer = _writer(path, header)
    with fh:
        writer.writerow(["target", "min_node", "trees", "forest_in_sample", "forest_oob", "ratio_to_ols"])
        for target, (_, _, rows) in results.items():
            for r in rows:
                writer.writerow([target, r["min_node"], r["trees"], f"{r['in_sample']:.6f}",
                                 f"{r['oob']:.6f}", f"{r['ratio']:.6f}"])
    return [path]


def cmd_importance(config: RunConfig) -> list[Path]:
    ranges = config.ranges or (DateRange("full", config.date_from, config.date_to),)
    panel = load_panel(config)
    n_trees = max(config.trees)
    min_node = 10 if 10 in config.min_nodes else config.min_nodes[0]
    rows = []
    for rng in ranges:
        designs = load_designs(config, rng.start, rng.end, panel=panel)
        for target, design in designs.items():
            model = fit_forest(design, _forest_params(config, n_trees, min_node), n_jobs=config.workers)
            rows.append((rng.label, target, importance(model)))
    path = Path(config.out) / "importance.csv"
    write_importance_csv(rows, path, config.header("importance") + [f"trees={n_trees} min_node={min_node}"])
    return [path]


def cmd_pdp(config: RunConfig) -> list[Path]:
    n_trees = max(config.trees)
    min_node = 10 if 10 in config.min_nodes else config.min_nodes[0]
    paths = []
    for target, design in load_designs(config).items():
        model = fit_forest(design, _forest_params(config, n_trees, min_node), n_jobs=config.workers)
        grid = partial_grid(model, *config.features, GridSpec(*config.grid))
        path = Path(config.out) / f"pdp_{target}_{config.features[0]}_{config.features[1]}.csv"
        write_partial_grid_csv(grid, path, config.header("pdp"))
        paths.append(path)
    return paths


def cmd_curve(config: RunConfig) -> list[Path]:
    n_trees = max(config.trees)
    min_node = 10 if 10 in config.min_nodes else config.min_nodes[0]
    checkpoints = [k for k in CURVE_CHECKPOINTS if k <= n_trees]
    paths = []
    for target, design in load_designs(config).items():
        model = fit_forest(design, _forest_params(config, n_trees, min_node), n_jobs=config.workers)
        path = Path(config.out) / f"curve_{target}.csv"
        fh, writer = _writer(path, config.header("curve"))
        with fh:
            writer.writerow(["trees", "oob_mse"])
            for k, mse in error_curve(model, design, checkpoints):
                writer.writerow([k, f"{mse:.8f}"])
        paths.append(path)
    return paths


COMMANDS = {
    "ingest": cmd_ingest,
    "features": cmd_features,
    "table1": cmd_table1,
    "importance": cmd_importance,
    "pdp": cmd_pdp,
    "curve": cmd_curve,
    "synth": cmd_synth,
    "baselines": cmd_baselines,
}


# ---------------------------------------------------------------------------
# Argument handling


def _parse_range(text: str) -> DateRange:
    """``label=FROM..TO`` with either bound optional, e.g. ``since2021=2021-01-01..``."""
    label, sep, span = text.partition("=")
    if not sep or ".." not in span:
        raise ConfigError(f"bad range {text!r}; expected LABEL=FROM..TO")
    start, end = (part.strip() or None for part in span.split("..", 1))
    for day in (start, end):
        if day is not None:
            try:
                np.datetime64(day, "D")
            except ValueError:
                raise ConfigError(f"bad date {day!r} in range {text!r}") from None
    return DateRange(label.strip(), start, end)


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise ConfigError(f"bad grid {text!r}; expected e.g. 25x25") from None


_SETTERS = {
    "input": ("input", str),
    "scenario": ("scenario", str),
    "target": ("targets", lambda v: tuple(parse_list(v))),
    "from": ("date_from", str),
    "to": ("date_to", str),
    "trees": ("trees", lambda v: tuple(parse_list(v, int))),
    "min_node": ("min_nodes", lambda v: tuple(parse_list(v, int))),
    "mtry": ("mtry", int),
    "seed": ("seed", int),
    "out": ("out", str),
    "workers": ("workers", int),
    "ranges": ("ranges", lambda v: tuple(_parse_range(r) for r in parse_list(v))),
    "features": ("features", lambda v: tuple(parse_list(v))),
    "grid": ("grid", _parse_grid),
    "feature_spec": ("feature_spec", str),
    "min_rows": ("min_rows", int),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epexforest", description="Electricity-price driver analysis with regression forests")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value file; its settings override flags")
        p.add_argument("--input", help="daily CSV with a date column")
        p.add_argument("--scenario", help=f"synthetic scenario file, or '{BUILTIN_SCENARIO}'")
        p.add_argument("--target", choices=TARGETS, help="restrict to one price series (default: both)")
        p.add_argument("--from", dest="from_", metavar="DATE", help="first date kept (inclusive)")
        p.add_argument("--to", metavar="DATE", help="last date kept (inclusive)")
        p.add_argument("--trees", help="tree count(s), comma separated")
        p.add_argument("--min-node", help="min observations per splitting node, comma separated")
        p.add_argument("--mtry", type=int, help="features tried per split (default p/3)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="threads used to grow trees")
        p.add_argument("--feature-spec", help="feature transform file")
        p.add_argument("--min-rows", type=int, help="smallest acceptable sample")
        if name == "importance":
            p.add_argument("--range", action="append", dest="ranges", help="LABEL=FROM..TO, repeatable")
        if name == "pdp":
            p.add_argument("--features", help="two predictor names, e.g. permit,natgas")
            p.add_argument("--grid", help="axis resolution, e.g. 25x25")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    flag_values = {
        "input": args.input, "scenario": args.scenario, "target": args.target,
        "from": args.from_, "to": args.to, "trees": args.trees, "min_node": args.min_node,
        "mtry": args.mtry, "seed": args.seed, "out": args.out, "workers": args.workers,
        "feature_spec": args.feature_spec, "min_rows": args.min_rows,
        "features": getattr(args, "features", None), "grid": getattr(args, "grid", None),
    }
    for key, raw in flag_values.items():
        if raw is not None:
            attr, cast = _SETTERS[key]
            values[attr] = cast(str(raw))
    if getattr(args, "ranges", None):
        values["ranges"] = tuple(_parse_range(r) for r in args.ranges)
    if args.config:
        for key, raw, lineno in read_pairs(args.config):
            key = key.replace("-", "_")
            if key not in _SETTERS:
                raise ConfigError(f"{args.config}:{lineno}: unknown setting {key!r}")
            attr, cast = _SETTERS[key]
            try:
                values[attr] = cast(raw)
            except ValueError as exc:
                raise ConfigError(f"{args.config}:{lineno}: {exc}") from None
    return RunConfig(**values)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
        Path(config.out).mkdir(parents=True, exist_ok=True)
        for path in COMMANDS[args.command](config):
            print(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    except EpexForestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
