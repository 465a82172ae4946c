import csv
import re

import numpy as np
import pytest

from epexforest import __version__, cli, pipeline
from epexforest.errors import ConfigError

from conftest import random_panel

SCENARIO_TEXT = "horizon = 400\nseed = 3\n"


@pytest.fixture(scope="module")
def scenario_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("scen") / "scenario.txt"
    path.write_text(SCENARIO_TEXT)
    return str(path)


def run(tmp_path, *argv, sub="out"):
    out = tmp_path / sub
    code = cli.main([*argv, "--out", str(out)])
    return code, out


def read_rows(path):
    lines = [line for line in path.read_text().splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


def header_lines(path):
    return [line for line in path.read_text().splitlines() if line.startswith("#")]


# ---------------------------------------------------------------- data commands


def test_synth_then_ingest_round_trip(tmp_path, scenario_file):
    code, out = run(tmp_path, "synth", "--scenario", scenario_file)
    assert code == 0
    panel_path = out / "synthetic_panel.csv"
    first = header_lines(panel_path)[0]
    assert re.fullmatch(rf"# epexforest {__version__} command=synth config=[0-9a-f]{{16}}", first)
    code, out2 = run(tmp_path, "ingest", "--input", str(panel_path), sub="out2")
    assert code == 0
    a = pipeline.ingest_csv(panel_path)
    b = pipeline.ingest_csv(out2 / "panel.csv")
    assert len(b) == len(a) == 400
    # only CPI had gaps; everything else passes through untouched
    np.testing.assert_array_equal(a.column("base"), b.column("base"))
    assert np.isfinite(b.column("cpi")).all()


def test_features_and_baselines(tmp_path, scenario_file):
    code, out = run(tmp_path, "features", "--scenario", scenario_file)
    assert code == 0
    rows = read_rows(out / "design_base.csv")
    assert len(rows) == 400 - 44
    assert list(rows[0])[:3] == ["date", "y", "permit"]
    assert (out / "design_peak.csv").exists()
    code, out = run(tmp_path, "baselines", "--scenario", scenario_file, "--target", "peak", sub="b")
    assert code == 0
    assert not (out / "baselines_base.csv").exists()
    names = [r["name"] for r in read_rows(out / "baselines_peak.csv")]
    assert "reversal" in names and "rmse_in_sample" in names


def test_date_filter_keeps_reversal_lag(tmp_path, scenario_file):
    _, full = run(tmp_path, "features", "--scenario", scenario_file, "--target", "base", sub="full")
    _, cut = run(tmp_path, "features", "--scenario", scenario_file, "--target", "base",
                 "--from", "2012-09-03", "--min-rows", "10", sub="cut")
    full_rows = {r["date"]: r for r in read_rows(full / "design_base.csv")}
    cut_rows = read_rows(cut / "design_base.csv")
    assert cut_rows[0]["date"] == "2012-09-03"
    for r in cut_rows[:5]:
        assert r == full_rows[r["date"]]


# ---------------------------------------------------------------- table1


def test_table1_default_grid(tmp_path, scenario_file):
    code, out = run(tmp_path, "table1", "--scenario", scenario_file, "--target", "base")
    assert code == 0
    path = out / "table1.csv"
    rows = read_rows(path)
    assert len(rows) == 10
    assert {(int(r["min_node"]), int(r["trees"])) for r in rows} == {
        (m, t) for m in (5, 10, 20, 30, 40) for t in (100, 1000)
    }
    assert all(float(r["ratio_to_ols"]) < 1 for r in rows)
    assert any("ols_rmse=" in line and "ar1_rmse=" in line for line in header_lines(path))


def test_table1_single_cell(tmp_path, scenario_file):
    code, out = run(tmp_path, "table1", "--scenario", scenario_file, "--trees", "20", "--min-node", "10")
    assert code == 0
    rows = read_rows(out / "table1.csv")
    assert [(r["target"], r["min_node"], r["trees"]) for r in rows] == [("base", "10", "20"), ("peak", "10", "20")]
    one = [r for r in rows if r["target"] == "base"]
    assert len(one) == 1


def test_table1_reproducible(tmp_path, scenario_file):
    args = ("table1", "--scenario", scenario_file, "--trees", "5,15", "--min-node", "10,20")
    _, a = run(tmp_path, *args, sub="a")
    _, b = run(tmp_path, *args, sub="b")
    assert (a / "table1.csv").read_bytes() == (b / "table1.csv").read_bytes()


def test_table1_insufficient_rows(tmp_path, scenario_file, capsys):
    code, _ = run(tmp_path, "table1", "--scenario", scenario_file, "--from", "2013-06-01", "--trees", "5")
    assert code == 3
    assert "rows" in capsys.readouterr().err


# ---------------------------------------------------------------- importance / pdp / curve


def test_importance_ranges(tmp_path, scenario_file):
    code, out = run(tmp_path, "importance", "--scenario", scenario_file, "--trees", "100",
                    "--range", "full=..", "--range", "since2012h2=2012-07-02..", "--range", "since2013=2013-01-01..")
    assert code == 0
    rows = read_rows(out / "importance.csv")
    assert [(r["sample"], r["target"]) for r in rows] == [
        ("full", "base"), ("full", "peak"), ("since2012h2", "base"), ("since2012h2", "peak"),
        ("since2013", "base"), ("since2013", "peak"),
    ]
    for r in rows:
        values = {k: float(v) for k, v in r.items() if k not in ("sample", "target")}
        assert list(values) == list(pipeline.PREDICTORS)
        assert abs(sum(values.values()) - 1) <= 1e-12
        assert min(values.values()) >= 0
    full = {k: float(v) for k, v in rows[0].items() if k not in ("sample", "target")}
    assert max(full, key=full.get) == "reversal"


def test_importance_short_range(tmp_path, scenario_file):
    code, _ = run(tmp_path, "importance", "--scenario", scenario_file, "--trees", "5",
                  "--range", "tiny=2013-05-01..")
    assert code == 3


def test_pdp_grid(tmp_path, scenario_file):
    code, out = run(tmp_path, "pdp", "--scenario", scenario_file, "--target", "base", "--trees", "30", "--grid", "4x6")
    assert code == 0
    path = out / "pdp_base_permit_natgas.csv"
    rows = read_rows(path)
    assert len(rows) == 24
    assert list(rows[0]) == ["permit", "natgas", "prediction"]


def test_pdp_single_point(tmp_path, scenario_file):
    code, out = run(tmp_path, "pdp", "--scenario", scenario_file, "--target", "base",
                    "--trees", "10", "--grid", "1x1", "--features", "vix,oil")
    assert code == 0
    assert len(read_rows(out / "pdp_base_vix_oil.csv")) == 1


def test_pdp_unknown_feature(tmp_path, scenario_file, capsys):
    code, _ = run(tmp_path, "pdp", "--scenario", scenario_file, "--features", "gold,natgas")
    assert code == 2
    err = capsys.readouterr().err
    assert "gold" in err and "natgas" in err and "reversal" in err


def test_curve_thousand_trees(tmp_path, scenario_file):
    code, out = run(tmp_path, "curve", "--scenario", scenario_file, "--target", "base", "--trees", "1000")
    assert code == 0
    rows = read_rows(out / "curve_base.csv")
    assert [int(r["trees"]) for r in rows] == [1, 5, 10, 25, 50, 100, 250, 500, 1000]
    first, last = float(rows[0]["oob_mse"]), float(rows[-1]["oob_mse"])
    assert first >= 0.95 * last

    from epexforest import forest

    config = cli.RunConfig(scenario=scenario_file, targets=("base",), trees=(1000,))
    design = cli.load_designs(config)["base"]
    model = forest.fit_forest(design, forest.ForestParams(n_trees=1000, min_node_size=10, seed=0))
    pred, avail = forest.oob_predict(model, design)
    assert last == pytest.approx(forest.rmse(pred, design.y, avail) ** 2, abs=1e-8)


def test_curve_small_forest(tmp_path, scenario_file):
    code, out = run(tmp_path, "curve", "--scenario", scenario_file, "--target", "peak", "--trees", "30")
    assert code == 0
    assert [int(r["trees"]) for r in read_rows(out / "curve_peak.csv")] == [1, 5, 10, 25]


# ---------------------------------------------------------------- config handling and exit codes


def test_config_file_overrides_flags(tmp_path, scenario_file):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# run settings\ntrees = 7\nmin-node = 20\ntarget = peak\n")
    code, out = run(tmp_path, "table1", "--scenario", scenario_file, "--config", str(cfg),
                    "--trees", "3", "--min-node", "5", "--target", "base")
    assert code == 0
    rows = read_rows(out / "table1.csv")
    assert [(r["target"], r["min_node"], r["trees"]) for r in rows] == [("peak", "20", "7")]


def test_bad_config_key(tmp_path, scenario_file):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour = blue\n")
    code, _ = run(tmp_path, "table1", "--scenario", scenario_file, "--config", str(cfg))
    assert code == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["table1", "--scenario", "builtin", "--from", "2015-01-01", "--to", "2014-01-01"],
        ["table1", "--scenario", "builtin", "--trees", ""],
        ["table1"],
        ["importance", "--scenario", "builtin", "--range", "bad"],
    ],
)
def test_config_errors_exit_2(tmp_path, argv):
    assert run(tmp_path, *argv)[0] == 2


def test_missing_input_exit_3(tmp_path):
    assert run(tmp_path, "features", "--input", str(tmp_path / "none.csv"))[0] == 3


def test_collinear_design_exit_4(tmp_path, capsys):
    panel = random_panel(300, seed=1)
    frame = panel.frame.copy()
    frame["vix"] = 20.0  # its 22-day change is identically zero
    path = tmp_path / "flat.csv"
    pipeline.DailyPanel(frame).to_csv(path)
    code, _ = run(tmp_path, "baselines", "--input", str(path))
    assert code == 4
    assert "vix" in capsys.readouterr().err


def test_run_config_validation():
    with pytest.raises(ConfigError):
        cli.RunConfig(min_nodes=())
    with pytest.raises(ConfigError):
        cli.RunConfig(input="a.csv", scenario="builtin")
    with pytest.raises(ConfigError):
        cli.RunConfig(targets=("offpeak",))
    assert cli.RunConfig(out="x", workers=1).fingerprint() == cli.RunConfig(out="y", workers=4).fingerprint()
    assert cli.RunConfig(seed=1).fingerprint() != cli.RunConfig(seed=2).fingerprint()
