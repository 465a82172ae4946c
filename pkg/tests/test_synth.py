import numpy as np
import pandas as pd
import pytest

from epexforest import baselines, forest, pipeline, synth
from epexforest.errors import ConfigError
from epexforest.pipeline import PREDICTORS

ZERO_COEFS = {name: 0.0 for name in PREDICTORS}


def quiet(**changes):
    base = synth.with_overrides(
        synth.ScenarioSpec(), horizon=300, volatility=0.0, jump_intensity=0.0, peak_volatility=0.0
    )
    return synth.with_overrides(base, **changes)


def test_all_variables_present_and_positive():
    panel = synth.generate(synth.ScenarioSpec(horizon=400, seed=3))
    assert panel.variables == pipeline.SOURCE_VARIABLES
    assert len(panel) == 400
    for name in ("base", "peak", "permit", "oil", "coal", "natgas", "eurusd", "vix"):
        assert (panel.column(name) > 0).all()
    cpi = panel.column("cpi")
    assert np.isfinite(cpi).sum() == pd.Index(panel.dates.to_period("M")).nunique()


def test_deterministic_per_seed():
    a = synth.generate(synth.ScenarioSpec(horizon=300, seed=5))
    b = synth.generate(synth.ScenarioSpec(horizon=300, seed=5))
    c = synth.generate(synth.ScenarioSpec(horizon=300, seed=6))
    pd.testing.assert_frame_equal(a.frame, b.frame)
    assert not np.array_equal(a.column("base"), c.column("base"))


def test_fixed_point_at_long_run_level():
    spec = quiet(coefficients=ZERO_COEFS, interaction=0.0, long_run=43.0)
    base = synth.generate(spec).column("base")
    np.testing.assert_allclose(base, 43.0, rtol=1e-12)


def test_one_step_reversion_leaves_only_planted_terms():
    # kappa = 1 with no noise: each 22-day change is exactly the planted surface
    spec = quiet(kappa=1.0)
    design = pipeline.build_design(pipeline.prepare_panel(synth.generate(spec)), min_rows=0)
    np.testing.assert_allclose(design.y, synth.ground_truth_matrix(spec, design.X), atol=1e-10)


def test_one_step_reversion_noise_is_white():
    # with kappa = 1 the price noise is iid, so the change residual is e[t] - e[t-22]
    spec = synth.with_overrides(synth.ScenarioSpec(), kappa=1.0, jump_intensity=0.0, volatility=0.05, seed=2)
    design = pipeline.build_design(pipeline.prepare_panel(synth.generate(spec)))
    resid = design.y - synth.ground_truth_matrix(spec, design.X)
    assert resid.std() == pytest.approx(np.sqrt(2) * 0.05, rel=0.1)


def test_ols_recovers_planted_natgas():
    spec = synth.with_overrides(synth.ScenarioSpec(seed=0), coefficients={"natgas": 0.5})
    design = pipeline.build_design(pipeline.prepare_panel(synth.generate(spec)))
    assert design.n_rows > 2500
    fit = baselines.ols_on_design(design)
    assert fit.coefficient("natgas") == pytest.approx(0.5, abs=0.1)


def test_panel_round_trips_through_ingest(tmp_path):
    panel = synth.generate(synth.ScenarioSpec(horizon=250))
    path = tmp_path / "s.csv"
    panel.to_csv(path)
    back = pipeline.ingest_csv(path)
    pd.testing.assert_frame_equal(back.frame, panel.frame, check_freq=False)


# ---------------------------------------------------------------- ground truth


def test_ground_truth_zero_point():
    assert synth.ground_truth(synth.ScenarioSpec(), np.zeros(12)) == 0.0


def test_ground_truth_interaction_product():
    spec = synth.ScenarioSpec(coefficients=ZERO_COEFS, interaction=1.0)
    point = np.zeros(12)
    point[PREDICTORS.index("permit")] = 0.1
    point[PREDICTORS.index("natgas")] = 0.2
    assert synth.ground_truth(spec, point) == pytest.approx(0.02, abs=1e-15)


def test_ground_truth_closed_form():
    spec = synth.with_overrides(synth.ScenarioSpec(), intercept=0.01, interaction=1.7)
    rng = np.random.default_rng(0)
    points = rng.normal(size=(50, 12))
    c = spec.coefficients
    for x in points:
        d = dict(zip(PREDICTORS, x))
        by_hand = 0.01 + sum(c[k] * d[k] for k in c) + 1.7 * d["permit"] * d["natgas"]
        assert synth.ground_truth(spec, x) == pytest.approx(by_hand, abs=1e-12)
    np.testing.assert_allclose(
        synth.ground_truth_matrix(spec, points), [synth.ground_truth(spec, x) for x in points], atol=1e-14
    )


def test_ground_truth_wrong_length():
    with pytest.raises(ConfigError):
        synth.ground_truth(synth.ScenarioSpec(), np.zeros(5))


# ---------------------------------------------------------------- spec validation / file


@pytest.mark.parametrize(
    "field,value",
    [("kappa", 0.0), ("kappa", 1.5), ("horizon", 100), ("volatility", -0.1), ("jump_std", -1.0), ("long_run", 0.0)],
)
def test_invalid_field_named(field, value):
    with pytest.raises(ConfigError, match=field):
        synth.ScenarioSpec(**{field: value})


def test_invalid_coefficients_and_drivers():
    with pytest.raises(ConfigError, match="coefficients"):
        synth.ScenarioSpec(coefficients={"gold": 1.0})
    with pytest.raises(ConfigError, match="oil"):
        synth.ScenarioSpec(drivers={"oil": (100.0, 0.0, -1.0)})


def test_scenario_file(tmp_path):
    path = tmp_path / "s.txt"
    path.write_text("# test scenario\nhorizon = 500\nkappa = 0.5\nseed = 7\ncoef.natgas = 0.4\noil.vol = 0.01\n")
    spec = synth.ScenarioSpec.from_file(path)
    assert (spec.horizon, spec.kappa, spec.seed) == (500, 0.5, 7)
    assert spec.coefficients["natgas"] == 0.4 and spec.coefficients["permit"] == 0.3
    assert spec.driver("oil")[2] == 0.01


@pytest.mark.parametrize("text", ["colour = red\n", "kappa = fast\n", "oil.mean = 3\n", "kappa = 2\n"])
def test_scenario_file_errors(tmp_path, text):
    path = tmp_path / "s.txt"
    path.write_text(text)
    with pytest.raises(ConfigError):
        synth.ScenarioSpec.from_file(path)


# ---------------------------------------------------------------- forest behaviour on the default scenario


def test_pure_noise_drivers_have_low_importance(scenario_forest):
    imp = forest.importance(scenario_forest).as_dict()
    for name in ("i", "vix", "cpi", "suntime", "temp", "day_week"):
        assert synth.ScenarioSpec().coefficients[name] == 0.0
        assert imp[name] < 1.5 / 12, name
