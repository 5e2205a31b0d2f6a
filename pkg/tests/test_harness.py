import time

import numpy as np
import pytest

from volaforge.errors import ConfigError
from volaforge.features import ROSTER, AssetData, TargetSpec, build_features
from volaforge.harness import (WINDOW_POLICY, HarnessConfig, TrainStats, TuningGrid,
                               _argmin_strongest, forecast_cell, run_forecasts,
                               sanitize_forecast, tune)
from volaforge.realized import RealizedSeries
from volaforge.simulate import HarGenConfig, generate_har_series, trading_dates
from volaforge.timeseries import DataSplit, DailySeries, make_split

FAST = HarnessConfig(grid=TuningGrid(n_lambda=20, n_alpha=3, gb_trees=(20, 40)),
                     forest_trees=10, nn_seeds=3, nn_select=2, nn_epochs=10, nn_patience=5)


def realized_asset(rv, asset_id="A", seed=0):
    r = np.random.default_rng(seed)
    rv = np.asarray(rv, dtype=float)
    share = r.uniform(0.3, 0.7, rv.size)
    rs = RealizedSeries(asset_id, trading_dates(rv.size), rv, rv * share, rv - rv * share,
                        3 * rv ** 2, r.normal(scale=np.sqrt(rv)))
    return AssetData(asset_id, rs, {})


def har_asset(days, seed=0, asset_id="HAR"):
    return AssetData.from_rv(generate_har_series(HarGenConfig(days=days, seed=seed), asset_id))


def test_policies_cover_the_roster():
    assert set(WINDOW_POLICY) == set(ROSTER)
    assert WINDOW_POLICY["HAR"] == WINDOW_POLICY["RF"] == WINDOW_POLICY["BG"] == "rolling-merged"
    assert WINDOW_POLICY["EN"] == WINDOW_POLICY["GB"] == "rolling-tuned"
    assert WINDOW_POLICY["NN3^10"] == "fixed"


def test_sanitize_examples():
    stats = TrainStats(min=0.02, max=1.0, mean=0.4)
    assert sanitize_forecast("HAR", -0.3, stats) == 0.02
    assert sanitize_forecast("RF", np.nan, stats) == 0.02
    assert sanitize_forecast("HAR", 0.5, stats) == 0.5
    assert sanitize_forecast("HAR", 3.0, stats) == 3.0
    assert sanitize_forecast("HARQ", 3.0, stats) == 0.4
    assert sanitize_forecast("HARQ", 0.01, stats) == 0.4
    assert sanitize_forecast("HARQ", 0.5, stats) == 0.5


def test_tie_break_prefers_strongest():
    assert _argmin_strongest([1.0, 0.5, 0.5, 0.7], [1, 2, 3, 4]) == 2
    assert _argmin_strongest([0.5, 0.5], [(-50, -1), (-100, -1)]) == 0


def noise_problem(seed, noiseless=False):
    r = np.random.default_rng(seed)
    X, Xv = r.normal(size=(200, 5)), r.normal(size=(60, 5))
    if noiseless:
        b = r.normal(size=5)
        return X, X @ b + 1.0, Xv, Xv @ b + 1.0
    return X, r.normal(size=200), Xv, r.normal(size=60)


@pytest.mark.parametrize("model", ["RR", "LA"])
def test_noise_target_picks_heavy_penalty(model):
    grid = TuningGrid()
    upper = np.median(np.log(grid.lambdas))
    hits = sum(np.log(tune(model, *noise_problem(s), grid=grid).hyperparameters["lam"]) >= upper
               for s in range(20))
    assert hits >= 14


@pytest.mark.parametrize("model", ["RR", "LA", "EN"])
def test_noiseless_target_picks_light_penalty(model):
    grid = TuningGrid(n_lambda=200)
    decile = grid.lambdas[len(grid.lambdas) // 10 - 1]
    for s in range(5):
        assert tune(model, *noise_problem(s, True), grid=grid).hyperparameters["lam"] <= decile


def test_one_cell_grid():
    grid = TuningGrid(n_lambda=1, n_alpha=1, gb_depths=(2,), gb_trees=(30,), gb_rates=(0.1,))
    prob = noise_problem(1)
    assert tune("EN", *prob, grid=grid).hyperparameters == {"lam": 1e-5, "alpha": 0.0}
    assert tune("GB", *prob, grid=grid).hyperparameters == {"trees": 30, "depth": 2,
                                                            "learning_rate": 0.1}
    with pytest.raises(ConfigError):
        tune("LA", *prob, grid=TuningGrid(n_lambda=0))
    X, y, Xv, yv = prob
    with pytest.raises(ConfigError):
        tune("LA", X, y, Xv[:20], yv[:20])


def test_constant_series_every_model():
    asset = realized_asset(np.full(400, 2e-4))
    table, cells = run_forecasts([asset], ROSTER, cfg=FAST)
    assert all(c.error is None for c in cells)
    for model, df in table.groupby("model"):
        tol = 1e-3 * 2e-4 if model.startswith("NN") else 1e-8 * 2e-4
        np.testing.assert_allclose(df["forecast"], 2e-4, rtol=0, atol=tol, err_msg=model)


def test_har_dgp_reaches_noise_floor():
    asset = har_asset(20000, seed=3)
    t0 = time.perf_counter()
    table, _ = run_forecasts([asset], ["HAR"])
    mse = np.mean((table["forecast"] - table["realized"]) ** 2)
    assert mse / 0.1 ** 2 == pytest.approx(1.0, abs=0.05)
    assert time.perf_counter() - t0 < 60


def test_paper_sized_test_range():
    asset = har_asset(4257, seed=4)
    table, _ = run_forecasts([asset], ["HAR", "LogHAR"], cfg=HarnessConfig(refit_every=5))
    counts = table.groupby("model").size()
    assert (counts == 847).all() and len(counts) == 2


@pytest.mark.parametrize("model,h", [("HAR", 1), ("EN", 1), ("RF", 5), ("GB", 22)])
def test_no_estimation_row_reaches_the_forecast_day(model, h):
    asset = realized_asset(np.random.default_rng(5).uniform(1e-4, 3e-4, 500))
    fm = build_features(asset, "m_har", "HAR-X" if model != "HAR" else "HAR", TargetSpec(h))
    cell = forecast_cell(fm, model, FAST, trace=True)
    test_days = fm.day_index[fm.positions("test")]
    assert len(cell.windows) == len(test_days)
    for (_, last), p in zip(cell.windows, test_days):
        assert last + h - 1 < p


def test_rolling_window_slides_one_day():
    asset = realized_asset(np.random.default_rng(6).uniform(1e-4, 3e-4, 300))
    fm = build_features(asset, "m_har", "HAR", TargetSpec(1))
    w = forecast_cell(fm, "HAR", trace=True).windows
    starts = np.array([a for a, _ in w])
    ends = np.array([b for _, b in w])
    assert (np.diff(starts) == 1).all() and (np.diff(ends) == 1).all()
    n_tr, n_va, _ = fm.split.lengths
    assert (ends - starts + 1 == n_tr + n_va).all()


def test_determinism():
    asset = realized_asset(np.random.default_rng(7).uniform(1e-4, 3e-4, 350))
    models = ["HAR", "RF", "GB", "NN1^1"]
    a, _ = run_forecasts([asset], models, cfg=FAST)
    b, _ = run_forecasts([asset], models, cfg=FAST)
    assert a.equals(b)


def test_failed_cell_is_kept_as_missing_rows():
    asset = realized_asset(np.random.default_rng(8).uniform(1e-4, 3e-4, 300))
    split = DataSplit(range(22, 240), range(240, 260), range(260, 300))
    table, cells = run_forecasts([asset], ["HAR", "LA"], split=split, cfg=FAST)
    errors = {c.model: c.error for c in cells}
    assert errors["HAR"] is None and "below 30" in errors["LA"]
    assert table.groupby("model").size().to_dict() == {"HAR": 40, "LA": 40}
    assert table.loc[table.model == "LA", "forecast"].isna().all()


def test_log_har_applies_variance_correction():
    asset = har_asset(600, seed=9)
    fm = build_features(asset, "m_har", "LogHAR", TargetSpec(1))
    cell = forecast_cell(fm, "LogHAR")
    fit = cell.last_fit
    x = fm.X[fm.positions("test")[-1]]
    raw = fit.estimator.intercept + x @ fit.estimator.weights
    assert fit.predict(x)[0] == pytest.approx(np.exp(raw + 0.5 * fit.residual_variance),
                                              rel=1e-12)
