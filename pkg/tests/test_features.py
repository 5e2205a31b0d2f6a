import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from volaforge.errors import AlignmentError, ConfigError, SizingError
from volaforge.features import (COVARIATE_ORDER, LINEAR_HAR, ROSTER, AssetData, CovariateSpec,
                                TargetSpec, build_features, build_target, canonical_model,
                                covariate_specs, feature_columns)
from volaforge.realized import realized_series
from volaforge.simulate import SimConfig, SquareRootVol, simulate_covariates, simulate_paths
from volaforge.timeseries import DailySeries


def make_asset(days=300, seed=0, k=0):
    cfg = SimConfig(days=days, vol_model=SquareRootVol(0.05, 1e-4, 0.002), seed=seed)
    panel, truth = simulate_paths(cfg, f"A{k}", k)
    cov = simulate_covariates(truth, realized_series(panel).ret_oc, panel.days, seed, k)
    return AssetData.from_panel(panel, cov)


@pytest.fixture(scope="module")
def asset():
    return make_asset()


def test_column_counts(asset):
    assert build_features(asset, "m_har", "HAR").n_features == 3
    assert build_features(asset, "m_all", "HAR-X").n_features == 12
    fm = build_features(asset, "m_har", "HARQ")
    assert fm.column_names == ("RVD", "RQ_RVD", "RVW", "RVM")


@given(st.sampled_from(["m_har", "m_all"]), st.sampled_from(LINEAR_HAR))
def test_column_count_is_a_function_of_dataset_and_model(dataset, model):
    base = {"HAR": 3, "HAR-X": 3, "LogHAR": 3, "LevHAR": 6, "SHAR": 4, "HARQ": 4}[model]
    extra = 9 if dataset == "m_all" and model != "HAR" else 0
    assert len(feature_columns(dataset, model)) == base + extra


def test_target_examples():
    rv = np.array([0.0, 2, 4, 6, 8, 10, 12])
    assert build_target(rv, TargetSpec(1), 0) == 2
    assert build_target(rv, TargetSpec(5), 0) == 6
    assert build_target(np.full(30, 1.5), TargetSpec(22), 3) == 1.5
    with pytest.raises(SizingError):
        build_target(rv, TargetSpec(5), 3)
    with pytest.raises(ConfigError):
        TargetSpec(3)


def test_rows_are_measurable_the_day_before(asset):
    fm = build_features(asset, "m_har", "HAR", scale=False)
    rv = asset.realized.rv
    i = 10
    t = fm.day_index[i]
    assert fm.X[i, 0] == rv[t - 1]
    assert fm.y[i] == rv[t]


def test_weekly_target_rows(asset):
    fm = build_features(asset, "m_har", "HAR", TargetSpec(5), scale=False)
    rv = asset.realized.rv
    t = fm.day_index[-1]
    assert t + 4 == len(rv) - 1
    assert fm.y[-1] == pytest.approx(rv[t:t + 5].mean())


def test_no_lookahead_under_future_perturbation(asset):
    base = build_features(asset, "m_all", "HAR-X", scale=False)
    rv = asset.realized.rv.copy()
    t = int(base.day_index[50])
    rv[t] *= 10
    rs = asset.realized.__class__(asset.asset_id, asset.dates, rv, asset.realized.rv_pos,
                                  asset.realized.rv_neg, asset.realized.rq,
                                  asset.realized.ret_oc)
    bumped = build_features(AssetData(asset.asset_id, rs, asset.covariates), "m_all", "HAR-X",
                            scale=False)
    np.testing.assert_array_equal(base.X[:51], bumped.X[:51])


def test_covariate_transforms(asset):
    raw = build_features(asset, "m_all", "HAR-X", scale=False)
    t = int(raw.day_index[5])
    col = dict(zip(raw.column_names, raw.X[5]))
    us3m = asset.covariates["US3M"].values
    vol = asset.covariates["$VOL"].values
    assert col["US3M"] == pytest.approx(us3m[t - 1] - us3m[t - 2])
    assert col["$VOL"] == pytest.approx(np.log(vol[t - 1]) - np.log(vol[t - 2]))
    assert col["VIX"] == asset.covariates["VIX"].values[t - 1]
    log = build_features(asset, "m_all", "LogHAR", scale=False)
    lcol = dict(zip(log.column_names, log.X[5]))
    assert lcol["VIX"] == pytest.approx(np.log(asset.covariates["VIX"].values[t - 1]))
    assert lcol["ADS"] == asset.covariates["ADS"].values[t - 1]
    specs = {s.name: s.transform for s in covariate_specs("LogHAR")}
    assert specs["IV"] == specs["VIX"] == "log" and specs["EPU"] == "none"


def test_binary_indicator_is_not_scaled(asset):
    fm = build_features(asset, "m_all", "HAR-X")
    j = fm.column_names.index("EA")
    assert set(np.unique(fm.X[:, j])) <= {0.0, 1.0}
    Xtr, _ = fm.rows("train")
    k = fm.column_names.index("HSI")
    assert abs(Xtr[:, k].mean()) < 1e-10 and abs(Xtr[:, k].std() - 1) < 1e-10


def test_loghar_targets(asset):
    fm = build_features(asset, "m_har", "LogHAR")
    assert fm.log_target
    np.testing.assert_allclose(np.exp(fm.y), fm.realized, rtol=1e-12)


def test_misaligned_covariate_lists_dates(asset):
    cov = dict(asset.covariates)
    v = cov["VIX"]
    cov["VIX"] = DailySeries("VIX", v.dates[:-3], v.values[:-3])
    with pytest.raises(AlignmentError) as err:
        AssetData.aligned(asset.asset_id, asset.realized, cov)
    assert err.value.dates == list(asset.dates[-3:])


def test_unknown_transform_and_model():
    with pytest.raises(ConfigError):
        CovariateSpec("X", "sqrt").apply([1.0])
    with pytest.raises(ConfigError):
        canonical_model("XGB")


def test_canonical_spellings():
    assert canonical_model("har-x") == "HAR-X"
    assert canonical_model("nn2_10") == "NN2^10"
    assert canonical_model("a-la") == "A-LA"
    assert len(ROSTER) == 22 and len(COVARIATE_ORDER) == 9
