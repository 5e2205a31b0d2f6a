import numpy as np
import pytest

from volaforge.errors import ConfigError
from volaforge.realized import realized_series
from volaforge.simulate import (ConstantVol, HarGenConfig, JumpSpec, SimConfig, SquareRootVol,
                                generate_har_series, simulate_covariates, simulate_paths)


def test_constant_vol_truth():
    _, truth = simulate_paths(SimConfig(days=20, vol_model=ConstantVol(0.01)))
    np.testing.assert_allclose(truth.qv, 1e-4, rtol=1e-12)


def test_forced_jump_only():
    cfg = SimConfig(days=3, vol_model=ConstantVol(0.0), forced_jumps=((1, 10, 0.05),))
    panel, truth = simulate_paths(cfg)
    assert truth.qv[1] == pytest.approx(0.05 ** 2)
    assert truth.qv[0] == 0.0
    assert realized_series(panel).rv[1] == pytest.approx(0.05 ** 2)


def test_square_root_stationary_mean():
    theta = 1e-4
    cfg = SimConfig(days=20000, n_per_day=13, vol_model=SquareRootVol(0.05, theta, 0.001),
                    seed=5)
    _, truth = simulate_paths(cfg)
    qv = truth.qv[2000:]
    # batch means for an autocorrelation-robust standard error
    se = qv.reshape(60, -1).mean(axis=1).std(ddof=1) / np.sqrt(60)
    assert abs(qv.mean() - theta) < 3 * se


def test_seed_determinism():
    cfg = SimConfig(days=10, vol_model=SquareRootVol(0.05, 1e-4, 0.001), jump=JumpSpec(0.5, 0.01),
                    seed=3)
    a, _ = simulate_paths(cfg, path_index=2)
    b, _ = simulate_paths(cfg, path_index=2)
    c, _ = simulate_paths(cfg, path_index=3)
    assert np.array_equal(a.returns, b.returns)
    assert not np.array_equal(a.returns, c.returns)


def test_rv_converges_to_qv_with_sampling_frequency():
    errs = []
    for n in (13, 78, 390):
        cfg = SimConfig(days=300, n_per_day=n, vol_model=SquareRootVol(0.05, 1e-4, 0.002),
                        seed=1)
        panel, truth = simulate_paths(cfg)
        errs.append(np.mean(np.abs(realized_series(panel).rv - truth.qv)))
    assert errs[0] > errs[1] > errs[2]


def test_invalid_configs():
    with pytest.raises(ConfigError):
        simulate_paths(SimConfig(days=0))
    with pytest.raises(ConfigError):
        simulate_paths(SimConfig(days=5, vol_model=SquareRootVol(-1.0, 1e-4, 0.0)))
    with pytest.raises(ConfigError):
        generate_har_series(HarGenConfig(betas=(0.1, 0.7, 0.3, 0.1)))


def test_har_generator_fixed_points():
    s = generate_har_series(HarGenConfig(betas=(0.7, 0.0, 0.0, 0.0), noise_std=0.0, days=50))
    np.testing.assert_array_equal(s.values, 0.7)
    s = generate_har_series(HarGenConfig(betas=(0.1, 0.5, 0.3, 0.1), noise_std=0.0, days=50))
    np.testing.assert_allclose(s.values, 1.0, rtol=1e-12)


def test_har_generator_is_positive():
    s = generate_har_series(HarGenConfig(betas=(0.01, 0.5, 0.3, 0.1), noise_std=0.2, days=3000))
    assert (s.values > 0).all()


def test_market_covariates_shared_across_assets():
    cfg = SimConfig(days=50, vol_model=SquareRootVol(0.05, 1e-4, 0.001))
    covs = []
    for k in range(2):
        panel, truth = simulate_paths(cfg, path_index=k)
        covs.append(simulate_covariates(truth, realized_series(panel).ret_oc, panel.days, 0, k))
    np.testing.assert_array_equal(covs[0]["VIX"].values, covs[1]["VIX"].values)
    assert not np.array_equal(covs[0]["IV"].values, covs[1]["IV"].values)
    assert set(covs[0]) == {"IV", "EA", "VIX", "EPU", "US3M", "HSI", "M1W", "$VOL", "ADS"}
