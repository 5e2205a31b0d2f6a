import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from volaforge.errors import BurnInError, DataError
from volaforge.realized import (RealizedSeries, build_lags, lag_matrix, read_realized_csv,
                                realized_day, realized_measures, write_realized_csv)
from volaforge.simulate import trading_dates

finite = st.floats(-0.2, 0.2, allow_nan=False, allow_subnormal=False)


def _series(rv, ret=None):
    rv = np.asarray(rv, float)
    ret = np.zeros_like(rv) if ret is None else np.asarray(ret, float)
    return RealizedSeries("A", trading_dates(rv.size), rv, rv / 2, rv / 2, rv ** 2, ret)


def test_zero_returns():
    d = realized_day(np.zeros(78))
    assert (d.rv, d.rq, d.rv_pos, d.rv_neg) == (0.0, 0.0, 0.0, 0.0)


def test_two_return_hand_computation():
    d = realized_day([0.01, -0.01])
    assert d.rv == pytest.approx(2e-4, rel=1e-15)
    assert d.rv_pos == pytest.approx(1e-4, rel=1e-15)
    assert d.rv_neg == pytest.approx(1e-4, rel=1e-15)
    assert d.rq == pytest.approx((2 / 3) * 2e-8, rel=1e-14)
    assert d.ret_oc == 0.0


def test_bad_inputs():
    with pytest.raises(DataError):
        realized_day([])
    with pytest.raises(DataError):
        realized_day([0.1, np.nan])


@given(arrays(float, st.integers(2, 200), elements=finite))
def test_semivariance_identity_is_exact(r):
    m = realized_measures(r)
    assert m["rv"][0] == m["rv_pos"][0] + m["rv_neg"][0]
    assert m["rv"][0] >= 0 and m["rq"][0] >= 0


@given(arrays(float, st.integers(2, 100), elements=finite), st.floats(0.1, 10.0))
def test_scaling(r, k):
    a = realized_measures(r)
    b = realized_measures(k * r)
    np.testing.assert_allclose(b["rv"], k ** 2 * a["rv"], rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(b["rq"], k ** 4 * a["rq"], rtol=1e-12, atol=1e-300)


def test_constant_rv_lags():
    lag = build_lags(_series(np.full(40, 3.0)), 30)
    assert lag.rvd == lag.rvw == lag.rvm == 3.0


def test_window_arithmetic():
    lag = build_lags(_series(np.arange(1.0, 23.0)), 22)
    assert lag.rvd == 22.0
    assert lag.rvw == 20.0
    assert lag.rvm == 11.5


def test_negative_return_aggregates():
    lag = build_lags(_series(np.ones(30), np.full(30, 0.01)), 25)
    assert lag.retd_neg == lag.retw_neg == lag.retm_neg == 0.0
    lag = build_lags(_series(np.ones(30), np.full(30, -0.01)), 25)
    assert lag.retm_neg == pytest.approx(-0.01)


def test_burn_in():
    with pytest.raises(BurnInError):
        build_lags(_series(np.ones(30)), 21)


def test_lag_matrix_matches_build_lags(rng):
    s = _series(rng.random(80), rng.normal(size=80))
    L = lag_matrix(s)
    assert np.isnan(L["rvd"][:22]).all()
    for t in (22, 40, 79):
        lag = build_lags(s, t)
        for k, v in L.items():
            assert v[t] == pytest.approx(getattr(lag, k), rel=1e-13)


def test_lags_ignore_the_future(rng):
    rv = rng.random(60)
    base = lag_matrix(_series(rv))
    bumped = rv.copy()
    bumped[41] += 5.0
    after = lag_matrix(_series(bumped))
    for k in base:
        np.testing.assert_array_equal(base[k][:42], after[k][:42])


def test_realized_csv_round_trip(tmp_path, rng):
    s = _series(rng.random(30), rng.normal(size=30))
    p = tmp_path / "rv.csv"
    write_realized_csv(s, p)
    back = read_realized_csv(p, "A")
    np.testing.assert_array_equal(back.rv, s.rv)
    np.testing.assert_array_equal(back.ret_oc, s.ret_oc)
