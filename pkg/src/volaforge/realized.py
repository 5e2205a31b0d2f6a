"""Realized variance, signed semivariances, realized quarticity and HAR lags."""

from dataclasses import dataclass

import numpy as np
import pandas as pd
from numba import njit

from .errors import BurnInError, DataError
from .timeseries import BURN_IN, IntradayPanel


@njit(cache=True)
def _add(s, c, x):
    """One Neumaier step; returns the updated (sum, compensation)."""
    t = s + x
    if abs(s) >= abs(x):
        c += (s - t) + x
    else:
        c += (x - t) + s
    return t, c


@njit(cache=True)
def _measures(r):
    """Compensated left-to-right sums per day: r^2 split by sign, r^4 and r."""
    D, n = r.shape
    pos = np.empty(D)
    neg = np.empty(D)
    quart = np.empty(D)
    tot = np.empty(D)
    for d in range(D):
        sp = cp = sn = cn = sq = cq = so = co = 0.0
        for j in range(n):
            x = r[d, j]
            x2 = x * x
            sp, cp = _add(sp, cp, x2 if x > 0 else 0.0)
            sn, cn = _add(sn, cn, x2 if x < 0 else 0.0)
            sq, cq = _add(sq, cq, x2 * x2)
            so, co = _add(so, co, x)
        pos[d] = sp + cp
        neg[d] = sn + cn
        quart[d] = sq + cq
        tot[d] = so + co
    return pos, neg, quart, tot


@dataclass(frozen=True)
class RealizedDay:
    rv: float
    rv_pos: float
    rv_neg: float
    rq: float
    ret_oc: float


@dataclass(frozen=True)
class RealizedSeries:
    """Column-wise realized measures for consecutive days of one asset."""

    asset_id: str
    dates: tuple
    rv: np.ndarray
    rv_pos: np.ndarray
    rv_neg: np.ndarray
    rq: np.ndarray
    ret_oc: np.ndarray

    def __len__(self):
        return len(self.dates)

    def __getitem__(self, t):
        return RealizedDay(float(self.rv[t]), float(self.rv_pos[t]), float(self.rv_neg[t]),
                           float(self.rq[t]), float(self.ret_oc[t]))

    def to_frame(self):
        return pd.DataFrame({"date": list(self.dates), "rv": self.rv, "rv_pos": self.rv_pos,
                             "rv_neg": self.rv_neg, "rq": self.rq, "ret_oc": self.ret_oc})


def realized_measures(returns):
    """Vectorized realized measures for a (days x n) array of log-returns.

    Returns a dict of 1-D arrays ``rv, rv_pos, rv_neg, rq, ret_oc``.  The
    semivariances are compensated sums, and ``rv`` is defined as their sum,
    so ``rv == rv_pos + rv_neg`` holds bit for bit.
    """
    r = np.asarray(returns, dtype=float)
    if r.ndim == 1:
        r = r[None, :]
    if r.shape[1] == 0:
        raise DataError("empty return vector")
    if r.shape[1] < 2:
        raise DataError("need n >= 2 intraday returns")
    if np.isnan(r).any():
        raise DataError("NaN in intraday returns")
    n = r.shape[1]
    rv_pos, rv_neg, quart, ret_oc = _measures(np.ascontiguousarray(r))
    rv = rv_pos + rv_neg
    rq = (n / 3.0) * quart
    return {"rv": rv, "rv_pos": rv_pos, "rv_neg": rv_neg, "rq": rq, "ret_oc": ret_oc}


def realized_day(returns):
    """Realized measures of a single day of ``n >= 2`` intraday log-returns."""
    r = np.asarray(returns, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise DataError("realized_day expects a non-empty 1-D return vector")
    m = realized_measures(r[None, :])
    return RealizedDay(*(float(m[k][0]) for k in ("rv", "rv_pos", "rv_neg", "rq", "ret_oc")))


def realized_series(panel: IntradayPanel):
    m = realized_measures(panel.returns)
    return RealizedSeries(panel.asset_id, panel.days, **m)


def read_realized_csv(path, asset_id=""):
    df = pd.read_csv(path, dtype={"date": str}, comment="#", float_precision="round_trip")
    need = ["date", "rv", "rv_pos", "rv_neg", "rq", "ret_oc"]
    if list(df.columns) != need:
        raise DataError(f"{path}: header must be {','.join(need)}")
    return RealizedSeries(asset_id, tuple(df["date"]),
                          *(df[c].to_numpy(float) for c in need[1:]))


def write_realized_csv(series, path):
    series.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


# --------------------------------------------------------------------------
# lags
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LagSet:
    rvd: float
    rvw: float
    rvm: float
    rq_sqrt: float
    retd_neg: float
    retw_neg: float
    retm_neg: float
    rvd_pos: float
    rvd_neg: float


def _trailing_mean(x, h):
    """out[t] = mean(x[t-h .. t-1]); NaN where the window is incomplete."""
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape[0], np.nan)
    if x.shape[0] > h:
        out[h:] = np.lib.stride_tricks.sliding_window_view(x, h)[:-1].mean(axis=1)
    return out


def lag_matrix(series):
    """Vectorized :func:`build_lags` for every day; burn-in rows are NaN."""
    T = len(series)
    nan = np.full(T, np.nan)

    def shift1(x):
        out = nan.copy()
        out[1:] = x[:-1]
        return out

    cols = {
        "rvd": shift1(series.rv),
        "rvw": _trailing_mean(series.rv, 5),
        "rvm": _trailing_mean(series.rv, 22),
        "rq_sqrt": np.sqrt(shift1(series.rq)),
        "retd_neg": np.minimum(0.0, shift1(series.ret_oc)),
        "retw_neg": np.minimum(0.0, _trailing_mean(series.ret_oc, 5)),
        "retm_neg": np.minimum(0.0, _trailing_mean(series.ret_oc, 22)),
        "rvd_pos": shift1(series.rv_pos),
        "rvd_neg": shift1(series.rv_neg),
    }
    for v in cols.values():
        v[:BURN_IN] = np.nan
    return cols


def build_lags(series, t):
    """Lagged regressors for forecasting day ``t`` from days ``t-22 .. t-1``."""
    if t < BURN_IN:
        raise BurnInError(f"day {t} lies inside the {BURN_IN}-day burn-in")
    if t > len(series):
        raise BurnInError(f"day {t} is beyond the sample of {len(series)} days")
    rv = series.rv
    ret = series.ret_oc
    rvw = float(np.mean(rv[t - 5:t]))
    rvm = float(np.mean(rv[t - 22:t]))
    return LagSet(
        rvd=float(rv[t - 1]),
        rvw=rvw,
        rvm=rvm,
        rq_sqrt=float(np.sqrt(series.rq[t - 1])),
        retd_neg=min(0.0, float(ret[t - 1])),
        retw_neg=min(0.0, float(np.mean(ret[t - 5:t]))),
        retm_neg=min(0.0, float(np.mean(ret[t - 22:t]))),
        rvd_pos=float(series.rv_pos[t - 1]),
        rvd_neg=float(series.rv_neg[t - 1]),
    )
