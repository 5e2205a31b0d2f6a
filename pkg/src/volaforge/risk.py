"""Value-at-Risk from variance forecasts, quantile loss and coverage tests.

VaR is obtained by filtered historical simulation: open-to-close returns
are devolatized by their own realized variance, and the empirical
alpha-quantile of these standardized residuals is rescaled by the square
root of the variance forecast.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from .errors import AlignmentError, DataError

logger = logging.getLogger(__name__)

MIN_RESIDUALS = 250


def lower_quantile(x, alpha):
    """Order statistic ``ceil(alpha * N)`` (1-based) of ``x``."""
    x = np.sort(np.asarray(x, dtype=float))
    if x.size == 0:
        raise DataError("empty residual sample")
    k = max(1, math.ceil(alpha * x.size - 1e-12))
    return float(x[k - 1])


def standardized_residuals(returns, rv):
    r = np.asarray(returns, dtype=float)
    v = np.asarray(rv, dtype=float)
    ok = v > 0
    if not ok.all():
        logger.info("skipping %d day(s) with zero realized variance", int((~ok).sum()))
    return r[ok] / np.sqrt(v[ok])


def fhs_var(vol_forecast, residuals, alpha=0.05):
    """One-day VaR (a return, negative in the left tail)."""
    if vol_forecast < 0:
        raise ValueError("variance forecast must be non-negative")
    res = np.asarray(residuals, dtype=float)
    if res.size == 0:
        raise DataError("empty residual sample")
    if res.size < MIN_RESIDUALS:
        raise DataError(f"{res.size} residuals; at least {MIN_RESIDUALS} are required")
    return math.sqrt(vol_forecast) * lower_quantile(res, alpha)


def hits(returns, var):
    r = np.asarray(returns, dtype=float)
    v = np.asarray(var, dtype=float)
    if r.shape != v.shape:
        raise AlignmentError("returns and VaR forecasts differ in length")
    return (r < v).astype(int)


def quantile_loss(returns, var, alpha=0.05):
    """Mean of ``(alpha - d)(r - VaR)`` with ``d`` the exceedance indicator."""
    r = np.asarray(returns, dtype=float)
    v = np.asarray(var, dtype=float)
    d = hits(r, v)
    return float(np.mean((alpha - d) * (r - v)))


def _xlogy(n, p):
    return n * math.log(p) if n > 0 else 0.0


@dataclass(frozen=True)
class CoverageReport:
    n: int
    exceedances: int
    exceedance_rate: float
    kupiec_lr: float
    kupiec_p: float
    independence_lr: float
    independence_p: float
    conditional_lr: float
    conditional_p: float
    low_power: bool = False


def kupiec_lr(hit_seq, alpha):
    d = np.asarray(hit_seq, dtype=int)
    T = d.size
    T1 = int(d.sum())
    T0 = T - T1
    pi = T1 / T
    null = _xlogy(T0, 1 - alpha) + _xlogy(T1, alpha)
    alt = _xlogy(T0, 1 - pi) + _xlogy(T1, pi)
    return max(0.0, -2.0 * (null - alt))


def independence_lr(hit_seq):
    d = np.asarray(hit_seq, dtype=int)
    prev, nxt = d[:-1], d[1:]
    n00 = int(np.sum((prev == 0) & (nxt == 0)))
    n01 = int(np.sum((prev == 0) & (nxt == 1)))
    n10 = int(np.sum((prev == 1) & (nxt == 0)))
    n11 = int(np.sum((prev == 1) & (nxt == 1)))
    p01 = n01 / (n00 + n01) if n00 + n01 else 0.0
    p11 = n11 / (n10 + n11) if n10 + n11 else 0.0
    p = (n01 + n11) / (n00 + n01 + n10 + n11)
    markov = _xlogy(n00, 1 - p01) + _xlogy(n01, p01) + _xlogy(n10, 1 - p11) + _xlogy(n11, p11)
    iid = _xlogy(n00 + n10, 1 - p) + _xlogy(n01 + n11, p)
    return max(0.0, -2.0 * (iid - markov))


def coverage_tests(hit_seq, alpha=0.05):
    """Unconditional (Kupiec), independence and conditional (Christoffersen)
    likelihood-ratio tests; the conditional statistic is the sum of the other two."""
    d = np.asarray(hit_seq, dtype=int)
    if d.size < 100:
        raise DataError(f"coverage tests need at least 100 observations, got {d.size}")
    T1 = int(d.sum())
    low = T1 == 0 or T1 == d.size
    if low:
        logger.warning("hit sequence has %s exceedances; tests have little power",
                       "no" if T1 == 0 else "only")
    uc = kupiec_lr(d, alpha)
    ind = independence_lr(d)
    cc = uc + ind
    return CoverageReport(d.size, T1, T1 / d.size, uc, float(stats.chi2.sf(uc, 1)), ind,
                          float(stats.chi2.sf(ind, 1)), cc, float(stats.chi2.sf(cc, 2)), low)


kupiec_test = coverage_tests
christoffersen_tests = coverage_tests


def kupiec_lr_batch(hit_matrix, alpha):
    """Kupiec statistics for many hit sequences (rows) at once."""
    H = np.asarray(hit_matrix, dtype=float)
    T = H.shape[1]
    T1 = H.sum(axis=1)
    T0 = T - T1
    pi = T1 / T
    with np.errstate(divide="ignore", invalid="ignore"):
        alt = np.where(T0 > 0, T0 * np.log1p(-pi), 0.0) + np.where(T1 > 0, T1 * np.log(pi), 0.0)
    null = T0 * math.log(1 - alpha) + T1 * math.log(alpha)
    return np.maximum(0.0, -2.0 * (null - alt))


# --------------------------------------------------------------------------
# backtests from a forecast table
# --------------------------------------------------------------------------

def var_backtest(table: pd.DataFrame, realized_by_asset, alpha=0.05, window=None):
    """VaR series for every (asset, model) in a one-day forecast table.

    ``realized_by_asset`` maps asset id to its :class:`RealizedSeries`.  The
    residual window for a test day covers the ``window`` days before it
    (by default the span of the initial training and validation samples).
    """
    rows = []
    for (asset, model), df in table.groupby(["asset", "model"], sort=False):
        rs = realized_by_asset[asset]
        pos = {d: i for i, d in enumerate(rs.dates)}
        idx = np.array([pos[d] for d in df["date"]])
        W = window or int(idx[0])
        z = np.where(rs.rv > 0, rs.ret_oc / np.sqrt(np.where(rs.rv > 0, rs.rv, 1.0)), np.nan)
        for d, i, f in zip(df["date"], idx, df["forecast"].to_numpy()):
            res = z[max(0, i - W):i]
            res = res[np.isfinite(res)]
            var = fhs_var(max(float(f), 0.0), res, alpha) if np.isfinite(f) else np.nan
            rows.append((asset, model, d, var, float(rs.ret_oc[i])))
    out = pd.DataFrame(rows, columns=["asset", "model", "date", "var", "return"])
    out["hit"] = (out["return"] < out["var"]).astype(int)
    return out


def var_table(backtest: pd.DataFrame, alpha=0.05, models=None, level=0.05):
    """Average relative quantile loss across assets plus coverage rows.

    Returns a frame indexed by benchmark model (rows) with one column per
    model, followed by rows ``Prb.`` (average exceedance rate), ``Unc.`` and
    ``Cond.`` (number of assets rejecting at ``level``).
    """
    names = models or list(dict.fromkeys(backtest["model"]))
    ql = {}
    cov = {}
    for (asset, model), df in backtest.groupby(["asset", "model"], sort=False):
        df = df.dropna(subset=["var"])
        ql[(asset, model)] = quantile_loss(df["return"], df["var"], alpha)
        cov[(asset, model)] = coverage_tests(df["hit"].to_numpy(), alpha)
    assets = list(dict.fromkeys(backtest["asset"]))
    mat = pd.DataFrame(index=names, columns=names, dtype=float)
    for i in names:
        for j in names:
            r = [ql[(a, j)] / ql[(a, i)] for a in assets
                 if (a, i) in ql and (a, j) in ql and ql[(a, i)] > 0]
            mat.loc[i, j] = float(np.mean(r)) if r else np.nan
    extra = pd.DataFrame(index=["Prb.", "Unc.", "Cond."], columns=names, dtype=float)
    for m in names:
        reps = [cov[(a, m)] for a in assets if (a, m) in cov]
        extra.loc["Prb.", m] = float(np.mean([c.exceedance_rate for c in reps]))
        extra.loc["Unc.", m] = sum(c.kupiec_p < level for c in reps)
        extra.loc["Cond.", m] = sum(c.conditional_p < level for c in reps)
    return pd.concat([mat, extra])
