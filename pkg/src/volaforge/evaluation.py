"""Forecast evaluation: relative MSE, Diebold-Mariano, model confidence sets.

Loss series are squared forecast errors.  Every statistic here works on
aligned arrays (rows = test days, columns = models) so the bootstrap and
Monte Carlo checks can be vectorized.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from ._rng import substream
from .errors import AlignmentError, DataError

logger = logging.getLogger(__name__)


def squared_errors(forecast, realized):
    f = np.asarray(forecast, dtype=float)
    r = np.asarray(realized, dtype=float)
    if f.shape != r.shape:
        raise AlignmentError("forecast and realized series differ in length")
    return (f - r) ** 2


def mse(losses):
    losses = np.asarray(losses, dtype=float)
    if losses.size == 0:
        raise DataError("empty loss series")
    return float(np.mean(losses))


def relative_matrix(mses):
    """``out[i, j] = mse[j] / mse[i]``; rows are benchmarks, NaN for a zero benchmark."""
    m = np.asarray(mses, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = m[None, :] / m[:, None]
    out[m == 0.0, :] = np.nan
    np.fill_diagonal(out, 1.0)
    return out


# --------------------------------------------------------------------------
# Diebold-Mariano
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DmResult:
    statistic: float
    p_value: float
    hac_lags: int
    alternative: str = "column model more accurate"
    degenerate: bool = False


def newey_west(d, lags):
    """Bartlett-weighted long-run variance of the rows of ``d`` (last axis = time)."""
    d = np.asarray(d, dtype=float)
    T = d.shape[-1]
    e = d - d.mean(axis=-1, keepdims=True)
    lrv = np.sum(e * e, axis=-1) / T
    for k in range(1, lags + 1):
        gk = np.sum(e[..., k:] * e[..., :-k], axis=-1) / T
        lrv = lrv + 2.0 * (1.0 - k / (lags + 1.0)) * gk
    return lrv


def dm_statistic(loss_i, loss_j, horizon=1):
    """Vectorized DM statistic of ``loss_i - loss_j`` along the last axis."""
    d = np.asarray(loss_i, dtype=float) - np.asarray(loss_j, dtype=float)
    T = d.shape[-1]
    lrv = newey_west(d, max(int(horizon) - 1, 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = d.mean(axis=-1) / np.sqrt(lrv / T)
    return np.where(lrv > 0, stat, 0.0)


def dm_test(loss_i, loss_j, horizon=1):
    """One-sided test of equal accuracy against model ``j`` being better.

    A positive statistic means ``loss_i`` exceeds ``loss_j`` on average; the
    p-value is the upper normal tail.
    """
    li = np.asarray(loss_i, dtype=float)
    lj = np.asarray(loss_j, dtype=float)
    if li.shape != lj.shape:
        raise AlignmentError("loss series differ in length")
    if li.shape[0] < 30:
        raise DataError(f"DM test needs at least 30 observations, got {li.shape[0]}")
    lags = max(int(horizon) - 1, 0)
    d = li - lj
    lrv = float(newey_west(d, lags))
    if not lrv > 0.0:
        logger.warning("loss differential has zero long-run variance; DM test degenerate")
        return DmResult(0.0, 0.5, lags, degenerate=True)
    stat = float(d.mean() / math.sqrt(lrv / d.shape[0]))
    return DmResult(stat, float(stats.norm.sf(stat)), lags)


# --------------------------------------------------------------------------
# model confidence set
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class McsResult:
    models: tuple
    survivors: tuple
    elimination_order: tuple
    p_values: dict
    level: float
    degenerate: bool = False

    def included(self, model):
        return model in self.survivors


def block_bootstrap_means(losses, reps, block, rng):
    """Moving-block bootstrap means of each column of ``losses``.

    Blocks of ``block`` consecutive rows start at uniform positions; the
    last block is cut so every resample has exactly ``T`` rows.
    """
    L = np.asarray(losses, dtype=float)
    T, M = L.shape
    n_blocks = math.ceil(T / block)
    csum = np.vstack([np.zeros((1, M)), np.cumsum(L, axis=0)])
    starts = rng.integers(0, T - block + 1, size=(reps, n_blocks))
    sizes = np.full(n_blocks, block)
    sizes[-1] = T - block * (n_blocks - 1)
    out = np.zeros((reps, M))
    for k in range(n_blocks):
        s = starts[:, k]
        out += csum[s + sizes[k]] - csum[s]
    return out / T


def mcs(losses, models=None, level=0.90, reps=5000, block=None, seed=0, boot_means=None):
    """Model confidence set with the range statistic.

    Models are eliminated one at a time (the one with the largest
    standardized loss excess over any other) until one remains; each model's
    MCS p-value is the running maximum of the elimination-step p-values, and
    the set at ``level`` keeps models with p-value >= 1 - level.  Passing
    ``boot_means`` reuses a fixed set of bootstrap draws.
    """
    L = np.asarray(losses, dtype=float)
    if L.ndim != 2 or L.shape[1] < 2:
        raise DataError("MCS needs a (T x M) loss matrix with M >= 2")
    T, M = L.shape
    models = tuple(models) if models is not None else tuple(range(M))
    if block is None:
        block = math.ceil(T ** (1.0 / 3.0))
    if boot_means is None:
        boot_means = block_bootstrap_means(L, reps, block, substream(seed, "mcs"))
    mean = L.mean(axis=0)

    alive = list(range(M))
    order = []
    pvals = {}
    running = 0.0
    degenerate = False
    while len(alive) > 1:
        a = np.array(alive)
        dbar = mean[a][:, None] - mean[a][None, :]
        boot = boot_means[:, a]
        dstar = boot[:, :, None] - boot[:, None, :] - dbar[None]
        var = np.mean(dstar ** 2, axis=0)
        pos = var > 0.0
        if not pos.any():
            degenerate = True
            logger.warning("MCS bootstrap variance is zero for all pairs; keeping all models")
            break
        sd = np.sqrt(np.where(pos, var, 1.0))
        t = np.where(pos, dbar / sd, 0.0)
        stat = np.max(np.abs(t))
        tstar = np.max(np.where(pos[None], np.abs(dstar) / sd[None], 0.0), axis=(1, 2))
        p = float(np.mean(tstar >= stat))
        worst = alive[int(np.argmax(np.max(t, axis=1)))]
        running = max(running, p)
        pvals[models[worst]] = running
        order.append(models[worst])
        alive.remove(worst)
    for i in alive:
        pvals[models[i]] = 1.0
    survivors = tuple(m for m in models if pvals[m] >= 1.0 - level - 1e-15)
    if degenerate:
        survivors = tuple(m for m in models if m not in order) or models
    return McsResult(models, survivors, tuple(order), pvals, level, degenerate)


# --------------------------------------------------------------------------
# deciles and autocorrelation
# --------------------------------------------------------------------------

def decile_buckets(realized, n_buckets=10):
    """Bucket index per row from empirical quantiles; boundary ties go down."""
    r = np.asarray(realized, dtype=float)
    if r.size < n_buckets:
        raise DataError(f"need at least {n_buckets} rows for decile analysis")
    edges = np.quantile(r, np.arange(1, n_buckets) / n_buckets)
    return np.searchsorted(edges, r, side="left")


def decile_mse(losses, realized, benchmark=0, n_buckets=10):
    """Per-bucket MSE of each model relative to the benchmark column."""
    L = np.asarray(losses, dtype=float)
    if L.ndim == 1:
        L = L[:, None]
    b = decile_buckets(realized, n_buckets)
    out = np.full((n_buckets, L.shape[1]), np.nan)
    for k in range(n_buckets):
        rows = b == k
        if rows.any():
            m = L[rows].mean(axis=0)
            with np.errstate(divide="ignore", invalid="ignore"):
                out[k] = m / m[benchmark]
    return out


def acf(x, max_lag):
    x = np.asarray(x, dtype=float)
    e = x - x.mean()
    denom = float(e @ e)
    if not denom > 0:
        raise DataError("autocorrelation of a constant series is undefined")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(e[k:] @ e[:-k]) / denom
    return out


@dataclass(frozen=True)
class AcfResult:
    lags: np.ndarray
    acf: np.ndarray
    band: float


def fitted_acf(fitted, fm, max_lag=100, segment="train"):
    """ACF of in-sample fitted values with +-1.96/sqrt(T) white-noise bands."""
    X, _ = fm.rows(segment)
    values = fitted.predict(X)
    r = acf(values, max_lag)
    return AcfResult(np.arange(max_lag + 1), r, 1.96 / math.sqrt(len(values)))


# --------------------------------------------------------------------------
# tables across assets
# --------------------------------------------------------------------------

def loss_panel(table: pd.DataFrame, models=None):
    """Per-asset loss matrices ``{asset: (dates, models, T x M array)}``."""
    out = {}
    for asset, df in table.groupby("asset", sort=False):
        wide = df.pivot(index="date", columns="model", values="forecast")
        realized = df.groupby("date")["realized"].first().loc[wide.index]
        cols = [m for m in (models or list(dict.fromkeys(df["model"]))) if m in wide.columns]
        wide = wide[cols].dropna(axis=1, how="any")
        losses = (wide.to_numpy() - realized.to_numpy()[:, None]) ** 2
        out[asset] = (tuple(wide.index), tuple(wide.columns), losses, realized.to_numpy())
    return out


def relative_mse_table(table: pd.DataFrame, models=None, horizon=None):
    """Cross-asset average relative MSE plus DM rejection shares.

    One row per (benchmark row model, column model) with the average ratio
    and the share of assets rejecting equal accuracy in favour of the column
    model at the 10%, 5% and 1% levels.
    """
    panel = loss_panel(table, models)
    h = int(table["horizon"].iloc[0]) if horizon is None else horizon
    names = models or list(dict.fromkeys(table["model"]))
    ratios = {}
    rejects = {}
    for asset, (_, cols, L, _) in panel.items():
        mses = L.mean(axis=0)
        R = relative_matrix(mses)
        for a, i in enumerate(cols):
            for b, j in enumerate(cols):
                ratios.setdefault((i, j), []).append(R[a, b])
                if a != b and L.shape[0] >= 30:
                    p = dm_test(L[:, a], L[:, b], h).p_value
                    rejects.setdefault((i, j), []).append(p)
    rows = []
    for i in names:
        for j in names:
            r = ratios.get((i, j))
            if r is None:
                continue
            ps = np.array(rejects.get((i, j), []))
            row = {"row_model": i, "col_model": j, "avg_ratio": float(np.nanmean(r))}
            for lvl, tag in ((0.10, "reject_10"), (0.05, "reject_05"), (0.01, "reject_01")):
                row[tag] = float(np.mean(ps < lvl)) if ps.size else np.nan
            rows.append(row)
    return pd.DataFrame(rows)


def mcs_inclusion_table(table: pd.DataFrame, models=None, level=0.90, reps=5000, seed=0):
    """Share of assets in which each model belongs to the confidence set."""
    panel = loss_panel(table, models)
    counts = {}
    n = 0
    for k, (asset, (_, cols, L, _)) in enumerate(panel.items()):
        res = mcs(L, cols, level=level, reps=reps, seed=seed * 1_000_003 + k)
        n += 1
        for m in cols:
            counts[m] = counts.get(m, 0) + int(res.included(m))
    names = models or list(counts)
    return pd.DataFrame({"model": [m for m in names if m in counts],
                         "mcs_inclusion": [counts[m] / n for m in names if m in counts]})


def decile_table(table: pd.DataFrame, benchmark="HAR", models=None):
    """Cross-asset average of per-decile MSE ratios against ``benchmark``."""
    panel = loss_panel(table, models)
    acc = []
    cols_ref = None
    for _, (_, cols, L, realized) in panel.items():
        if benchmark not in cols:
            continue
        acc.append(decile_mse(L, realized, cols.index(benchmark)))
        cols_ref = cols
    if not acc:
        return pd.DataFrame()
    avg = np.nanmean(np.array(acc), axis=0)
    df = pd.DataFrame(avg, columns=list(cols_ref))
    df.insert(0, "decile", [f"({k / 10:.1f},{(k + 1) / 10:.1f})" for k in range(10)])
    return df
