"""Feature matrices for the HAR-only and extended datasets.

Every row ``t`` of a feature matrix forecasts the average realized variance
over days ``t .. t+h-1`` using information available at the close of day
``t-1``: lagged realized measures and the covariates observed on ``t-1``.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
import pandas as pd

from .errors import AlignmentError, ConfigError, DataError, SizingError
from .realized import RealizedSeries, lag_matrix, realized_series
from .timeseries import BURN_IN, DailySeries, DataSplit, FeatureMatrix, make_split, standardize

logger = logging.getLogger(__name__)

HORIZONS = {"day": 1, "week": 5, "month": 22}
DATASETS = ("m_har", "m_all")

# Table order of the exogenous predictors and their default transforms.
COVARIATE_ORDER = ("IV", "EA", "VIX", "EPU", "US3M", "HSI", "M1W", "$VOL", "ADS")
_TRANSFORMS = {"US3M": "first-difference", "$VOL": "dlog"}
_LOG_FOR_LOGHAR = ("IV", "VIX")
_BINARY = ("EA",)


@dataclass(frozen=True)
class CovariateSpec:
    name: str
    transform: str = "none"      # none | first-difference | dlog | log
    source: Optional[str] = None  # CSV path; None when derived in memory

    def apply(self, values):
        v = np.asarray(values, dtype=float)
        if self.transform == "none":
            return v.copy()
        if self.transform == "first-difference":
            return np.concatenate([[np.nan], np.diff(v)])
        if self.transform == "log":
            if np.any(v <= 0):
                raise DataError(f"{self.name}: log transform of non-positive values")
            return np.log(v)
        if self.transform == "dlog":
            if np.any(v <= 0):
                raise DataError(f"{self.name}: dlog transform of non-positive values")
            return np.concatenate([[np.nan], np.diff(np.log(v))])
        raise ConfigError(f"unknown transform {self.transform!r}")


def covariate_specs(model="HAR"):
    """Transforms used for the extended dataset; IV and VIX are logged for LogHAR."""
    fam = model_family(model)
    specs = []
    for name in COVARIATE_ORDER:
        tr = _TRANSFORMS.get(name, "none")
        if fam == "loghar" and name in _LOG_FOR_LOGHAR:
            tr = "log"
        specs.append(CovariateSpec(name, tr))
    return specs


@dataclass(frozen=True)
class TargetSpec:
    horizon: int = 1

    def __post_init__(self):
        if self.horizon not in (1, 5, 22):
            raise ConfigError(f"horizon must be 1, 5 or 22, got {self.horizon}")

    @classmethod
    def named(cls, name):
        if isinstance(name, int):
            return cls(name)
        try:
            return cls(HORIZONS[str(name).lower()])
        except KeyError:
            raise ConfigError(f"unknown horizon {name!r}; use day, week or month") from None


@dataclass(frozen=True)
class AssetData:
    """Realized measures of one asset plus raw covariates on the same dates."""

    asset_id: str
    realized: RealizedSeries
    covariates: Dict[str, DailySeries]

    @property
    def dates(self):
        return self.realized.dates

    @classmethod
    def from_panel(cls, panel, covariates=None):
        return cls.aligned(panel.asset_id, realized_series(panel), covariates or {})

    @classmethod
    def from_rv(cls, series: DailySeries):
        """Wrap a bare RV series; only plain-HAR style models can use it."""
        nan = np.full(len(series), np.nan)
        rs = RealizedSeries(series.asset_id, series.dates, np.asarray(series.values),
                            nan, nan, nan, nan)
        return cls(series.asset_id, rs, {})

    @classmethod
    def aligned(cls, asset_id, realized, covariates):
        """Reindex covariates on the asset's dates, rejecting any gaps."""
        dates = realized.dates
        out = {}
        for name, s in covariates.items():
            lookup = dict(zip(s.dates, s.values))
            missing = [d for d in dates if d not in lookup]
            if missing:
                raise AlignmentError(
                    f"{asset_id}: covariate {name} has no value on {len(missing)} date(s): "
                    f"{missing[:10]}", missing)
            out[name] = DailySeries(name, dates, np.array([lookup[d] for d in dates]))
        return cls(asset_id, realized, out)


# --------------------------------------------------------------------------
# model roster
# --------------------------------------------------------------------------

LINEAR_HAR = ("HAR", "HAR-X", "LogHAR", "LevHAR", "SHAR", "HARQ")
REGULARIZED = ("RR", "LA", "EN", "A-LA", "P-LA")
TREES = ("BG", "RF", "GB")
NETWORKS = tuple(f"NN{k}^{e}" for k in (1, 2, 3, 4) for e in (1, 10))
ROSTER = LINEAR_HAR + REGULARIZED + TREES + NETWORKS


def canonical_model(name):
    """Map CLI spellings (``har-x``, ``nn2_10``, ``a-la``) onto roster names."""
    key = str(name).strip().lower().replace("_", "^").replace("-", "")
    for m in ROSTER:
        if key == m.lower().replace("-", ""):
            return m
    raise ConfigError(f"unknown model {name!r}; valid models: {', '.join(ROSTER)}")


def model_family(model):
    m = canonical_model(model)
    return {"LogHAR": "loghar", "LevHAR": "levhar", "SHAR": "shar", "HARQ": "harq"}.get(m, "har")


_BASE_COLUMNS = {
    "har": ("RVD", "RVW", "RVM"),
    "loghar": ("LOG_RVD", "LOG_RVW", "LOG_RVM"),
    "levhar": ("RVD", "RVW", "RVM", "RETD_NEG", "RETW_NEG", "RETM_NEG"),
    "shar": ("RVD_NEG", "RVD_POS", "RVW", "RVM"),
    "harq": ("RVD", "RQ_RVD", "RVW", "RVM"),
}


def feature_columns(dataset, model):
    """Column names as a pure function of ``(dataset, model)``."""
    if dataset not in DATASETS:
        raise ConfigError(f"dataset must be one of {DATASETS}")
    cols = _BASE_COLUMNS[model_family(model)]
    if uses_covariates(dataset, model):
        cols = cols + COVARIATE_ORDER
    return cols


def uses_covariates(dataset, model):
    """Plain HAR stays the 3-lag benchmark in both datasets; HAR-X is its extension."""
    return dataset == "m_all" and canonical_model(model) != "HAR"


# --------------------------------------------------------------------------
# targets and matrices
# --------------------------------------------------------------------------

def build_target(rv, spec: TargetSpec, t):
    """Mean realized variance over days ``t+1 .. t+h`` (``t`` is the origin)."""
    values = rv.values if isinstance(rv, DailySeries) else np.asarray(rv, dtype=float)
    h = spec.horizon
    if t < 0 or t + h >= len(values):
        raise SizingError(f"target window {t + 1}..{t + h} exceeds the sample of {len(values)}")
    return float(np.mean(values[t + 1:t + h + 1]))


def _targets(rv, h):
    """out[t] = mean(rv[t .. t+h-1]), NaN where the window runs off the sample."""
    T = rv.shape[0]
    out = np.full(T, np.nan)
    if T >= h:
        out[:T - h + 1] = np.lib.stride_tricks.sliding_window_view(rv, h).mean(axis=1)
    return out


def _base_block(asset, fam):
    lags = lag_matrix(asset.realized)
    if fam == "har":
        cols = [lags["rvd"], lags["rvw"], lags["rvm"]]
    elif fam == "loghar":
        base = np.column_stack([lags["rvd"], lags["rvw"], lags["rvm"]])
        ok = np.isfinite(base).all(axis=1)
        if np.any(base[ok] <= 0):
            raise DataError(f"{asset.asset_id}: LogHAR needs strictly positive RV lags")
        with np.errstate(invalid="ignore", divide="ignore"):
            cols = list(np.log(base).T)
    elif fam == "levhar":
        cols = [lags["rvd"], lags["rvw"], lags["rvm"],
                lags["retd_neg"], lags["retw_neg"], lags["retm_neg"]]
    elif fam == "shar":
        cols = [lags["rvd_neg"], lags["rvd_pos"], lags["rvw"], lags["rvm"]]
    elif fam == "harq":
        cols = [lags["rvd"], lags["rq_sqrt"] * lags["rvd"], lags["rvw"], lags["rvm"]]
    else:
        raise ConfigError(fam)
    return np.column_stack(cols)


def build_features(asset: AssetData, dataset="m_har", model="HAR", target=TargetSpec(1),
                   split: Optional[DataSplit] = None, scale=True):
    """Assemble the (standardized) design matrix for one asset and model.

    The extended dataset appends the nine covariates, each observed on the
    day before the target.  Rows whose target window runs past the sample, or
    that carry NaNs after differencing, are dropped and logged.
    """
    if not isinstance(split, DataSplit):
        split = make_split(len(asset.dates), split)
    fam = model_family(model)
    names = feature_columns(dataset, model)
    T = len(asset.dates)
    block = _base_block(asset, fam)
    passthrough = [False] * block.shape[1]
    if uses_covariates(dataset, model):
        missing = [c for c in COVARIATE_ORDER if c not in asset.covariates]
        if missing:
            raise AlignmentError(f"{asset.asset_id}: missing covariates {missing}")
        cov = []
        for spec in covariate_specs(model):
            s = asset.covariates[spec.name]
            if s.dates != asset.dates:
                bad = sorted(set(s.dates) ^ set(asset.dates))
                raise AlignmentError(
                    f"{asset.asset_id}: covariate {spec.name} is not aligned "
                    f"({len(bad)} offending dates: {bad[:10]})", bad)
            v = spec.apply(s.values)
            lagged = np.concatenate([[np.nan], v[:-1]])
            cov.append(lagged)
            passthrough.append(spec.name in _BINARY)
        block = np.column_stack([block, np.column_stack(cov)])

    rv = np.asarray(asset.realized.rv, dtype=float)
    y_rv = _targets(rv, target.horizon)
    days = np.arange(T)
    keep = days >= BURN_IN
    past_end = keep & ~np.isfinite(y_rv)
    if past_end.any():
        logger.info("%s: dropped %d row(s) whose %d-day target runs past the sample",
                    asset.asset_id, int(past_end.sum()), target.horizon)
    keep &= np.isfinite(y_rv)
    bad = keep & ~np.isfinite(block).all(axis=1)
    if bad.any():
        logger.warning("%s: dropped %d row(s) with undefined transformed features",
                       asset.asset_id, int(bad.sum()))
    keep &= ~bad
    idx = days[keep]
    X = block[idx]
    y = y_rv[idx]
    log_target = fam == "loghar"
    if log_target:
        if np.any(y <= 0):
            raise DataError(f"{asset.asset_id}: LogHAR target is not strictly positive")
        y_fit = np.log(y)
    else:
        y_fit = y
    fm = FeatureMatrix(names, X, y_fit, tuple(asset.dates[i] for i in idx), idx, split,
                       passthrough=tuple(passthrough), log_target=log_target,
                       asset_id=asset.asset_id, horizon=target.horizon,
                       target_rv=y if log_target else None,
                       meta={"model": canonical_model(model), "dataset": dataset})
    return standardize(fm) if scale else fm


def har_design(rv, horizon=1):
    """Plain HAR regressors and targets straight from an RV array."""
    rv = np.asarray(rv, dtype=float)
    nan = np.full_like(rv, np.nan)
    rs = RealizedSeries("", tuple(range(rv.shape[0])), rv, nan, nan, nan, nan)
    lags = lag_matrix(rs)
    X = np.column_stack([lags["rvd"], lags["rvw"], lags["rvm"]])
    y = _targets(rv, horizon)
    ok = np.isfinite(X).all(axis=1) & np.isfinite(y)
    return X[ok], y[ok]


def features_frame(fm: FeatureMatrix):
    """Tabular export with one prefixed column per feature."""
    df = fm.to_frame()
    df.insert(0, "asset", fm.asset_id)
    df["target_rv"] = fm.realized
    return df
