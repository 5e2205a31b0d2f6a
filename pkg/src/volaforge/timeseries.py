"""Core data containers, sample splits and feature standardization.

All containers are frozen dataclasses whose numpy buffers are marked
read-only, so they can be handed to parallel workers without copying.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, SizingError

logger = logging.getLogger(__name__)

BURN_IN = 22
TRADING_DAYS = 252


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_dates(dates):
    dates = tuple(str(d) for d in dates)
    if len(set(dates)) != len(dates):
        raise DataError("duplicate dates")
    if any(b <= a for a, b in zip(dates, dates[1:])):
        raise DataError("dates must be strictly increasing")
    return dates


def annualized_vol_pct(rv):
    """Display conversion of daily variance to annualized volatility in percent."""
    return 100.0 * np.sqrt(TRADING_DAYS * np.asarray(rv, dtype=float))


@dataclass(frozen=True)
class IntradayPanel:
    """Intraday log-returns of one asset, one row per trading day."""

    asset_id: str
    days: tuple
    returns: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "days", _check_dates(self.days))
        r = np.asarray(self.returns, dtype=float)
        if r.ndim != 2:
            raise DataError("returns must be a 2-D array (days x n); ragged days are rejected")
        if r.shape[0] != len(self.days):
            raise DataError(f"{r.shape[0]} return rows for {len(self.days)} days")
        if r.shape[1] < 2:
            raise DataError("need at least 2 intraday returns per day")
        if not np.all(np.isfinite(r)):
            raise DataError("non-finite intraday return")
        object.__setattr__(self, "returns", _frozen(r))

    @property
    def n_per_day(self):
        return self.returns.shape[1]

    def __len__(self):
        return len(self.days)


@dataclass(frozen=True)
class DailySeries:
    asset_id: str
    dates: tuple
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", _check_dates(self.dates))
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.dates),):
            raise DataError("values and dates differ in length")
        if np.any(np.isnan(v)):
            bad = [d for d, x in zip(self.dates, v) if np.isnan(x)]
            raise DataError(f"missing values on {bad[:5]}{'...' if len(bad) > 5 else ''}")
        object.__setattr__(self, "values", _frozen(v))

    def __len__(self):
        return len(self.dates)


# --------------------------------------------------------------------------
# splits
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Percent70_10_20:
    train: float = 0.7
    test: float = 0.2

    def sizes(self, usable):
        n_train = math.floor(self.train * usable + 1e-9)
        n_test = math.floor(self.test * usable + 1e-9)
        return n_train, usable - n_train - n_test, n_test

    def __str__(self):
        return "70-10-20"


@dataclass(frozen=True)
class FixedTrain:
    train: int
    validation: int = 200

    def sizes(self, usable):
        return self.train, self.validation, usable - self.train - self.validation

    def __str__(self):
        return f"fixed-{self.train}"


def parse_scheme(text):
    """Parse ``70-10-20`` or ``fixed-1000`` into a split scheme."""
    text = str(text).strip().lower()
    if text in ("70-10-20", "percent70_10_20"):
        return Percent70_10_20()
    if text.startswith("fixed-") or text.startswith("fixedtrain"):
        digits = "".join(ch for ch in text if ch.isdigit())
        return FixedTrain(int(digits))
    raise ValueError(f"unknown split scheme {text!r}")


@dataclass(frozen=True)
class DataSplit:
    """Contiguous train / validation / test ranges over day indices.

    Index ``t`` refers to the day whose realized variance is the (first)
    forecast target; the first ``BURN_IN`` days only feed lags.
    """

    train_range: range
    validation_range: range
    test_range: range

    def __post_init__(self):
        a, b, c = self.train_range, self.validation_range, self.test_range
        if not (a.stop == b.start and b.stop == c.start):
            raise SizingError("split ranges must be contiguous")
        if a.start < BURN_IN:
            raise SizingError("training range overlaps the lag burn-in")
        if min(len(a), len(b), len(c)) <= 0:
            raise SizingError("every split segment needs at least one row")

    @property
    def lengths(self):
        return len(self.train_range), len(self.validation_range), len(self.test_range)

    def segment(self, t):
        if t in self.train_range:
            return "train"
        if t in self.validation_range:
            return "validation"
        if t in self.test_range:
            return "test"
        return None


def make_split(total_days, scheme=None):
    """Split ``total_days`` into train/validation/test after a 22-day burn-in.

    ``Percent70_10_20`` floors the train and test shares and hands the
    remainder to validation, which gives 2964/424/847 on 4257 days.
    ``FixedTrain(k)`` uses ``k`` training and 200 validation days and tests
    on whatever remains.
    """
    scheme = scheme or Percent70_10_20()
    if isinstance(scheme, str):
        scheme = parse_scheme(scheme)
    if total_days < 30:
        raise SizingError(f"{total_days} days is below the minimum of 30")
    usable = total_days - BURN_IN
    n_tr, n_va, n_te = scheme.sizes(usable)
    if min(n_tr, n_va, n_te) <= 0:
        raise SizingError(
            f"scheme {scheme} on {total_days} days leaves segments {n_tr}/{n_va}/{n_te}")
    s0 = BURN_IN
    return DataSplit(range(s0, s0 + n_tr), range(s0 + n_tr, s0 + n_tr + n_va),
                     range(s0 + n_tr + n_va, s0 + usable))


# --------------------------------------------------------------------------
# feature matrices
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureMatrix:
    """Design matrix with named columns, one row per forecast target day.

    ``day_index[i]`` is the day of the first forecast target of row ``i``;
    every feature of that row is measurable at the close of the day before.
    ``mean``/``std`` are set once the matrix has been standardized.
    """

    column_names: tuple
    X: np.ndarray
    y: np.ndarray
    dates: tuple
    day_index: np.ndarray
    split: DataSplit
    passthrough: tuple = ()
    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None
    log_target: bool = False
    asset_id: str = ""
    horizon: int = 1
    target_rv: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.column_names):
            raise DataError("X shape does not match column names")
        n = X.shape[0]
        if len(self.y) != n or len(self.dates) != n or len(self.day_index) != n:
            raise DataError("row count mismatch between X, y, dates and day_index")
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(self.y))
        object.__setattr__(self, "day_index", _frozen(self.day_index, dtype=np.int64))
        if not self.passthrough:
            object.__setattr__(self, "passthrough", (False,) * X.shape[1])
        if self.target_rv is not None:
            object.__setattr__(self, "target_rv", _frozen(self.target_rv))
        if self.mean is not None:
            object.__setattr__(self, "mean", _frozen(self.mean))
            object.__setattr__(self, "std", _frozen(self.std))

    @property
    def n_features(self):
        return self.X.shape[1]

    @property
    def realized(self):
        """Target in variance units (differs from ``y`` for log models)."""
        return self.y if self.target_rv is None else self.target_rv

    @property
    def standardized(self):
        return self.mean is not None

    def mask(self, segment):
        rng = {"train": self.split.train_range, "validation": self.split.validation_range,
               "test": self.split.test_range}[segment]
        return (self.day_index >= rng.start) & (self.day_index < rng.stop)

    def rows(self, segment):
        m = self.mask(segment)
        return self.X[m], self.y[m]

    def positions(self, segment):
        return np.flatnonzero(self.mask(segment))

    def transform(self, raw):
        """Scale raw feature rows with the stored training statistics."""
        raw = np.asarray(raw, dtype=float)
        if self.mean is None:
            return raw
        return (raw - self.mean) / self.std

    def to_frame(self):
        df = pd.DataFrame(self.X, columns=list(self.column_names))
        df.insert(0, "date", list(self.dates))
        df["target"] = self.y
        df["segment"] = [self.split.segment(int(t)) for t in self.day_index]
        return df


def standardize(fm):
    """Standardize columns with training-row mean and (population) std.

    Constant training columns and passthrough (binary) columns are left
    unscaled with mean 0 and std 1 recorded.
    """
    if fm.standardized:
        return fm
    Xtr, _ = fm.rows("train")
    if Xtr.shape[0] == 0:
        raise SizingError("no training rows to standardize with")
    mean = Xtr.mean(axis=0)
    std = Xtr.std(axis=0)
    for j, name in enumerate(fm.column_names):
        if fm.passthrough[j] or std[j] <= 1e-12 * max(1.0, abs(mean[j])):
            if not fm.passthrough[j]:
                logger.warning("column %s is constant on the training rows; left unscaled", name)
            mean[j], std[j] = 0.0, 1.0
    X = (fm.X - mean) / std
    return replace(fm, X=X, mean=mean, std=std)


def inverse_standardize(fm):
    if not fm.standardized:
        return fm
    X = fm.X * fm.std + fm.mean
    return replace(fm, X=X, mean=None, std=None)


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------

def read_intraday_csv(path, asset_id=None):
    """Read a ``date,r1,...,rn`` file into an :class:`IntradayPanel`."""
    df = pd.read_csv(path, dtype={"date": str}, comment="#", float_precision="round_trip")
    cols = list(df.columns)
    expected = ["date"] + [f"r{j}" for j in range(1, len(cols))]
    if cols != expected:
        raise DataError(f"{path}: header must be date,r1,...,rn; got {cols[:4]}...")
    if df.isna().any().any():
        raise DataError(f"{path}: missing intraday returns (ragged days are rejected)")
    asset_id = asset_id or str(path)
    return IntradayPanel(asset_id, tuple(df["date"]), df[cols[1:]].to_numpy(float))


def write_intraday_csv(panel, path):
    cols = [f"r{j}" for j in range(1, panel.n_per_day + 1)]
    df = pd.DataFrame(panel.returns, columns=cols)
    df.insert(0, "date", list(panel.days))
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def read_daily_csv(path, asset_id=""):
    df = pd.read_csv(path, dtype={"date": str}, comment="#", float_precision="round_trip")
    if list(df.columns) != ["date", "value"]:
        raise DataError(f"{path}: header must be date,value")
    if df["value"].isna().any():
        bad = list(df.loc[df["value"].isna(), "date"])
        raise DataError(f"{path}: missing values on {bad[:5]}")
    return DailySeries(asset_id, tuple(df["date"]), df["value"].to_numpy(float))


def write_daily_csv(series, path):
    pd.DataFrame({"date": list(series.dates), "value": series.values}).to_csv(
        path, index=False, float_format="%.17g", lineterminator="\n")
