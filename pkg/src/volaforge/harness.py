"""Out-of-sample forecasting: windows, validation tuning and sanitation.

Three window policies are used:

* ``rolling-merged`` (HAR family, bagging, random forest): training and
  validation rows form one estimation window that slides one day at a time.
* ``rolling-tuned`` (penalized regressions, gradient boosting): a training
  window and the validation window right after it slide together; the
  hyperparameters are re-selected on the validation window at every refit
  and the forecast comes from the fit on the training window.
* ``fixed`` (networks): trained once on the initial training sample with
  early stopping on the validation sample.

For a forecast of the row whose target starts on day ``p`` with horizon
``h``, only rows whose targets end by day ``p - 1`` can enter estimation,
i.e. rows with first target day at most ``p - h``.
"""

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from . import linear, neural, trees
from ._rng import subseed
from .errors import ConfigError, VolaforgeError
from .features import (LINEAR_HAR, NETWORKS, REGULARIZED, TREES, AssetData, TargetSpec,
                       build_features, canonical_model)
from .timeseries import DataSplit, FeatureMatrix, make_split

logger = logging.getLogger(__name__)

FORECAST_COLUMNS = ["asset", "model", "date", "horizon", "forecast", "realized"]


# --------------------------------------------------------------------------
# grids and configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TuningGrid:
    n_lambda: int = 1000
    lambda_min: float = 1e-5
    lambda_max: float = 1e2
    n_alpha: int = 10
    gb_depths: tuple = trees.GB_DEPTHS
    gb_trees: tuple = trees.GB_TREES
    gb_rates: tuple = trees.GB_RATES

    @property
    def lambdas(self):
        """Points spaced evenly in log(lambda), ascending."""
        return np.geomspace(self.lambda_min, self.lambda_max, self.n_lambda)

    @property
    def alphas(self):
        return np.linspace(0.0, 1.0, self.n_alpha)

    def validate(self):
        if self.n_lambda < 1 or self.n_alpha < 1:
            raise ConfigError("tuning grid is empty")
        if not 0 < self.lambda_min <= self.lambda_max:
            raise ConfigError("lambda range must satisfy 0 < min <= max")
        if not (self.gb_depths and self.gb_trees and self.gb_rates):
            raise ConfigError("gradient boosting grid is empty")


@dataclass(frozen=True)
class HarnessConfig:
    grid: TuningGrid = TuningGrid()
    forest_trees: int = 500
    min_node_size: int = 5
    gb_min_node_size: int = 5
    nn_seeds: int = 100
    nn_select: int = 10
    nn_epochs: int = 500
    nn_patience: int = 100
    nn_dropout: float = 0.8
    nn_dropout_is_keep: bool = True
    nn_learning_rate: float = 1e-3
    refit_every: int = 1
    seed: int = 0
    n_jobs: int = 1


WINDOW_POLICY = {m: "rolling-merged" for m in LINEAR_HAR + ("BG", "RF")}
WINDOW_POLICY.update({m: "rolling-tuned" for m in REGULARIZED + ("GB",)})
WINDOW_POLICY.update({m: "fixed" for m in NETWORKS})


def feature_model(model):
    """Which column set a model reads: HAR variants their own, the rest HAR-X's."""
    m = canonical_model(model)
    return m if m in LINEAR_HAR else "HAR-X"


# --------------------------------------------------------------------------
# fitted handle
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FittedModel:
    """Uniform wrapper; ``predict`` returns variance-scale forecasts."""

    model_id: str
    estimator: object
    log_space: bool = False
    residual_variance: float = 0.0
    hyperparameters: dict = field(default_factory=dict)

    @property
    def n_features(self):
        return self.estimator.n_features

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        f = np.asarray(self.estimator.predict(X), dtype=float)
        if self.log_space:
            return np.exp(f + 0.5 * self.residual_variance)
        return f


# --------------------------------------------------------------------------
# sanitation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainStats:
    min: float
    max: float
    mean: float

    @classmethod
    def of(cls, y):
        y = np.asarray(y, dtype=float)
        return cls(float(y.min()), float(y.max()), float(y.mean()))


def sanitize_forecast(model_id, raw, stats: TrainStats):
    """Replace implausible forecasts.

    Negative or non-finite forecasts become the in-sample minimum.  HARQ
    forecasts outside the in-sample range become the in-sample mean.
    """
    raw = float(raw)
    if canonical_model(model_id) == "HARQ":
        if not np.isfinite(raw) or raw < stats.min or raw > stats.max:
            return stats.mean
        return raw
    if not np.isfinite(raw) or raw < 0.0:
        return stats.min
    return raw


# --------------------------------------------------------------------------
# tuning
# --------------------------------------------------------------------------

def _argmin_strongest(mse, strength):
    """Index of the minimum, ties resolved toward the largest ``strength``."""
    mse = np.asarray(mse, dtype=float)
    best = np.nanmin(mse)
    tie = np.flatnonzero(mse <= best + 1e-12 * max(abs(best), 1e-300))
    keys = [strength[i] for i in tie]
    return int(tie[max(range(len(tie)), key=lambda k: keys[k])])


@dataclass(frozen=True)
class TuneResult:
    hyperparameters: dict
    validation_mse: float
    fitted: object


def tune(model_id, X, y, Xv, yv, grid: TuningGrid = TuningGrid(), names=(), cfg=None):
    """Select hyperparameters by validation MSE over the model's grid.

    The estimator returned in ``fitted`` is the one trained on ``X, y`` only.
    """
    m = canonical_model(model_id)
    grid.validate()
    if len(yv) < 30:
        raise ConfigError(f"validation window of {len(yv)} rows is below 30")
    lams = grid.lambdas
    if m in ("RR", "LA", "EN"):
        alphas = {"RR": [1.0], "LA": [0.0], "EN": list(grid.alphas)}[m]
        cells = []
        for a in alphas:
            if a == 1.0:
                coefs, mse, prob = _ridge_path(X, y, Xv, yv, lams)
            else:
                coefs, mse, prob = linear.en_path(X, y, Xv, yv, lams, a)
            for i, lam in enumerate(lams):
                cells.append((mse[i], (lam, a), coefs[i], prob))
        k = _argmin_strongest([c[0] for c in cells], [c[1] for c in cells])
        mse, (lam, a), b, prob = cells[k]
        kind = {"RR": "ridge", "LA": "lasso", "EN": "elastic-net"}[m]
        fit = linear.from_scaled(prob, b, {"kind": kind, "lam": lam, "alpha": a}, names,
                                 X=X, y=y)
        return TuneResult({"lam": float(lam), "alpha": float(a)}, float(mse), fit)
    if m in ("A-LA", "P-LA"):
        if m == "A-LA":
            coefs, mse, prob, _ = linear.adaptive_path(X, y, Xv, yv, lams)
        else:
            coefs, mse, prob = linear.post_lasso_path(X, y, Xv, yv, lams)
        k = _argmin_strongest(mse, list(lams))
        kind = "adaptive" if m == "A-LA" else "post-lasso"
        fit = linear.from_scaled(prob, coefs[k], {"kind": kind, "lam": float(lams[k])},
                                 names, X=X, y=y)
        return TuneResult({"lam": float(lams[k])}, float(mse[k]), fit)
    if m == "GB":
        cfg = cfg or HarnessConfig()
        cells = []
        for d in grid.gb_depths:
            for lr in grid.gb_rates:
                ens = trees.fit_gradient_boosting(X, y, trees=max(grid.gb_trees), depth=d,
                                                  learning_rate=lr,
                                                  min_node_size=cfg.gb_min_node_size)
                staged = ens.staged_predict(Xv, grid.gb_trees)
                for n in grid.gb_trees:
                    mse = float(np.mean((staged[n] - yv) ** 2))
                    # stronger regularization: fewer trees, shallower, slower
                    cells.append((mse, (-n, -d, -lr), ens, n, d, lr))
        k = _argmin_strongest([c[0] for c in cells], [c[1] for c in cells])
        mse, _, ens, n, d, lr = cells[k]
        return TuneResult({"trees": n, "depth": d, "learning_rate": lr}, mse, ens.truncate(n))
    raise ConfigError(f"model {m} has no tuning grid")


def _ridge_path(X, y, Xv, yv, lams):
    prob = linear._Scaled.build(X, y)
    Gv, cv, yv2 = linear._validation_blocks(prob, Xv, yv)
    evals, V = np.linalg.eigh(prob.G)
    ct = V.T @ prob.c
    coefs = np.array([V @ (ct / (evals + lam)) for lam in lams])
    mse = yv2 - 2 * coefs @ cv + np.einsum("ij,jk,ik->i", coefs, Gv, coefs)
    return coefs, mse * prob.y_scale ** 2, prob


# --------------------------------------------------------------------------
# single fits
# --------------------------------------------------------------------------

def fit_window(model_id, X, y, cfg: HarnessConfig, seed, names=(), log_space=False,
               Xv=None, yv=None):
    """Fit one model on one estimation window (validation rows for tuned models)."""
    m = canonical_model(model_id)
    if m in LINEAR_HAR:
        fit = linear.fit_ols(X, y)
        fit = linear.LinearFit(fit.intercept, fit.weights, fit.penalty, fit.residual_variance,
                               tuple(names), log_space)
        return FittedModel(m, fit, log_space, fit.residual_variance)
    if m == "BG":
        est = trees.fit_bagging(X, y, trees=cfg.forest_trees, min_node_size=cfg.min_node_size,
                                seed=seed)
        return FittedModel(m, est)
    if m == "RF":
        est = trees.fit_random_forest(X, y, trees=cfg.forest_trees,
                                      min_node_size=cfg.min_node_size, seed=seed)
        return FittedModel(m, est, hyperparameters={"feature_split": est.feature_split})
    if m in REGULARIZED or m == "GB":
        res = tune(m, X, y, Xv, yv, cfg.grid, names, cfg)
        return FittedModel(m, res.fitted, hyperparameters=res.hyperparameters)
    raise ConfigError(f"{m} is not a window-fitted model")


def network_spec(model_id, cfg: HarnessConfig):
    m = canonical_model(model_id)
    k = int(m[2])
    return neural.NetworkSpec.nn(k, dropout=cfg.nn_dropout,
                                 dropout_is_keep=cfg.nn_dropout_is_keep,
                                 learning_rate=cfg.nn_learning_rate,
                                 epochs_max=cfg.nn_epochs, patience=cfg.nn_patience)


def network_selection(model_id):
    return int(canonical_model(model_id).split("^")[1])


# --------------------------------------------------------------------------
# rolling forecasts
# --------------------------------------------------------------------------

def _rows_between(day_index, lo, hi):
    """Row positions with ``lo <= day <= hi``."""
    a = np.searchsorted(day_index, lo, side="left")
    b = np.searchsorted(day_index, hi, side="right")
    return np.arange(a, b)


def _check_window(day_index, rows, p, h):
    if rows.size and day_index[rows[-1]] + h - 1 >= p:
        raise AssertionError(f"estimation row with target day {day_index[rows[-1]]} "
                             f"overlaps forecast day {p}")


@dataclass
class CellResult:
    asset: str
    model: str
    frame: pd.DataFrame
    error: Optional[str] = None
    windows: list = field(default_factory=list)
    last_fit: Optional[FittedModel] = None
    seconds: float = 0.0


def forecast_cell(fm: FeatureMatrix, model_id, cfg: HarnessConfig = HarnessConfig(),
                  ensemble_cache=None, trace=False):
    """Test-range forecasts of one model for one asset's feature matrix."""
    t0 = time.perf_counter()
    m = canonical_model(model_id)
    policy = WINDOW_POLICY[m]
    h = fm.horizon
    day = fm.day_index
    test = fm.positions("test")
    realized = fm.realized
    n_tr, n_va, _ = fm.split.lengths
    forecasts = np.full(test.size, np.nan)
    windows = []
    fitted = None
    stats = None

    if policy == "fixed":
        tr = fm.positions("train")
        va = fm.positions("validation")
        va = va[day[va] + h - 1 < fm.split.test_range.start]
        key = (fm.asset_id, m[:3])
        ens = None if ensemble_cache is None else ensemble_cache.get(key)
        if ens is None:
            spec = network_spec(m, cfg)
            ens = neural.train_seed_ensemble(
                spec, fm.X[tr], fm.y[tr], fm.X[va], fm.y[va], seeds=cfg.nn_seeds,
                selection=min(cfg.nn_select, cfg.nn_seeds),
                base_seed=subseed(cfg.seed, fm.asset_id, m[:3]) % 100_000)
            if ensemble_cache is not None:
                ensemble_cache[key] = ens
        ens = ens.with_selection(min(network_selection(m), len(ens.members)))
        fitted = FittedModel(m, ens)
        stats = TrainStats.of(realized[np.concatenate([tr, va])])
        raw = fitted.predict(fm.X[test])
        forecasts = np.array([sanitize_forecast(m, r, stats) for r in raw])
        windows.append((int(day[tr[0]]), int(day[va[-1]])))
    else:
        W = n_tr + n_va
        for step, i in enumerate(test):
            p = int(day[i])
            if fitted is None or step % cfg.refit_every == 0:
                last = p - h
                seed = subseed(cfg.seed, fm.asset_id, m, step)
                if policy == "rolling-merged":
                    rows = _rows_between(day, last - W + 1, last)
                    _check_window(day, rows, p, h)
                    fitted = fit_window(m, fm.X[rows], fm.y[rows], cfg, seed, fm.column_names,
                                        fm.log_target)
                    stats = TrainStats.of(realized[rows])
                    windows.append((int(day[rows[0]]), int(day[rows[-1]])))
                else:
                    va = _rows_between(day, last - n_va + 1, last)
                    tr = _rows_between(day, last - n_va - n_tr + 1, last - n_va)
                    _check_window(day, va, p, h)
                    fitted = fit_window(m, fm.X[tr], fm.y[tr], cfg, seed, fm.column_names,
                                        Xv=fm.X[va], yv=fm.y[va])
                    stats = TrainStats.of(realized[tr])
                    windows.append((int(day[tr[0]]), int(day[va[-1]])))
            forecasts[step] = sanitize_forecast(m, fitted.predict(fm.X[i])[0], stats)

    frame = pd.DataFrame({
        "asset": fm.asset_id, "model": m, "date": [fm.dates[i] for i in test],
        "horizon": h, "forecast": forecasts, "realized": realized[test],
    })
    return CellResult(fm.asset_id, m, frame, windows=windows if trace else [],
                      last_fit=fitted, seconds=time.perf_counter() - t0)


def _asset_cells(asset, models, dataset, target, split, cfg, trace):
    out = []
    cache = {}
    matrices = {}
    for model in models:
        m = canonical_model(model)
        try:
            fkey = feature_model(m)
            if fkey not in matrices:
                matrices[fkey] = build_features(asset, dataset, fkey, target, split)
            out.append(forecast_cell(matrices[fkey], m, cfg, cache, trace))
        except (VolaforgeError, np.linalg.LinAlgError, ValueError) as exc:
            logger.error("%s/%s failed: %s", asset.asset_id, m, exc)
            out.append(CellResult(asset.asset_id, m, pd.DataFrame(columns=FORECAST_COLUMNS),
                                  error=str(exc)))
    return out


def _missing_rows(cell, template):
    frame = template.copy()
    frame["model"] = cell.model
    frame["forecast"] = np.nan
    return frame


def run_forecasts(assets: Sequence[AssetData], models, dataset="m_har", horizon=1,
                  split=None, cfg: HarnessConfig = HarnessConfig(), trace=False):
    """Forecast every test day for every (asset, model) pair.

    A failing cell is logged and kept as rows with a missing forecast so the
    table always holds one row per (asset, model, test date).  Returns
    ``(table, cells)``.
    """
    target = horizon if isinstance(horizon, TargetSpec) else TargetSpec.named(horizon)
    models = [canonical_model(m) for m in models]

    def split_for(a):
        return split if isinstance(split, DataSplit) else make_split(len(a.dates), split)

    jobs = [(a, models, dataset, target, split_for(a), cfg, trace) for a in assets]
    if cfg.n_jobs == 1 or len(jobs) == 1:
        nested = [_asset_cells(*j) for j in jobs]
    else:
        nested = Parallel(n_jobs=cfg.n_jobs)(delayed(_asset_cells)(*j) for j in jobs)
    cells = [c for group in nested for c in group]
    frames = []
    for group in nested:
        ok = [c for c in group if c.error is None]
        template = ok[0].frame[FORECAST_COLUMNS] if ok else None
        for c in group:
            if c.error is None:
                frames.append(c.frame)
            elif template is not None:
                frames.append(_missing_rows(c, template))
    table = (pd.concat(frames, ignore_index=True) if frames
             else pd.DataFrame(columns=FORECAST_COLUMNS))
    return table[FORECAST_COLUMNS], cells


def in_sample_fit(fm: FeatureMatrix, model_id, cfg: HarnessConfig = HarnessConfig()):
    """Model estimated on the initial train(+validation) sample, for diagnostics."""
    m = canonical_model(model_id)
    policy = WINDOW_POLICY[m]
    tr = fm.positions("train")
    va = fm.positions("validation")
    if policy == "rolling-merged":
        rows = np.concatenate([tr, va])
        return fit_window(m, fm.X[rows], fm.y[rows], cfg, subseed(cfg.seed, "insample", m),
                          fm.column_names, fm.log_target)
    if policy == "rolling-tuned":
        return fit_window(m, fm.X[tr], fm.y[tr], cfg, 0, fm.column_names,
                          Xv=fm.X[va], yv=fm.y[va])
    return forecast_cell(fm, m, cfg).last_fit
