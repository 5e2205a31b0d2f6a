"""Least squares, ridge, elastic net, adaptive lasso and post lasso.

Penalized fits minimize

    (1/T) * sum (y_t - b0 - x_t'b)^2 + lam * (alpha * sum b_j^2 + (1 - alpha) * sum w_j |b_j|)

so ``alpha = 1`` is ridge and ``alpha = 0`` is the lasso.  This is the
reverse of the glmnet/scikit-learn convention, where alpha weights the l1
term.  The intercept is never penalized.

Internally every penalized problem is solved on centered features and a
centered target divided by its standard deviation.  Features are expected
to be standardized already, so this makes the tuning grid for ``lam``
dimensionless: at ``lam = 100`` every penalty on the grid shrinks the slopes
to (essentially) zero whatever the units of the realized variance.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from .errors import ConvergenceError, DimensionError, SingularityError
from .timeseries import FeatureMatrix

logger = logging.getLogger(__name__)

CD_TOL = 1e-10
CD_MAX_SWEEPS = 100_000
ZERO_WEIGHT_PENALTY = 1e12


@dataclass(frozen=True)
class LinearFit:
    intercept: float
    weights: np.ndarray
    penalty: dict
    residual_variance: float = 0.0
    feature_names: tuple = ()
    log_space: bool = False
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_features(self):
        return self.weights.shape[0]

    def predict(self, X):
        """Linear index ``b0 + X b`` (log scale for log-space fits)."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DimensionError(f"expected {self.n_features} features, got {X.shape[1]}")
        return self.intercept + X @ self.weights

    def with_residual_variance(self, s2):
        return LinearFit(self.intercept, self.weights, self.penalty, float(s2),
                         self.feature_names, self.log_space, self.diagnostics)

    def to_json(self):
        names = self.feature_names or tuple(f"x{j}" for j in range(self.n_features))
        return json.dumps({"intercept": self.intercept,
                           "weights": dict(zip(names, self.weights.tolist())),
                           "penalty": self.penalty}, sort_keys=True)


def predict_linear(fit: LinearFit, row, log_space=None):
    """Forecast for one row; log-space fits are mapped back with the
    lognormal correction ``exp(f + s2 / 2)``."""
    row = np.asarray(row, dtype=float)
    if row.ndim != 1 or row.shape[0] != fit.n_features:
        raise DimensionError(f"row has shape {row.shape}, expected ({fit.n_features},)")
    f = float(fit.intercept + row @ fit.weights)
    if fit.log_space if log_space is None else log_space:
        return float(np.exp(f + 0.5 * fit.residual_variance))
    return f


# --------------------------------------------------------------------------
# problem preparation
# --------------------------------------------------------------------------

def _xy(data, y=None):
    if isinstance(data, FeatureMatrix):
        X, yy = data.rows("train")
        return X, yy, data.column_names, data.log_target
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X, np.asarray(y, dtype=float), (), False


@dataclass(frozen=True)
class _Scaled:
    """Gram form of a centered, target-scaled least-squares problem."""

    G: np.ndarray
    c: np.ndarray
    x_mean: np.ndarray
    y_mean: float
    y_scale: float
    n: int

    @classmethod
    def build(cls, X, y):
        n = X.shape[0]
        xm = X.mean(axis=0)
        ym = float(y.mean())
        sy = float(y.std())
        if not sy > 0:
            sy = 1.0
        Xc = X - xm
        yc = (y - ym) / sy
        return cls(Xc.T @ Xc / n, Xc.T @ yc / n, xm, ym, sy, n)

    def unscale(self, b):
        w = b * self.y_scale
        return float(self.y_mean - self.x_mean @ w), w


def _finish(prob, b, penalty, names, log_space, X, y, diagnostics=None):
    b0, w = prob.unscale(b)
    resid = y - b0 - X @ w
    return LinearFit(b0, w, penalty, float(np.mean(resid ** 2)), tuple(names), log_space,
                     diagnostics or {})


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------

def fit_ols(data, y=None, jitter_fallback=True):
    """Least squares with an explicit intercept.

    A rank-deficient design is refit with a tiny ridge jitter (logged) unless
    ``jitter_fallback`` is false, in which case :class:`SingularityError` is
    raised.
    """
    X, y, names, log_space = _xy(data, y)
    n, J = X.shape
    if n < J + 1:
        raise SingularityError(f"{n} rows cannot identify {J} slopes and an intercept")
    if J == 0:
        return LinearFit(float(y.mean()), np.zeros(0), {"kind": "none"}, float(y.var()),
                         names, log_space)
    prob = _Scaled.build(X, y)
    scale = np.sqrt(np.maximum(np.diag(prob.G), 1e-300))
    Gs = prob.G / np.outer(scale, scale)
    cond = np.linalg.cond(Gs)
    if not np.isfinite(cond) or cond > 1e12:
        if not jitter_fallback:
            raise SingularityError(f"design is rank deficient (condition number {cond:.3g})")
        logger.warning("rank-deficient design (cond %.3g); using a ridge jitter", cond)
        b = np.linalg.solve(prob.G + 1e-10 * np.trace(prob.G) / J * np.eye(J), prob.c)
    else:
        b = np.linalg.solve(prob.G, prob.c)
    return _finish(prob, b, {"kind": "none"}, names, log_space, X, y)


def fit_ridge(data, lam, y=None):
    if lam < 0:
        raise ValueError("lam must be non-negative")
    X, y, names, log_space = _xy(data, y)
    if lam == 0:
        fit = fit_ols(X, y)
        return LinearFit(fit.intercept, fit.weights, {"kind": "ridge", "lam": 0.0},
                         fit.residual_variance, names, log_space)
    prob = _Scaled.build(X, y)
    J = X.shape[1]
    b = np.linalg.solve(prob.G + lam * np.eye(J), prob.c)
    return _finish(prob, b, {"kind": "ridge", "lam": float(lam)}, names, log_space, X, y)


# --------------------------------------------------------------------------
# coordinate descent
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def _cd(G, c, l2, l1, b, tol, max_sweeps):
    """Cyclic coordinate descent on the Gram form.

    Minimizes b'Gb - 2c'b + l2 * |b|^2 + sum l1_j |b_j| in place and returns
    (sweeps, last max change).
    """
    J = c.shape[0]
    delta = 0.0
    for sweep in range(1, max_sweeps + 1):
        delta = 0.0
        for j in range(J):
            rho = c[j]
            for k in range(J):
                if k != j:
                    rho -= G[j, k] * b[k]
            denom = G[j, j] + l2
            thr = 0.5 * l1[j]
            if denom <= 0.0:
                new = 0.0
            elif rho > thr:
                new = (rho - thr) / denom
            elif rho < -thr:
                new = (rho + thr) / denom
            else:
                new = 0.0
            d = abs(new - b[j])
            if d > delta:
                delta = d
            b[j] = new
        if delta < tol:
            return sweep, delta
    return max_sweeps, delta


@numba.njit(cache=True)
def _cd_path(G, c, lams, alpha, w, tol, max_sweeps, Gv, cv, yv2):
    """Warm-started path over ``lams`` (descending).  Returns coefficients,
    validation MSE (from validation Gram blocks) and a convergence flag."""
    J = c.shape[0]
    L = lams.shape[0]
    coefs = np.zeros((L, J))
    mse = np.empty(L)
    ok = True
    b = np.zeros(J)
    l1 = np.empty(J)
    for i in range(L):
        for j in range(J):
            l1[j] = lams[i] * (1.0 - alpha) * w[j]
        sweeps, delta = _cd(G, c, lams[i] * alpha, l1, b, tol, max_sweeps)
        if delta >= tol:
            ok = False
        coefs[i] = b
        quad = 0.0
        lin = 0.0
        for j in range(J):
            lin += cv[j] * b[j]
            for k in range(J):
                quad += Gv[j, k] * b[j] * b[k]
        mse[i] = yv2 - 2.0 * lin + quad
    return coefs, mse, ok


def _run_cd(prob, lam, alpha, w, warm=None, tol=CD_TOL, max_sweeps=CD_MAX_SWEEPS):
    J = prob.c.shape[0]
    b = np.zeros(J) if warm is None else np.array(warm, dtype=float)
    l1 = lam * (1.0 - alpha) * np.asarray(w, dtype=float)
    sweeps, delta = _cd(prob.G, prob.c, lam * alpha, l1, b, tol, max_sweeps)
    if delta >= tol:
        raise ConvergenceError(
            f"coordinate descent did not converge in {max_sweeps} sweeps",
            {"sweeps": sweeps, "max_change": delta, "lam": lam, "alpha": alpha})
    return _polish(prob.G, prob.c, lam * alpha, l1, b), {"sweeps": int(sweeps),
                                                        "max_change": float(delta)}


def _polish(G, c, l2, l1, b):
    """Solve the stationarity equations on the support found by descent.

    Coordinate descent converges linearly, slowly on correlated designs; once
    the active set and signs are known the optimum is a linear solve.  The
    solve is kept only if it reproduces the signs and the inactive
    coordinates still satisfy their subgradient bound.
    """
    S = np.flatnonzero(b)
    if S.size == 0:
        return b
    s = np.sign(b[S])
    A = G[np.ix_(S, S)] + l2 * np.eye(S.size)
    try:
        bS = np.linalg.solve(A, c[S] - 0.5 * l1[S] * s)
    except np.linalg.LinAlgError:
        return b
    if np.any(np.sign(bS) != s):
        return b
    out = np.zeros_like(b)
    out[S] = bS
    off = np.setdiff1d(np.arange(b.size), S)
    if off.size:
        slack = np.abs(c[off] - G[off][:, S] @ bS) - 0.5 * l1[off]
        if np.any(slack > 1e-12 * max(1.0, np.abs(c).max())):
            return b
    return out


def fit_elastic_net(data, lam, alpha, y=None, penalty_weights=None, warm=None,
                    tol=CD_TOL, max_sweeps=CD_MAX_SWEEPS):
    """Elastic net by cyclic coordinate descent with soft thresholding."""
    if lam < 0 or not 0.0 <= alpha <= 1.0:
        raise ValueError("need lam >= 0 and alpha in [0, 1]")
    X, y, names, log_space = _xy(data, y)
    prob = _Scaled.build(X, y)
    J = X.shape[1]
    w = np.ones(J) if penalty_weights is None else np.asarray(penalty_weights, dtype=float)
    b, diag = _run_cd(prob, lam, alpha, w, warm, tol, max_sweeps)
    pen = {"kind": "elastic-net", "lam": float(lam), "alpha": float(alpha)}
    if penalty_weights is not None:
        pen = {"kind": "adaptive", "lam": float(lam), "weights": w.tolist()}
    diag["scaled_coef"] = b
    return _finish(prob, b, pen, names, log_space, X, y, diag)


def fit_lasso(data, lam, y=None, **kw):
    return fit_elastic_net(data, lam, 0.0, y=y, **kw)


def adaptive_weights(first_stage_scaled):
    """Reciprocal absolute first-stage slopes; ~zero slopes get a huge weight."""
    a = np.abs(np.asarray(first_stage_scaled, dtype=float))
    return np.where(a < 1e-12, ZERO_WEIGHT_PENALTY, 1.0 / np.maximum(a, 1e-300))


def _scaled_ols(prob):
    J = prob.c.shape[0]
    try:
        return np.linalg.solve(prob.G, prob.c)
    except np.linalg.LinAlgError:
        return np.linalg.solve(prob.G + 1e-10 * np.eye(J), prob.c)


def fit_adaptive_lasso(data, lam, y=None, **kw):
    """Unrestricted first stage, then a lasso with weights 1/|b_first|."""
    X, y, names, log_space = _xy(data, y)
    prob = _Scaled.build(X, y)
    w = adaptive_weights(_scaled_ols(prob))
    b, diag = _run_cd(prob, lam, 0.0, w, **kw)
    diag["scaled_coef"] = b
    return _finish(prob, b, {"kind": "adaptive", "lam": float(lam), "weights": w.tolist()},
                   names, log_space, X, y, diag)


def _ols_on_support(prob, support):
    J = prob.c.shape[0]
    b = np.zeros(J)
    idx = np.flatnonzero(support)
    if idx.size:
        sub = prob.G[np.ix_(idx, idx)]
        try:
            b[idx] = np.linalg.solve(sub, prob.c[idx])
        except np.linalg.LinAlgError:
            b[idx] = np.linalg.lstsq(sub, prob.c[idx], rcond=None)[0]
    return b


def fit_post_lasso(data, lam, y=None, **kw):
    """Lasso selection followed by least squares on the surviving columns."""
    X, y, names, log_space = _xy(data, y)
    prob = _Scaled.build(X, y)
    b1, diag = _run_cd(prob, lam, 0.0, np.ones(X.shape[1]), **kw)
    support = b1 != 0.0
    if not support.any():
        logger.info("post lasso at lam=%g selected no columns; intercept-only model", lam)
    b = _ols_on_support(prob, support)
    diag["support"] = support.tolist()
    return _finish(prob, b, {"kind": "post-lasso", "lam": float(lam)}, names, log_space,
                   X, y, diag)


def kkt_residual(fit: LinearFit, X, y, lam, alpha, penalty_weights=None):
    """Largest violation of the subgradient optimality conditions.

    Measured on the internal (centered, target-scaled) problem where the
    coordinate-descent tolerance applies.
    """
    X = np.asarray(X, dtype=float)
    prob = _Scaled.build(X, np.asarray(y, dtype=float))
    b = fit.weights / prob.y_scale
    J = b.shape[0]
    w = np.ones(J) if penalty_weights is None else np.asarray(penalty_weights, dtype=float)
    grad = 2.0 * (prob.G @ b - prob.c) + 2.0 * lam * alpha * b
    l1 = lam * (1.0 - alpha) * w
    active = b != 0.0
    viol = np.where(active, np.abs(grad + l1 * np.sign(b)),
                    np.maximum(np.abs(grad) - l1, 0.0))
    return float(viol.max()) if J else 0.0


def penalized_objective(b0, b, X, y, lam, alpha, penalty_weights=None):
    """Mean squared error plus the elastic-net penalty, in the units of ``y``."""
    r = y - b0 - X @ b
    w = np.ones_like(b) if penalty_weights is None else penalty_weights
    return float(np.mean(r ** 2) + lam * (alpha * np.sum(b ** 2)
                                          + (1 - alpha) * np.sum(w * np.abs(b))))


# --------------------------------------------------------------------------
# paths for validation tuning
# --------------------------------------------------------------------------

def _validation_blocks(prob, Xv, yv):
    Xc = Xv - prob.x_mean
    yc = (yv - prob.y_mean) / prob.y_scale
    n = Xv.shape[0]
    return Xc.T @ Xc / n, Xc.T @ yc / n, float(yc @ yc / n)


def en_path(X, y, Xv, yv, lams, alpha, penalty_weights=None, tol=CD_TOL,
            max_sweeps=CD_MAX_SWEEPS):
    """Fit the whole ``lams`` grid with warm starts (largest first).

    Returns ``(coefs, val_mse)`` aligned with ``lams`` as given, coefficients
    in the units of the original features and validation MSE in units of ``y``.
    """
    prob = _Scaled.build(X, y)
    lams = np.asarray(lams, dtype=float)
    order = np.argsort(-lams, kind="stable")
    w = np.ones(X.shape[1]) if penalty_weights is None else np.asarray(penalty_weights, float)
    Gv, cv, yv2 = _validation_blocks(prob, Xv, yv)
    coefs, mse, ok = _cd_path(prob.G, prob.c, lams[order], float(alpha), w, tol, max_sweeps,
                              Gv, cv, yv2)
    if not ok:
        raise ConvergenceError("coordinate descent path did not converge",
                               {"alpha": alpha, "max_sweeps": max_sweeps})
    out_c = np.empty_like(coefs)
    out_m = np.empty_like(mse)
    out_c[order] = coefs
    out_m[order] = mse
    return out_c, out_m * prob.y_scale ** 2, prob


def adaptive_path(X, y, Xv, yv, lams, **kw):
    prob = _Scaled.build(X, y)
    w = adaptive_weights(_scaled_ols(prob))
    return en_path(X, y, Xv, yv, lams, 0.0, penalty_weights=w, **kw) + (w,)


def post_lasso_path(X, y, Xv, yv, lams, **kw):
    coefs, _, prob = en_path(X, y, Xv, yv, lams, 0.0, **kw)
    Gv, cv, yv2 = _validation_blocks(prob, Xv, yv)
    cache = {}
    out = np.empty_like(coefs)
    mse = np.empty(coefs.shape[0])
    for i, b1 in enumerate(coefs):
        key = tuple(b1 != 0.0)
        if key not in cache:
            b = _ols_on_support(prob, np.array(key, dtype=bool))
            cache[key] = (b, yv2 - 2 * cv @ b + b @ Gv @ b)
        out[i], mse[i] = cache[key]
    return out, mse * prob.y_scale ** 2, prob


def from_scaled(prob, b, penalty, names=(), log_space=False, X=None, y=None):
    """Turn an internal coefficient vector back into a :class:`LinearFit`."""
    if X is None:
        b0, w = prob.unscale(b)
        return LinearFit(b0, w, penalty, 0.0, tuple(names), log_space)
    return _finish(prob, b, penalty, names, log_space, X, y)


# --------------------------------------------------------------------------
# reporting
# --------------------------------------------------------------------------

def ols_summary(X, y, names=()):
    """Coefficients with heteroskedasticity-robust (White) t-statistics."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Z = np.column_stack([np.ones(X.shape[0]), X])
    beta, *_ = np.linalg.lstsq(Z, y, rcond=None)
    e = y - Z @ beta
    bread = np.linalg.inv(Z.T @ Z)
    meat = (Z * e[:, None] ** 2).T @ Z
    se = np.sqrt(np.diag(bread @ meat @ bread))
    labels = ("const",) + tuple(names or (f"x{j}" for j in range(X.shape[1])))
    r2 = 1.0 - e @ e / np.sum((y - y.mean()) ** 2)
    return {"names": labels, "coef": beta, "se": se, "t": beta / se, "r2": float(r2)}
