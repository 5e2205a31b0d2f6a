"""Accumulated local effects and an ALE-based variable importance.

For feature ``j`` the training values are cut into ``K`` intervals holding
(about) equally many observations, with edges ``z_0 < ... < z_K`` where
``z_0`` sits just below the minimum.  Within each interval the prediction
difference between moving ``z_j`` to the right and to the left edge is
averaged over the rows that fall there, and these local effects are summed
from left to right.  The curve is evaluated at any ``z`` by the value at
the right edge of the interval containing ``z``.

The model is only touched through ``predict``, so the same code serves
linear fits, tree ensembles and networks.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DataError

logger = logging.getLogger(__name__)

EPS_FRACTION = 1e-9


@dataclass(frozen=True)
class AleCurve:
    feature: str
    edges: np.ndarray          # z_0 .. z_K
    local_effects: np.ndarray  # per interval, length K
    uncentered: np.ndarray     # per edge, uncentered[0] == 0
    centered: np.ndarray       # per edge
    counts: np.ndarray         # rows per interval, length K
    constant: bool = False

    @property
    def K(self):
        return self.local_effects.shape[0]

    def bin_index(self, z):
        """Interval (1..K) containing each ``z``; values beyond the range are clamped."""
        z = np.asarray(z, dtype=float)
        k = np.searchsorted(self.edges, z, side="left")
        return np.clip(k, 1, max(self.K, 1))

    def __call__(self, z):
        """Centered curve with right-edge step evaluation."""
        if self.constant:
            return np.zeros(np.shape(z))
        return self.centered[self.bin_index(z)]

    def to_frame(self, clip=None):
        df = pd.DataFrame({"feature": self.feature, "z": self.edges, "ale": self.centered})
        if clip is not None:
            df = df[(df["z"] >= -clip) & (df["z"] <= clip)]
        return df


def _edges(x, K):
    lo, hi = float(x.min()), float(x.max())
    eps = EPS_FRACTION * (hi - lo)
    inner = np.quantile(x, np.arange(1, K) / K)
    edges = np.concatenate([[lo - eps], inner, [hi]])
    edges = np.unique(edges)  # collapse ties; sorted
    return edges


def ale_estimate(model, X, j, K=100, feature_name=None):
    """First-order ALE of column ``j`` of the training matrix ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("ALE needs a 2-D training matrix with at least two rows")
    name = feature_name if feature_name is not None else f"x{j}"
    x = X[:, j]
    T0 = x.shape[0]
    if np.ptp(x) == 0.0:
        logger.warning("feature %s is constant; its ALE is identically zero", name)
        e = np.array([x[0], x[0]])
        return AleCurve(name, e, np.zeros(1), np.zeros(2), np.zeros(2),
                        np.array([T0]), constant=True)
    distinct = np.unique(x).size
    if distinct < K + 1:
        logger.info("feature %s has %d distinct values; using %d intervals", name,
                    distinct, distinct - 1)
        K = distinct - 1
    edges = _edges(x, K)
    K = edges.shape[0] - 1
    k = np.clip(np.searchsorted(edges, x, side="left"), 1, K)
    hi = X.copy()
    lo = X.copy()
    hi[:, j] = edges[k]
    lo[:, j] = edges[k - 1]
    diff = np.asarray(model.predict(hi), float) - np.asarray(model.predict(lo), float)
    counts = np.bincount(k, minlength=K + 1)[1:]
    sums = np.bincount(k, weights=diff, minlength=K + 1)[1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        local = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    unc = np.concatenate([[0.0], np.cumsum(local)])
    centered = unc - np.sum(counts * unc[1:]) / T0
    return AleCurve(name, edges, local, unc, centered, counts)


def ale_curves(model, X, names=None, K=100):
    names = names or [f"x{j}" for j in range(X.shape[1])]
    return [ale_estimate(model, X, j, K, names[j]) for j in range(X.shape[1])]


@dataclass(frozen=True)
class ViScore:
    features: tuple
    importance: np.ndarray
    vi: np.ndarray

    def to_frame(self):
        df = pd.DataFrame({"feature": self.features, "importance": self.importance,
                           "vi": self.vi})
        return df.sort_values("vi", ascending=False, kind="mergesort")


def variable_importance(curves, X):
    """Standard deviation of each centered curve over the training points,
    normalized to sum to one."""
    X = np.asarray(X, dtype=float)
    T0 = X.shape[0]
    imp = np.array([np.sqrt(np.sum(c(X[:, j]) ** 2) / (T0 - 1))
                    for j, c in enumerate(curves)])
    total = imp.sum()
    if not total > 0:
        logger.warning("all ALE curves are flat; variable importance set uniform")
        vi = np.full(len(curves), 1.0 / len(curves))
    else:
        vi = imp / total
    return ViScore(tuple(c.feature for c in curves), imp, vi)
