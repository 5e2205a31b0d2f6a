"""Regression trees, bagging, random forests and gradient boosting.

Trees are grown with an exact greedy search: every midpoint between
consecutive distinct values of every candidate feature is tried and the
split with the largest reduction in squared error wins.  Ties go to the
lowest feature index, then the lowest threshold.  Rows with ``x <= threshold``
are routed left.

A fitted tree is a set of flat node arrays (``feature < 0`` marks a leaf);
ensembles concatenate those arrays so prediction runs in one compiled loop.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np
from joblib import Parallel, delayed

from ._rng import substream, subseed
from .errors import ConfigError, DataError, DimensionError
from .timeseries import FeatureMatrix

logger = logging.getLogger(__name__)

GB_DEPTHS = (1, 2)
GB_TREES = tuple(range(50, 501, 50))
GB_RATES = (0.01, 0.1)


# --------------------------------------------------------------------------
# growing
# --------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _grow(X, y, sample, min_node, max_depth, mtry, seed):
    n = sample.shape[0]
    J = X.shape[1]
    cap = 2 * n + 1
    feat = np.full(cap, -1, np.int64)
    thr = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, np.int64)
    depth = np.zeros(cap, np.int64)
    if mtry < J:
        np.random.seed(seed)

    # node -> slice of ``order`` holding its rows (sample positions, ascending)
    order = np.arange(n)
    lo = np.zeros(cap, np.int64)
    hi = np.zeros(cap, np.int64)
    hi[0] = n
    stack = np.empty(cap, np.int64)
    top = 0
    stack[top] = 0
    top += 1
    n_nodes = 1
    cand = np.arange(J)
    buf = np.empty(n, np.int64)

    while top > 0:
        top -= 1
        node = stack[top]
        a = lo[node]
        b = hi[node]
        m = b - a
        s = 0.0
        for i in range(a, b):
            s += y[sample[order[i]]]
        value[node] = s / m
        count[node] = m
        if m < 2 * min_node or (max_depth >= 0 and depth[node] >= max_depth):
            continue
        sse = 0.0
        mu = s / m
        y0 = y[sample[order[a]]]
        same = True
        for i in range(a, b):
            yi = y[sample[order[i]]]
            d = yi - mu
            sse += d * d
            if yi != y0:
                same = False
        if same or sse <= 0.0:
            continue

        if mtry < J:
            for k in range(J):
                cand[k] = k
            for k in range(mtry):
                r = k + np.random.randint(0, J - k)
                tmp = cand[k]
                cand[k] = cand[r]
                cand[r] = tmp
            feats = np.sort(cand[:mtry])
        else:
            feats = np.arange(J)

        parent = s * s / m
        best_gain = 1e-12 * sse
        best_f = -1
        best_t = 0.0
        rows = np.empty(m, np.int64)
        for i in range(m):
            rows[i] = sample[order[a + i]]
        for f in feats:
            vals = X[rows, f]
            o = np.argsort(vals, kind="mergesort")
            sl = 0.0
            for i in range(1, m):
                sl += y[rows[o[i - 1]]]
                if i < min_node or m - i < min_node:
                    continue
                v0 = vals[o[i - 1]]
                v1 = vals[o[i]]
                if not v0 < v1:
                    continue
                sr = s - sl
                gain = sl * sl / i + sr * sr / (m - i) - parent
                if gain > best_gain:
                    t = 0.5 * (v0 + v1)
                    if not t < v1:
                        t = v0
                    best_gain = gain
                    best_f = f
                    best_t = t
        if best_f < 0:
            continue

        # stable partition of the node's rows
        nl = 0
        for i in range(a, b):
            if X[sample[order[i]], best_f] <= best_t:
                nl += 1
        il = a
        ir = a + nl
        for i in range(a, b):
            if X[sample[order[i]], best_f] <= best_t:
                buf[il - a] = order[i]
                il += 1
            else:
                buf[ir - a] = order[i]
                ir += 1
        for i in range(m):
            order[a + i] = buf[i]

        feat[node] = best_f
        thr[node] = best_t
        L = n_nodes
        R = n_nodes + 1
        n_nodes += 2
        left[node] = L
        right[node] = R
        lo[L] = a
        hi[L] = a + nl
        lo[R] = a + nl
        hi[R] = b
        depth[L] = depth[node] + 1
        depth[R] = depth[node] + 1
        stack[top] = R
        top += 1
        stack[top] = L
        top += 1

    return (feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], count[:n_nodes])


@numba.njit(cache=True, nogil=True)
def _route(feat, thr, left, right, X, offset):
    out = np.empty(X.shape[0], np.int64)
    for i in range(X.shape[0]):
        k = offset
        while feat[k] >= 0:
            if X[i, feat[k]] <= thr[k]:
                k = offset + left[k]
            else:
                k = offset + right[k]
        out[i] = k - offset
    return out


@numba.njit(cache=True, nogil=True)
def _predict_flat(feat, thr, left, right, value, offsets, X):
    """Row-wise sums of member predictions, trees taken in stored order."""
    n = X.shape[0]
    out = np.zeros(n)
    for t in range(offsets.shape[0]):
        off = offsets[t]
        for i in range(n):
            k = off
            while feat[k] >= 0:
                if X[i, feat[k]] <= thr[k]:
                    k = off + left[k]
                else:
                    k = off + right[k]
            out[i] += value[k]
    return out


# --------------------------------------------------------------------------
# containers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RegressionTree:
    feature: np.ndarray    # split feature per node, -1 for leaves
    threshold: np.ndarray
    left: np.ndarray       # child node ids (relative), -1 for leaves
    right: np.ndarray
    value: np.ndarray      # leaf mean (internal nodes keep their node mean)
    count: np.ndarray      # training rows reaching each node
    min_node_size: int = 1
    feature_names: tuple = ()

    @classmethod
    def from_nodes(cls, nodes, feature_names=()):
        """Build from ``[(feature, threshold, left, right, value, count), ...]``."""
        cols = list(zip(*nodes))
        return cls(np.array(cols[0], np.int64), np.array(cols[1], float),
                   np.array(cols[2], np.int64), np.array(cols[3], np.int64),
                   np.array(cols[4], float), np.array(cols[5], np.int64),
                   feature_names=tuple(feature_names))

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    @property
    def n_features_in(self):
        used = self.feature[self.feature >= 0]
        return int(used.max()) + 1 if used.size else 0

    @property
    def leaves(self):
        return np.flatnonzero(self.feature < 0)

    def apply(self, X):
        """Leaf id reached by every row."""
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        return _route(self.feature, self.threshold, self.left, self.right, X, 0)

    def predict(self, X):
        return self.value[self.apply(X)]

    def depth(self):
        d = np.zeros(self.n_nodes, np.int64)
        for k in range(self.n_nodes):
            if self.feature[k] >= 0:
                d[self.left[k]] = d[self.right[k]] = d[k] + 1
        return int(d.max())

    def dump(self, scale=None):
        """Indented text rendering: split rules, row counts and leaf values."""
        names = self.feature_names
        lines = []

        def label(j):
            return names[j] if j < len(names) else f"x{j}"

        def walk(k, indent):
            pad = "  " * indent
            v = self.value[k] if scale is None else scale(self.value[k])
            if self.feature[k] < 0:
                lines.append(f"{pad}leaf n={self.count[k]} value={v:.6g}")
                return
            lines.append(f"{pad}{label(self.feature[k])} <= {self.threshold[k]:.6g} "
                         f"(n={self.count[k]})")
            walk(self.left[k], indent + 1)
            lines.append(f"{pad}{label(self.feature[k])} > {self.threshold[k]:.6g}")
            walk(self.right[k], indent + 1)

        walk(0, 0)
        return "\n".join(lines)


def _xy(data, y=None):
    if isinstance(data, FeatureMatrix):
        X, yy = data.rows("train")
        return np.ascontiguousarray(X), np.asarray(yy, float), data.column_names
    X = np.ascontiguousarray(np.asarray(data, dtype=float))
    if X.ndim == 1:
        X = X[:, None]
    return X, np.asarray(y, dtype=float), ()


def _fit_tree(X, y, sample, min_node_size, max_depth, mtry, seed, names):
    parts = _grow(X, y, sample, int(min_node_size),
                  -1 if max_depth is None else int(max_depth), int(mtry), int(seed))
    return RegressionTree(*parts, min_node_size=int(min_node_size), feature_names=names)


def fit_cart(data, y=None, min_node_size=5, max_depth=None, feature_subset=None, seed=0,
             sample=None):
    """Grow one regression tree.

    ``feature_subset`` draws that many candidate features at every split
    (random forest); ``sample`` is an optional array of row indices (with
    repeats) defining the training sample, e.g. a bootstrap draw.
    """
    X, y, names = _xy(data, y)
    if X.shape[0] == 0:
        raise DataError("cannot grow a tree on empty data")
    if X.shape[0] != y.shape[0]:
        raise DimensionError("X and y differ in length")
    J = X.shape[1]
    mtry = J if feature_subset is None else int(feature_subset)
    if not 1 <= mtry <= J:
        raise ConfigError(f"feature subset {mtry} outside [1, {J}]")
    if min_node_size < 1:
        raise ConfigError("min_node_size must be >= 1")
    sample = np.arange(X.shape[0]) if sample is None else np.asarray(sample, np.int64)
    return _fit_tree(X, y, sample, min_node_size, max_depth, mtry, seed, names)


@dataclass(frozen=True)
class TreeEnsemble:
    """Averaging (bagging / random forest) or additive (boosting) ensemble."""

    kind: str                   # bagging | random-forest | gradient-boosting
    trees: tuple
    learning_rate: float = 1.0
    init: float = 0.0
    feature_split: Optional[int] = None
    seeds: tuple = ()
    feature_names: tuple = ()
    n_features: int = 0

    def __post_init__(self):
        feats, thrs, lefts, rights, vals, offs = [], [], [], [], [], []
        off = 0
        for t in self.trees:
            feats.append(t.feature)
            thrs.append(t.threshold)
            lefts.append(t.left)
            rights.append(t.right)
            vals.append(t.value)
            offs.append(off)
            off += t.n_nodes
        cat = (lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt))
        object.__setattr__(self, "_flat", (cat(feats, np.int64), cat(thrs, float),
                                           cat(lefts, np.int64), cat(rights, np.int64),
                                           cat(vals, float), np.array(offs, np.int64)))

    def _sum(self, X, upto=None):
        f, t, l, r, v, offs = self._flat
        if upto is not None:
            offs = offs[:upto]
        return _predict_flat(f, t, l, r, v, offs, X)

    def predict(self, X):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        if self.n_features and X.shape[1] != self.n_features:
            raise DimensionError(f"expected {self.n_features} features, got {X.shape[1]}")
        if self.kind == "gradient-boosting":
            return self.init + self.learning_rate * self._sum(X)
        if not self.trees:
            return np.full(X.shape[0], self.init)
        return self._sum(X) / len(self.trees)

    def staged_predict(self, X, stages):
        """Boosting predictions truncated after each count in ``stages``."""
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        return {s: self.init + self.learning_rate * self._sum(X, s) for s in stages}

    def truncate(self, n_trees):
        return TreeEnsemble(self.kind, self.trees[:n_trees], self.learning_rate, self.init,
                            self.feature_split, self.seeds[:n_trees], self.feature_names,
                            self.n_features)

    def member_predictions(self, X):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        return np.array([t.predict(X) for t in self.trees])


def _forest(kind, X, y, names, trees, min_node_size, mtry, seed, bootstrap, n_jobs):
    T = X.shape[0]
    seeds = tuple(subseed(seed, kind, b) for b in range(trees))

    def one(b):
        sample = (substream(seed, kind, "bootstrap", b).integers(0, T, T)
                  if bootstrap else np.arange(T))
        return _fit_tree(X, y, sample, min_node_size, None, mtry, seeds[b], names)

    if n_jobs == 1 or trees < 8:
        members = [one(b) for b in range(trees)]
    else:
        members = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(one)(b)
                                                            for b in range(trees))
    return TreeEnsemble(kind, tuple(members), feature_split=mtry, seeds=seeds,
                        feature_names=names, n_features=X.shape[1])


def fit_bagging(data, y=None, trees=500, min_node_size=5, seed=0, bootstrap=True, n_jobs=1):
    """Average of full-feature trees grown on i.i.d. bootstrap resamples."""
    X, y, names = _xy(data, y)
    if trees < 1:
        raise ConfigError("need at least one tree")
    return _forest("bagging", X, y, names, trees, min_node_size, X.shape[1], seed,
                   bootstrap, n_jobs)


def default_feature_split(J):
    return max(1, J // 3)


def fit_random_forest(data, y=None, trees=500, min_node_size=5, feature_split=None, seed=0,
                      bootstrap=True, n_jobs=1):
    """Bagging with a random subset of ``feature_split`` candidates per split.

    The bootstrap draws depend only on ``seed``, so with ``feature_split = J``
    the forest reproduces :func:`fit_bagging` tree for tree.
    """
    X, y, names = _xy(data, y)
    J = X.shape[1]
    mtry = default_feature_split(J) if feature_split is None else int(feature_split)
    if not 1 <= mtry <= J:
        raise ConfigError(f"feature_split {mtry} outside [1, {J}]")
    ens = _forest("bagging", X, y, names, trees, min_node_size, mtry, seed, bootstrap, n_jobs)
    return TreeEnsemble("random-forest", ens.trees, feature_split=mtry, seeds=ens.seeds,
                        feature_names=names, n_features=J)


def fit_gradient_boosting(data, y=None, trees=100, depth=1, learning_rate=0.1,
                          min_node_size=5, return_history=False):
    """Least-squares boosting of depth-capped trees from the sample mean.

    Each stage fits a tree to the current residuals; its leaf values are the
    mean residuals, scaled by ``learning_rate`` when added to the fit.
    """
    X, y, names = _xy(data, y)
    if trees < 0:
        raise ConfigError("trees must be non-negative")
    init = float(np.mean(y))
    F = np.full(y.shape[0], init)
    members = []
    history = [float(np.mean((y - F) ** 2))]
    sample = np.arange(X.shape[0])
    for _ in range(trees):
        tree = _fit_tree(X, y - F, sample, min_node_size, depth, X.shape[1], 0, names)
        F = F + learning_rate * tree.predict(X)
        members.append(tree)
        history.append(float(np.mean((y - F) ** 2)))
    ens = TreeEnsemble("gradient-boosting", tuple(members), float(learning_rate), init,
                       feature_names=names, n_features=X.shape[1])
    return (ens, np.array(history)) if return_history else ens


def predict_ensemble(ensemble, row):
    row = np.asarray(row, dtype=float)
    if row.ndim != 1:
        raise DimensionError("predict_ensemble expects a single feature vector")
    return float(ensemble.predict(row[None, :])[0])


def gb_grid():
    return [(d, n, lr) for d in GB_DEPTHS for n in GB_TREES for lr in GB_RATES]
