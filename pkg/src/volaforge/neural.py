"""Feed-forward regression networks trained with full-batch Adam.

Hidden layers use the leaky ReLU ``x if x >= 0 else c*x`` and inverted
dropout (hidden units are kept with probability ``keep`` and rescaled by
``1/keep`` while training, so inference needs no correction).  The output
layer is linear.  Training stops early once the validation MSE has not
improved for ``patience`` epochs and the best weights are restored.

The target is standardized with its training mean and standard deviation
before fitting; forecasts are returned in the original units.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from ._rng import substream
from .errors import ConfigError, DimensionError, TrainingError
from .timeseries import FeatureMatrix

logger = logging.getLogger(__name__)

ARCHITECTURES = {1: (2,), 2: (4, 2), 3: (8, 4, 2), 4: (16, 8, 4, 2)}


@dataclass(frozen=True)
class NetworkSpec:
    hidden_layers: tuple = (4, 2)
    slope: float = 0.01
    dropout: float = 0.8
    dropout_is_keep: bool = True   # read ``dropout`` as the keep probability
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs_max: int = 500
    patience: int = 100
    seed: int = 0

    @classmethod
    def nn(cls, k, **kw):
        if k not in ARCHITECTURES:
            raise ConfigError(f"architecture NN{k} does not exist; choose 1-4")
        return cls(hidden_layers=ARCHITECTURES[k], **kw)

    @property
    def keep(self):
        return self.dropout if self.dropout_is_keep else 1.0 - self.dropout

    def validate(self):
        h = tuple(self.hidden_layers)
        if not h or any(n < 1 for n in h):
            raise ConfigError("hidden layers need at least one neuron each")
        if any(a != 2 * b for a, b in zip(h, h[1:])):
            raise ConfigError(f"layer widths {h} do not halve from layer to layer")
        if self.slope < 0:
            raise ConfigError("leaky slope must be non-negative")
        if not 0.0 < self.keep <= 1.0:
            raise ConfigError(f"keep probability {self.keep} outside (0, 1]")
        if self.epochs_max < 1 or self.patience < 0:
            raise ConfigError("epochs_max must be >= 1 and patience >= 0")


def glorot_truncated(rng, fan_in, fan_out):
    """Glorot-normal draws truncated at two standard deviations."""
    sd = np.sqrt(2.0 / (fan_in + fan_out))
    w = rng.standard_normal((fan_in, fan_out))
    bad = np.abs(w) > 2.0
    while bad.any():
        w[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(w) > 2.0
    return w * sd


def init_params(spec, n_in, rng):
    sizes = (n_in,) + tuple(spec.hidden_layers) + (1,)
    return [(glorot_truncated(rng, a, b), np.zeros(b)) for a, b in zip(sizes, sizes[1:])]


def leaky_relu(x, c=0.01):
    return np.where(x < 0.0, c * x, x)


def forward(params, X, slope=0.01, keep=1.0, rng=None, cache=False):
    """Network output for the rows of ``X``.

    With ``rng`` given, hidden activations are dropped (train mode);
    otherwise the pass is deterministic inference.
    """
    a = np.atleast_2d(np.asarray(X, dtype=float))
    if a.shape[1] != params[0][0].shape[0]:
        raise DimensionError(f"expected {params[0][0].shape[0]} inputs, got {a.shape[1]}")
    acts, pres, masks = [a], [], []
    for W, b in params[:-1]:
        z = a @ W + b
        a = np.where(z < 0.0, slope * z, z)
        if rng is not None and keep < 1.0:
            m = (rng.random(a.shape) < keep) / keep
            a = a * m
        else:
            m = None
        pres.append(z)
        masks.append(m)
        acts.append(a)
    W, b = params[-1]
    out = (a @ W + b)[:, 0]
    if cache:
        return out, (acts, pres, masks)
    return out


def loss_and_grad(params, X, y, slope=0.01, keep=1.0, rng=None):
    """Mean squared error and its gradient with respect to every parameter."""
    out, (acts, pres, masks) = forward(params, X, slope, keep, rng, cache=True)
    n = X.shape[0]
    err = out - y
    loss = float(np.mean(err ** 2))
    delta = (2.0 / n) * err[:, None]
    grads = [None] * len(params)
    for l in range(len(params) - 1, -1, -1):
        W, _ = params[l]
        grads[l] = (acts[l].T @ delta, delta.sum(axis=0))
        if l > 0:
            delta = delta @ W.T
            if masks[l - 1] is not None:
                delta = delta * masks[l - 1]
            delta = delta * np.where(pres[l - 1] < 0.0, slope, 1.0)
    return loss, grads


@dataclass(frozen=True)
class TrainedNetwork:
    spec: NetworkSpec
    params: tuple
    train_mse_history: np.ndarray
    val_mse_history: np.ndarray
    stopped_epoch: int
    best_epoch: int
    best_val_mse: float      # in standardized target units
    y_mean: float = 0.0
    y_scale: float = 1.0
    feature_names: tuple = ()

    @property
    def n_features(self):
        return self.params[0][0].shape[0]

    def predict(self, X):
        return self.y_mean + self.y_scale * forward(self.params, X, self.spec.slope)

    def to_json(self):
        return json.dumps({
            "format": "volaforge-ffn/1",
            "hidden_layers": list(self.spec.hidden_layers), "slope": self.spec.slope,
            "y_mean": self.y_mean, "y_scale": self.y_scale,
            "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in self.params],
        })

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        params = tuple((np.array(L["W"]), np.array(L["b"])) for L in d["layers"])
        spec = NetworkSpec(hidden_layers=tuple(d["hidden_layers"]), slope=d["slope"])
        return cls(spec, params, np.zeros(0), np.zeros(0), 0, 0, float("nan"),
                   d["y_mean"], d["y_scale"])


def _split_xy(data, y, Xv, yv):
    if isinstance(data, FeatureMatrix):
        X, y = data.rows("train")
        Xv, yv = data.rows("validation")
        return X, y, Xv, yv, data.column_names
    return (np.asarray(data, float), np.asarray(y, float), np.asarray(Xv, float),
            np.asarray(yv, float), ())


def train(spec: NetworkSpec, data, y=None, Xv=None, yv=None, standardize_target=True):
    """Train one network with Adam and validation early stopping."""
    spec.validate()
    X, y, Xv, yv, names = _split_xy(data, y, Xv, yv)
    if X.shape[0] == 0 or Xv.shape[0] == 0:
        raise TrainingError("training and validation rows are both required", 0)
    ym, ys = (float(y.mean()), float(y.std())) if standardize_target else (0.0, 1.0)
    constant = bool(np.all(y == y[0])) or not ys > 0
    if constant:
        ym, ys = float(y[0]), 1.0
    yt = (y - ym) / ys
    yvt = (yv - ym) / ys

    rng = substream(spec.seed, "nn", *spec.hidden_layers)
    params = init_params(spec, X.shape[1], rng)
    m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
    v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
    b1, b2, lr, eps = spec.beta1, spec.beta2, spec.learning_rate, spec.eps
    keep = spec.keep

    best = [(W.copy(), b.copy()) for W, b in params]
    best_val = np.inf
    best_epoch = 0
    since = 0
    tr_hist, va_hist = [], []
    epoch = 0
    # overflow during a diverging run is reported as a TrainingError below
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, spec.epochs_max + 1):
            loss, grads = loss_and_grad(params, X, yt, spec.slope, keep, rng if keep < 1 else None)
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}", epoch)
            c1 = 1.0 - b1 ** epoch
            c2 = 1.0 - b2 ** epoch
            new = []
            for l, ((W, b), (gW, gb)) in enumerate(zip(params, grads)):
                mW, mb = m[l]
                vW, vb = v[l]
                mW = b1 * mW + (1 - b1) * gW
                mb = b1 * mb + (1 - b1) * gb
                vW = b2 * vW + (1 - b2) * gW * gW
                vb = b2 * vb + (1 - b2) * gb * gb
                m[l] = (mW, mb)
                v[l] = (vW, vb)
                new.append((W - lr * (mW / c1) / (np.sqrt(vW / c2) + eps),
                            b - lr * (mb / c1) / (np.sqrt(vb / c2) + eps)))
            params = new
            val = float(np.mean((forward(params, Xv, spec.slope) - yvt) ** 2))
            if not np.isfinite(val):
                raise TrainingError(f"validation loss diverged at epoch {epoch}", epoch)
            tr_hist.append(loss)
            va_hist.append(val)
            if val < best_val:
                best_val, best_epoch, since = val, epoch, 0
                best = [(W.copy(), b.copy()) for W, b in params]
            else:
                since += 1
                if since > spec.patience:
                    break
    return TrainedNetwork(spec, tuple(best), np.array(tr_hist), np.array(va_hist), epoch,
                          best_epoch, best_val, ym, 0.0 if constant else ys, tuple(names))


@dataclass(frozen=True)
class SeedEnsemble:
    members: tuple          # ranked by validation MSE, ascending
    selection: int = 10
    failures: int = 0

    def __post_init__(self):
        if len(self.members) < self.selection:
            raise TrainingError(
                f"only {len(self.members)} networks trained; {self.selection} needed", 0)

    @property
    def selected(self):
        return self.members[:self.selection]

    def with_selection(self, k):
        return replace(self, selection=int(k))

    @property
    def n_features(self):
        return self.members[0].n_features

    def predict(self, X):
        return np.mean([m.predict(X) for m in self.selected], axis=0)

    def validation_mse(self, Xv, yv):
        return float(np.mean((self.predict(Xv) - yv) ** 2))


def _train_safe(spec, X, y, Xv, yv):
    try:
        return train(spec, X, y, Xv, yv)
    except TrainingError as exc:
        logger.warning("network seed %d failed: %s", spec.seed, exc)
        return None


def train_seed_ensemble(spec: NetworkSpec, data, y=None, Xv=None, yv=None, seeds=100,
                        selection=10, n_jobs=1, base_seed=0):
    """Train networks over many seeds and keep them ranked by validation MSE.

    ``seeds`` is either a count (seeds derived from ``base_seed``) or an
    explicit sequence of integers.  Ties in validation MSE are ordered by
    seed so the ranking does not depend on completion order.
    """
    X, y, Xv, yv, names = _split_xy(data, y, Xv, yv)
    if isinstance(seeds, int):
        seeds = [base_seed * 1000 + s for s in range(seeds)]
    if len(set(seeds)) != len(seeds):
        raise ConfigError("ensemble seeds must be distinct")
    specs = [replace(spec, seed=int(s)) for s in seeds]
    if n_jobs == 1:
        nets = [_train_safe(s, X, y, Xv, yv) for s in specs]
    else:
        nets = Parallel(n_jobs=n_jobs)(delayed(_train_safe)(s, X, y, Xv, yv) for s in specs)
    ok = [n for n in nets if n is not None]
    ok = [replace(n, feature_names=tuple(names)) for n in ok]
    ranked = sorted(ok, key=lambda n: (n.best_val_mse, n.spec.seed))
    return SeedEnsemble(tuple(ranked), selection, len(nets) - len(ok))
