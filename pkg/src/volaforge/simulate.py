"""Synthetic data with known ground truth.

Two generators live here: an Euler discretization of a jump-diffusion
log-price with square-root stochastic variance (intraday returns plus the
exact discretized quadratic variation), and a direct HAR recursion for
coefficient-recovery experiments.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numba
import numpy as np

from ._rng import substream
from .errors import ConfigError
from .timeseries import DailySeries, IntradayPanel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConstantVol:
    sigma: float  # per sqrt(day)


@dataclass(frozen=True)
class SquareRootVol:
    """dv = kappa (theta - v) dt + xi sqrt(v) dB, time in days."""

    kappa: float
    theta: float
    xi: float
    rho: float = 0.0
    v0: Optional[float] = None


@dataclass(frozen=True)
class JumpSpec:
    intensity: float = 0.0  # expected jumps per day
    size_std: float = 0.0


@dataclass(frozen=True)
class SimConfig:
    days: int
    n_per_day: int = 78
    mu: float = 0.0
    vol_model: Union[ConstantVol, SquareRootVol] = ConstantVol(0.01)
    jump: JumpSpec = JumpSpec()
    seed: int = 0
    start_date: str = "2001-01-29"
    # (day, interval, size) triples, added on top of the Poisson jumps
    forced_jumps: tuple = ()

    def validate(self):
        if self.days < 1 or self.n_per_day < 2:
            raise ConfigError("need days >= 1 and n_per_day >= 2")
        vm = self.vol_model
        if isinstance(vm, ConstantVol):
            if vm.sigma < 0:
                raise ConfigError("sigma must be non-negative")
        elif isinstance(vm, SquareRootVol):
            if min(vm.kappa, vm.theta, vm.xi) < 0:
                raise ConfigError("kappa, theta and xi must be non-negative")
            if not -1.0 <= vm.rho <= 1.0:
                raise ConfigError("rho must lie in [-1, 1]")
        else:
            raise ConfigError(f"unknown vol model {vm!r}")
        if self.jump.intensity < 0 or self.jump.size_std < 0:
            raise ConfigError("jump intensity and size std must be non-negative")
        for d, j, _ in self.forced_jumps:
            if not (0 <= d < self.days and 0 <= j < self.n_per_day):
                raise ConfigError(f"forced jump at ({d}, {j}) is outside the grid")


@dataclass(frozen=True)
class SimTruth:
    qv: np.ndarray          # exact discretized quadratic variation per day
    spot_close: np.ndarray  # spot variance at each day's close


@numba.njit(cache=True)
def _sqrt_variance_path(v0, kappa, theta, xi, dt, z):
    """Full-truncation Euler path; returns v+ at the start of each step."""
    n = z.shape[0]
    vplus = np.empty(n)
    v = v0
    sq = np.sqrt(dt)
    for k in range(n):
        vp = v if v > 0.0 else 0.0
        vplus[k] = vp
        v = v + kappa * (theta - vp) * dt + xi * np.sqrt(vp) * sq * z[k]
    return vplus, (v if v > 0.0 else 0.0)


def trading_dates(n, start="2001-01-29"):
    """ISO dates of ``n`` consecutive weekdays (no holiday calendar)."""
    days = np.busday_offset(np.datetime64(start, "D"), np.arange(n), roll="forward")
    return tuple(np.datetime_as_string(days, unit="D"))


def simulate_paths(cfg: SimConfig, asset_id="SIM", path_index=0):
    """Simulate one asset; returns ``(IntradayPanel, SimTruth)``.

    The random stream is derived from ``(cfg.seed, path_index)`` so paths of a
    multi-asset run are independent and individually reproducible.
    """
    cfg.validate()
    rng = substream(cfg.seed, "paths", path_index)
    D, n = cfg.days, cfg.n_per_day
    dt = 1.0 / n
    z1 = rng.standard_normal((D, n))
    vm = cfg.vol_model
    if isinstance(vm, ConstantVol):
        var = np.full((D, n), vm.sigma ** 2)
        spot_close = np.full(D, vm.sigma ** 2)
    else:
        z2 = rng.standard_normal((D, n))
        zv = vm.rho * z1 + np.sqrt(1.0 - vm.rho ** 2) * z2
        v0 = vm.theta if vm.v0 is None else vm.v0
        vplus, v_end = _sqrt_variance_path(v0, vm.kappa, vm.theta, vm.xi, dt, zv.ravel())
        var = vplus.reshape(D, n)
        # variance entering the first step of the next day = close of this day
        spot_close = np.append(var[1:, 0], v_end)

    jumps = np.zeros((D, n))
    if cfg.jump.intensity > 0:
        counts = rng.poisson(cfg.jump.intensity * dt, size=(D, n))
        hit = counts > 0
        # a sum of k N(0, s^2) sizes is N(0, k s^2)
        jumps[hit] = rng.standard_normal(hit.sum()) * cfg.jump.size_std * np.sqrt(counts[hit])
    for d, j, size in cfg.forced_jumps:
        jumps[d, j] += size

    returns = cfg.mu * dt + np.sqrt(var * dt) * z1 + jumps
    qv = np.sum(var * dt, axis=1) + np.sum(jumps ** 2, axis=1)
    panel = IntradayPanel(asset_id, trading_dates(D, cfg.start_date), returns)
    return panel, SimTruth(qv=qv, spot_close=spot_close)


# --------------------------------------------------------------------------
# direct HAR process
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class HarGenConfig:
    betas: tuple = (0.1, 0.5, 0.3, 0.1)
    noise_std: float = 0.1
    days: int = 1000
    seed: int = 0
    warmup: int = 500

    def validate(self):
        if len(self.betas) != 4:
            raise ConfigError("betas must be (b0, b_day, b_week, b_month)")
        b0, b1, b2, b3 = self.betas
        if b1 + b2 + b3 >= 1.0:
            raise ConfigError(f"explosive HAR: b1+b2+b3 = {b1 + b2 + b3:.4f} >= 1")
        if self.noise_std < 0 or self.days < 1:
            raise ConfigError("noise_std must be >= 0 and days >= 1")


def generate_har_series(cfg: HarGenConfig, asset_id="HAR"):
    """Iterate the HAR recursion with positivity-truncated Gaussian shocks.

    Starts at the unconditional mean ``b0 / (1 - b1 - b2 - b3)`` and drops
    ``cfg.warmup`` days.  A shock is redrawn whenever it would push the series
    to a non-positive value.
    """
    cfg.validate()
    b0, b1, b2, b3 = (float(b) for b in cfg.betas)
    rng = substream(cfg.seed, "har")
    total = cfg.days + cfg.warmup
    mean = b0 / (1.0 - b1 - b2 - b3)
    x = np.empty(total + 22)
    x[:22] = mean
    z = rng.standard_normal(total) * cfg.noise_std
    s5 = 5 * mean
    s22 = 22 * mean
    redraws = 0
    for i in range(total):
        t = i + 22
        m = b0 + b1 * x[t - 1] + b2 * s5 / 5.0 + b3 * s22 / 22.0
        u = z[i]
        while cfg.noise_std > 0 and m + u <= 0.0:
            u = rng.standard_normal() * cfg.noise_std
            redraws += 1
        x[t] = m + u
        s5 += x[t] - x[t - 5]
        s22 += x[t] - x[t - 22]
    if redraws:
        logger.info("generate_har_series redrew %d shocks to keep the series positive", redraws)
    values = x[22 + cfg.warmup:]
    return DailySeries(asset_id, trading_dates(cfg.days), values)


# --------------------------------------------------------------------------
# covariates for the extended dataset
# --------------------------------------------------------------------------

def _ar1(rng, n, phi, sd, mean=0.0):
    e = rng.standard_normal(n) * sd
    out = np.empty(n)
    prev = 0.0
    for i in range(n):
        prev = phi * prev + e[i]
        out[i] = mean + prev
    return out


def simulate_covariates(truth: SimTruth, ret_oc, dates, seed=0, asset_index=0, market=None):
    """Synthetic stand-ins for the nine exogenous predictors.

    ``IV`` is a noisy annualized transform of the spot variance at the close,
    so it carries real information about the next day's variance; ``M1W`` is
    the trailing 5-day return in percent.  The macro series (VIX, EPU, US3M,
    HSI, ADS) are drawn from a stream keyed only by ``seed`` so they are
    identical across assets unless ``market`` is supplied.
    """
    n = len(dates)
    rng = substream(seed, "covariates", asset_index)
    mrng = substream(seed, "macro")
    spot = np.maximum(truth.spot_close, 1e-12)
    iv = 100 * np.sqrt(252 * spot) * np.exp(0.08 * rng.standard_normal(n))
    ea = np.zeros(n)
    ea[int(rng.integers(0, 63))::63] = 1.0
    ret_pct = 100 * np.asarray(ret_oc)
    m1w = np.convolve(ret_pct, np.ones(5), mode="full")[:n]
    dvol = np.exp(17.0 + _ar1(rng, n, 0.7, 0.25) + 0.3 * np.log(spot / spot.mean()))
    if market is None:
        vix_base = np.exp(np.log(19.0) + _ar1(mrng, n, 0.98, 0.06))
        market = {
            "VIX": vix_base,
            "EPU": np.exp(np.log(90.0) + _ar1(mrng, n, 0.8, 0.35)),
            "US3M": 150 + np.cumsum(np.round(mrng.standard_normal(n) * 3)),
            "HSI": (mrng.standard_normal(n) * 0.014) ** 2,
            "ADS": _ar1(mrng, n, 0.97, 0.12, mean=-0.2),
        }
    cov = {"IV": iv, "EA": ea, "M1W": m1w, "$VOL": dvol}
    cov.update(market)
    return {k: DailySeries(k, dates, v) for k, v in cov.items()}
