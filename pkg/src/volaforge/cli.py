"""Command-line entry point.

Subcommands mirror the pipeline stages::

    volaforge simulate --config demo.toml --out data/
    volaforge features --asset data/intraday/SIM01.csv --dataset m_all --out features.csv
    volaforge forecast --config demo.toml --out forecasts.csv
    volaforge evaluate --forecasts forecasts.csv --out results/
    volaforge ale --config demo.toml --out results/ale
    volaforge var --forecasts forecasts.csv --asset data/intraday/*.csv --out var.csv
    volaforge run --config demo.toml

Every CSV starts with a ``# volaforge config_hash=... seed=...`` line.
Failures print one JSON object on stderr; configuration problems exit
with status 2, other errors with status 1.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import ale as ale_mod
from . import evaluation, risk
from ._rng import subseed
from .config import RunConfig, SimSection, load_config
from .errors import ConfigError, DataError, VolaforgeError
from .features import (COVARIATE_ORDER, NETWORKS, AssetData, TargetSpec, build_features,
                       canonical_model, features_frame)
from .harness import feature_model, in_sample_fit, run_forecasts
from .realized import realized_series
from .simulate import JumpSpec, SimConfig, SquareRootVol, simulate_covariates, simulate_paths
from .timeseries import read_daily_csv, read_intraday_csv

logger = logging.getLogger("volaforge")

EXIT_CONFIG = 2
EXIT_FAILURE = 1


def covariate_file(name):
    """File stem of a covariate (``$VOL`` is not filesystem friendly)."""
    return name.replace("$", "D")


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------

def header_line(config_hash, seed):
    return f"# volaforge config_hash={config_hash} seed={seed}\n"


def write_csv(df: pd.DataFrame, path, config_hash, seed, index=False):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(header_line(config_hash, seed))
        df.to_csv(fh, index=index, float_format="%.17g", lineterminator="\n")
    logger.info("wrote %s (%d rows)", path, len(df))


def read_header(path):
    """``(config_hash, seed)`` from a file written by :func:`write_csv`, if present."""
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# volaforge"):
        return None, None
    kv = dict(tok.split("=", 1) for tok in first[1:].split() if "=" in tok)
    return kv.get("config_hash"), kv.get("seed")


def derived_hash(*parts):
    blob = json.dumps(parts, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# data
# --------------------------------------------------------------------------

def load_assets(files, covariates_dir=None, dataset="m_har"):
    """Intraday CSVs (asset id = file stem) plus covariates for the extended set.

    Covariates live in ``<covariates_dir>/<asset>/<NAME>.csv``; the default
    directory is ``covariates`` next to the intraday folder, which is the
    layout ``simulate`` writes.
    """
    assets = []
    for f in files:
        f = Path(f)
        aid = f.stem
        panel = read_intraday_csv(f, aid)
        cov = {}
        if dataset == "m_all":
            root = Path(covariates_dir) if covariates_dir else f.parent.parent / "covariates"
            for name in COVARIATE_ORDER:
                p = root / aid / f"{covariate_file(name)}.csv"
                if not p.is_file():
                    raise DataError(f"covariate file missing for {aid}: {p}")
                cov[name] = read_daily_csv(p, name)
        assets.append(AssetData.from_panel(panel, cov))
    return assets


def simulate_dataset(sim: SimSection, seed, out_dir, config_hash):
    """Write synthetic intraday returns, covariates and the true QV.  Returns the asset files."""
    out_dir = Path(out_dir)
    files = []
    truth_frames = []
    for k in range(sim.assets):
        aid = f"SIM{k + 1:02d}"
        cfg = SimConfig(days=sim.days, n_per_day=sim.n_per_day,
                        vol_model=SquareRootVol(sim.kappa, sim.theta, sim.xi, sim.rho),
                        jump=JumpSpec(sim.jump_intensity, sim.jump_std), seed=seed)
        panel, truth = simulate_paths(cfg, aid, k)
        rs = realized_series(panel)
        cols = [f"r{j}" for j in range(1, panel.n_per_day + 1)]
        intraday = pd.DataFrame(panel.returns, columns=cols)
        intraday.insert(0, "date", list(panel.days))
        path = out_dir / "intraday" / f"{aid}.csv"
        write_csv(intraday, path, config_hash, seed)
        files.append(str(path))
        for name, s in simulate_covariates(truth, rs.ret_oc, panel.days, seed, k).items():
            write_csv(pd.DataFrame({"date": list(s.dates), "value": s.values}),
                      out_dir / "covariates" / aid / f"{covariate_file(name)}.csv",
                      config_hash, seed)
        truth_frames.append(pd.DataFrame({"asset": aid, "date": list(panel.days),
                                          "qv": truth.qv, "spot_close": truth.spot_close}))
    write_csv(pd.concat(truth_frames, ignore_index=True), out_dir / "truth.csv",
              config_hash, seed)
    return files


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------

def stage_forecast(cfg: RunConfig, assets):
    table, cells = run_forecasts(assets, cfg.models, cfg.dataset, cfg.horizon, cfg.split,
                                 cfg.tuning)
    for c in cells:
        if c.error:
            logger.warning("cell %s/%s failed: %s", c.asset, c.model, c.error)
    return table, cells


def stage_evaluate(table, cfg: RunConfig):
    ev = cfg.evaluation
    models = list(dict.fromkeys(table["model"]))
    relmse = evaluation.relative_mse_table(table, models)
    mcs = evaluation.mcs_inclusion_table(table, models, level=ev.mcs_level, reps=ev.mcs_reps,
                                         seed=subseed(cfg.seed, "mcs"))
    bench = canonical_model(ev.benchmark)
    deciles = evaluation.decile_table(table, benchmark=bench, models=models)
    return relmse, mcs, deciles


def stage_ale(cfg: RunConfig, assets, cells=()):
    """ALE curves, importance and fitted-value ACF of in-sample fits."""
    reuse = {(c.asset, c.model): c.last_fit for c in cells
             if c.error is None and c.model in NETWORKS}
    target = TargetSpec.named(cfg.horizon)
    curves, scores, acfs = [], [], []
    for asset in assets:
        matrices = {}
        for model in cfg.ale.models:
            m = canonical_model(model)
            key = feature_model(m)
            if key not in matrices:
                matrices[key] = build_features(asset, cfg.dataset, key, target, cfg.split)
            fm = matrices[key]
            fit = reuse.get((asset.asset_id, m)) or in_sample_fit(fm, m, cfg.tuning)
            rows = np.concatenate([fm.positions("train"), fm.positions("validation")])
            X = fm.X[rows]
            cs = ale_mod.ale_curves(fit, X, list(fm.column_names), cfg.ale.bins)
            vi = ale_mod.variable_importance(cs, X)
            for c in cs:
                df = c.to_frame(cfg.ale.clip)
                df.insert(0, "model", m)
                df.insert(0, "asset", asset.asset_id)
                curves.append(df)
            df = vi.to_frame()
            df.insert(0, "model", m)
            df.insert(0, "asset", asset.asset_id)
            scores.append(df)
            try:
                a = evaluation.fitted_acf(fit, fm, cfg.evaluation.acf_lags, "train")
                acfs.append(pd.DataFrame({"asset": asset.asset_id, "model": m, "lag": a.lags,
                                          "acf": a.acf, "band": a.band}))
            except VolaforgeError as exc:
                logger.warning("ACF of %s/%s skipped: %s", asset.asset_id, m, exc)
    curves = pd.concat(curves, ignore_index=True) if curves else pd.DataFrame()
    scores = pd.concat(scores, ignore_index=True) if scores else pd.DataFrame()
    acfs = pd.concat(acfs, ignore_index=True) if acfs else pd.DataFrame()
    avg = pd.DataFrame()
    if len(scores):
        avg = (scores.groupby(["model", "feature"], sort=False)["vi"].mean().reset_index())
    return curves, scores, avg, acfs


def stage_var(table, assets, cfg: RunConfig):
    if int(table["horizon"].iloc[0]) != 1:
        raise ConfigError("VaR backtests need one-day forecasts (horizon = day)")
    realized = {a.asset_id: a.realized for a in assets}
    backtest = risk.var_backtest(table, realized, cfg.var.alpha)
    models = list(dict.fromkeys(table["model"]))
    summary = risk.var_table(backtest, cfg.var.alpha, models, cfg.var.level)
    summary.index.name = "model"
    return backtest, summary


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _cfg(args, **extra):
    over = {"seed": getattr(args, "seed", None), "jobs": getattr(args, "jobs", None)}
    over.update(extra)
    cfg = load_config(getattr(args, "config", None), over)
    return cfg.validate()


def _require_assets(cfg):
    if not cfg.assets:
        raise ConfigError("no asset files given (use --asset or 'assets' in the config)")


def cmd_simulate(args):
    cfg = _cfg(args)
    sim = cfg.simulate
    if args.assets is not None or args.days is not None:
        sim = replace(sim, assets=args.assets or sim.assets, days=args.days or sim.days)
    h = derived_hash("simulate", cfg.seed, sim)
    files = simulate_dataset(sim, cfg.seed, args.out, h)
    print("\n".join(files))


def cmd_features(args):
    cfg = _cfg(args, assets=args.asset, dataset=args.dataset, horizon=args.horizon,
               split=args.split, covariates_dir=args.covariates)
    _require_assets(cfg)
    assets = load_assets(cfg.assets, cfg.covariates_dir, cfg.dataset)
    frames = []
    for a in assets:
        fm = build_features(a, cfg.dataset, canonical_model(args.model),
                            TargetSpec.named(cfg.horizon), cfg.split)
        frames.append(features_frame(fm))
    h = derived_hash("features", cfg.hash(), args.model)
    write_csv(pd.concat(frames, ignore_index=True), args.out, h, cfg.seed)


def cmd_forecast(args):
    cfg = _cfg(args, assets=args.asset, dataset=args.dataset, horizon=args.horizon,
               split=args.split, covariates_dir=args.covariates, models=args.models)
    _require_assets(cfg)
    assets = load_assets(cfg.assets, cfg.covariates_dir, cfg.dataset)
    table, _ = stage_forecast(cfg, assets)
    write_csv(table, args.out, cfg.hash(), cfg.seed)


def _read_forecasts(path):
    table = pd.read_csv(path, comment="#", dtype={"date": str, "asset": str},
                        float_precision="round_trip")
    need = {"asset", "model", "date", "horizon", "forecast", "realized"}
    if not need <= set(table.columns):
        raise DataError(f"{path}: forecast table needs columns {sorted(need)}")
    return table


def cmd_evaluate(args):
    cfg = _cfg(args)
    table = _read_forecasts(args.forecasts)
    src, _ = read_header(args.forecasts)
    h = derived_hash("evaluate", src, cfg.evaluation, cfg.seed)
    relmse, mcs, deciles = stage_evaluate(table, cfg)
    out = Path(args.out)
    write_csv(relmse, out / "relmse.csv", h, cfg.seed)
    write_csv(mcs, out / "mcs.csv", h, cfg.seed)
    write_csv(deciles, out / "deciles.csv", h, cfg.seed)


def cmd_ale(args):
    cfg = _cfg(args, assets=args.asset, dataset=args.dataset, horizon=args.horizon,
               split=args.split, covariates_dir=args.covariates)
    if args.models:
        cfg = replace(cfg, ale=replace(cfg.ale, models=tuple(args.models))).validate()
    _require_assets(cfg)
    assets = load_assets(cfg.assets, cfg.covariates_dir, cfg.dataset)
    _write_ale(stage_ale(cfg, assets), Path(args.out), cfg.hash(), cfg.seed)


def _write_ale(result, out, h, seed):
    curves, scores, avg, acfs = result
    write_csv(curves, out / "curves.csv", h, seed)
    write_csv(scores, out / "importance.csv", h, seed)
    write_csv(avg, out / "importance_avg.csv", h, seed)
    return acfs


def cmd_var(args):
    cfg = _cfg(args, assets=args.asset)
    if args.alpha is not None:
        cfg = replace(cfg, var=replace(cfg.var, alpha=args.alpha)).validate()
    _require_assets(cfg)
    table = _read_forecasts(args.forecasts)
    src, _ = read_header(args.forecasts)
    assets = load_assets(cfg.assets)
    backtest, summary = stage_var(table, assets, cfg)
    h = derived_hash("var", src, cfg.var)
    write_csv(summary, args.out, h, cfg.seed, index=True)
    if args.series:
        write_csv(backtest, args.series, h, cfg.seed)


def cmd_run(args):
    cfg = _cfg(args, out=args.out)
    out = Path(cfg.out)
    h = cfg.hash()
    files = list(cfg.assets)
    if not files:
        logger.info("no asset files configured; simulating %d synthetic assets",
                    cfg.simulate.assets)
        files = simulate_dataset(cfg.simulate, cfg.seed, out / "data", h)
        cfg = replace(cfg, assets=tuple(files))
    assets = load_assets(files, cfg.covariates_dir, cfg.dataset)
    table, cells = stage_forecast(cfg, assets)
    write_csv(table, out / "forecasts.csv", h, cfg.seed)
    relmse, mcs, deciles = stage_evaluate(table, cfg)
    write_csv(relmse, out / "relmse.csv", h, cfg.seed)
    write_csv(mcs, out / "mcs.csv", h, cfg.seed)
    write_csv(deciles, out / "deciles.csv", h, cfg.seed)
    if cfg.ale.models:
        acfs = _write_ale(stage_ale(cfg, assets, cells), out / "ale", h, cfg.seed)
        write_csv(acfs, out / "acf.csv", h, cfg.seed)
    if TargetSpec.named(cfg.horizon).horizon == 1:
        backtest, summary = stage_var(table, assets, cfg)
        write_csv(summary, out / "var.csv", h, cfg.seed, index=True)
        write_csv(backtest, out / "var_series.csv", h, cfg.seed)
    else:
        logger.warning("horizon %s: VaR stage skipped (one-day forecasts only)", cfg.horizon)
    print(str(out))


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="volaforge",
                                description="Realized-variance forecasting pipeline.")
    p.add_argument("--log-level", default="WARNING",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--config", help="TOML run configuration")
        sp.add_argument("--seed", type=int, help="top-level seed (overrides the config)")
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker processes (default: logical cores)")
        if data:
            sp.add_argument("--asset", nargs="+", help="intraday CSV file(s)")
            sp.add_argument("--covariates", help="covariate directory (extended dataset)")
            sp.add_argument("--dataset", choices=["m_har", "m_all"])
            sp.add_argument("--horizon", choices=["day", "week", "month"])
            sp.add_argument("--split", help="70-10-20 or fixed-<train days>")

    sp = sub.add_parser("simulate", help="write synthetic intraday data and covariates")
    common(sp, data=False)
    sp.add_argument("--assets", type=int, help="number of assets")
    sp.add_argument("--days", type=int, help="trading days per asset")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("features", help="build a feature matrix")
    common(sp)
    sp.add_argument("--model", default="HAR", help="model whose columns to build")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("forecast", help="rolling out-of-sample forecasts")
    common(sp)
    sp.add_argument("--models", nargs="+", help="model ids")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_forecast)

    sp = sub.add_parser("evaluate", help="relative MSE, DM tests, MCS and deciles")
    common(sp, data=False)
    sp.add_argument("--forecasts", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("ale", help="accumulated local effects and variable importance")
    common(sp)
    sp.add_argument("--models", nargs="+")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_ale)

    sp = sub.add_parser("var", help="VaR backtest from one-day forecasts")
    common(sp, data=False)
    sp.add_argument("--forecasts", required=True)
    sp.add_argument("--asset", nargs="+", help="intraday CSV file(s)")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--out", required=True)
    sp.add_argument("--series", help="optional per-day VaR/hit output")
    sp.set_defaults(func=cmd_var)

    sp = sub.add_parser("run", help="full pipeline from a config file")
    common(sp, data=False)
    sp.add_argument("--out", help="output directory (overrides the config)")
    sp.set_defaults(func=cmd_run)
    return p


def _fail(kind, exc, code):
    payload = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        payload["problems"] = exc.problems
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except (VolaforgeError, OSError, ValueError) as exc:
        return _fail("runtime", exc, EXIT_FAILURE)
    return 0


if __name__ == "__main__":
    sys.exit(main())
