"""Simulate two assets, forecast next-day variance and compare models.

Run from the repository root::

    python demos/01_forecast_walkthrough.py
"""

import logging

import numpy as np

from volaforge import HarnessConfig, TuningGrid, relative_mse_table, run_forecasts
from volaforge.evaluation import mcs_inclusion_table
from volaforge.features import AssetData
from volaforge.realized import realized_series
from volaforge.simulate import JumpSpec, SimConfig, SquareRootVol, simulate_covariates, \
    simulate_paths

logging.basicConfig(level=logging.WARNING)


def simulated_asset(k, days=800):
    cfg = SimConfig(days=days, vol_model=SquareRootVol(0.03, 1.5e-4, 0.0025, rho=-0.5),
                    jump=JumpSpec(0.05, 0.01), seed=21)
    panel, truth = simulate_paths(cfg, f"SIM{k + 1:02d}", k)
    rs = realized_series(panel)
    cov = simulate_covariates(truth, rs.ret_oc, panel.days, seed=21, asset_index=k)
    return AssetData.from_panel(panel, cov)


assets = [simulated_asset(k) for k in range(2)]
rv = assets[0].realized.rv
print(f"{assets[0].asset_id}: {len(rv)} days, mean RV {rv.mean():.2e}, "
      f"annualized vol {100 * np.sqrt(252 * rv.mean()):.1f}%")

# A reduced tuning grid keeps the walkthrough under a minute.
cfg = HarnessConfig(grid=TuningGrid(n_lambda=100), forest_trees=100, refit_every=10,
                    nn_seeds=10, nn_select=10, nn_learning_rate=0.01, nn_epochs=200)
models = ["HAR", "LogHAR", "HAR-X", "EN", "RF", "NN2^10"]
table, cells = run_forecasts(assets, models, dataset="m_all", horizon="day", cfg=cfg)
for c in cells:
    print(f"  {c.asset}/{c.model:7s} {c.seconds:6.1f}s" + (f"  FAILED: {c.error}" if c.error else ""))

rel = relative_mse_table(table, models)
vs_har = rel[rel.row_model == "HAR"].set_index("col_model")["avg_ratio"]
print("\nMSE relative to HAR (average over assets):")
print(vs_har.round(3).to_string())

print("\nShare of assets where the model is in the 90% confidence set:")
print(mcs_inclusion_table(table, models, reps=1000, seed=1).to_string(index=False))
