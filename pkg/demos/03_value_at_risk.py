"""One-day 5% VaR from HAR and HAR-X variance forecasts, with coverage tests.

Run from the repository root::

    python demos/03_value_at_risk.py
"""

from volaforge import run_forecasts
from volaforge.features import AssetData
from volaforge.realized import realized_series
from volaforge.risk import var_backtest, var_table
from volaforge.simulate import JumpSpec, SimConfig, SquareRootVol, simulate_covariates, \
    simulate_paths

assets = {}
for k in range(3):
    cfg = SimConfig(days=1500, vol_model=SquareRootVol(0.03, 1.5e-4, 0.0025, rho=-0.5),
                    jump=JumpSpec(0.05, 0.01), seed=8)
    panel, truth = simulate_paths(cfg, f"SIM{k + 1:02d}", k)
    rs = realized_series(panel)
    cov = simulate_covariates(truth, rs.ret_oc, panel.days, seed=8, asset_index=k)
    assets[panel.asset_id] = AssetData.from_panel(panel, cov)

table, _ = run_forecasts(list(assets.values()), ["HAR", "HAR-X"], dataset="m_all")

# Returns are devolatized by their own RV; the 5% order statistic of those
# residuals is rescaled by the square root of each variance forecast.
backtest = var_backtest(table, {a: d.realized for a, d in assets.items()}, alpha=0.05)
print(backtest.groupby("model")["hit"].mean().rename("hit rate").round(4).to_string())

summary = var_table(backtest, alpha=0.05)
print("\nQuantile loss relative to the row model, then the hit rate and the")
print("number of assets rejecting unconditional / conditional coverage at 5%:")
print(summary.round(3).to_string())
