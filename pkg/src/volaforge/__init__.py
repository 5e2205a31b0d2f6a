"""Realized-variance forecasting with HAR models and machine learning."""

from .ale import AleCurve, ViScore, ale_curves, ale_estimate, variable_importance
from .config import RunConfig, load_config
from .errors import (AlignmentError, BurnInError, ConfigError, ConvergenceError, DataError,
                     DimensionError, SingularityError, SizingError, TrainingError,
                     VolaforgeError)
from .evaluation import dm_test, mcs, relative_mse_table
from .features import ROSTER, AssetData, TargetSpec, build_features
from .harness import HarnessConfig, TuningGrid, run_forecasts
from .linear import (LinearFit, fit_adaptive_lasso, fit_elastic_net, fit_lasso, fit_ols,
                     fit_post_lasso, fit_ridge, predict_linear)
from .neural import NetworkSpec, SeedEnsemble, TrainedNetwork, train, train_seed_ensemble
from .realized import RealizedSeries, realized_measures, realized_series
from .risk import CoverageReport, coverage_tests, fhs_var, quantile_loss
from .simulate import SimConfig, generate_har_series, simulate_paths
from .timeseries import (DataSplit, FeatureMatrix, FixedTrain, IntradayPanel,
                         Percent70_10_20, make_split)
from .trees import (RegressionTree, TreeEnsemble, fit_bagging, fit_cart,
                    fit_gradient_boosting, fit_random_forest)

__version__ = "0.1.0"
