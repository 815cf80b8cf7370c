"""Time-varying forecast combination by reflected local linear smoothing."""
from .bandwidth import CvCurve, PluginInputs, cv_score, plugin_h_opt, select_bandwidth
from .baselines import OosForecasts, bg_weights, gr_weights, oos_forecasts
from .errors import TvcError
from .evaluation import LossSeries, TestResult, ascfe, dm_test, rc_test
from .panel import ForecastPanel, Standardizer, destandardize_weights, load_csv, standardize
from .simulation import DgpConfig, McResult, run_table1, run_table2, simulate_highdim, simulate_lowdim
from .smoother import (
    KernelSpec,
    LocalFit,
    WeightPath,
    epanechnikov,
    fit_path,
    forecast_next,
    get_kernel,
    local_linear_fit,
    quartic,
    uniform,
)
from .sparse import PenaltyConfig, StagedPaths, fit_two_stage, forecast_two_stage

__version__ = "0.1.0"
