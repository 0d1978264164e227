"""Individual forecaster families and pool generation."""

from .caviar import (care_es, care_expectile_fit, care_fit, care_fit_forecast, care_forecast,
                     caviar_fit, caviar_fit_forecast, caviar_forecast, quantile_path)
from .garch import (FitError, FitOptions, FittedMethod, evt_var_es, garch_fit,
                    garch_fit_forecast, garch_forecast, garch_params, simulate_garch)
from .generate import (DgpConfig, MethodError, SynthResult, forecast_one, generate_pool,
                       synth_pool, true_pair)
from .simple import ewma_forecast, ewma_variance, gaussian_window_forecast, hs_forecast
from .specs import FULL_WINDOW, MethodSpec, parse_method_id, standard_specs
