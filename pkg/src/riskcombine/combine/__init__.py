"""Forecast combining methods and a registry of the 19 standard combiners."""

from __future__ import annotations

from ..score import AL, ScoreSpec
from .base import Combiner, as_column
from .central import (BANDWIDTH_MULTIPLIERS, TRIM_KINDS, KdeMode, KdeSpec, Median, SimpleAverage,
                      TrimmedMean, TrimSpec, as_flexible, kde_modes, max_trim, median_combine,
                      mode_combine, optimize_trim, silverman, simple_average, trim_candidates,
                      trimmed_combine)
from .interval import (X_GRID, CdfCurve, DeepestPoint, GridRangeError, ProbabilityAverage,
                       deepest_combine, deepest_index, halfspace_depth, method_cdf,
                       probability_average, simplicial_depth)
from .meta import (SmoothTransition, StcParams, fit_stc, grand_average, stc_combine,
                   stc_objective, stc_weight)
from .weighted import (PENALTY_GRID, TEMPERATURE_GRID, MinimumScore, MinimumScoreRidge,
                       RelativeScore, RelScoreConfig, RidgeConfig, fit_minimum_score,
                       fit_minimum_score_ridge, minimum_score_objective, optimize_temperature,
                       relative_score_combine, relative_score_weights, weighted_median_combine)

GRAND_AVERAGE = "mean_of_combinations"

COMBINER_NAMES = (
    "simple_average", "median", "mode",
    "trim_symmetric", "trim_exterior", "trim_interior", "trim_lower", "trim_higher",
    "trim_flexible", "probability_average", "halfspace_deepest", "simplicial_deepest",
    "relative_score", "relative_score_wmedian", "minimum_score", "minimum_score_ratio",
    "minimum_score_ridge", "stc", GRAND_AVERAGE,
)


def make_combiner(name: str, spec: ScoreSpec = AL, **options) -> Combiner:
    """Instantiate a combiner by registry name.

    ``options`` are passed to the combiners that accept them: ``grid`` and
    ``strict`` for probability averaging, ``n_starts``/``seed`` for the
    minimum-score family and ``penalty_grid`` for the ridge variant.
    """
    if name == "simple_average":
        return SimpleAverage(spec)
    if name == "median":
        return Median(spec)
    if name == "mode":
        return KdeMode(spec)
    if name.startswith("trim_") and name[5:] in TRIM_KINDS:
        return TrimmedMean(name[5:], spec)
    if name == "probability_average":
        return ProbabilityAverage(spec, options.get("grid"), options.get("strict", False))
    if name in ("halfspace_deepest", "simplicial_deepest"):
        return DeepestPoint(name.split("_")[0], spec)
    if name == "relative_score":
        return RelativeScore(spec)
    if name == "relative_score_wmedian":
        return RelativeScore(spec, median=True)
    if name in ("minimum_score", "minimum_score_ratio"):
        mode = "spacing" if name == "minimum_score" else "ratio"
        return MinimumScore(spec, mode, options.get("n_starts", 10), options.get("seed", 0))
    if name == "minimum_score_ridge":
        return MinimumScoreRidge(spec, options.get("penalty_grid", PENALTY_GRID),
                                 options.get("ridge_starts", 1), options.get("seed", 0))
    if name == "stc":
        return SmoothTransition(spec)
    raise ValueError(f"unknown combiner {name!r}")
