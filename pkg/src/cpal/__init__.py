"""Cutting-plane training and active learning for small ReLU networks.

The network's training problem is rewritten, per fixed set of activation
patterns, as linear constraints on a parameter vector; a localization set of
such constraints is shrunk by cuts through its analytic center.
"""

from .active_learning import (ALConfig, ALResult, ALTrace, InfeasibleError, Pool, al_inexact,
                              al_limited_queries, al_query_synthesis, al_regression,
                              linear_al_classification, linear_al_regression, query_select,
                              train_cutting_plane)
from .data import LabeledDataset, gen_quadratic, gen_spiral, load_csv_dataset, metrics, save_csv
from .final_solve import SolveReport, objective_value, solve_group_lasso
from .localization import (CenterResult, Halfspace, LocalizationSet, analytic_center, init_ball,
                           is_feasible, phase_one)
from .patterns import ActivationPattern, PatternSet, enumerate_patterns_exact, sample_patterns
from .volumetrics import VolumeReport, estimate_cut_ratio, gruenbaum_check, hit_and_run_samples

__version__ = "0.1.0"

__all__ = [
    "ALConfig",
    "ALResult",
    "ALTrace",
    "ActivationPattern",
    "CenterResult",
    "Halfspace",
    "InfeasibleError",
    "LabeledDataset",
    "LocalizationSet",
    "PatternSet",
    "Pool",
    "SolveReport",
    "VolumeReport",
    "al_inexact",
    "al_limited_queries",
    "al_query_synthesis",
    "al_regression",
    "analytic_center",
    "enumerate_patterns_exact",
    "estimate_cut_ratio",
    "gen_quadratic",
    "gen_spiral",
    "gruenbaum_check",
    "hit_and_run_samples",
    "init_ball",
    "is_feasible",
    "linear_al_classification",
    "linear_al_regression",
    "load_csv_dataset",
    "metrics",
    "objective_value",
    "phase_one",
    "query_select",
    "sample_patterns",
    "save_csv",
    "solve_group_lasso",
    "train_cutting_plane",
]
