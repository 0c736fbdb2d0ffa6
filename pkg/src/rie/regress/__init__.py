"""Classical regressors: feature selection plus six model kinds."""

from .linear import fit_linear, fit_pls2, fit_ridge
from .model import ClassicalModel, load, predict, save, standardize_fit
from .selection import SelectionReport, column_correlations, rank_by_correlation, rank_features
from .svr import fit_svr
from .trees import build_tree, fit_gbdt, fit_rf, tree_predict

__all__ = [
    "ClassicalModel",
    "SelectionReport",
    "build_tree",
    "column_correlations",
    "fit_gbdt",
    "fit_linear",
    "fit_pls2",
    "fit_rf",
    "fit_ridge",
    "fit_svr",
    "load",
    "predict",
    "rank_by_correlation",
    "rank_features",
    "save",
    "standardize_fit",
    "tree_predict",
]
