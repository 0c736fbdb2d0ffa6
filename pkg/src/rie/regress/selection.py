"""Correlation-based feature ranking and top-k selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TooFewSamples


@dataclass
class SelectionReport:
    dimension: str
    ranked: list  # [(feature_name, pearson_r)] sorted by |r| desc, name asc
    selected: tuple  # top-k names in ranked order


def column_correlations(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pearson r of each column against y; constant columns report 0."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = X - X.mean(axis=0)
    yc = y - y.mean()
    sx = np.sqrt((xc**2).sum(axis=0))
    sy = np.sqrt((yc**2).sum())
    denom = sx * sy
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(denom > 0, xc.T @ yc / np.where(denom > 0, denom, 1.0), 0.0)
    return r


def rank_by_correlation(names, r_values, k: int, dimension: str = "") -> SelectionReport:
    """Ranking used by rank_features; ties in |r| break lexicographically."""
    order = sorted(zip(names, r_values), key=lambda it: (-abs(it[1]), it[0]))
    ranked = [(n, float(r)) for n, r in order]
    k = min(k, len(ranked))
    return SelectionReport(dimension, ranked, tuple(n for n, _ in ranked[:k]))


def rank_features(
    X: np.ndarray, y: np.ndarray, names, k: int = 8, dimension: str = ""
) -> SelectionReport:
    """Rank every feature column by |Pearson r| against one label axis."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 3:
        raise TooFewSamples(f"need >= 3 samples, got {X.shape[0]}")
    if X.shape[1] != len(tuple(names)):
        raise ValueError("names must match the number of columns")
    r = column_correlations(X, y)
    return rank_by_correlation(tuple(names), r, k, dimension)
