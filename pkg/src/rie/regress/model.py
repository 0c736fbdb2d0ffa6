"""Fitted-model container shared by the six classical regressors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import FeatureMismatch
from ..serialize import load_model, save_model

KINDS = ("linear", "ridge", "pls2", "rf", "gbdt", "svr")


def standardize_fit(X: np.ndarray):
    """Column means and scales from training data; constant columns scale 1."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    return mu, sd


@dataclass
class ClassicalModel:
    kind: str
    dimension: str
    feature_names: tuple
    std_mean: np.ndarray
    std_scale: np.ndarray
    params: dict = field(default_factory=dict)

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.std_mean) / self.std_scale


def align_features(model: ClassicalModel, X: np.ndarray, names) -> np.ndarray:
    """Reorder input columns by name to the training order."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    names = tuple(names)
    if len(names) != X.shape[1]:
        raise FeatureMismatch(f"{len(names)} names for {X.shape[1]} columns")
    if set(names) != set(model.feature_names):
        raise FeatureMismatch(
            f"feature names differ: {sorted(set(names) ^ set(model.feature_names))}"
        )
    if not np.all(np.isfinite(X)):
        raise FeatureMismatch("non-finite feature values")
    if names != model.feature_names:
        perm = [names.index(n) for n in model.feature_names]
        X = X[:, perm]
    return X


def predict(model: ClassicalModel, X: np.ndarray, names=None) -> np.ndarray:
    """Predict one axis (or 9 for multi-output pls2) for each row of X."""
    from . import linear, svr, trees  # local import to avoid cycles

    names = model.feature_names if names is None else names
    Xs = model.standardize(align_features(model, X, names))
    if model.kind in ("linear", "ridge"):
        out = Xs @ model.params["weights"] + model.params["intercept"]
    elif model.kind == "pls2":
        out = Xs @ model.params["coef"] + model.params["intercept"]
        if out.shape[1] == 1:
            out = out[:, 0]
    elif model.kind == "rf":
        out = trees.forest_predict(model.params, Xs)
    elif model.kind == "gbdt":
        out = trees.gbdt_predict(model.params, Xs)
    elif model.kind == "svr":
        out = svr.svr_predict(model.params, Xs)
    else:
        raise FeatureMismatch(f"unknown model kind {model.kind!r}")
    if not np.all(np.isfinite(out)):
        raise FeatureMismatch("non-finite prediction")
    return out


def save(model: ClassicalModel, path) -> None:
    arrays = {"std_mean": model.std_mean, "std_scale": model.std_scale}
    for key, value in model.params.items():
        arrays[f"p__{key}"] = np.asarray(value)
    save_model(path, model.kind, model.dimension, model.feature_names, arrays)


def load(path) -> ClassicalModel:
    kind, dimension, feature_names, arrays = load_model(path)
    params = {k[3:]: v for k, v in arrays.items() if k.startswith("p__")}
    # scalars round-trip as 0-d arrays
    params = {k: (float(v) if v.ndim == 0 else v) for k, v in params.items()}
    return ClassicalModel(
        kind, dimension, feature_names, arrays["std_mean"], arrays["std_scale"], params
    )
