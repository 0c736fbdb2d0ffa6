"""Linear least squares, ridge, and NIPALS partial least squares."""

from __future__ import annotations

import numpy as np

from ..errors import ConvergenceFailure, SingularDesign
from .model import ClassicalModel, standardize_fit

NIPALS_TOL = 1e-10
NIPALS_MAX_ITER = 500


def fit_linear(X: np.ndarray, y: np.ndarray, dimension: str = "", names=None) -> ClassicalModel:
    """Ordinary least squares on standardized features (SVD-based)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(X.shape[1]))
    mu, sd = standardize_fit(X)
    Xs = (X - mu) / sd
    A = np.column_stack([np.ones(len(Xs)), Xs])
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < A.shape[1]:
        raise SingularDesign(f"design rank {rank} < {A.shape[1]}")
    return ClassicalModel(
        "linear", dimension, names, mu, sd,
        {"weights": coef[1:], "intercept": float(coef[0])},
    )


def fit_ridge(
    X: np.ndarray, y: np.ndarray, alpha: float = 0.5, dimension: str = "", names=None
) -> ClassicalModel:
    """Ridge on standardized features; the intercept is unpenalized.

    With centered columns the normal equations decouple, so the intercept
    is the label mean and w solves (X'X + alpha I) w = X'(y - ybar).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(X.shape[1]))
    mu, sd = standardize_fit(X)
    Xs = (X - mu) / sd
    ybar = float(y.mean())
    gram = Xs.T @ Xs + alpha * np.eye(Xs.shape[1])
    w = np.linalg.solve(gram, Xs.T @ (y - ybar))
    return ClassicalModel(
        "ridge", dimension, names, mu, sd, {"weights": w, "intercept": ybar}
    )


def fit_pls2(
    X: np.ndarray,
    Y: np.ndarray,
    n_components: int = 5,
    dimension: str = "",
    names=None,
) -> ClassicalModel:
    """Multi-output PLS by NIPALS with per-component deflation.

    Y may be a single column (per-axis mode, the default in the pipeline)
    or the full 9-axis matrix (multi-output mode).
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] <= n_components:
        raise ValueError("need n > n_components samples")
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(X.shape[1]))

    mu, sd = standardize_fit(X)
    E = (X - mu) / sd
    ybar = Y.mean(axis=0)
    F = Y - ybar

    W, P, Q, T = [], [], [], []
    for _ in range(n_components):
        if np.allclose(F, 0.0) or np.allclose(E, 0.0):
            break
        u = F[:, int(np.argmax(F.var(axis=0)))]
        t_prev = None
        for it in range(NIPALS_MAX_ITER + 1):
            if it == NIPALS_MAX_ITER:
                raise ConvergenceFailure("NIPALS inner loop exceeded 500 iterations")
            w = E.T @ u / (u @ u)
            norm = np.linalg.norm(w)
            if norm < 1e-15:
                break
            w = w / norm
            t = E @ w
            tt = t @ t
            if tt < 1e-15:
                break
            q = F.T @ t / tt
            qq = q @ q
            if qq < 1e-15:
                break
            u = F @ q / qq
            if t_prev is not None and np.linalg.norm(t - t_prev) <= NIPALS_TOL * max(
                np.linalg.norm(t), 1e-300
            ):
                break
            t_prev = t
        t = E @ w
        tt = t @ t
        if tt < 1e-15 or np.linalg.norm(w) < 1e-15:
            break
        q = F.T @ t / tt
        p = E.T @ t / tt
        E = E - np.outer(t, p)
        F = F - np.outer(t, q)
        W.append(w)
        P.append(p)
        Q.append(q)
        T.append(t)

    if not W:
        coef = np.zeros((X.shape[1], Y.shape[1]))
        Wm = Pm = Qm = np.zeros((X.shape[1], 0))
        Tm = np.zeros((X.shape[0], 0))
    else:
        Wm = np.column_stack(W)
        Pm = np.column_stack(P)
        Qm = np.column_stack(Q)
        Tm = np.column_stack(T)
        coef = Wm @ np.linalg.solve(Pm.T @ Wm, Qm.T)
    return ClassicalModel(
        "pls2",
        dimension,
        names,
        mu,
        sd,
        {
            "coef": coef,
            "intercept": ybar,
            "x_weights": Wm,
            "x_loadings": Pm,
            "y_loadings": Qm,
            "x_scores": Tm,
        },
    )
